fn main() { std::process::exit(halfspace::cli::main()) }
