//! Fourier-side solutions of analytic evolution equations whose data have
//! half-space frequency support, together with the monotone weight calculus
//! that certifies the contraction argument.

pub mod casebook;
pub mod cli;
pub mod equations;
pub mod exppoly;
pub mod monofun;
pub mod scalar;
pub mod solver;
pub mod spectral;
pub mod weights;

mod bigfix;

pub use exppoly::ExpPoly;
pub use monofun::MonotoneFn;
pub use scalar::{QComplex, Scalar, C64};
pub use spectral::{AtomicSpectrum, ExpDensity, FreqPoint, SupportSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
