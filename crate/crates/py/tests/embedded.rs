use halfspace_py::halfspace_py;
use pyo3::prelude::*;

#[test]
fn module_works_from_python() {
    pyo3::append_to_inittab!(halfspace_py);
    pyo3::prepare_freethreaded_python();
    Python::with_gil(|py| {
        let code = r#"
import halfspace_py as hs
from fractions import Fraction
u = hs.burgers_un(3)
assert {t["power"]: Fraction(t["coeff"]) for t in u[1]} == {0: 1, 1: -1}
assert [Fraction(c) for c in hs.cosine_coefficients(2)] == [Fraction(1, 2), Fraction(3, 8)]
assert all(r["pattern_holds"] for r in hs.ode_picard(6))
assert hs.cascade_bounds(1.0, 1.5, 0.5, 1.0, 8, [0.5, 1.0])
try:
    hs.burgers_astar(-1.0, 30)
    raise AssertionError("negative t accepted")
except ValueError:
    pass
"#;
        py.run_bound(code, None, None).unwrap();
    });
}
