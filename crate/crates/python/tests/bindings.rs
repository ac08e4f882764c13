//! Drives the module from an embedded interpreter.

use pyo3::prelude::*;
use pyphilap::pyphilap;

#[test]
fn module_round_trip() {
    pyo3::append_to_inittab!(pyphilap);
    Python::initialize();
    Python::attach(|py| {
        py.run(
            cr#"
import math
import pyphilap as pp

phi = pp.PhiMap.relativistic(1.0)
law = pp.BoundaryLaw({"name": "dirichlet"}, 1)
rep = pp.solve_q(phi, law, [[0.4], [-0.2], [0.7]])
assert rep["converged"], rep
assert pp.residual_report(phi, law, rep["solution"], h=[[0.4], [-0.2], [0.7]])["passes"]
est = pp.lambda1(1.0, law, 3)
assert abs(est["value"] - 4 * math.sin(math.pi / 8) ** 2) < 1e-8
try:
    pp.PhiMap.p_relativistic(0.5)
    raise AssertionError("p <= 1 accepted")
except ValueError:
    pass
"#,
            None,
            None,
        )
        .map_err(|e| e.to_string())
        .unwrap();
    });
}
