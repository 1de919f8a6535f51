use matcalc_py::matcalc_module;
use pyo3::prelude::*;
use pyo3::types::PyDict;

#[test]
fn module_runs_inside_an_embedded_interpreter() {
    pyo3::append_to_inittab!(matcalc_module);
    Python::initialize();
    Python::attach(|py| -> PyResult<()> {
        let m = py.import("matcalc")?;
        let b: f64 = m.getattr("babylonian")?.call1((4.0, 3))?.extract()?;
        assert_eq!(b, 2.000609756097561);

        let t = m.getattr("tridiag_gradient")?.call1((40,))?;
        let t = t.cast::<PyDict>()?;
        let solves: u64 = t.get_item("solve_count")?.unwrap().extract()?;
        assert_eq!(solves, 2);

        let err = m.getattr("babylonian")?.call1((4.0, 0)).err();
        assert!(err.is_some(), "zero iterations should be rejected");
        Ok(())
    })
    .unwrap();
}
