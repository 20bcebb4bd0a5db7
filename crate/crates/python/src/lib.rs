//! Python bindings: `import lenspec`.

use std::collections::BTreeMap;

use lenspec_core::analysis::{self, PsiVariant};
use lenspec_core::lfunc::{self, ProgressionSpec};
use lenspec_core::spectrum::{self, MTable, SpectrumTable, SubgroupDescriptor, SubgroupKind};
use lenspec_core::{arith, cli, forms, oracle};
use num_bigint::BigUint;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: lenspec_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyfunction]
fn kronecker(d: i64, n: u64) -> i8 {
    arith::kronecker(d, n)
}

#[pyfunction]
fn max_u(t: u64) -> PyResult<u64> {
    arith::max_u(t).map_err(err)
}

#[pyfunction]
fn admissible_divisors(t: u64) -> PyResult<Vec<u64>> {
    arith::admissible_divisors(t).map_err(err)
}

/// `(p, q)` with `(p + q√d)/2` the fundamental solution of `p² − dq² = 4`.
#[pyfunction]
fn pell4_fundamental(d: u64) -> PyResult<(BigUint, BigUint)> {
    let u = arith::pell4_fundamental(d).map_err(err)?;
    Ok((u.p, u.q))
}

#[pyfunction]
fn power_ancestors(t: u64) -> Vec<(u64, u32)> {
    arith::power_ancestors(t)
}

#[pyfunction]
fn class_number(d: u64) -> PyResult<u64> {
    forms::class_number(d).map_err(err)
}

#[pyfunction]
fn reduced_forms(d: u64) -> PyResult<Vec<(i64, i64, i64)>> {
    Ok(forms::reduced_primitive_forms(d)
        .map_err(err)?
        .into_iter()
        .map(|f| (f.a, f.b, f.c))
        .collect())
}

#[pyfunction]
fn l_value_exact(d: u64) -> PyResult<f64> {
    lfunc::l_value_exact(d).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (d, tol = 1e-10))]
fn l_value_direct(d: u64, tol: f64) -> PyResult<f64> {
    lfunc::l_value_direct(d, tol).map_err(err)
}

fn progression(modulus: u64, nu: Option<Vec<i64>>) -> PyResult<ProgressionSpec> {
    match nu {
        Some(nu) => ProgressionSpec::new(modulus, &nu),
        None => ProgressionSpec::uniform(modulus, 2),
    }
    .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (modulus, n, nu = None))]
fn c8n(modulus: u64, n: u64, nu: Option<Vec<i64>>) -> PyResult<(i64, i64)> {
    let spec = progression(modulus, nu)?;
    Ok((lfunc::c8n_direct(&spec, n), lfunc::c8n_product(&spec, n)))
}

#[pyfunction]
#[pyo3(signature = (modulus, k, t_max, nu = None))]
fn estimate_a(py: Python<'_>, modulus: u64, k: u32, t_max: f64, nu: Option<Vec<i64>>) -> PyResult<f64> {
    let spec = progression(modulus, nu)?;
    py.detach(|| lfunc::estimate_a(&spec, k, t_max)).map_err(err)
}

#[pyfunction]
fn norm(t: u64) -> PyResult<f64> {
    spectrum::norm_of(t).map(|n| n.value).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (t, digits = 18))]
fn norm_decimal(t: u64, digits: usize) -> PyResult<String> {
    spectrum::norm_decimal(t, digits).map_err(err)
}

#[pyfunction]
fn li_k(x: f64, k: u32) -> PyResult<f64> {
    analysis::li_k(x, k).map_err(err)
}

#[pyfunction]
fn enumerate_classes(py: Python<'_>, trace_max: u64) -> PyResult<BTreeMap<u64, u64>> {
    py.detach(|| oracle::enumerate_classes(trace_max)).map_err(err)
}

#[pyfunction]
fn oracle_multiplicity(py: Python<'_>, t: u64) -> PyResult<u64> {
    py.detach(|| oracle::oracle_multiplicity(t)).map_err(err)
}

fn subgroup(
    gamma: &str,
    level: Option<u64>,
    index: Option<u64>,
    mtable: Option<&str>,
) -> PyResult<SubgroupDescriptor> {
    let kind: SubgroupKind = gamma.parse().map_err(err)?;
    let table = mtable.map(MTable::parse).transpose().map_err(err)?;
    match kind {
        SubgroupKind::Full => Ok(SubgroupDescriptor::full()),
        SubgroupKind::Custom => table
            .map(SubgroupDescriptor::custom)
            .ok_or_else(|| PyValueError::new_err("gamma='custom' needs mtable")),
        kind => {
            let level = level
                .or(table.as_ref().map(MTable::level))
                .ok_or_else(|| PyValueError::new_err("level is required"))?;
            let index = index
                .or(table.as_ref().map(MTable::index))
                .ok_or_else(|| PyValueError::new_err("index is required"))?;
            let sub = SubgroupDescriptor::family(kind, level, index).map_err(err)?;
            match table {
                Some(t) => sub.with_table(t).map_err(err),
                None => Ok(sub),
            }
        }
    }
}

fn variant(name: &str) -> PyResult<PsiVariant> {
    match name {
        "lemma-literal" => Ok(PsiVariant::LemmaLiteral),
        "mhat-derived" => Ok(PsiVariant::MhatDerived),
        other => Err(PyValueError::new_err(format!(
            "variant must be 'lemma-literal' or 'mhat-derived', got {other:?}"
        ))),
    }
}

/// Exact multiplicities `m(t)` for `3 ≤ t ≤ t_max`, with their divisor rows.
#[pyclass(name = "SpectrumTable", module = "lenspec", frozen)]
struct PySpectrumTable {
    inner: SpectrumTable,
}

#[pymethods]
impl PySpectrumTable {
    /// `mtable` is the text of an M-table file.
    #[staticmethod]
    #[pyo3(signature = (t_max, gamma = "full", level = None, index = None, mtable = None))]
    fn build(
        py: Python<'_>,
        t_max: u64,
        gamma: &str,
        level: Option<u64>,
        index: Option<u64>,
        mtable: Option<&str>,
    ) -> PyResult<Self> {
        let sub = subgroup(gamma, level, index, mtable)?;
        let inner = py.detach(|| spectrum::build_table(&sub, t_max)).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let raw: SpectrumTable = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let inner = SpectrumTable::from_records(raw.subgroup.clone(), raw.t_max, raw.records().to_vec())
            .map_err(err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("serializable")
    }

    fn to_csv(&self) -> PyResult<String> {
        cli::table_csv(&self.inner).map_err(|e| match e {
            cli::CliError::Usage(m) | cli::CliError::Failed(m) => PyValueError::new_err(m),
        })
    }

    #[getter]
    fn t_max(&self) -> u64 {
        self.inner.t_max
    }

    #[getter]
    fn subgroup(&self) -> String {
        self.inner.subgroup.kind.to_string()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("SpectrumTable(gamma={:?}, t_max={})", self.subgroup(), self.inner.t_max)
    }

    fn m(&self, t: u64) -> PyResult<u64> {
        self.inner
            .m(t)
            .ok_or_else(|| PyValueError::new_err(format!("t={t} outside 3..={}", self.inner.t_max)))
    }

    /// `[m(3), m(4), ..., m(t_max)]`
    fn multiplicities(&self) -> Vec<u64> {
        self.inner.records().iter().map(|r| r.m.unwrap_or(0)).collect()
    }

    fn record<'py>(&self, py: Python<'py>, t: u64) -> PyResult<Bound<'py, PyAny>> {
        let rec = self
            .inner
            .get(t)
            .ok_or_else(|| PyValueError::new_err(format!("t={t} outside 3..={}", self.inner.t_max)))?;
        to_py(py, rec)
    }

    fn pi_k(&self, k: u32, x: f64) -> PyResult<u128> {
        analysis::pi_k(&self.inner, k, x).map_err(err)
    }

    #[pyo3(signature = (k, t_cap, variant = "lemma-literal"))]
    fn psi_k(&self, k: u32, t_cap: u64, variant: &str) -> PyResult<f64> {
        analysis::psi_k(&self.inner, k, t_cap, self::variant(variant)?).map_err(err)
    }

    fn psi_bounds(&self, level: u64, index: u64, k: u32, t_cap: u64) -> PyResult<(f64, f64)> {
        analysis::psi_bounds(&self.inner, level, index, k, t_cap).map_err(err)
    }

    fn estimate_c<'py>(&self, py: Python<'py>, k: u32, grid: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
        let rep = py.detach(|| analysis::estimate_c(&self.inner, k, &grid)).map_err(err)?;
        to_py(py, &rep)
    }

    fn bound_report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &analysis::bound_report(&self.inner).map_err(err)?)
    }
}

#[pymodule]
fn lenspec(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(kronecker, m)?)?;
    m.add_function(wrap_pyfunction!(max_u, m)?)?;
    m.add_function(wrap_pyfunction!(admissible_divisors, m)?)?;
    m.add_function(wrap_pyfunction!(pell4_fundamental, m)?)?;
    m.add_function(wrap_pyfunction!(power_ancestors, m)?)?;
    m.add_function(wrap_pyfunction!(class_number, m)?)?;
    m.add_function(wrap_pyfunction!(reduced_forms, m)?)?;
    m.add_function(wrap_pyfunction!(l_value_exact, m)?)?;
    m.add_function(wrap_pyfunction!(l_value_direct, m)?)?;
    m.add_function(wrap_pyfunction!(c8n, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_a, m)?)?;
    m.add_function(wrap_pyfunction!(norm, m)?)?;
    m.add_function(wrap_pyfunction!(norm_decimal, m)?)?;
    m.add_function(wrap_pyfunction!(li_k, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_classes, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_multiplicity, m)?)?;
    m.add_class::<PySpectrumTable>()?;
    Ok(())
}
