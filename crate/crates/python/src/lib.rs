//! Python bindings. Matrices cross the boundary as lists of rows of complex
//! numbers; operators that can overflow a double are returned as
//! `(log_scale, core)` with value `exp(log_scale) * core`.

use num_complex::Complex64 as C64;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use stokes_lab::cli::{self, Command, ExperimentConfig};
use stokes_lab::family::associated_sectors;
use stokes_lab::integrator::{transfer_matrix, Path, PathSegment, ScaledMatrix};
use stokes_lab::mobius::{self, SpherePoint, WordSpec};
use stokes_lab::monodromy::{self as mono, OracleTarget};
use stokes_lab::stokes::StokesOracle;
use stokes_lab::{CMat, ConfluentFamily, LabError};

create_exception!(stokes_lab_py, StokesLabError, PyException);

fn err(e: LabError) -> PyErr {
    StokesLabError::new_err(cli::error_line(&e))
}

type Rows = Vec<Vec<C64>>;

fn rows(m: &CMat) -> Rows {
    (0..m.nrows())
        .map(|j| (0..m.ncols()).map(|k| m[(j, k)]).collect())
        .collect()
}

fn from_rows(r: &Rows) -> PyResult<CMat> {
    let n = r.len();
    if n == 0 || r.iter().any(|row| row.len() != n) {
        return Err(StokesLabError::new_err(
            "DimensionMismatch:expected a square matrix",
        ));
    }
    Ok(CMat::from_fn(n, n, |j, k| r[j][k]))
}

fn scaled(m: &ScaledMatrix) -> (C64, Rows) {
    (m.log_scale(), rows(m.core()))
}

/// `None` stands for the point at infinity.
fn sphere(z: Option<C64>) -> SpherePoint {
    z.map_or(SpherePoint::infinity(), SpherePoint::finite)
}

fn chart(p: &SpherePoint) -> Option<C64> {
    (!p.is_infinity()).then(|| p.chart())
}

#[pyclass(name = "Family", module = "stokes_lab_py", skip_from_py_object)]
#[derive(Clone)]
struct PyFamily {
    inner: ConfluentFamily,
}

#[pymethods]
impl PyFamily {
    #[staticmethod]
    fn euler() -> Self {
        PyFamily {
            inner: ConfluentFamily::euler(),
        }
    }

    #[staticmethod]
    fn t2(c: f64) -> Self {
        PyFamily {
            inner: ConfluentFamily::t2(c),
        }
    }

    #[staticmethod]
    fn t3() -> Self {
        PyFamily {
            inner: ConfluentFamily::t3(),
        }
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyFamily {
            inner: ConfluentFamily::parse(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyFamily {
            inner: cli::load_family(path).map_err(err)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Eigenvalues of `A(0)` in label order.
    #[getter]
    fn eigenvalues(&self) -> Vec<C64> {
        self.inner.lambda().to_vec()
    }

    /// `(α₀, α₁)` at `eps`.
    fn singularities(&self, eps: f64) -> PyResult<(C64, C64)> {
        self.inner.singularities(eps).map_err(err)
    }

    /// Coefficient matrix `A(t, ε)` (numerator of the field).
    fn matrix(&self, t: C64, eps: f64) -> Rows {
        rows(&self.inner.matrix().eval(t, eps))
    }

    fn __repr__(&self) -> String {
        format!(
            "Family(n={}, lambda={:?})",
            self.inner.dim(),
            self.inner.lambda()
        )
    }
}

/// Transfer matrix along the polyline through `points`.
#[pyfunction]
#[pyo3(signature = (family, eps, points, tol = 1e-10))]
fn transfer(
    py: Python<'_>,
    family: &PyFamily,
    eps: f64,
    points: Vec<C64>,
    tol: f64,
) -> PyResult<(C64, Rows)> {
    let fam = family.inner.clone();
    py.detach(move || {
        let field = fam.field(eps)?;
        let segs = points
            .windows(2)
            .map(|w| PathSegment::line(w[0], w[1]))
            .collect::<stokes_lab::Result<Vec<_>>>()?;
        let m = transfer_matrix(&field, &Path::new(segs)?, tol)?;
        Ok(scaled(&m))
    })
    .map_err(err)
}

/// Monodromy operators and eigen data at one `eps`.
#[pyfunction]
#[pyo3(signature = (family, eps, t0 = C64::new(-0.5, 0.0), tol = 1e-10))]
fn monodromy<'py>(
    py: Python<'py>,
    family: &PyFamily,
    eps: f64,
    t0: C64,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let fam = family.inner.clone();
    let p = py
        .detach(move || mono::sweep(&fam, &[eps], t0, tol))
        .map_err(err)?
        .remove(0);
    let d = PyDict::new(py);
    d.set_item("eps", p.eps)?;
    d.set_item("m0", scaled(&p.pair.m0))?;
    d.set_item("m1", scaled(&p.pair.m1))?;
    d.set_item("complete", scaled(&p.pair.complete))?;
    d.set_item("log_eigenvalues0", p.ed0.log_eigenvalues.clone())?;
    d.set_item("log_eigenvalues1", p.ed1.log_eigenvalues.clone())?;
    d.set_item("eigenvectors0", rows(&p.ed0.eigenvectors))?;
    d.set_item("eigenvectors1", rows(&p.ed1.eigenvectors))?;
    d.set_item("transition", rows(&p.transition.matrix()))?;
    d.set_item("self_check", p.pair.self_check)?;
    d.set_item(
        "numeric_discrepancy",
        p.ed0.numeric_discrepancy().max(p.ed1.numeric_discrepancy()),
    )?;
    Ok(d)
}

/// Stokes matrices of the limit equation, read at `t0` and `-t0`.
#[pyfunction]
#[pyo3(signature = (family, t0 = C64::new(-0.5, 0.0)))]
fn stokes<'py>(py: Python<'py>, family: &PyFamily, t0: C64) -> PyResult<Bound<'py, PyDict>> {
    let fam = family.inner.clone();
    let pair = py
        .detach(move || {
            let oracle = StokesOracle::from_family(&fam)?;
            let (s0, s1) = associated_sectors(&fam)?;
            oracle.stokes_matrices(&s0, &s1, t0)
        })
        .map_err(err)?;
    let (p0, p1) = pair.pivot_normalized();
    let d = PyDict::new(py);
    d.set_item("c0", rows(&pair.c0))?;
    d.set_item("c1", rows(&pair.c1))?;
    d.set_item("c0_raw", rows(&pair.c0_raw))?;
    d.set_item("c1_raw", rows(&pair.c1_raw))?;
    d.set_item("c0_pivot", rows(&p0))?;
    d.set_item("c1_pivot", rows(&p1))?;
    d.set_item("deviation0", pair.deviation0)?;
    d.set_item("deviation1", pair.deviation1)?;
    Ok(d)
}

/// Commutator sweep and transition asymptotics; returns rows and the CSV text.
#[pyfunction]
#[pyo3(signature = (family, eps_grid, t0 = C64::new(-0.5, 0.0), tol = 1e-10, d0 = 0.4, d1 = 0.4))]
fn asymptotics<'py>(
    py: Python<'py>,
    family: &PyFamily,
    eps_grid: Vec<f64>,
    t0: C64,
    tol: f64,
    d0: f64,
    d1: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let fam = family.inner.clone();
    let (oracle, rep) = py
        .detach(move || {
            let oracle = OracleTarget::from_family(&fam, t0)?;
            let rep = mono::asymptotics_report(&fam, &eps_grid, t0, tol, d0, d1, Some(&oracle))?;
            Ok((oracle, rep))
        })
        .map_err(err)?;
    let out = PyDict::new(py);
    let list = pyo3::types::PyList::empty(py);
    for r in &rep.rows {
        let d = PyDict::new(py);
        d.set_item("eps", r.eps)?;
        d.set_item("distance_to_C0", r.distance)?;
        d.set_item("transition", rows(&r.c))?;
        d.set_item("ln_abs_u", r.u.ln_abs())?;
        d.set_item("u_over_mu1", r.u_over_mu1)?;
        d.set_item("ln_mu0", r.ln_mu0)?;
        d.set_item("ln_mu1", r.ln_mu1)?;
        d.set_item("commutator", rows(&r.commutator))?;
        d.set_item("det", r.det)?;
        d.set_item("self_check", r.self_check)?;
        list.append(d)?;
    }
    out.set_item("rows", list)?;
    out.set_item("c0", rows(&oracle.c0))?;
    out.set_item("c1", rows(&oracle.c1))?;
    out.set_item("csv", rep.to_csv())?;
    Ok(out)
}

#[pyclass(name = "MobiusMap", module = "stokes_lab_py", skip_from_py_object)]
#[derive(Clone)]
struct PyMobius {
    inner: mobius::MobiusMap,
}

#[pymethods]
impl PyMobius {
    /// Projectivization of a 2×2 matrix.
    #[new]
    fn new(matrix: Rows) -> PyResult<Self> {
        let m = from_rows(&matrix)?;
        Ok(PyMobius {
            inner: mobius::MobiusMap::projectivize(&m).map_err(err)?,
        })
    }

    #[staticmethod]
    fn identity() -> Self {
        PyMobius {
            inner: mobius::MobiusMap::identity(),
        }
    }

    /// Image of `z`; `None` is infinity.
    fn apply(&self, z: Option<C64>) -> Option<C64> {
        chart(&self.inner.apply(&sphere(z)))
    }

    fn compose(&self, right: &PyMobius) -> Self {
        PyMobius {
            inner: self.inner.compose(&right.inner),
        }
    }

    fn inverse(&self) -> Self {
        PyMobius {
            inner: self.inner.inverse(),
        }
    }

    fn pow(&self, k: i64) -> Self {
        PyMobius {
            inner: self.inner.pow(k),
        }
    }

    /// Log of the max-norm of the determinant-one representative.
    fn ln_norm(&self) -> f64 {
        self.inner.ln_norm()
    }

    /// Determinant-one matrix; overflows for very large maps.
    fn matrix(&self) -> Rows {
        rows(&self.inner.matrix())
    }

    #[pyo3(signature = (tol = 1e-9))]
    fn is_hyperbolic(&self, tol: f64) -> bool {
        self.inner.classify(tol).is_hyperbolic()
    }

    /// `(attractor, repeller, multiplier)`; points may be `None` (infinity).
    #[pyo3(signature = (tol = 1e-9))]
    fn fixed_points(&self, tol: f64) -> PyResult<(Option<C64>, Option<C64>, C64)> {
        let fp = self.inner.fixed_points(tol).map_err(err)?;
        Ok((chart(&fp.attractor), chart(&fp.repeller), fp.multiplier))
    }
}

/// Chordal distance on the Riemann sphere.
#[pyfunction]
fn chordal(a: Option<C64>, b: Option<C64>) -> f64 {
    sphere(a).chordal(&sphere(b))
}

/// `(reduced word, class)`; class is `identity`, `reduced`, `reducible` or
/// `complete-power(k)`.
#[pyfunction]
fn classify_word(word: &str) -> PyResult<(String, String)> {
    let w = WordSpec::parse(word).map_err(err)?;
    Ok((w.to_string(), w.class.to_string()))
}

#[pyfunction]
fn all_words(max_len: usize) -> Vec<String> {
    mobius::all_words(max_len)
        .iter()
        .map(|w| w.to_string())
        .collect()
}

/// Projective monodromy maps `(m0, m1, m0 m1)` at each `eps`.
#[pyfunction]
#[pyo3(signature = (family, eps_grid, t0 = C64::new(-0.5, 0.0), tol = 1e-10))]
fn projective_monodromy(
    py: Python<'_>,
    family: &PyFamily,
    eps_grid: Vec<f64>,
    t0: C64,
    tol: f64,
) -> PyResult<Vec<(f64, PyMobius, PyMobius, PyMobius)>> {
    let fam = family.inner.clone();
    let maps = py
        .detach(move || {
            mono::sweep(&fam, &eps_grid, t0, tol)?
                .iter()
                .map(mobius::ProjectiveMonodromy::from_sweep_point)
                .collect::<stokes_lab::Result<Vec<_>>>()
        })
        .map_err(err)?;
    Ok(maps
        .into_iter()
        .map(|m| {
            (
                m.eps,
                PyMobius { inner: m.m0 },
                PyMobius { inner: m.m1 },
                PyMobius { inner: m.mc },
            )
        })
        .collect())
}

/// Word divergence sweep; returns the CSV text.
#[pyfunction]
#[pyo3(signature = (family, eps_grid, words = None, samples = 200, seed = 7, t0 = C64::new(-0.5, 0.0), tol = 1e-10))]
#[allow(clippy::too_many_arguments)]
fn divergence(
    py: Python<'_>,
    family: &PyFamily,
    eps_grid: Vec<f64>,
    words: Option<Vec<String>>,
    samples: usize,
    seed: u64,
    t0: C64,
    tol: f64,
) -> PyResult<String> {
    let fam = family.inner.clone();
    py.detach(move || {
        let words = match words {
            Some(ws) => ws
                .iter()
                .map(|w| WordSpec::parse(w))
                .collect::<stokes_lab::Result<Vec<_>>>()?,
            None => mobius::all_words(4),
        };
        let maps = mono::sweep(&fam, &eps_grid, t0, tol)?
            .iter()
            .map(mobius::ProjectiveMonodromy::from_sweep_point)
            .collect::<stokes_lab::Result<Vec<_>>>()?;
        let oracle = OracleTarget::from_family(&fam, t0)?;
        let excl = mobius::ExclusionData {
            m: mobius::limit_complete_map(&fam, t0, tol)?,
            points: mobius::limit_points(&oracle.stokes)?,
        };
        let xs = mobius::random_samples(samples, seed);
        Ok(mobius::divergence_experiment(&maps, &words, &xs, Some(&excl), tol)?.to_csv())
    })
    .map_err(err)
}

/// Runs one CLI command and writes its report files.
#[pyfunction]
#[pyo3(signature = (command, family = "t3", out = "out", eps0 = 0.4, ratio = 0.5, count = 7, t0 = C64::new(-0.5, 0.0), d0 = 0.4, d1 = 0.4, tol = 1e-10, words = None, seed = 7))]
#[allow(clippy::too_many_arguments)]
fn run_experiment<'py>(
    py: Python<'py>,
    command: &str,
    family: &str,
    out: &str,
    eps0: f64,
    ratio: f64,
    count: usize,
    t0: C64,
    d0: f64,
    d1: f64,
    tol: f64,
    words: Option<String>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cmd = match command {
        "monodromy" => Command::Monodromy,
        "commutator" => Command::Commutator,
        "stokes" => Command::Stokes,
        "asymptotics" => Command::Asymptotics,
        "divergence" => Command::Divergence,
        "selftest" => Command::Selftest,
        other => {
            return Err(err(LabError::InvalidArgument(format!(
                "unknown command '{other}'"
            ))))
        }
    };
    let cfg = ExperimentConfig {
        family_source: family.to_string(),
        family: cli::load_family(family).map_err(err)?,
        eps0,
        ratio,
        count,
        t0,
        d0,
        d1,
        tol,
        out: out.into(),
        name: cmd.name().to_string(),
        words,
        seed,
    };
    cfg.validate().map_err(err)?;
    let outcome = py.detach(move || cli::run(cmd, &cfg)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item(
        "files",
        outcome
            .files
            .iter()
            .map(|f| f.display().to_string())
            .collect::<Vec<_>>(),
    )?;
    d.set_item("slope", outcome.report.fit.map(|f| f.slope))?;
    d.set_item("summary", outcome.report.summary.clone())?;
    d.set_item("failures", outcome.report.failures.clone())?;
    d.set_item("success", outcome.success())?;
    Ok(d)
}

#[pymodule]
fn stokes_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("StokesLabError", m.py().get_type::<StokesLabError>())?;
    m.add_class::<PyFamily>()?;
    m.add_class::<PyMobius>()?;
    m.add_function(wrap_pyfunction!(transfer, m)?)?;
    m.add_function(wrap_pyfunction!(monodromy, m)?)?;
    m.add_function(wrap_pyfunction!(stokes, m)?)?;
    m.add_function(wrap_pyfunction!(asymptotics, m)?)?;
    m.add_function(wrap_pyfunction!(chordal, m)?)?;
    m.add_function(wrap_pyfunction!(classify_word, m)?)?;
    m.add_function(wrap_pyfunction!(all_words, m)?)?;
    m.add_function(wrap_pyfunction!(projective_monodromy, m)?)?;
    m.add_function(wrap_pyfunction!(divergence, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
