//! Python bindings: geometry types, the six losses, the synthetic oracle, the
//! solver and the evaluation metrics, on numpy arrays.
//!
//! Images are `(H, W, C)` (or `(H, W)` for one channel), inverse depth and depth
//! are `(H, W)`, normal maps are `(H, W, 3)`. All arrays are `float64`.

use geoloss_core as gl;
use gl::eval::{build_mask, Crop, EvalMask};
use gl::geometry::{Intrinsics, RigidTransform};
use gl::grid::{ImageGrid, InverseDepthMap, NormalMap, ValidityMask};
use gl::losses::{EdgeParams, LossInputs, LossWeights, TERM_NAMES};
use gl::solver::{SolverConfig, StereoSequence};
use nalgebra::{Vector3, Vector6};
use numpy::{PyArray1, PyArrayDyn, PyArrayMethods, PyReadonlyArrayDyn, PyUntypedArrayMethods};
use pyo3::exceptions::{PyFloatingPointError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Array<'py> = PyReadonlyArrayDyn<'py, f64>;
type Output<'py> = Bound<'py, PyArrayDyn<f64>>;

fn to_py(e: gl::Error) -> PyErr {
    match e {
        gl::Error::NonFiniteLoss { .. } => PyFloatingPointError::new_err(e.to_string()),
        gl::Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn image(a: &Array<'_>) -> PyResult<ImageGrid> {
    let shape = a.shape();
    let (h, w, c) = match *shape {
        [h, w] => (h, w, 1),
        [h, w, c] => (h, w, c),
        _ => {
            return Err(PyValueError::new_err(format!(
                "expected an (H, W) or (H, W, C) array, got shape {shape:?}"
            )))
        }
    };
    let data = a.as_array().iter().copied().collect();
    ImageGrid::new(w, h, c, data).map_err(to_py)
}

fn single_channel(a: &Array<'_>, what: &str) -> PyResult<ImageGrid> {
    if a.ndim() != 2 {
        return Err(PyValueError::new_err(format!(
            "{what} must be an (H, W) array, got shape {:?}",
            a.shape()
        )));
    }
    image(a)
}

fn inverse_depth(a: &Array<'_>) -> PyResult<InverseDepthMap> {
    InverseDepthMap::new(single_channel(a, "inverse depth")?).map_err(to_py)
}

fn normal_map(a: &Array<'_>) -> PyResult<NormalMap> {
    if a.ndim() != 3 || a.shape()[2] != 3 {
        return Err(PyValueError::new_err(format!(
            "normals must be an (H, W, 3) array, got shape {:?}",
            a.shape()
        )));
    }
    NormalMap::new(image(a)?).map_err(to_py)
}

fn array<'py>(py: Python<'py>, g: &ImageGrid) -> PyResult<Output<'py>> {
    let (w, h) = g.dims();
    let shape = if g.channels() == 1 {
        vec![h, w]
    } else {
        vec![h, w, g.channels()]
    };
    PyArray1::from_slice(py, g.data()).reshape(shape)
}

fn weights(lambdas: Option<[f64; 6]>) -> PyResult<LossWeights> {
    lambdas
        .map_or(Ok(LossWeights::default()), LossWeights::new)
        .map_err(to_py)
}

/// Pinhole intrinsics `(fx, fy, cx, cy)` in pixels.
#[pyclass(name = "Intrinsics", frozen, from_py_object)]
#[derive(Clone)]
struct PyIntrinsics(Intrinsics);

#[pymethods]
impl PyIntrinsics {
    #[new]
    fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> PyResult<Self> {
        Intrinsics::new(fx, fy, cx, cy).map(Self).map_err(to_py)
    }

    #[getter]
    fn fx(&self) -> f64 {
        self.0.fx
    }

    #[getter]
    fn fy(&self) -> f64 {
        self.0.fy
    }

    #[getter]
    fn cx(&self) -> f64 {
        self.0.cx
    }

    #[getter]
    fn cy(&self) -> f64 {
        self.0.cy
    }

    /// `K^-1 (x, y, 1)`, the ray with unit z.
    fn backproject(&self, x: f64, y: f64) -> [f64; 3] {
        self.0.backproject(x, y).xtilde.into()
    }

    fn project(&self, point: [f64; 3]) -> PyResult<(f64, f64)> {
        let p = self.0.project(&Vector3::from(point)).map_err(to_py)?;
        Ok((p.x, p.y))
    }

    fn __repr__(&self) -> String {
        let k = &self.0;
        format!(
            "Intrinsics(fx={}, fy={}, cx={}, cy={})",
            k.fx, k.fy, k.cx, k.cy
        )
    }
}

/// Rigid transform parameterized by an se(3) vector `(rho, omega)`.
#[pyclass(name = "RigidTransform", frozen, from_py_object)]
#[derive(Clone)]
struct PyTransform(RigidTransform);

#[pymethods]
impl PyTransform {
    #[new]
    #[pyo3(signature = (xi = [0.0; 6]))]
    fn new(xi: [f64; 6]) -> Self {
        Self(RigidTransform::exp(&Vector6::from(xi)))
    }

    #[staticmethod]
    fn from_translation(t: [f64; 3]) -> Self {
        Self(RigidTransform::from_translation(Vector3::from(t)))
    }

    fn log(&self) -> [f64; 6] {
        self.0.log().into()
    }

    #[getter]
    fn rotation<'py>(&self, py: Python<'py>) -> PyResult<Output<'py>> {
        let r = self.0.rotation();
        let rows: Vec<f64> = (0..3)
            .flat_map(|i| (0..3).map(move |j| r[(i, j)]))
            .collect();
        PyArray1::from_vec(py, rows).reshape(vec![3, 3])
    }

    #[getter]
    fn translation(&self) -> [f64; 3] {
        (*self.0.translation()).into()
    }

    fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    /// `self * other`: applies `other` first.
    fn compose(&self, other: &PyTransform) -> Self {
        Self(self.0.compose(&other.0))
    }

    fn transform_point(&self, point: [f64; 3]) -> [f64; 3] {
        self.0.transform_point(&Vector3::from(point)).into()
    }

    fn __repr__(&self) -> String {
        format!("RigidTransform(xi={:?})", self.log())
    }
}

/// Per-pixel normals from the cross product of depth-map tangents.
#[pyfunction]
fn normal_from_depth<'py>(
    py: Python<'py>,
    dinv: Array<'py>,
    intrinsics: &PyIntrinsics,
) -> PyResult<Output<'py>> {
    let n = gl::losses::normal_from_depth(&inverse_depth(&dinv)?, &intrinsics.0).map_err(to_py)?;
    array(py, n.grid())
}

/// Depth-normal consistency loss: `(value, d_dinv, d_normals)`.
#[pyfunction]
#[pyo3(signature = (dinv, normals, image, intrinsics, alpha = 1.0, beta = 1.0))]
fn depth_normal_consistency_loss<'py>(
    py: Python<'py>,
    dinv: Array<'py>,
    normals: Array<'py>,
    image: Array<'py>,
    intrinsics: &PyIntrinsics,
    alpha: f64,
    beta: f64,
) -> PyResult<(f64, Output<'py>, Output<'py>)> {
    let (value, g) = gl::losses::depth_normal_consistency_loss(
        &inverse_depth(&dinv)?,
        &normal_map(&normals)?,
        &self::image(&image)?,
        &intrinsics.0,
        EdgeParams { alpha, beta },
    )
    .map_err(to_py)?;
    Ok((value, array(py, &g.d_dinv)?, array(py, &g.d_normals)?))
}

/// The weighted six-term objective of frame `t`.
///
/// Returns a dict with `terms` (name to raw value), `total` and the gradients
/// `d_dinv`, `d_normals`, `d_xi`, `d_prev_dinv`, `d_prev_normals`.
#[pyfunction]
#[pyo3(signature = (left, right, prev_left, dinv, normals, prev_dinv, prev_normals, intrinsics, stereo, pose, weights = None))]
#[allow(clippy::too_many_arguments)]
fn total_loss<'py>(
    py: Python<'py>,
    left: Array<'py>,
    right: Array<'py>,
    prev_left: Array<'py>,
    dinv: Array<'py>,
    normals: Array<'py>,
    prev_dinv: Array<'py>,
    prev_normals: Array<'py>,
    intrinsics: &PyIntrinsics,
    stereo: &PyTransform,
    pose: &PyTransform,
    weights: Option<[f64; 6]>,
) -> PyResult<Bound<'py, PyDict>> {
    let (left, right, prev_left) = (image(&left)?, image(&right)?, image(&prev_left)?);
    let (dinv, prev_dinv) = (inverse_depth(&dinv)?, inverse_depth(&prev_dinv)?);
    let (normals, prev_normals) = (normal_map(&normals)?, normal_map(&prev_normals)?);
    let inputs = LossInputs {
        left: &left,
        right: &right,
        prev_left: &prev_left,
        dinv: &dinv,
        normals: &normals,
        prev_dinv: &prev_dinv,
        prev_normals: &prev_normals,
        intrinsics: &intrinsics.0,
        stereo: &stereo.0,
        pose: &pose.0,
    };
    let (report, g) =
        gl::losses::total_loss(&inputs, &self::weights(weights)?, EdgeParams::default())
            .map_err(to_py)?;
    let out = PyDict::new(py);
    let terms = PyDict::new(py);
    for (name, value) in TERM_NAMES.iter().zip(report.terms) {
        terms.set_item(name, value)?;
    }
    out.set_item("terms", terms)?;
    out.set_item("total", report.total)?;
    out.set_item("d_dinv", array(py, &g.d_dinv)?)?;
    out.set_item("d_normals", array(py, &g.d_normals)?)?;
    out.set_item("d_xi", <[f64; 6]>::from(g.d_xi))?;
    out.set_item("d_prev_dinv", array(py, &g.d_dinv_prev)?)?;
    out.set_item("d_prev_normals", array(py, &g.d_normals_prev)?)?;
    Ok(out)
}

/// Renders a default scene (`wall`, `ground`, `corridor`).
///
/// Returns a dict with the four views, `depth`, `dinv`, `normals` (frame `t`
/// ground truth), `xi`, `intrinsics` and `stereo`.
#[pyfunction]
#[pyo3(signature = (scene, seed = gl::synth::DEFAULT_SEED))]
fn synth<'py>(py: Python<'py>, scene: &str, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let spec = gl::synth::default_scene(scene, seed).ok_or_else(|| {
        PyValueError::new_err(format!(
            "unknown scene {scene:?}; expected one of {}",
            gl::synth::SCENE_NAMES.join(", ")
        ))
    })?;
    let o = gl::synth::render(&spec).map_err(to_py)?;
    let s = &o.sequence;
    let out = PyDict::new(py);
    for (key, grid) in [
        ("left", &s.left),
        ("right", &s.right),
        ("prev_left", &s.prev_left),
        ("prev_right", &s.prev_right),
        ("depth", &o.truth.depth),
        ("dinv", o.truth.dinv.grid()),
        ("normals", o.truth.normals.grid()),
    ] {
        out.set_item(key, array(py, grid)?)?;
    }
    out.set_item("xi", <[f64; 6]>::from(o.pose.log()))?;
    out.set_item("intrinsics", PyIntrinsics(s.intrinsics))?;
    out.set_item("stereo", PyTransform(s.stereo.clone()))?;
    Ok(out)
}

/// Runs the coarse-to-fine variational solver on a stereo pair of frames.
///
/// Returns a dict with `dinv`, `normals`, `xi` and `trace` (total loss per
/// iteration).
#[pyfunction]
#[pyo3(signature = (left, right, prev_left, prev_right, intrinsics, stereo, *, weights = None, iterations = None, levels = None, lr = None, seed = None))]
#[allow(clippy::too_many_arguments)]
fn solve<'py>(
    py: Python<'py>,
    left: Array<'py>,
    right: Array<'py>,
    prev_left: Array<'py>,
    prev_right: Array<'py>,
    intrinsics: &PyIntrinsics,
    stereo: &PyTransform,
    weights: Option<[f64; 6]>,
    iterations: Option<usize>,
    levels: Option<usize>,
    lr: Option<f64>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let seq = StereoSequence::new(
        image(&left)?,
        image(&right)?,
        image(&prev_left)?,
        image(&prev_right)?,
        intrinsics.0,
        stereo.0.clone(),
    )
    .map_err(to_py)?;
    let d = SolverConfig::default();
    let cfg = SolverConfig {
        weights: self::weights(weights)?,
        max_iterations: iterations.unwrap_or(d.max_iterations),
        pyramid_levels: levels.unwrap_or(d.pyramid_levels),
        learning_rate: lr.unwrap_or(d.learning_rate),
        seed: seed.unwrap_or(d.seed),
        ..d
    };
    let result = py.detach(|| gl::solver::solve(&seq, &cfg)).map_err(to_py)?;
    let v = result.variables();
    let out = PyDict::new(py);
    out.set_item("dinv", array(py, v.dinv.grid())?)?;
    out.set_item("normals", array(py, v.normals.grid())?)?;
    out.set_item("xi", <[f64; 6]>::from(v.xi))?;
    let trace: Vec<f64> = result.trace.iter().map(|e| e.report.total).collect();
    out.set_item("trace", trace)?;
    Ok(out)
}

fn mask(gt_shape: (usize, usize), mask: Option<&Array<'_>>) -> PyResult<Option<ValidityMask>> {
    let Some(m) = mask else { return Ok(None) };
    let g = single_channel(m, "mask")?;
    if g.dims() != gt_shape {
        return Err(PyValueError::new_err(
            "mask shape differs from the ground truth",
        ));
    }
    let bits = g.data().iter().map(|v| *v != 0.0).collect();
    ValidityMask::from_vec(gt_shape.0, gt_shape.1, bits)
        .map(Some)
        .map_err(to_py)
}

/// Depth errors of `pred` against `gt` (metric depth) over pixels with
/// `0 < gt <= cap`, optionally intersected with a nonzero-means-valid `mask`.
#[pyfunction]
#[pyo3(signature = (pred, gt, cap = f64::INFINITY, mask = None))]
fn depth_metrics<'py>(
    py: Python<'py>,
    pred: Array<'py>,
    gt: Array<'py>,
    cap: f64,
    mask: Option<Array<'py>>,
) -> PyResult<Bound<'py, PyDict>> {
    let (pred, gt) = (single_channel(&pred, "pred")?, single_channel(&gt, "gt")?);
    let mut m = build_mask(&gt, cap, Crop::FULL);
    if let Some(extra) = self::mask(gt.dims(), mask.as_ref())? {
        m = m.and(&extra);
    }
    let d = gl::eval::depth_metrics(&pred, &gt, &m).map_err(to_py)?;
    let out = PyDict::new(py);
    for (k, v) in gl::eval::DepthMetrics::COLUMNS.iter().zip(d.values()) {
        out.set_item(k, v)?;
    }
    Ok(out)
}

/// Angular normal errors in degrees, over every pixel or a nonzero-means-valid
/// `mask`.
#[pyfunction]
#[pyo3(signature = (pred, gt, mask = None))]
fn normal_metrics<'py>(
    py: Python<'py>,
    pred: Array<'py>,
    gt: Array<'py>,
    mask: Option<Array<'py>>,
) -> PyResult<Bound<'py, PyDict>> {
    let (pred, gt) = (normal_map(&pred)?, normal_map(&gt)?);
    let (w, h) = gt.dims();
    let m = self::mask((w, h), mask.as_ref())?.unwrap_or_else(|| ValidityMask::new(w, h, true));
    let n = gl::eval::normal_metrics(&pred, &gt, &EvalMask::new(m)).map_err(to_py)?;
    let out = PyDict::new(py);
    for (k, v) in gl::eval::NormalMetrics::COLUMNS.iter().zip(n.values()) {
        out.set_item(k, v)?;
    }
    Ok(out)
}

/// Analytic against finite-difference gradients for all six losses:
/// `(passed, report)`.
#[pyfunction]
#[pyo3(signature = (seed = 0, tolerance = gl::gradcheck::DEFAULT_TOLERANCE))]
fn gradcheck(py: Python<'_>, seed: u64, tolerance: f64) -> PyResult<(bool, String)> {
    let report = py
        .detach(|| gl::gradcheck::run(seed, tolerance))
        .map_err(to_py)?;
    Ok((report.passed(), report.to_string()))
}

#[pymodule]
fn geoloss(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyIntrinsics>()?;
    m.add_class::<PyTransform>()?;
    m.add_function(wrap_pyfunction!(normal_from_depth, m)?)?;
    m.add_function(wrap_pyfunction!(depth_normal_consistency_loss, m)?)?;
    m.add_function(wrap_pyfunction!(total_loss, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(depth_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(normal_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add("TERM_NAMES", TERM_NAMES.to_vec())?;
    Ok(())
}
