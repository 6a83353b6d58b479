//! Python bindings for the facerig core library.

use std::path::PathBuf;

use facerig::dyntex::{self, NormalizeOptions, TextureChannel};
use facerig::mesh::{Uv, Vec3};
use facerig::pipeline::{self, bundle, demo, io, synth};
use facerig::rig::{self, WeightVector};
use facerig::{personalize as pers, solver};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(facerig_py, FacerigError, PyException);
create_exception!(facerig_py, ConvergenceError, FacerigError);

fn err(e: facerig::Error) -> PyErr {
    match e {
        facerig::Error::ConvergenceFailure { .. } => ConvergenceError::new_err(e.to_string()),
        e => FacerigError::new_err(e.to_string()),
    }
}

fn weights(values: Vec<f64>) -> PyResult<WeightVector> {
    WeightVector::new(values).map_err(err)
}

#[pyclass(from_py_object, name = "Mesh", module = "facerig_py")]
#[derive(Clone)]
struct PyMesh(facerig::Mesh);

#[pymethods]
impl PyMesh {
    #[new]
    #[pyo3(signature = (vertices, faces, uvs, name = "mesh"))]
    fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>, uvs: Vec<Uv>, name: &str) -> PyResult<Self> {
        facerig::Mesh::new(name, vertices, faces, uvs).map(PyMesh).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        facerig::load_mesh(path).map(PyMesh).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        facerig::save_mesh(&self.0, path).map_err(err)
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name().to_string()
    }

    #[getter]
    fn vertices(&self) -> Vec<Vec3> {
        self.0.vertices().to_vec()
    }

    #[getter]
    fn faces(&self) -> Vec<[u32; 3]> {
        self.0.faces().to_vec()
    }

    #[getter]
    fn uvs(&self) -> Vec<Uv> {
        self.0.uvs().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.vertex_count()
    }

    fn __repr__(&self) -> String {
        format!("Mesh({:?}, {} vertices, {} faces)", self.0.name(), self.0.vertex_count(), self.0.face_count())
    }
}

#[pyclass(skip_from_py_object, name = "Rig", module = "facerig_py")]
#[derive(Clone)]
struct PyRig(facerig::BlendshapeRig);

#[pymethods]
impl PyRig {
    #[new]
    #[pyo3(signature = (neutral, shapes, names, extreme = Vec::new()))]
    fn new(neutral: PyMesh, shapes: Vec<Vec<Vec3>>, names: Vec<String>, extreme: Vec<usize>) -> PyResult<Self> {
        facerig::BlendshapeRig::new(neutral.0, shapes, names, extreme.into_iter().collect())
            .map(PyRig)
            .map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        rig::load_rig(path).map(PyRig).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        rig::save_rig(&self.0, path).map_err(err)
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.0.names().to_vec()
    }

    #[getter]
    fn neutral(&self) -> PyMesh {
        PyMesh(self.0.neutral().clone())
    }

    #[getter]
    fn shape_count(&self) -> usize {
        self.0.shape_count()
    }

    #[getter]
    fn vertex_count(&self) -> usize {
        self.0.vertex_count()
    }

    fn shape(&self, i: usize) -> PyResult<Vec<Vec3>> {
        if i >= self.0.shape_count() {
            return Err(pyo3::exceptions::PyIndexError::new_err(i));
        }
        Ok(self.0.shape(i).clone())
    }

    /// Problems found by the rig validator; empty when the rig is valid.
    fn validate(&self) -> Vec<String> {
        self.0.validate()
    }

    fn synthesize(&self, weights_: Vec<f64>) -> PyResult<PyMesh> {
        facerig::synthesize_expression(&self.0, &weights(weights_)?)
            .map(PyMesh)
            .map_err(err)
    }

    fn with_neutral(&self, neutral: PyMesh) -> PyResult<Self> {
        self.0.with_neutral(neutral.0).map(PyRig).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Rig({} shapes, {} vertices)", self.0.shape_count(), self.0.vertex_count())
    }
}

#[pyclass(skip_from_py_object, name = "Scans", module = "facerig_py")]
#[derive(Clone)]
struct PyScans(facerig::SubjectScans);

#[pymethods]
impl PyScans {
    #[staticmethod]
    #[pyo3(signature = (path, rig, neutral = None))]
    fn load(path: PathBuf, rig: &PyRig, neutral: Option<PathBuf>) -> PyResult<Self> {
        io::load_scans(path, &rig.0, neutral.as_deref())
            .map(PyScans)
            .map_err(err)
    }

    fn save(&self, path: PathBuf, rig: &PyRig) -> PyResult<()> {
        io::save_scans(&self.0, &rig.0, path).map_err(err)
    }

    #[getter]
    fn neutral(&self) -> PyMesh {
        PyMesh(self.0.neutral.clone())
    }

    #[getter]
    fn expressions(&self) -> Vec<PyMesh> {
        self.0.expressions.iter().cloned().map(PyMesh).collect()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.0.facs.expressions().iter().map(|e| e.name.clone()).collect()
    }

    #[getter]
    fn facs_weights(&self) -> Vec<Vec<f64>> {
        self.0
            .facs
            .expressions()
            .iter()
            .map(|e| e.weights.as_slice().to_vec())
            .collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(skip_from_py_object, name = "TexturePack", module = "facerig_py")]
#[derive(Clone)]
struct PyTexturePack(dyntex::TexturePack);

#[pymethods]
impl PyTexturePack {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        io::load_texture_pack(path).map(PyTexturePack).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_texture_pack(&self.0, path).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    /// Flat interleaved pixel data of one channel (`albedo`, `specular` or
    /// `displacement`), or None when absent.
    fn channel(&self, name: &str) -> PyResult<Option<Vec<f32>>> {
        let c = TextureChannel::ALL
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| pyo3::exceptions::PyValueError::new_err(format!("unknown channel {name:?}")))?;
        Ok(self.0.channel(c).map(|r| r.data().to_vec()))
    }
}

/// Least-squares weights in [0, 1]; returns a dict with `weights`,
/// `residual`, `iterations` and `converged`.
#[pyfunction]
#[pyo3(signature = (rig, target, init = None))]
fn solve_weights<'py>(
    py: Python<'py>,
    rig: &PyRig,
    target: &PyMesh,
    init: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let init = init.map(weights).transpose()?;
    let fit = solver::solve_weights(&rig.0, &target.0, init.as_ref()).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("weights", fit.weights.as_slice().to_vec())?;
    d.set_item("residual", fit.residual)?;
    d.set_item("iterations", fit.iterations)?;
    d.set_item("converged", fit.converged)?;
    Ok(d)
}

#[pyfunction]
fn reconstruction_error(rig: &PyRig, weights_: Vec<f64>, target: &PyMesh) -> PyResult<f64> {
    solver::reconstruction_error(&rig.0, &weights(weights_)?, &target.0).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (grid = 16, seed = 7))]
fn procedural_template(grid: usize, seed: u64) -> PyResult<PyRig> {
    synth::procedural_template(&synth::TemplateSpec {
        grid,
        seed,
        ..Default::default()
    })
    .map(PyRig)
    .map_err(err)
}

/// Synthetic subject from the template: returns `(scans, truth_rig)`.
#[pyfunction]
#[pyo3(signature = (template, seed, warps = 4, amplitude = 0.04, noise = 0.0))]
fn synth_subject(template: &PyRig, seed: u64, warps: usize, amplitude: f64, noise: f64) -> PyResult<(PyScans, PyRig)> {
    let facs = synth::default_facs(&template.0).map_err(err)?;
    let spec = synth::SyntheticSubjectSpec::random(seed, &template.0, warps, amplitude, noise);
    let s = synth::synth_fixture(&template.0, &facs, &spec).map_err(err)?;
    Ok((PyScans(s.scans), PyRig(s.truth)))
}

/// Personalizes the template to a subject; returns `(rig, tuning_trace)`.
#[pyfunction]
#[pyo3(signature = (template, scans, omega_reg = 1.0, omega_reg_ft = 0.1, two_branch = false, rounds = 5))]
fn personalize(
    py: Python<'_>,
    template: &PyRig,
    scans: &PyScans,
    omega_reg: f64,
    omega_reg_ft: f64,
    two_branch: bool,
    rounds: usize,
) -> PyResult<(PyRig, Vec<f64>)> {
    let cfg = facerig::OptimConfig {
        omega_reg,
        omega_reg_ft,
        two_branch,
        alternation_rounds: rounds,
        ..Default::default()
    };
    let (t, s) = (&template.0, &scans.0);
    let out = py.detach(|| pers::personalize_detailed(t, s, &cfg)).map_err(err)?;
    Ok((PyRig(out.rig), out.tuning.trace))
}

/// Raw influence map of an expression against a neutral:
/// `(width, height, compress, stretch)` with row-major pixel lists.
#[pyfunction]
fn influence_map(neutral: &PyMesh, expression: &PyMesh, resolution: usize) -> PyResult<(usize, usize, Vec<f32>, Vec<f32>)> {
    let m = dyntex::influence_map(&neutral.0, &expression.0, resolution).map_err(err)?;
    Ok((m.width(), m.height(), m.compress.data().to_vec(), m.stretch.data().to_vec()))
}

/// Dynamic texture for a weight vector, with influences computed from the rig.
#[pyfunction]
#[pyo3(signature = (rig, neutral, compress, stretch, weights_, temperature = 1.0))]
fn runtime_blend(
    rig: &PyRig,
    neutral: &PyTexturePack,
    compress: &PyTexturePack,
    stretch: &PyTexturePack,
    weights_: Vec<f64>,
    temperature: f64,
) -> PyResult<PyTexturePack> {
    let opts = NormalizeOptions {
        temperature,
        ..Default::default()
    };
    let inf = dyntex::blendshape_influences(&rig.0, neutral.0.width(), &opts).map_err(err)?;
    dyntex::runtime_blend(&neutral.0, &compress.0, &stretch.0, &inf, &weights(weights_)?)
        .map(|b| PyTexturePack(b.texture))
        .map_err(err)
}

/// Writes a geometry-only bundle (with influence maps at `resolution`);
/// returns the list of written files.
#[pyfunction]
#[pyo3(signature = (rig, path, resolution = 64))]
fn export_bundle(rig: &PyRig, path: PathBuf, resolution: usize) -> PyResult<Vec<String>> {
    let inf = dyntex::blendshape_influences(&rig.0, resolution, &NormalizeOptions::default()).map_err(err)?;
    let m = bundle::export_bundle(&rig.0, None, Some(&inf), path).map_err(err)?;
    Ok(m.files.iter().map(|f| f.path.clone()).collect())
}

#[pyfunction]
fn import_bundle(path: PathBuf) -> PyResult<PyRig> {
    bundle::import_bundle(path).map(|b| PyRig(b.rig)).map_err(err)
}

/// Runs the full demo into `out_dir`; returns the summary as a JSON string.
#[pyfunction]
#[pyo3(signature = (out_dir, seed = 1, grid = 16, resolution = 128))]
fn run_demo(py: Python<'_>, out_dir: PathBuf, seed: u64, grid: usize, resolution: usize) -> PyResult<String> {
    let opts = demo::DemoOptions {
        seed,
        grid,
        texture_resolution: resolution,
        ..Default::default()
    };
    let summary = py.detach(|| pipeline::run_demo(&out_dir, &opts)).map_err(err)?;
    serde_json::to_string(&summary).map_err(|e| FacerigError::new_err(e.to_string()))
}

#[pymodule]
fn facerig_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FacerigError", m.py().get_type::<FacerigError>())?;
    m.add("ConvergenceError", m.py().get_type::<ConvergenceError>())?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PyRig>()?;
    m.add_class::<PyScans>()?;
    m.add_class::<PyTexturePack>()?;
    m.add_function(wrap_pyfunction!(solve_weights, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruction_error, m)?)?;
    m.add_function(wrap_pyfunction!(procedural_template, m)?)?;
    m.add_function(wrap_pyfunction!(synth_subject, m)?)?;
    m.add_function(wrap_pyfunction!(personalize, m)?)?;
    m.add_function(wrap_pyfunction!(influence_map, m)?)?;
    m.add_function(wrap_pyfunction!(runtime_blend, m)?)?;
    m.add_function(wrap_pyfunction!(export_bundle, m)?)?;
    m.add_function(wrap_pyfunction!(import_bundle, m)?)?;
    m.add_function(wrap_pyfunction!(run_demo, m)?)?;
    Ok(())
}
