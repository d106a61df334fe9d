//! Python bindings. Heights and images cross the boundary as nested lists
//! of rows; pixels are `(row, col)` tuples.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;
use sfs_core::anchors::BCAnchor;
use sfs_core::graph::Configuration;
use sfs_core::maxcut::enumerate_candidates;
use sfs_core::pipeline::{self, Analysis, Anchored};
use sfs_core::reconstruct::{encode_obj, ReconstructionResult};
use sfs_core::scenes;
use sfs_core::{io, Field, GridSpec, HeightField, IrradianceImage, SfsError, SurfaceKind};

create_exception!(sfs, ShadingError, PyException, "Base class for pipeline failures.");
create_exception!(sfs, DegenerateImageError, ShadingError, "The image has no usable singular structure.");
create_exception!(sfs, InfeasibleError, ShadingError, "No consistent configuration or anchor fit exists.");
create_exception!(sfs, UnresolvedAmbiguityError, ShadingError, "The anchors cannot decide a configuration.");

fn py_err(e: SfsError) -> PyErr {
    let msg = e.to_string();
    match e {
        SfsError::Io { .. } => PyOSError::new_err(msg),
        SfsError::NoSingularPoint
        | SfsError::DegenerateImage { .. }
        | SfsError::Unreachable { .. }
        | SfsError::DescentStall { .. }
        | SfsError::NoMaximumSource => DegenerateImageError::new_err(msg),
        SfsError::InfeasibleConfiguration { .. } | SfsError::InconsistentAnchors(_) => InfeasibleError::new_err(msg),
        SfsError::UnresolvedAmbiguity(_) => UnresolvedAmbiguityError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for sfs_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn rows(f: &Field<f64>) -> Vec<Vec<f64>> {
    f.as_slice().chunks(f.cols()).map(<[f64]>::to_vec).collect()
}

fn field(rows: Vec<Vec<f64>>, grid: &GridSpec) -> PyResult<Field<f64>> {
    let n = rows.len();
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    if n != grid.height || data.len() != grid.len() {
        return Err(PyValueError::new_err(format!(
            "expected {} rows of {} values",
            grid.height, grid.width
        )));
    }
    Field::from_vec(grid.height, grid.width, data).py()
}

/// Pixel grid over a world rectangle.
#[pyclass(name = "Grid", module = "sfs", frozen, from_py_object)]
#[derive(Clone)]
struct PyGrid(GridSpec);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(width: usize, height: usize, x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> PyResult<Self> {
        GridSpec::new(width, height, x_min, x_max, y_min, y_max).py().map(Self)
    }

    /// `n x n` pixels over `[-half, half]^2`.
    #[staticmethod]
    fn square(n: usize, half: f64) -> PyResult<Self> {
        GridSpec::square(n, half).py().map(Self)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height
    }

    #[getter]
    fn extent(&self) -> (f64, f64, f64, f64) {
        (self.0.x_min, self.0.x_max, self.0.y_min, self.0.y_max)
    }

    #[getter]
    fn spacing(&self) -> (f64, f64) {
        (self.0.hx(), self.0.hy())
    }

    fn __repr__(&self) -> String {
        let g = &self.0;
        format!("Grid({}, {}, {}, {}, {}, {})", g.width, g.height, g.x_min, g.x_max, g.y_min, g.y_max)
    }
}

#[pyclass(name = "HeightField", module = "sfs", frozen, from_py_object)]
#[derive(Clone)]
struct PyHeightField(HeightField);

#[pymethods]
impl PyHeightField {
    #[new]
    fn new(grid: &PyGrid, z: Vec<Vec<f64>>) -> PyResult<Self> {
        HeightField::new(grid.0, field(z, &grid.0)?).py().map(Self)
    }

    /// Analytic surface `kind` with its shape parameters.
    #[staticmethod]
    #[pyo3(signature = (kind, grid, params = Vec::new()))]
    fn make(kind: &str, grid: &PyGrid, params: Vec<f64>) -> PyResult<Self> {
        let kind: SurfaceKind = kind.parse().py()?;
        sfs_core::make_surface(kind, &params, grid.0).py().map(Self)
    }

    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        io::read_height_csv(path).py().map(Self)
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        io::write_height_csv(&self.0, path).py()
    }

    /// Wavefront OBJ text of the surface mesh.
    fn to_obj(&self) -> String {
        encode_obj(&self.0)
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid)
    }

    fn at(&self, row: usize, col: usize) -> PyResult<f64> {
        self.0.z.get((row, col)).copied().ok_or_else(|| PyValueError::new_err("pixel outside the grid"))
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        rows(&self.0.z)
    }

    fn negate(&self) -> Self {
        Self(self.0.negate())
    }

    fn depth_range(&self) -> f64 {
        self.0.depth_range()
    }

    /// Lambertian image under overhead light.
    #[pyo3(signature = (e_max = 1.0))]
    fn render(&self, e_max: f64) -> PyResult<PyImage> {
        sfs_core::render_lambertian(&self.0, e_max).py().map(PyImage)
    }
}

#[pyclass(name = "Image", module = "sfs", frozen, from_py_object)]
#[derive(Clone)]
struct PyImage(IrradianceImage);

#[pymethods]
impl PyImage {
    /// Observed brightness; the brightest pixel is taken as `e_max`.
    #[new]
    fn new(grid: &PyGrid, e: Vec<Vec<f64>>) -> PyResult<Self> {
        IrradianceImage::from_observed(grid.0, field(e, &grid.0)?).py().map(Self)
    }

    #[staticmethod]
    fn read_pgm(path: &str) -> PyResult<Self> {
        io::read_pgm(path).py().map(Self)
    }

    fn write_pgm(&self, path: &str) -> PyResult<()> {
        io::write_pgm(&self.0, path).py()
    }

    fn quantize(&self) -> PyResult<Self> {
        sfs_core::quantize_8bit(&self.0).py().map(Self)
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid)
    }

    #[getter]
    fn e_max(&self) -> f64 {
        self.0.e_max
    }

    fn at(&self, row: usize, col: usize) -> PyResult<f64> {
        self.0.e.get((row, col)).copied().ok_or_else(|| PyValueError::new_err("pixel outside the grid"))
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        rows(&self.0.e)
    }
}

/// Known depth at a pixel.
#[pyclass(name = "Anchor", module = "sfs", frozen, from_py_object)]
#[derive(Clone)]
struct PyAnchor(BCAnchor);

#[pymethods]
impl PyAnchor {
    #[new]
    #[pyo3(signature = (row, col, depth, label = String::new()))]
    fn new(row: usize, col: usize, depth: f64, label: String) -> Self {
        Self(BCAnchor {
            pixel: (row, col),
            depth,
            label,
        })
    }

    #[getter]
    fn pixel(&self) -> (usize, usize) {
        self.0.pixel
    }

    #[getter]
    fn depth(&self) -> f64 {
        self.0.depth
    }

    #[getter]
    fn label(&self) -> &str {
        &self.0.label
    }

    fn __repr__(&self) -> String {
        format!("Anchor({}, {}, {})", self.0.pixel.0, self.0.pixel.1, self.0.depth)
    }
}

/// Standard synthetic scene: surface, window and anchor sites.
#[pyclass(name = "Scene", module = "sfs", frozen)]
struct PyScene(scenes::Scene);

#[pymethods]
impl PyScene {
    #[new]
    fn new(kind: &str) -> PyResult<Self> {
        let kind: SurfaceKind = kind.parse().py()?;
        scenes::Scene::standard(kind)
            .map(Self)
            .ok_or_else(|| PyValueError::new_err(format!("no standard scene for `{}`", kind.name())))
    }

    #[staticmethod]
    fn names() -> Vec<&'static str> {
        SurfaceKind::ALL.iter().filter(|k| scenes::Scene::standard(**k).is_some()).map(|k| k.name()).collect()
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid)
    }

    #[pyo3(signature = (scale = 1.0))]
    fn truth(&self, scale: f64) -> PyResult<PyHeightField> {
        self.0.truth(scale).py().map(PyHeightField)
    }

    /// Rendering of the true surface, before any quantisation.
    #[pyo3(signature = (scale = 1.0))]
    fn image(&self, scale: f64) -> PyResult<PyImage> {
        self.0.image(scale).py().map(PyImage)
    }

    /// Depths of `truth` at the scene's anchor sites.
    fn anchors(&self, truth: &PyHeightField) -> Vec<PyAnchor> {
        self.0.anchors(&truth.0).into_iter().map(PyAnchor).collect()
    }
}

#[pyclass(name = "Params", module = "sfs", from_py_object)]
#[derive(Clone)]
struct PyParams(pipeline::Params);

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (eps_sing = None, eps_flat = None, min_sep = None, cycle_tol = None, accept_tol = None))]
    fn new(
        eps_sing: Option<f64>,
        eps_flat: Option<f64>,
        min_sep: Option<f64>,
        cycle_tol: Option<f64>,
        accept_tol: Option<f64>,
    ) -> PyResult<Self> {
        let d = pipeline::Params::default();
        let p = pipeline::Params {
            eps_sing: eps_sing.unwrap_or(d.eps_sing),
            eps_flat: eps_flat.unwrap_or(d.eps_flat),
            min_sep: min_sep.unwrap_or(d.min_sep),
            cycle_tol,
            accept_tol,
        };
        p.validate().py()?;
        Ok(Self(p))
    }

    #[getter]
    fn eps_sing(&self) -> f64 {
        self.0.eps_sing
    }

    #[getter]
    fn eps_flat(&self) -> f64 {
        self.0.eps_flat
    }

    #[getter]
    fn min_sep(&self) -> f64 {
        self.0.min_sep
    }
}

fn params_or_default(p: Option<&PyParams>) -> pipeline::Params {
    p.map(|p| p.0).unwrap_or_default()
}

/// Singular points, configuration graph and solved ambiguity classes of an image.
#[pyclass(name = "Analysis", module = "sfs", frozen)]
struct PyAnalysis {
    inner: Analysis,
    image: IrradianceImage,
    params: pipeline::Params,
}

#[pymethods]
impl PyAnalysis {
    #[new]
    #[pyo3(signature = (image, params = None))]
    fn new(image: &PyImage, params: Option<&PyParams>) -> PyResult<Self> {
        let params = params_or_default(params);
        let inner = pipeline::analyze(&image.0, &params).py()?;
        Ok(Self {
            inner,
            image: image.0.clone(),
            params,
        })
    }

    /// Pixels of the singular points, indexed like the graph's vertices.
    #[getter]
    fn points(&self) -> Vec<(usize, usize)> {
        self.inner.regions.points.iter().map(|p| p.pixel).collect()
    }

    /// `(i, j, weight)` per edge.
    #[getter]
    fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.inner.graph.edges.iter().map(|e| (e.i, e.j, e.w)).collect()
    }

    /// Edge signs of the best configuration: +1 when depth rises from `i` to `j`.
    #[getter]
    fn chosen(&self) -> Vec<i8> {
        self.inner.report.chosen.signs.clone()
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.report.classes.len()
    }

    #[getter]
    fn free_parts(&self) -> usize {
        self.inner.decomposition.free_parts.len()
    }

    #[getter]
    fn free_edges(&self) -> usize {
        self.inner.decomposition.free_edges.len()
    }

    /// Up to `limit` candidate configurations; bit k of the index flips class k.
    #[pyo3(signature = (limit = 64))]
    fn candidates(&self, limit: usize) -> Vec<Vec<i8>> {
        enumerate_candidates(&self.inner.report, limit).into_iter().map(|c| c.signs).collect()
    }

    fn report_json(&self) -> String {
        self.inner.report.to_json()
    }

    fn to_dot(&self) -> String {
        self.inner.graph.to_dot(Some(&self.inner.report.chosen))
    }

    /// Surface for a configuration given as edge signs, up to a constant.
    fn reconstruct(&self, signs: Vec<i8>) -> PyResult<PyReconstruction> {
        let cfg = Configuration::from_signs(signs).py()?;
        let rec = pipeline::reconstruct_relative(&self.image, &self.inner.graph, &cfg, &self.params).py()?;
        Ok(PyReconstruction {
            inner: rec,
            image: self.image.clone(),
        })
    }

    /// Decide every ambiguity class from known depths.
    fn resolve(&self, anchors: Vec<PyAnchor>) -> PyResult<PyResolution> {
        let anchors: Vec<BCAnchor> = anchors.into_iter().map(|a| a.0).collect();
        let anchored = pipeline::resolve(&self.inner, &anchors, &self.image, &self.params).py()?;
        Ok(PyResolution {
            inner: anchored,
            image: self.image.clone(),
            params: self.params,
        })
    }
}

#[pyclass(name = "Resolution", module = "sfs", frozen)]
struct PyResolution {
    inner: Anchored,
    image: IrradianceImage,
    params: pipeline::Params,
}

#[pymethods]
impl PyResolution {
    #[getter]
    fn signs(&self) -> Vec<i8> {
        self.inner.resolution.configuration.signs.clone()
    }

    /// Chosen candidate (0 or 1) per ambiguity class.
    #[getter]
    fn choices(&self) -> Vec<usize> {
        self.inner.resolution.class_choices()
    }

    /// Absolute depth per singular point, `None` where no anchor reaches.
    #[getter]
    fn depths(&self) -> Vec<Option<f64>> {
        let n = self.inner.graph.vertices.iter().filter(|v| !v.is_anchor()).count();
        self.inner.resolution.z[..n].to_vec()
    }

    fn reconstruct(&self) -> PyResult<PyReconstruction> {
        let rec = pipeline::reconstruct_anchored(&self.image, &self.inner, &self.params).py()?;
        Ok(PyReconstruction {
            inner: rec,
            image: self.image.clone(),
        })
    }
}

#[pyclass(name = "Reconstruction", module = "sfs", frozen)]
struct PyReconstruction {
    inner: ReconstructionResult,
    image: IrradianceImage,
}

#[pymethods]
impl PyReconstruction {
    #[getter]
    fn surface(&self) -> PyHeightField {
        PyHeightField(self.inner.surface.clone())
    }

    /// Pixels of the sources that shaped the surface.
    #[getter]
    fn sources(&self) -> Vec<(usize, usize)> {
        self.inner.sources.iter().filter(|s| s.used).map(|s| s.pixel).collect()
    }

    /// Render residual and, given the true surface, depth errors.
    #[pyo3(signature = (truth = None))]
    fn metrics<'py>(&self, py: Python<'py>, truth: Option<&PyHeightField>) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        let m = pipeline::metrics(&self.inner, &self.image, truth.map(|t| &t.0)).py()?;
        let d = pyo3::types::PyDict::new(py);
        d.set_item("render_residual", m.render_residual)?;
        d.set_item("depth_rmse", m.depth_rmse)?;
        d.set_item("depth_range", m.depth_range)?;
        d.set_item("relative_rmse", m.relative_rmse)?;
        d.set_item("sources", m.sources)?;
        d.set_item("unreached", m.unreached)?;
        Ok(d)
    }
}

#[pymodule]
fn sfs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add_class::<PyGrid>()?;
    m.add_class::<PyHeightField>()?;
    m.add_class::<PyImage>()?;
    m.add_class::<PyAnchor>()?;
    m.add_class::<PyScene>()?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyAnalysis>()?;
    m.add_class::<PyResolution>()?;
    m.add_class::<PyReconstruction>()?;
    m.add("ShadingError", py.get_type::<ShadingError>())?;
    m.add("DegenerateImageError", py.get_type::<DegenerateImageError>())?;
    m.add("InfeasibleError", py.get_type::<InfeasibleError>())?;
    m.add("UnresolvedAmbiguityError", py.get_type::<UnresolvedAmbiguityError>())?;
    Ok(())
}
