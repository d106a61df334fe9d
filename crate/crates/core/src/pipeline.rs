//! End-to-end runs: image to graph to configuration to surface.

use serde::{Deserialize, Serialize};

use crate::anchors::{augment_graph, resolve_ambiguity, BCAnchor, Resolution};
use crate::eikonal::{DEFAULT_EPS_FLAT, DEFAULT_EPS_SING};
use crate::error::{Result, SfsError};
use crate::forward_model::{HeightField, IrradianceImage};
use crate::graph::{
    build_graph, decompose, default_cycle_tol, propagate_heights, ConfigGraph, Configuration,
    Decomposition, HeightAssignment,
};
use crate::maxcut::{solve_configuration, SolverReport};
use crate::reconstruct::{depth_rmse, reconstruct_surface, render_residual, ReconstructionResult};
use crate::singular::{detect_singular_regions, SingularRegions, DEFAULT_MIN_SEP};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub eps_sing: f64,
    pub eps_flat: f64,
    pub min_sep: f64,
    /// Defaults to 10% of the mean edge weight.
    pub cycle_tol: Option<f64>,
    /// Defaults to 25% of each class's mean edge weight.
    pub accept_tol: Option<f64>,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            eps_sing: DEFAULT_EPS_SING,
            eps_flat: DEFAULT_EPS_FLAT,
            min_sep: DEFAULT_MIN_SEP,
            cycle_tol: None,
            accept_tol: None,
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(SfsError::InvalidInput(format!("{name} must be positive, got {v}")))
            }
        };
        positive("eps_sing", self.eps_sing)?;
        positive("eps_flat", self.eps_flat)?;
        positive("min_sep", self.min_sep)?;
        if let Some(t) = self.cycle_tol {
            positive("cycle_tol", t)?;
        }
        if let Some(t) = self.accept_tol {
            positive("accept_tol", t)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub regions: SingularRegions,
    pub graph: ConfigGraph,
    pub decomposition: Decomposition,
    pub report: SolverReport,
}

pub fn detect(img: &IrradianceImage, params: &Params) -> Result<SingularRegions> {
    params.validate()?;
    detect_singular_regions(img, params.eps_sing, params.min_sep)
}

pub fn graph(img: &IrradianceImage, params: &Params) -> Result<(SingularRegions, ConfigGraph)> {
    let regions = detect(img, params)?;
    let g = build_graph(img, &regions, params.eps_sing, params.eps_flat)?;
    Ok((regions, g))
}

/// Detection, graph, decomposition and the exact solve.
pub fn analyze(img: &IrradianceImage, params: &Params) -> Result<Analysis> {
    let (regions, graph) = graph(img, params)?;
    let decomposition = decompose(&graph);
    let tol = params.cycle_tol.unwrap_or_else(|| default_cycle_tol(&graph));
    let report = solve_configuration(&graph, &decomposition, tol)?;
    Ok(Analysis {
        regions,
        graph,
        decomposition,
        report,
    })
}

/// Heights with each component's lowest vertex at depth 0.
pub fn relative_heights(g: &ConfigGraph, cfg: &Configuration) -> Result<HeightAssignment> {
    let mut z = vec![None; g.n_vertices()];
    let mut residual = 0.0f64;
    for comp in g.components() {
        let h = propagate_heights(g, cfg, comp[0], 0.0)?;
        residual = residual.max(h.residual);
        for v in comp {
            z[v] = h.z[v];
        }
    }
    Ok(HeightAssignment { root: 0, z, residual })
}

#[derive(Debug, Clone)]
pub struct Anchored {
    pub graph: ConfigGraph,
    pub resolution: Resolution,
}

pub fn resolve(
    analysis: &Analysis,
    anchors: &[BCAnchor],
    img: &IrradianceImage,
    params: &Params,
) -> Result<Anchored> {
    let graph = augment_graph(
        &analysis.graph,
        &analysis.decomposition,
        anchors,
        img,
        params.eps_flat,
    )?;
    let resolution = resolve_ambiguity(&graph, &analysis.report, params.accept_tol)?;
    Ok(Anchored { graph, resolution })
}

/// Surface for one configuration without absolute depths.
pub fn reconstruct_relative(
    img: &IrradianceImage,
    g: &ConfigGraph,
    cfg: &Configuration,
    params: &Params,
) -> Result<ReconstructionResult> {
    let heights = relative_heights(g, cfg)?;
    reconstruct_surface(img, g, &heights, params.eps_flat)
}

pub fn reconstruct_anchored(
    img: &IrradianceImage,
    anchored: &Anchored,
    params: &Params,
) -> Result<ReconstructionResult> {
    reconstruct_surface(img, &anchored.graph, &anchored.resolution.heights(), params.eps_flat)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub render_residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_range: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_rmse: Option<f64>,
    pub sources: usize,
    pub unreached: usize,
}

pub fn metrics(
    result: &ReconstructionResult,
    img: &IrradianceImage,
    truth: Option<&HeightField>,
) -> Result<Metrics> {
    use crate::io::round_sig;
    let residual = render_residual(result, img)?;
    let (rmse, range) = match truth {
        Some(t) => (Some(depth_rmse(&result.surface, t)?), Some(t.depth_range())),
        None => (None, None),
    };
    Ok(Metrics {
        render_residual: round_sig(residual, 6),
        depth_rmse: rmse.map(|v| round_sig(v, 6)),
        depth_range: range.map(|v| round_sig(v, 6)),
        relative_rmse: rmse.zip(range).map(|(r, d)| round_sig(r / d, 6)),
        sources: result.sources.iter().filter(|s| s.used).count(),
        unreached: result.unreached,
    })
}
