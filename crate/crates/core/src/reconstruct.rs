//! Dense surfaces from vertex depths, and the metrics used to judge them.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eikonal::{fmm_distances, slowness_from_image, DistanceField};
use crate::error::{Result, SfsError};
use crate::forward_model::{render_lambertian, HeightField, IrradianceImage};
use crate::graph::{ConfigGraph, HeightAssignment};
use crate::grid::{Field, Pixel};
use crate::io::{fmt_g, write_text};

/// Pixels this close to the image edge are left out of residuals.
pub const RESIDUAL_BORDER: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub vertex: usize,
    pub pixel: Pixel,
    pub z: f64,
    /// False when another source already lies above this one at its pixel.
    pub used: bool,
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub surface: HeightField,
    pub sources: Vec<SourceInfo>,
    pub fields: Vec<DistanceField>,
    /// Sources were depth minima and the surface was built from below.
    pub from_minima: bool,
    /// Pixels no source reached, filled from the nearest source.
    pub unreached: usize,
}

fn vertex_depth(g: &ConfigGraph, heights: &HeightAssignment, v: usize) -> Option<f64> {
    heights.at(v).or_else(|| g.vertices[v].anchor_depth())
}

/// `u = max_i (z_i - D_i)` over the vertices that are depth maxima among
/// their non-anchor neighbours. Without any maximum the construction runs on the
/// minima from below: `u = min_i (z_i + D_i)`.
pub fn reconstruct_surface(
    img: &IrradianceImage,
    g: &ConfigGraph,
    heights: &HeightAssignment,
    eps_flat: f64,
) -> Result<ReconstructionResult> {
    let depths: Vec<Option<f64>> = (0..g.n_vertices()).map(|v| vertex_depth(g, heights, v)).collect();
    // Anchors are observations, not singular points: they neither act as
    // sources nor stop a neighbouring vertex from being one.
    let is_anchor = |v: usize| g.vertices[v].is_anchor();
    let extremal = |v: usize, above: bool| -> bool {
        if is_anchor(v) {
            return false;
        }
        let Some(z) = depths[v] else { return false };
        g.neighbors(v).iter().filter(|&&(u, _)| !is_anchor(u)).all(|&(u, _)| match depths[u] {
            Some(zu) => {
                if above {
                    z >= zu
                } else {
                    z <= zu
                }
            }
            None => true,
        })
    };
    let mut picked: Vec<usize> = (0..g.n_vertices()).filter(|&v| extremal(v, true)).collect();
    let from_minima = picked.is_empty();
    if from_minima {
        picked = (0..g.n_vertices()).filter(|&v| extremal(v, false)).collect();
    }
    if picked.is_empty() {
        return Err(SfsError::NoMaximumSource);
    }

    let slowness = slowness_from_image(img, eps_flat)?;
    let pixels: Vec<Pixel> = picked.iter().map(|&v| g.vertices[v].pixel).collect();
    let fields = fmm_distances(&slowness, &pixels)?;
    let sign = if from_minima { -1.0 } else { 1.0 };

    let grid = img.grid;
    let mut unreached = 0;
    let z = Field::from_fn(grid.height, grid.width, |r, c| {
        let mut best = f64::NEG_INFINITY;
        for (&v, field) in picked.iter().zip(&fields) {
            let d = field.d[(r, c)];
            if d.is_finite() {
                best = best.max(sign * depths[v].expect("picked vertices have depth") - d);
            }
        }
        if best.is_finite() {
            sign * best
        } else {
            unreached += 1;
            let nearest = picked
                .iter()
                .min_by(|&&a, &&b| {
                    let da = grid.distance((r, c), g.vertices[a].pixel);
                    let db = grid.distance((r, c), g.vertices[b].pixel);
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .expect("at least one source");
            depths[*nearest].expect("picked vertices have depth")
        }
    });
    let surface = HeightField::new(grid, z)?;
    let sources = picked
        .iter()
        .map(|&v| {
            let zv = depths[v].expect("picked vertices have depth");
            let pixel = g.vertices[v].pixel;
            SourceInfo {
                vertex: v,
                pixel,
                z: zv,
                used: surface.at(pixel) == zv,
            }
        })
        .collect();
    Ok(ReconstructionResult {
        surface,
        sources,
        fields,
        from_minima,
        unreached,
    })
}

/// RMS of `render(surface) - img` away from the image border.
pub fn render_residual(result: &ReconstructionResult, img: &IrradianceImage) -> Result<f64> {
    surface_render_residual(&result.surface, img)
}

pub fn surface_render_residual(surface: &HeightField, img: &IrradianceImage) -> Result<f64> {
    img.e.check_shape(&surface.grid)?;
    let rendered = render_lambertian(surface, img.e_max)?;
    let grid = img.grid;
    let b = RESIDUAL_BORDER;
    let (mut sum, mut count) = (0.0, 0usize);
    for r in b..grid.height.saturating_sub(b) {
        for c in b..grid.width.saturating_sub(b) {
            let diff = rendered.e[(r, c)] - img.e[(r, c)];
            sum += diff * diff;
            count += 1;
        }
    }
    if count == 0 {
        return Err(SfsError::InvalidInput(format!(
            "a {}x{} image has no pixels inside a {b}-pixel border",
            grid.height, grid.width
        )));
    }
    Ok((sum / count as f64).sqrt())
}

/// RMS difference after removing the mean offset.
pub fn depth_rmse(a: &HeightField, b: &HeightField) -> Result<f64> {
    b.z.check_shape(&a.grid)?;
    let n = a.z.as_slice().len() as f64;
    let mean = a.z.iter().zip(b.z.iter()).map(|(x, y)| x - y).sum::<f64>() / n;
    let sse: f64 = a
        .z
        .iter()
        .zip(b.z.iter())
        .map(|(x, y)| (x - y - mean).powi(2))
        .sum();
    Ok((sse / n).sqrt())
}

/// Wavefront OBJ text for a height field sampled at `xs` by `ys`.
pub fn encode_obj_samples(xs: &[f64], ys: &[f64], z: &Field<f64>) -> Result<String> {
    if z.rows() != ys.len() || z.cols() != xs.len() || xs.len() < 2 || ys.len() < 2 {
        return Err(SfsError::DimensionMismatch {
            expected_rows: ys.len(),
            expected_cols: xs.len(),
            rows: z.rows(),
            cols: z.cols(),
        });
    }
    let (h, w) = (ys.len(), xs.len());
    let mut out = String::new();
    for (r, &y) in ys.iter().enumerate() {
        for (c, &x) in xs.iter().enumerate() {
            let _ = writeln!(out, "v {} {} {}", fmt_g(x, 6), fmt_g(y, 6), fmt_g(z[(r, c)], 6));
        }
    }
    let id = |r: usize, c: usize| r * w + c + 1;
    for r in 0..h - 1 {
        for c in 0..w - 1 {
            let _ = writeln!(out, "f {} {} {}", id(r, c), id(r, c + 1), id(r + 1, c + 1));
            let _ = writeln!(out, "f {} {} {}", id(r, c), id(r + 1, c + 1), id(r + 1, c));
        }
    }
    Ok(out)
}

pub fn encode_obj(h: &HeightField) -> String {
    let xs: Vec<f64> = (0..h.grid.width).map(|c| h.grid.x(c)).collect();
    let ys: Vec<f64> = (0..h.grid.height).map(|r| h.grid.y(r)).collect();
    encode_obj_samples(&xs, &ys, &h.z).expect("height fields match their grid")
}

pub fn export_obj(h: &HeightField, path: impl AsRef<Path>) -> Result<()> {
    write_text(path, &encode_obj(h))
}
