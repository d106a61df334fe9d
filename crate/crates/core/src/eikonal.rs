//! Fast marching for `|grad D| = f` and shortest-path backtracing.
//!
//! The slowness `f` is the surface slope recovered from brightness, so the
//! distance between two pixels along a path on which depth changes
//! monotonically equals their depth difference.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SfsError};
use crate::forward_model::IrradianceImage;
use crate::grid::{Field, GridSpec, Pixel};

/// Pixels within this fraction of `e_max` are treated as singular.
pub const DEFAULT_EPS_SING: f64 = 0.02;

/// Default clamp for the slowness used in distances: about half an 8-bit
/// grey level. Clamping at `eps_sing` instead drops the slope inside each
/// singular blob and shortens bump edges by ~6%.
pub const DEFAULT_EPS_FLAT: f64 = 0.002;

/// How brightness is turned into slowness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlownessModel {
    /// `sqrt(e_max^2 / e^2 - 1)`, the exact slope implied by the renderer.
    #[default]
    Eikonal,
    /// `sqrt(1 / e^2)`, kept for comparison runs.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlownessField {
    pub grid: GridSpec,
    pub f: Field<f64>,
}

impl SlownessField {
    pub fn new(grid: GridSpec, f: Field<f64>) -> Result<Self> {
        grid.validate()?;
        f.check_shape(&grid)?;
        if let Some((p, v)) = f.indexed().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(SfsError::InvalidInput(format!(
                "slowness {v} at {p:?} must be finite and non-negative"
            )));
        }
        Ok(SlownessField { grid, f })
    }

    pub fn uniform(grid: GridSpec, value: f64) -> Result<Self> {
        Self::new(grid, Field::filled(grid.height, grid.width, value))
    }
}

pub fn slowness_from_image(img: &IrradianceImage, eps_sing: f64) -> Result<SlownessField> {
    slowness_with_model(img, eps_sing, SlownessModel::Eikonal)
}

pub fn slowness_with_model(
    img: &IrradianceImage,
    eps_sing: f64,
    model: SlownessModel,
) -> Result<SlownessField> {
    if !(eps_sing > 0.0 && eps_sing < 1.0) {
        return Err(SfsError::InvalidInput(format!(
            "eps_sing must lie in (0, 1), got {eps_sing}"
        )));
    }
    let e_max = img.e_max;
    let flat = (1.0 - eps_sing) * e_max;
    let mut f = Field::filled(img.grid.height, img.grid.width, 0.0);
    for ((row, col), &e) in img.e.indexed() {
        if e <= 0.0 {
            return Err(SfsError::NonPositiveBrightness { row, col });
        }
        if e >= flat {
            continue;
        }
        f[(row, col)] = match model {
            SlownessModel::Eikonal => ((e_max * e_max) / (e * e) - 1.0).max(0.0).sqrt(),
            SlownessModel::Literal => 1.0 / e,
        };
    }
    SlownessField::new(img.grid, f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub grid: GridSpec,
    pub source: Pixel,
    /// Accumulated slowness along the cheapest path; `+inf` where unreached.
    pub d: Field<f64>,
    /// Rank at which each pixel was frozen by the marcher; `u32::MAX` if never.
    pub order: Field<u32>,
    /// Pixels within this many pixel widths of the source were seeded with
    /// straight-line travel times.
    pub seed_radius: f64,
}

impl DistanceField {
    pub fn at(&self, p: Pixel) -> f64 {
        self.d[p]
    }

    pub fn is_reached(&self, p: Pixel) -> bool {
        self.d[p].is_finite()
    }
}

#[derive(Debug, Clone, Copy)]
struct Trial {
    dist: f64,
    seq: u64,
    index: usize,
}

impl PartialEq for Trial {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Trial {}

impl PartialOrd for Trial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Trial {
    // Reversed so that `BinaryHeap` pops the smallest distance, then the
    // earliest insertion.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Radius, in pixels, of the disc around the source that is seeded with
/// straight-line travel times before marching starts: 1/32 of the smaller grid
/// side, at least 2 pixels. Scaling with the grid keeps the march convergent
/// while removing most of the point-source error.
pub fn seed_radius(grid: &GridSpec) -> f64 {
    ((grid.width.min(grid.height) - 1) as f64 / 32.0).max(2.0)
}

/// Upwind fast marching on the 4-neighbour stencil. Each axis uses a
/// second-order one-sided difference when two frozen values line up behind
/// the pixel, else the first-order one.
pub fn fmm_distance(s: &SlownessField, source: Pixel) -> Result<DistanceField> {
    fmm_distance_seeded(s, source, seed_radius(&s.grid))
}

/// [`fmm_distance`] with an explicit seeding radius; `0` seeds only the source.
pub fn fmm_distance_seeded(s: &SlownessField, source: Pixel, ball: f64) -> Result<DistanceField> {
    let grid = s.grid;
    if !grid.contains(source) {
        return Err(SfsError::InvalidInput(format!(
            "source {source:?} outside {}x{} grid",
            grid.height, grid.width
        )));
    }
    let n = grid.len();
    let (hx, hy) = (grid.hx(), grid.hy());
    let mut d = vec![f64::INFINITY; n];
    let mut frozen = vec![false; n];
    let mut order = vec![u32::MAX; n];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut rank = 0u32;
    let mut last = f64::NEG_INFINITY;

    let start = grid.index(source);
    d[start] = 0.0;
    heap.push(Trial {
        dist: 0.0,
        seq,
        index: start,
    });
    let reach = ball.max(0.0).floor() as usize;
    let h = hx.min(hy);
    for row in source.0.saturating_sub(reach)..=(source.0 + reach).min(grid.height - 1) {
        for col in source.1.saturating_sub(reach)..=(source.1 + reach).min(grid.width - 1) {
            let p = (row, col);
            let r = grid.distance(p, source);
            if p == source || r > ball * h {
                continue;
            }
            // Trapezoid rule along the straight segment.
            let t = r * 0.5 * (s.f[source] + s.f[p]);
            let i = grid.index(p);
            d[i] = t;
            seq += 1;
            heap.push(Trial {
                dist: t,
                seq,
                index: i,
            });
        }
    }

    while let Some(Trial { dist, index, .. }) = heap.pop() {
        if frozen[index] || dist > d[index] {
            continue;
        }
        frozen[index] = true;
        order[index] = rank;
        rank += 1;
        debug_assert!(dist >= last - 1e-12 * last.abs().max(1.0), "wavefront went backwards: {dist} after {last}");
        last = dist;

        for nb in grid.neighbors4(grid.pixel(index)) {
            let ni = grid.index(nb);
            if frozen[ni] {
                continue;
            }
            // The second-order stencil can dip just below the front; holding
            // it there keeps acceptance in distance order.
            let t = upwind_update(&grid, &d, &frozen, nb, s.f[nb], hx, hy).max(dist);
            if t < d[ni] {
                d[ni] = t;
                seq += 1;
                heap.push(Trial {
                    dist: t,
                    seq,
                    index: ni,
                });
            }
        }
    }

    Ok(DistanceField {
        grid,
        source,
        d: Field::from_vec(grid.height, grid.width, d)?,
        order: Field::from_vec(grid.height, grid.width, order)?,
        seed_radius: ball.max(0.0),
    })
}

/// Runs [`fmm_distance`] from several sources in parallel.
pub fn fmm_distances(s: &SlownessField, sources: &[Pixel]) -> Result<Vec<DistanceField>> {
    sources.par_iter().map(|&p| fmm_distance(s, p)).collect()
}

fn upwind_update(
    grid: &GridSpec,
    d: &[f64],
    frozen: &[bool],
    (row, col): Pixel,
    f: f64,
    hx: f64,
    hy: f64,
) -> f64 {
    let known = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r as usize >= grid.height || c as usize >= grid.width {
            return f64::INFINITY;
        }
        let i = grid.index((r as usize, c as usize));
        if frozen[i] {
            d[i]
        } else {
            f64::INFINITY
        }
    };
    let (r, c) = (row as isize, col as isize);
    // Per axis: (k, v, a) with the difference read as k * (t - v); `a` is the
    // nearest frozen value, which the update must not undercut.
    let axis = |dr: isize, dc: isize, h: f64| -> Option<(f64, f64, f64)> {
        let fwd = known(r + dr, c + dc);
        let back = known(r - dr, c - dc);
        let (a, step) = if fwd <= back { (fwd, 1) } else { (back, -1) };
        if !a.is_finite() {
            return None;
        }
        let a2 = known(r + 2 * step * dr, c + 2 * step * dc);
        if a2 <= a {
            Some((1.5 / h, (4.0 * a - a2) / 3.0, a))
        } else {
            Some((1.0 / h, a, a))
        }
    };
    let (Some(x), Some(y)) = (axis(0, 1, hx), axis(1, 0, hy)) else {
        return [axis(0, 1, hx), axis(1, 0, hy)]
            .into_iter()
            .flatten()
            .map(|(k, v, _)| v + f / k)
            .fold(f64::INFINITY, f64::min);
    };
    let one_sided = (x.1 + f / x.0).min(y.1 + f / y.0);
    let terms = [x, y];
    // sum k^2 (t - v)^2 = f^2
    let (mut qa, mut qb, mut qc) = (0.0, 0.0, -f * f);
    for &(k, v, _) in &terms {
        qa += k * k;
        qb -= 2.0 * k * k * v;
        qc += k * k * v * v;
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return one_sided;
    }
    let t = (-qb + disc.sqrt()) / (2.0 * qa);
    if terms.iter().all(|&(_, _, a)| t >= a) {
        t.min(one_sided)
    } else {
        one_sided
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPath {
    /// Source first, target last.
    pub pixels: Vec<Pixel>,
    /// Distance-field value at each pixel; non-decreasing.
    pub cumulative: Vec<f64>,
}

impl GridPath {
    pub fn source(&self) -> Pixel {
        self.pixels[0]
    }

    pub fn target(&self) -> Pixel {
        *self.pixels.last().expect("paths are never empty")
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("paths are never empty")
    }

    pub fn edges(&self) -> usize {
        self.pixels.len() - 1
    }

    pub fn interior(&self) -> &[Pixel] {
        if self.pixels.len() <= 2 {
            &[]
        } else {
            &self.pixels[1..self.pixels.len() - 1]
        }
    }
}

/// Walks downhill on `d` from `target` to the source over 8-neighbours.
///
/// Each step takes the steepest strict descent (ties resolved in E, N, W, S,
/// NE, NW, SW, SE order). Inside zero-slowness plateaus, where no neighbour is
/// strictly lower, the walk follows the marcher's freeze order instead. Once
/// inside the seeded disc the walk finishes on the digital straight line to
/// the source, matching how that disc was filled.
pub fn trace_path(d: &DistanceField, target: Pixel) -> Result<GridPath> {
    let grid = d.grid;
    if !grid.contains(target) {
        return Err(SfsError::InvalidInput(format!("target {target:?} outside grid")));
    }
    if !d.is_reached(target) {
        return Err(SfsError::Unreachable {
            row: target.0,
            col: target.1,
        });
    }
    let mut pixels = vec![target];
    let mut cur = target;
    let seeded = |p: Pixel| {
        let (dr, dc) = (p.0.abs_diff(d.source.0) as f64, p.1.abs_diff(d.source.1) as f64);
        dr.hypot(dc) <= d.seed_radius
    };
    while cur != d.source {
        if seeded(cur) {
            pixels.extend(digital_line(cur, d.source).into_iter().skip(1));
            break;
        }
        let (dc, oc) = (d.d[cur], d.order[cur]);
        let mut steepest: Option<(Pixel, f64)> = None;
        let mut earliest: Option<(Pixel, u32)> = None;
        for nb in grid.neighbors8(cur) {
            let (dn, on) = (d.d[nb], d.order[nb]);
            if !dn.is_finite() || (dn, on) >= (dc, oc) {
                continue;
            }
            if dn < dc {
                let slope = (dc - dn) / grid.distance(cur, nb);
                if steepest.is_none_or(|(_, s)| slope > s) {
                    steepest = Some((nb, slope));
                }
            } else if earliest.is_none_or(|(_, o)| on < o) {
                earliest = Some((nb, on));
            }
        }
        cur = match (steepest, earliest) {
            (Some((p, _)), _) | (None, Some((p, _))) => p,
            (None, None) => {
                return Err(SfsError::DescentStall {
                    row: cur.0,
                    col: cur.1,
                })
            }
        };
        pixels.push(cur);
    }
    pixels.reverse();
    let mut cumulative: Vec<f64> = pixels.iter().map(|&p| d.d[p]).collect();
    // Seeded values need not be monotone along the final straight run.
    for k in (0..cumulative.len().saturating_sub(1)).rev() {
        cumulative[k] = cumulative[k].min(cumulative[k + 1]);
    }
    Ok(GridPath { pixels, cumulative })
}

/// 8-connected Bresenham line from `a` to `b`, both included.
fn digital_line(a: Pixel, b: Pixel) -> Vec<Pixel> {
    let (mut r, mut c) = (a.0 as isize, a.1 as isize);
    let (r1, c1) = (b.0 as isize, b.1 as isize);
    let (dr, dc) = ((r1 - r).abs(), (c1 - c).abs());
    let (sr, sc) = ((r1 - r).signum(), (c1 - c).signum());
    let mut err = dc - dr;
    let mut out = vec![a];
    while (r, c) != (r1, c1) {
        let e2 = 2 * err;
        if e2 > -dr {
            err -= dr;
            c += sc;
        }
        if e2 < dc {
            err += dc;
            r += sr;
        }
        out.push((r as usize, c as usize));
    }
    out
}

/// Whether a path can carry a depth difference between its endpoints.
///
/// Depth along a shortest path only turns around at critical points, which
/// are the bright pixels. The path is rejected if any interior pixel is
/// within `eps_sing` of `e_max`, or carries a singular label, unless that
/// pixel belongs to the singular region of one of the path's own endpoints.
pub fn is_monotone(
    path: &GridPath,
    img: &IrradianceImage,
    labels: &Field<Option<usize>>,
    eps_sing: f64,
) -> bool {
    let threshold = (1.0 - eps_sing) * img.e_max;
    let own = [labels[path.source()], labels[path.target()]];
    path.interior().iter().all(|&p| {
        let bright = img.e[p] >= threshold;
        match labels[p] {
            Some(id) => own.contains(&Some(id)),
            None => !bright,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward_model::{make_surface, render_lambertian, HeightField, SurfaceKind};
    use approx::assert_abs_diff_eq;

    fn uniform_errors(n: usize, min_radius_px: f64) -> (f64, f64) {
        let g = GridSpec::new(n, n, 0.0, 1.0, 0.0, 1.0).unwrap();
        let s = SlownessField::uniform(g, 1.0).unwrap();
        let c = n / 2;
        let d = fmm_distance(&s, (c, c)).unwrap();
        let (mut rel, mut abs) = (0.0f64, 0.0f64);
        for (p, &v) in d.d.indexed() {
            let exact = g.distance(p, (c, c));
            abs = abs.max((v - exact).abs());
            if exact >= min_radius_px * g.hx() {
                rel = rel.max((v - exact).abs() / exact);
            }
        }
        (rel, abs)
    }

    #[test]
    fn uniform_slowness_approximates_euclidean() {
        let (rel, _) = uniform_errors(257, 20.0);
        assert!(rel <= 0.02, "max relative error {rel}");
    }

    #[test]
    fn refinement_reduces_error() {
        let (_, coarse) = uniform_errors(65, 0.0);
        let (_, fine) = uniform_errors(129, 0.0);
        assert!(coarse / fine >= 1.7, "coarse {coarse} fine {fine}");
    }

    #[test]
    fn zero_slowness_gives_zero_distance() {
        let g = GridSpec::unit(9, 7).unwrap();
        let d = fmm_distance(&SlownessField::uniform(g, 0.0).unwrap(), (3, 4)).unwrap();
        assert!(d.d.iter().all(|&v| v == 0.0));
        // Freeze order still gives the walk a way home.
        let path = trace_path(&d, (0, 0)).unwrap();
        assert_eq!(path.source(), (3, 4));
        assert_eq!(path.target(), (0, 0));
    }

    #[test]
    fn source_outside_grid_is_rejected() {
        let g = GridSpec::unit(5, 5).unwrap();
        let s = SlownessField::uniform(g, 1.0).unwrap();
        assert!(fmm_distance(&s, (5, 0)).is_err());
    }

    #[test]
    fn slowness_examples() {
        let g = GridSpec::unit(3, 3).unwrap();
        let img = IrradianceImage::new(g, Field::filled(3, 3, 0.8), 0.8).unwrap();
        let s = slowness_from_image(&img, 0.02).unwrap();
        assert!(s.f.iter().all(|&v| v == 0.0));

        let mut e = Field::filled(3, 3, 0.8);
        e[(1, 1)] = 0.4;
        let img = IrradianceImage::new(g, e, 0.8).unwrap();
        let s = slowness_from_image(&img, 0.02).unwrap();
        assert_abs_diff_eq!(s.f[(1, 1)], 3f64.sqrt(), epsilon = 1e-12);
        let lit = slowness_with_model(&img, 0.02, SlownessModel::Literal).unwrap();
        assert_abs_diff_eq!(lit.f[(1, 1)], 2.5, epsilon = 1e-12);

        let mut e = Field::filled(3, 3, 0.8);
        e[(0, 2)] = 0.0;
        let img = IrradianceImage::new(g, e, 0.8).unwrap();
        assert!(matches!(
            slowness_from_image(&img, 0.02),
            Err(SfsError::NonPositiveBrightness { row: 0, col: 2 })
        ));
        assert!(slowness_from_image(&img, 0.0).is_err());
    }

    #[test]
    fn slowness_tracks_slope_of_rendered_bump() {
        let g = GridSpec::square(128, 1.0).unwrap();
        let h = make_surface(SurfaceKind::Bump, &[1.0], g).unwrap();
        let img = render_lambertian(&h, 1.0).unwrap();
        let s = slowness_from_image(&img, 0.02).unwrap();
        let hx = g.hx();
        for (p, &f) in s.f.indexed() {
            if g.on_border(p) || f == 0.0 {
                continue;
            }
            let (x, y) = g.world(p);
            let e = (-x * x - y * y).exp();
            let slope = ((1.0 - 2.0 * x * x) * e).hypot(-2.0 * x * y * e);
            // Central differences are accurate to h^2 * max|u'''| / 6.
            assert!((f - slope).abs() < hx * hx, "at {p:?}: {f} vs {slope}");
        }
    }

    #[test]
    fn unseeded_march_is_still_bounded() {
        let g = GridSpec::unit(41, 41).unwrap();
        let s = SlownessField::uniform(g, 1.0).unwrap();
        let d = fmm_distance_seeded(&s, (20, 20), 0.0).unwrap();
        for (p, &v) in d.d.indexed() {
            let exact = g.distance(p, (20, 20));
            // First-order marching never undershoots and is exact on axes.
            assert!(v >= exact - 1e-12);
            if p.0 == 20 || p.1 == 20 {
                assert_abs_diff_eq!(v, exact, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn digital_lines_are_8_connected() {
        let line = digital_line((5, 0), (0, 2));
        assert_eq!(line.first(), Some(&(5, 0)));
        assert_eq!(line.last(), Some(&(0, 2)));
        assert_eq!(line.len(), 6);
        for w in line.windows(2) {
            assert!(w[0].0.abs_diff(w[1].0) <= 1 && w[0].1.abs_diff(w[1].1) <= 1);
        }
    }

    #[test]
    fn trace_to_source_is_trivial() {
        let g = GridSpec::unit(5, 5).unwrap();
        let d = fmm_distance(&SlownessField::uniform(g, 1.0).unwrap(), (2, 2)).unwrap();
        let path = trace_path(&d, (2, 2)).unwrap();
        assert_eq!(path.pixels, vec![(2, 2)]);
        assert_eq!(path.length(), 0.0);
        assert!(path.interior().is_empty());
    }

    #[test]
    fn straight_east_path_stays_on_row() {
        let g = GridSpec::unit(31, 21).unwrap();
        let d = fmm_distance(&SlownessField::uniform(g, 1.0).unwrap(), (10, 5)).unwrap();
        let path = trace_path(&d, (10, 15)).unwrap();
        let expected: Vec<Pixel> = (5..=15).map(|c| (10, c)).collect();
        assert_eq!(path.pixels, expected);
        assert_abs_diff_eq!(path.length(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn unreachable_and_stalled_traces() {
        let g = GridSpec::unit(5, 5).unwrap();
        let mut d = fmm_distance(&SlownessField::uniform(g, 1.0).unwrap(), (0, 0)).unwrap();
        d.d[(4, 4)] = f64::INFINITY;
        assert!(matches!(trace_path(&d, (4, 4)), Err(SfsError::Unreachable { .. })));
        // A pit in the field with nothing lower around it.
        let mut d = fmm_distance(&SlownessField::uniform(g, 1.0).unwrap(), (0, 0)).unwrap();
        d.d[(2, 2)] = -1.0;
        d.order[(2, 2)] = 0;
        assert!(matches!(trace_path(&d, (2, 2)), Err(SfsError::DescentStall { .. })));
    }

    #[test]
    fn path_invariants_on_bump() {
        let g = GridSpec::square(96, 1.0).unwrap();
        let h = make_surface(SurfaceKind::Bump, &[1.0], g).unwrap();
        let img = render_lambertian(&h, 1.0).unwrap();
        let s = slowness_from_image(&img, 0.02).unwrap();
        let d = fmm_distance(&s, (10, 12)).unwrap();
        let path = trace_path(&d, (80, 70)).unwrap();
        assert_eq!(path.source(), (10, 12));
        assert_eq!(path.target(), (80, 70));
        for w in path.pixels.windows(2) {
            let (a, b) = (w[0], w[1]);
            assert!(a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1 && a != b);
        }
        assert!(path.cumulative.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(path.length(), d.at((80, 70)));
    }

    #[test]
    fn short_paths_are_monotone() {
        let g = GridSpec::unit(5, 5).unwrap();
        let h = HeightField::constant(g, 0.0).unwrap();
        let img = render_lambertian(&h, 1.0).unwrap();
        let labels = Field::filled(5, 5, None);
        let one = GridPath {
            pixels: vec![(0, 0)],
            cumulative: vec![0.0],
        };
        let two = GridPath {
            pixels: vec![(0, 0), (0, 1)],
            cumulative: vec![0.0, 0.0],
        };
        assert!(is_monotone(&one, &img, &labels, 0.02));
        assert!(is_monotone(&two, &img, &labels, 0.02));
        let three = GridPath {
            pixels: vec![(0, 0), (0, 1), (0, 2)],
            cumulative: vec![0.0; 3],
        };
        // Flat image: the middle pixel is bright and unlabelled.
        assert!(!is_monotone(&three, &img, &labels, 0.02));
    }
}
