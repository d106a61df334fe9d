//! Analytic test surfaces and the standard grids and anchor sites they are
//! rendered with.
//!
//! Every standard window stops where the surface still climbs inward, so the
//! whole image is reachable by descending from some interior maximum.

use std::f64::consts::PI;

use crate::anchors::BCAnchor;
use crate::error::Result;
use crate::forward_model::{make_surface, render_lambertian, HeightField, IrradianceImage, SurfaceKind};
use crate::grid::{GridSpec, Pixel};

/// `x * exp(-x^2 - y^2)`: one maximum at `(1/sqrt 2, 0)`, one minimum at
/// `(-1/sqrt 2, 0)`.
pub fn bump(x: f64, y: f64) -> f64 {
    x * (-x * x - y * y).exp()
}

fn gauss(x: f64, y: f64, x0: f64, sigma: f64) -> f64 {
    let (dx, dy) = ((x - x0) / sigma, y / sigma);
    (-dx * dx - dy * dy).exp()
}

/// `sin x + sin y`: a maximum, a minimum and two saddles on a 4-cycle.
pub fn silt_like(x: f64, y: f64) -> f64 {
    x.sin() + y.sin()
}

/// Valley and ridge bands of `-cos x` with a hill on the rising slope and a
/// mirrored pit on the falling one. Each band spans the window, so it
/// separates the image.
pub fn two_bump(x: f64, y: f64) -> f64 {
    -x.cos() + 1.2 * (gauss(x, y, 1.4, 0.7) - gauss(x, y, 2.0 * PI - 1.4, 0.7))
}

/// Five bands of `-cos x` with one hill on the second slope.
pub fn face_like(x: f64, y: f64) -> f64 {
    -x.cos() + 0.7 * gauss(x, y, 4.7, 0.5)
}

/// `sin x` with a gentle fall-off across the strip: four bands in a row.
pub fn chain(x: f64, y: f64) -> f64 {
    x.sin() - 0.1 * y * y
}

/// Three round hills on a line, joined by two saddles.
pub fn three_bump(x: f64, y: f64) -> f64 {
    [-1.6, 0.0, 1.6].iter().map(|&x0| gauss(x, y, x0, 0.7)).sum()
}

/// A surface kind with its standard grid and anchor sites.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub kind: SurfaceKind,
    pub grid: GridSpec,
    pub anchor_sites: Vec<Pixel>,
}

/// Grid of `width` x `height` square pixels over `[x0, x1]`, centred on `y = 0`.
fn strip(width: usize, height: usize, x0: f64, x1: f64) -> Result<GridSpec> {
    let half = 0.5 * (height - 1) as f64 * (x1 - x0) / (width - 1) as f64;
    GridSpec::new(width, height, x0, x1, -half, half)
}

impl Scene {
    /// The standard setup for `kind`; `None` for CSV surfaces.
    pub fn standard(kind: SurfaceKind) -> Option<Scene> {
        let (grid, sites) = match kind {
            SurfaceKind::Bump => (GridSpec::square(128, 1.0), vec![(64, 0), (64, 127)]),
            SurfaceKind::SiltLike => (GridSpec::square(128, 2.2), vec![(0, 0), (127, 127)]),
            SurfaceKind::TwoBump => (
                strip(256, 163, -0.3, 2.0 * PI - 0.3),
                vec![(0, 12), (0, 140), (81, 255)],
            ),
            SurfaceKind::FaceLike => (
                strip(320, 98, -0.3, 4.0 * PI + 0.3),
                vec![(49, 0), (49, 319), (0, 100), (97, 220)],
            ),
            SurfaceKind::Chain => (
                strip(200, 53, -1.9, 9.2),
                vec![(20, 0), (0, 60), (52, 110), (20, 199)],
            ),
            SurfaceKind::ThreeBump => (strip(128, 43, -2.4, 2.4), vec![(21, 0), (0, 64)]),
            SurfaceKind::Csv => return None,
        };
        Some(Scene {
            kind,
            grid: grid.expect("standard grids are valid"),
            anchor_sites: sites,
        })
    }

    pub fn truth(&self, scale: f64) -> Result<HeightField> {
        make_surface(self.kind, &[scale], self.grid)
    }

    pub fn image(&self, scale: f64) -> Result<IrradianceImage> {
        render_lambertian(&self.truth(scale)?, 1.0)
    }

    /// Anchors at the standard sites with depths read off `truth`.
    pub fn anchors(&self, truth: &HeightField) -> Vec<BCAnchor> {
        sample_anchors(truth, &self.anchor_sites)
    }
}

pub fn sample_anchors(truth: &HeightField, sites: &[Pixel]) -> Vec<BCAnchor> {
    sites
        .iter()
        .enumerate()
        .map(|(k, &p)| BCAnchor {
            pixel: p,
            depth: truth.at(p),
            label: format!("a{k}"),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{analyze, Params};
    use crate::singular::detect_singular_points;

    fn counts(kind: SurfaceKind) -> (usize, usize, usize) {
        let scene = Scene::standard(kind).unwrap();
        let a = analyze(&scene.image(1.0).unwrap(), &Params::default()).unwrap();
        (
            a.regions.points.len(),
            a.decomposition.free_parts.len(),
            a.decomposition.free_edges.len(),
        )
    }

    #[test]
    fn standard_grids_have_square_pixels() {
        for kind in SurfaceKind::ALL {
            if let Some(s) = Scene::standard(kind) {
                assert!((s.grid.hx() - s.grid.hy()).abs() < 1e-12, "{kind:?}");
                assert!(s.anchor_sites.iter().all(|&p| s.grid.contains(p)));
            }
        }
        assert!(Scene::standard(SurfaceKind::Csv).is_none());
    }

    #[test]
    fn silt_like_has_four_singular_points() {
        let s = Scene::standard(SurfaceKind::SiltLike).unwrap();
        let img = s.image(1.0).unwrap();
        let pts = detect_singular_points(&img, 0.02, 5.0).unwrap();
        assert_eq!(pts.len(), 4);
        let truth = [(-PI / 2.0, -PI / 2.0), (PI / 2.0, -PI / 2.0), (-PI / 2.0, PI / 2.0), (PI / 2.0, PI / 2.0)];
        for (p, (x, y)) in pts.iter().zip(truth) {
            let q = s.grid.nearest_pixel(x, y);
            assert!(s.grid.distance(p.pixel, q) <= 2.0 * s.grid.hx(), "{:?} vs {q:?}", p.pixel);
        }
    }

    #[test]
    fn path_through_a_third_point_is_not_monotone() {
        use crate::eikonal::{fmm_distance, is_monotone, slowness_from_image, trace_path};
        use crate::singular::detect_singular_regions;
        let s = Scene::standard(SurfaceKind::ThreeBump).unwrap();
        let img = s.image(1.0).unwrap();
        let regions = detect_singular_regions(&img, 0.02, 5.0).unwrap();
        assert_eq!(regions.points.len(), 5);
        let f = slowness_from_image(&img, 0.002).unwrap();
        let d = fmm_distance(&f, regions.points[0].pixel).unwrap();
        let near = trace_path(&d, regions.points[1].pixel).unwrap();
        let far = trace_path(&d, regions.points[2].pixel).unwrap();
        assert!(is_monotone(&near, &img, &regions.labels, 0.02));
        assert!(!is_monotone(&far, &img, &regions.labels, 0.02));
        assert!(far.pixels.iter().any(|&p| regions.labels[p] == Some(1)));
    }

    #[test]
    fn decomposition_counts() {
        assert_eq!(counts(SurfaceKind::Bump), (2, 0, 1));
        assert_eq!(counts(SurfaceKind::SiltLike), (4, 1, 0));
        assert_eq!(counts(SurfaceKind::TwoBump).1, 2);
        assert_eq!(counts(SurfaceKind::TwoBump).2, 1);
        assert_eq!(counts(SurfaceKind::FaceLike).1, 1);
        assert_eq!(counts(SurfaceKind::FaceLike).2, 3);
        assert_eq!(counts(SurfaceKind::Chain), (4, 0, 3));
        assert_eq!(counts(SurfaceKind::ThreeBump), (5, 0, 4));
    }
}
