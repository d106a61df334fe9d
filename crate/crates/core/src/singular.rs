//! Singular points: bright blobs where the surface gradient vanishes.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SfsError};
use crate::forward_model::IrradianceImage;
use crate::grid::{Field, Pixel};
use crate::io::round_sig;

pub const DEFAULT_MIN_SEP: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularKind {
    #[default]
    Unknown,
    Interior,
    BoundaryAdjacent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularPoint {
    pub id: usize,
    pub pixel: Pixel,
    pub brightness: f64,
    pub kind: SingularKind,
}

/// Detected points together with the pixels that make up each of them.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularRegions {
    pub points: Vec<SingularPoint>,
    /// `Some(id)` on every pixel of point `id`'s bright region.
    pub labels: Field<Option<usize>>,
}

pub fn estimate_emax(img: &IrradianceImage) -> f64 {
    img.e.max_value()
}

pub fn detect_singular_points(
    img: &IrradianceImage,
    eps_sing: f64,
    min_sep: f64,
) -> Result<Vec<SingularPoint>> {
    detect_singular_regions(img, eps_sing, min_sep).map(|r| r.points)
}

struct Cluster {
    pixels: Vec<Pixel>,
    weight: f64,
    sum_row: f64,
    sum_col: f64,
    touches_border: bool,
}

impl Cluster {
    fn centroid(&self) -> (f64, f64) {
        (self.sum_row / self.weight, self.sum_col / self.weight)
    }

    fn absorb(&mut self, other: Cluster) {
        self.pixels.extend(other.pixels);
        self.weight += other.weight;
        self.sum_row += other.sum_row;
        self.sum_col += other.sum_col;
        self.touches_border |= other.touches_border;
    }
}

pub fn detect_singular_regions(
    img: &IrradianceImage,
    eps_sing: f64,
    min_sep: f64,
) -> Result<SingularRegions> {
    if !(eps_sing > 0.0 && eps_sing < 1.0) {
        return Err(SfsError::InvalidInput(format!(
            "eps_sing must lie in (0, 1), got {eps_sing}"
        )));
    }
    if !(min_sep >= 1.0) {
        return Err(SfsError::InvalidInput(format!(
            "min_sep must be at least 1 pixel, got {min_sep}"
        )));
    }
    let grid = img.grid;
    let threshold = (1.0 - eps_sing) * img.e_max;
    let bright = img.e.map(|&e| e >= threshold);

    // 8-connected components, seeded in row-major order.
    let mut seen = Field::filled(grid.height, grid.width, false);
    let mut clusters = Vec::new();
    for (seed, &b) in bright.indexed() {
        if !b || seen[seed] {
            continue;
        }
        seen[seed] = true;
        let mut cluster = Cluster {
            pixels: Vec::new(),
            weight: 0.0,
            sum_row: 0.0,
            sum_col: 0.0,
            touches_border: false,
        };
        let mut queue = VecDeque::from([seed]);
        while let Some(p) = queue.pop_front() {
            let w = img.e[p];
            cluster.pixels.push(p);
            cluster.weight += w;
            cluster.sum_row += w * p.0 as f64;
            cluster.sum_col += w * p.1 as f64;
            cluster.touches_border |= grid.on_border(p);
            for nb in grid.neighbors8(p) {
                if bright[nb] && !seen[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        clusters.push(cluster);
    }

    if clusters.is_empty() {
        return Err(SfsError::NoSingularPoint);
    }
    if let Some(big) = clusters.iter().map(|c| c.pixels.len()).max() {
        let fraction = big as f64 / grid.len() as f64;
        if fraction > 0.5 {
            return Err(SfsError::DegenerateImage {
                fraction: 100.0 * fraction,
            });
        }
    }

    let snap = |c: &Cluster| -> Pixel {
        let (r, col) = c.centroid();
        let (r, col) = (r.round(), col.round());
        // A non-convex blob can have its centroid outside itself; use the
        // closest member pixel so the point stays on the bright region.
        *c.pixels
            .iter()
            .min_by(|&&a, &&b| {
                let da = (a.0 as f64 - r).hypot(a.1 as f64 - col);
                let db = (b.0 as f64 - r).hypot(b.1 as f64 - col);
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .expect("clusters are never empty")
    };
    let mut placed: Vec<(Pixel, Cluster)> = clusters.into_iter().map(|c| (snap(&c), c)).collect();

    // Merge the closest pair until all points are min_sep pixels apart.
    loop {
        let mut closest: Option<(usize, usize, f64)> = None;
        for i in 0..placed.len() {
            for j in i + 1..placed.len() {
                let (a, b) = (placed[i].0, placed[j].0);
                let dist = (a.0 as f64 - b.0 as f64).hypot(a.1 as f64 - b.1 as f64);
                if dist < min_sep && closest.is_none_or(|(_, _, d)| dist < d) {
                    closest = Some((i, j, dist));
                }
            }
        }
        let Some((i, j, _)) = closest else { break };
        let (_, absorbed) = placed.remove(j);
        placed[i].1.absorb(absorbed);
        placed[i].0 = snap(&placed[i].1);
    }
    placed.sort_by_key(|(p, _)| *p);

    let mut labels = Field::filled(grid.height, grid.width, None);
    let mut points = Vec::with_capacity(placed.len());
    for (id, (pixel, cluster)) in placed.into_iter().enumerate() {
        for &p in &cluster.pixels {
            labels[p] = Some(id);
        }
        points.push(SingularPoint {
            id,
            pixel,
            brightness: img.e[pixel],
            kind: if cluster.touches_border {
                SingularKind::BoundaryAdjacent
            } else {
                SingularKind::Interior
            },
        });
    }
    Ok(SingularRegions { points, labels })
}

#[derive(Serialize, Deserialize)]
struct PointRecord {
    id: usize,
    row: usize,
    col: usize,
    brightness: f64,
}

/// `[{"id":0,"row":r,"col":c,"brightness":b}, ...]`
pub fn points_to_json(points: &[SingularPoint]) -> String {
    let records: Vec<PointRecord> = points
        .iter()
        .map(|p| PointRecord {
            id: p.id,
            row: p.pixel.0,
            col: p.pixel.1,
            brightness: round_sig(p.brightness, 6),
        })
        .collect();
    crate::io::to_json(&records)
}

pub fn points_from_json(text: &str) -> Result<Vec<SingularPoint>> {
    let records: Vec<PointRecord> =
        serde_json::from_str(text).map_err(|e| SfsError::format("points JSON", e.to_string()))?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            if r.id != i {
                return Err(SfsError::format(
                    "points JSON",
                    format!("ids must be 0..n in order, found {} at position {i}", r.id),
                ));
            }
            Ok(SingularPoint {
                id: r.id,
                pixel: (r.row, r.col),
                brightness: r.brightness,
                kind: SingularKind::Unknown,
            })
        })
        .collect()
}
