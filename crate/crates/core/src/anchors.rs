//! Dirichlet depth anchors and the resolution of ambiguity classes.
//!
//! An anchor is a pixel with known depth. It is joined to the extremities of
//! every free edge and to one edge of every free part; the FMM distance from
//! the anchor gives `|z(v) - depth|` for each attached vertex. Under each of a
//! class's two candidates the class's relative depths are fitted to these
//! observations with one free offset, and the candidate that fits better wins.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eikonal::{fmm_distances, slowness_from_image};
use crate::error::{Result, SfsError};
use crate::forward_model::IrradianceImage;
use crate::graph::{ConfigGraph, Configuration, Decomposition, HeightAssignment, VertexKind};
use crate::grid::{GridSpec, Pixel};
use crate::io::read_text;
use crate::maxcut::SolverReport;

#[derive(Debug, Clone, PartialEq)]
pub struct BCAnchor {
    pub pixel: Pixel,
    pub depth: f64,
    pub label: String,
}

#[derive(Serialize, Deserialize)]
struct AnchorRecord {
    row: usize,
    col: usize,
    depth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

/// Parses `[{"row":r,"col":c,"depth":z,"label":"..."}, ...]`.
pub fn parse_anchors(text: &str, grid: &GridSpec) -> Result<Vec<BCAnchor>> {
    let records: Vec<AnchorRecord> =
        serde_json::from_str(text).map_err(|e| SfsError::format("anchors JSON", e.to_string()))?;
    if records.is_empty() {
        return Err(SfsError::format("anchors JSON", "at least one anchor is required"));
    }
    let mut seen = BTreeSet::new();
    records
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            let pixel = (r.row, r.col);
            if !grid.contains(pixel) {
                return Err(SfsError::InvalidInput(format!(
                    "anchor {k} at {pixel:?} lies outside the {}x{} image",
                    grid.height, grid.width
                )));
            }
            if !r.depth.is_finite() {
                return Err(SfsError::InvalidInput(format!("anchor {k} has depth {}", r.depth)));
            }
            if !seen.insert(pixel) {
                return Err(SfsError::InvalidInput(format!(
                    "anchor {k} repeats pixel {pixel:?}"
                )));
            }
            Ok(BCAnchor {
                pixel,
                depth: r.depth,
                label: r.label.unwrap_or_else(|| format!("a{k}")),
            })
        })
        .collect()
}

pub fn load_anchors(path: impl AsRef<Path>, grid: &GridSpec) -> Result<Vec<BCAnchor>> {
    parse_anchors(&read_text(path)?, grid)
}

pub fn anchors_to_json(anchors: &[BCAnchor]) -> String {
    let records: Vec<AnchorRecord> = anchors
        .iter()
        .map(|a| AnchorRecord {
            row: a.pixel.0,
            col: a.pixel.1,
            depth: crate::io::round_sig(a.depth, 6),
            label: Some(a.label.clone()),
        })
        .collect();
    crate::io::to_json(&records)
}

/// Vertices that anchors attach to: both ends of each free edge, the ends of
/// each part's lowest edge, and every vertex with no edge at all.
pub fn attachment_vertices(g: &ConfigGraph, dec: &Decomposition) -> Vec<usize> {
    let mut out = BTreeSet::new();
    for &e in &dec.free_edges {
        out.insert(g.edges[e].i);
        out.insert(g.edges[e].j);
    }
    for part in &dec.free_parts {
        let e = &g.edges[part.edges[0]];
        out.insert(e.i);
        out.insert(e.j);
    }
    for v in 0..g.n_vertices() {
        if g.neighbors(v).is_empty() {
            out.insert(v);
        }
    }
    out.into_iter().collect()
}

/// Adds each anchor as a vertex joined to every attachment vertex.
pub fn augment_graph(
    g: &ConfigGraph,
    dec: &Decomposition,
    anchors: &[BCAnchor],
    img: &IrradianceImage,
    eps_flat: f64,
) -> Result<ConfigGraph> {
    if anchors.is_empty() {
        return Err(SfsError::InvalidInput("no anchors given".into()));
    }
    let slowness = slowness_from_image(img, eps_flat)?;
    let pixels: Vec<Pixel> = anchors.iter().map(|a| a.pixel).collect();
    let fields = fmm_distances(&slowness, &pixels)?;
    let targets = attachment_vertices(g, dec);
    let mut out = g.clone();
    for (anchor, field) in anchors.iter().zip(&fields) {
        let id = out.add_vertex(
            anchor.pixel,
            VertexKind::Anchor {
                depth: anchor.depth,
                label: anchor.label.clone(),
            },
        );
        for &v in &targets {
            let p = g.vertices[v].pixel;
            if !field.is_reached(p) {
                return Err(SfsError::Unreachable { row: p.0, col: p.1 });
            }
            out.add_edge(v, id, field.at(p), None, true)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassResolution {
    pub class: usize,
    pub choice: usize,
    /// RMS violation of each candidate against the references.
    pub misfit: [f64; 2],
    pub references: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub configuration: Configuration,
    pub choices: Vec<ClassResolution>,
    /// Absolute depth of each original vertex, when anchored.
    pub z: Vec<Option<f64>>,
}

impl Resolution {
    pub fn heights(&self) -> HeightAssignment {
        HeightAssignment {
            root: self.z.iter().position(Option::is_some).unwrap_or(0),
            z: self.z.clone(),
            residual: 0.0,
        }
    }

    pub fn class_choices(&self) -> Vec<usize> {
        let mut out = vec![0; self.choices.len()];
        for c in &self.choices {
            out[c.class] = c.choice;
        }
        out
    }
}

/// One datum about the depth of vertex `v`.
#[derive(Debug, Clone, Copy)]
enum Observation {
    /// `z(v) = depth` exactly.
    Known { v: usize, depth: f64 },
    /// `|z(v) - depth| <= w`, tight when the anchor's geodesic is monotone.
    Anchor { v: usize, depth: f64, w: f64 },
}

/// Misfits closer than this fraction of the class's mean edge weight do not
/// decide between the two candidates.
pub const DECISION_MARGIN: f64 = 0.01;

/// Weight of slack (`|z - depth| < w`) relative to violations. Small enough
/// that slack only picks the offset among equally consistent ones.
const SLACK_WEIGHT: f64 = 1e-6;

impl Observation {
    fn vertex(&self) -> usize {
        match *self {
            Observation::Known { v, .. } | Observation::Anchor { v, .. } => v,
        }
    }

    /// Canonical order, so sums do not depend on how anchors were listed.
    fn key(&self) -> (usize, u8, f64, f64) {
        match *self {
            Observation::Known { v, depth } => (v, 0, depth, 0.0),
            Observation::Anchor { v, depth, w } => (v, 1, depth, w),
        }
    }

    /// Signed error; positive values are violations.
    fn error(&self, z: f64) -> f64 {
        match *self {
            Observation::Known { depth, .. } => (z - depth).abs(),
            Observation::Anchor { depth, w, .. } => (z - depth).abs() - w,
        }
    }

    fn loss(&self, z: f64) -> f64 {
        let e = self.error(z);
        match self {
            Observation::Anchor { .. } if e < 0.0 => SLACK_WEIGHT * e * e,
            _ => e * e,
        }
    }
}

/// Offset `c` for depths `c + rel(v)` minimising the observation loss;
/// returns `(c, rms violation)`.
///
/// The loss is piecewise quadratic in `c` with kinks where an observation
/// changes side or becomes tight, so each piece is minimised in closed form.
fn fit_offset(obs: &[Observation], rel: &dyn Fn(usize) -> f64) -> (f64, f64) {
    if obs.is_empty() {
        return (0.0, 0.0);
    }
    let mut kinks = Vec::new();
    for o in obs {
        if let Observation::Anchor { v, depth, w } = *o {
            let t = depth - rel(v);
            kinks.extend([t - w, t, t + w]);
        }
    }
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();
    let total = |c: f64| obs.iter().map(|o| o.loss(c + rel(o.vertex()))).sum::<f64>();

    let mut bounds = vec![f64::NEG_INFINITY];
    bounds.extend(&kinks);
    bounds.push(f64::INFINITY);
    let mut best = (f64::NAN, f64::INFINITY);
    for win in bounds.windows(2) {
        let (lo, hi) = (win[0], win[1]);
        let probe = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo + 1.0,
            (false, true) => hi - 1.0,
            (false, false) => 0.0,
        };
        let (mut num, mut den) = (0.0, 0.0);
        for o in obs {
            let r = rel(o.vertex());
            let (k, target) = match *o {
                Observation::Known { depth, .. } => (1.0, depth - r),
                Observation::Anchor { depth, w, .. } => {
                    let s = if probe + r >= depth { 1.0 } else { -1.0 };
                    let k = if o.error(probe + r) > 0.0 { 1.0 } else { SLACK_WEIGHT };
                    (k, depth - r + s * w)
                }
            };
            num += k * target;
            den += k;
        }
        let c = (num / den).clamp(lo, hi);
        let e = total(c);
        if e < best.1 || (e == best.1 && c < best.0) {
            best = (c, e);
        }
    }
    let c = best.0;
    let violation = obs
        .iter()
        .map(|o| o.error(c + rel(o.vertex())).max(0.0).powi(2))
        .sum::<f64>();
    (c, (violation / obs.len() as f64).sqrt())
}

/// Picks one candidate per class so that the anchors are matched.
///
/// Classes are handled in rounds: first any class that touches a vertex whose
/// depth is already fixed (a shared cut vertex) and has a second reference,
/// else the first class with anchors at two different depths. `accept_tol` defaults to a quarter of the class's mean
/// edge weight.
pub fn resolve_ambiguity(
    g_aug: &ConfigGraph,
    report: &SolverReport,
    accept_tol: Option<f64>,
) -> Result<Resolution> {
    let n = report.n_vertices;
    let n_edges = report.edges.len();
    let mut z: Vec<Option<f64>> = vec![None; n];
    let mut cfg = report.chosen.clone();
    let mut choices = Vec::new();

    // Anchor observations per original vertex, in a fixed order.
    let mut anchor_obs: Vec<Vec<(Pixel, Observation)>> = vec![Vec::new(); n];
    for e in &g_aug.edges[n_edges..] {
        let (v, a) = if e.i < n { (e.i, e.j) } else { (e.j, e.i) };
        let anchor = &g_aug.vertices[a];
        let depth = anchor.anchor_depth().ok_or_else(|| {
            SfsError::InvalidInput(format!("edge ({}, {}) ends at a non-anchor vertex", e.i, e.j))
        })?;
        anchor_obs[v].push((anchor.pixel, Observation::Anchor { v, depth, w: e.w }));
    }
    for list in &mut anchor_obs {
        list.sort_by_key(|(p, _)| *p);
    }

    let mut pending: Vec<usize> = (0..report.classes.len()).collect();
    while !pending.is_empty() {
        let resolvable = |c: usize, need_link: bool| {
            let class = &report.classes[c];
            let known = class.vertices.iter().filter(|&&v| z[v].is_some()).count();
            let depths: BTreeSet<u64> = class
                .vertices
                .iter()
                .flat_map(|&v| &anchor_obs[v])
                .map(|(_, o)| match o {
                    Observation::Anchor { depth, .. } | Observation::Known { depth, .. } => {
                        depth.to_bits()
                    }
                })
                .collect();
            if need_link {
                known >= 2 || (known == 1 && !depths.is_empty())
            } else {
                depths.len() >= 2
            }
        };
        let pick = pending
            .iter()
            .position(|&c| resolvable(c, true))
            .or_else(|| pending.iter().position(|&c| resolvable(c, false)));
        let Some(at) = pick else {
            let c = pending[0];
            return Err(SfsError::UnresolvedAmbiguity(format!(
                "class {c} ({:?} over vertices {:?}) needs two anchors with different depths \
                 or a resolved neighbour",
                report.classes[c].kind, report.classes[c].vertices
            )));
        };
        let c = pending.remove(at);
        let class = &report.classes[c];

        let mut obs = Vec::new();
        for &v in &class.vertices {
            if let Some(depth) = z[v] {
                obs.push(Observation::Known { v, depth });
            }
            obs.extend(anchor_obs[v].iter().map(|(_, o)| *o));
        }
        obs.sort_by(|a, b| a.key().partial_cmp(&b.key()).unwrap_or(std::cmp::Ordering::Equal));

        // Depths relative to the class's first vertex under candidate 0.
        let mut sub = Configuration::uniform(g_aug.n_edges(), 1);
        for (&e, &s) in class.edges.iter().zip(&class.candidates[0]) {
            sub.signs[e] = s;
        }
        let rel0 = relative_depths(g_aug, &class.edges, class.vertices[0], &sub);
        let rel = |k: usize| {
            let rel0 = &rel0;
            move |v: usize| if k == 0 { rel0[v] } else { -rel0[v] }
        };
        let (c0, m0) = fit_offset(&obs, &rel(0));
        let (c1, m1) = fit_offset(&obs, &rel(1));
        let margin = DECISION_MARGIN * class_mean_weight(report, class.edges.as_slice());
        if (m0 - m1).abs() <= margin {
            return Err(SfsError::UnresolvedAmbiguity(format!(
                "class {c}: both candidates fit the references equally well (misfit {m0:.4}); \
                 anchors need different depths"
            )));
        }
        let tol = accept_tol
            .unwrap_or_else(|| 0.25 * class_mean_weight(report, class.edges.as_slice()));
        if m0.min(m1) > tol {
            return Err(SfsError::InconsistentAnchors(format!(
                "class {c}: best misfit {:.4} exceeds tolerance {tol:.4}",
                m0.min(m1)
            )));
        }
        let (choice, offset) = if m1 < m0 { (1, c1) } else { (0, c0) };
        for (&e, &s) in class.edges.iter().zip(&class.candidates[choice]) {
            cfg.signs[e] = s;
        }
        for &v in &class.vertices {
            if z[v].is_none() {
                z[v] = Some(offset + rel(choice)(v));
            }
        }
        choices.push(ClassResolution {
            class: c,
            choice,
            misfit: [m0, m1],
            references: obs.len(),
        });
    }

    // Vertices outside every class can still be placed from their anchors.
    for v in 0..n {
        if z[v].is_none() && !anchor_obs[v].is_empty() && g_aug.neighbors(v).iter().all(|&(_, e)| e >= n_edges) {
            let obs: Vec<Observation> = anchor_obs[v].iter().map(|(_, o)| *o).collect();
            let (offset, _) = fit_offset(&obs, &|_| 0.0);
            z[v] = Some(offset);
        }
    }
    choices.sort_by_key(|c| c.class);
    Ok(Resolution {
        configuration: cfg,
        choices,
        z,
    })
}

fn class_mean_weight(report: &SolverReport, edges: &[usize]) -> f64 {
    if edges.is_empty() {
        return 0.0;
    }
    edges.iter().map(|&e| report.edges[e].2).sum::<f64>() / edges.len() as f64
}

/// BFS depths over `edges` only, `0` at `root`; other vertices read `0`.
fn relative_depths(g: &ConfigGraph, edges: &[usize], root: usize, cfg: &Configuration) -> Vec<f64> {
    let mut z = vec![f64::NAN; g.n_vertices()];
    z[root] = 0.0;
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for &(u, e) in g.neighbors(v) {
            if z[u].is_nan() && edges.binary_search(&e).is_ok() {
                z[u] = z[v] + crate::graph::oriented_step(g, cfg, e, v);
                queue.push_back(u);
            }
        }
    }
    z.iter().map(|v| if v.is_nan() { 0.0 } else { *v }).collect()
}
