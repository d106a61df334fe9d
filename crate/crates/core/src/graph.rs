//! The singular-point graph, sign configurations and their decomposition.
//!
//! An edge `(i, j)` with `i < j` carries `w >= 0`, the depth difference
//! between its extremities. A configuration assigns each edge a sign `d`, and
//! `d = +1` means depth increases from `i` to `j`: `z_j - z_i = d * w`.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::eikonal::{fmm_distances, is_monotone, slowness_from_image, trace_path, GridPath};
use crate::error::{Result, SfsError};
use crate::forward_model::IrradianceImage;
use crate::grid::Pixel;
use crate::singular::SingularRegions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VertexKind {
    Singular,
    Anchor { depth: f64, label: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: usize,
    pub pixel: Pixel,
    pub kind: VertexKind,
}

impl Vertex {
    pub fn is_anchor(&self) -> bool {
        matches!(self.kind, VertexKind::Anchor { .. })
    }

    pub fn anchor_depth(&self) -> Option<f64> {
        match self.kind {
            VertexKind::Anchor { depth, .. } => Some(depth),
            VertexKind::Singular => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
    pub path: Option<GridPath>,
    /// Anchor edges are added without the monotonicity test.
    pub anchor: bool,
}

impl Edge {
    pub fn other(&self, v: usize) -> usize {
        if v == self.i {
            self.j
        } else {
            self.i
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfigGraph {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    /// Per vertex, `(neighbour, edge index)` sorted by neighbour.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl ConfigGraph {
    pub fn new(vertices: Vec<Vertex>) -> Result<Self> {
        if let Some((pos, v)) = vertices.iter().enumerate().find(|(k, v)| v.id != *k) {
            return Err(SfsError::InvalidInput(format!(
                "vertex ids must be dense, found {} at position {pos}",
                v.id
            )));
        }
        let adjacency = vec![Vec::new(); vertices.len()];
        Ok(ConfigGraph {
            vertices,
            edges: Vec::new(),
            adjacency,
        })
    }

    /// Abstract graph with `n` singular vertices at pixel `(0, k)`.
    pub fn from_weighted_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let vertices = (0..n)
            .map(|id| Vertex {
                id,
                pixel: (0, id),
                kind: VertexKind::Singular,
            })
            .collect();
        let mut g = Self::new(vertices)?;
        for &(i, j, w) in edges {
            g.add_edge(i, j, w, None, false)?;
        }
        Ok(g)
    }

    pub fn add_vertex(&mut self, pixel: Pixel, kind: VertexKind) -> usize {
        let id = self.vertices.len();
        self.vertices.push(Vertex { id, pixel, kind });
        self.adjacency.push(Vec::new());
        id
    }

    pub fn add_edge(
        &mut self,
        a: usize,
        b: usize,
        w: f64,
        path: Option<GridPath>,
        anchor: bool,
    ) -> Result<usize> {
        let n = self.vertices.len();
        if a >= n || b >= n || a == b {
            return Err(SfsError::InvalidInput(format!(
                "edge ({a}, {b}) is a loop or names a missing vertex"
            )));
        }
        if !(w.is_finite() && w >= 0.0) {
            return Err(SfsError::InvalidInput(format!(
                "edge ({a}, {b}) has weight {w}"
            )));
        }
        if self.edge_between(a, b).is_some() {
            return Err(SfsError::InvalidInput(format!("duplicate edge ({a}, {b})")));
        }
        let (i, j) = (a.min(b), a.max(b));
        let path = path.map(|p| if p.source() == self.vertices[i].pixel { p } else { reversed(p) });
        let index = self.edges.len();
        self.edges.push(Edge {
            i,
            j,
            w,
            path,
            anchor,
        });
        for (v, nb) in [(i, j), (j, i)] {
            let list = &mut self.adjacency[v];
            let at = list.partition_point(|&(u, _)| u < nb);
            list.insert(at, (nb, index));
        }
        Ok(index)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adjacency[v]
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        let list = self.adjacency.get(a)?;
        let at = list.partition_point(|&(u, _)| u < b);
        list.get(at).filter(|&&(u, _)| u == b).map(|&(_, e)| e)
    }

    pub fn mean_weight(&self) -> f64 {
        if self.edges.is_empty() {
            return 0.0;
        }
        self.edges.iter().map(|e| e.w).sum::<f64>() / self.edges.len() as f64
    }

    /// Connected components as sorted vertex lists, ordered by smallest vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n_vertices()];
        let mut out = Vec::new();
        for start in 0..self.n_vertices() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &(u, _) in self.neighbors(v) {
                    if !seen[u] {
                        seen[u] = true;
                        comp.push(u);
                        queue.push_back(u);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Graphviz rendering. Anchor vertices are boxes and anchor edges dashed.
    pub fn to_dot(&self, cfg: Option<&Configuration>) -> String {
        let mut out = String::from("graph G {\n");
        for v in &self.vertices {
            let shape = if v.is_anchor() { "box" } else { "ellipse" };
            let _ = writeln!(
                out,
                "  p{id} [label=\"p{id} ({r},{c})\", shape={shape}];",
                id = v.id,
                r = v.pixel.0,
                c = v.pixel.1
            );
        }
        for (k, e) in self.edges.iter().enumerate() {
            let mut label = format!("{:.3}", e.w);
            if let Some(cfg) = cfg {
                label.push(' ');
                label.push(if cfg.signs[k] > 0 { '+' } else { '-' });
            }
            let style = if e.anchor { ", style=dashed" } else { "" };
            let _ = writeln!(out, "  p{} -- p{} [label=\"{label}\"{style}];", e.i, e.j);
        }
        out.push_str("}\n");
        out
    }
}

fn reversed(mut p: GridPath) -> GridPath {
    let total = p.length();
    p.pixels.reverse();
    p.cumulative.reverse();
    for c in &mut p.cumulative {
        *c = total - *c;
    }
    p
}

/// Connects every pair of singular points whose shortest path is monotone.
///
/// `eps_sing` decides which pixels count as singular along a path, `eps_flat`
/// clamps the slowness used for the distances.
pub fn build_graph(
    img: &IrradianceImage,
    regions: &SingularRegions,
    eps_sing: f64,
    eps_flat: f64,
) -> Result<ConfigGraph> {
    if regions.points.is_empty() {
        return Err(SfsError::NoSingularPoint);
    }
    let vertices = regions
        .points
        .iter()
        .map(|p| Vertex {
            id: p.id,
            pixel: p.pixel,
            kind: VertexKind::Singular,
        })
        .collect();
    let mut g = ConfigGraph::new(vertices)?;
    let slowness = slowness_from_image(img, eps_flat)?;
    let pixels: Vec<Pixel> = regions.points.iter().map(|p| p.pixel).collect();
    let fields = fmm_distances(&slowness, &pixels)?;
    for i in 0..pixels.len() {
        for j in i + 1..pixels.len() {
            if !fields[i].is_reached(pixels[j]) {
                continue;
            }
            let path = trace_path(&fields[i], pixels[j])?;
            if is_monotone(&path, img, &regions.labels, eps_sing) {
                let w = path.length();
                g.add_edge(i, j, w, Some(path), false)?;
            }
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    pub signs: Vec<i8>,
}

impl Configuration {
    pub fn uniform(n_edges: usize, sign: i8) -> Self {
        Configuration {
            signs: vec![if sign < 0 { -1 } else { 1 }; n_edges],
        }
    }

    pub fn from_signs(signs: Vec<i8>) -> Result<Self> {
        if let Some(s) = signs.iter().find(|&&s| s != 1 && s != -1) {
            return Err(SfsError::InvalidInput(format!("sign {s} is not +1 or -1")));
        }
        Ok(Configuration { signs })
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn sign(&self, edge: usize) -> f64 {
        f64::from(self.signs[edge])
    }

    pub fn reverse(&self) -> Configuration {
        Configuration {
            signs: self.signs.iter().map(|s| -s).collect(),
        }
    }

    pub(crate) fn check(&self, g: &ConfigGraph) -> Result<()> {
        if self.signs.len() != g.n_edges() {
            return Err(SfsError::ConfigurationSize {
                expected: g.n_edges(),
                got: self.signs.len(),
            });
        }
        Ok(())
    }
}

pub fn reverse(cfg: &Configuration) -> Configuration {
    cfg.reverse()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightAssignment {
    pub root: usize,
    /// Depth per vertex; `None` outside the root's component.
    pub z: Vec<Option<f64>>,
    pub residual: f64,
}

impl HeightAssignment {
    pub fn at(&self, v: usize) -> Option<f64> {
        self.z.get(v).copied().flatten()
    }
}

/// 10% of the mean edge weight.
pub fn default_cycle_tol(g: &ConfigGraph) -> f64 {
    0.1 * g.mean_weight()
}

/// Propagates depths over a BFS tree from `root` without judging the residual.
pub fn propagate_heights(
    g: &ConfigGraph,
    cfg: &Configuration,
    root: usize,
    z_root: f64,
) -> Result<HeightAssignment> {
    cfg.check(g)?;
    if root >= g.n_vertices() {
        return Err(SfsError::InvalidInput(format!("root {root} is not a vertex")));
    }
    let mut z = vec![None; g.n_vertices()];
    let mut tree = vec![false; g.n_edges()];
    z[root] = Some(z_root);
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        let zv = z[v].expect("queued vertices have depth");
        for &(u, e) in g.neighbors(v) {
            if z[u].is_none() {
                z[u] = Some(zv + oriented_step(g, cfg, e, v));
                tree[e] = true;
                queue.push_back(u);
            }
        }
    }
    let mut residual = 0.0f64;
    for (k, e) in g.edges.iter().enumerate() {
        if tree[k] {
            continue;
        }
        if let (Some(zi), Some(zj)) = (z[e.i], z[e.j]) {
            residual = residual.max((zj - zi - cfg.sign(k) * e.w).abs());
        }
    }
    Ok(HeightAssignment { root, z, residual })
}

/// Depth change when walking edge `e` away from vertex `from`.
pub(crate) fn oriented_step(g: &ConfigGraph, cfg: &Configuration, e: usize, from: usize) -> f64 {
    let edge = &g.edges[e];
    let step = cfg.sign(e) * edge.w;
    if from == edge.i {
        step
    } else {
        -step
    }
}

pub fn integrate_heights(
    g: &ConfigGraph,
    cfg: &Configuration,
    root: usize,
    z_root: f64,
    cycle_tol: f64,
) -> Result<HeightAssignment> {
    let h = propagate_heights(g, cfg, root, z_root)?;
    if h.residual > cycle_tol {
        return Err(SfsError::InfeasibleConfiguration {
            residual: h.residual,
            tol: cycle_tol,
        });
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "unit", content = "index", rename_all = "snake_case")]
pub enum Unit {
    /// Index into `Decomposition::free_edges`.
    FreeEdge(usize),
    /// Index into `Decomposition::free_parts`.
    FreePart(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreePart {
    pub vertices: Vec<usize>,
    pub edges: Vec<usize>,
}

/// Two units meeting at a cut vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitLink {
    pub a: Unit,
    pub b: Unit,
    pub vertex: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Decomposition {
    /// Bridge edge indices, ascending.
    pub free_edges: Vec<usize>,
    /// Biconnected blocks with more than one edge, ordered by first edge.
    pub free_parts: Vec<FreePart>,
    pub links: Vec<UnitLink>,
}

impl Decomposition {
    pub fn units(&self) -> Vec<Unit> {
        (0..self.free_edges.len())
            .map(Unit::FreeEdge)
            .chain((0..self.free_parts.len()).map(Unit::FreePart))
            .collect()
    }

    pub fn unit_edges(&self, unit: Unit) -> Vec<usize> {
        match unit {
            Unit::FreeEdge(k) => vec![self.free_edges[k]],
            Unit::FreePart(k) => self.free_parts[k].edges.clone(),
        }
    }

    pub fn unit_vertices(&self, g: &ConfigGraph, unit: Unit) -> Vec<usize> {
        match unit {
            Unit::FreeEdge(k) => {
                let e = &g.edges[self.free_edges[k]];
                vec![e.i, e.j]
            }
            Unit::FreePart(k) => self.free_parts[k].vertices.clone(),
        }
    }

    /// Unit owning each edge.
    pub fn edge_units(&self, n_edges: usize) -> Vec<Option<Unit>> {
        let mut out = vec![None; n_edges];
        for (k, &e) in self.free_edges.iter().enumerate() {
            out[e] = Some(Unit::FreeEdge(k));
        }
        for (k, part) in self.free_parts.iter().enumerate() {
            for &e in &part.edges {
                out[e] = Some(Unit::FreePart(k));
            }
        }
        out
    }
}

/// Splits the edge set into biconnected blocks: single-edge blocks are the
/// bridges, the others are the free parts.
pub fn decompose(g: &ConfigGraph) -> Decomposition {
    let blocks = biconnected_blocks(g);
    let mut free_edges = Vec::new();
    let mut free_parts = Vec::new();
    for mut block in blocks {
        block.sort_unstable();
        if block.len() == 1 {
            free_edges.push(block[0]);
        } else {
            let mut vertices: Vec<usize> =
                block.iter().flat_map(|&e| [g.edges[e].i, g.edges[e].j]).collect();
            vertices.sort_unstable();
            vertices.dedup();
            free_parts.push(FreePart {
                vertices,
                edges: block,
            });
        }
    }
    free_edges.sort_unstable();
    free_parts.sort_by_key(|p| p.edges[0]);

    let mut dec = Decomposition {
        free_edges,
        free_parts,
        links: Vec::new(),
    };
    let mut at_vertex: Vec<Vec<Unit>> = vec![Vec::new(); g.n_vertices()];
    for unit in dec.units() {
        for v in dec.unit_vertices(g, unit) {
            at_vertex[v].push(unit);
        }
    }
    for (v, units) in at_vertex.iter_mut().enumerate() {
        units.sort_unstable();
        for x in 0..units.len() {
            for y in x + 1..units.len() {
                dec.links.push(UnitLink {
                    a: units[x],
                    b: units[y],
                    vertex: v,
                });
            }
        }
    }
    dec
}

/// Hopcroft-Tarjan with an explicit edge stack, iterative.
fn biconnected_blocks(g: &ConfigGraph) -> Vec<Vec<usize>> {
    let n = g.n_vertices();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut timer = 0;
    let mut edge_stack: Vec<usize> = Vec::new();
    let mut blocks = Vec::new();

    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        // (vertex, edge used to enter it, next adjacency slot)
        let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
        while let Some(&mut (v, parent_edge, ref mut next)) = stack.last_mut() {
            if let Some(&(u, e)) = g.neighbors(v).get(*next) {
                *next += 1;
                if Some(e) == parent_edge {
                    continue;
                }
                if disc[u] == usize::MAX {
                    edge_stack.push(e);
                    disc[u] = timer;
                    low[u] = timer;
                    timer += 1;
                    stack.push((u, Some(e), 0));
                } else if disc[u] < disc[v] {
                    edge_stack.push(e);
                    low[v] = low[v].min(disc[u]);
                }
                continue;
            }
            stack.pop();
            if let (Some(&(p, _, _)), Some(pe)) = (stack.last(), parent_edge) {
                low[p] = low[p].min(low[v]);
                if low[v] >= disc[p] {
                    let mut block = Vec::new();
                    while let Some(e) = edge_stack.pop() {
                        block.push(e);
                        if e == pe {
                            break;
                        }
                    }
                    blocks.push(block);
                }
            }
        }
    }
    blocks
}
