//! Exact configuration search per free part and the ambiguity classes it
//! leaves behind.
//!
//! Within a part the signs are scored by the total cycle residual: depths are
//! propagated over a fixed BFS spanning tree and every non-tree edge adds
//! `|z_j - z_i - d w|`. The score is invariant under reversal, so each part
//! has (at least) two optimal configurations.

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SfsError};
use crate::graph::{ConfigGraph, Configuration, Decomposition, Unit};
use crate::io::round_sig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    FreeEdge,
    FreePart,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityClass {
    pub kind: ClassKind,
    pub unit: Unit,
    /// Edge indices of the unit, ascending.
    pub edges: Vec<usize>,
    pub vertices: Vec<usize>,
    /// Signs on `edges`; the second is the negation of the first.
    pub candidates: [Vec<i8>; 2],
    #[serde(serialize_with = "ser_round6")]
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub n_vertices: usize,
    /// `(i, j, w)` per edge, to check a report against a rebuilt graph.
    #[serde(serialize_with = "ser_edges")]
    pub edges: Vec<(usize, usize, f64)>,
    pub chosen: Configuration,
    pub classes: Vec<AmbiguityClass>,
    #[serde(serialize_with = "ser_round6")]
    pub objective: f64,
    #[serde(serialize_with = "ser_round6")]
    pub max_residual: f64,
    #[serde(serialize_with = "ser_round6")]
    pub cycle_tol: f64,
    pub nodes_explored: u64,
    /// Left out of serialized reports unless requested, so that reruns are
    /// byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

fn ser_round6<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(round_sig(*v, 6))
}

fn ser_edges<S: serde::Serializer>(
    edges: &[(usize, usize, f64)],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(edges.len()))?;
    for &(i, j, w) in edges {
        seq.serialize_element(&(i, j, round_sig(w, 6)))?;
    }
    seq.end()
}

impl SolverReport {
    pub fn to_json(&self) -> String {
        crate::io::to_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SfsError::format("solver report", e.to_string()))
    }

    /// Whether this report was produced for a graph with the same edge list.
    pub fn matches_graph(&self, g: &ConfigGraph) -> bool {
        self.n_vertices == g.n_vertices()
            && self.edges.len() == g.n_edges()
            && self.edges.iter().zip(&g.edges).all(|(&(i, j, w), e)| {
                i == e.i && j == e.j && (w - e.w).abs() <= 1e-5 * e.w.abs().max(1.0)
            })
    }

    /// The chosen configuration with class `k` flipped wherever `choices[k] == 1`.
    pub fn apply_choices(&self, choices: &[usize]) -> Configuration {
        let mut cfg = self.chosen.clone();
        for (class, &choice) in self.classes.iter().zip(choices) {
            for (&e, &s) in class.edges.iter().zip(&class.candidates[choice.min(1)]) {
                cfg.signs[e] = s;
            }
        }
        cfg
    }
}

/// Spanning tree of one part and the order in which its edges are scored.
struct PartPlan {
    /// Vertices in BFS order; `tree[k]` is the edge that reached `order[k + 1]`.
    order: Vec<usize>,
    tree: Vec<usize>,
    /// Non-tree edges grouped by the tree step after which both ends are known.
    closing: Vec<Vec<usize>>,
}

impl PartPlan {
    fn new(g: &ConfigGraph, edges: &[usize], vertices: &[usize]) -> Self {
        let in_part = |e: usize| edges.binary_search(&e).is_ok();
        let root = vertices[0];
        let mut pos = vec![usize::MAX; g.n_vertices()];
        pos[root] = 0;
        let mut order = vec![root];
        let mut tree = Vec::new();
        let mut is_tree = vec![false; g.n_edges()];
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &(u, e) in g.neighbors(v) {
                if in_part(e) && pos[u] == usize::MAX {
                    pos[u] = order.len();
                    order.push(u);
                    tree.push(e);
                    is_tree[e] = true;
                    queue.push_back(u);
                }
            }
        }
        // Step k assigns order[k]; step 0 is the root.
        let mut closing = vec![Vec::new(); order.len()];
        for &e in edges {
            if !is_tree[e] {
                let step = pos[g.edges[e].i].max(pos[g.edges[e].j]);
                closing[step].push(e);
            }
        }
        PartPlan {
            order,
            tree,
            closing,
        }
    }
}

fn residual(g: &ConfigGraph, z: &[f64], e: usize, sign: f64) -> f64 {
    let edge = &g.edges[e];
    (z[edge.j] - z[edge.i] - sign * edge.w).abs()
}

/// Total cycle residual of `cfg` restricted to one part, summed in a fixed
/// order. Both the search and its oracle tests use this to score.
pub fn part_objective(g: &ConfigGraph, edges: &[usize], vertices: &[usize], cfg: &Configuration) -> f64 {
    let plan = PartPlan::new(g, edges, vertices);
    let mut z = vec![0.0; g.n_vertices()];
    let mut total = 0.0;
    for (k, &v) in plan.order.iter().enumerate() {
        if k > 0 {
            let e = plan.tree[k - 1];
            let from = g.edges[e].other(v);
            z[v] = z[from] + crate::graph::oriented_step(g, cfg, e, from);
        }
        for &e in &plan.closing[k] {
            total += residual(g, &z, e, cfg.sign(e));
        }
    }
    total
}

/// `+` sorts before `-` when comparing sign vectors.
fn sign_key(signs: &[i8]) -> Vec<u8> {
    signs.iter().map(|&s| u8::from(s < 0)).collect()
}

struct Search<'a> {
    g: &'a ConfigGraph,
    plan: PartPlan,
    edges: &'a [usize],
    z: Vec<f64>,
    signs: Configuration,
    best: f64,
    winners: Vec<Vec<i8>>,
    nodes: u64,
}

impl Search<'_> {
    fn run(&mut self, step: usize, acc: f64) {
        self.nodes += 1;
        if acc > self.best {
            return;
        }
        if step == self.plan.order.len() {
            let signs: Vec<i8> = self.edges.iter().map(|&e| self.signs.signs[e]).collect();
            if acc < self.best {
                self.best = acc;
                self.winners.clear();
            }
            self.winners.push(signs);
            return;
        }
        let v = self.plan.order[step];
        let e = self.plan.tree[step - 1];
        let from = self.g.edges[e].other(v);
        for s in [1i8, -1] {
            self.signs.signs[e] = s;
            self.z[v] = self.z[from] + crate::graph::oriented_step(self.g, &self.signs, e, from);
            let mut next = acc;
            // A closing edge takes its better sign; `+` wins exact ties.
            for &c in &self.plan.closing[step] {
                let plus = residual(self.g, &self.z, c, 1.0);
                let minus = residual(self.g, &self.z, c, -1.0);
                if minus < plus {
                    self.signs.signs[c] = -1;
                    next += minus;
                } else {
                    self.signs.signs[c] = 1;
                    next += plus;
                }
            }
            self.run(step + 1, next);
        }
    }
}

struct PartSolution {
    signs: Vec<i8>,
    objective: f64,
    max_residual: f64,
    nodes: u64,
}

fn solve_part(g: &ConfigGraph, edges: &[usize], vertices: &[usize]) -> PartSolution {
    let plan = PartPlan::new(g, edges, vertices);
    let mut search = Search {
        g,
        plan,
        edges,
        z: vec![0.0; g.n_vertices()],
        signs: Configuration::uniform(g.n_edges(), 1),
        best: f64::INFINITY,
        winners: Vec::new(),
        nodes: 0,
    };
    if search.plan.order.len() == 1 {
        return PartSolution {
            signs: Vec::new(),
            objective: 0.0,
            max_residual: 0.0,
            nodes: 1,
        };
    }
    search.run(1, 0.0);
    let signs = search
        .winners
        .iter()
        .min_by_key(|s| sign_key(s))
        .cloned()
        .expect("a part always has a complete assignment");

    let mut cfg = Configuration::uniform(g.n_edges(), 1);
    for (&e, &s) in edges.iter().zip(&signs) {
        cfg.signs[e] = s;
    }
    let objective = part_objective(g, edges, vertices, &cfg);
    let max_residual = part_max_residual(g, edges, vertices, &cfg);
    PartSolution {
        signs,
        objective,
        max_residual,
        nodes: search.nodes,
    }
}

fn part_max_residual(g: &ConfigGraph, edges: &[usize], vertices: &[usize], cfg: &Configuration) -> f64 {
    let plan = PartPlan::new(g, edges, vertices);
    let mut z = vec![0.0; g.n_vertices()];
    let mut worst = 0.0f64;
    for (k, &v) in plan.order.iter().enumerate() {
        if k > 0 {
            let e = plan.tree[k - 1];
            let from = g.edges[e].other(v);
            z[v] = z[from] + crate::graph::oriented_step(g, cfg, e, from);
        }
        for &e in &plan.closing[k] {
            worst = worst.max(residual(g, &z, e, cfg.sign(e)));
        }
    }
    worst
}

pub fn solve_configuration(
    g: &ConfigGraph,
    dec: &Decomposition,
    cycle_tol: f64,
) -> Result<SolverReport> {
    let started = Instant::now();
    let mut chosen = Configuration::uniform(g.n_edges(), 1);
    let mut classes = Vec::new();
    let mut nodes = 0;
    let mut objective = 0.0;
    let mut max_residual = 0.0f64;

    for &e in &dec.free_edges {
        let edge = &g.edges[e];
        classes.push(AmbiguityClass {
            kind: ClassKind::FreeEdge,
            unit: Unit::FreeEdge(dec.free_edges.binary_search(&e).expect("listed bridge")),
            edges: vec![e],
            vertices: vec![edge.i, edge.j],
            candidates: [vec![1], vec![-1]],
            objective: 0.0,
        });
    }
    let global = dec.free_edges.is_empty() && dec.free_parts.len() == 1;
    for (k, part) in dec.free_parts.iter().enumerate() {
        let sol = solve_part(g, &part.edges, &part.vertices);
        nodes += sol.nodes;
        if sol.max_residual > cycle_tol {
            return Err(SfsError::InfeasibleConfiguration {
                residual: sol.max_residual,
                tol: cycle_tol,
            });
        }
        for (&e, &s) in part.edges.iter().zip(&sol.signs) {
            chosen.signs[e] = s;
        }
        objective += sol.objective;
        max_residual = max_residual.max(sol.max_residual);
        let reversed = sol.signs.iter().map(|s| -s).collect();
        classes.push(AmbiguityClass {
            kind: if global {
                ClassKind::Global
            } else {
                ClassKind::FreePart
            },
            unit: Unit::FreePart(k),
            edges: part.edges.clone(),
            vertices: part.vertices.clone(),
            candidates: [sol.signs, reversed],
            objective: sol.objective,
        });
    }
    classes.sort_by_key(|c| c.edges[0]);

    Ok(SolverReport {
        n_vertices: g.n_vertices(),
        edges: g.edges.iter().map(|e| (e.i, e.j, e.w)).collect(),
        chosen,
        classes,
        objective,
        max_residual,
        cycle_tol,
        nodes_explored: nodes,
        wall_time_s: Some(started.elapsed().as_secs_f64()),
    })
}

/// Every way of resolving the classes, class `k` being bit `k` of the index.
pub fn enumerate_candidates(report: &SolverReport, limit: usize) -> Vec<Configuration> {
    let n = report.classes.len();
    let total = if n >= usize::BITS as usize {
        usize::MAX
    } else {
        1usize << n
    };
    (0..total.min(limit.max(1)))
        .map(|index| {
            let choices: Vec<usize> = (0..n).map(|k| (index >> k) & 1).collect();
            report.apply_choices(&choices)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::decompose;

    fn solve(g: &ConfigGraph) -> SolverReport {
        solve_configuration(g, &decompose(g), 1e-9 + 0.1 * g.mean_weight()).unwrap()
    }

    #[test]
    fn single_edge_is_one_free_edge_class() {
        let g = ConfigGraph::from_weighted_edges(2, &[(0, 1, 0.8)]).unwrap();
        let r = solve(&g);
        assert_eq!(r.classes.len(), 1);
        assert_eq!(r.classes[0].kind, ClassKind::FreeEdge);
        assert_eq!(r.classes[0].candidates, [vec![1], vec![-1]]);
        assert_eq!(r.objective, 0.0);
        assert_eq!(r.chosen.signs, vec![1]);
    }

    #[test]
    fn closing_triangle_is_found() {
        // 0 -> 1 up 1, 1 -> 2 up 1, 0 -> 2 up 2.
        let g = ConfigGraph::from_weighted_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 2.0)]).unwrap();
        let r = solve(&g);
        assert_eq!(r.classes.len(), 1);
        assert_eq!(r.classes[0].kind, ClassKind::Global);
        assert_eq!(r.objective, 0.0);
        assert_eq!(r.chosen.signs, vec![1, 1, 1]);
        assert_eq!(r.classes[0].candidates[1], vec![-1, -1, -1]);

        // Exhaustive check over all eight assignments.
        let zeros: Vec<Vec<i8>> = (0..8u8)
            .map(|m| (0..3).map(|b| if m >> b & 1 == 0 { 1 } else { -1 }).collect())
            .filter(|s: &Vec<i8>| {
                let cfg = Configuration::from_signs(s.clone()).unwrap();
                part_objective(&g, &[0, 1, 2], &[0, 1, 2], &cfg) == 0.0
            })
            .collect();
        assert_eq!(zeros, vec![vec![1, 1, 1], vec![-1, -1, -1]]);
    }

    #[test]
    fn two_triangles_and_a_bridge() {
        let g = ConfigGraph::from_weighted_edges(
            6,
            &[
                (0, 1, 1.0),
                (1, 2, 1.0),
                (0, 2, 2.0),
                (2, 3, 1.5),
                (3, 4, 1.0),
                (4, 5, 0.5),
                (3, 5, 0.5),
            ],
        )
        .unwrap();
        let r = solve(&g);
        let kinds: Vec<ClassKind> = r.classes.iter().map(|c| c.kind).collect();
        assert_eq!(kinds, vec![ClassKind::FreePart, ClassKind::FreeEdge, ClassKind::FreePart]);
        let all = enumerate_candidates(&r, 100);
        assert_eq!(all.len(), 8);
        let mut distinct = all.clone();
        distinct.sort_by(|a, b| a.signs.cmp(&b.signs));
        distinct.dedup();
        assert_eq!(distinct.len(), 8);
        assert_eq!(all[0], r.chosen);
        assert_eq!(enumerate_candidates(&r, 3).len(), 3);
    }

    #[test]
    fn candidate_counts() {
        let empty = ConfigGraph::from_weighted_edges(1, &[]).unwrap();
        let r = solve(&empty);
        assert!(r.classes.is_empty());
        assert_eq!(enumerate_candidates(&r, 10).len(), 1);
        let g = ConfigGraph::from_weighted_edges(2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(enumerate_candidates(&solve(&g), 10).len(), 2);
    }

    #[test]
    fn inconsistent_triangle_is_infeasible() {
        let g = ConfigGraph::from_weighted_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 5.0)]).unwrap();
        assert!(matches!(
            solve_configuration(&g, &decompose(&g), 0.1),
            Err(SfsError::InfeasibleConfiguration { .. })
        ));
    }

    #[test]
    fn report_json_is_stable() {
        let g = ConfigGraph::from_weighted_edges(2, &[(0, 1, 0.123456789)]).unwrap();
        let mut r = solve(&g);
        r.wall_time_s = None;
        let text = r.to_json();
        assert!(text.contains("0.123457"));
        assert!(!text.contains("wall_time_s"));
        let back = SolverReport::from_json(&text).unwrap();
        assert_eq!(back.classes, r.classes);
        assert!(back.matches_graph(&g));
        assert_eq!(text, back.to_json());
    }
}
