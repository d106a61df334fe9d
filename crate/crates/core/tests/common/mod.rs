//! Brute-force oracles and random inputs shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use sfs_core::graph::{ConfigGraph, Configuration, Decomposition};
use sfs_core::maxcut::part_objective;
use sfs_core::{GridSpec, HeightField};

/// Random simple graph on `1..=max_n` vertices with unit weights.
pub fn random_graph(rng: &mut impl Rng, max_n: usize) -> ConfigGraph {
    let n = rng.random_range(1..=max_n);
    let p = rng.random_range(0.1..0.6);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j, 1.0));
            }
        }
    }
    ConfigGraph::from_weighted_edges(n, &edges).unwrap()
}

/// Random graph with at most `max_m` edges whose weights are exact depth
/// differences of random vertex heights, so a zero-residual sign choice
/// exists. Returns the graph and the heights.
pub fn random_feasible_graph(rng: &mut impl Rng, max_n: usize, max_m: usize) -> (ConfigGraph, Vec<f64>) {
    let n = rng.random_range(2..=max_n);
    let z: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    // Fisher-Yates, then keep a random prefix.
    for k in (1..pairs.len()).rev() {
        pairs.swap(k, rng.random_range(0..=k));
    }
    let m = rng.random_range(1..=max_m.min(pairs.len()));
    let edges: Vec<(usize, usize, f64)> = pairs[..m]
        .iter()
        .map(|&(i, j)| (i, j, (z[j] - z[i]).abs()))
        .collect();
    (ConfigGraph::from_weighted_edges(n, &edges).unwrap(), z)
}

fn connected(g: &ConfigGraph, a: usize, b: usize, skip_edge: Option<usize>, skip_vertex: Option<usize>) -> bool {
    if Some(a) == skip_vertex || Some(b) == skip_vertex {
        return false;
    }
    let mut seen = vec![false; g.n_vertices()];
    let mut stack = vec![a];
    seen[a] = true;
    while let Some(v) = stack.pop() {
        if v == b {
            return true;
        }
        for &(u, e) in g.neighbors(v) {
            if Some(e) == skip_edge || Some(u) == skip_vertex || seen[u] {
                continue;
            }
            seen[u] = true;
            stack.push(u);
        }
    }
    false
}

/// Bridges by edge removal: `e` is a bridge iff its ends disconnect without it.
pub fn oracle_bridges(g: &ConfigGraph) -> Vec<usize> {
    (0..g.n_edges())
        .filter(|&e| !connected(g, g.edges[e].i, g.edges[e].j, Some(e), None))
        .collect()
}

/// Edge sets of the blocks with more than one edge. Two edges meeting at `v`
/// share a block iff their far ends stay connected once `v` is removed.
pub fn oracle_parts(g: &ConfigGraph) -> BTreeSet<Vec<usize>> {
    let m = g.n_edges();
    let mut root: Vec<usize> = (0..m).collect();
    fn find(root: &mut [usize], x: usize) -> usize {
        let mut x = x;
        while root[x] != x {
            root[x] = root[root[x]];
            x = root[x];
        }
        x
    }
    for v in 0..g.n_vertices() {
        let around = g.neighbors(v);
        for (k, &(a, e)) in around.iter().enumerate() {
            for &(b, f) in &around[k + 1..] {
                if connected(g, a, b, None, Some(v)) {
                    let (x, y) = (find(&mut root, e), find(&mut root, f));
                    root[x] = y;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for e in 0..m {
        let r = find(&mut root, e);
        groups.entry(r).or_default().push(e);
    }
    groups.into_values().filter(|edges| edges.len() > 1).collect()
}

/// Sum of every part's objective under `cfg`, in decomposition order.
pub fn total_objective(g: &ConfigGraph, dec: &Decomposition, cfg: &Configuration) -> f64 {
    dec.free_parts
        .iter()
        .map(|p| part_objective(g, &p.edges, &p.vertices, cfg))
        .sum()
}

/// Minimum of [`total_objective`] over all `2^m` sign vectors.
pub fn exhaustive_optimum(g: &ConfigGraph, dec: &Decomposition) -> f64 {
    let m = g.n_edges();
    (0..1u64 << m)
        .map(|bits| total_objective(g, dec, &signs_from_bits(m, bits)))
        .fold(f64::INFINITY, f64::min)
}

/// All optimal sign vectors of one part, restricted to its edges.
pub fn part_optima(g: &ConfigGraph, edges: &[usize], vertices: &[usize]) -> (f64, Vec<Vec<i8>>) {
    let mut best = f64::INFINITY;
    let mut winners = Vec::new();
    for bits in 0..1u64 << edges.len() {
        let mut cfg = Configuration::uniform(g.n_edges(), 1);
        for (k, &e) in edges.iter().enumerate() {
            cfg.signs[e] = if bits >> k & 1 == 1 { -1 } else { 1 };
        }
        let obj = part_objective(g, edges, vertices, &cfg);
        let signs: Vec<i8> = edges.iter().map(|&e| cfg.signs[e]).collect();
        if obj < best {
            best = obj;
            winners = vec![signs];
        } else if obj == best {
            winners.push(signs);
        }
    }
    (best, winners)
}

pub fn signs_from_bits(m: usize, bits: u64) -> Configuration {
    Configuration::from_signs((0..m).map(|k| if bits >> k & 1 == 1 { -1 } else { 1 }).collect()).unwrap()
}

/// Sign of each edge in the true surface: `+1` when the higher-id end is higher.
pub fn true_signs(g: &ConfigGraph, z: &[f64]) -> Vec<i8> {
    g.edges.iter().map(|e| if z[e.j] >= z[e.i] { 1 } else { -1 }).collect()
}

/// Random sum of Gaussians and a plane, rounded to multiples of 2^-24 so that
/// adding a dyadic constant is exact.
pub fn random_surface(rng: &mut impl Rng) -> HeightField {
    let n = rng.random_range(16..48);
    let grid = GridSpec::square(n, 1.0).unwrap();
    let terms: Vec<[f64; 4]> = (0..rng.random_range(1..5))
        .map(|_| {
            [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0.2..0.8),
            ]
        })
        .collect();
    let (tx, ty) = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
    let unit = 2f64.powi(-24);
    HeightField::from_fn(grid, |x, y| {
        let z: f64 = tx * x
            + ty * y
            + terms
                .iter()
                .map(|&[x0, y0, a, s]| a * (-((x - x0) / s).powi(2) - ((y - y0) / s).powi(2)).exp())
                .sum::<f64>();
        (z / unit).round() * unit
    })
    .unwrap()
}
