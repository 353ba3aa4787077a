//! Directed IS graph and Louvain communities on its symmetrized weights.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infosuff::{all_scores, Aggregation, ISMatrix, ISScore};
use crate::rng;

const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub score: f64,
    pub incoming_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ISGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    pub threshold: f64,
}

/// Keeps edge k→l when normalized IS(k→l) ≥ `threshold`, weighted by the
/// value clamped at zero. Nodes carry median scores.
pub fn build_graph(m: &ISMatrix, threshold: f64) -> Result<ISGraph> {
    let scores = if m.len() >= 2 {
        all_scores(m, Aggregation::Median, true)?
    } else {
        m.embedder_ids
            .iter()
            .map(|id| ISScore {
                embedder_id: id.clone(),
                score: 0.0,
                incoming_score: 0.0,
            })
            .collect()
    };
    build_graph_with_scores(m, threshold, &scores)
}

pub fn build_graph_with_scores(m: &ISMatrix, threshold: f64, scores: &[ISScore]) -> Result<ISGraph> {
    if threshold.is_nan() {
        return Err(Error::invalid("threshold is NaN"));
    }
    if scores.len() != m.len() {
        return Err(Error::DimensionMismatch {
            expected: m.len(),
            found: scores.len(),
        });
    }
    let nodes = scores
        .iter()
        .map(|s| GraphNode {
            id: s.embedder_id.clone(),
            score: s.score,
            incoming_score: s.incoming_score,
        })
        .collect();
    let mut edges = Vec::new();
    for source in 0..m.len() {
        for target in 0..m.len() {
            if let Some(r) = m.get(source, target).filter(|_| source != target) {
                if r.normalized_is >= threshold {
                    edges.push(GraphEdge {
                        source,
                        target,
                        weight: r.normalized_is.max(0.0),
                    });
                }
            }
        }
    }
    Ok(ISGraph {
        nodes,
        edges,
        threshold,
    })
}

impl ISGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Dense W' = (W + Wᵀ)/2.
    pub fn symmetric_weights(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut w = vec![vec![0.0; n]; n];
        for e in &self.edges {
            w[e.source][e.target] += e.weight;
        }
        let mut s = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                s[i][j] = 0.5 * (w[i][j] + w[j][i]);
            }
        }
        s
    }

    pub fn transpose(&self) -> ISGraph {
        ISGraph {
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| GraphEdge {
                    source: e.target,
                    target: e.source,
                    weight: e.weight,
                })
                .collect(),
            threshold: self.threshold,
        }
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph is_graph {\n");
        for n in &self.nodes {
            writeln!(out, "  {:?} [score={:.6}];", n.id, n.score).unwrap();
        }
        for e in &self.edges {
            writeln!(
                out,
                "  {:?} -> {:?} [weight={:.6}];",
                self.nodes[e.source].id, self.nodes[e.target].id, e.weight
            )
            .unwrap();
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Node index → community, numbered from 0 in order of first appearance.
    pub assignment: Vec<usize>,
    pub modularity: f64,
}

impl Partition {
    pub fn communities(&self) -> usize {
        self.assignment.iter().max().map_or(0, |m| m + 1)
    }

    pub fn to_csv(&self, g: &ISGraph) -> String {
        let mut out = String::from("embedder_id,community\n");
        for (n, c) in g.nodes.iter().zip(&self.assignment) {
            writeln!(out, "{},{c}", n.id).unwrap();
        }
        out
    }
}

/// Parses `embedder_id,community` rows back into (id, community) pairs.
pub fn communities_from_csv(text: &str) -> Result<Vec<(String, usize)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != "embedder_id,community" {
                return Err(Error::Csv {
                    line: 1,
                    msg: "expected header embedder_id,community".into(),
                });
            }
            continue;
        }
        let bad = |msg: &str| Error::Csv {
            line: i + 1,
            msg: msg.into(),
        };
        let (id, c) = line.split_once(',').ok_or_else(|| bad("expected 2 fields"))?;
        let c = c.trim().parse().map_err(|_| bad("community is not an integer"))?;
        out.push((id.to_string(), c));
    }
    Ok(out)
}

fn relabel(raw: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    raw.iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}

/// Q = (1/2m) Σ_ij [A_ij − γ k_i k_j / 2m] 1[c_i = c_j] on a dense
/// symmetric matrix. Zero when the graph carries no weight.
pub fn modularity_dense(a: &[Vec<f64>], assignment: &[usize], resolution: f64) -> f64 {
    let k: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    if two_m <= 0.0 {
        return 0.0;
    }
    let communities = assignment.iter().max().map_or(0, |m| m + 1);
    let mut internal = vec![0.0; communities];
    let mut total = vec![0.0; communities];
    for (i, row) in a.iter().enumerate() {
        total[assignment[i]] += k[i];
        for (j, &w) in row.iter().enumerate() {
            if assignment[i] == assignment[j] {
                internal[assignment[i]] += w;
            }
        }
    }
    internal
        .iter()
        .zip(&total)
        .map(|(&l, &t)| l / two_m - resolution * (t / two_m).powi(2))
        .sum()
}

pub fn modularity(g: &ISGraph, p: &Partition) -> Result<f64> {
    if p.assignment.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: g.len(),
            found: p.assignment.len(),
        });
    }
    Ok(modularity_dense(&g.symmetric_weights(), &p.assignment, 1.0))
}

/// One round of local moves. Returns the community of each node and
/// whether anything moved.
fn local_moves(a: &[Vec<f64>], resolution: f64, rng: &mut rng::Rng) -> (Vec<usize>, bool) {
    let n = a.len();
    let k: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut comm: Vec<usize> = (0..n).collect();
    let mut total = k.clone();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut moved_any = false;
    let mut links = vec![0.0; n];
    let mut touched = Vec::with_capacity(n);
    loop {
        let mut moved = false;
        for &i in &order {
            let own = comm[i];
            for (j, &w) in a[i].iter().enumerate() {
                if j != i && w > 0.0 {
                    if links[comm[j]] == 0.0 {
                        touched.push(comm[j]);
                    }
                    links[comm[j]] += w;
                }
            }
            total[own] -= k[i];
            let gain = |c: usize, links: &[f64]| links[c] - resolution * k[i] * total[c] / two_m;
            let mut best = own;
            let mut best_gain = gain(own, &links);
            for &c in &touched {
                let g = gain(c, &links);
                if g > best_gain + GAIN_EPS {
                    best = c;
                    best_gain = g;
                }
            }
            total[best] += k[i];
            if best != own {
                comm[i] = best;
                moved = true;
                moved_any = true;
            }
            for &c in &touched {
                links[c] = 0.0;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
    }
    (comm, moved_any)
}

fn aggregate(a: &[Vec<f64>], comm: &[usize], communities: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; communities]; communities];
    for (i, row) in a.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            out[comm[i]][comm[j]] += w;
        }
    }
    out
}

/// Louvain on a dense symmetric matrix: shuffled greedy local moves, then
/// aggregation, repeated until no node moves.
pub fn louvain_dense(a: &[Vec<f64>], resolution: f64, seed: u64) -> Result<Partition> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(Error::invalid("resolution must be positive"));
    }
    let n = a.len();
    if a.iter().any(|row| row.len() != n) {
        return Err(Error::invalid("weight matrix is not square"));
    }
    if a.iter().flatten().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    let two_m: f64 = a.iter().flatten().sum();
    if n == 0 || two_m <= 0.0 {
        return Ok(Partition {
            assignment: (0..n).collect(),
            modularity: 0.0,
        });
    }

    let mut rng = rng::seeded(rng::derive_seed(seed, &["louvain"]));
    let mut assignment: Vec<usize> = (0..n).collect();
    let mut level = a.to_vec();
    loop {
        let (comm, moved) = local_moves(&level, resolution, &mut rng);
        if !moved {
            break;
        }
        let comm = relabel(&comm);
        let communities = comm.iter().max().map_or(0, |m| m + 1);
        for c in assignment.iter_mut() {
            *c = comm[*c];
        }
        level = aggregate(&level, &comm, communities);
    }
    let assignment = relabel(&assignment);
    let modularity = modularity_dense(a, &assignment, resolution);
    Ok(Partition {
        assignment,
        modularity,
    })
}

pub fn louvain(g: &ISGraph, resolution: f64, seed: u64) -> Result<Partition> {
    louvain_dense(&g.symmetric_weights(), resolution, seed)
}
