//! Brute-force oracle for small-N Gilbert-Steiner instances: enumerate full
//! Steiner topologies, optimise Steiner point positions for the convex
//! fixed-topology cost `sum_e Psi(g^e) |x_u - x_v|`, and return the
//! `Psi_alpha`-mass minimiser.
//!
//! Degenerate topologies are reachable through node collapse during position
//! optimisation, so only full topologies (all terminals degree 1, all Steiner
//! nodes degree 3) are enumerated; their count is `(2N-5)!!`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::currents::{current_from_graph, psi_mass, AcyclicGraph, MultiplicityCurrent, PsiNorm};
use crate::error::{Error, Result};
use crate::geometry::TerminalSet;
use crate::linalg;

/// Positions closer than this to a neighbour collapse onto it.
pub const COLLAPSE_TOL: f64 = 1e-7;

/// Target first-order stationarity of the smoothed fixed-topology cost.
pub const STATIONARITY_TOL: f64 = 1e-8;

/// A tree on `N` terminals (sink last) plus Steiner nodes indexed from `N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SteinerTopology {
    pub n_terminals: usize,
    pub edges: Vec<(usize, usize)>,
}

impl SteinerTopology {
    pub fn steiner_count(&self) -> usize {
        let nodes = self
            .edges
            .iter()
            .flat_map(|&(u, v)| [u, v])
            .max()
            .map_or(0, |m| m + 1);
        nodes.saturating_sub(self.n_terminals)
    }

    fn node_count(&self) -> usize {
        self.n_terminals + self.steiner_count()
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    /// Parent pointers towards the sink.
    fn parents(&self) -> Vec<usize> {
        let sink = self.n_terminals - 1;
        let adj = self.adjacency();
        let mut parent = vec![usize::MAX; self.node_count()];
        parent[sink] = sink;
        let mut stack = vec![sink];
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if parent[v] == usize::MAX {
                    parent[v] = u;
                    stack.push(v);
                }
            }
        }
        parent
    }

    /// Per-edge multiplicity labels: `g^e_i = 1` iff edge `e` lies on the
    /// tree path from source terminal `i` to the sink.
    pub fn labels(&self) -> Vec<Vec<i64>> {
        let m = self.n_terminals - 1;
        let parent = self.parents();
        let mut labels = vec![vec![0i64; m]; self.edges.len()];
        let edge_index: std::collections::HashMap<(usize, usize), usize> = self
            .edges
            .iter()
            .enumerate()
            .flat_map(|(k, &(u, v))| [((u, v), k), ((v, u), k)])
            .collect();
        for i in 0..m {
            let mut u = i;
            while parent[u] != u {
                let k = edge_index[&(u, parent[u])];
                labels[k][i] = 1;
                u = parent[u];
            }
        }
        labels
    }

    /// Path from terminal `i` to the sink as a node index list.
    fn path_to_sink(&self, i: usize) -> Vec<usize> {
        let parent = self.parents();
        let mut path = vec![i];
        let mut u = i;
        while parent[u] != u {
            u = parent[u];
            path.push(u);
        }
        path
    }
}

/// All full Steiner topologies for `N` terminals, by terminal insertion into
/// existing edges. Count is `(2N-5)!!`.
pub fn enumerate_topologies(n_terminals: usize) -> Result<Vec<SteinerTopology>> {
    if !(3..=6).contains(&n_terminals) {
        return Err(Error::input(format!(
            "topology enumeration supports 3 <= N <= 6, got {n_terminals}"
        )));
    }
    // Base: three terminals joined to Steiner node N.
    let mut topos = vec![SteinerTopology {
        n_terminals,
        edges: vec![(0, n_terminals), (1, n_terminals), (2, n_terminals)],
    }];
    for t in 3..n_terminals {
        // Inserting terminal t adds Steiner node N + (t - 2).
        let s_new = n_terminals + t - 2;
        let mut next = Vec::new();
        for topo in &topos {
            for (k, &(u, v)) in topo.edges.iter().enumerate() {
                let mut edges = topo.edges.clone();
                edges.remove(k);
                edges.push((u, s_new));
                edges.push((s_new, v));
                edges.push((t, s_new));
                next.push(SteinerTopology {
                    n_terminals,
                    edges,
                });
            }
        }
        topos = next;
    }
    Ok(topos)
}

/// Fixed-topology cost `sum_e Psi(g^e) |x_u - x_v|` at the given node
/// positions (terminals first, then Steiner nodes).
pub fn topology_cost(
    topo: &SteinerTopology,
    positions: &[Vec<f64>],
    weights: &[f64],
) -> f64 {
    topo.edges
        .iter()
        .zip(weights)
        .map(|(&(u, v), w)| w * linalg::dist(&positions[u], &positions[v]))
        .sum()
}

/// Result of one fixed-topology optimisation (or of the full solve).
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub topology: SteinerTopology,
    pub steiner_positions: Vec<Vec<f64>>,
    pub cost: f64,
    pub network: MultiplicityCurrent,
    /// Pairwise angles (radians) between incident edge directions per Steiner
    /// vertex; empty for collapsed vertices.
    pub angles: Vec<Vec<f64>>,
    /// Max-norm of the smoothed-cost gradient at the final iterate.
    pub stationarity: f64,
    /// Indices (enumeration order) of all topologies within 1e-9 of the
    /// optimal cost; meaningful on full solves only.
    pub tied_topologies: Vec<usize>,
}

/// Weiszfeld-style block update sweeps with edge-length smoothing
/// `sqrt(d^2 + mu^2)`, `mu` annealed `1e-3 -> 1e-9`.
fn relax_positions(
    topo: &SteinerTopology,
    terminals: &TerminalSet,
    weights: &[f64],
    start: Vec<Vec<f64>>,
) -> (Vec<Vec<f64>>, f64) {
    let n = terminals.n;
    let n_t = terminals.count();
    let m = topo.steiner_count();
    let adj = topo.adjacency();
    let edge_weight: std::collections::HashMap<(usize, usize), f64> = topo
        .edges
        .iter()
        .zip(weights)
        .flat_map(|(&(u, v), &w)| [((u, v), w), ((v, u), w)])
        .collect();
    let mut pos: Vec<Vec<f64>> = terminals.points.iter().cloned().chain(start).collect();

    let mut mu = 1e-3;
    let mut grad_inf = f64::INFINITY;
    while mu >= 1e-9 {
        for _sweep in 0..600 {
            let mut max_move = 0.0f64;
            for s in n_t..n_t + m {
                let mut num = vec![0.0; n];
                let mut den = 0.0;
                for &nb in &adj[s] {
                    let w = edge_weight[&(s, nb)];
                    let d2 = pos[s]
                        .iter()
                        .zip(&pos[nb])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>();
                    let l = (d2 + mu * mu).sqrt();
                    let c = w / l;
                    for (acc, v) in num.iter_mut().zip(&pos[nb]) {
                        *acc += c * v;
                    }
                    den += c;
                }
                let new: Vec<f64> = num.iter().map(|v| v / den).collect();
                max_move = max_move.max(linalg::dist(&new, &pos[s]));
                pos[s] = new;
            }
            if max_move < 1e-2 * mu {
                break;
            }
        }
        mu *= 0.1;
    }
    // Stationarity of the smoothed cost at the final mu (1e-9): extra sweeps
    // until the gradient max-norm settles.
    let mu_final = 1e-9;
    for _ in 0..4000 {
        grad_inf = 0.0f64;
        for s in n_t..n_t + m {
            let mut g = vec![0.0; n];
            for &nb in &adj[s] {
                let w = edge_weight[&(s, nb)];
                let diff = linalg::sub(&pos[s], &pos[nb]);
                let l = (linalg::dot(&diff, &diff) + mu_final * mu_final).sqrt();
                for (gi, di) in g.iter_mut().zip(&diff) {
                    *gi += w * di / l;
                }
            }
            grad_inf = grad_inf.max(g.iter().fold(0.0f64, |acc, v| acc.max(v.abs())));
        }
        if grad_inf <= STATIONARITY_TOL {
            break;
        }
        for s in n_t..n_t + m {
            let mut num = vec![0.0; n];
            let mut den = 0.0;
            for &nb in &adj[s] {
                let w = edge_weight[&(s, nb)];
                let diff = linalg::sub(&pos[s], &pos[nb]);
                let l = (linalg::dot(&diff, &diff) + mu_final * mu_final).sqrt();
                let c = w / l;
                for (acc, v) in num.iter_mut().zip(&pos[nb]) {
                    *acc += c * v;
                }
                den += c;
            }
            pos[s] = num.iter().map(|v| v / den).collect();
        }
    }
    (pos[n_t..].to_vec(), grad_inf)
}

/// Snap every node within [`COLLAPSE_TOL`] of another onto a shared
/// representative; terminals win, otherwise the lowest node index.
fn snap_clusters(terminals: &TerminalSet, steiner: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n_t = terminals.count();
    let mut pos: Vec<Vec<f64>> = terminals.points.iter().cloned().chain(steiner.iter().cloned()).collect();
    let total = pos.len();
    let mut parent: Vec<usize> = (0..total).collect();
    fn root(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..total {
        for j in i + 1..total {
            if linalg::dist(&pos[i], &pos[j]) < COLLAPSE_TOL {
                let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
                if ri != rj {
                    // Lower index (terminals first) is the representative.
                    let (lo, hi) = (ri.min(rj), ri.max(rj));
                    parent[hi] = lo;
                }
            }
        }
    }
    for i in 0..total {
        let r = root(&mut parent, i);
        if r != i {
            pos[i] = pos[r].clone();
        }
    }
    pos[n_t..].to_vec()
}

/// Optimise Steiner point positions for one topology and build the canonical
/// network by collapsing degenerate nodes.
pub fn optimize_positions(
    topo: &SteinerTopology,
    terminals: &TerminalSet,
    psi: &PsiNorm,
    seed: u64,
) -> Result<SolveResult> {
    let n = terminals.n;
    let n_t = terminals.count();
    let m = topo.steiner_count();
    let labels = topo.labels();
    let weights: Vec<f64> = labels.iter().map(|g| psi.eval_ints(g)).collect();

    // Three starts: sink-biased, centroid, seeded random in the hull box.
    let sink = terminals.sink().to_vec();
    let centroid = {
        let mut c = vec![0.0; n];
        for p in &terminals.points {
            for (ci, v) in c.iter_mut().zip(p) {
                *ci += v / n_t as f64;
            }
        }
        c
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|a| {
            let vals = terminals.points.iter().map(|p| p[a]);
            (
                vals.clone().fold(f64::INFINITY, f64::min),
                vals.fold(f64::NEG_INFINITY, f64::max),
            )
        })
        .unzip();
    let jitter = |base: &[f64], k: usize| -> Vec<f64> {
        base.iter()
            .enumerate()
            .map(|(a, v)| v + 1e-3 * ((k + 1) as f64) * ((a + 1) as f64 * 0.37).sin())
            .collect()
    };
    let starts: Vec<Vec<Vec<f64>>> = vec![
        (0..m).map(|k| jitter(&sink, k)).collect(),
        (0..m).map(|k| jitter(&centroid, k)).collect(),
        (0..m)
            .map(|_| {
                (0..n)
                    .map(|a| rng.gen_range(lo[a].min(hi[a] - 1e-9)..=hi[a].max(lo[a] + 1e-9)))
                    .collect()
            })
            .collect(),
    ];

    let mut best: Option<(f64, Vec<Vec<f64>>, f64)> = None;
    for start in starts {
        let (pos, stat) = relax_positions(topo, terminals, &weights, start);
        let all: Vec<Vec<f64>> = terminals.points.iter().cloned().chain(pos.iter().cloned()).collect();
        let cost = topology_cost(topo, &all, &weights);
        if best.as_ref().map_or(true, |(c, _, _)| cost < *c) {
            best = Some((cost, pos, stat));
        }
    }
    let (_, steiner, stationarity) = best.unwrap();
    let steiner = snap_clusters(terminals, &steiner);

    // Canonical network: tree paths through the snapped positions.
    let all_pos: Vec<Vec<f64>> = terminals
        .points
        .iter()
        .cloned()
        .chain(steiner.iter().cloned())
        .collect();
    let mut paths = Vec::with_capacity(n_t - 1);
    for i in 0..n_t - 1 {
        let mut path: Vec<Vec<f64>> = Vec::new();
        for u in topo.path_to_sink(i) {
            let p = all_pos[u].clone();
            if path.last().map_or(true, |q| linalg::dist(q, &p) > COLLAPSE_TOL) {
                path.push(p);
            }
        }
        paths.push(path);
    }
    let network = current_from_graph(&AcyclicGraph::new(terminals.clone(), paths)?)?;
    let cost = psi_mass(&network, psi);

    // Angle report for non-collapsed degree-3 Steiner vertices.
    let adj = topo.adjacency();
    let mut angles = Vec::with_capacity(m);
    for s in n_t..n_t + m {
        let xs = &all_pos[s];
        let dirs: Vec<Vec<f64>> = adj[s]
            .iter()
            .filter(|&&nb| linalg::dist(xs, &all_pos[nb]) > COLLAPSE_TOL)
            .map(|&nb| linalg::normalize(&linalg::sub(&all_pos[nb], xs)))
            .collect();
        if dirs.len() == adj[s].len() {
            let mut a = Vec::new();
            for i in 0..dirs.len() {
                for j in i + 1..dirs.len() {
                    a.push(linalg::dot(&dirs[i], &dirs[j]).clamp(-1.0, 1.0).acos());
                }
            }
            angles.push(a);
        } else {
            angles.push(Vec::new());
        }
    }

    Ok(SolveResult {
        topology: topo.clone(),
        steiner_positions: steiner,
        cost,
        network,
        angles,
        stationarity,
        tied_topologies: Vec::new(),
    })
}

/// Lexicographic comparison of canonical networks by edge midpoints, used to
/// break exact cost ties deterministically.
fn network_order(a: &MultiplicityCurrent, b: &MultiplicityCurrent) -> std::cmp::Ordering {
    let key = |c: &MultiplicityCurrent| -> Vec<Vec<f64>> {
        c.sorted()
            .edges
            .iter()
            .map(|e| linalg::scale(&linalg::add(&e.a, &e.b), 0.5))
            .collect()
    };
    let (ka, kb) = (key(a), key(b));
    for (ma, mb) in ka.iter().zip(&kb) {
        for (x, y) in ma.iter().zip(mb) {
            let o = x.total_cmp(y);
            if !o.is_eq() {
                return o;
            }
        }
    }
    ka.len().cmp(&kb.len())
}

/// Solve the instance exactly: best result over all enumerated topologies,
/// optimised in parallel, ties broken by lexicographic edge-midpoint order.
pub fn solve_exact(terminals: &TerminalSet, psi: &PsiNorm, seed: u64) -> Result<SolveResult> {
    let n_t = terminals.count();
    if n_t == 2 {
        let topo = SteinerTopology {
            n_terminals: 2,
            edges: vec![(0, 1)],
        };
        let network = current_from_graph(&AcyclicGraph::new(
            terminals.clone(),
            vec![vec![terminals.points[0].clone(), terminals.sink().to_vec()]],
        )?)?;
        return Ok(SolveResult {
            cost: psi_mass(&network, psi),
            topology: topo,
            steiner_positions: Vec::new(),
            network,
            angles: Vec::new(),
            stationarity: 0.0,
            tied_topologies: vec![0],
        });
    }
    let topos = enumerate_topologies(n_t)?;
    let results: Vec<SolveResult> = topos
        .par_iter()
        .enumerate()
        .map(|(k, t)| optimize_positions(t, terminals, psi, seed.wrapping_add(k as u64)))
        .collect::<Result<Vec<_>>>()?;
    let best_cost = results
        .iter()
        .map(|r| r.cost)
        .fold(f64::INFINITY, f64::min);
    let tied: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.cost <= best_cost + 1e-9)
        .map(|(k, _)| k)
        .collect();
    let mut best = results
        .into_iter()
        .filter(|r| r.cost <= best_cost + 1e-9)
        .min_by(|a, b| {
            a.cost
                .total_cmp(&b.cost)
                .then_with(|| network_order(&a.network, &b.network))
        })
        .unwrap();
    best.tied_topologies = tied;
    Ok(best)
}

/// Pairwise angle triples at active degree-3 Steiner vertices of a result.
pub fn angle_report(result: &SolveResult) -> Vec<Vec<f64>> {
    result.angles.clone()
}
