//! Recovery-style initialisers: near-optimal admissible fields built around a
//! candidate network.
//!
//! For each component `i` the winding structure is prescribed by the closed
//! polygon `C_i` = reference curve `gamma_i` (sink to `P_i`) followed by the
//! network path `lambda_i` (`P_i` back to the sink). The base phase is the
//! half solid-angle potential of `C_i`, obtained by integrating its
//! Biot-Savart field over a spanning tree of lattice edges: `u = e^{i phi}`
//! is then single valued with winding one around every piece of the loop.
//! Near the loop the phase is blended into the exact transverse frame angle,
//! so the pinned datum is met without a jump and fields of components sharing
//! a network edge coincide on that edge's inner tube. The amplitude cutoff
//! `min(1, dist(x, lambda_i)/eps)` regularises the core, and values at
//! distance beyond `eps` stay unit.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::currents::{CurrentEdge, MultiplicityCurrent, COINCIDENCE_TOL};
use crate::error::{Error, Result};
use crate::field::grid::{GridSpec, NodeClass};
use crate::field::state::FieldState;
use crate::geometry::{DomainSpec, SegFrame, Segment, TerminalSet};
use crate::linalg;

/// The star network: one straight edge per source terminal into the sink.
pub fn star_network(ts: &TerminalSet) -> MultiplicityCurrent {
    let m = ts.count() - 1;
    let edges = ts
        .sources()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut g = vec![0i64; m];
            g[i] = 1;
            CurrentEdge {
                a: p.clone(),
                b: ts.sink().to_vec(),
                g,
            }
        })
        .collect();
    MultiplicityCurrent::new(ts.count(), edges).unwrap()
}

/// Uniformly random unit vectors on every valid node; pinned data applied.
pub fn random_init(grid: Arc<GridSpec>, eps: f64, seed: u64) -> FieldState {
    let vd = grid.vdim();
    let total = grid.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps: Vec<Vec<f64>> = (0..grid.components())
        .map(|_| {
            let mut comp = vec![0.0; total * vd];
            for chunk in comp.chunks_mut(vd) {
                loop {
                    let mut r2: f64 = 0.0;
                    for v in chunk.iter_mut() {
                        *v = rng.gen_range(-1.0..1.0);
                        r2 += *v * *v;
                    }
                    if r2 > 1e-4 && r2 <= 1.0 {
                        let inv = 1.0 / r2.sqrt();
                        chunk.iter_mut().for_each(|v| *v *= inv);
                        break;
                    }
                }
            }
            comp
        })
        .collect();
    FieldState::from_components(grid, comps, eps).unwrap()
}

/// Cone-capped inner-radius profile of one blending tube.
#[derive(Debug, Clone, Copy)]
struct TubeProfile {
    cap: f64,
    slope_start: f64,
    slope_end: f64,
    /// Blend shell thickness beyond the inner radius.
    w_extra: f64,
}

impl TubeProfile {
    fn rho0(&self, par: f64, len: f64) -> f64 {
        let t = par.clamp(0.0, len);
        self.cap
            .min(self.slope_start * t)
            .min(self.slope_end * (len - t))
            .max(0.0)
    }
}

/// One leg of the winding loop with its local-frame blending profile.
struct LoopSeg {
    frame: SegFrame,
    profile: TubeProfile,
}

impl LoopSeg {
    /// Claim strength in [0, 1]: 1 deep inside the inner tube (radially
    /// below `rho0 + offset`, axially interior), fading to 0 at the blend
    /// shell's outer radius and towards the segment ends. `h` sets the axial
    /// taper scale.
    fn claim(&self, par: f64, rho: f64, offset: f64, h: f64) -> f64 {
        let rho0 = self.profile.rho0(par, self.frame.len);
        let radial = 1.0 - smoothstep((rho - rho0 - offset) / self.profile.w_extra);
        let taper = 4.0 * h;
        let axial = smoothstep((par + h) / taper) * smoothstep((self.frame.len + h - par) / taper);
        radial * axial
    }
}

#[inline]
fn wrap_angle(mut a: f64) -> f64 {
    while a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    }
    while a <= -std::f64::consts::PI {
        a += 2.0 * std::f64::consts::PI;
    }
    a
}

#[inline]
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Biot-Savart field of the closed polygon, normalised to circulation `2 pi`
/// around the loop (right-handed with respect to the traversal direction).
fn biot_savart(loop_pts: &[Vec<f64>], x: &[f64]) -> [f64; 3] {
    let mut m = [0.0f64; 3];
    for w in loop_pts.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let ra = [x[0] - a[0], x[1] - a[1], x[2] - a[2]];
        let rb = [x[0] - b[0], x[1] - b[1], x[2] - b[2]];
        let c = [
            d[1] * ra[2] - d[2] * ra[1],
            d[2] * ra[0] - d[0] * ra[2],
            d[0] * ra[1] - d[1] * ra[0],
        ];
        let c2 = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
        if c2 < 1e-24 {
            continue;
        }
        let na = (ra[0] * ra[0] + ra[1] * ra[1] + ra[2] * ra[2]).sqrt();
        let nb = (rb[0] * rb[0] + rb[1] * rb[1] + rb[2] * rb[2]).sqrt();
        if na < 1e-12 || nb < 1e-12 {
            continue;
        }
        let proj = (d[0] * ra[0] + d[1] * ra[1] + d[2] * ra[2]) / na
            - (d[0] * rb[0] + d[1] * rb[1] + d[2] * rb[2]) / nb;
        let s = 0.5 * proj / c2;
        m[0] += s * c[0];
        m[1] += s * c[1];
        m[2] += s * c[2];
    }
    m
}

/// Phase increment along the straight lattice edge `p -> q` by composite
/// Gauss quadrature; more points close to the loop where the field bends.
fn edge_increment(loop_pts: &[Vec<f64>], p: &[f64], q: &[f64], near_loop: bool) -> f64 {
    let dir = [q[0] - p[0], q[1] - p[1], q[2] - p[2]];
    let panels = if near_loop { 8 } else { 1 };
    let g = 0.5 / 3.0f64.sqrt();
    let mut total = 0.0;
    for k in 0..panels {
        let mid = (k as f64 + 0.5) / panels as f64;
        for s in [-1.0, 1.0] {
            let t = mid + s * g / panels as f64;
            let x = [p[0] + t * dir[0], p[1] + t * dir[1], p[2] + t * dir[2]];
            let m = biot_savart(loop_pts, &x);
            total += (m[0] * dir[0] + m[1] * dir[1] + m[2] * dir[2]) / (2.0 * panels as f64);
        }
    }
    total
}

/// Reconstruct the polyline path of component `i` (source to sink) from the
/// edges of a canonical current.
pub fn component_path(
    net: &MultiplicityCurrent,
    ts: &TerminalSet,
    i: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut edges: Vec<&CurrentEdge> = net.edges.iter().filter(|e| e.g[i] != 0).collect();
    if edges.iter().any(|e| e.g[i] != 1) {
        return Err(Error::input(format!(
            "component {i} carries a multiplicity other than one"
        )));
    }
    let mut path = vec![ts.points[i].clone()];
    let sink = ts.sink();
    let mut guard = 0;
    while linalg::dist(path.last().unwrap(), sink) > COINCIDENCE_TOL {
        guard += 1;
        if guard > net.edges.len() + 2 {
            return Err(Error::input(format!("component {i} path does not reach the sink")));
        }
        let here = path.last().unwrap().clone();
        let pos = edges
            .iter()
            .position(|e| linalg::dist(&e.a, &here) <= COINCIDENCE_TOL)
            .ok_or_else(|| {
                Error::input(format!("component {i} path breaks at {here:?}"))
            })?;
        let e = edges.remove(pos);
        path.push(e.b.clone());
    }
    if !edges.is_empty() {
        return Err(Error::input(format!(
            "component {i} has {} edges off its source-sink path",
            edges.len()
        )));
    }
    Ok(path)
}

/// Build the recovery field for every component around `net` at scale `eps`.
///
/// `net` must be a canonical acyclic current supported in the closed domain
/// with every edge clear of the open tube interiors (displace it with
/// `polyhedral_approximate` first when needed).
pub fn recovery_init(
    ds: &DomainSpec,
    grid: Arc<GridSpec>,
    net: &MultiplicityCurrent,
    eps: f64,
) -> Result<FieldState> {
    if ds.dim() != 3 {
        return Err(Error::input(
            "the recovery initialiser is implemented for n = 3 only",
        ));
    }
    if eps <= 0.0 {
        return Err(Error::input("eps must be > 0"));
    }
    let h = grid.h;
    let m = grid.components();
    if net.components() != m {
        return Err(Error::input("network and grid disagree on N"));
    }

    // Network edges must avoid open tube interiors away from terminals.
    for e in &net.edges {
        for k in 1..8 {
            let t = k as f64 / 8.0;
            let p = linalg::axpy(&e.a, t, &linalg::sub(&e.b, &e.a));
            let terminal = ds
                .terminals
                .points
                .iter()
                .any(|q| linalg::dist(q, &p) < 2.0 * h);
            if !terminal && ds.in_any_tube_closure(&p) {
                return Err(Error::input(
                    "network edge runs through a reference tube; displace it into the open domain first",
                ));
            }
        }
    }

    // Inner-tube profiles per network edge, shared by every component that
    // traverses the edge so their local fields coincide exactly.
    let profiles = edge_profiles(ds, net, grid.h, eps)?;

    let mut comps: Vec<Vec<f64>> = Vec::with_capacity(m);
    for i in 0..m {
        let lambda = component_path(net, &ds.terminals, i)?;
        let comp = build_component_field(ds, &grid, i, &lambda, &profiles, eps)?;
        comps.push(comp);
    }
    let mut fs = FieldState::from_components(grid, comps, eps)?;
    fs.apply_pinned();
    Ok(fs)
}

/// Inner-tube profile for every network edge: the cap comes from the
/// clearances against other edges (hard resolvability limit) and against the
/// excised tube walls; the end slopes taper the tube where structures meet at
/// the shared terminal.
fn edge_profiles(
    ds: &DomainSpec,
    net: &MultiplicityCurrent,
    h: f64,
    eps: f64,
) -> Result<std::collections::HashMap<(Vec<i64>, Vec<i64>), TubeProfile>> {
    let quant = |x: &[f64]| -> Vec<i64> { x.iter().map(|v| (v / 1e-9).round() as i64).collect() };
    let mut out = std::collections::HashMap::new();
    for (k, e) in net.edges.iter().enumerate() {
        let e_dir = e.dir();
        let e_len = e.len();
        // Clearance to non-adjacent network edges; edges sharing an endpoint
        // form one continuous tube (collinear continuation) or meet at an
        // angle handled by the end-slope tapering below.
        let mut lambda_gap = f64::INFINITY;
        for (l, f) in net.edges.iter().enumerate() {
            if l == k {
                continue;
            }
            let shares = [&e.a, &e.b]
                .iter()
                .any(|p| linalg::dist(p, &f.a) < 1e-9 || linalg::dist(p, &f.b) < 1e-9);
            if shares {
                continue;
            }
            lambda_gap =
                lambda_gap.min(linalg::segment_segment_distance(&e.a, &e.b, &f.a, &f.b));
        }
        // Clearance to the walls of excised tubes that do not emanate from
        // one of the edge's own endpoints (those are covered by the end-slope
        // taper below).
        let mut wall_gap = f64::INFINITY;
        let nsamp = 24;
        for (j, tubes) in ds.tubes.iter().enumerate() {
            for (tube, fr) in tubes.iter().zip(ds.curve_frames(j)) {
                let shared = [&e.a, &e.b].iter().any(|p| {
                    linalg::dist(p, &tube.segment.a) < 1e-9
                        || linalg::dist(p, &tube.segment.b) < 1e-9
                });
                if shared {
                    continue;
                }
                for s in 0..=nsamp {
                    let t = s as f64 / nsamp as f64;
                    let p = linalg::axpy(&e.a, t, &linalg::sub(&e.b, &e.a));
                    let d_axis = linalg::dist_to_segment(&p, &tube.segment.a, &tube.segment.b);
                    let (par, _) = fr.coords(&p);
                    wall_gap = wall_gap.min(d_axis - tube.radius_at(par));
                }
            }
        }
        // End slopes: taper against every structure leaving the shared
        // endpoint at an angle.
        let mut slopes = [0.5f64, 0.5];
        for (end, endpoint) in [(0usize, &e.a), (1usize, &e.b)] {
            let own_out = if end == 0 {
                e_dir.clone()
            } else {
                linalg::scale(&e_dir, -1.0)
            };
            let mut consider = |other_a: &[f64], other_b: &[f64]| {
                let (tail, head) = if linalg::dist(endpoint, other_a) < 1e-9 {
                    (other_a.to_vec(), other_b.to_vec())
                } else if linalg::dist(endpoint, other_b) < 1e-9 {
                    (other_b.to_vec(), other_a.to_vec())
                } else {
                    return;
                };
                let dir = linalg::normalize(&linalg::sub(&head, &tail));
                let cosang = linalg::dot(&own_out, &dir).clamp(-1.0, 1.0);
                let sinang = (1.0 - cosang * cosang).sqrt();
                // Near-collinear continuations share the tube; only genuine
                // angles force a taper.
                if sinang > 0.34 {
                    slopes[end] = slopes[end].min((0.45 * sinang).max(0.05));
                }
            };
            for (l, f) in net.edges.iter().enumerate() {
                if l != k {
                    consider(&f.a, &f.b);
                }
            }
            for tubes in &ds.tubes {
                for t in tubes {
                    consider(&t.segment.a, &t.segment.b);
                }
            }
        }
        let base = (2.0 * h).max(1.25 * eps);
        let lam_cap = 0.45 * lambda_gap;
        if lam_cap < 2.0 * h - 1e-12 {
            return Err(Error::input(format!(
                "inner tubes around network edges {k} and a neighbour cannot be separated at this grid resolution"
            )));
        }
        let wall_cap = if wall_gap.is_finite() {
            (0.5 * (wall_gap - 1.5 * h)).max(0.75 * h)
        } else {
            f64::INFINITY
        };
        let cap = base.min(lam_cap).min(wall_cap);
        let w_room = if wall_gap.is_finite() {
            (wall_gap - cap - h).max(h)
        } else {
            f64::INFINITY
        };
        let w_extra = (2.0 * cap).clamp(1.5 * h, 4.0 * h + cap).min(w_room);
        let profile = TubeProfile {
            cap,
            slope_start: slopes[0],
            slope_end: slopes[1],
            w_extra,
        };
        let _ = e_len;
        out.insert((quant(&e.a), quant(&e.b)), profile);
        out.insert((quant(&e.b), quant(&e.a)), profile);
    }
    Ok(out)
}

fn build_component_field(
    ds: &DomainSpec,
    grid: &GridSpec,
    i: usize,
    lambda: &[Vec<f64>],
    profiles: &std::collections::HashMap<(Vec<i64>, Vec<i64>), TubeProfile>,
    eps: f64,
) -> Result<Vec<f64>> {
    let h = grid.h;
    let vd = grid.vdim();
    let total = grid.node_count();
    let quant = |x: &[f64]| -> Vec<i64> { x.iter().map(|v| (v / 1e-9).round() as i64).collect() };

    // Closed loop: gamma_i (sink -> P_i) then lambda_i (P_i -> sink).
    let mut loop_pts: Vec<Vec<f64>> = ds.curves[i].clone();
    for p in lambda.iter().skip(1) {
        loop_pts.push(p.clone());
    }
    // Drop consecutive duplicates; a degenerate closing point is fine.
    loop_pts.dedup_by(|a, b| linalg::dist(a, b) <= COINCIDENCE_TOL);
    if linalg::dist(loop_pts.last().unwrap(), &loop_pts[0]) > COINCIDENCE_TOL {
        return Err(Error::invariant("winding loop failed to close"));
    }

    // Segment descriptors. Gamma legs blend from the excised tube wall (with
    // a two-cell standoff protecting the pinned shell); lambda legs blend
    // from the shared per-edge inner radius.
    let gamma_legs = ds.curves[i].len() - 1;
    let mut segs: Vec<LoopSeg> = Vec::new();
    let mut seg_endpoints: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for w in loop_pts.windows(2) {
        if linalg::dist(&w[0], &w[1]) <= COINCIDENCE_TOL {
            continue;
        }
        seg_endpoints.push((w[0].clone(), w[1].clone()));
    }
    for (k, (a, b)) in seg_endpoints.iter().enumerate() {
        let seg = Segment::new(a.clone(), b.clone())?;
        let frame = SegFrame::new(&seg);
        let is_gamma = k < gamma_legs;
        let profile = if is_gamma {
            TubeProfile {
                cap: ds.delta,
                slope_start: ds.gamma,
                slope_end: ds.gamma,
                w_extra: 2.5 * h,
            }
        } else {
            profiles
                .get(&(quant(a), quant(b)))
                .copied()
                .ok_or_else(|| Error::invariant("network edge without an inner-tube profile"))?
        };
        segs.push(LoopSeg { frame, profile });
    }
    // Pinned-shell standoff for the gamma legs.
    let gamma_offset = 2.2 * h;

    // Distance of every node to the loop (for BFS deferral) and to lambda
    // (for the amplitude cutoff).
    let lambda_spans: Vec<(Vec<f64>, Vec<f64>)> = seg_endpoints[gamma_legs..].to_vec();
    let dist_info: Vec<(f32, f32)> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let x = grid.point(&grid.unravel(idx));
            let mut d_loop = f64::INFINITY;
            for (a, b) in &seg_endpoints {
                d_loop = d_loop.min(linalg::dist_to_segment(&x, a, b));
            }
            let mut d_lam = f64::INFINITY;
            for (a, b) in &lambda_spans {
                d_lam = d_lam.min(linalg::dist_to_segment(&x, a, b));
            }
            (d_loop as f32, d_lam as f32)
        })
        .collect();

    // Spanning-tree integration of the Biot-Savart phase: deterministic
    // level-synchronous BFS from the lowest-index valid corner node, skipping
    // the thin band around the loop where quadrature degrades (those nodes
    // sit inside the exact-frame region anyway).
    let defer_band = 0.9 * h;
    let mut phase = vec![f64::NAN; total];
    let mut level = vec![u32::MAX; total];
    let root = (0..total)
        .find(|&idx| grid.class[idx] != NodeClass::Excluded && dist_info[idx].0 as f64 >= defer_band)
        .ok_or_else(|| Error::numerics("no admissible root node for phase integration"))?;
    phase[root] = std::f64::consts::FRAC_PI_2;
    level[root] = 0;
    let mut frontier = vec![root as u32];
    let mut lvl = 0u32;
    while !frontier.is_empty() {
        // Discover the next level.
        let mut next: Vec<u32> = frontier
            .par_iter()
            .flat_map_iter(|&uidx| {
                let idx = uidx as usize;
                let mi = grid.unravel(idx);
                let mut out: Vec<u32> = Vec::with_capacity(6);
                for a in 0..3 {
                    for dir in [-1i64, 1] {
                        let ni = mi[a] as i64 + dir;
                        if ni < 0 || ni as usize >= grid.dims[a] {
                            continue;
                        }
                        let nidx = (idx as i64 + dir * grid.strides[a] as i64) as usize;
                        if grid.class[nidx] == NodeClass::Excluded {
                            continue;
                        }
                        if (dist_info[nidx].0 as f64) < defer_band {
                            continue;
                        }
                        if level[nidx] == u32::MAX {
                            out.push(nidx as u32);
                        }
                    }
                }
                out
            })
            .collect();
        next.par_sort_unstable();
        next.dedup();
        // Deterministic parent: the lowest-index already-levelled neighbour.
        let increments: Vec<(u32, f64)> = next
            .par_iter()
            .map(|&uidx| {
                let idx = uidx as usize;
                let mi = grid.unravel(idx);
                let mut parent = usize::MAX;
                for a in 0..3 {
                    for dir in [-1i64, 1] {
                        let ni = mi[a] as i64 + dir;
                        if ni < 0 || ni as usize >= grid.dims[a] {
                            continue;
                        }
                        let nidx = (idx as i64 + dir * grid.strides[a] as i64) as usize;
                        if level[nidx] <= lvl && nidx < parent {
                            parent = nidx;
                        }
                    }
                }
                debug_assert!(parent != usize::MAX);
                let p = grid.point(&grid.unravel(parent));
                let q = grid.point(&mi);
                let near = (dist_info[idx].0 as f64) < 6.0 * h;
                (uidx, phase[parent] + edge_increment(&loop_pts, &p, &q, near))
            })
            .collect();
        lvl += 1;
        for &(uidx, phi) in &increments {
            phase[uidx as usize] = phi;
            level[uidx as usize] = lvl;
        }
        frontier = next;
    }


    // Assemble the field. Every structure near the node posts a claim in
    // [0, 1] towards its target phase (the transverse frame angle for loop
    // legs, the constant pi/2 for foreign tube walls and the outer box). The
    // claims are composed sequentially, lambda legs last: a full claim
    // overwrites the phase with its target exactly, so the pinned shell and
    // the inner tubes come out exact while partial claims stay continuous.
    //
    // The integrated phase sits a coherent offset away from each claim's
    // target (up to whole turns picked up along the spanning tree), so each
    // claim wraps its correction relative to the circular mean of that offset
    // over its own shell; this keeps the wrap branch seam out of the claim
    // support.
    let foreign: Vec<(usize, usize)> = (0..ds.curves.len())
        .filter(|&j| j != i)
        .flat_map(|j| (0..ds.tubes[j].len()).map(move |k| (j, k)))
        .collect();
    let box_band = (0.2 * grid.box_l).max(6.0 * h);
    // Per-loop-segment coherent offsets.
    let seg_offsets: Vec<f64> = segs
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let offset = if k < gamma_legs { gamma_offset } else { 0.0 };
            let (mut sn, mut cs) = (0.0, 0.0);
            for kp in 1..16 {
                let par = s.frame.len * kp as f64 / 16.0;
                let rho = s.profile.rho0(par, s.frame.len) + offset + 0.5 * s.profile.w_extra;
                for a in 0..8 {
                    let ang = a as f64 * std::f64::consts::FRAC_PI_4;
                    let p = s.frame.point(par, &[rho * ang.cos(), rho * ang.sin()]);
                    let idx = grid.nearest_node(&p);
                    if grid.class[idx] == NodeClass::Excluded || phase[idx].is_nan() {
                        continue;
                    }
                    let (_, perp) = s.frame.coords(&grid.point(&grid.unravel(idx)));
                    if linalg::norm(&perp) < 1e-9 {
                        continue;
                    }
                    let psi = phase[idx] - perp[1].atan2(perp[0]);
                    sn += psi.sin();
                    cs += psi.cos();
                }
            }
            if sn == 0.0 && cs == 0.0 {
                0.0
            } else {
                sn.atan2(cs)
            }
        })
        .collect();
    // Per-foreign-tube coherent offsets against the constant datum.
    let foreign_offsets: Vec<f64> = foreign
        .iter()
        .map(|&(j, t)| {
            let tube = &ds.tubes[j][t];
            let f = &ds.curve_frames(j)[t];
            let (mut sn, mut cs) = (0.0, 0.0);
            for kp in 1..16 {
                let par = f.len * kp as f64 / 16.0;
                let rho = tube.radius_at(par) + 2.2 * h + 2.0 * h;
                for a in 0..8 {
                    let ang = a as f64 * std::f64::consts::FRAC_PI_4;
                    let p = f.point(par, &[rho * ang.cos(), rho * ang.sin()]);
                    let idx = grid.nearest_node(&p);
                    if grid.class[idx] == NodeClass::Excluded || phase[idx].is_nan() {
                        continue;
                    }
                    let psi = phase[idx] - std::f64::consts::FRAC_PI_2;
                    sn += psi.sin();
                    cs += psi.cos();
                }
            }
            if sn == 0.0 && cs == 0.0 {
                0.0
            } else {
                sn.atan2(cs)
            }
        })
        .collect();
    let comp: Vec<f64> = (0..total)
        .into_par_iter()
        .flat_map_iter(|idx| {
            if grid.class[idx] == NodeClass::Excluded {
                return vec![0.0; vd].into_iter();
            }
            let x = grid.point(&grid.unravel(idx));
            let phi_bs = phase[idx];
            // (priority, strength, target, coherent offset), applied in
            // ascending priority.
            let mut claims: Vec<(u8, f64, f64, f64)> = Vec::new();
            // Outer box.
            let b_dist = x
                .iter()
                .map(|v| grid.box_l - v.abs())
                .fold(f64::INFINITY, f64::min);
            let beta_box = 1.0 - smoothstep((b_dist - 2.2 * h) / box_band);
            if beta_box > 0.0 {
                claims.push((0, beta_box, std::f64::consts::FRAC_PI_2, 0.0));
            }
            // Foreign tube walls.
            for (fi, &(j, t)) in foreign.iter().enumerate() {
                let tube = &ds.tubes[j][t];
                let f = &ds.curve_frames(j)[t];
                let (fpar, fperp) = f.coords(&x);
                if fpar < -2.0 * h || fpar > f.len + 2.0 * h {
                    continue;
                }
                let frho = linalg::norm(&fperp);
                let wall = tube.radius_at(fpar);
                let band = (2.0 * ds.delta).max(6.0 * h);
                let beta = 1.0 - smoothstep((frho - wall - 2.2 * h) / band);
                if beta > 0.0 {
                    claims.push((0, beta, std::f64::consts::FRAC_PI_2, foreign_offsets[fi]));
                }
            }
            // Loop legs: gamma before lambda.
            for (k, s) in segs.iter().enumerate() {
                let (par, perp) = s.frame.coords(&x);
                let rho = linalg::norm(&perp);
                if rho < 1e-12 {
                    continue;
                }
                let offset = if k < gamma_legs { gamma_offset } else { 0.0 };
                let beta = s.claim(par, rho, offset, h);
                if beta > 0.0 {
                    let theta = perp[1].atan2(perp[0]);
                    claims.push((if k < gamma_legs { 1 } else { 2 }, beta, theta, seg_offsets[k]));
                }
            }
            claims.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let mut phi = if phi_bs.is_nan() {
                // Unreached by the integration: deep inside some claim region.
                claims
                    .iter()
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .map_or(std::f64::consts::FRAC_PI_2, |c| c.2)
            } else {
                let mut phi = phi_bs;
                for &(_, beta, target, psi_bar) in &claims {
                    // Pull towards the branch of the target nearest the
                    // coherent offset of this claim's shell.
                    let delta = wrap_angle(phi - target - psi_bar) + psi_bar;
                    phi -= beta * delta;
                }
                phi
            };
            if !phi.is_finite() {
                phi = std::f64::consts::FRAC_PI_2;
            }
            // Amplitude cutoff around lambda and its vertices.
            let amp = ((dist_info[idx].1 as f64) / eps).min(1.0);
            vec![amp * phi.cos(), amp * phi.sin()].into_iter()
        })
        .collect();
    Ok(comp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::currents::{polyhedral_approximate, psi_mass, PsiNorm};
    use crate::field::energy::{total_energy, EnergyParams, DEFAULT_P_MAX};
    use crate::field::grid::build_grid;
    use crate::geometry::build_domain;

    fn two_point_setup(h: f64) -> (DomainSpec, Arc<GridSpec>, MultiplicityCurrent) {
        let ts = TerminalSet::new(3, vec![vec![-0.5, 0.0, 0.0], vec![0.5, 0.0, 0.0]]).unwrap();
        let ds = build_domain(&ts, 4.0 * h, 2.0, 0.8).unwrap();
        let grid = Arc::new(build_grid(&ds, h).unwrap());
        let net = star_network(&ts);
        let net = polyhedral_approximate(&net, &ds, ds.delta + 16.0 * h).unwrap();
        (ds, grid, net)
    }

    #[test]
    fn star_network_boundary() {
        let ts = TerminalSet::new(
            3,
            vec![vec![-1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]],
        )
        .unwrap();
        let net = star_network(&ts);
        assert_eq!(net.edges.len(), 2);
        let b = crate::currents::boundary_of(&net);
        assert_eq!(b.len(), 2);
        for comp in b {
            assert_eq!(comp.len(), 2);
        }
    }

    #[test]
    fn recovery_unit_modulus_away_from_core() {
        let (ds, grid, net) = two_point_setup(0.025);
        let eps = 0.05;
        let fs = recovery_init(&ds, grid.clone(), &net, eps).unwrap();
        assert!(fs.all_finite());
        assert_eq!(fs.pinned_violation(), 0.0);
        let vd = grid.vdim();
        let lambda: Vec<(Vec<f64>, Vec<f64>)> = net
            .edges
            .iter()
            .map(|e| (e.a.clone(), e.b.clone()))
            .collect();
        let mut checked = 0;
        for &idx in grid.interior.iter().step_by(101) {
            let x = grid.point(&grid.unravel(idx as usize));
            let d = lambda
                .iter()
                .map(|(a, b)| linalg::dist_to_segment(&x, a, b))
                .fold(f64::INFINITY, f64::min);
            let u = &fs.comps[0][idx as usize * vd..idx as usize * vd + vd];
            let norm = (u[0] * u[0] + u[1] * u[1]).sqrt();
            if d >= eps {
                assert!((norm - 1.0).abs() < 1e-12, "|u| = {norm} at distance {d}");
            } else {
                assert!(norm <= 1.0 + 1e-12);
            }
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn recovery_matches_datum_direction_near_wall() {
        // Just outside the excised tube the recovery phase must follow the
        // transverse frame angle (the datum), up to the one-cell blend.
        let (ds, grid, net) = two_point_setup(0.025);
        let fs = recovery_init(&ds, grid.clone(), &net, 0.05).unwrap();
        let vd = grid.vdim();
        let f = &ds.curve_frames(0)[0];
        let mut tested = 0;
        for &theta in &[0.3f64, 1.7, 3.0, -2.2] {
            let wall = ds.tubes[0][0].radius_at(f.len * 0.5);
            let x = f.point(f.len * 0.5, &[(wall + 0.01) * theta.cos(), (wall + 0.01) * theta.sin()]);
            let idx = grid.nearest_node(&x);
            if !grid.is_valid(idx) {
                continue;
            }
            let xn = grid.point(&grid.unravel(idx));
            let (_, perp) = f.coords(&xn);
            let want = perp[1].atan2(perp[0]);
            let u = &fs.comps[0][idx * vd..idx * vd + vd];
            let got = u[1].atan2(u[0]);
            assert!(
                wrap_angle(got - want).abs() < 0.35,
                "phase {got} vs frame angle {want}"
            );
            tested += 1;
        }
        assert!(tested >= 3);
    }

    #[test]
    fn shared_edge_components_identical_on_inner_tube() {
        // Y-shaped three-terminal network: the trunk edge carries both
        // components, whose fields must coincide on the trunk's inner tube.
        let ts = TerminalSet::new(
            3,
            vec![
                vec![-0.45, 0.35, 0.0],
                vec![-0.45, -0.35, 0.0],
                vec![0.45, 0.0, 0.0],
            ],
        )
        .unwrap();
        let ds = build_domain(&ts, 0.05, 0.5, 0.8).unwrap();
        let h = 0.016;
        let grid = Arc::new(build_grid(&ds, h).unwrap());
        let junction = vec![0.0, 0.0, 0.0];
        let net = MultiplicityCurrent::new(
            3,
            vec![
                CurrentEdge { a: ts.points[0].clone(), b: junction.clone(), g: vec![1, 0] },
                CurrentEdge { a: ts.points[1].clone(), b: junction.clone(), g: vec![0, 1] },
                CurrentEdge { a: junction.clone(), b: ts.sink().to_vec(), g: vec![1, 1] },
            ],
        )
        .unwrap();
        let eps = 0.04;
        let fs = recovery_init(&ds, grid.clone(), &net, eps).unwrap();
        let vd = grid.vdim();
        // Sample the trunk mid-span at sub-inner-tube radius.
        let trunk = Segment::new(junction.clone(), ts.sink().to_vec()).unwrap();
        let f = SegFrame::new(&trunk);
        let mut compared = 0;
        for &(r, th) in &[(0.025f64, 0.4f64), (0.025, 2.4), (0.03, -1.0)] {
            let x = f.point(f.len * 0.5, &[r * th.cos(), r * th.sin()]);
            let idx = grid.nearest_node(&x);
            if !grid.is_valid(idx) {
                continue;
            }
            let u0 = &fs.comps[0][idx * vd..idx * vd + vd];
            let u1 = &fs.comps[1][idx * vd..idx * vd + vd];
            for b in 0..vd {
                assert!(
                    (u0[b] - u1[b]).abs() < 1e-12,
                    "components differ on shared edge: {u0:?} vs {u1:?}"
                );
            }
            compared += 1;
        }
        assert!(compared >= 2);
    }

    #[test]
    fn recovery_energy_scales_like_pi_len_log_eps() {
        // Single straight vortex at desk scale: the raw initialiser energy
        // per unit length divided by |log eps| lands within a factor of the
        // expected pi (the core constant and the wall sliver inflate it;
        // minimisation, exercised by the acceptance suite, brings it down).
        let h = 0.0125;
        let (ds, grid, net) = two_point_setup(h);
        let eps = 2.0 * h;
        let fs = recovery_init(&ds, grid, &net, eps).unwrap();
        let params = EnergyParams::new(PsiNorm::new(0.0).unwrap(), DEFAULT_P_MAX);
        let e = total_energy(&fs, &params);
        let len = psi_mass(&net, &PsiNorm::new(0.0).unwrap());
        let ratio = e / (eps.ln().abs() * len * std::f64::consts::PI);
        assert!(
            ratio > 0.7 && ratio < 6.0,
            "energy ratio {ratio} (energy {e}, len {len})"
        );
    }

    #[test]
    fn rejects_net_through_tube() {
        let ts = TerminalSet::new(3, vec![vec![-0.5, 0.0, 0.0], vec![0.5, 0.0, 0.0]]).unwrap();
        let ds = build_domain(&ts, 0.1, 0.5, 0.8).unwrap();
        let grid = Arc::new(build_grid(&ds, 0.025).unwrap());
        let straight = star_network(&ts);
        assert!(recovery_init(&ds, grid, &straight, 0.05).is_err());
    }
}
