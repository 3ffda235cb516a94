//! Discrete Ginzburg-Landau energy density, the `Psi`-coupled total energy,
//! and its exact gradient.
//!
//! The density at an interior node is
//! `e_eps(u) = |Du|^{n-1} / (n-1) + W(u) / eps^2`
//! with `Du` the forward-difference gradient matrix (one-sided backward at
//! mask boundaries, a missing axis contributes zero). The total energy is
//! `h^n * sum over interior nodes of Psi_alpha(e_eps(u_1), .., e_eps(u_{N-1}))`;
//! the nonsmooth `alpha = 0` case is replaced by the `l^{p_max}` norm of the
//! density vector, which converges to the supremum as `p_max` grows.

use rayon::prelude::*;

use crate::currents::{lp_norm, PsiNorm};
use crate::error::{Error, Result};
use crate::field::grid::{GridSpec, NodeClass};
use crate::field::potential::Potential;
use crate::field::state::FieldState;

/// Default smoothing exponent replacing the supremum at `alpha = 0`.
pub const DEFAULT_P_MAX: f64 = 16.0;

/// Fixed node-chunk size for deterministic parallel reductions: partial sums
/// are produced per chunk and reduced in chunk order, so results do not
/// depend on the worker count.
const CHUNK: usize = 1 << 15;

/// Energy configuration: the coupling norm and the `alpha = 0` smoothing
/// exponent.
#[derive(Debug, Clone, Copy)]
pub struct EnergyParams {
    pub psi: PsiNorm,
    pub p_max: f64,
}

impl EnergyParams {
    pub fn new(psi: PsiNorm, p_max: f64) -> Self {
        EnergyParams { psi, p_max }
    }

    /// Effective finite exponent used by the smoothed energy.
    pub fn exponent(&self) -> f64 {
        let p = self.psi.exponent();
        if p.is_infinite() {
            self.p_max
        } else {
            p
        }
    }
}

/// Stencil choice along one axis at a node: forward, backward (fallback at
/// mask boundaries), or none.
#[inline]
fn stencil(grid: &GridSpec, idx: usize, mi: &[usize], a: usize) -> i8 {
    let s = grid.strides[a];
    if mi[a] + 1 < grid.dims[a] && grid.class[idx + s] != NodeClass::Excluded {
        1
    } else if mi[a] > 0 && grid.class[idx - s] != NodeClass::Excluded {
        -1
    } else {
        0
    }
}

/// `|Du|^2` and the matrix `Du` at `idx` for one component, forward
/// differences with one-sided backward fallback at mask and box boundaries.
/// `du` is `(n-1) x n`, row = vector entry, column = axis; entries for axes
/// with no valid neighbour stay zero.
#[inline]
fn du_at(grid: &GridSpec, comp: &[f64], idx: usize, mi: &[usize], du: &mut [f64]) -> f64 {
    let n = grid.n;
    let vd = n - 1;
    let inv_h = 1.0 / grid.h;
    let base = idx * vd;
    du.iter_mut().for_each(|v| *v = 0.0);
    let mut fro2 = 0.0;
    for a in 0..n {
        let s = grid.strides[a];
        let (lo, hi) = match stencil(grid, idx, mi, a) {
            1 => (base, (idx + s) * vd),
            -1 => ((idx - s) * vd, base),
            _ => continue,
        };
        for b in 0..vd {
            let d = (comp[hi + b] - comp[lo + b]) * inv_h;
            du[b * n + a] = d;
            fro2 += d * d;
        }
    }
    fro2
}

/// Density of component `i` at one node (zero on excluded nodes). The
/// integral runs over every node of the domain, pinned boundary layer
/// included; otherwise structure hiding in the one-cell sleeve along the
/// mask would carry no energy at all.
pub fn energy_density(fs: &FieldState, i: usize, node: usize) -> f64 {
    let grid = &fs.grid;
    if grid.class[node] == NodeClass::Excluded {
        return 0.0;
    }
    let n = grid.n;
    let vd = n - 1;
    let mut du = vec![0.0; vd * n];
    let mi = grid.unravel(node);
    let fro2 = du_at(grid, &fs.comps[i], node, &mi, &mut du);
    let pot = Potential;
    let grad_term = fro2.powf((n as f64 - 1.0) / 2.0) / (n as f64 - 1.0);
    grad_term + pot.eval(fs.value(i, node)) / (fs.eps * fs.eps)
}

/// Densities of all components at every node, node-major
/// (`densities[node * (N-1) + i]`), zero on excluded nodes.
pub fn node_densities(fs: &FieldState) -> Vec<f64> {
    let grid = &fs.grid;
    let n = grid.n;
    let vd = n - 1;
    let m = grid.components();
    let total = grid.node_count();
    let inv_eps2 = 1.0 / (fs.eps * fs.eps);
    let pot = Potential;
    let half_exp = (n as f64 - 1.0) / 2.0;
    let mut out = vec![0.0; total * m];
    out.par_chunks_mut(CHUNK * m)
        .enumerate()
        .for_each(|(chunk, slab)| {
            let start = chunk * CHUNK;
            let mut du = vec![0.0; vd * n];
            for (row, dst) in slab.chunks_mut(m).enumerate() {
                let idx = start + row;
                if grid.class[idx] == NodeClass::Excluded {
                    continue;
                }
                let mi = grid.unravel(idx);
                for (i, v) in dst.iter_mut().enumerate() {
                    let comp = &fs.comps[i];
                    let fro2 = du_at(grid, comp, idx, &mi, &mut du);
                    let w = pot.eval(&comp[idx * vd..idx * vd + vd]);
                    *v = fro2.powf(half_exp) / (n as f64 - 1.0) + w * inv_eps2;
                }
            }
        });
    out
}

fn weighted_total(fs: &FieldState, p: f64) -> f64 {
    let grid = &fs.grid;
    let n = grid.n;
    let vd = n - 1;
    let m = grid.components();
    let total = grid.node_count();
    let inv_eps2 = 1.0 / (fs.eps * fs.eps);
    let pot = Potential;
    let half_exp = (n as f64 - 1.0) / 2.0;
    let nchunks = total.div_ceil(CHUNK);
    let partials: Vec<f64> = (0..nchunks)
        .into_par_iter()
        .map(|chunk| {
            let start = chunk * CHUNK;
            let end = (start + CHUNK).min(total);
            let mut du = vec![0.0; vd * n];
            let mut dens = vec![0.0; m];
            let mut acc = 0.0;
            for idx in start..end {
                if grid.class[idx] == NodeClass::Excluded {
                    continue;
                }
                let mi = grid.unravel(idx);
                for (i, v) in dens.iter_mut().enumerate() {
                    let comp = &fs.comps[i];
                    let fro2 = du_at(grid, comp, idx, &mi, &mut du);
                    let w = pot.eval(&comp[idx * vd..idx * vd + vd]);
                    *v = fro2.powf(half_exp) / (n as f64 - 1.0) + w * inv_eps2;
                }
                acc += lp_norm(&dens, p);
            }
            acc
        })
        .collect();
    let h_n = grid.h.powi(grid.n as i32);
    h_n * partials.iter().sum::<f64>()
}

/// Smoothed total energy `h^n sum_x Psi(e(u_1), .., e(u_{N-1}))`; at
/// `alpha = 0` the supremum is replaced by the `l^{p_max}` norm.
pub fn total_energy(fs: &FieldState, params: &EnergyParams) -> f64 {
    weighted_total(fs, params.exponent())
}

/// The true `alpha = 0` energy (`sup` over components per node), reported
/// alongside the smoothed value.
pub fn total_energy_sup(fs: &FieldState) -> f64 {
    weighted_total(fs, f64::INFINITY)
}

/// Value of the dual objective at the closed-form aligned test field
/// `phi_i(x) = (e_i/Psi)^{p-1}`; equals the direct energy for finite
/// exponents by Hoelder equality.
pub fn dual_energy_aligned(fs: &FieldState, params: &EnergyParams) -> f64 {
    let p = params.exponent();
    let dens = node_densities(fs);
    let m = fs.grid.components();
    let h_n = fs.grid.h.powi(fs.grid.n as i32);
    let mut acc = 0.0;
    for node_dens in dens.chunks(m) {
        let psi = lp_norm(node_dens, p);
        if psi <= 0.0 {
            continue;
        }
        let mut pairing = 0.0;
        for &e in node_dens {
            let w = if p == 1.0 { 1.0 } else { (e / psi).powf(p - 1.0) };
            pairing += w * e;
        }
        acc += pairing;
    }
    h_n * acc
}

/// Exact gradient of the smoothed total energy with respect to every
/// component value; identically zero at pinned and excluded nodes.
pub fn energy_gradient(fs: &FieldState, params: &EnergyParams) -> Result<Vec<Vec<f64>>> {
    let p = params.exponent();
    if !p.is_finite() {
        return Err(Error::input(
            "gradient requires alpha > 0 or active smoothing",
        ));
    }
    let grid = &fs.grid;
    let n = grid.n;
    let vd = n - 1;
    let m = grid.components();
    let total = grid.node_count();
    let inv_eps2 = 1.0 / (fs.eps * fs.eps);
    let inv_h = 1.0 / grid.h;
    let pot = Potential;
    let half_exp = (n as f64 - 1.0) / 2.0;

    // Pass 1: Psi weights per node and component,
    // w_i = dPsi/de_i = (e_i / Psi)^{p-1} (1 at p = 1), zero where Psi = 0.
    let dens = node_densities(fs);
    let mut weights = dens;
    weights.par_chunks_mut(m).for_each(|node_dens| {
        let psi = lp_norm(node_dens, p);
        if psi <= 0.0 {
            node_dens.iter_mut().for_each(|w| *w = 0.0);
            return;
        }
        for w in node_dens.iter_mut() {
            *w = if p == 1.0 { 1.0 } else { (*w / psi).powf(p - 1.0) };
        }
    });

    // Pass 2 per component: gather adjoint contributions at each interior
    // node from its own density and the densities of neighbours (pinned ones
    // included) whose difference stencils read it.
    let h_n = grid.h.powi(grid.n as i32);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(m);
    for i in 0..m {
        let comp = &fs.comps[i];
        let mut g = vec![0.0; total * vd];
        g.par_chunks_mut(CHUNK * vd)
            .enumerate()
            .for_each(|(chunk, slab)| {
                let start = chunk * CHUNK;
                let mut du = vec![0.0; vd * n];
                for (row, gv) in slab.chunks_mut(vd).enumerate() {
                    let idx = start + row;
                    if grid.class[idx] != NodeClass::Interior {
                        continue;
                    }
                    let mi = grid.unravel(idx);
                    // Own density: derivative through Du(idx) and W(u(idx)).
                    let w_here = weights[idx * m + i];
                    if w_here != 0.0 {
                        let fro2 = du_at(grid, comp, idx, &mi, &mut du);
                        if fro2 > 0.0 {
                            let scale = w_here * fro2.powf(half_exp - 1.0);
                            for a in 0..n {
                                // Sign of d(Du[b][a])/d(u_b(idx)).
                                let sgn = match stencil(grid, idx, &mi, a) {
                                    1 => -inv_h,
                                    -1 => inv_h,
                                    _ => continue,
                                };
                                for b in 0..vd {
                                    gv[b] += scale * du[b * n + a] * sgn;
                                }
                            }
                        }
                        let u = &comp[idx * vd..idx * vd + vd];
                        let r2: f64 = u.iter().map(|v| v * v).sum();
                        let c = w_here * inv_eps2 * (-4.0) * (1.0 - r2);
                        for b in 0..vd {
                            gv[b] += c * u[b];
                        }
                        let _ = pot;
                    }
                    // Neighbour densities reading this node. Interior nodes
                    // never sit on the box faces, so both axis neighbours
                    // exist.
                    for a in 0..n {
                        let s = grid.strides[a];
                        // Backward neighbour using a forward stencil along a.
                        let back = idx - s;
                        if grid.class[back] != NodeClass::Excluded {
                            let w_nb = weights[back * m + i];
                            if w_nb != 0.0 {
                                let bmi = grid.unravel(back);
                                if stencil(grid, back, &bmi, a) == 1 {
                                    let fro2 = du_at(grid, comp, back, &bmi, &mut du);
                                    if fro2 > 0.0 {
                                        let scale = w_nb * fro2.powf(half_exp - 1.0);
                                        for b in 0..vd {
                                            gv[b] += scale * du[b * n + a] * inv_h;
                                        }
                                    }
                                }
                            }
                        }
                        // Forward neighbour that fell back to a backward
                        // stencil along a.
                        let fwd = idx + s;
                        if grid.class[fwd] != NodeClass::Excluded {
                            let w_nb = weights[fwd * m + i];
                            if w_nb != 0.0 {
                                let fmi = grid.unravel(fwd);
                                if stencil(grid, fwd, &fmi, a) == -1 {
                                    let fro2 = du_at(grid, comp, fwd, &fmi, &mut du);
                                    if fro2 > 0.0 {
                                        let scale = w_nb * fro2.powf(half_exp - 1.0);
                                        for b in 0..vd {
                                            gv[b] -= scale * du[b * n + a] * inv_h;
                                        }
                                    }
                                }
                            }
                        }
                    }
                    for v in gv.iter_mut() {
                        *v *= h_n;
                    }
                }
            });
        out.push(g);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::grid::build_grid;
    use crate::geometry::{build_domain, TerminalSet};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn small_grid() -> Arc<GridSpec> {
        let ts = TerminalSet::new(3, vec![vec![-0.5, 0.0, 0.0], vec![0.5, 0.0, 0.0]]).unwrap();
        let ds = build_domain(&ts, 0.15, 0.5, 1.0).unwrap();
        Arc::new(build_grid(&ds, 0.05).unwrap())
    }

    #[test]
    fn constant_field_zero_energy() {
        // A truly constant field (ignoring the winding datum) has zero
        // density, zero energy and zero gradient everywhere.
        let grid = small_grid();
        let vd = grid.vdim();
        let total = grid.node_count();
        let mut comp = vec![0.0; total * vd];
        for node in 0..total {
            comp[node * vd + vd - 1] = 1.0;
        }
        let fs = FieldState {
            grid: grid.clone(),
            comps: vec![comp],
            eps: 0.1,
        };
        let params = EnergyParams::new(PsiNorm::new(0.0).unwrap(), DEFAULT_P_MAX);
        assert_eq!(total_energy(&fs, &params), 0.0);
        assert_eq!(total_energy_sup(&fs), 0.0);
        for node in (0..total).step_by(7) {
            assert_eq!(energy_density(&fs, 0, node), 0.0);
        }
        let g = energy_gradient(&fs, &params).unwrap();
        assert!(g[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_field_density_is_inv_eps_sq() {
        let grid = small_grid();
        let mut fs = FieldState::constant(grid.clone(), 0.1);
        let vd = grid.vdim();
        // Pick an interior node whose whole +-2 neighbourhood is interior,
        // zero the field there: the density reduces to W(0)/eps^2 = 100.
        let idx = grid
            .interior
            .iter()
            .map(|&i| i as usize)
            .find(|&idx| {
                let mi = grid.unravel(idx);
                mi.iter().zip(&grid.dims).all(|(&i, &d)| i >= 2 && i + 2 < d) && {
                    let mut all = true;
                    for dz in -2i64..=2 {
                        for dy in -2i64..=2 {
                            for dx in -2i64..=2 {
                                let nmi: Vec<usize> = mi
                                    .iter()
                                    .zip([dx, dy, dz])
                                    .map(|(&i, d)| (i as i64 + d) as usize)
                                    .collect();
                                all &= grid.is_interior(grid.ravel(&nmi));
                            }
                        }
                    }
                    all
                }
            })
            .expect("no clean interior neighbourhood");
        let mi = fs.grid.unravel(idx);
        for dz in -2i64..=2 {
            for dy in -2i64..=2 {
                for dx in -2i64..=2 {
                    let nmi: Vec<usize> = mi
                        .iter()
                        .zip([dx, dy, dz])
                        .map(|(&i, d)| (i as i64 + d) as usize)
                        .collect();
                    let nidx = fs.grid.ravel(&nmi);
                    for b in 0..vd {
                        fs.comps[0][nidx * vd + b] = 0.0;
                    }
                }
            }
        }
        let d = energy_density(&fs, 0, idx);
        assert!((d - 100.0).abs() < 1e-9, "density {d}");
    }

    #[test]
    fn winding_field_density_scales_like_half_inv_r2() {
        // u = x''/|x''| around the excised x-axis tube: density at transverse
        // radius rho approaches (1/2) rho^-2 up to O(h) discretisation error.
        let ts = TerminalSet::new(3, vec![vec![-0.5, 0.0, 0.0], vec![0.5, 0.0, 0.0]]).unwrap();
        let ds = build_domain(&ts, 0.15, 0.5, 1.0).unwrap();
        let grid = Arc::new(build_grid(&ds, 0.02).unwrap());
        let vd = grid.vdim();
        let total = grid.node_count();
        let mut comp = vec![0.0; total * vd];
        for idx in 0..total {
            let x = grid.point(&grid.unravel(idx));
            let r = (x[1] * x[1] + x[2] * x[2]).sqrt();
            if r > 1e-9 {
                comp[idx * vd] = x[1] / r;
                comp[idx * vd + 1] = x[2] / r;
            } else {
                comp[idx * vd + 1] = 1.0;
            }
        }
        let fs = FieldState::from_components(grid.clone(), vec![comp], 0.1).unwrap();
        for &(y, z) in &[(0.3, 0.0), (0.0, 0.4), (0.3, 0.3)] {
            let idx = grid.nearest_node(&[0.0, y, z]);
            if !grid.is_interior(idx) {
                continue;
            }
            let x = grid.point(&grid.unravel(idx));
            let rho2 = x[1] * x[1] + x[2] * x[2];
            let d = energy_density(&fs, 0, idx);
            let expected = 0.5 / rho2;
            assert!(
                (d - expected).abs() / expected < 0.2,
                "density {d} vs {expected} at rho^2 {rho2}"
            );
        }
    }

    #[test]
    fn single_component_reduces_to_scalar_energy() {
        // With one nonzero component the Psi coupling is the identity for
        // every alpha.
        let grid = small_grid();
        let mut rng = StdRng::seed_from_u64(2);
        let vd = grid.vdim();
        let mut comp = vec![0.0; grid.node_count() * vd];
        for v in comp.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let fs = FieldState::from_components(grid, vec![comp], 0.2).unwrap();
        let e_inf = total_energy_sup(&fs);
        for alpha in [0.0, 0.5, 1.0] {
            let params = EnergyParams::new(PsiNorm::new(alpha).unwrap(), DEFAULT_P_MAX);
            let e = total_energy(&fs, &params);
            assert!((e - e_inf).abs() <= 1e-12 * (1.0 + e_inf.abs()));
        }
    }

    #[test]
    fn gradient_matches_directional_finite_difference() {
        // 100 random probes across alpha in {1, 0.5, 0 (smoothed)}.
        let ts = TerminalSet::new(
            3,
            vec![vec![-0.4, 0.0, 0.0], vec![0.4, 0.1, 0.0], vec![0.0, 0.4, 0.1]],
        )
        .unwrap();
        let ds = build_domain(&ts, 0.12, 0.5, 0.8).unwrap();
        let grid = Arc::new(build_grid(&ds, 0.04).unwrap());
        let mut rng = StdRng::seed_from_u64(17);
        let vd = grid.vdim();
        let m = grid.components();
        let total = grid.node_count();
        for &alpha in &[1.0, 0.5, 0.0] {
            let params = EnergyParams::new(PsiNorm::new(alpha).unwrap(), 8.0);
            // Smooth random fields keep the energy scale moderate, so the
            // central difference stays clear of f64 cancellation.
            let comps: Vec<Vec<f64>> = (0..m)
                .map(|_| {
                    let waves: Vec<(f64, Vec<f64>, f64)> = (0..3)
                        .map(|_| {
                            (
                                rng.gen_range(0.2..1.0),
                                (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect(),
                                rng.gen_range(0.0..6.28),
                            )
                        })
                        .collect();
                    let mut comp = vec![0.0; total * vd];
                    for idx in 0..total {
                        let x = grid.point(&grid.unravel(idx));
                        for b in 0..vd {
                            let mut v = 0.0;
                            for (amp, k, ph) in &waves {
                                let kx: f64 = k.iter().zip(&x).map(|(a, b)| a * b).sum();
                                v += amp * (kx + ph + b as f64).sin();
                            }
                            comp[idx * vd + b] = v;
                        }
                    }
                    comp
                })
                .collect();
            let fs = FieldState::from_components(grid.clone(), comps, 0.15).unwrap();
            let grad = energy_gradient(&fs, &params).unwrap();
            // Pinned nodes carry exactly zero gradient.
            for &pidx in fs.grid.pinned.iter().step_by(97) {
                for b in 0..vd {
                    assert_eq!(grad[0][pidx as usize * vd + b], 0.0);
                }
            }
            let e0 = total_energy(&fs, &params);
            for _ in 0..34 {
                // Random unit direction tilted towards the gradient: the
                // random part probes arbitrary coordinates while the aligned
                // part keeps the pairing large relative to the f64 rounding
                // floor of the two energy evaluations.
                let grad_norm = grad
                    .iter()
                    .map(|g| g.iter().map(|v| v * v).sum::<f64>())
                    .sum::<f64>()
                    .sqrt()
                    .max(1e-300);
                let mut dir: Vec<Vec<f64>> = (0..m).map(|_| vec![0.0; total * vd]).collect();
                let mut norm2 = 0.0;
                for (ci, d) in dir.iter_mut().enumerate() {
                    for &pick in fs.grid.interior.iter() {
                        for b in 0..vd {
                            let k = pick as usize * vd + b;
                            let v = 0.5 * rng.gen_range(-1.0..1.0f64) / (total as f64).sqrt()
                                + grad[ci][k] / grad_norm;
                            d[k] = v;
                            norm2 += v * v;
                        }
                    }
                }
                let inv = 1.0 / norm2.sqrt();
                let mut pairing = 0.0;
                for (d, g) in dir.iter_mut().zip(&grad) {
                    for (v, gv) in d.iter_mut().zip(g) {
                        *v *= inv;
                        pairing += *v * gv;
                    }
                }
                let t = 1e-6;
                let comps_p: Vec<Vec<f64>> = fs
                    .comps
                    .iter()
                    .zip(&dir)
                    .map(|(c, d)| c.iter().zip(d).map(|(x, y)| x + t * y).collect())
                    .collect();
                let comps_m: Vec<Vec<f64>> = fs
                    .comps
                    .iter()
                    .zip(&dir)
                    .map(|(c, d)| c.iter().zip(d).map(|(x, y)| x - t * y).collect())
                    .collect();
                let mut fsp = fs.clone();
                fsp.comps = comps_p;
                let mut fsm = fs.clone();
                fsm.comps = comps_m;
                let fd = (total_energy(&fsp, &params) - total_energy(&fsm, &params)) / (2.0 * t);
                let scale = pairing.abs().max(fd.abs()).max(1e-8 * (1.0 + e0));
                assert!(
                    (pairing - fd).abs() / scale < 1e-5,
                    "alpha {alpha}: analytic {pairing} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn dual_alignment_matches_direct_energy() {
        let grid = small_grid();
        let mut rng = StdRng::seed_from_u64(23);
        let vd = grid.vdim();
        let total = grid.node_count();
        let comp: Vec<f64> = (0..total * vd).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fs = FieldState::from_components(grid, vec![comp], 0.2).unwrap();
        for &alpha in &[1.0, 0.5] {
            let params = EnergyParams::new(PsiNorm::new(alpha).unwrap(), DEFAULT_P_MAX);
            let direct = total_energy(&fs, &params);
            let dual = dual_energy_aligned(&fs, &params);
            assert!(
                (direct - dual).abs() <= 1e-9 * (1.0 + direct),
                "alpha {alpha}: {direct} vs {dual}"
            );
        }
    }
}
