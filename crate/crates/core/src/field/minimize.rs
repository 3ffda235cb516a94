//! Gradient descent with Armijo backtracking over a decreasing `eps`
//! schedule, warm-starting each stage from the previous one.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::energy::{total_energy, total_energy_sup, energy_gradient, EnergyParams, DEFAULT_P_MAX};
use crate::field::state::FieldState;
use crate::currents::PsiNorm;

#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions {
    /// Iteration cap per schedule stage.
    pub max_iter: usize,
    /// Stop once the applied step has max-norm below this.
    pub step_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Smoothing exponent for `alpha = 0`.
    pub p_max: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_iter: 5000,
            step_tol: 1e-6,
            armijo: 1e-4,
            p_max: DEFAULT_P_MAX,
        }
    }
}

/// Record of one schedule stage.
#[derive(Debug, Clone)]
pub struct EpsTrace {
    pub eps: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Smoothed energy at the end of the stage.
    pub energy: f64,
    /// True supremum-coupled energy at the end of the stage.
    pub energy_sup: f64,
    /// `energy / |log eps|`.
    pub energy_per_log_eps: f64,
    pub wall_ms: u128,
}

#[derive(Debug, Clone, Default)]
pub struct MinimizeTrace {
    pub per_eps: Vec<EpsTrace>,
}

/// Minimise the smoothed `Psi`-coupled energy over the schedule. The energy
/// is nonincreasing across accepted steps (an increase is an internal fault);
/// a stage that hits the iteration cap is reported as not converged rather
/// than an error.
pub fn minimize(
    fs: &mut FieldState,
    psi: &PsiNorm,
    schedule: &[f64],
    opts: &MinimizeOptions,
) -> Result<MinimizeTrace> {
    if schedule.is_empty() {
        return Err(Error::input("empty eps schedule"));
    }
    if schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::input("eps schedule must be strictly decreasing"));
    }
    let eps_min = *schedule.last().unwrap();
    if fs.grid.h > eps_min / 2.0 + 1e-12 {
        return Err(Error::input(format!(
            "grid h = {} does not resolve the final eps = {eps_min} (need h <= eps/2)",
            fs.grid.h
        )));
    }
    let params = EnergyParams::new(*psi, opts.p_max);
    let mut trace = MinimizeTrace::default();
    let mut step = fs.grid.h * fs.grid.h;

    for &eps in schedule {
        let t0 = std::time::Instant::now();
        fs.eps = eps;
        let mut energy = total_energy(fs, &params);
        let mut iterations = 0;
        let mut converged = false;
        while iterations < opts.max_iter {
            iterations += 1;
            let grad = energy_gradient(fs, &params)?;
            let grad_sq: f64 = grad
                .par_iter()
                .map(|g| g.par_chunks(1 << 15).map(|c| c.iter().map(|v| v * v).sum::<f64>()).sum::<f64>())
                .sum();
            if grad_sq == 0.0 {
                converged = true;
                break;
            }
            // Backtracking line search on u - t * grad.
            let mut t = step;
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<Vec<f64>> = fs
                    .comps
                    .iter()
                    .zip(&grad)
                    .map(|(c, g)| {
                        c.par_iter()
                            .zip(g.par_iter())
                            .map(|(x, gx)| x - t * gx)
                            .collect()
                    })
                    .collect();
                let old = std::mem::replace(&mut fs.comps, trial);
                let e_new = total_energy(fs, &params);
                if e_new <= energy - opts.armijo * t * grad_sq {
                    accepted = Some(e_new);
                    break;
                }
                fs.comps = old;
                t *= 0.5;
            }
            let Some(e_new) = accepted else {
                // No productive step length: treat as converged at this eps.
                converged = true;
                break;
            };
            if e_new > energy + 1e-12 * (1.0 + energy.abs()) {
                return Err(Error::invariant(format!(
                    "energy increased across an accepted step: {energy} -> {e_new}"
                )));
            }
            energy = e_new;
            let grad_inf = grad
                .iter()
                .map(|g| g.iter().fold(0.0f64, |m, v| m.max(v.abs())))
                .fold(0.0f64, f64::max);
            step = (t * 1.5).min(1e3);
            if t * grad_inf < opts.step_tol {
                converged = true;
                break;
            }
        }
        trace.per_eps.push(EpsTrace {
            eps,
            iterations,
            converged,
            energy,
            energy_sup: total_energy_sup(fs),
            energy_per_log_eps: energy / eps.ln().abs(),
            wall_ms: t0.elapsed().as_millis(),
        });
    }
    Ok(trace)
}
