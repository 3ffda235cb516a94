//! Experiment orchestration: the GL solve with a chosen initialiser, and the
//! full exact -> GL -> extraction -> comparison pipeline.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::Result;
use gls_core::currents::{polyhedral_approximate, psi_mass, MultiplicityCurrent, PsiNorm};
use gls_core::exact::solve_exact;
use gls_core::extract::extract_network;
use gls_core::field::{
    build_grid, minimize, random_init, recovery_init, star_network, total_energy, EnergyParams,
    FieldState, GridSpec, MinimizeOptions, MinimizeTrace,
};
use gls_core::geometry::{build_domain, DomainSpec};
use gls_core::Error as CoreError;

use crate::io;
use crate::RunConfig;

/// Build a recovery initialiser around `net`, displacing it into the open
/// domain first; the displacement budget is widened twice if the first
/// attempt cannot absorb the detour.
fn recovery_from_net(
    ds: &DomainSpec,
    grid: Arc<GridSpec>,
    net: &MultiplicityCurrent,
    eps: f64,
) -> Result<FieldState, CoreError> {
    let h = grid.h;
    let mut eta = ds.delta + 20.0 * h;
    let mut last = None;
    for _ in 0..3 {
        match polyhedral_approximate(net, ds, eta)
            .and_then(|displaced| recovery_init(ds, grid.clone(), &displaced, eps))
        {
            Ok(fs) => return Ok(fs),
            Err(e) => last = Some(e),
        }
        eta *= 2.0;
    }
    Err(last.unwrap())
}

pub struct GlRun {
    pub init_name: String,
    pub state: FieldState,
    pub trace: MinimizeTrace,
    pub wall_ms: u128,
}

fn run_one_init(
    cfg: &RunConfig,
    ds: &DomainSpec,
    grid: Arc<GridSpec>,
    psi: &PsiNorm,
    init: &str,
    exact_net: Option<&MultiplicityCurrent>,
) -> Result<GlRun> {
    let t0 = Instant::now();
    let eps0 = cfg.eps_schedule[0];
    let mut state = match init {
        "exact" => {
            let net = exact_net.ok_or_else(|| {
                CoreError::input("exact initialiser needs an exact solve (N <= 6)")
            })?;
            recovery_from_net(ds, grid, net, eps0)?
        }
        "star" => {
            let net = star_network(&ds.terminals);
            recovery_from_net(ds, grid, &net, eps0)?
        }
        "random" => random_init(grid, eps0, cfg.seed),
        other => {
            return Err(CoreError::input(format!(
                "unknown init '{other}' (expected exact|star|random)"
            ))
            .into())
        }
    };
    let opts = MinimizeOptions {
        max_iter: cfg.max_iter,
        p_max: cfg.p_max,
        ..Default::default()
    };
    let trace = minimize(&mut state, psi, &cfg.eps_schedule, &opts)?;
    Ok(GlRun {
        init_name: init.to_string(),
        state,
        trace,
        wall_ms: t0.elapsed().as_millis(),
    })
}

fn trace_json(run: &GlRun) -> serde_json::Value {
    let stages: Vec<serde_json::Value> = run
        .trace
        .per_eps
        .iter()
        .map(|t| {
            serde_json::json!({
                "eps": t.eps,
                "iterations": t.iterations,
                "converged": t.converged,
                "energy": t.energy,
                "energy_sup": t.energy_sup,
                "energy_per_log_eps": t.energy_per_log_eps,
                "wall_ms": t.wall_ms as u64,
            })
        })
        .collect();
    serde_json::json!({
        "init": run.init_name,
        "stages": stages,
        "wall_ms": run.wall_ms as u64,
    })
}

fn config_json(cfg: &RunConfig) -> serde_json::Value {
    serde_json::json!({
        "input": cfg.input.display().to_string(),
        "alpha": cfg.alpha,
        "seed": cfg.seed,
        "delta": cfg.delta,
        "gamma_ratio": cfg.gamma_ratio,
        "box_l": cfg.box_l,
        "eps_schedule": cfg.eps_schedule,
        "grid_h": cfg.grid_h,
        "max_iter": cfg.max_iter,
        "p_max": cfg.p_max,
    })
}

/// `solve-gl`: one initialiser, minimise, dump fields and the energy report.
pub fn solve_gl(cfg: &RunConfig, init: &str, output: &Path, report: &Path) -> Result<()> {
    let ts = crate::load_terminals_for(cfg)?;
    let psi = PsiNorm::new(cfg.alpha)?;
    let ds = build_domain(&ts, cfg.delta, cfg.gamma_ratio, cfg.box_l)?;
    let grid = Arc::new(build_grid(&ds, cfg.grid_h)?);
    let exact = if ts.count() <= 6 {
        Some(solve_exact(&ts, &psi, cfg.seed)?.network)
    } else {
        None
    };
    let run = run_one_init(cfg, &ds, grid, &psi, init, exact.as_ref())?;
    io::write_fields(output, &run.state)?;
    let doc = serde_json::json!({
        "config": config_json(cfg),
        "run": trace_json(&run),
    });
    io::write_json(report, &doc)?;
    Ok(())
}

/// Full pipeline: exact solve, GL solves from the exact and star inits,
/// extraction of the lower-energy field, comparison against the exact
/// network. Writes net_exact.json, fields.bin, report.json, net_gl.json and
/// compare.json into `outdir`.
pub fn run_pipeline(cfg: &RunConfig, outdir: &Path, winding_voxels: bool) -> Result<()> {
    std::fs::create_dir_all(outdir)
        .map_err(|e| CoreError::input(format!("{}: {e}", outdir.display())))?;
    let ts = crate::load_terminals_for(cfg)?;
    let psi = PsiNorm::new(cfg.alpha)?;

    // Exact stage.
    let exact = solve_exact(&ts, &psi, cfg.seed)?;
    let angles: Vec<serde_json::Value> = exact.angles.iter().map(|a| serde_json::json!(a)).collect();
    io::write_json(
        &outdir.join("net_exact.json"),
        &io::network_json(
            &exact.network,
            &[
                ("cost", serde_json::json!(exact.cost)),
                ("angles", serde_json::Value::Array(angles)),
                ("alpha", serde_json::json!(cfg.alpha)),
            ],
        ),
    )?;

    // GL stage from both initialisers.
    let ds = build_domain(&ts, cfg.delta, cfg.gamma_ratio, cfg.box_l)?;
    let grid = Arc::new(build_grid(&ds, cfg.grid_h)?);
    let run_exact = run_one_init(cfg, &ds, grid.clone(), &psi, "exact", Some(&exact.network))?;
    let run_star = run_one_init(cfg, &ds, grid.clone(), &psi, "star", Some(&exact.network))?;
    let params = EnergyParams::new(psi, cfg.p_max);
    let (winner, loser) = if total_energy(&run_exact.state, &params)
        <= total_energy(&run_star.state, &params)
    {
        (run_exact, run_star)
    } else {
        (run_star, run_exact)
    };
    io::write_fields(&outdir.join("fields.bin"), &winner.state)?;

    // Extraction and comparison.
    let extracted = extract_network(&winner.state, &ts.points)?;
    io::write_json(
        &outdir.join("net_gl.json"),
        &io::network_json(
            &extracted.current,
            &[
                ("unresolved", serde_json::json!(extracted.unresolved)),
                ("discarded_noise", serde_json::json!(extracted.discarded_noise)),
                ("boundary_match", serde_json::json!(extracted.boundary_match)),
            ],
        ),
    )?;
    let metrics = gls_core::extract::compare_networks(&extracted.current, &exact.network, &psi)?;
    io::write_json(
        &outdir.join("compare.json"),
        &serde_json::json!({
            "mass_gl": metrics.mass_a,
            "mass_exact": metrics.mass_b,
            "mass_rel_err": metrics.mass_rel_err,
            "hausdorff": metrics.hausdorff,
            "hausdorff_per_h": metrics.hausdorff / cfg.grid_h,
            "boundary_match": metrics.boundary_match,
            "winner_init": winner.init_name,
        }),
    )?;

    if winding_voxels {
        // One byte per node: 1 where any face anchored at the node carries
        // winding for any component, 0 otherwise.
        let mut marks = vec![0u8; grid.node_count()];
        for comp in 0..grid.components() {
            let wf = gls_core::extract::winding_field(&winner.state, comp);
            for face in wf.nonzero.keys() {
                marks[face.node] = 1;
            }
        }
        io::write_voxels(&outdir.join("winding.txt"), &grid, &marks)?;
    }

    let report = serde_json::json!({
        "config": config_json(cfg),
        "exact_cost": exact.cost,
        "star_mass": psi_mass(&star_network(&ts), &psi),
        "winner_init": winner.init_name,
        "runs": [trace_json(&winner), trace_json(&loser)],
    });
    io::write_json(&outdir.join("report.json"), &report)?;
    Ok(())
}
