//! `gls`: solvers for Euclidean Steiner and single-sink Gilbert-Steiner
//! problems with a vector Ginzburg-Landau relaxation pipeline.
//!
//! Exit codes: 0 ok, 2 input error, 3 numerical failure, 4 internal
//! invariant violation. Failures print a machine-readable JSON error object
//! to stderr.

mod io;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gls_core::calibration::{check_calibration, CalibrationCert};
use gls_core::currents::{psi_mass, MultiplicityCurrent, PsiNorm};
use gls_core::exact::solve_exact;
use gls_core::extract::compare_networks;
use gls_core::geometry::TerminalSet;
use gls_core::Error as CoreError;

#[derive(Parser)]
#[command(name = "gls", version, about = "Gilbert-Steiner solvers and Ginzburg-Landau relaxation")]
struct Cli {
    /// Worker threads (default: hardware parallelism; env GLS_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Optional JSON config file supplying defaults; explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
struct SolveCommon {
    /// Terminal set JSON file.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Cost exponent alpha in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Seed for all stochastic choices.
    #[arg(long)]
    seed: Option<u64>,
    /// Rescale the terminals into the unit ball before solving.
    #[arg(long, default_value_t = false)]
    normalize: bool,
}

#[derive(Args, Debug, Default, Clone)]
struct GlCommon {
    /// Tube radius delta.
    #[arg(long)]
    delta: Option<f64>,
    /// Cone slope ratio: gamma = gamma_ratio * delta.
    #[arg(long)]
    gamma_ratio: Option<f64>,
    /// Half-width of the computational box.
    #[arg(long)]
    box_l: Option<f64>,
    /// Decreasing eps schedule, comma separated.
    #[arg(long)]
    eps_schedule: Option<String>,
    /// Grid spacing.
    #[arg(long)]
    grid_h: Option<f64>,
    /// Iteration cap per eps stage.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Smoothing exponent replacing the supremum at alpha = 0.
    #[arg(long)]
    p_max: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact small-instance solver by topology enumeration.
    SolveExact {
        #[command(flatten)]
        common: SolveCommon,
        /// Output network JSON.
        #[arg(long)]
        output: PathBuf,
    },
    /// Minimise the Ginzburg-Landau energies on the excised domain.
    SolveGl {
        #[command(flatten)]
        common: SolveCommon,
        #[command(flatten)]
        gl: GlCommon,
        /// Field initialiser.
        #[arg(long, default_value = "exact")]
        init: String,
        /// Output binary field file.
        #[arg(long)]
        output: PathBuf,
        /// Output JSON report.
        #[arg(long)]
        report: PathBuf,
    },
    /// Check a calibration certificate against a candidate network.
    CheckCalibration {
        /// Certificate JSON.
        #[arg(long)]
        cert: PathBuf,
        /// Candidate network JSON.
        #[arg(long)]
        network: PathBuf,
        /// Optional output path for the report (stdout otherwise).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compare two networks: mass gap, Hausdorff distance, boundary match.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Full experiment: exact solve, GL solve from exact and star inits,
    /// extraction, comparison.
    Pipeline {
        #[command(flatten)]
        common: SolveCommon,
        #[command(flatten)]
        gl: GlCommon,
        /// Output directory for the artifact files.
        #[arg(long)]
        outdir: PathBuf,
        /// Also dump winding diagnostics as an ASCII voxel file.
        #[arg(long, default_value_t = false)]
        winding_voxels: bool,
    },
    /// Re-export a network JSON file in another format.
    Export {
        #[arg(long)]
        input: PathBuf,
        /// Output format: json or obj.
        #[arg(long, default_value = "obj")]
        format: String,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write the tube mask of the excised domain as an ASCII voxel file.
    ExportMask {
        #[command(flatten)]
        common: SolveCommon,
        #[command(flatten)]
        gl: GlCommon,
        #[arg(long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| std::env::var("GLS_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::from(0),
        Err(err) => {
            let (kind, code) = classify(&err);
            let doc = serde_json::json!({
                "error": { "kind": kind, "message": format!("{err:#}") }
            });
            eprintln!("{}", serde_json::to_string(&doc).unwrap());
            ExitCode::from(code)
        }
    }
}

fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    if let Some(core) = err.downcast_ref::<CoreError>() {
        match core {
            CoreError::Input(_) => ("input", 2),
            CoreError::Numerics(_) => ("numerical", 3),
            CoreError::Invariant(_) => ("invariant", 4),
        }
    } else if err.downcast_ref::<std::io::Error>().is_some()
        || err.downcast_ref::<serde_json::Error>().is_some()
    {
        ("input", 2)
    } else {
        ("input", 2)
    }
}

/// Values from an optional JSON config file; explicit flags win.
#[derive(Debug, Default, serde::Deserialize)]
struct FileConfig {
    input: Option<PathBuf>,
    alpha: Option<f64>,
    seed: Option<u64>,
    delta: Option<f64>,
    gamma_ratio: Option<f64>,
    box_l: Option<f64>,
    eps_schedule: Option<String>,
    grid_h: Option<f64>,
    max_iter: Option<usize>,
    p_max: Option<f64>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: PathBuf,
    pub alpha: f64,
    pub seed: u64,
    pub normalize: bool,
    pub delta: f64,
    pub gamma_ratio: f64,
    pub box_l: f64,
    pub eps_schedule: Vec<f64>,
    pub grid_h: f64,
    pub max_iter: usize,
    pub p_max: f64,
}

fn resolve(common: &SolveCommon, gl: &GlCommon, file: &FileConfig) -> anyhow::Result<RunConfig> {
    let input = common
        .input
        .clone()
        .or_else(|| file.input.clone())
        .ok_or_else(|| CoreError::input("no input file given"))?;
    let alpha = common.alpha.or(file.alpha).unwrap_or(0.0);
    if !(0.0..=1.0).contains(&alpha) {
        return Err(CoreError::input(format!("alpha {alpha} outside [0, 1]")).into());
    }
    let schedule_text = gl
        .eps_schedule
        .clone()
        .or_else(|| file.eps_schedule.clone())
        .unwrap_or_else(|| "0.16,0.08,0.04,0.02".to_string());
    let eps_schedule: Vec<f64> = schedule_text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CoreError::input(format!("bad eps schedule: {e}")))?;
    let grid_h = gl
        .grid_h
        .or(file.grid_h)
        .unwrap_or_else(|| eps_schedule.last().copied().unwrap_or(0.02) / 2.0);
    let cfg = RunConfig {
        input,
        alpha,
        seed: common.seed.or(file.seed).unwrap_or(0),
        normalize: common.normalize,
        delta: gl.delta.or(file.delta).unwrap_or(0.1),
        gamma_ratio: gl.gamma_ratio.or(file.gamma_ratio).unwrap_or(0.5),
        box_l: gl.box_l.or(file.box_l).unwrap_or(2.0),
        eps_schedule,
        grid_h,
        max_iter: gl.max_iter.or(file.max_iter).unwrap_or(5000),
        p_max: gl.p_max.or(file.p_max).unwrap_or(16.0),
    };
    if cfg.delta <= 0.0 || cfg.gamma_ratio <= 0.0 || cfg.grid_h <= 0.0 || cfg.box_l <= 0.0 {
        return Err(CoreError::input("delta, gamma_ratio, box_l and grid_h must be > 0").into());
    }
    Ok(cfg)
}

fn load_file_config(path: &Option<PathBuf>) -> anyhow::Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CoreError::input(format!("config {}: {e}", p.display())))?;
            Ok(serde_json::from_str(&text)
                .map_err(|e| CoreError::input(format!("config {}: {e}", p.display())))?)
        }
    }
}

fn load_terminals(cfg: &RunConfig) -> anyhow::Result<TerminalSet> {
    let text = std::fs::read_to_string(&cfg.input)
        .map_err(|e| CoreError::input(format!("{}: {e}", cfg.input.display())))?;
    let ts = TerminalSet::from_json(&text)?;
    if cfg.normalize {
        Ok(ts.normalize().0)
    } else {
        Ok(ts)
    }
}

/// Shared with the pipeline module.
pub(crate) fn load_terminals_for(cfg: &RunConfig) -> anyhow::Result<TerminalSet> {
    load_terminals(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file_cfg = load_file_config(&cli.config)?;
    match cli.command {
        Command::SolveExact { common, output } => {
            let cfg = resolve(&common, &GlCommon::default(), &file_cfg)?;
            let ts = load_terminals(&cfg)?;
            let psi = PsiNorm::new(cfg.alpha)?;
            let result = solve_exact(&ts, &psi, cfg.seed)?;
            let angles: Vec<serde_json::Value> = result
                .angles
                .iter()
                .map(|a| serde_json::json!(a))
                .collect();
            let doc = io::network_json(
                &result.network,
                &[
                    ("cost", serde_json::json!(result.cost)),
                    ("angles", serde_json::Value::Array(angles)),
                    ("alpha", serde_json::json!(cfg.alpha)),
                    (
                        "steiner_points",
                        serde_json::json!(result.steiner_positions),
                    ),
                ],
            );
            io::write_json(&output, &doc)?;
            Ok(())
        }
        Command::SolveGl {
            common,
            gl,
            init,
            output,
            report,
        } => {
            let cfg = resolve(&common, &gl, &file_cfg)?;
            pipeline::solve_gl(&cfg, &init, &output, &report)
        }
        Command::CheckCalibration { cert, network, output } => {
            let cert_text = std::fs::read_to_string(&cert)
                .map_err(|e| CoreError::input(format!("{}: {e}", cert.display())))?;
            let cert = CalibrationCert::from_json(&cert_text)?;
            let net_text = std::fs::read_to_string(&network)
                .map_err(|e| CoreError::input(format!("{}: {e}", network.display())))?;
            let net = MultiplicityCurrent::from_json(&net_text)?;
            let report_data = check_calibration(&cert, &net)?;
            let witnesses: Vec<serde_json::Value> = report_data
                .witnesses
                .iter()
                .map(|(g, lhs, rhs)| {
                    serde_json::json!({"g": g, "combo_norm": lhs, "psi": rhs})
                })
                .collect();
            let doc = serde_json::json!({
                "all_conditions_hold": report_data.all_hold(),
                "equality": { "holds": report_data.equality.holds, "detail": report_data.equality.detail },
                "closed": { "holds": report_data.closed.holds, "detail": report_data.closed.detail },
                "bound": { "holds": report_data.bound.holds, "detail": report_data.bound.detail },
                "phi": report_data.phi_value,
                "psi_mass": report_data.psi_mass,
                "witnesses": witnesses,
            });
            match output {
                Some(path) => io::write_json(&path, &doc)?,
                None => println!("{}", io::json_string(&doc)?),
            }
            Ok(())
        }
        Command::Compare { a, b, alpha, output } => {
            let na = MultiplicityCurrent::from_json(&std::fs::read_to_string(&a).map_err(|e| {
                CoreError::input(format!("{}: {e}", a.display()))
            })?)?;
            let nb = MultiplicityCurrent::from_json(&std::fs::read_to_string(&b).map_err(|e| {
                CoreError::input(format!("{}: {e}", b.display()))
            })?)?;
            let psi = PsiNorm::new(alpha)?;
            let metrics = compare_networks(&na, &nb, &psi)?;
            let doc = serde_json::json!({
                "mass_a": metrics.mass_a,
                "mass_b": metrics.mass_b,
                "mass_rel_err": metrics.mass_rel_err,
                "hausdorff": metrics.hausdorff,
                "boundary_match": metrics.boundary_match,
            });
            match output {
                Some(path) => io::write_json(&path, &doc)?,
                None => println!("{}", io::json_string(&doc)?),
            }
            Ok(())
        }
        Command::Pipeline {
            common,
            gl,
            outdir,
            winding_voxels,
        } => {
            let cfg = resolve(&common, &gl, &file_cfg)?;
            pipeline::run_pipeline(&cfg, &outdir, winding_voxels)
        }
        Command::Export { input, format, output } => {
            let net = MultiplicityCurrent::from_json(&std::fs::read_to_string(&input).map_err(
                |e| CoreError::input(format!("{}: {e}", input.display())),
            )?)?;
            match format.as_str() {
                "obj" => io::write_obj(&output, &net)?,
                "json" => io::write_json(&output, &io::network_json(&net, &[]))?,
                other => {
                    return Err(CoreError::input(format!("unsupported format {other}")).into())
                }
            }
            Ok(())
        }
        Command::ExportMask { common, gl, output } => {
            let cfg = resolve(&common, &gl, &file_cfg)?;
            let ts = load_terminals(&cfg)?;
            let ds = gls_core::geometry::build_domain(&ts, cfg.delta, cfg.gamma_ratio, cfg.box_l)?;
            let grid = gls_core::field::build_grid(&ds, cfg.grid_h)?;
            let values: Vec<u8> = (0..grid.node_count())
                .map(|idx| u8::from(!grid.is_valid(idx)))
                .collect();
            io::write_voxels(&output, &grid, &values)?;
            Ok(())
        }
    }
}

/// Star-network cost, handy as an upper-bound sanity value in reports.
pub fn star_cost(ts: &TerminalSet, psi: &PsiNorm) -> f64 {
    psi_mass(&gls_core::field::star_network(ts), psi)
}
