mod check;
mod config;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use wirepinn::io;
use wirepinn::mesh::{assemble_fv_coefficients, nearest_node, FvCoefficients};
use wirepinn::oracle::{check_sweep, ramp_biases, ramp_sweep, residual_check_tolerance, NewtonOptions};
use wirepinn::pinn::{
    evaluate_against, matching_snapshot, report_for, solve_amortized, solve_bias_recording, sweep_entry, LossWeights,
    PinnProblem, SolveOptions, SweepReport, PROBE_POINT_UM,
};
use wirepinn::surrogate::{fit, normalize_density, r_squared, FitOptions};
use wirepinn::{build_device_mesh, Architecture, Error, SemiconductorParams, Snapshot, SweepDataset, TensorMesh};

use crate::config::RunConfig;
use crate::svg::{Chart, Style};

#[derive(Parser, Debug)]
#[command(name = "wirepinn", version, about = "Physics-informed solver for gated nanowire electrostatics")]
struct Cli {
    /// Run configuration (TOML). Defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the gate sweep with the Newton oracle and write the sweep file.
    Generate {
        #[arg(long)]
        v_start: Option<f64>,
        #[arg(long)]
        v_end: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        /// Sweep file to write (default: <out-dir>/sweep.txt).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the density-to-potential surrogate on the leading snapshots.
    FitLr {
        #[arg(long)]
        sweep: Option<PathBuf>,
        /// Number of leading snapshots used for fitting.
        #[arg(long)]
        cutoff: Option<usize>,
        /// Surrogate file to write (default: <out-dir>/lr.wpnn).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: bool,
    },
    /// Train a generator for one gate bias.
    Solve {
        #[arg(long)]
        vg: f64,
        /// Comma-separated epoch counts to report along the way.
        #[arg(long, value_delimiter = ',')]
        epoch_study: Vec<usize>,
        #[command(flatten)]
        pinn: PinnArgs,
    },
    /// Independent solves over a list of biases.
    Sweep {
        /// `start:end:step` or a comma-separated list.
        #[arg(long, default_value = "0:0.75:0.075")]
        biases: String,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Train one generator over all biases instead of one per bias.
        #[arg(long)]
        amortized: bool,
        #[command(flatten)]
        pinn: PinnArgs,
    },
    /// Score a prediction table against the oracle sweep.
    Report {
        /// Node table written by `solve` (prediction.csv).
        #[arg(long)]
        prediction: PathBuf,
        #[arg(long)]
        vg: f64,
        #[arg(long)]
        sweep: Option<PathBuf>,
        /// Report file to write (default: next to the prediction).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in consistency checks.
    Check,
}

#[derive(Args, Debug, Clone)]
struct PinnArgs {
    #[arg(long)]
    surrogate: Option<PathBuf>,
    /// Oracle sweep used for scoring; skipped if absent.
    #[arg(long)]
    sweep: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `dense:64-256` or `conv:64-4`.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    svg: bool,
}

/// An error together with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_ORACLE: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_CHECK: u8 = 4;

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { code: EXIT_CONFIG, error: e.into() }
    }
}

trait ExitWith<T> {
    fn exit_with(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ExitWith<T> for Result<T, E> {
    fn exit_with(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(dir) = cli.out_dir {
        cfg.output_dir = dir;
    }
    match cli.command {
        Command::Generate { v_start, v_end, step, out } => {
            cfg.sweep.v_start = v_start.unwrap_or(cfg.sweep.v_start);
            cfg.sweep.v_end = v_end.unwrap_or(cfg.sweep.v_end);
            cfg.sweep.step = step.unwrap_or(cfg.sweep.step);
            cmd_generate(&cfg, out)
        }
        Command::FitLr { sweep, cutoff, out, svg } => cmd_fit_lr(&cfg, sweep, cutoff, out, svg),
        Command::Solve { vg, epoch_study, pinn } => cmd_solve(&cfg, vg, &epoch_study, &pinn),
        Command::Sweep { biases, jobs, amortized, pinn } => cmd_sweep(&cfg, &biases, jobs, amortized, &pinn),
        Command::Report { prediction, vg, sweep, out } => cmd_report(&cfg, &prediction, vg, sweep, out),
        Command::Check => cmd_check(),
    }
}

struct Setup {
    mesh: TensorMesh,
    coeffs: FvCoefficients,
    params: SemiconductorParams,
}

fn setup(cfg: &RunConfig) -> Result<Setup, Failure> {
    let mesh = build_device_mesh(&cfg.device)?;
    let coeffs = assemble_fv_coefficients(&mesh);
    Ok(Setup { mesh, coeffs, params: SemiconductorParams::default() })
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn write_svg(path: &Path, chart: &Chart) -> Result<(), Failure> {
    let body = chart.render();
    io::write_atomic(path, |w| std::io::Write::write_all(w, body.as_bytes()))?;
    Ok(())
}

fn cmd_generate(cfg: &RunConfig, out: Option<PathBuf>) -> Result<(), Failure> {
    let s = setup(cfg)?;
    let started = Instant::now();
    let biases = ramp_biases(cfg.sweep.v_start, cfg.sweep.v_end, cfg.sweep.step)?;
    let dataset = ramp_sweep(&s.mesh, &s.coeffs, &s.params, cfg.sweep.v_start, cfg.sweep.v_end, cfg.sweep.step, &NewtonOptions::default())
        .exit_with(EXIT_ORACLE)?;
    debug_assert_eq!(dataset.len(), biases.len());
    let residuals = check_sweep(&s.mesh, &dataset);
    let tol = residual_check_tolerance(&s.coeffs);
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    if let Some((k, r)) = residuals.iter().enumerate().find(|(_, &r)| !(r <= tol)) {
        return Err(anyhow!("snapshot {k} fails the independent residual check ({r:.3e} > {tol:.3e})")).exit_with(EXIT_ORACLE);
    }
    ensure_dir(&cfg.output_dir)?;
    let path = out.unwrap_or_else(|| cfg.out("sweep.txt"));
    io::write_sweep(&dataset, &s.mesh, &path)?;
    let node = nearest_node(&s.mesh, PROBE_POINT_UM.0, PROBE_POINT_UM.1);
    let rows: Vec<Vec<f64>> = dataset.snapshots.iter().map(|s| vec![s.v_gate, s.phi[node], s.n[node]]).collect();
    io::write_csv(&["v_gate", "phi_V", "n_cm3"], &rows, &cfg.out("oracle_probe.csv"))?;
    println!(
        "{} snapshots ({:.4} V to {:.4} V), max residual {worst:.3e} (bound {tol:.3e}), {:.2} s -> {}",
        dataset.len(),
        cfg.sweep.v_start,
        cfg.sweep.v_end,
        started.elapsed().as_secs_f64(),
        path.display()
    );
    Ok(())
}

fn load_sweep(cfg: &RunConfig, mesh: &TensorMesh, path: Option<PathBuf>) -> Result<SweepDataset, Failure> {
    let path = path.unwrap_or_else(|| cfg.out("sweep.txt"));
    Ok(io::read_sweep(&path, mesh).with_context(|| format!("loading sweep {}", path.display()))?)
}

fn cmd_fit_lr(
    cfg: &RunConfig,
    sweep: Option<PathBuf>,
    cutoff: Option<usize>,
    out: Option<PathBuf>,
    svg: bool,
) -> Result<(), Failure> {
    let s = setup(cfg)?;
    let dataset = load_sweep(cfg, &s.mesh, sweep)?;
    let cutoff = cutoff.unwrap_or(cfg.lr.cutoff);
    if cutoff == 0 || cutoff > dataset.len() {
        return Err(anyhow!("cutoff {cutoff} outside 1..={}", dataset.len()).into());
    }
    let opts = FitOptions { rcond: cfg.lr.rcond, ridge: cfg.lr.ridge };
    let lr = fit(&dataset.snapshots[..cutoff], &opts)?;
    if cutoff < 3 || lr.meta.rank == 0 {
        eprintln!(
            "warning: surrogate has rank {} from {cutoff} snapshots; its predictions barely depend on the input",
            lr.meta.rank
        );
    }
    ensure_dir(&cfg.output_dir)?;
    let path = out.unwrap_or_else(|| cfg.out("lr.wpnn"));
    io::write_surrogate(&lr, s.mesh.fingerprint(), &path)?;

    let preds: Vec<Vec<f64>> = dataset
        .snapshots
        .iter()
        .map(|snap| lr.predict_phi(&normalize_density(&snap.n)))
        .collect::<Result<_, _>>()?;
    let actual: Vec<Vec<f64>> = dataset.snapshots.iter().map(|s| s.phi.clone()).collect();
    let r2 = r_squared(&preds, &actual);
    let max_err: Vec<f64> = preds
        .iter()
        .zip(&actual)
        .map(|(p, a)| p.iter().zip(a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
        .collect();
    let in_sample = max_err[..cutoff].iter().cloned().fold(0.0, f64::max);
    let out_range = max_err[cutoff..].iter().cloned().fold(0.0, f64::max);

    let mut scatter = Vec::with_capacity(dataset.len() * s.mesh.len());
    for (k, (p, a)) in preds.iter().zip(&actual).enumerate() {
        for node in 0..s.mesh.len() {
            scatter.push(vec![dataset.snapshots[k].v_gate, node as f64, a[node], p[node]]);
        }
    }
    io::write_csv(&["v_gate", "node", "phi_oracle", "phi_lr"], &scatter, &cfg.out("lr_scatter.csv"))?;
    let summary: Vec<Vec<f64>> = dataset
        .snapshots
        .iter()
        .enumerate()
        .map(|(k, snap)| vec![snap.v_gate, (k < cutoff) as u8 as f64, max_err[k]])
        .collect();
    io::write_csv(&["v_gate", "trained", "max_abs_err_V"], &summary, &cfg.out("lr_summary.csv"))?;
    if svg {
        let stride = 7;
        let pick = |trained: bool| -> Vec<(f64, f64)> {
            scatter
                .iter()
                .enumerate()
                .filter(|(i, row)| i % stride == 0 && ((row[0] <= lr.meta.max_bias() + 1e-12) == trained))
                .map(|(_, row)| (row[2], row[3]))
                .collect()
        };
        let chart = Chart::new("Surrogate potential vs oracle", "oracle φ (V)", "surrogate φ (V)")
            .add("training biases", pick(true), Style::Points)
            .add("held-out biases", pick(false), Style::Points);
        write_svg(&cfg.out("lr_scatter.svg"), &chart)?;
    }
    println!(
        "fitted on {cutoff} snapshots ({:.4}-{:.4} V), rank {}: R² = {r2:.6}, in-sample max |Δφ| = {in_sample:.3e} V, held-out max |Δφ| = {out_range:.3e} V -> {}",
        lr.meta.min_bias(),
        lr.meta.max_bias(),
        lr.meta.rank,
        path.display()
    );
    Ok(())
}

struct PinnContext {
    problem: PinnProblem,
    oracle: Option<SweepDataset>,
    opts: SolveOptions,
}

fn pinn_context(cfg: &RunConfig, args: &PinnArgs) -> Result<PinnContext, Failure> {
    let s = setup(cfg)?;
    let lr_path = args.surrogate.clone().unwrap_or_else(|| cfg.out("lr.wpnn"));
    let (lr, _) = io::read_surrogate(&lr_path, Some(s.mesh.fingerprint()))
        .with_context(|| format!("loading surrogate {}", lr_path.display()))?;
    let problem = PinnProblem::with_cutoff(s.mesh.clone(), lr, s.params, cfg.lr.max_training_bias)?
        .with_weights(LossWeights { boundary: cfg.pinn.w_boundary, fd: cfg.pinn.w_fd });
    let oracle_path = args.sweep.clone().unwrap_or_else(|| cfg.out("sweep.txt"));
    let oracle = if args.sweep.is_some() || oracle_path.exists() {
        Some(load_sweep(cfg, &s.mesh, Some(oracle_path))?)
    } else {
        None
    };
    let architecture: Architecture = args.arch.as_deref().unwrap_or(&cfg.pinn.architecture).parse()?;
    let epochs = args.epochs.unwrap_or(cfg.pinn.epochs);
    if epochs == 0 {
        return Err(anyhow!("--epochs must be at least 1").into());
    }
    let opts = SolveOptions {
        epochs,
        seed: args.seed.unwrap_or(cfg.pinn.seed),
        architecture,
        lr: cfg.pinn.learning_rate,
        checkpoints: Vec::new(),
    };
    Ok(PinnContext { problem, oracle, opts })
}

fn bias_dir(cfg: &RunConfig, v_gate: f64) -> PathBuf {
    cfg.out(&format!("vg_{v_gate:.4}"))
}

/// Potential and log density along the row nearest the probe height.
fn probe_row_charts(mesh: &TensorMesh, pred: &Snapshot, oracle: Option<&Snapshot>) -> (Chart, Chart) {
    let j = (0..mesh.ny())
        .min_by(|&a, &b| {
            let da = (mesh.y_nodes[a] - PROBE_POINT_UM.1).abs();
            let db = (mesh.y_nodes[b] - PROBE_POINT_UM.1).abs();
            da.partial_cmp(&db).expect("finite coordinates")
        })
        .unwrap_or(0);
    let row = |s: &Snapshot, f: &dyn Fn(&Snapshot, usize) -> f64| -> Vec<(f64, f64)> {
        (0..mesh.nx()).map(|i| (mesh.x_nodes[i] * 1e3, f(s, mesh.index(i, j)))).collect()
    };
    let phi = |s: &Snapshot, k: usize| s.phi[k];
    let dens = |s: &Snapshot, k: usize| s.n[k] + 1e10;
    let title = format!("y = {:.2} nm", mesh.y_nodes[j] * 1e3);
    let mut a = Chart::new(&title, "x (nm)", "φ (V)").add("PINN", row(pred, &phi), Style::Line);
    let mut b = Chart::new(&title, "x (nm)", "n + 1e10 (cm⁻³)").log_y().add("PINN", row(pred, &dens), Style::Line);
    if let Some(o) = oracle {
        a = a.add("oracle", row(o, &phi), Style::Line);
        b = b.add("oracle", row(o, &dens), Style::Line);
    }
    (a, b)
}

fn cmd_solve(cfg: &RunConfig, vg: f64, epoch_study: &[usize], args: &PinnArgs) -> Result<(), Failure> {
    let mut ctx = pinn_context(cfg, args)?;
    if let Some(&max) = epoch_study.iter().max() {
        ctx.opts.epochs = ctx.opts.epochs.max(max);
    }
    ctx.opts.checkpoints = epoch_study.to_vec();
    let dir = bias_dir(cfg, vg);
    ensure_dir(&dir)?;
    let started = Instant::now();
    let mut history = Vec::new();
    let result = solve_bias_recording(&ctx.problem, vg, &ctx.opts, &mut history);
    io::write_loss_history(&history, &dir.join("loss_history.csv"))?;
    let outcome = match result {
        Ok(o) => o,
        Err(e @ Error::Diverged { .. }) => return Err(anyhow!(e)).exit_with(EXIT_DIVERGED),
        Err(e) => return Err(e.into()),
    };
    let mesh = &ctx.problem.mesh;
    io::write_snapshot_csv(outcome.prediction(), mesh, &dir.join("prediction.csv"))?;
    io::write_network(
        &outcome.net,
        &io::NetworkMeta { v_gate: vg, epochs: ctx.opts.epochs },
        &dir.join("network.wpnn"),
    )?;
    let truth = ctx.oracle.as_ref().and_then(|d| matching_snapshot(d, vg));
    let elapsed = started.elapsed().as_secs_f64();
    let fin = &outcome.fin;
    println!(
        "V_G = {vg} V, {} epochs in {elapsed:.1} s: loss₁ = {:.3e}, loss₂ = {:.3e}, V_G' = {:.6} V",
        ctx.opts.epochs, fin.boundary, fin.fd, fin.v_gate_prime
    );
    if let Some(t) = truth {
        io::write_snapshot_csv(t, mesh, &dir.join("oracle.csv"))?;
        let report = outcome.report(t)?;
        io::write_report(&report, mesh, &dir.join("report.txt"))?;
        println!(
            "max φ error {:.4} %, max log n error {:.4} %",
            report.max_phi_err_pct, report.max_logn_err_pct
        );
        if !epoch_study.is_empty() {
            let mut rows = Vec::new();
            for c in &outcome.checkpoints {
                let r = report_for(c, t)?;
                io::write_report(&r, mesh, &dir.join(format!("report_ep{}.txt", c.epochs)))?;
                rows.push(vec![c.epochs as f64, r.max_phi_err_pct, r.max_logn_err_pct, c.total]);
                println!("  {:>7} epochs: φ {:.4} %, log n {:.4} %", c.epochs, r.max_phi_err_pct, r.max_logn_err_pct);
            }
            io::write_csv(&["epochs", "max_phi_err_pct", "max_logn_err_pct", "loss_total"], &rows, &dir.join("epoch_study.csv"))?;
        }
    } else {
        eprintln!("note: no oracle snapshot at {vg} V; skipping error reports");
    }
    if args.svg {
        let stride = (history.len() / 2000).max(1);
        let pts = |f: &dyn Fn(&wirepinn::pinn::LossRecord) -> f64| -> Vec<(f64, f64)> {
            history.iter().step_by(stride).map(|r| (r.step as f64, f(r))).collect()
        };
        let chart = Chart::new("Training losses", "epoch", "loss")
            .log_y()
            .add("loss₁ (gate)", pts(&|r| r.boundary), Style::Line)
            .add("loss₂ (Fermi–Dirac)", pts(&|r| r.fd), Style::Line);
        write_svg(&dir.join("loss_history.svg"), &chart)?;
        let (a, b) = probe_row_charts(mesh, outcome.prediction(), truth);
        write_svg(&dir.join("phi_row.svg"), &a)?;
        write_svg(&dir.join("density_row.svg"), &b)?;
    }
    Ok(())
}

fn parse_biases(text: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("bad bias range `{text}`"))?;
        return Ok(ramp_biases(nums[0], nums[1], nums[2])?);
    }
    let list: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bad bias list `{text}`"))?;
    if list.is_empty() || list.iter().any(|v| !v.is_finite()) {
        return Err(anyhow!("bias list `{text}` is empty or not finite").into());
    }
    Ok(list)
}

fn cmd_sweep(cfg: &RunConfig, biases: &str, jobs: Option<usize>, amortized: bool, args: &PinnArgs) -> Result<(), Failure> {
    let ctx = pinn_context(cfg, args)?;
    let biases = parse_biases(biases)?;
    ensure_dir(&cfg.output_dir)?;
    let oracle = ctx.oracle.as_ref();
    let mesh = &ctx.problem.mesh;

    if amortized {
        let out = solve_amortized(&ctx.problem, &biases, &ctx.opts).exit_with(EXIT_DIVERGED)?;
        io::write_loss_history(&out.history, &cfg.out("amortized_loss_history.csv"))?;
        let mut rows = Vec::new();
        for e in &out.evaluations {
            let v = e.prediction.v_gate;
            let dir = bias_dir(cfg, v);
            ensure_dir(&dir)?;
            io::write_snapshot_csv(&e.prediction, mesh, &dir.join("prediction_amortized.csv"))?;
            if let Some(t) = oracle.and_then(|d| matching_snapshot(d, v)) {
                let r = report_for(e, t)?;
                rows.push(vec![v, r.max_phi_err_pct, r.max_logn_err_pct, r.max_abs_phi_err_v]);
            }
        }
        io::write_csv(&["v_gate", "max_phi_err_pct", "max_logn_err_pct", "max_abs_phi_err_V"], &rows, &cfg.out("amortized_summary.csv"))?;
        println!("amortized generator trained over {} biases for {} epochs", biases.len(), ctx.opts.epochs);
        return Ok(());
    }

    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build()?;
    let entries = pool.install(|| {
        biases
            .par_iter()
            .map(|&v| sweep_entry(&ctx.problem, v, &ctx.opts, oracle))
            .collect::<Vec<_>>()
    });
    let report = SweepReport::from_entries(mesh, entries, oracle);

    let mut summary = Vec::new();
    let mut scatter = Vec::new();
    let mut diverged = 0;
    for e in &report.entries {
        let dir = bias_dir(cfg, e.v_gate);
        ensure_dir(&dir)?;
        match &e.outcome {
            Ok(solved) => {
                io::write_loss_history(&solved.history, &dir.join("loss_history.csv"))?;
                let p = &solved.evaluation.prediction;
                io::write_snapshot_csv(p, mesh, &dir.join("prediction.csv"))?;
                let (phi_pct, logn_pct, abs_err) = match &solved.report {
                    Some(r) => {
                        io::write_report(r, mesh, &dir.join("report.txt"))?;
                        (r.max_phi_err_pct, r.max_logn_err_pct, r.max_abs_phi_err_v)
                    }
                    None => (f64::NAN, f64::NAN, f64::NAN),
                };
                if let Some(t) = oracle.and_then(|d| matching_snapshot(d, e.v_gate)) {
                    let (lp, lt) = (normalize_density(&p.n), normalize_density(&t.n));
                    for k in 0..mesh.len() {
                        scatter.push(vec![e.v_gate, k as f64, t.phi[k], p.phi[k], lt[k].log10(), lp[k].log10()]);
                    }
                }
                summary.push(vec![e.v_gate, 1.0, phi_pct, logn_pct, abs_err, solved.evaluation.v_gate_prime, solved.evaluation.total]);
                println!("V_G = {:.4} V: φ {phi_pct:.4} %, log n {logn_pct:.4} %", e.v_gate);
            }
            Err(msg) => {
                diverged += 1;
                summary.push(vec![e.v_gate, 0.0, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN]);
                eprintln!("V_G = {:.4} V failed: {msg}", e.v_gate);
            }
        }
    }
    io::write_csv(
        &["v_gate", "ok", "max_phi_err_pct", "max_logn_err_pct", "max_abs_phi_err_V", "v_gate_prime", "loss_total"],
        &summary,
        &cfg.out("sweep_summary.csv"),
    )?;
    let probe: Vec<Vec<f64>> = report
        .probe
        .iter()
        .map(|r| vec![r.v_gate, r.phi_pinn, r.phi_oracle, r.n_pinn, r.n_oracle])
        .collect();
    io::write_csv(&["v_gate", "phi_pinn_V", "phi_oracle_V", "n_pinn_cm3", "n_oracle_cm3"], &probe, &cfg.out("probe.csv"))?;
    io::write_csv(
        &["v_gate", "node", "phi_oracle", "phi_pinn", "log10_ntilde_oracle", "log10_ntilde_pinn"],
        &scatter,
        &cfg.out("sweep_scatter.csv"),
    )?;
    if args.svg {
        let series = |f: &dyn Fn(&wirepinn::pinn::ProbeRow) -> f64| report.probe.iter().map(|r| (r.v_gate, f(r))).collect();
        let a = Chart::new("Probe potential", "V_G (V)", "φ (V)")
            .add("PINN", series(&|r| r.phi_pinn), Style::Points)
            .add("oracle", series(&|r| r.phi_oracle), Style::Line);
        write_svg(&cfg.out("probe_phi.svg"), &a)?;
        let b = Chart::new("Probe density", "V_G (V)", "n (cm⁻³)")
            .log_y()
            .add("PINN", series(&|r| r.n_pinn), Style::Points)
            .add("oracle", series(&|r| r.n_oracle), Style::Line);
        write_svg(&cfg.out("probe_density.svg"), &b)?;
    }
    if diverged > 0 {
        return Err(anyhow!("{diverged} of {} biases failed", biases.len())).exit_with(EXIT_DIVERGED);
    }
    Ok(())
}

fn cmd_report(cfg: &RunConfig, prediction: &Path, vg: f64, sweep: Option<PathBuf>, out: Option<PathBuf>) -> Result<(), Failure> {
    let s = setup(cfg)?;
    let dataset = load_sweep(cfg, &s.mesh, sweep)?;
    let truth = matching_snapshot(&dataset, vg).ok_or_else(|| anyhow!("the sweep has no snapshot at {vg} V"))?;
    let pred = io::read_snapshot_csv(prediction, &s.mesh, vg)?;
    let report = evaluate_against(&pred, truth)?.with_gate(&pred, &s.mesh.gate_nodes())?;
    let path = out.unwrap_or_else(|| prediction.with_file_name("report.txt"));
    io::write_report(&report, &s.mesh, &path)?;
    println!(
        "V_G = {vg} V: max φ error {:.4} %, max log n error {:.4} %, V_G' = {:.6} V -> {}",
        report.max_phi_err_pct,
        report.max_logn_err_pct,
        report.v_gate_prime,
        path.display()
    );
    Ok(())
}

fn cmd_check() -> Result<(), Failure> {
    let results = check::run_checks(check::Fault::from_env()).exit_with(EXIT_CHECK)?;
    let mut failed = Vec::new();
    for r in &results {
        println!("{} {:<32} {:.3e} (bound {:.1e})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.value, r.bound);
        if !r.passed {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(anyhow!("failed checks: {}", failed.join(", "))).exit_with(EXIT_CHECK)
    }
}
