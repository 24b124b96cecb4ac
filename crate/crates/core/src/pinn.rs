//! Self-supervised solve of one gate bias.
//!
//! A generator maps `V_G` to a normalized density `ñ`; the frozen surrogate
//! turns `ñ` into `φ`. Two losses close the loop: the gate nodes of `φ` must
//! sit at `V_G`, and the Fermi–Dirac density of `φ` must agree with `ñ` on a
//! log scale. Nothing here ever sees an oracle solution; the oracle is only
//! used afterwards, by [`evaluate_against`].

use std::sync::Arc;

use crate::autodiff::{AdamState, Architecture, FermiClosure, GeneratorNet, PlateauScheduler, Tape, Var, DEFAULT_SEED};
use crate::error::{Error, Result};
use crate::fermi::SemiconductorParams;
use crate::mesh::{nearest_node, Region, TensorMesh, Q};
use crate::oracle::{Snapshot, SweepDataset};
use crate::surrogate::{denormalize_density, normalize_density, LinearSurrogate, LowRankMap};

/// Highest bias the surrogate may have been trained on.
pub const TRAINING_CUTOFF_V: f64 = 0.3;
/// The generator sees `V_G / INPUT_SCALE_V`.
pub const INPUT_SCALE_V: f64 = 0.75;
/// Added on top of `raw + 1` so that `ñ` stays strictly positive.
pub const NTILDE_FLOOR: f64 = 1e-9;
/// Probe point of the bias-trace comparison, µm.
pub const PROBE_POINT_UM: (f64, f64) = (0.0405, 0.002);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub boundary: f64,
    pub fd: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { boundary: 1.0, fd: 1.0 }
    }
}

/// Everything a solve needs that does not depend on the bias.
#[derive(Debug, Clone)]
pub struct PinnProblem {
    pub mesh: TensorMesh,
    pub params: SemiconductorParams,
    pub surrogate: Arc<LinearSurrogate>,
    pub weights: LossWeights,
    map: Arc<LowRankMap>,
    closure: FermiClosure,
    gate: Arc<[usize]>,
    oxide: Vec<usize>,
}

impl PinnProblem {
    /// Refuses surrogates whose training set reached above
    /// [`TRAINING_CUTOFF_V`].
    pub fn new(mesh: TensorMesh, surrogate: LinearSurrogate, params: SemiconductorParams) -> Result<Self> {
        Self::with_cutoff(mesh, surrogate, params, TRAINING_CUTOFF_V)
    }

    pub fn with_cutoff(
        mesh: TensorMesh,
        surrogate: LinearSurrogate,
        params: SemiconductorParams,
        cutoff_v: f64,
    ) -> Result<Self> {
        let trained_max = surrogate.meta.max_bias();
        if !(trained_max <= cutoff_v + 1e-9) {
            return Err(Error::Contract(format!(
                "surrogate was trained up to {trained_max} V, above the {cutoff_v} V limit"
            )));
        }
        if surrogate.dim() != mesh.len() {
            return Err(Error::Shape(format!(
                "surrogate dimension {} does not match {} mesh nodes",
                surrogate.dim(),
                mesh.len()
            )));
        }
        let gate: Arc<[usize]> = Arc::from(mesh.gate_nodes());
        if gate.is_empty() {
            return Err(Error::Contract("mesh has no gate nodes".into()));
        }
        let oxide = mesh.oxide_nodes();
        let closure = FermiClosure::new(params, mesh.region.clone());
        let map = Arc::new(surrogate.low_rank());
        Ok(Self { mesh, params, surrogate: Arc::new(surrogate), weights: LossWeights::default(), map, closure, gate, oxide })
    }

    pub fn with_weights(mut self, weights: LossWeights) -> Self {
        self.weights = weights;
        self
    }

    pub fn gate_nodes(&self) -> &[usize] {
        &self.gate
    }

    pub fn oxide_nodes(&self) -> &[usize] {
        &self.oxide
    }

    pub fn map(&self) -> &LowRankMap {
        &self.map
    }

    /// `φ` the surrogate assigns to `ñ`, via the same factorization used in
    /// training.
    pub fn phi_of(&self, ntilde: &[f64]) -> Vec<f64> {
        let mut phi = vec![0.0; self.map.dim()];
        self.map.apply(ntilde, &mut phi);
        phi
    }

    /// Records `ñ → φ → (loss₁, loss₂, total)` on `tape`.
    fn record_losses(&self, tape: &mut Tape, ntilde: Var, v_gate: f64) -> LossVars {
        let phi = tape.affine(ntilde, &self.map);
        let at_gate = tape.gather(phi, &self.gate);
        let boundary = tape.mse_const(at_gate, v_gate);
        let n_fd = tape.fermi(phi, &self.closure);
        let log_fd = tape.log10(n_fd);
        let log_nn = tape.log10(ntilde);
        let fd = tape.mse(log_fd, log_nn);
        let total = tape.weighted_sum(&[(boundary, self.weights.boundary), (fd, self.weights.fd)]);
        LossVars { boundary, fd, total }
    }
}

struct LossVars {
    boundary: Var,
    fd: Var,
    total: Var,
}

/// `ñ = raw + 1 + 10⁻⁹`
pub fn postprocess(raw: &[f64]) -> Vec<f64> {
    raw.iter().map(|r| r + 1.0 + NTILDE_FLOOR).collect()
}

/// Mean potential over the gate nodes.
pub fn gate_voltage(phi: &[f64], gate: &[usize]) -> Result<f64> {
    if gate.is_empty() {
        return Err(Error::Contract("gate node set is empty".into()));
    }
    Ok(gate.iter().map(|&k| phi[k]).sum::<f64>() / gate.len() as f64)
}

/// Mean over gate nodes of `(φ − V_G)²`.
pub fn loss_boundary(phi: &[f64], gate: &[usize], v_gate: f64) -> f64 {
    gate.iter().map(|&k| (phi[k] - v_gate).powi(2)).sum::<f64>() / gate.len() as f64
}

/// Mean over all nodes of `(log₁₀ ñ_FD(φ) − log₁₀ ñ)²`.
pub fn loss_fd(ntilde: &[f64], phi: &[f64], params: &SemiconductorParams, mesh: &TensorMesh) -> f64 {
    let closure = FermiClosure::new(*params, mesh.region.clone());
    let s: f64 = ntilde
        .iter()
        .zip(phi)
        .zip(&mesh.region)
        .map(|((&nt, &p), &r)| (closure.eval(p, r).0.log10() - nt.log10()).powi(2))
        .sum();
    s / ntilde.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub epochs: usize,
    pub seed: u64,
    pub architecture: Architecture,
    pub lr: f64,
    /// Epoch counts at which the current prediction is kept.
    pub checkpoints: Vec<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { epochs: 200_000, seed: DEFAULT_SEED, architecture: Architecture::default(), lr: 1e-3, checkpoints: Vec::new() }
    }
}

/// One optimizer step as seen by the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub lr: f64,
    pub boundary: f64,
    pub fd: f64,
    pub total: f64,
}

/// A generator state evaluated without a tape.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Number of completed optimizer updates.
    pub epochs: usize,
    pub prediction: Snapshot,
    pub ntilde: Vec<f64>,
    pub boundary: f64,
    pub fd: f64,
    pub total: f64,
    pub v_gate_prime: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub v_gate: f64,
    pub seed: u64,
    pub architecture: Architecture,
    pub history: Vec<LossRecord>,
    pub checkpoints: Vec<Evaluation>,
    pub fin: Evaluation,
    pub net: GeneratorNet,
}

impl SolveOutcome {
    pub fn prediction(&self) -> &Snapshot {
        &self.fin.prediction
    }

    /// Scores the final prediction against `oracle`.
    pub fn report(&self, oracle: &Snapshot) -> Result<ErrorReport> {
        report_for(&self.fin, oracle)
    }
}

/// Error report for an evaluation, including its losses.
pub fn report_for(eval: &Evaluation, oracle: &Snapshot) -> Result<ErrorReport> {
    let mut report = evaluate_against(&eval.prediction, oracle)?;
    report.epochs = eval.epochs;
    report.v_gate_prime = eval.v_gate_prime;
    report.final_losses = Some(FinalLosses { boundary: eval.boundary, fd: eval.fd, total: eval.total });
    Ok(report)
}

/// Builds a snapshot from a generator density.
fn prediction_snapshot(problem: &PinnProblem, v_gate: f64, ntilde: &[f64], phi: Vec<f64>) -> Snapshot {
    let n = denormalize_density(ntilde);
    let net_charge = n
        .iter()
        .zip(&problem.mesh.net_doping)
        .zip(&problem.mesh.region)
        .map(|((&n, &d), &r)| if r == Region::Silicon { Q * (d - n) } else { 0.0 })
        .collect();
    Snapshot { v_gate, phi, n, net_charge, converged: true, residual_norm: f64::NAN, iterations: 0 }
}

/// Evaluates the generator at `v_gate` and scores the losses.
pub fn evaluate_net(problem: &PinnProblem, net: &GeneratorNet, v_gate: f64, epochs: usize) -> Evaluation {
    let ntilde = postprocess(&net.predict(v_gate / INPUT_SCALE_V));
    let phi = problem.phi_of(&ntilde);
    let boundary = loss_boundary(&phi, &problem.gate, v_gate);
    let fd = loss_fd(&ntilde, &phi, &problem.params, &problem.mesh);
    let total = problem.weights.boundary * boundary + problem.weights.fd * fd;
    let v_gate_prime = gate_voltage(&phi, &problem.gate).unwrap_or(f64::NAN);
    let prediction = prediction_snapshot(problem, v_gate, &ntilde, phi);
    Evaluation { epochs, prediction, ntilde, boundary, fd, total, v_gate_prime }
}

fn check_bias(v_gate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v_gate) {
        return Err(Error::Domain(format!("gate bias {v_gate} V outside [0, 1] V")));
    }
    Ok(())
}

/// Trains a fresh generator for `v_gate`.
pub fn solve_bias(problem: &PinnProblem, v_gate: f64, opts: &SolveOptions) -> Result<SolveOutcome> {
    let mut history = Vec::new();
    solve_bias_recording(problem, v_gate, opts, &mut history)
}

/// Like [`solve_bias`], but the loss history is written into `history` so
/// it survives a diverged run.
pub fn solve_bias_recording(
    problem: &PinnProblem,
    v_gate: f64,
    opts: &SolveOptions,
    history: &mut Vec<LossRecord>,
) -> Result<SolveOutcome> {
    check_bias(v_gate)?;
    if opts.epochs == 0 {
        return Err(Error::Config("epoch budget must be at least 1".into()));
    }
    let grid = (problem.mesh.nx(), problem.mesh.ny());
    let mut net = GeneratorNet::new(opts.architecture.clone(), grid, opts.seed)?;
    let mut adam = AdamState::new(net.params.len(), opts.lr);
    let mut sched = PlateauScheduler::new(opts.lr);
    let input = v_gate / INPUT_SCALE_V;
    history.clear();
    history.reserve(opts.epochs);
    let mut checkpoints = Vec::new();

    for step in 1..=opts.epochs {
        let mut tape = Tape::new();
        let raw = net.forward(&mut tape, input);
        debug_assert!(tape.value(raw).iter().all(|&r| r >= -1.0));
        let ntilde = tape.add_const(raw, 1.0 + NTILDE_FLOOR);
        let losses = problem.record_losses(&mut tape, ntilde, v_gate);
        let record = LossRecord {
            step,
            lr: adam.lr,
            boundary: tape.value(losses.boundary)[0],
            fd: tape.value(losses.fd)[0],
            total: tape.value(losses.total)[0],
        };
        history.push(record);
        if !record.total.is_finite() {
            return Err(Error::Diverged { step });
        }
        net.params.zero_grad();
        tape.backward(losses.total, &mut net.params)?;
        adam.update(&mut net.params.values, &net.params.grads)?;
        adam.lr = sched.step(record.total);
        if opts.checkpoints.contains(&step) && step != opts.epochs {
            checkpoints.push(evaluate_net(problem, &net, v_gate, step));
        }
    }
    let fin = evaluate_net(problem, &net, v_gate, opts.epochs);
    if opts.checkpoints.contains(&opts.epochs) {
        checkpoints.push(fin.clone());
    }
    Ok(SolveOutcome {
        v_gate,
        seed: opts.seed,
        architecture: opts.architecture.clone(),
        history: history.clone(),
        checkpoints,
        fin,
        net,
    })
}

/// Outcome of comparing the composed-loss gradient with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    /// `(coordinate, analytic, finite difference)` per sampled parameter.
    pub samples: Vec<(usize, f64, f64)>,
    pub max_rel_err: f64,
}

/// Total loss of `net` at `v_gate`, and optionally its parameter gradient.
pub fn total_loss(problem: &PinnProblem, net: &mut GeneratorNet, v_gate: f64, with_grad: bool) -> Result<f64> {
    let mut tape = Tape::new();
    let raw = net.forward(&mut tape, v_gate / INPUT_SCALE_V);
    let ntilde = tape.add_const(raw, 1.0 + NTILDE_FLOOR);
    let losses = problem.record_losses(&mut tape, ntilde, v_gate);
    if with_grad {
        net.params.zero_grad();
        tape.backward(losses.total, &mut net.params)?;
    }
    Ok(tape.value(losses.total)[0])
}

/// Checks `∂(w₁ loss₁ + w₂ loss₂)/∂θ` on `count` parameter coordinates
/// drawn with `seed`, using central differences with step `h`.
pub fn gradient_check(
    problem: &PinnProblem,
    net: &GeneratorNet,
    v_gate: f64,
    count: usize,
    seed: u64,
    h: f64,
) -> Result<GradientCheck> {
    use rand::{Rng, SeedableRng};
    let mut net = net.clone();
    total_loss(problem, &mut net, v_gate, true)?;
    let analytic = net.params.grads.clone();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(count);
    let mut max_rel_err: f64 = 0.0;
    for _ in 0..count {
        let k = rng.random_range(0..net.params.len());
        let orig = net.params.values[k];
        net.params.values[k] = orig + h;
        let up = total_loss(problem, &mut net, v_gate, false)?;
        net.params.values[k] = orig - h;
        let down = total_loss(problem, &mut net, v_gate, false)?;
        net.params.values[k] = orig;
        let fd = (up - down) / (2.0 * h);
        let g = analytic[k];
        let scale = g.abs().max(fd.abs());
        let rel = if scale == 0.0 { 0.0 } else { (g - fd).abs() / scale };
        max_rel_err = max_rel_err.max(rel);
        samples.push((k, g, fd));
    }
    Ok(GradientCheck { samples, max_rel_err })
}

/// One generator trained over several biases at once; the loss is the sum
/// over biases.
#[derive(Debug, Clone)]
pub struct AmortizedOutcome {
    pub biases: Vec<f64>,
    pub history: Vec<LossRecord>,
    pub evaluations: Vec<Evaluation>,
    pub net: GeneratorNet,
}

pub fn solve_amortized(problem: &PinnProblem, biases: &[f64], opts: &SolveOptions) -> Result<AmortizedOutcome> {
    if biases.is_empty() {
        return Err(Error::Config("amortized solve needs at least one bias".into()));
    }
    for &v in biases {
        check_bias(v)?;
    }
    if opts.epochs == 0 {
        return Err(Error::Config("epoch budget must be at least 1".into()));
    }
    let grid = (problem.mesh.nx(), problem.mesh.ny());
    let mut net = GeneratorNet::new(opts.architecture.clone(), grid, opts.seed)?;
    let mut adam = AdamState::new(net.params.len(), opts.lr);
    let mut sched = PlateauScheduler::new(opts.lr);
    let mut history = Vec::with_capacity(opts.epochs);
    for step in 1..=opts.epochs {
        net.params.zero_grad();
        let mut record = LossRecord { step, lr: adam.lr, boundary: 0.0, fd: 0.0, total: 0.0 };
        for &v in biases {
            let mut tape = Tape::new();
            let raw = net.forward(&mut tape, v / INPUT_SCALE_V);
            let ntilde = tape.add_const(raw, 1.0 + NTILDE_FLOOR);
            let losses = problem.record_losses(&mut tape, ntilde, v);
            record.boundary += tape.value(losses.boundary)[0];
            record.fd += tape.value(losses.fd)[0];
            record.total += tape.value(losses.total)[0];
            tape.backward(losses.total, &mut net.params)?;
        }
        history.push(record);
        if !record.total.is_finite() {
            return Err(Error::Diverged { step });
        }
        adam.update(&mut net.params.values, &net.params.grads)?;
        adam.lr = sched.step(record.total);
    }
    let evaluations = biases.iter().map(|&v| evaluate_net(problem, &net, v, opts.epochs)).collect();
    Ok(AmortizedOutcome { biases: biases.to_vec(), history, evaluations, net })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalLosses {
    pub boundary: f64,
    pub fd: f64,
    pub total: f64,
}

/// Prediction quality against an oracle snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub v_gate: f64,
    pub max_phi_err_pct: f64,
    pub max_logn_err_pct: f64,
    pub max_abs_phi_err_v: f64,
    /// Per node, `φ̂ − φ` in V.
    pub phi_err: Vec<f64>,
    /// Per node, `log₁₀ ñ̂ − log₁₀ ñ`.
    pub logn_err: Vec<f64>,
    pub v_gate_prime: f64,
    /// Zero when the report was not produced by a training run.
    pub epochs: usize,
    pub final_losses: Option<FinalLosses>,
}

fn max_abs(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, |m, x| m.max(x.abs()))
}

/// Profile-normalized maximum errors of `prediction` against `oracle`.
pub fn evaluate_against(prediction: &Snapshot, oracle: &Snapshot) -> Result<ErrorReport> {
    let len = oracle.phi.len();
    if prediction.phi.len() != len || prediction.n.len() != len || oracle.n.len() != len {
        return Err(Error::Shape(format!(
            "prediction has {} nodes, oracle has {len}",
            prediction.phi.len()
        )));
    }
    let phi_err: Vec<f64> = prediction.phi.iter().zip(&oracle.phi).map(|(a, b)| a - b).collect();
    let log_pred: Vec<f64> = normalize_density(&prediction.n).iter().map(|v| v.log10()).collect();
    let log_true: Vec<f64> = normalize_density(&oracle.n).iter().map(|v| v.log10()).collect();
    let logn_err: Vec<f64> = log_pred.iter().zip(&log_true).map(|(a, b)| a - b).collect();
    let phi_scale = max_abs(oracle.phi.iter().copied());
    let log_scale = max_abs(log_true.iter().copied());
    let max_abs_phi_err_v = max_abs(phi_err.iter().copied());
    let pct = |err: f64, scale: f64| if err == 0.0 { 0.0 } else { 100.0 * err / scale };
    Ok(ErrorReport {
        v_gate: oracle.v_gate,
        max_phi_err_pct: pct(max_abs_phi_err_v, phi_scale),
        max_logn_err_pct: pct(max_abs(logn_err.iter().copied()), log_scale),
        max_abs_phi_err_v,
        phi_err,
        logn_err,
        v_gate_prime: f64::NAN,
        epochs: 0,
        final_losses: None,
    })
}

impl ErrorReport {
    /// Replaces the reported `V_G′` with the gate mean over `gate`.
    pub fn with_gate(mut self, prediction: &Snapshot, gate: &[usize]) -> Result<Self> {
        self.v_gate_prime = gate_voltage(&prediction.phi, gate)?;
        Ok(self)
    }

    pub fn meets(&self, phi_pct: f64, logn_pct: f64) -> bool {
        self.max_phi_err_pct <= phi_pct && self.max_logn_err_pct <= logn_pct
    }
}

/// Losses with the generator bypassed and the oracle density fed in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherForced {
    /// Boundary loss of the surrogate potential.
    pub boundary: f64,
    /// Consistency loss of the surrogate potential.
    pub fd: f64,
    /// Consistency loss with the oracle's own potential.
    pub fd_oracle_phi: f64,
    /// Largest `|φ_LR − V_G|` over the gate nodes.
    pub gate_error: f64,
}

pub fn teacher_forced(problem: &PinnProblem, oracle: &Snapshot) -> Result<TeacherForced> {
    if oracle.n.len() != problem.mesh.len() {
        return Err(Error::Shape("oracle snapshot does not match the mesh".into()));
    }
    let ntilde = normalize_density(&oracle.n);
    let phi = problem.phi_of(&ntilde);
    let gate_error = max_abs(problem.gate.iter().map(|&k| phi[k] - oracle.v_gate));
    Ok(TeacherForced {
        boundary: loss_boundary(&phi, &problem.gate, oracle.v_gate),
        fd: loss_fd(&ntilde, &phi, &problem.params, &problem.mesh),
        fd_oracle_phi: loss_fd(&ntilde, &oracle.phi, &problem.params, &problem.mesh),
        gate_error,
    })
}

/// One bias of a sweep.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub v_gate: f64,
    pub outcome: std::result::Result<SweepSolved, String>,
}

#[derive(Debug, Clone)]
pub struct SweepSolved {
    pub evaluation: Evaluation,
    pub history: Vec<LossRecord>,
    pub report: Option<ErrorReport>,
}

/// Oracle snapshot at `v_gate`, if the sweep contains it.
pub fn matching_snapshot(dataset: &SweepDataset, v_gate: f64) -> Option<&Snapshot> {
    dataset.snapshots.iter().find(|s| (s.v_gate - v_gate).abs() < 1e-9)
}

/// Solves and scores one bias; failures are captured, not propagated.
pub fn sweep_entry(problem: &PinnProblem, v_gate: f64, opts: &SolveOptions, oracle: Option<&SweepDataset>) -> SweepEntry {
    let outcome = solve_bias(problem, v_gate, opts).and_then(|out| {
        let report = match oracle.and_then(|d| matching_snapshot(d, v_gate)) {
            Some(s) => Some(out.report(s)?),
            None => None,
        };
        Ok(SweepSolved { evaluation: out.fin, history: out.history, report })
    });
    SweepEntry { v_gate, outcome: outcome.map_err(|e| e.to_string()) }
}

/// Potential and density at the probe node for each bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRow {
    pub v_gate: f64,
    pub phi_pinn: f64,
    pub n_pinn: f64,
    pub phi_oracle: f64,
    pub n_oracle: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub probe_node: usize,
    pub probe: Vec<ProbeRow>,
}

impl SweepReport {
    pub fn from_entries(mesh: &TensorMesh, entries: Vec<SweepEntry>, oracle: Option<&SweepDataset>) -> Self {
        let probe_node = nearest_node(mesh, PROBE_POINT_UM.0, PROBE_POINT_UM.1);
        let probe = entries
            .iter()
            .filter_map(|e| {
                let solved = e.outcome.as_ref().ok()?;
                let p = &solved.evaluation.prediction;
                let truth = oracle.and_then(|d| matching_snapshot(d, e.v_gate));
                Some(ProbeRow {
                    v_gate: e.v_gate,
                    phi_pinn: p.phi[probe_node],
                    n_pinn: p.n[probe_node],
                    phi_oracle: truth.map_or(f64::NAN, |s| s.phi[probe_node]),
                    n_oracle: truth.map_or(f64::NAN, |s| s.n[probe_node]),
                })
            })
            .collect();
        Self { entries, probe_node, probe }
    }

    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| e.outcome.is_err()).count()
    }
}

/// Independent per-bias solves, one after the other.
pub fn sweep_solve(problem: &PinnProblem, biases: &[f64], opts: &SolveOptions, oracle: Option<&SweepDataset>) -> SweepReport {
    let entries = biases.iter().map(|&v| sweep_entry(problem, v, opts, oracle)).collect();
    SweepReport::from_entries(&problem.mesh, entries, oracle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::TrainingMeta;

    fn toy_mesh() -> TensorMesh {
        let cfg = crate::mesh::DeviceConfig { nx: 9, ..Default::default() };
        crate::mesh::build_device_mesh(&cfg).unwrap()
    }

    fn identity_surrogate(dim: usize, max_bias: f64) -> LinearSurrogate {
        let mut w = vec![0.0; dim * dim];
        for k in 0..dim {
            w[k * dim + k] = 0.1;
        }
        let meta = TrainingMeta { biases: vec![0.0, max_bias], rank: dim, rcond: 1e-12, ridge: 0.0 };
        LinearSurrogate::from_parts(dim, w, vec![0.2; dim], meta).unwrap()
    }

    #[test]
    fn postprocess_floor_and_identity() {
        assert_eq!(postprocess(&[-1.0, 0.0]), vec![1e-9, 1.0 + 1e-9]);
        let n = denormalize_density(&postprocess(&[-1.0]));
        assert!(n[0].abs() < 1e-6);
    }

    #[test]
    fn gate_voltage_is_mean() {
        assert_eq!(gate_voltage(&[0.4, 9.0, 0.6], &[0, 2]).unwrap(), 0.5);
        assert_eq!(gate_voltage(&[0.5; 4], &[1, 2, 3]).unwrap(), 0.5);
        assert!(matches!(gate_voltage(&[0.5], &[]), Err(Error::Contract(_))));
    }

    #[test]
    fn boundary_loss_arithmetic() {
        let phi = vec![0.31; 5];
        assert!((loss_boundary(&phi, &[0, 1, 2], 0.3) - 1e-4).abs() < 1e-15);
        assert_eq!(loss_boundary(&[0.3, 0.3], &[0, 1], 0.3), 0.0);
    }

    #[test]
    fn fd_loss_one_decade_off() {
        let mesh = crate::mesh::build_device_mesh(&Default::default()).unwrap();
        let params = SemiconductorParams::default();
        let phi: Vec<f64> = (0..mesh.len()).map(|k| 0.3 * (k % 7) as f64 / 7.0).collect();
        let closure = FermiClosure::new(params, mesh.region.clone());
        let mut nt: Vec<f64> = phi.iter().zip(&mesh.region).map(|(&p, &r)| closure.eval(p, r).0).collect();
        assert_eq!(loss_fd(&nt, &phi, &params, &mesh), 0.0);
        nt[100] *= 10.0;
        let l = loss_fd(&nt, &phi, &params, &mesh);
        assert!((l - 1.0 / 2193.0).abs() < 1e-12, "{l}");
    }

    #[test]
    fn firewall_rejects_wide_training_range() {
        let mesh = toy_mesh();
        let bad = identity_surrogate(mesh.len(), 0.3075);
        assert!(matches!(PinnProblem::new(mesh.clone(), bad, Default::default()), Err(Error::Contract(_))));
        let ok = identity_surrogate(mesh.len(), 0.3);
        assert!(PinnProblem::new(mesh, ok, Default::default()).is_ok());
    }

    #[test]
    fn evaluate_definitions() {
        let oracle = Snapshot {
            v_gate: 0.3,
            phi: vec![0.1, 0.5, -0.2],
            n: vec![1e10, 1e18, 0.0],
            net_charge: vec![0.0; 3],
            converged: true,
            residual_norm: 0.0,
            iterations: 1,
        };
        let r = evaluate_against(&oracle, &oracle).unwrap();
        assert_eq!((r.max_phi_err_pct, r.max_logn_err_pct), (0.0, 0.0));
        let mut p = oracle.clone();
        p.phi[2] += 0.003 * 0.5;
        let r = evaluate_against(&p, &oracle).unwrap();
        assert!((r.max_phi_err_pct - 0.3).abs() < 1e-9);
        p.phi.pop();
        assert!(evaluate_against(&p, &oracle).is_err());
    }

    #[test]
    fn short_solve_is_deterministic_and_bounded() {
        let mesh = toy_mesh();
        let problem = PinnProblem::new(mesh.clone(), identity_surrogate(mesh.len(), 0.3), Default::default()).unwrap();
        let opts = SolveOptions { epochs: 20, checkpoints: vec![5, 20], ..Default::default() };
        let a = solve_bias(&problem, 0.5, &opts).unwrap();
        let b = solve_bias(&problem, 0.5, &opts).unwrap();
        assert_eq!(a.history.len(), 20);
        assert_eq!(a.checkpoints.len(), 2);
        assert_eq!(a.checkpoints[1].ntilde, a.fin.ntilde);
        for (x, y) in a.history.iter().zip(&b.history) {
            assert_eq!(x.total.to_bits(), y.total.to_bits());
        }
        assert!(a.fin.ntilde.iter().all(|&v| v >= NTILDE_FLOOR));
        assert!(matches!(solve_bias(&problem, 1.5, &opts), Err(Error::Domain(_))));
        let zero = SolveOptions { epochs: 0, ..Default::default() };
        assert!(matches!(solve_bias(&problem, 0.5, &zero), Err(Error::Config(_))));
    }

    #[test]
    fn non_finite_loss_reports_divergence() {
        let mesh = toy_mesh();
        let problem = PinnProblem::new(mesh.clone(), identity_surrogate(mesh.len(), 0.3), Default::default())
            .unwrap()
            .with_weights(LossWeights { boundary: f64::NAN, fd: 1.0 });
        let mut history = vec![LossRecord { step: 0, lr: 0.0, boundary: 0.0, fd: 0.0, total: 0.0 }; 3];
        let opts = SolveOptions { epochs: 200, ..Default::default() };
        let res = solve_bias_recording(&problem, 0.5, &opts, &mut history);
        match res {
            Err(Error::Diverged { step }) => assert_eq!(history.len(), step),
            other => panic!("expected divergence, got {:?}", other.map(|o| o.fin.total)),
        }
    }

    #[test]
    fn amortized_mode_runs() {
        let mesh = toy_mesh();
        let problem = PinnProblem::new(mesh.clone(), identity_surrogate(mesh.len(), 0.3), Default::default()).unwrap();
        let opts = SolveOptions { epochs: 5, ..Default::default() };
        let out = solve_amortized(&problem, &[0.0, 0.3, 0.6], &opts).unwrap();
        assert_eq!(out.evaluations.len(), 3);
        assert_eq!(out.history.len(), 5);
    }
}
