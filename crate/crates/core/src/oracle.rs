//! Ground-truth generator: equilibrium nonlinear Poisson solver.
//!
//! Unknown is the electrostatic potential `φ` at every node. At a
//! non-Dirichlet node the finite-volume residual is
//!
//! `F_c(φ) = Σ_nb c_e (φ_nb − φ_c) + q (N_D − N_A − n(φ_c)) V_c`
//!
//! with `V_c` the silicon part of the control area. Gate nodes are pinned to
//! `V_G`; source/drain nodes to the built-in potential `φ_bi` at which the
//! silicon is charge neutral. Every other boundary is zero-flux.

use crate::banded::BandedSpd;
use crate::error::{Error, Result};
use crate::fermi::{electron_density, electron_density_deriv, SemiconductorParams};
use crate::mesh::{nearest_node, Contact, FvCoefficients, Region, TensorMesh, EPS0, Q};

/// One solved bias point.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub v_gate: f64,
    /// Potential per node, V.
    pub phi: Vec<f64>,
    /// Electron density per node, cm⁻³.
    pub n: Vec<f64>,
    /// Space charge `q (N_D − N_A − n)` per node, C/cm³.
    pub net_charge: Vec<f64>,
    pub converged: bool,
    pub residual_norm: f64,
    pub iterations: usize,
}

impl Snapshot {
    /// Builds a snapshot from a potential, deriving `n` and the space charge
    /// with the shared closure.
    pub fn from_potential(mesh: &TensorMesh, params: &SemiconductorParams, v_gate: f64, phi: Vec<f64>) -> Self {
        let n: Vec<f64> = phi
            .iter()
            .zip(&mesh.region)
            .map(|(&p, &r)| electron_density(p, params, r))
            .collect();
        let net_charge = n
            .iter()
            .zip(&mesh.net_doping)
            .zip(&mesh.region)
            .map(|((&n, &d), &r)| match r {
                Region::Silicon => Q * (d - n),
                Region::Oxide => 0.0,
            })
            .collect();
        Self { v_gate, phi, n, net_charge, converged: false, residual_norm: f64::NAN, iterations: 0 }
    }
}

/// An ordered gate sweep on one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepDataset {
    pub snapshots: Vec<Snapshot>,
    pub mesh_fingerprint: u64,
    pub params: SemiconductorParams,
}

impl SweepDataset {
    pub fn biases(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.v_gate).collect()
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    /// Per-node update clamp in units of the thermal voltage.
    pub clamp_vt: f64,
    /// Absolute tolerance on `‖F‖∞`; `None` scales it to the largest charge
    /// term, `1e-10 · q · 1e20 · max(V_c)`.
    pub tolerance: Option<f64>,
    /// When false, mobile electrons are left out of the space charge.
    pub carriers: bool,
    /// Overrides the source/drain Dirichlet value (default: `φ_bi`).
    pub contact_potential: Option<f64>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            clamp_vt: 10.0,
            tolerance: None,
            carriers: true,
            contact_potential: None,
        }
    }
}

impl NewtonOptions {
    pub fn tolerance_for(&self, coeffs: &FvCoefficients) -> f64 {
        self.tolerance.unwrap_or(1e-10 * Q * 1e20 * coeffs.max_volume())
    }
}

/// Potential at which silicon with net doping `nd` is charge neutral.
pub fn built_in_potential(params: &SemiconductorParams, nd: f64) -> Result<f64> {
    if !(nd > 0.0) {
        return Err(Error::Domain(format!("built-in potential needs donor doping > 0, got {nd}")));
    }
    params.potential_for_density(nd)
}

/// Dirichlet value of every node (`None` for free nodes).
pub fn dirichlet_values(
    mesh: &TensorMesh,
    params: &SemiconductorParams,
    v_gate: f64,
    opts: &NewtonOptions,
) -> Result<Vec<Option<f64>>> {
    let mut out = vec![None; mesh.len()];
    for k in 0..mesh.len() {
        out[k] = match mesh.contact[k] {
            Contact::None => None,
            Contact::Gate => Some(v_gate),
            Contact::Source | Contact::Drain => Some(match opts.contact_potential {
                Some(v) => v,
                None => built_in_potential(params, mesh.net_doping[k])?,
            }),
        };
    }
    Ok(out)
}

/// Starting point for the first bias: `φ_bi` at the ends, `V_G` under the
/// gate, linear in `x` in between.
pub fn initial_guess(mesh: &TensorMesh, bc: &[Option<f64>], v_gate: f64) -> Vec<f64> {
    let gate_x: Vec<f64> = mesh.gate_nodes().iter().map(|&k| mesh.coords(k).0).collect();
    let g0 = gate_x.iter().cloned().fold(f64::INFINITY, f64::min);
    let g1 = gate_x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let src = mesh.nodes_with(Contact::Source).first().and_then(|&k| bc[k]).unwrap_or(0.0);
    let drn = mesh.nodes_with(Contact::Drain).first().and_then(|&k| bc[k]).unwrap_or(0.0);
    let length = mesh.length_um();
    (0..mesh.len())
        .map(|k| {
            if let Some(v) = bc[k] {
                return v;
            }
            let x = mesh.coords(k).0;
            if x < g0 {
                src + (v_gate - src) * x / g0
            } else if x > g1 {
                drn + (v_gate - drn) * (length - x) / (length - g1)
            } else {
                v_gate
            }
        })
        .collect()
}

/// Newton residual and its Jacobian `−∂F/∂φ` (SPD) with Dirichlet rows
/// replaced by identity.
fn assemble(
    mesh: &TensorMesh,
    coeffs: &FvCoefficients,
    params: &SemiconductorParams,
    bc: &[Option<f64>],
    phi: &[f64],
    carriers: bool,
) -> (Vec<f64>, BandedSpd) {
    let n = mesh.len();
    let mut residual = vec![0.0; n];
    let mut jac = BandedSpd::zeros(n, mesh.ny());
    for e in &coeffs.edges {
        let f = e.conductance * (phi[e.b] - phi[e.a]);
        residual[e.a] += f;
        residual[e.b] -= f;
        let (fa, fb) = (bc[e.a].is_none(), bc[e.b].is_none());
        if fa {
            jac.add(e.a, e.a, e.conductance);
        }
        if fb {
            jac.add(e.b, e.b, e.conductance);
        }
        if fa && fb {
            jac.add(e.a, e.b, -e.conductance);
        }
    }
    for k in 0..n {
        if bc[k].is_some() {
            residual[k] = 0.0;
            jac.add(k, k, 1.0);
            continue;
        }
        let vol = coeffs.si_volume[k];
        if vol > 0.0 {
            let (dens, ddens) = if carriers {
                (
                    electron_density(phi[k], params, Region::Silicon),
                    electron_density_deriv(phi[k], params, Region::Silicon),
                )
            } else {
                (0.0, 0.0)
            };
            residual[k] += Q * (mesh.net_doping[k] - dens) * vol;
            jac.add(k, k, Q * ddens * vol);
        }
    }
    (residual, jac)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves the equilibrium problem at `v_gate` from the default initial guess.
pub fn solve_equilibrium(
    mesh: &TensorMesh,
    coeffs: &FvCoefficients,
    params: &SemiconductorParams,
    v_gate: f64,
    opts: &NewtonOptions,
) -> Result<Snapshot> {
    solve_from(mesh, coeffs, params, v_gate, opts, None)
}

/// Solves the equilibrium problem at `v_gate`, starting from `guess` when
/// given (its Dirichlet entries are overwritten).
pub fn solve_from(
    mesh: &TensorMesh,
    coeffs: &FvCoefficients,
    params: &SemiconductorParams,
    v_gate: f64,
    opts: &NewtonOptions,
    guess: Option<&[f64]>,
) -> Result<Snapshot> {
    let bc = dirichlet_values(mesh, params, v_gate, opts)?;
    let mut phi = match guess {
        Some(g) => {
            if g.len() != mesh.len() {
                return Err(Error::Shape(format!("initial guess has {} entries, mesh {}", g.len(), mesh.len())));
            }
            g.to_vec()
        }
        None => initial_guess(mesh, &bc, v_gate),
    };
    for (p, b) in phi.iter_mut().zip(&bc) {
        if let Some(v) = b {
            *p = *v;
        }
    }

    let tol = opts.tolerance_for(coeffs);
    let clamp = opts.clamp_vt * params.vt;
    let mut norm = f64::INFINITY;
    for iter in 0..=opts.max_iterations {
        let (residual, jac) = assemble(mesh, coeffs, params, &bc, &phi, opts.carriers);
        norm = inf_norm(&residual);
        if !norm.is_finite() {
            return Err(Error::Numeric(format!("non-finite residual at Newton iteration {iter}")));
        }
        if norm <= tol {
            let mut snap = Snapshot::from_potential(mesh, params, v_gate, phi);
            if !opts.carriers {
                snap.n.iter_mut().for_each(|v| *v = 0.0);
            }
            snap.converged = true;
            snap.residual_norm = norm;
            snap.iterations = iter;
            return Ok(snap);
        }
        if iter == opts.max_iterations {
            break;
        }
        let mut delta = residual;
        jac.cholesky()?.solve_in_place(&mut delta);
        for (p, d) in phi.iter_mut().zip(&delta) {
            *p += d.clamp(-clamp, clamp);
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iterations, residual: norm })
}

/// Ramps the gate from `v_start` to `v_end` in steps of `step`, using each
/// converged solution as the next initial guess.
pub fn ramp_sweep(
    mesh: &TensorMesh,
    coeffs: &FvCoefficients,
    params: &SemiconductorParams,
    v_start: f64,
    v_end: f64,
    step: f64,
    opts: &NewtonOptions,
) -> Result<SweepDataset> {
    let biases = ramp_biases(v_start, v_end, step)?;
    let mut snapshots: Vec<Snapshot> = Vec::with_capacity(biases.len());
    for (index, &v) in biases.iter().enumerate() {
        let guess = snapshots.last().map(|s| s.phi.as_slice());
        let snap = solve_from(mesh, coeffs, params, v, opts, guess)
            .map_err(|e| Error::Sweep { index, v_gate: v, source: Box::new(e) })?;
        snapshots.push(snap);
    }
    Ok(SweepDataset { snapshots, mesh_fingerprint: mesh.fingerprint(), params: *params })
}

/// Bias points of a ramp. Endpoints are hit exactly when `step` divides the
/// range.
pub fn ramp_biases(v_start: f64, v_end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(v_end >= v_start) || !v_start.is_finite() || !v_end.is_finite() {
        return Err(Error::Config(format!(
            "ramp needs step > 0 and v_end >= v_start (start {v_start}, end {v_end}, step {step})"
        )));
    }
    let span = (v_end - v_start) / step;
    let intervals = (span + 1e-9).floor() as usize;
    let exact = (span - span.round()).abs() < 1e-9;
    Ok((0..=intervals)
        .map(|k| {
            if exact && intervals > 0 {
                (v_start * (intervals - k) as f64 + v_end * k as f64) / intervals as f64
            } else {
                v_start + step * k as f64
            }
        })
        .collect())
}

/// Recomputes the finite-volume residual of `snapshot` directly from the mesh
/// geometry and returns its ∞-norm over non-Dirichlet nodes.
///
/// This walks the four stencil neighbours of each node and rebuilds every
/// flux and control area from coordinates; it shares no assembly code with
/// the Newton solver, so it serves as an independent check of stored fields.
pub fn residual_check(mesh: &TensorMesh, params: &SemiconductorParams, snapshot: &Snapshot) -> f64 {
    residual_check_with(mesh, params, snapshot, true)
}

pub fn residual_check_with(
    mesh: &TensorMesh,
    params: &SemiconductorParams,
    snapshot: &Snapshot,
    carriers: bool,
) -> f64 {
    let (nx, ny) = (mesh.nx(), mesh.ny());
    let x: Vec<f64> = mesh.x_nodes.iter().map(|v| v * 1e-4).collect();
    let y: Vec<f64> = mesh.y_nodes.iter().map(|v| v * 1e-4).collect();
    let r = mesh.radius_um * 1e-4;
    // Material of the horizontal strip between rows j and j+1.
    let strip_is_si = |j: usize| 0.5 * (y[j] + y[j + 1]) < r;
    let strip_eps = |j: usize| EPS0 * if strip_is_si(j) { mesh.eps_si } else { mesh.eps_ox };
    let phi = &snapshot.phi;
    let mut worst: f64 = 0.0;
    for i in 0..nx {
        for j in 0..ny {
            let k = mesh.index(i, j);
            if mesh.contact[k] != Contact::None {
                continue;
            }
            let left = if i > 0 { x[i] - x[i - 1] } else { 0.0 };
            let right = if i + 1 < nx { x[i + 1] - x[i] } else { 0.0 };
            let below = if j > 0 { y[j] - y[j - 1] } else { 0.0 };
            let above = if j + 1 < ny { y[j + 1] - y[j] } else { 0.0 };
            let eps_below = if j > 0 { strip_eps(j - 1) } else { 0.0 };
            let eps_above = if j + 1 < ny { strip_eps(j) } else { 0.0 };

            let mut flux = 0.0;
            // x-neighbours: face spans half a strip on each side of row j.
            let face_x = eps_below * 0.5 * below + eps_above * 0.5 * above;
            if i > 0 {
                flux += face_x * (phi[k - ny] - phi[k]) / left;
            }
            if i + 1 < nx {
                flux += face_x * (phi[k + ny] - phi[k]) / right;
            }
            let half_width = 0.5 * (left + right);
            if j > 0 {
                flux += eps_below * half_width * (phi[k - 1] - phi[k]) / below;
            }
            if j + 1 < ny {
                flux += eps_above * half_width * (phi[k + 1] - phi[k]) / above;
            }

            let mut charge = 0.0;
            if mesh.region[k] == Region::Silicon {
                let mut si_height = 0.0;
                if j > 0 && strip_is_si(j - 1) {
                    si_height += 0.5 * below;
                }
                if j + 1 < ny && strip_is_si(j) {
                    si_height += 0.5 * above;
                }
                let n = if carriers { electron_density(phi[k], params, Region::Silicon) } else { 0.0 };
                charge = Q * (mesh.net_doping[k] - n) * half_width * si_height;
            }
            worst = worst.max((flux + charge).abs());
        }
    }
    worst
}

/// Acceptance bound for [`residual_check`]: ten times the Newton tolerance,
/// leaving room for the different summation order of the independent walk.
pub fn residual_check_tolerance(coeffs: &FvCoefficients) -> f64 {
    10.0 * NewtonOptions::default().tolerance_for(coeffs)
}

/// Independent residual of every snapshot in `dataset`.
pub fn check_sweep(mesh: &TensorMesh, dataset: &SweepDataset) -> Vec<f64> {
    dataset.snapshots.iter().map(|s| residual_check(mesh, &dataset.params, s)).collect()
}

/// `(V_G, φ, n)` at the node nearest to `(x, y)` µm for every snapshot.
pub fn extract_probe(mesh: &TensorMesh, dataset: &SweepDataset, x: f64, y: f64) -> Vec<(f64, f64, f64)> {
    let node = nearest_node(mesh, x, y);
    dataset
        .snapshots
        .iter()
        .map(|s| (s.v_gate, s.phi[node], s.n[node]))
        .collect()
}
