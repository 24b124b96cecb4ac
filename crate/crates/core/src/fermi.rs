//! Fermi–Dirac statistics of order ½.
//!
//! [`fermi_half_approx`] is the closed-form Bednarczyk approximation used
//! everywhere a density is computed from a potential (oracle and PINN alike);
//! [`fermi_half_quadrature`] is the slow reference it is validated against.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::mesh::Region;

/// `3√π/4`
const THREE_SQRT_PI_4: f64 = 0.75 * 1.772_453_850_905_516;

/// Closed-form approximation of the normalized Fermi–Dirac integral
/// `F_{1/2}(η) = (1/Γ(3/2)) ∫₀^∞ √x / (1 + e^{x−η}) dx`.
///
/// `F ≈ [e^{−η} + (3√π/4) ν^{−3/8}]⁻¹`,
/// `ν = η⁴ + 50 + 33.6 η (1 − 0.68 e^{−0.17 (η+1)²})`.
pub fn fermi_half_approx(eta: f64) -> f64 {
    let nu = nu(eta);
    1.0 / ((-eta).exp() + THREE_SQRT_PI_4 * nu.powf(-0.375))
}

#[inline]
fn nu(eta: f64) -> f64 {
    let g = (-0.17 * (eta + 1.0).powi(2)).exp();
    eta.powi(4) + 50.0 + 33.6 * eta * (1.0 - 0.68 * g)
}

#[inline]
fn nu_deriv(eta: f64) -> f64 {
    let g = (-0.17 * (eta + 1.0).powi(2)).exp();
    // d/dη [η (1 − 0.68 g)] = 1 − 0.68 g + 0.68·0.34 η (η+1) g
    4.0 * eta.powi(3) + 33.6 * (1.0 - 0.68 * g + 0.68 * 0.34 * eta * (eta + 1.0) * g)
}

/// Exact derivative of [`fermi_half_approx`] (not of the true integral).
pub fn fermi_half_deriv(eta: f64) -> f64 {
    let nu = nu(eta);
    let e = (-eta).exp();
    let d = e + THREE_SQRT_PI_4 * nu.powf(-0.375);
    let dd = -e - 0.375 * THREE_SQRT_PI_4 * nu.powf(-1.375) * nu_deriv(eta);
    -dd / (d * d)
}

/// Reference value of `F_{1/2}(η)` by adaptive Gauss–Kronrod quadrature, to
/// roughly 1e-10 relative.
///
/// The substitution `x = t²` removes the square-root endpoint singularity,
/// and the Fermi edge at `t = √η` is used as a breakpoint.
pub fn fermi_half_quadrature(eta: f64) -> Result<f64> {
    if !eta.is_finite() {
        return Err(Error::Numeric(format!("non-finite eta {eta}")));
    }
    // Integrand after substitution, scaled by e^{-η} for η < 0 so values stay O(1).
    let shift = eta.min(0.0);
    let f = |t: f64| {
        let x = t * t;
        2.0 * x * fermi_weight(x, eta, shift)
    };
    let edge = eta.max(0.0).sqrt();
    let upper = (eta.max(0.0) + 60.0).sqrt();
    let mut total = 0.0;
    for (a, b) in [(0.0, edge), (edge, upper)] {
        if b > a {
            total += adaptive_gk(&f, a, b, 1e-12, 0)?;
        }
    }
    let gamma_3_2 = 0.5 * PI.sqrt();
    Ok(total / gamma_3_2 * shift.exp())
}

/// `e^{-shift} / (1 + e^{x-η})`, evaluated without overflow.
#[inline]
fn fermi_weight(x: f64, eta: f64, shift: f64) -> f64 {
    let z = x - eta;
    if z > 0.0 {
        let ez = (-z).exp();
        ez / (1.0 + ez) * (-shift).exp()
    } else {
        (-shift).exp() / (1.0 + z.exp())
    }
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_2,
    0.063_092_092_629_979_0,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = K15_WEIGHTS[7] * fc;
    let mut gauss = G7_WEIGHTS[3] * fc;
    for k in 0..7 {
        let dx = h * GK_NODES[k];
        let s = f(c - dx) + f(c + dx);
        kron += K15_WEIGHTS[k] * s;
        if k % 2 == 1 {
            gauss += G7_WEIGHTS[k / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

fn adaptive_gk<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64, depth: usize) -> Result<f64> {
    let (value, err) = gk15(f, a, b);
    if err <= rel_tol * value.abs().max(f64::MIN_POSITIVE) || err < 1e-300 {
        return Ok(value);
    }
    if depth >= 48 {
        return Err(Error::Numeric(format!(
            "quadrature did not reach tolerance on [{a}, {b}] (error estimate {err:e})"
        )));
    }
    let m = 0.5 * (a + b);
    Ok(adaptive_gk(f, a, m, rel_tol, depth + 1)? + adaptive_gk(f, m, b, rel_tol, depth + 1)?)
}

/// Solves `fermi_half_approx(η) = u` for `η` by safeguarded Newton iteration
/// inside a bisection bracket.
pub fn inverse_fermi_half(u: f64) -> Result<f64> {
    if !(u > 0.0) || !u.is_finite() {
        return Err(Error::Domain(format!("inverse_fermi_half requires u > 0, got {u}")));
    }
    // F(η) < e^η everywhere, and F ~ (4/3√π) η^{3/2} for large η.
    let mut lo = u.ln();
    while fermi_half_approx(lo) > u {
        lo -= 1.0;
    }
    let mut hi = u.ln().max((u / (4.0 / (3.0 * PI.sqrt()))).powf(2.0 / 3.0)) + 1.0;
    while fermi_half_approx(hi) < u {
        hi += 1.0;
    }
    let mut eta = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = fermi_half_approx(eta) - u;
        if (r / u).abs() <= 1e-14 {
            return Ok(eta);
        }
        if r > 0.0 {
            hi = eta;
        } else {
            lo = eta;
        }
        let newton = eta - r / fermi_half_deriv(eta);
        eta = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 * (1.0 + eta.abs()) {
            break;
        }
    }
    let rel = ((fermi_half_approx(eta) - u) / u).abs();
    if rel <= 1e-12 {
        Ok(eta)
    } else {
        Err(Error::Numeric(format!("inverse_fermi_half({u}) stalled at relative error {rel:e}")))
    }
}

/// Silicon electron statistics at equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemiconductorParams {
    /// Effective conduction-band density of states, cm⁻³.
    pub nc: f64,
    /// Thermal voltage kT/q, V.
    pub vt: f64,
    /// Potential at which the reduced Fermi level is zero, V.
    pub phi_ref: f64,
}

/// Density that `φ = 0` maps to in silicon.
pub const REFERENCE_DENSITY: f64 = 1e10;

impl Default for SemiconductorParams {
    fn default() -> Self {
        Self::with_reference(2.86e19, 0.025852, REFERENCE_DENSITY)
            .expect("default constants are valid")
    }
}

impl SemiconductorParams {
    /// Chooses `phi_ref` so that `φ = 0` gives `n = n_at_zero`.
    pub fn with_reference(nc: f64, vt: f64, n_at_zero: f64) -> Result<Self> {
        if !(nc > 0.0 && vt > 0.0) {
            return Err(Error::Config(format!("need nc > 0 and vt > 0 (nc = {nc}, vt = {vt})")));
        }
        let eta0 = inverse_fermi_half(n_at_zero / nc)?;
        Ok(Self { nc, vt, phi_ref: -vt * eta0 })
    }

    #[inline]
    pub fn eta(&self, phi: f64) -> f64 {
        (phi - self.phi_ref) / self.vt
    }

    /// Potential at which silicon carries density `n`.
    pub fn potential_for_density(&self, n: f64) -> Result<f64> {
        Ok(self.phi_ref + self.vt * inverse_fermi_half(n / self.nc)?)
    }
}

/// Electron density in cm⁻³; zero in the oxide.
#[inline]
pub fn electron_density(phi: f64, params: &SemiconductorParams, region: Region) -> f64 {
    match region {
        Region::Silicon => params.nc * fermi_half_approx(params.eta(phi)),
        Region::Oxide => 0.0,
    }
}

/// `∂n/∂φ` for [`electron_density`].
#[inline]
pub fn electron_density_deriv(phi: f64, params: &SemiconductorParams, region: Region) -> f64 {
    match region {
        Region::Silicon => params.nc * fermi_half_deriv(params.eta(phi)) / params.vt,
        Region::Oxide => 0.0,
    }
}
