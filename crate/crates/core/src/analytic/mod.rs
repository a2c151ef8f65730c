//! Closed-form kernel, exact solutions, norm identities and the mesh-free
//! convolution oracle used as ground truth for every solver.

pub mod quadrature;

use std::f64::consts::{PI, SQRT_2};

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::mesh::{Formulation, RectDomain};

/// `sqrt(3) / (2 pi)`, the peak of the unit-time kernel.
pub const KERNEL_PEAK: f64 = 0.275_664_447_710_896_04;

/// One axis-aligned Gaussian bump
/// `amplitude * exp(-((v - cv)/wv)^2 - ((x - cx)/wx)^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBump {
    pub amplitude: f64,
    pub center: [f64; 2],
    pub width: [f64; 2],
}

impl GaussianBump {
    pub fn eval(&self, v: f64, x: f64) -> f64 {
        let a = (v - self.center[0]) / self.width[0];
        let b = (x - self.center[1]) / self.width[1];
        self.amplitude * (-a * a - b * b).exp()
    }

    pub fn mass(&self) -> f64 {
        self.amplitude * PI * self.width[0] * self.width[1]
    }
}

/// Initial data the oracle understands: a finite sum of axis-aligned Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    bumps: Vec<GaussianBump>,
}

impl InitialData {
    /// `f0(v, x) = exp(-v^2 - x^2)`: mass `pi`, sup norm 1.
    pub fn gaussian() -> Self {
        Self {
            bumps: vec![GaussianBump {
                amplitude: 1.0,
                center: [0.0, 0.0],
                width: [1.0, 1.0],
            }],
        }
    }

    pub fn from_bumps(bumps: Vec<GaussianBump>) -> Result<Self> {
        if bumps
            .iter()
            .any(|b| !(b.width[0] > 0.0 && b.width[1] > 0.0) || !b.amplitude.is_finite())
        {
            return Err(invalid("bumps", "widths must be positive and amplitudes finite"));
        }
        Ok(Self { bumps })
    }

    pub fn bumps(&self) -> &[GaussianBump] {
        &self.bumps
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            bumps: self
                .bumps
                .iter()
                .map(|b| GaussianBump {
                    amplitude: alpha * b.amplitude,
                    ..*b
                })
                .collect(),
        }
    }

    pub fn eval(&self, v: f64, x: f64) -> f64 {
        self.bumps.iter().map(|b| b.eval(v, x)).sum()
    }

    /// `M_0`, the integral over the plane.
    pub fn mass(&self) -> f64 {
        self.bumps.iter().map(GaussianBump::mass).sum()
    }
}

/// Physical time `t` and self-similar time `s = log(1 + t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormulationTime {
    pub t: f64,
    pub s: f64,
}

impl FormulationTime {
    pub fn from_t(t: f64) -> Self {
        Self { t, s: t.ln_1p() }
    }

    pub fn from_s(s: f64) -> Self {
        Self { t: s.exp_m1(), s }
    }
}

fn check_positive_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(invalid("t", format!("time must be positive, got {t}")))
    }
}

/// Fundamental solution of the Lagrangian equation
/// `d_t g = d_vv g + 2t d_vz g + t^2 d_zz g`.
pub fn kernel(t: f64, v: f64, z: f64) -> Result<f64> {
    check_positive_time(t)?;
    Ok(kernel_unchecked(t, v, z))
}

fn kernel_unchecked(t: f64, v: f64, z: f64) -> f64 {
    let w = 2.0 * t * v - 3.0 * z;
    let q = (3.0 * z * z + w * w) / (4.0 * t * t * t);
    KERNEL_PEAK / (t * t) * (-q).exp()
}

/// Covariance of the kernel at time `t`, `[[2t, t^2], [t^2, 2t^3/3]]`.
pub fn kernel_covariance(t: f64) -> [[f64; 2]; 2] {
    [[2.0 * t, t * t], [t * t, 2.0 * t * t * t / 3.0]]
}

/// Eigen-decomposition of a symmetric 2x2 matrix: standard deviations
/// (square roots of eigenvalues) and unit eigenvectors.
fn principal_axes(c: [[f64; 2]; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    let (a, b, d) = (c[0][0], c[0][1], c[1][1]);
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d).powi(2) + b * b).sqrt();
    let l1 = mean + radius;
    // Product form avoids cancellation for the small eigenvalue.
    let l2 = (a * d - b * b) / l1;
    let e1 = if b.abs() > 1e-300 {
        let (x, y) = (l1 - d, b);
        let n = x.hypot(y);
        [x / n, y / n]
    } else if a >= d {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    let e2 = [-e1[1], e1[0]];
    ([l1.max(0.0).sqrt(), l2.max(0.0).sqrt()], [e1, e2])
}

/// Closed form of `||G_t||_{L^q}`; pass `f64::INFINITY` for the sup norm.
pub fn kernel_lq_norm(t: f64, q: f64) -> Result<f64> {
    check_positive_time(t)?;
    if !(q >= 1.0) {
        return Err(invalid("q", format!("norm exponent must be >= 1, got {q}")));
    }
    let peak = KERNEL_PEAK / (t * t);
    if q.is_infinite() {
        Ok(peak)
    } else {
        Ok(q.powf(-1.0 / q) * peak.powf((q - 1.0) / q))
    }
}

/// `||G_t||_{L^q}` by adaptive tensor Gauss-Legendre quadrature over a box of
/// eight standard deviations along the principal axes (sampled maximum for
/// `q = inf`).
pub fn kernel_lq_norm_quadrature(t: f64, q: f64) -> Result<f64> {
    check_positive_time(t)?;
    if !(q >= 1.0) {
        return Err(invalid("q", format!("norm exponent must be >= 1, got {q}")));
    }
    let (sd, axes) = principal_axes(kernel_covariance(t));
    let to_plane = |p: f64, r: f64| {
        (
            p * axes[0][0] + r * axes[1][0],
            p * axes[0][1] + r * axes[1][1],
        )
    };
    let (bp, br) = (8.0 * sd[0], 8.0 * sd[1]);
    if q.is_infinite() {
        let n = 1001;
        let sup = (0..n)
            .into_par_iter()
            .map(|i| {
                let p = -bp + 2.0 * bp * i as f64 / (n - 1) as f64;
                (0..n)
                    .map(|j| {
                        let r = -br + 2.0 * br * j as f64 / (n - 1) as f64;
                        let (v, z) = to_plane(p, r);
                        kernel_unchecked(t, v, z)
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        return Ok(sup);
    }
    let integrand = |p: f64, r: f64| {
        let (v, z) = to_plane(p, r);
        kernel_unchecked(t, v, z).powf(q)
    };
    let scale = kernel_lq_norm(t, q)?.powf(q);
    let integral = quadrature::integrate_box_adaptive(&integrand, (-bp, bp), (-br, br), 1e-13 * scale, 8)
        .map_err(|(levels, change)| Error::QuadratureNotConverged { levels, change })?;
    Ok(integral.powf(1.0 / q))
}

/// Exact solution of the original equation for `f0 = exp(-v^2 - x^2)`.
pub fn exact_original(t: f64, v: f64, x: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let denom = 3.0 + 12.0 * t + 4.0 * t3 + 4.0 * t4;
    let quad = (3.0 + 3.0 * t2 + 4.0 * t3) * v * v + 6.0 * t * (1.0 + 2.0 * t) * v * x + 3.0 * (1.0 + 4.0 * t) * x * x;
    (-quad / denom).exp() / (denom / 3.0).sqrt()
}

/// Exact solution of the Lagrangian equation for the Gaussian initial data.
pub fn exact_lagrangian(t: f64, v: f64, z: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let denom = 3.0 + 12.0 * t + 4.0 * t3 + 4.0 * t4;
    let quad = (3.0 + 4.0 * t3) * v * v - 12.0 * t2 * v * z + 3.0 * (1.0 + 4.0 * t) * z * z;
    (-quad / denom).exp() / (denom / 3.0).sqrt()
}

/// Exact self-similar solution, written directly as a polynomial in `e^s`.
pub fn exact_selfsimilar(s: f64, v: f64, z: f64) -> f64 {
    let e = s.exp();
    let e2 = e * e;
    let e3 = e2 * e;
    let e4 = e3 * e;
    let em1 = e - 1.0;
    let denom = 4.0 * e4 - 12.0 * e3 + 12.0 * e2 + 8.0 * e - 9.0;
    let quad = e * (4.0 * e3 - 12.0 * e2 + 12.0 * e - 1.0) * v * v - 12.0 * e2 * em1 * em1 * v * z
        + 3.0 * e3 * (4.0 * e - 3.0) * z * z;
    e2 * (-quad / denom).exp() / (denom / 3.0).sqrt()
}

/// Dispatches to the exact solution of the given formulation; `time` is `t`
/// for the first two forms and `s` for the self-similar one.
pub fn exact_solution(form: Formulation, time: f64, a: f64, b: f64) -> f64 {
    match form {
        Formulation::Original => exact_original(time, a, b),
        Formulation::Lagrangian => exact_lagrangian(time, a, b),
        Formulation::SelfSimilar => exact_selfsimilar(time, a, b),
    }
}

/// Long-time limit `M_0 G_1` of the self-similar solution for `M_0 = pi`.
pub fn steady_state(v: f64, z: f64) -> f64 {
    0.5 * 3f64.sqrt() * (-v * v + 3.0 * v * z - 3.0 * z * z).exp()
}

/// Upper bound on `||g~(s)||_inf` from the `L^1` and `L^inf` norms of `f0`.
pub fn linf_envelope(s: f64, l1_norm: f64, linf_norm: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(invalid("s", format!("envelope is defined for s > 0, got {s}")));
    }
    if !(l1_norm >= 0.0 && linf_norm >= 0.0) {
        return Err(invalid("norms", "norms must be non-negative"));
    }
    let decay = -(-s).exp_m1();
    let from_mass = KERNEL_PEAK * l1_norm / (decay * decay);
    let from_peak = (2.0 * s).exp() * linf_norm;
    Ok(from_mass.min(from_peak))
}

/// Evaluates `f(t, v, x) = int G_t(nu, zeta) f0(v - nu, x + v t - zeta)` at
/// each point by adaptive tensor Gauss-Legendre quadrature.
///
/// Per Gaussian bump the integral is taken either over the kernel's
/// principal box or over the bump's own box (whichever is smaller), eight
/// standard deviations wide, refined until two successive levels agree to
/// `1e-9`.
pub fn convolution_oracle(f0: &InitialData, t: f64, points: &[[f64; 2]]) -> Result<Vec<f64>> {
    check_positive_time(t)?;
    let (sd, axes) = principal_axes(kernel_covariance(t));
    let kernel_box = [8.0 * sd[0], 8.0 * sd[1]];
    points
        .par_iter()
        .map(|&[v, x]| {
            let z = x + v * t;
            let mut total = 0.0;
            for bump in f0.bumps() {
                let bump_sd = [bump.width[0] / SQRT_2, bump.width[1] / SQRT_2];
                let bump_box = [8.0 * bump_sd[0], 8.0 * bump_sd[1]];
                let result = if kernel_box[0] * kernel_box[1] <= bump_box[0] * bump_box[1] {
                    let integrand = |p: f64, r: f64| {
                        let nu = p * axes[0][0] + r * axes[1][0];
                        let zeta = p * axes[0][1] + r * axes[1][1];
                        kernel_unchecked(t, nu, zeta) * bump.eval(v - nu, z - zeta)
                    };
                    quadrature::integrate_box_adaptive(
                        &integrand,
                        (-kernel_box[0], kernel_box[0]),
                        (-kernel_box[1], kernel_box[1]),
                        1e-9,
                        6,
                    )
                } else {
                    let integrand = |a: f64, b: f64| bump.eval(a, b) * kernel_unchecked(t, v - a, z - b);
                    quadrature::integrate_box_adaptive(
                        &integrand,
                        (bump.center[0] - bump_box[0], bump.center[0] + bump_box[0]),
                        (bump.center[1] - bump_box[1], bump.center[1] + bump_box[1]),
                        1e-9,
                        6,
                    )
                };
                total += result.map_err(|(levels, change)| Error::QuadratureNotConverged { levels, change })?;
            }
            Ok(total)
        })
        .collect()
}

/// Direction of a change of variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapDirection {
    /// `(t, v, x) -> (t, v, z = x + t v)`.
    OriginalToLagrangian,
    LagrangianToOriginal,
    /// `(t, v, z) -> (s, v e^{-s/2}, z e^{-3s/2})` with amplitude `e^{2s}`.
    LagrangianToSelfSimilar,
    SelfSimilarToLagrangian,
}

/// Result of [`map_variables`]: the new time and point, and the factor that
/// multiplies the solution value (`g~ = amplitude * g`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappedPoint {
    pub time: f64,
    pub point: [f64; 2],
    pub amplitude: f64,
}

pub fn map_variables(direction: MapDirection, time: f64, point: [f64; 2]) -> MappedPoint {
    let [a, b] = point;
    match direction {
        MapDirection::OriginalToLagrangian => MappedPoint {
            time,
            point: [a, b + time * a],
            amplitude: 1.0,
        },
        MapDirection::LagrangianToOriginal => MappedPoint {
            time,
            point: [a, b - time * a],
            amplitude: 1.0,
        },
        MapDirection::LagrangianToSelfSimilar => {
            let s = time.ln_1p();
            MappedPoint {
                time: s,
                point: [a * (-0.5 * s).exp(), b * (-1.5 * s).exp()],
                amplitude: (2.0 * s).exp(),
            }
        }
        MapDirection::SelfSimilarToLagrangian => {
            let s = time;
            MappedPoint {
                time: s.exp_m1(),
                point: [a * (0.5 * s).exp(), b * (1.5 * s).exp()],
                amplitude: (-2.0 * s).exp(),
            }
        }
    }
}

/// `C_Omega(t)` of the directional Poincare inequality
/// `||g|| <= |Omega_1| / (sqrt(2) C_Omega(t)) * ||d_v g + t d_z g||`.
pub fn poincare_constant(domain: &RectDomain, t: f64) -> f64 {
    let ratio = domain.width_z() / domain.width_v() * t;
    if ratio <= 1.0 {
        1.0
    } else {
        ratio
    }
}

/// The constant `|Omega_1| / (sqrt(2) C_Omega(t))` itself.
pub fn poincare_factor(domain: &RectDomain, t: f64) -> f64 {
    domain.width_v() / (SQRT_2 * poincare_constant(domain, t))
}

/// Whether a truncated self-similar run can avoid spurious decay to zero:
/// `|Omega_1| > sqrt(2)` when `|Omega_2| <= |Omega_1|`, otherwise
/// `|Omega_2| > |Omega_1|^2 / sqrt(2)`.
pub fn domain_condition(domain: &RectDomain) -> bool {
    let (l1, l2) = (domain.width_v(), domain.width_z());
    if l2 <= l1 {
        l1 > SQRT_2
    } else {
        l2 > l1 * l1 / SQRT_2
    }
}

/// Maximum of `|f|` over an `n x n` uniform sample of the rectangle.
pub fn sampled_sup(domain: &RectDomain, n: usize, f: impl Fn(f64, f64) -> f64 + Sync) -> f64 {
    let n = n.max(2);
    let dv = domain.width_v() / (n - 1) as f64;
    let dz = domain.width_z() / (n - 1) as f64;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let v = domain.v_min + i as f64 * dv;
            (0..n)
                .map(|j| f(v, domain.z_min + j as f64 * dz).abs())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}
