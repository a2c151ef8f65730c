//! Error norms, fits, convergence studies and the property checks run on
//! computed trajectories.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::analytic::{domain_condition, exact_selfsimilar, linf_envelope, poincare_factor};
use crate::assembly::assemble_mass;
use crate::error::{invalid, Error, Result};
use crate::mesh::{Field, Formulation, RectDomain, TriMesh};
use crate::solvers::{run_selfsimilar, NormRecord, RunConfig, Trajectory};

/// Midpoint-rule basis weights, matching the quadrature point order.
const MIDPOINT_BASIS: [[f64; 3]; 3] = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];

/// `sqrt(int (u_h - ref)^2)` by the edge-midpoint rule on every element.
pub fn l2_error(field: &Field, reference: &(dyn Fn(f64, f64) -> f64 + Sync)) -> Result<f64> {
    let mesh = field.mesh();
    let total: Result<f64> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let verts = mesh.elements()[e];
            let quad = mesh.element_quadrature(e)?;
            let mut sum = 0.0;
            for ((p, w), phi) in quad.iter().zip(MIDPOINT_BASIS) {
                let uh: f64 = (0..3).map(|k| phi[k] * field.values[verts[k]]).sum();
                let d = uh - reference(p[0], p[1]);
                sum += w * d * d;
            }
            Ok(sum)
        })
        .sum();
    Ok(total?.sqrt())
}

/// Largest nodal deviation `max |u_h - ref|`.
pub fn linf_error(field: &Field, reference: &(dyn Fn(f64, f64) -> f64 + Sync)) -> f64 {
    field
        .mesh()
        .nodes()
        .iter()
        .zip(&field.values)
        .map(|(p, u)| (u - reference(p[0], p[1])).abs())
        .fold(0.0, f64::max)
}

/// Nodal field `100 |u_h - ref| / ||I_h ref||`, where `I_h ref` is the nodal
/// interpolant of the reference.
///
/// The global denominator keeps the field bounded in the tails; its L2 norm
/// is the aggregate percent difference.
pub fn percent_diff(field: &Field, reference: &(dyn Fn(f64, f64) -> f64 + Sync)) -> Result<Field> {
    let mesh = field.mesh().clone();
    let interp = Field::from_fn(mesh.clone(), field.time, field.form, reference);
    let norm = l2_error(&interp, &|_, _| 0.0)?;
    if !(norm > 0.0) {
        return Err(Error::ZeroReference);
    }
    let values = field
        .values
        .iter()
        .zip(&interp.values)
        .map(|(u, r)| 100.0 * (u - r).abs() / norm)
        .collect();
    Field::new(mesh, values, field.time, field.form)
}

/// `100 ||u_h - I_h ref|| / ||I_h ref||`, the L2 aggregate of [`percent_diff`].
pub fn percent_diff_aggregate(field: &Field, reference: &(dyn Fn(f64, f64) -> f64 + Sync)) -> Result<f64> {
    let pd = percent_diff(field, reference)?;
    l2_error(&pd, &|_, _| 0.0)
}

/// Least-squares fit `y = C x^p` (power law) or `y = C e^{p x}` (exponential).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub coefficient: f64,
    pub exponent: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
}

/// Shape of a decay law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayModel {
    PowerLaw,
    Exponential,
}

fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

fn check_fit_input(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            found: xs.len(),
        });
    }
    if let Some((index, &value)) = ys.iter().enumerate().find(|(_, y)| !(**y > 0.0)) {
        return Err(Error::NonPositive { index, value });
    }
    Ok(())
}

/// Fits `y = C x^p` by least squares on `(log x, log y)`.
pub fn power_law_fit(xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    check_fit_input(xs, ys)?;
    if let Some((index, &value)) = xs.iter().enumerate().find(|(_, x)| !(**x > 0.0)) {
        return Err(Error::NonPositive { index, value });
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (slope, intercept, residual) = line_fit(&lx, &ly);
    Ok(FitResult {
        coefficient: intercept.exp(),
        exponent: slope,
        residual,
    })
}

/// Fits `y = C e^{p x}` by least squares on `(x, log y)`.
pub fn exponential_fit(xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    check_fit_input(xs, ys)?;
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (slope, intercept, residual) = line_fit(xs, &ly);
    Ok(FitResult {
        coefficient: intercept.exp(),
        exponent: slope,
        residual,
    })
}

/// Fits a decay law to the `(time, value)` pairs whose time lies in `window`.
pub fn decay_fit(series: &[(f64, f64)], window: (f64, f64), model: DecayModel) -> Result<FitResult> {
    let (ts, ys): (Vec<f64>, Vec<f64>) = series
        .iter()
        .filter(|(t, _)| *t >= window.0 - 1e-12 && *t <= window.1 + 1e-12)
        .copied()
        .unzip();
    match model {
        DecayModel::PowerLaw => power_law_fit(&ts, &ys),
        DecayModel::Exponential => exponential_fit(&ts, &ys),
    }
}

/// Observed orders `log(E_i / E_{i+1}) / log(h_i / h_{i+1})`.
pub fn pairwise_orders(hs: &[f64], errors: &[f64]) -> Vec<f64> {
    hs.windows(2)
        .zip(errors.windows(2))
        .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}

/// Errors of one refinement level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelError {
    pub h: f64,
    pub n: usize,
    pub dt: f64,
    pub time: f64,
    pub l2_error: f64,
    pub linf_error: f64,
    /// Order against the previous (coarser) level.
    pub order: Option<f64>,
}

/// Result of [`convergence_study`].
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub levels: Vec<LevelError>,
    pub fit: FitResult,
}

impl ErrorReport {
    /// Builds the report from per-level errors (orders and fit are derived).
    pub fn from_levels(mut levels: Vec<LevelError>) -> Result<Self> {
        let hs: Vec<f64> = levels.iter().map(|l| l.h).collect();
        let es: Vec<f64> = levels.iter().map(|l| l.l2_error).collect();
        let fit = power_law_fit(&hs, &es)?;
        for (k, order) in pairwise_orders(&hs, &es).into_iter().enumerate() {
            levels[k + 1].order = Some(order);
        }
        Ok(Self { levels, fit })
    }
}

/// Mesh subdivisions giving element size `h` along the v side.
pub fn subdivisions_for(domain: &RectDomain, h: f64) -> Result<usize> {
    if !(h > 0.0) {
        return Err(invalid("h", format!("must be positive, got {h}")));
    }
    Ok(((domain.width_v() / h).round() as usize).max(1))
}

/// Self-similar runs from the Gaussian initial data at each `h`, each ending
/// at `s_end`, compared with the exact solution.
pub fn convergence_study(base: &RunConfig, hs: &[f64], s_end: f64) -> Result<ErrorReport> {
    if hs.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            found: hs.len(),
        });
    }
    let levels: Result<Vec<LevelError>> = hs
        .par_iter()
        .map(|&h| {
            let cfg = RunConfig {
                form: Formulation::SelfSimilar,
                n: subdivisions_for(&base.domain, h)?,
                ..base.clone()
            }
            .with_selfsimilar_end(s_end);
            let traj = run_selfsimilar(&cfg, &|v, z| (-v * v - z * z).exp())?;
            let last = traj.last();
            let s = last.time;
            let exact = move |v: f64, z: f64| exact_selfsimilar(s, v, z);
            Ok(LevelError {
                h,
                n: cfg.n,
                dt: cfg.dt,
                time: s,
                l2_error: l2_error(last, &exact)?,
                linf_error: linf_error(last, &exact),
                order: None,
            })
        })
        .collect();
    ErrorReport::from_levels(levels?)
}

/// `(time, L2, L_inf)` per recorded step; L2 through the mass matrix.
pub fn norm_timeseries(traj: &Trajectory) -> Vec<NormRecord> {
    traj.norms.clone()
}

/// Recomputes the norm series from the stored snapshots.
pub fn snapshot_norms(snapshots: &[Field]) -> Result<Vec<NormRecord>> {
    let Some(first) = snapshots.first() else {
        return Ok(Vec::new());
    };
    let mass = assemble_mass(first.mesh())?;
    snapshots
        .iter()
        .map(|f| {
            let x = f.interior_values();
            Ok(NormRecord {
                time: f.time,
                l2: crate::assembly::mass_norm(&mass, &x)?,
                linf: f.max_abs(),
            })
        })
        .collect()
}

/// Whether `L_inf(s) <= 1.05 * envelope(s)` at every recorded `s > 0`.
pub fn envelope_check(series: &[NormRecord], l1: f64, linf: f64) -> bool {
    series.iter().filter(|r| r.time > 0.0).all(|r| match linf_envelope(r.time, l1, linf) {
        Ok(bound) => r.linf <= 1.05 * bound,
        Err(_) => false,
    })
}

/// `||g|| / (||d_v g + t d_z g|| |Omega_1| / (sqrt(2) C(t)))` for the P1 field
/// with interior coefficients `interior`; `None` when the directional
/// derivative vanishes.
pub fn poincare_ratio(mesh: &TriMesh, mass: &crate::sparse::CsrMatrix, interior: &[f64], t: f64) -> Result<Option<f64>> {
    let full = mesh.expand(interior);
    let mut energy = 0.0;
    for (e, verts) in mesh.elements().iter().enumerate() {
        let g = mesh.element_gradients(e);
        let mut d = 0.0;
        for (k, &node) in verts.iter().enumerate() {
            d += full[node] * (g[k][0] + t * g[k][1]);
        }
        energy += mesh.element_area(e) * d * d;
    }
    if energy == 0.0 {
        return Ok(None);
    }
    let l2 = crate::assembly::mass_norm(mass, interior)?;
    Ok(Some(l2 / (energy.sqrt() * poincare_factor(mesh.domain(), t))))
}

/// Worst Poincare ratio over `trials` random fields with independent
/// uniform(-1, 1) interior values.
pub fn poincare_check(mesh: &TriMesh, t: f64, trials: usize, rng: &mut impl Rng) -> Result<f64> {
    if trials == 0 {
        return Err(invalid("trials", "need at least one trial"));
    }
    let mass = assemble_mass(mesh)?;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let x: Vec<f64> = (0..mesh.num_free()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if let Some(r) = poincare_ratio(mesh, &mass, &x, t)? {
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

/// One domain of a [`nested_domain_study`].
#[derive(Debug, Clone)]
pub struct NestedEntry {
    pub scale: f64,
    pub satisfies_condition: bool,
    pub field: Field,
}

/// Solutions on `scale * [-1, 1]^2` and the L2 distances over the inner
/// region between consecutive admissible scales.
#[derive(Debug, Clone)]
pub struct NestedStudy {
    pub entries: Vec<NestedEntry>,
    /// `(scale_i, scale_{i+1}, ||g_i - g_{i+1}||_{L2(inner)})` over the
    /// scales that satisfy the domain condition.
    pub discrepancies: Vec<(f64, f64, f64)>,
    pub warnings: Vec<String>,
}

impl NestedStudy {
    pub fn strictly_decreasing(&self) -> bool {
        self.discrepancies.windows(2).all(|w| w[1].2 < w[0].2)
    }
}

/// Runs the self-similar solver on `scale * [-1, 1]^2` for each scale at a
/// fixed element size `h` and compares the final solutions on
/// `[-inner, inner]^2`.
///
/// Use an `h` that divides both `inner` and every scale so all meshes share
/// the inner grid; the midpoint rule on that grid is then exact.
pub fn nested_domain_study(base: &RunConfig, scales: &[f64], inner: f64, h: f64) -> Result<NestedStudy> {
    if scales.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("scales", "must be strictly increasing"));
    }
    let entries: Result<Vec<NestedEntry>> = scales
        .par_iter()
        .map(|&scale| {
            let domain = RectDomain::centered_square(scale)?;
            let cfg = RunConfig {
                form: Formulation::SelfSimilar,
                domain,
                n: subdivisions_for(&domain, h)?,
                ..base.clone()
            };
            let traj = run_selfsimilar(&cfg, &|v, z| (-v * v - z * z).exp())?;
            Ok(NestedEntry {
                scale,
                satisfies_condition: domain_condition(&domain),
                field: traj.last().clone(),
            })
        })
        .collect();
    let entries = entries?;
    let inner_domain = RectDomain::centered_square(inner)?;
    let inner_mesh = Arc::new(TriMesh::structured(inner_domain, subdivisions_for(&inner_domain, h)?)?);

    let mut warnings = Vec::new();
    for e in entries.iter().filter(|e| !e.satisfies_condition) {
        let msg = format!("scale {} violates the domain condition; excluded from the comparison", e.scale);
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let admissible: Vec<&NestedEntry> = entries.iter().filter(|e| e.satisfies_condition).collect();
    let mut discrepancies = Vec::new();
    for w in admissible.windows(2) {
        let (a, b) = (&w[0].field, &w[1].field);
        let on_inner = Field::from_fn(inner_mesh.clone(), a.time, a.form, |v, z| a.interpolate([v, z]));
        let d = l2_error(&on_inner, &|v, z| b.interpolate([v, z]))?;
        discrepancies.push((w[0].scale, w[1].scale, d));
    }
    Ok(NestedStudy {
        entries,
        discrepancies,
        warnings,
    })
}

/// `||g - pi G_1||` over the mesh for a self-similar field.
pub fn steady_state_distance(field: &Field) -> Result<f64> {
    l2_error(field, &crate::analytic::steady_state)
}

/// The Gaussian initial data's `L1` and `L_inf` norms.
pub const GAUSSIAN_L1: f64 = PI;
pub const GAUSSIAN_LINF: f64 = 1.0;

/// Spurious decay rate bound `-2 / |Omega_1|^2` of the truncated original form.
pub fn truncated_decay_rate(domain: &RectDomain) -> f64 {
    -2.0 / domain.width_v().powi(2)
}
