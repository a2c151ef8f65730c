//! Time integrators for the three formulations.
//!
//! * original: v-diffusion by a theta-scheme, then exact transport along
//!   characteristics by interpolation;
//! * Lagrangian: theta-scheme with the form frozen at the step midpoint;
//! * self-similar: theta-scheme for `K_1`, then the exact reaction factor
//!   `e^{sigma2 ds}`.

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use crate::analytic::domain_condition;
use crate::assembly::{assemble_heat_v, mass_norm, OperatorBlocks, SplitParams};
use crate::error::{invalid, Error, Result};
use crate::mesh::{Field, Formulation, RectDomain, TriMesh};
use crate::sparse::{solve_from, CsrMatrix, SolverOptions};

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub form: Formulation,
    pub domain: RectDomain,
    pub n: usize,
    /// `dt` for the original and Lagrangian forms, `ds` for the self-similar one.
    pub dt: f64,
    /// Final physical time `T`; the self-similar run stops at `s = log(1 + T)`.
    pub horizon: f64,
    pub theta: f64,
    pub sigma1: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Keep every `k`-th step as a snapshot (the initial and final states are
    /// always kept); 0 keeps only those two.
    pub snapshot_stride: usize,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            form: Formulation::SelfSimilar,
            domain: RectDomain {
                v_min: -10.0,
                v_max: 10.0,
                z_min: -10.0,
                z_max: 10.0,
            },
            n: 128,
            dt: 0.01,
            horizon: 10.0,
            theta: 0.5,
            sigma1: 1.0,
            tol: 1e-10,
            max_iter: 1000,
            snapshot_stride: 0,
            output: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        RectDomain::new(self.domain.v_min, self.domain.v_max, self.domain.z_min, self.domain.z_max)?;
        if self.n == 0 {
            return Err(invalid("n", "mesh needs at least one subdivision per side"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("t-end", format!("must be positive, got {}", self.horizon)));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(invalid("theta", format!("must lie in [0, 1], got {}", self.theta)));
        }
        if !(self.sigma1 <= 1.0) {
            return Err(invalid("sigma1", format!("must be <= 1, got {}", self.sigma1)));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol", format!("must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    /// Sets the horizon so that a self-similar run ends at `s_end`.
    pub fn with_selfsimilar_end(mut self, s_end: f64) -> Self {
        self.horizon = s_end.exp_m1();
        self
    }

    /// Final time in the run's own clock (`t` or `s`).
    pub fn end_time(&self) -> f64 {
        match self.form {
            Formulation::SelfSimilar => self.horizon.ln_1p(),
            _ => self.horizon,
        }
    }

    /// Number of steps: `end_time / dt` rounded to the nearest integer.
    pub fn num_steps(&self) -> usize {
        ((self.end_time() / self.dt).round() as usize).max(1)
    }

    fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

/// Norms of the discrete solution at one recorded time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormRecord {
    pub time: f64,
    pub l2: f64,
    pub linf: f64,
}

/// Snapshots and per-step norms of a run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub form: Formulation,
    pub mesh: Arc<TriMesh>,
    pub snapshots: Vec<Field>,
    pub norms: Vec<NormRecord>,
    pub warnings: Vec<String>,
    pub steps: usize,
    pub dt: f64,
    pub solver_iterations: usize,
}

impl Trajectory {
    pub fn initial(&self) -> &Field {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &Field {
        self.snapshots.last().expect("trajectory always holds the initial state")
    }
}

/// Nodal interpolation of `f0` with boundary values forced to zero.
pub fn project_initial(mesh: &Arc<TriMesh>, form: Formulation, f0: &dyn Fn(f64, f64) -> f64) -> Field {
    let mut field = Field::from_fn(mesh.clone(), 0.0, form, f0);
    for (value, &on_boundary) in field.values.iter_mut().zip(mesh.boundary()) {
        if on_boundary {
            *value = 0.0;
        }
    }
    field
}

/// Runs the solver selected by `config.form`.
pub fn run(config: &RunConfig, f0: &dyn Fn(f64, f64) -> f64) -> Result<Trajectory> {
    match config.form {
        Formulation::Original => run_original(config, f0),
        Formulation::Lagrangian => run_lagrangian(config, f0),
        Formulation::SelfSimilar => run_selfsimilar(config, f0),
    }
}

/// Bookkeeping shared by the three integrators.
struct Recorder {
    mesh: Arc<TriMesh>,
    form: Formulation,
    mass: CsrMatrix,
    stride: usize,
    traj: Trajectory,
}

impl Recorder {
    fn new(config: &RunConfig, mesh: Arc<TriMesh>, mass: CsrMatrix, initial: Field) -> Result<Self> {
        let mut rec = Self {
            mesh: mesh.clone(),
            form: config.form,
            mass,
            stride: config.snapshot_stride,
            traj: Trajectory {
                form: config.form,
                mesh,
                snapshots: Vec::new(),
                norms: Vec::new(),
                warnings: Vec::new(),
                steps: config.num_steps(),
                dt: config.dt,
                solver_iterations: 0,
            },
        };
        let interior = initial.interior_values();
        rec.record_norms(0.0, &interior)?;
        rec.traj.snapshots.push(initial);
        Ok(rec)
    }

    fn record_norms(&mut self, time: f64, interior: &[f64]) -> Result<()> {
        let l2 = mass_norm(&self.mass, interior)?;
        let linf = interior.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        self.traj.norms.push(NormRecord { time, l2, linf });
        Ok(())
    }

    fn record(&mut self, step: usize, time: f64, interior: &[f64]) -> Result<()> {
        self.record_norms(time, interior)?;
        let last = step == self.traj.steps;
        if last || (self.stride > 0 && step.is_multiple_of(self.stride)) {
            let field = Field::new(self.mesh.clone(), self.mesh.expand(interior), time, self.form)?;
            self.traj.snapshots.push(field);
        }
        Ok(())
    }
}

/// One theta-step `[M + dt theta A_new] x' = [M - dt (1 - theta) A_old] x`,
/// warm-started from `x`.
#[allow(clippy::too_many_arguments)]
fn theta_step(
    lhs: &CsrMatrix,
    mass: &CsrMatrix,
    a_old: &CsrMatrix,
    explicit_weight: f64,
    x: &[f64],
    opts: &SolverOptions,
    step: usize,
    time: f64,
    iterations: &mut usize,
) -> Result<Vec<f64>> {
    let mut rhs = mass.matvec(x)?;
    if explicit_weight != 0.0 {
        let ax = a_old.matvec(x)?;
        for (r, a) in rhs.iter_mut().zip(ax) {
            *r -= explicit_weight * a;
        }
    }
    let (next, stats) = solve_from(lhs, &rhs, x.to_vec(), opts)?;
    *iterations += stats.iterations;
    if !stats.converged {
        return Err(Error::SolverFailed {
            step,
            time,
            iterations: stats.iterations,
            residual: stats.residual,
        });
    }
    Ok(next)
}

fn setup(config: &RunConfig, expected: Formulation) -> Result<Arc<TriMesh>> {
    config.validate()?;
    if config.form != expected {
        return Err(invalid(
            "form",
            format!("{} solver called with a {} configuration", expected, config.form),
        ));
    }
    Ok(Arc::new(TriMesh::structured(config.domain, config.n)?))
}

/// Heat/transport splitting for `d_t f = d_vv f + v d_x f`.
pub fn run_original(config: &RunConfig, f0: &dyn Fn(f64, f64) -> f64) -> Result<Trajectory> {
    let mesh = setup(config, Formulation::Original)?;
    let blocks = OperatorBlocks::new(&mesh)?;
    let heat = assemble_heat_v(&mesh)?;
    let (dt, theta) = (config.dt, config.theta);
    let lhs = CsrMatrix::linear_combination(&[(1.0, &blocks.mass), (dt * theta, &heat)])?;
    let opts = config.solver_options();

    let initial = project_initial(&mesh, Formulation::Original, f0);
    let mut x = initial.interior_values();
    let mut rec = Recorder::new(config, mesh.clone(), blocks.mass.clone(), initial)?;
    let mut iterations = 0;
    let steps = config.num_steps();
    for step in 1..=steps {
        let time = step as f64 * dt;
        let half = theta_step(&lhs, &blocks.mass, &heat, dt * (1.0 - theta), &x, &opts, step, time, &mut iterations)?;
        // Transport: f(t + dt, v, x) = phi(v, x + v dt), zero outside.
        let full = mesh.expand(&half);
        x = mesh
            .free_nodes()
            .iter()
            .map(|&k| {
                let [v, xx] = mesh.nodes()[k];
                mesh.interpolate(&full, [v, xx + v * dt])
            })
            .collect();
        rec.record(step, time, &x)?;
    }
    rec.traj.solver_iterations = iterations;
    Ok(rec.traj)
}

/// Theta-scheme for `d_t g = d_vv g + 2t d_vz g + t^2 d_zz g`.
pub fn run_lagrangian(config: &RunConfig, f0: &dyn Fn(f64, f64) -> f64) -> Result<Trajectory> {
    lagrangian_with(config, f0, None)
}

/// Lagrangian integrator; `frozen` pins the form's time argument.
fn lagrangian_with(config: &RunConfig, f0: &dyn Fn(f64, f64) -> f64, frozen: Option<f64>) -> Result<Trajectory> {
    let mesh = setup(config, Formulation::Lagrangian)?;
    let blocks = OperatorBlocks::new(&mesh)?;
    let (dt, theta) = (config.dt, config.theta);
    let opts = config.solver_options();

    let initial = project_initial(&mesh, Formulation::Lagrangian, f0);
    let mut x = initial.interior_values();
    let mut rec = Recorder::new(config, mesh.clone(), blocks.mass.clone(), initial)?;
    let mut iterations = 0;
    let steps = config.num_steps();
    for step in 1..=steps {
        let time = step as f64 * dt;
        let t_mid = frozen.unwrap_or(time - 0.5 * dt);
        let a = blocks.lagrangian(t_mid)?;
        let lhs = CsrMatrix::linear_combination(&[(1.0, &blocks.mass), (dt * theta, &a)])?;
        x = theta_step(&lhs, &blocks.mass, &a, dt * (1.0 - theta), &x, &opts, step, time, &mut iterations)?;
        rec.record(step, time, &x)?;
    }
    rec.traj.solver_iterations = iterations;
    Ok(rec.traj)
}

/// Splitting scheme for the self-similar equation: theta-scheme for `K_1`
/// followed by the exact factor `e^{sigma2 ds}`.
///
/// A warning is logged (and stored on the trajectory) when the domain is too
/// small to prevent spurious decay.
pub fn run_selfsimilar(config: &RunConfig, f0: &dyn Fn(f64, f64) -> f64) -> Result<Trajectory> {
    let mesh = setup(config, Formulation::SelfSimilar)?;
    let params = SplitParams::new(config.sigma1, config.theta)?;
    let blocks = OperatorBlocks::new(&mesh)?;
    let ds = config.dt;
    let opts = config.solver_options();
    let growth = (params.sigma2 * ds).exp();

    let initial = project_initial(&mesh, Formulation::SelfSimilar, f0);
    let mut x = initial.interior_values();
    let mut rec = Recorder::new(config, mesh.clone(), blocks.mass.clone(), initial)?;
    if !domain_condition(&config.domain) {
        let msg = format!(
            "domain {}x{} is too small for the self-similar run; the solution will decay spuriously",
            config.domain.width_v(),
            config.domain.width_z()
        );
        log::warn!("{msg}");
        rec.traj.warnings.push(msg);
    }

    let mut iterations = 0;
    let steps = config.num_steps();
    let mut a_old = blocks.selfsimilar(0.0, params.sigma1)?;
    for step in 1..=steps {
        let s = step as f64 * ds;
        let a_new = blocks.selfsimilar(s, params.sigma1)?;
        let lhs = CsrMatrix::linear_combination(&[(1.0, &blocks.mass), (ds * params.theta, &a_new)])?;
        let half = theta_step(
            &lhs,
            &blocks.mass,
            &a_old,
            ds * (1.0 - params.theta),
            &x,
            &opts,
            step,
            s,
            &mut iterations,
        )?;
        x = half.into_iter().map(|v| v * growth).collect();
        rec.record(step, s, &x)?;
        a_old = a_new;
    }
    rec.traj.solver_iterations = iterations;
    Ok(rec.traj)
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = a.iter().map(|x| x.abs()).fold(0.0, f64::max) * a.nrows() as f64;
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = a / 2f64.powi(squarings as i32);
    let n = a.nrows();
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=30 {
        term = &term * &scaled / k as f64;
        result += &term;
        if term.norm() <= f64::EPSILON * result.norm() {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Result of [`exact_splitting_unit_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplittingCheck {
    /// `||expm(dt (K + sigma2 I)) - e^{sigma2 dt} expm(dt K)||_F`.
    pub difference: f64,
    /// `||expm(dt K)||_F`.
    pub reference: f64,
}

impl SplittingCheck {
    pub fn relative(&self) -> f64 {
        self.difference / self.reference
    }
}

/// Checks on a random dense `K` that splitting off a multiple of the
/// identity is exact: `expm(dt (K + sigma2 I)) = e^{sigma2 dt} expm(dt K)`.
pub fn exact_splitting_unit_check(dim: usize, dt: f64, sigma2: f64, rng: &mut impl Rng) -> Result<SplittingCheck> {
    if dim == 0 || dim > 20 {
        return Err(invalid("dim", format!("must lie in 1..=20, got {dim}")));
    }
    let k = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
    Ok(splitting_difference(&k, dt, sigma2))
}

fn splitting_difference(k: &DMatrix<f64>, dt: f64, sigma2: f64) -> SplittingCheck {
    let dim = k.nrows();
    let shifted = (k + DMatrix::<f64>::identity(dim, dim) * sigma2) * dt;
    let left = expm(&shifted);
    let plain = expm(&(k * dt));
    let right = &plain * (sigma2 * dt).exp();
    SplittingCheck {
        difference: (left - right).norm(),
        reference: plain.norm(),
    }
}
