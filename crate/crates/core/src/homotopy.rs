//! D-MORPH: level-set exploration, Hamiltonian morphing and observable-track
//! following as an initial value problem in the exploration parameter s.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eigenvalues, trace_prod, CMat, RMat, RVec};
use crate::objectives::{grad_phi1_field, hessian_phi1_trace, phi1, ObservableSpec};
use crate::quantum::{propagate, ControlField, ControlSystem, Trajectory};
use crate::rng::substream;

/// Step used for central differences along system paths and tracks.
pub const FD_STEP: f64 = 1e-5;

type SystemFn = Arc<dyn Fn(f64) -> ControlSystem + Send + Sync>;

/// s -> (H_d(s), mu(s)) over s in [0, 1].
#[derive(Clone)]
pub enum SystemPath {
    Constant(ControlSystem),
    /// Straight line between two systems with the same horizon.
    Linear(ControlSystem, ControlSystem),
    /// Quadratic Bezier curve start -> (control) -> end.
    Quadratic(ControlSystem, ControlSystem, ControlSystem),
    Custom(SystemFn),
}

fn blend(parts: &[(f64, &ControlSystem)]) -> ControlSystem {
    let first = parts[0].1;
    let n = first.dim();
    let mut h = CMat::zeros(n, n);
    let mut mus = vec![CMat::zeros(n, n); first.n_controls()];
    for (w, sys) in parts {
        h += sys.h0() * c(*w, 0.0);
        for (acc, mu) in mus.iter_mut().zip(sys.dipoles()) {
            *acc += mu * c(*w, 0.0);
        }
    }
    ControlSystem::new(h, mus, first.horizon()).expect("blend of valid systems")
}

fn operators(sys: &ControlSystem) -> (CMat, Vec<CMat>) {
    (sys.h0().clone(), sys.dipoles().to_vec())
}

impl SystemPath {
    pub fn linear(start: ControlSystem, end: ControlSystem) -> Result<Self> {
        check_compatible(&start, &end)?;
        Ok(SystemPath::Linear(start, end))
    }

    pub fn quadratic(start: ControlSystem, control: ControlSystem, end: ControlSystem) -> Result<Self> {
        check_compatible(&start, &control)?;
        check_compatible(&start, &end)?;
        Ok(SystemPath::Quadratic(start, control, end))
    }

    pub fn custom(f: impl Fn(f64) -> ControlSystem + Send + Sync + 'static) -> Self {
        SystemPath::Custom(Arc::new(f))
    }

    pub fn at(&self, s: f64) -> ControlSystem {
        match self {
            SystemPath::Constant(sys) => sys.clone(),
            SystemPath::Linear(a, b) => blend(&[(1.0 - s, a), (s, b)]),
            SystemPath::Quadratic(a, m, b) => {
                blend(&[((1.0 - s) * (1.0 - s), a), (2.0 * s * (1.0 - s), m), (s * s, b)])
            }
            SystemPath::Custom(f) => f(s),
        }
    }

    /// Path reversed in s.
    pub fn reversed(&self) -> SystemPath {
        match self {
            SystemPath::Constant(sys) => SystemPath::Constant(sys.clone()),
            SystemPath::Linear(a, b) => SystemPath::Linear(b.clone(), a.clone()),
            SystemPath::Quadratic(a, m, b) => SystemPath::Quadratic(b.clone(), m.clone(), a.clone()),
            SystemPath::Custom(f) => {
                let f = f.clone();
                SystemPath::Custom(Arc::new(move |s| f(1.0 - s)))
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, SystemPath::Constant(_))
    }

    /// (dH_d/ds, dmu_c/ds), analytic where the path form allows it.
    pub fn derivative(&self, s: f64) -> (CMat, Vec<CMat>) {
        match self {
            SystemPath::Constant(sys) => {
                let n = sys.dim();
                (CMat::zeros(n, n), vec![CMat::zeros(n, n); sys.n_controls()])
            }
            SystemPath::Linear(a, b) => operators(&blend(&[(-1.0, a), (1.0, b)])),
            SystemPath::Quadratic(a, m, b) => operators(&blend(&[
                (-2.0 * (1.0 - s), a),
                (2.0 - 4.0 * s, m),
                (2.0 * s, b),
            ])),
            SystemPath::Custom(_) => self.finite_difference_derivative(s),
        }
    }

    /// Central difference with step FD_STEP, one-sided at the ends of [0, 1].
    pub fn finite_difference_derivative(&self, s: f64) -> (CMat, Vec<CMat>) {
        let lo = (s - FD_STEP).max(0.0);
        let hi = (s + FD_STEP).min(1.0);
        let (a, b) = (self.at(lo), self.at(hi));
        let w = 1.0 / (hi - lo);
        operators(&blend(&[(-w, &a), (w, &b)]))
    }

    /// Dimension, channel and horizon consistency plus a sampled continuity
    /// check: jumps must shrink when the sampling grid is refined.
    pub fn validate(&self) -> Result<()> {
        let base = self.at(0.0);
        let jump = |n: usize| -> Result<f64> {
            let mut worst = 0.0f64;
            let mut prev = base.clone();
            for i in 1..=n {
                let cur = self.at(i as f64 / n as f64);
                check_compatible(&base, &cur)?;
                let mut d = (cur.h0() - prev.h0()).norm();
                for (x, y) in cur.dipoles().iter().zip(prev.dipoles()) {
                    d = d.max((x - y).norm());
                }
                worst = worst.max(d);
                prev = cur;
            }
            Ok(worst)
        };
        let coarse = jump(64)?;
        let fine = jump(128)?;
        if coarse > 1e-12 && fine > 0.75 * coarse {
            return Err(Error::InvalidInput(
                "system path is not continuous in s".into(),
            ));
        }
        Ok(())
    }
}

fn check_compatible(a: &ControlSystem, b: &ControlSystem) -> Result<()> {
    if a.dim() != b.dim() || a.n_controls() != b.n_controls() {
        return Err(Error::DimensionMismatch("systems on a path must share dimension and channels".into()));
    }
    if (a.horizon() - b.horizon()).abs() > 1e-12 * a.horizon() {
        return Err(Error::InvalidInput("systems on a path must share the horizon".into()));
    }
    Ok(())
}

pub type TrackFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Mode {
    LevelSet,
    Morph,
    /// Follow the prescribed value P(s).
    Track(TrackFn),
}

impl Mode {
    pub fn track(p: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Mode::Track(Arc::new(p))
    }
}

/// Free function f(s, t) steering motion within the constraint set.
#[derive(Debug, Clone, PartialEq)]
pub enum FreeFunction {
    Zero,
    /// f = -eps / (tau S): relaxes toward smaller fluence.
    FluenceMin { tau: f64 },
    /// f = +eps / (tau S).
    FluenceMax { tau: f64 },
    /// Seeded sum of low harmonics, fixed in s.
    RandomNull { seed: u64, modes: usize, amplitude: f64 },
}

impl FreeFunction {
    pub fn fluence_min() -> Self {
        FreeFunction::FluenceMin { tau: 1.0 }
    }

    pub fn fluence_max() -> Self {
        FreeFunction::FluenceMax { tau: 1.0 }
    }

    pub fn random_null(seed: u64) -> Self {
        FreeFunction::RandomNull {
            seed,
            modes: 8,
            amplitude: 1.0,
        }
    }

    /// Raw values f(s, t_k) for each channel, before any projection.
    pub fn raw(&self, field: &ControlField, shape: &[f64]) -> RMat {
        let (k_steps, m) = (field.n_steps(), field.n_controls());
        match self {
            FreeFunction::Zero => RMat::zeros(k_steps, m),
            FreeFunction::FluenceMin { tau } | FreeFunction::FluenceMax { tau } => {
                let sign = if matches!(self, FreeFunction::FluenceMin { .. }) { -1.0 } else { 1.0 };
                RMat::from_fn(k_steps, m, |k, ch| sign * field.value(k, ch) / (tau * shape[k]))
            }
            FreeFunction::RandomNull { seed, modes, amplitude } => {
                let mut rng = substream(*seed, "random_null");
                let t_total = field.horizon();
                let mut out = RMat::zeros(k_steps, m);
                for ch in 0..m {
                    for j in 1..=*modes {
                        let a: f64 = rng.sample(StandardNormal);
                        let b: f64 = rng.sample(StandardNormal);
                        let w = 2.0 * std::f64::consts::PI * j as f64 / t_total;
                        for k in 0..k_steps {
                            let t = field.midpoint(k);
                            out[(k, ch)] += amplitude * (a * (w * t).cos() + b * (w * t).sin()) / j as f64;
                        }
                    }
                }
                out
            }
        }
    }

    /// f with each channel made to integrate to zero.
    pub fn evaluate(&self, field: &ControlField, shape: &[f64]) -> RMat {
        let mut f = self.raw(field, shape);
        for ch in 0..f.ncols() {
            let mean = f.column(ch).mean();
            for k in 0..f.nrows() {
                f[(k, ch)] -= mean;
            }
        }
        f
    }
}

/// Everything needed to run D-MORPH.
#[derive(Clone)]
pub struct HomotopyProblem {
    pub system_path: SystemPath,
    pub spec: ObservableSpec,
    pub field0: ControlField,
    pub mode: Mode,
    pub free_function: FreeFunction,
    /// S(t) per interval; None means S = 1.
    pub shape: Option<Vec<f64>>,
    pub s_steps: usize,
    /// Allowed |<Theta> - P(s)| before a step is rejected.
    pub tolerance: f64,
    /// Replace dP/ds by (P(s + ds) - <Theta(s)>)/ds so drift is fed back.
    pub feedback: bool,
    /// Newton projections along S a0 when drift exceeds tolerance / 10.
    pub projection: bool,
    pub record_hessian_trace: bool,
    pub min_ds: f64,
}

impl HomotopyProblem {
    pub fn new(
        system_path: SystemPath,
        spec: ObservableSpec,
        field0: ControlField,
        mode: Mode,
        free_function: FreeFunction,
        s_steps: usize,
    ) -> Result<Self> {
        if s_steps == 0 {
            return Err(Error::InvalidInput("s_steps must be >= 1".into()));
        }
        system_path.validate()?;
        let sys0 = system_path.at(0.0);
        if sys0.dim() != spec.dim() {
            return Err(Error::DimensionMismatch("observable and system sizes differ".into()));
        }
        if (sys0.horizon() - field0.horizon()).abs() > 1e-12 * sys0.horizon() {
            return Err(Error::InvalidInput("field and system horizons differ".into()));
        }
        let tolerance = match mode {
            Mode::LevelSet => 1e-4,
            Mode::Morph | Mode::Track(_) => 1e-3,
        };
        Ok(Self {
            system_path,
            spec,
            field0,
            mode,
            free_function,
            shape: None,
            s_steps,
            tolerance,
            feedback: true,
            projection: true,
            record_hessian_trace: false,
            min_ds: 1e-8,
        })
    }

    pub fn with_shape(mut self, shape: Vec<f64>) -> Result<Self> {
        if shape.len() != self.field0.n_steps() || shape.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidInput("shape needs one positive value per interval".into()));
        }
        self.shape = Some(shape);
        Ok(self)
    }

    pub fn shape_values(&self) -> Vec<f64> {
        self.shape.clone().unwrap_or_else(|| vec![1.0; self.field0.n_steps()])
    }

    /// Target value P(s); level-set and morph modes hold the initial value.
    pub fn target(&self, s: f64, initial: f64) -> f64 {
        match &self.mode {
            Mode::Track(p) => p(s),
            _ => initial,
        }
    }

    pub fn target_slope(&self, s: f64) -> f64 {
        match &self.mode {
            Mode::Track(p) => {
                let lo = (s - FD_STEP).max(0.0);
                let hi = (s + FD_STEP).min(1.0);
                (p(hi) - p(lo)) / (hi - lo)
            }
            _ => 0.0,
        }
    }

    fn propagate_at(&self, s: f64, field: &ControlField) -> Result<(ControlSystem, Trajectory)> {
        let sys = self.system_path.at(s);
        let traj = propagate(&sys, field)?;
        Ok((sys, traj))
    }
}

/// The field surface eps(s, t) with per-s diagnostics.
#[derive(Debug, Clone, Default)]
pub struct HomotopyTrajectory {
    pub s: Vec<f64>,
    pub fields: Vec<ControlField>,
    pub observable: Vec<f64>,
    pub fluence: Vec<f64>,
    pub drift: Vec<f64>,
    pub hessian_trace: Option<Vec<f64>>,
}

impl HomotopyTrajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, s: f64, field: &ControlField, observable: f64, drift: f64) {
        self.s.push(s);
        self.fluence.push(field.fluence());
        self.fields.push(field.clone());
        self.observable.push(observable);
        self.drift.push(drift);
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn max_drift(&self) -> f64 {
        self.drift.iter().cloned().fold(0.0, f64::max)
    }

    pub fn final_field(&self) -> Option<&ControlField> {
        self.fields.last()
    }
}

/// Kernels of d<Theta>/ds = int (a0 . d eps/ds + a1 . eps + a2) dt.
#[derive(Debug, Clone, PartialEq)]
pub struct AFunctions {
    /// K x m, response to the field.
    pub a0: RMat,
    /// K x m, response to dmu/ds.
    pub a1: RMat,
    /// Response to dH_d/ds, one value per interval.
    pub a2: RVec,
    /// -int (a1 . eps + a2) dt.
    pub b: f64,
}

fn heisenberg_commutator(traj: &Trajectory, spec: &ObservableSpec) -> CMat {
    let u = traj.final_unitary();
    let th = u.adjoint() * spec.theta() * u;
    (spec.rho0() * &th - &th * spec.rho0()) * c(0.0, 1.0)
}

fn a_functions_on(problem: &HomotopyProblem, s: f64, traj: &Trajectory) -> Result<AFunctions> {
    let a0 = grad_phi1_field(traj, &problem.spec)?.values;
    let (k_steps, m) = (a0.nrows(), a0.ncols());
    let mut a1 = RMat::zeros(k_steps, m);
    let mut a2 = RVec::zeros(k_steps);
    if !problem.system_path.is_constant() {
        // x = i[rho, Theta'], so Re Tr(avg(A) x) = i Tr(avg(A)[rho, Theta']).
        let x = heisenberg_commutator(traj, &problem.spec);
        let (dh, dmu) = problem.system_path.derivative(s);
        for k in 0..k_steps {
            a2[k] = -trace_prod(&traj.averaged_operator(&dh, k), &x).re;
            for (ch, d) in dmu.iter().enumerate() {
                a1[(k, ch)] = trace_prod(&traj.averaged_operator(d, k), &x).re;
            }
        }
    }
    let field = traj.field();
    let dt = field.dt();
    let mut b = 0.0;
    for k in 0..k_steps {
        b -= dt * a2[k];
        for ch in 0..m {
            b -= dt * a1[(k, ch)] * field.value(k, ch);
        }
    }
    Ok(AFunctions { a0, a1, a2, b })
}

/// a0, a1, a2 and b at (s, field).
pub fn a_functions(problem: &HomotopyProblem, s: f64, field: &ControlField) -> Result<AFunctions> {
    let (_, traj) = problem.propagate_at(s, field)?;
    a_functions_on(problem, s, &traj)
}

fn weighted_dot(a: &RMat, b: &RMat, shape: &[f64], dt: f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..a.nrows() {
        for ch in 0..a.ncols() {
            acc += shape[k] * a[(k, ch)] * b[(k, ch)];
        }
    }
    acc * dt
}

/// d eps/ds = S [f + (b + dP/ds - gamma) a0 / Gamma] at (s, traj).
fn velocity(problem: &HomotopyProblem, s: f64, traj: &Trajectory, slope: f64) -> Result<RMat> {
    let field = traj.field();
    let dt = field.dt();
    let shape = problem.shape_values();
    let a = a_functions_on(problem, s, traj)?;
    let gamma_big = weighted_dot(&a.a0, &a.a0, &shape, dt);
    let integral_s: f64 = shape.iter().sum::<f64>() * dt;
    let a0_max = a.a0.iter().fold(0.0f64, |m, x| m.max(x * x));
    let gamma_min = 1e-10 * integral_s * a0_max;
    if !(gamma_big > gamma_min) || a0_max == 0.0 {
        return Err(Error::NearCritical {
            s,
            gamma: gamma_big,
            gamma_min,
        });
    }
    let f = null_space_free(problem, field, &a.a0, &shape);
    let gamma = weighted_dot(&a.a0, &f, &shape, dt);
    let coef = (a.b + slope - gamma) / gamma_big;
    Ok(RMat::from_fn(f.nrows(), f.ncols(), |k, ch| {
        shape[k] * (f[(k, ch)] + coef * a.a0[(k, ch)])
    }))
}

/// Free function with zero time integral per channel and, jointly, no
/// S-weighted component along a0. Doing both projections at once keeps the
/// fluence functional monotone under the fluence free functions.
fn null_space_free(problem: &HomotopyProblem, field: &ControlField, a0: &RMat, shape: &[f64]) -> RMat {
    let f = problem.free_function.raw(field, shape);
    let (k_steps, m) = (f.nrows(), f.ncols());
    let dt = field.dt();
    // Constraint directions in the S-weighted inner product: 1/S per channel, then a0.
    let mut dirs: Vec<RMat> = (0..m)
        .map(|ch| RMat::from_fn(k_steps, m, |k, j| if j == ch { 1.0 / shape[k] } else { 0.0 }))
        .collect();
    dirs.push(a0.clone());
    let mut basis: Vec<RMat> = Vec::new();
    for mut d in dirs {
        for q in &basis {
            let p = weighted_dot(q, &d, shape, dt);
            d -= q * p;
        }
        let nrm = weighted_dot(&d, &d, shape, dt).sqrt();
        if nrm > 1e-14 {
            basis.push(d / nrm);
        }
    }
    let mut out = f;
    for q in &basis {
        let p = weighted_dot(q, &out, shape, dt);
        out -= q * p;
    }
    out
}

/// Single explicit Euler step of the D-MORPH equation.
pub fn dmorph_step(problem: &HomotopyProblem, s: f64, field: &ControlField, ds: f64) -> Result<ControlField> {
    let (_, traj) = problem.propagate_at(s, field)?;
    let v = velocity(problem, s, &traj, problem.target_slope(s))?;
    field.with_values(field.values() + v * ds)
}

fn check_track_feasible(problem: &HomotopyProblem) -> Result<()> {
    if let Mode::Track(p) = &problem.mode {
        let eig = hermitian_eigenvalues(problem.spec.theta());
        let (lo, hi) = (eig[0], *eig.last().unwrap());
        for i in 0..=1000 {
            let s = i as f64 / 1000.0;
            let v = p(s);
            if !(v >= lo - 1e-12 && v <= hi + 1e-12) {
                return Err(Error::InfeasibleTrack { s, value: v, lo, hi });
            }
        }
    }
    Ok(())
}

/// Shared adaptive driver for all modes.
fn run(problem: &HomotopyProblem) -> Result<HomotopyTrajectory> {
    check_track_feasible(problem)?;
    let mut field = problem.field0.clone();
    let (_, mut traj) = problem.propagate_at(0.0, &field)?;
    let initial = phi1(traj.final_unitary(), &problem.spec)?;
    if let Mode::Track(p) = &problem.mode {
        let d = (p(0.0) - initial).abs();
        if d > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "track starts {d:e} away from the initial observable"
            )));
        }
    }
    let mut out = HomotopyTrajectory::new();
    let record_trace = |traj: &Trajectory, out: &mut HomotopyTrajectory| -> Result<()> {
        if problem.record_hessian_trace {
            let tr = hessian_phi1_trace(traj, &problem.spec)?;
            out.hessian_trace.get_or_insert_with(Vec::new).push(tr);
        }
        Ok(())
    };
    out.push(0.0, &field, initial, (initial - problem.target(0.0, initial)).abs());
    record_trace(&traj, &mut out)?;
    let ds_nominal = 1.0 / problem.s_steps as f64;
    let mut ds_try = ds_nominal;
    let mut s = 0.0;
    let shape = problem.shape_values();
    let trigger = problem.tolerance / 10.0;
    while s < 1.0 - 1e-12 {
        let ds = ds_try.min(1.0 - s);
        let s_next = if ds == 1.0 - s { 1.0 } else { s + ds };
        let current = phi1(traj.final_unitary(), &problem.spec)?;
        let slope = if problem.feedback {
            (problem.target(s_next, initial) - current) / ds
        } else {
            problem.target_slope(s)
        };
        let v = velocity(problem, s, &traj, slope)?;
        let mut cand = field.with_values(field.values() + v * ds)?;
        let (_, mut cand_traj) = problem.propagate_at(s_next, &cand)?;
        let target = problem.target(s_next, initial);
        let mut value = phi1(cand_traj.final_unitary(), &problem.spec)?;
        if problem.projection {
            for _ in 0..3 {
                if (value - target).abs() <= trigger {
                    break;
                }
                let a0 = grad_phi1_field(&cand_traj, &problem.spec)?.values;
                let g = weighted_dot(&a0, &a0, &shape, cand.dt());
                if !(g > 0.0) {
                    break;
                }
                let step = (target - value) / g;
                let upd = RMat::from_fn(a0.nrows(), a0.ncols(), |k, ch| shape[k] * a0[(k, ch)] * step);
                cand = cand.with_values(cand.values() + upd)?;
                cand_traj = problem.propagate_at(s_next, &cand)?.1;
                value = phi1(cand_traj.final_unitary(), &problem.spec)?;
            }
        }
        let drift = (value - target).abs();
        if !(drift < problem.tolerance) {
            ds_try = ds / 2.0;
            if ds_try < problem.min_ds {
                if drift > 10.0 * problem.tolerance {
                    return Err(Error::DriftBlowUp { s: s_next, drift });
                }
                return Err(Error::StepUnderflow {
                    s,
                    floor: problem.min_ds,
                });
            }
            continue;
        }
        s = s_next;
        field = cand;
        traj = cand_traj;
        out.push(s, &field, value, drift);
        record_trace(&traj, &mut out)?;
        ds_try = (ds_try * 2.0).min(ds_nominal);
    }
    Ok(out)
}

/// Moves along the level set <Theta> = <Theta(0)> driven by the free function.
pub fn explore_level_set(problem: &HomotopyProblem) -> Result<HomotopyTrajectory> {
    if !matches!(problem.mode, Mode::LevelSet) {
        return Err(Error::InvalidInput("explore_level_set needs level-set mode".into()));
    }
    run(problem)
}

/// Holds <Theta> fixed while the system moves along its path.
pub fn morph_hamiltonian(problem: &HomotopyProblem) -> Result<HomotopyTrajectory> {
    if !matches!(problem.mode, Mode::Morph) {
        return Err(Error::InvalidInput("morph_hamiltonian needs morph mode".into()));
    }
    run(problem)
}

/// Follows the prescribed observable track P(s).
pub fn track_observable(problem: &HomotopyProblem) -> Result<HomotopyTrajectory> {
    if !matches!(problem.mode, Mode::Track(_)) {
        return Err(Error::InvalidInput("track_observable needs track mode".into()));
    }
    run(problem)
}

/// Runs whichever operation matches the problem mode.
pub fn solve(problem: &HomotopyProblem) -> Result<HomotopyTrajectory> {
    run(problem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diag, projector};

    fn two_level() -> (ControlSystem, ObservableSpec, ControlField) {
        let mut mu = CMat::zeros(3, 3);
        mu[(0, 1)] = c(1.0, 0.0);
        mu[(1, 0)] = c(1.0, 0.0);
        mu[(1, 2)] = c(0.7, 0.0);
        mu[(2, 1)] = c(0.7, 0.0);
        let sys = ControlSystem::new(diag(&[0.0, 1.0, 2.3]), vec![mu], 5.0).unwrap();
        let spec = ObservableSpec::new(projector(3, 0), projector(3, 2)).unwrap();
        let field = ControlField::from_fn(5.0, 50, 1, |t, _| 0.4 * t.cos() + 0.3 * (1.3 * t).cos()).unwrap();
        (sys, spec, field)
    }

    #[test]
    fn zero_free_function_is_stationary() {
        let (sys, spec, field) = two_level();
        let p = HomotopyProblem::new(SystemPath::Constant(sys), spec, field.clone(), Mode::LevelSet, FreeFunction::Zero, 10)
            .unwrap();
        let next = dmorph_step(&p, 0.0, &field, 0.1).unwrap();
        assert!((next.values() - field.values()).norm() < 1e-14);
    }

    #[test]
    fn constant_path_has_no_morph_terms() {
        let (sys, spec, field) = two_level();
        let p = HomotopyProblem::new(SystemPath::Constant(sys), spec, field.clone(), Mode::LevelSet, FreeFunction::Zero, 10)
            .unwrap();
        let a = a_functions(&p, 0.3, &field).unwrap();
        assert_eq!(a.b, 0.0);
        assert!(a.a1.iter().all(|&x| x == 0.0) && a.a2.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn free_functions_integrate_to_zero() {
        let (_, _, field) = two_level();
        let shape = vec![1.0; field.n_steps()];
        for f in [FreeFunction::fluence_min(), FreeFunction::fluence_max(), FreeFunction::random_null(3)] {
            let v = f.evaluate(&field, &shape);
            assert!(v.column(0).sum().abs() * field.dt() < 1e-12);
        }
    }

    #[test]
    fn level_set_run_holds_value() {
        let (sys, spec, field) = two_level();
        let p = HomotopyProblem::new(SystemPath::Constant(sys), spec, field, Mode::LevelSet, FreeFunction::fluence_min(), 20)
            .unwrap();
        let tr = explore_level_set(&p).unwrap();
        assert!(tr.max_drift() < 1e-4);
        assert!(tr.fluence.last().unwrap() < &tr.fluence[0]);
    }
}
