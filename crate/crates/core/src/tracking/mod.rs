//! Global tracking in propagator space: the correlation matrix G, unitary and
//! observable-set tracks, and constraint-rank diagnostics.

mod tomography;

pub use tomography::{
    mle_reconstruct, mle_reconstruct_with, simulate_measurements, trace_distance, MeasurementRecord, MleOptions,
    MleResult,
};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::homotopy::HomotopyTrajectory;
use crate::linalg::{
    c, herm_to_vec, hermitian_part, numerical_rank, phase_free_distance, real_symmetric_eigen,
    traceless_basis, trace_prod, CMat, RMat, RVec,
};
use crate::objectives::{phi1, ObservableSpec};
use crate::quantum::{geodesic_point, principal_log_unitary, propagate, ControlField, ControlSystem, Trajectory};

/// G = int v(mu(t)) v(mu(t))^T dt, summed over channels, in isometric
/// Hermitian coordinates (or their traceless restriction).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub g: RMat,
    pub condition: f64,
    /// True when expressed on su(N) directions (N^2 - 1 coordinates).
    pub traceless: bool,
}

fn condition_of(g: &RMat) -> f64 {
    let (vals, _) = real_symmetric_eigen(g);
    let max = vals.iter().cloned().fold(0.0f64, f64::max);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if max <= 0.0 || min <= max * 1e-300 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Vectorized interval-averaged dipoles, [k][channel].
fn dipole_vectors(traj: &Trajectory) -> Vec<Vec<RVec>> {
    traj.averaged_dipoles()
        .iter()
        .map(|row| row.iter().map(herm_to_vec).collect())
        .collect()
}

/// Correlation matrix on all N^2 directions of u(N).
pub fn correlation_matrix(traj: &Trajectory) -> CorrelationMatrix {
    let n2 = traj.dim() * traj.dim();
    let dt = traj.dt();
    let mut g = RMat::zeros(n2, n2);
    for row in dipole_vectors(traj) {
        for v in row {
            g.ger(dt, &v, &v, 1.0);
        }
    }
    let g = (&g + g.transpose()) * 0.5;
    CorrelationMatrix {
        condition: condition_of(&g),
        g,
        traceless: false,
    }
}

impl CorrelationMatrix {
    /// Restriction to the traceless directions (su(N)).
    pub fn restricted_to_traceless(&self) -> CorrelationMatrix {
        if self.traceless {
            return self.clone();
        }
        let n = (self.g.nrows() as f64).sqrt().round() as usize;
        let b = traceless_basis(n);
        let g = b.transpose() * &self.g * &b;
        let g = (&g + g.transpose()) * 0.5;
        CorrelationMatrix {
            condition: condition_of(&g),
            g,
            traceless: true,
        }
    }

    pub fn rank(&self, rel_tol: f64) -> usize {
        let (vals, _) = real_symmetric_eigen(&self.g);
        let max = vals.iter().cloned().fold(0.0f64, f64::max);
        vals.iter().filter(|&&v| v > rel_tol * max).count()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        real_symmetric_eigen(&self.g).0
    }
}

/// Correlation matrix in the coordinates used for tracking this system:
/// traceless when the dipoles cannot steer the global phase.
pub fn tracking_correlation(traj: &Trajectory) -> CorrelationMatrix {
    let g = correlation_matrix(traj);
    if traj.system().phase_locked() {
        g.restricted_to_traceless()
    } else {
        g
    }
}

pub type UnitaryPath = Arc<dyn Fn(f64) -> CMat + Send + Sync>;
pub type TrackFreeFunction = Arc<dyn Fn(f64, &ControlField) -> RMat + Send + Sync>;

/// What is being tracked.
#[derive(Clone)]
pub enum TrackKind {
    /// Arbitrary propagator path U(s), s in [0, 1].
    UnitaryPath(UnitaryPath),
    /// Geodesic from the initial U(T) to W.
    Geodesic(CMat),
    /// Scalar tracks P_i(s) for observables Theta_i from a fixed rho0.
    ObservableSet {
        rho0: CMat,
        observables: Vec<CMat>,
        tracks: Vec<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
    },
}

/// Tracking configuration.
#[derive(Clone)]
pub struct TrackSpec {
    pub kind: TrackKind,
    pub tolerance: f64,
    /// Ridge delta; None uses 1e-10 tr(G)/N^2, Some(0) disables regularization.
    pub ridge: Option<f64>,
    pub condition_cap: f64,
    /// Free function f_s(s, field); its increment per step is f ds.
    pub free: Option<TrackFreeFunction>,
    /// Extra same-target solves after each predictor step.
    pub correctors: usize,
}

impl TrackSpec {
    pub fn new(kind: TrackKind, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0) {
            return Err(Error::InvalidInput("tracking tolerance must be positive".into()));
        }
        Ok(Self {
            kind,
            tolerance,
            ridge: None,
            condition_cap: 1e8,
            free: None,
            correctors: 0,
        })
    }

    pub fn with_ridge(mut self, ridge: Option<f64>) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn with_correctors(mut self, correctors: usize) -> Self {
        self.correctors = correctors;
        self
    }
}

/// One row of the tracking log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackLogEntry {
    pub s: f64,
    pub residual: f64,
    pub condition: f64,
    pub fluence: f64,
}

/// Field surface plus the per-step log.
#[derive(Debug, Clone)]
pub struct TrackResult {
    pub trajectory: HomotopyTrajectory,
    pub log: Vec<TrackLogEntry>,
    pub final_unitary: CMat,
}

fn mean_subtract(f: &mut RMat) {
    for ch in 0..f.ncols() {
        let mean = f.column(ch).mean();
        for k in 0..f.nrows() {
            f[(k, ch)] -= mean;
        }
    }
}

fn solve_spd(g: &RMat, rhs: &RVec, ridge: f64) -> Option<RVec> {
    let n = g.nrows();
    let a = g + RMat::identity(n, n) * ridge;
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    // Fall back to a pseudo-inverse solve for semidefinite systems.
    let svd = a.svd(true, true);
    svd.solve(rhs, 1e-14).ok()
}

/// Field increment realizing a target Hermitian generator Delta at U(T):
/// solves (G + delta I) x = v(Delta) - alpha and returns f + sum x . v(M).
fn unitary_step(
    traj: &Trajectory,
    delta: &CMat,
    free_inc: Option<&RMat>,
    ridge: Option<f64>,
    cap: f64,
    s: f64,
) -> Result<(RMat, f64)> {
    let n = traj.dim();
    let locked = traj.system().phase_locked();
    let basis = if locked { Some(traceless_basis(n)) } else { None };
    let project = |v: RVec| match &basis {
        Some(b) => b.transpose() * v,
        None => v,
    };
    let vecs: Vec<Vec<RVec>> = dipole_vectors(traj)
        .into_iter()
        .map(|row| row.into_iter().map(&project).collect())
        .collect();
    let dim = vecs[0][0].len();
    let dt = traj.dt();
    let mut g = RMat::zeros(dim, dim);
    for row in &vecs {
        for v in row {
            g.ger(dt, v, v, 1.0);
        }
    }
    let g = (&g + g.transpose()) * 0.5;
    let condition = condition_of(&g);
    let ridge = ridge.unwrap_or(1e-10 * g.trace() / (n * n) as f64);
    if ridge == 0.0 && !(condition < cap) {
        return Err(Error::IllConditioned { s, condition });
    }
    let mut rhs = project(herm_to_vec(delta));
    if let Some(f) = free_inc {
        for (k, row) in vecs.iter().enumerate() {
            for (ch, v) in row.iter().enumerate() {
                rhs -= v * (f[(k, ch)] * dt);
            }
        }
    }
    let x = solve_spd(&g, &rhs, ridge).ok_or(Error::IllConditioned { s, condition })?;
    let m = traj.system().n_controls();
    let mut inc = free_inc.cloned().unwrap_or_else(|| RMat::zeros(traj.n_steps(), m));
    for (k, row) in vecs.iter().enumerate() {
        for (ch, v) in row.iter().enumerate() {
            inc[(k, ch)] += v.dot(&x);
        }
    }
    Ok((inc, condition))
}

fn unitary_residual(u: &CMat, target: &CMat, locked: bool) -> f64 {
    if locked {
        phase_free_distance(u, target)
    } else {
        (u - target).norm()
    }
}

/// Hermitian generator taking u to target: u exp(i Delta) = target (modulo
/// global phase when `locked`).
fn step_generator(u: &CMat, target: &CMat) -> Result<CMat> {
    let l = principal_log_unitary(&(u.adjoint() * target))?;
    Ok(hermitian_part(&(l * c(0.0, -1.0))))
}

/// Follows a unitary path (or geodesic) at the final time by solving the
/// regularized matrix integral equation at each of `s_steps` steps.
pub fn track_unitary(
    system: &ControlSystem,
    field0: &ControlField,
    spec: &TrackSpec,
    s_steps: usize,
) -> Result<TrackResult> {
    if s_steps == 0 {
        return Err(Error::InvalidInput("s_steps must be >= 1".into()));
    }
    if let TrackKind::ObservableSet { .. } = spec.kind {
        return track_observable_set(system, field0, spec, s_steps);
    }
    let locked = system.phase_locked();
    let mut traj = propagate(system, field0)?;
    let u_start = traj.final_unitary().clone();
    let path: UnitaryPath = match &spec.kind {
        TrackKind::UnitaryPath(p) => p.clone(),
        TrackKind::Geodesic(w) => {
            let (u0, w) = (u_start.clone(), w.clone());
            principal_log_unitary(&(u0.adjoint() * &w))?;
            Arc::new(move |s| geodesic_point(&u0, &w, s).expect("checked geodesic"))
        }
        TrackKind::ObservableSet { .. } => unreachable!(),
    };
    let r0 = unitary_residual(&u_start, &path(0.0), locked);
    if r0 > spec.tolerance {
        return Err(Error::InvalidInput(format!(
            "initial propagator is {r0:e} from the track start"
        )));
    }
    let mut out = HomotopyTrajectory::new();
    let mut log = Vec::new();
    let mut field = field0.clone();
    out.push(0.0, &field, r0, r0);
    log.push(TrackLogEntry {
        s: 0.0,
        residual: r0,
        condition: tracking_correlation(&traj).condition,
        fluence: field.fluence(),
    });
    let ds = 1.0 / s_steps as f64;
    for j in 0..s_steps {
        let s = j as f64 * ds;
        let s_next = (j + 1) as f64 * ds;
        let target = path(s_next);
        let delta = step_generator(traj.final_unitary(), &target)?;
        let free_inc = spec.free.as_ref().map(|f| {
            let mut v = f(s, &field) * ds;
            mean_subtract(&mut v);
            v
        });
        let (inc, condition) = unitary_step(&traj, &delta, free_inc.as_ref(), spec.ridge, spec.condition_cap, s)?;
        field = field.with_values(field.values() + inc)?;
        traj = propagate(system, &field)?;
        for _ in 0..spec.correctors {
            let delta = step_generator(traj.final_unitary(), &target)?;
            let (inc, _) = unitary_step(&traj, &delta, None, spec.ridge, spec.condition_cap, s_next)?;
            field = field.with_values(field.values() + inc)?;
            traj = propagate(system, &field)?;
        }
        let residual = unitary_residual(traj.final_unitary(), &target, locked);
        out.push(s_next, &field, residual, residual);
        log.push(TrackLogEntry {
            s: s_next,
            residual,
            condition,
            fluence: field.fluence(),
        });
        if !(residual <= 10.0 * spec.tolerance) {
            return Err(Error::TrackingDiverged { s: s_next, residual });
        }
    }
    Ok(TrackResult {
        trajectory: out,
        log,
        final_unitary: traj.final_unitary().clone(),
    })
}

/// Newton iteration on the field so that U(T) hits `target` (modulo global
/// phase for phase-locked systems) to `tol`.
pub fn newton_to_unitary(
    system: &ControlSystem,
    field0: &ControlField,
    target: &CMat,
    tol: f64,
    max_iter: usize,
) -> Result<ControlField> {
    let locked = system.phase_locked();
    let mut field = field0.clone();
    let mut traj = propagate(system, &field)?;
    let mut residual = unitary_residual(traj.final_unitary(), target, locked);
    for _ in 0..max_iter {
        if residual < tol {
            return Ok(field);
        }
        let delta = step_generator(traj.final_unitary(), target)?;
        let (inc, _) = unitary_step(&traj, &delta, None, None, 1e300, 1.0)?;
        field = field.with_values(field.values() + inc)?;
        traj = propagate(system, &field)?;
        residual = unitary_residual(traj.final_unitary(), target, locked);
    }
    if residual < tol {
        Ok(field)
    } else {
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual,
        })
    }
}

fn track_observable_set(
    system: &ControlSystem,
    field0: &ControlField,
    spec: &TrackSpec,
    s_steps: usize,
) -> Result<TrackResult> {
    let TrackKind::ObservableSet { rho0, observables, tracks } = &spec.kind else {
        unreachable!()
    };
    if observables.len() != tracks.len() || observables.is_empty() {
        return Err(Error::InvalidInput("one track per observable required".into()));
    }
    check_independent(observables)?;
    let specs: Vec<ObservableSpec> = observables
        .iter()
        .map(|th| ObservableSpec::new(rho0.clone(), th.clone()))
        .collect::<Result<_>>()?;
    let mut field = field0.clone();
    let mut traj = propagate(system, &field)?;
    let values = |traj: &Trajectory| -> Result<RVec> {
        Ok(RVec::from_iterator(
            specs.len(),
            specs.iter().map(|sp| phi1(traj.final_unitary(), sp)).collect::<Result<Vec<_>>>()?,
        ))
    };
    let targets = |s: f64| RVec::from_iterator(tracks.len(), tracks.iter().map(|t| t(s)));
    let dev = |v: &RVec, s: f64| (v - targets(s)).amax();
    let mut out = HomotopyTrajectory::new();
    let mut log = Vec::new();
    let v0 = values(&traj)?;
    let d0 = dev(&v0, 0.0);
    if d0 > spec.tolerance {
        return Err(Error::InvalidInput(format!(
            "initial observables are {d0:e} from the tracks"
        )));
    }
    out.push(0.0, &field, v0[0], d0);
    log.push(TrackLogEntry { s: 0.0, residual: d0, condition: 1.0, fluence: field.fluence() });
    let ds = 1.0 / s_steps as f64;
    let dt = field.dt();
    for j in 0..s_steps {
        let s_next = (j + 1) as f64 * ds;
        let grads: Vec<RMat> = specs
            .iter()
            .map(|sp| crate::objectives::grad_phi1_field(&traj, sp).map(|g| g.values))
            .collect::<Result<_>>()?;
        let k = grads.len();
        let mut gram = RMat::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                gram[(a, b)] = grads[a].dot(&grads[b]) * dt;
            }
        }
        let condition = condition_of(&gram);
        let ridge = spec.ridge.unwrap_or(1e-10 * gram.trace() / k as f64);
        if ridge == 0.0 && !(condition < spec.condition_cap) {
            return Err(Error::IllConditioned { s: s_next - ds, condition });
        }
        let rhs = targets(s_next) - values(&traj)?;
        let x = solve_spd(&gram, &rhs, ridge).ok_or(Error::IllConditioned { s: s_next - ds, condition })?;
        let mut inc = RMat::zeros(field.n_steps(), field.n_controls());
        for (a, g) in grads.iter().enumerate() {
            inc += g * x[a];
        }
        field = field.with_values(field.values() + inc)?;
        traj = propagate(system, &field)?;
        let v = values(&traj)?;
        let d = dev(&v, s_next);
        out.push(s_next, &field, v[0], d);
        log.push(TrackLogEntry { s: s_next, residual: d, condition, fluence: field.fluence() });
        if !(d <= 10.0 * spec.tolerance) {
            return Err(Error::TrackingDiverged { s: s_next, residual: d });
        }
    }
    Ok(TrackResult {
        trajectory: out,
        log,
        final_unitary: traj.final_unitary().clone(),
    })
}

/// P(s) = Tr(U(s) rho0 U(s)† Theta) along the geodesic from u0 to w.
pub fn geodesic_observable_track(u0: &CMat, w: &CMat, spec: &ObservableSpec, s_grid: &[f64]) -> Result<Vec<f64>> {
    principal_log_unitary(&(u0.adjoint() * w))?;
    s_grid
        .iter()
        .map(|&s| phi1(&geodesic_point(u0, w, s)?, spec))
        .collect()
}

fn check_independent(observables: &[CMat]) -> Result<()> {
    let k = observables.len();
    let n = observables[0].nrows();
    let mut m = RMat::zeros(k, n * n);
    for (i, th) in observables.iter().enumerate() {
        m.set_row(i, &herm_to_vec(th).transpose());
    }
    if numerical_rank(&m, 1e-10) < k {
        return Err(Error::DependentObservables);
    }
    Ok(())
}

/// Tracks P_i(s) = Tr(U(s) rho0 U(s)† Theta_i) induced by a unitary track.
pub fn multi_observable_tracks(
    u_track: &dyn Fn(f64) -> CMat,
    rho0: &CMat,
    observables: &[CMat],
    s_grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let n = rho0.nrows();
    if observables.is_empty() || observables.len() > n * n - 1 {
        return Err(Error::InvalidInput(format!(
            "need between 1 and N^2 - 1 = {} observables",
            n * n - 1
        )));
    }
    check_independent(observables)?;
    let mut out = vec![Vec::with_capacity(s_grid.len()); observables.len()];
    for &s in s_grid {
        let u = u_track(s);
        let rho = &u * rho0 * u.adjoint();
        for (i, th) in observables.iter().enumerate() {
            out[i].push(trace_prod(&rho, th).re);
        }
    }
    Ok(out)
}

/// Rank of the map A -> (d<Theta_i>) for U -> U exp(iA), i.e. of the stacked
/// kinematic gradients v(i[rho0, U† Theta_i U]).
pub fn observable_constraint_rank(u: &CMat, rho0: &CMat, observables: &[CMat]) -> usize {
    let n = u.nrows();
    let mut m = RMat::zeros(observables.len(), n * n);
    for (i, th) in observables.iter().enumerate() {
        let t = u.adjoint() * th * u;
        let x = (rho0 * &t - &t * rho0) * c(0.0, 1.0);
        m.set_row(i, &herm_to_vec(&hermitian_part(&x)).transpose());
    }
    numerical_rank(&m, 1e-9)
}

/// Number of independent constraints unitary tracking imposes on the state
/// U rho0 U†: rank of A -> i[A, rho0] over u(N).
pub fn unitary_constraint_rank_on_state(rho0: &CMat) -> usize {
    let n = rho0.nrows();
    let d = n * n;
    let mut m = RMat::zeros(d, d);
    for j in 0..d {
        let mut e = RVec::zeros(d);
        e[j] = 1.0;
        let a = crate::linalg::vec_to_herm(&e, n);
        let x = (&a * rho0 - rho0 * &a) * c(0.0, 1.0);
        m.set_column(j, &herm_to_vec(&hermitian_part(&x)));
    }
    numerical_rank(&m, 1e-9)
}
