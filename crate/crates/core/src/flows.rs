//! Kinematic gradient flows on U(N), their closed forms and convergence-time
//! bounds, and first-order ascent in field space.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eigen, hermitian_eigenvalues, herm_to_vec, identity, polar_unitary, unitary_angles, CMat, RMat, RVec, C64};
use crate::objectives::{phi1, phi2, FieldGradient, GateSpec, Objective, ObservableSpec, PenaltySpec};
use crate::quantum::{propagate, ControlField, ControlSystem, Trajectory};

/// States visited by a flow.
#[derive(Debug, Clone)]
pub enum FlowPoints {
    Unitaries(Vec<CMat>),
    Fields(Vec<ControlField>),
}

/// Objective values and states along algorithmic time s.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub s_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub gradient_norms: Vec<f64>,
    pub points: FlowPoints,
    /// Gradient tolerance reached (field ascent only; unitary flows run to s_max).
    pub converged: bool,
    /// Line search failed to make progress before convergence.
    pub stalled: bool,
}

impl FlowTrajectory {
    pub fn final_value(&self) -> f64 {
        *self.values.last().expect("non-empty flow")
    }

    pub fn final_unitary(&self) -> Option<&CMat> {
        match &self.points {
            FlowPoints::Unitaries(u) => u.last(),
            FlowPoints::Fields(_) => None,
        }
    }

    pub fn final_field(&self) -> Option<&ControlField> {
        match &self.points {
            FlowPoints::Fields(f) => f.last(),
            FlowPoints::Unitaries(_) => None,
        }
    }

    pub fn unitaries(&self) -> Option<&[CMat]> {
        match &self.points {
            FlowPoints::Unitaries(u) => Some(u),
            FlowPoints::Fields(_) => None,
        }
    }
}

const MONOTONE_SLACK: f64 = 1e-9;
const MAX_HALVINGS: u32 = 20;

fn rk4_unitary(u: &CMat, h: f64, rhs: &dyn Fn(&CMat) -> CMat) -> CMat {
    let k1 = rhs(u);
    let k2 = rhs(&(u + &k1 * c(0.5 * h, 0.0)));
    let k3 = rhs(&(u + &k2 * c(0.5 * h, 0.0)));
    let k4 = rhs(&(u + &k3 * c(h, 0.0)));
    let incr = (k1 + (k2 + k3) * c(2.0, 0.0) + k4) * c(h / 6.0, 0.0);
    u + incr
}

/// Integrates dU/ds = rhs(U) on [0, s_max], recording `steps` + 1 points.
/// Internal substeps are sized from the Lipschitz scale and halved whenever
/// the objective moves against `orientation`.
fn integrate_flow(
    u0: &CMat,
    rhs: &dyn Fn(&CMat) -> CMat,
    value: &dyn Fn(&CMat) -> f64,
    orientation: f64,
    s_max: f64,
    steps: usize,
    lipschitz: f64,
) -> Result<FlowTrajectory> {
    if steps == 0 || !(s_max > 0.0) {
        return Err(Error::InvalidInput("flow needs steps >= 1 and s_max > 0".into()));
    }
    if !crate::linalg::is_unitary(u0, 1e-9 * u0.nrows() as f64) {
        return Err(Error::InvalidInput("initial point must be unitary".into()));
    }
    let ds = s_max / steps as f64;
    let base_sub = ((ds * lipschitz / 0.05).ceil() as usize).max(1);
    let mut u = polar_unitary(u0);
    let mut s_grid = vec![0.0];
    let mut values = vec![value(&u)];
    let mut norms = vec![rhs(&u).norm()];
    let mut points = vec![u.clone()];
    for j in 0..steps {
        let mut sub = base_sub;
        let mut halvings = 0;
        let next = loop {
            let h = ds / sub as f64;
            let mut w = u.clone();
            let mut v_prev = values[values.len() - 1];
            let mut ok = true;
            for _ in 0..sub {
                w = rk4_unitary(&w, h, rhs);
                let v = value(&w);
                if orientation * (v - v_prev) < -MONOTONE_SLACK {
                    ok = false;
                    break;
                }
                v_prev = v;
            }
            if ok {
                break polar_unitary(&w);
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::StepTooLarge {
                    s: j as f64 * ds,
                    suggested: h / 2.0,
                });
            }
            sub *= 2;
        };
        u = next;
        s_grid.push((j + 1) as f64 * ds);
        values.push(value(&u));
        norms.push(rhs(&u).norm());
        points.push(u.clone());
    }
    Ok(FlowTrajectory {
        s_grid,
        values,
        gradient_norms: norms,
        points: FlowPoints::Unitaries(points),
        converged: false,
        stalled: false,
    })
}

fn spectral_radius(h: &CMat) -> f64 {
    hermitian_eigenvalues(h).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// dU/ds = -U [rho, U† Theta U]; Phi1 ascends.
pub fn u_flow_phi1(u0: &CMat, spec: &ObservableSpec, s_max: f64, steps: usize) -> Result<FlowTrajectory> {
    if u0.nrows() != spec.dim() {
        return Err(Error::DimensionMismatch("u0 vs observable".into()));
    }
    let rho = spec.rho0().clone();
    let theta = spec.theta().clone();
    let rhs = move |u: &CMat| {
        let th = u.adjoint() * &theta * u;
        u * (&th * &rho - &rho * &th)
    };
    let value = |u: &CMat| phi1(u, spec).unwrap_or(f64::NAN);
    let lip = 4.0 * spectral_radius(spec.theta()) * spectral_radius(spec.rho0()) + 1e-12;
    integrate_flow(u0, &rhs, &value, 1.0, s_max, steps, lip)
}

/// dU/ds = W - U W† U; Phi2 descends.
pub fn u_flow_phi2(u0: &CMat, spec: &GateSpec, s_max: f64, steps: usize) -> Result<FlowTrajectory> {
    if u0.nrows() != spec.dim() {
        return Err(Error::DimensionMismatch("u0 vs gate".into()));
    }
    let w = spec.w().clone();
    let rhs = move |u: &CMat| &w - u * w.adjoint() * u;
    let value = |u: &CMat| phi2(u, spec).unwrap_or(f64::NAN);
    integrate_flow(u0, &rhs, &value, -1.0, s_max, steps, 4.0)
}

/// Populations in Theta's eigenbasis along the pure-state Phi1 flow:
/// x_i(s) proportional to e^{2 s lambda_i} |c_i(0)|^2.
pub fn closed_form_populations(c0: &[C64], theta_eigs: &[f64], s: f64) -> Result<Vec<f64>> {
    if c0.len() != theta_eigs.len() {
        return Err(Error::DimensionMismatch("c0 vs theta spectrum".into()));
    }
    let norm: f64 = c0.iter().map(|z| z.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!("|c0| must be 1, got {}", norm.sqrt())));
    }
    let top = theta_eigs.iter().cloned().fold(f64::MIN, f64::max);
    let scale = theta_eigs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let top_weight: f64 = c0
        .iter()
        .zip(theta_eigs)
        .filter(|(_, &l)| (l - top).abs() <= 1e-12 * scale)
        .map(|(z, _)| z.norm_sqr())
        .sum();
    if top_weight == 0.0 {
        return Err(Error::SaddleLimit);
    }
    // Log-domain normalization keeps large s finite.
    let logs: Vec<f64> = c0
        .iter()
        .zip(theta_eigs)
        .map(|(z, &l)| {
            let p = z.norm_sqr();
            if p == 0.0 {
                f64::NEG_INFINITY
            } else {
                2.0 * s * l + p.ln()
            }
        })
        .collect();
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|&x| (x - m).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

/// W†U(s) = (sinh s + cosh s W†U0)(cosh s + sinh s W†U0)^{-1}.
pub fn closed_form_gate_flow(u0: &CMat, w: &CMat, s: f64) -> Result<CMat> {
    let n = u0.nrows();
    let v0 = w.adjoint() * u0;
    let (sh, ch) = (s.sinh(), s.cosh());
    let num = identity(n) * c(sh, 0.0) + &v0 * c(ch, 0.0);
    let den = identity(n) * c(ch, 0.0) + &v0 * c(sh, 0.0);
    let sv = den.singular_values();
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if !(smin > 1e-12 * smax) {
        return Err(Error::SingularResolvent { s });
    }
    let inv = den.try_inverse().ok_or(Error::SingularResolvent { s })?;
    Ok(w * (num * inv))
}

/// Inputs for the convergence-time bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceBoundInputs {
    pub n: usize,
    /// Degeneracy of the largest Theta eigenvalue.
    pub k: usize,
    /// Gap between the two largest distinct Theta eigenvalues.
    pub mu_gap: f64,
    pub eps: f64,
    /// Largest initial eigenphase of W†U0, in (0, pi).
    pub theta0: f64,
    /// Theta spectrum (any order).
    pub lambda_list: Vec<f64>,
}

impl ConvergenceBoundInputs {
    /// Observable-flow inputs built from a Theta spectrum.
    pub fn for_observable(lambda: &[f64], eps: f64) -> Self {
        let mut l = lambda.to_vec();
        l.sort_by(|a, b| b.total_cmp(a));
        let scale = l.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let k = l.iter().filter(|&&v| (l[0] - v).abs() <= 1e-12 * scale).count();
        let gap = if k < l.len() { l[0] - l[k] } else { 0.0 };
        Self {
            n: l.len(),
            k,
            mu_gap: gap,
            eps,
            theta0: std::f64::consts::FRAC_PI_2,
            lambda_list: l,
        }
    }

    /// Gate-flow inputs: theta0 is the largest |eigenphase| of W†U0.
    pub fn for_gate(u0: &CMat, w: &CMat, eps: f64) -> Self {
        let angles = unitary_angles(&(w.adjoint() * u0));
        let theta0 = angles.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        Self {
            n: u0.nrows(),
            k: 1,
            mu_gap: 1.0,
            eps,
            theta0,
            lambda_list: Vec::new(),
        }
    }
}

/// t_c1 <= (1/2mu)[ln(2Nk/eps^2) + 2 ln((N-k-2) lambda_{k+1} / (k (lambda_1 - lambda_{k+1})))].
pub fn convergence_bound_phi1(inputs: &ConvergenceBoundInputs) -> Result<f64> {
    let (n, k) = (inputs.n, inputs.k);
    if !(inputs.mu_gap > 0.0) {
        return Err(Error::BoundInapplicable("mu_gap must be positive".into()));
    }
    if !(inputs.eps > 0.0 && inputs.eps < 1.0) {
        return Err(Error::BoundInapplicable("eps must lie in (0, 1)".into()));
    }
    if k == 0 || n < k + 3 {
        return Err(Error::BoundInapplicable(format!("needs N - k - 2 > 0 (N = {n}, k = {k})")));
    }
    let mut l = inputs.lambda_list.clone();
    if l.len() != n {
        return Err(Error::BoundInapplicable("lambda_list must have N entries".into()));
    }
    l.sort_by(|a, b| b.total_cmp(a));
    let (top, next) = (l[0], l[k]);
    let arg = (n - k - 2) as f64 * next / (k as f64 * (top - next));
    if !(arg > 0.0 && arg.is_finite()) {
        return Err(Error::BoundInapplicable(format!(
            "spectral term argument {arg} is not positive"
        )));
    }
    let mu = inputs.mu_gap;
    Ok((((2 * n * k) as f64 / (inputs.eps * inputs.eps)).ln() + 2.0 * arg.ln()) / (2.0 * mu))
}

/// t_c2 <= (1/2) ln(4N / (a^2 eps)), a = sin(theta0) / (1 - cos(theta0)).
pub fn convergence_bound_phi2(inputs: &ConvergenceBoundInputs) -> Result<f64> {
    let th = inputs.theta0;
    if !(th > 0.0 && th < std::f64::consts::PI) {
        return Err(Error::BoundInapplicable(format!("theta0 = {th} outside (0, pi)")));
    }
    if !(inputs.eps > 0.0) {
        return Err(Error::BoundInapplicable("eps must be positive".into()));
    }
    let a = th.sin() / (1.0 - th.cos());
    Ok(0.5 * (4.0 * inputs.n as f64 / (a * a * inputs.eps)).ln())
}

/// Backtracking line-search parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRule {
    pub initial: f64,
    pub armijo: f64,
    pub shrink: f64,
    pub grow: f64,
    pub min_step: f64,
}

impl Default for StepRule {
    fn default() -> Self {
        Self {
            initial: 1.0,
            armijo: 1e-4,
            shrink: 0.5,
            grow: 2.0,
            min_step: 1e-14,
        }
    }
}

fn penalized_score(
    system: &ControlSystem,
    field: &ControlField,
    objective: &Objective,
    penalty: &PenaltySpec,
) -> Result<(Trajectory, f64)> {
    let traj = propagate(system, field)?;
    let phi = objective.value(traj.final_unitary())?;
    let p = penalty.value(field)?;
    // Ascent score: Phi1 - P, or -(Phi2 + P).
    let score = objective.orientation() * phi - p;
    Ok((traj, score))
}

fn ascent_direction(traj: &Trajectory, objective: &Objective, penalty: &PenaltySpec) -> Result<RMat> {
    let g = objective.gradient(traj)?;
    Ok(g.values * objective.orientation() - penalty.gradient(traj.field()))
}

/// First-order ascent (Phi1) or descent (Phi2) on the penalized cost with an
/// Armijo backtracking line search. Values recorded are the penalized cost J.
pub fn eps_gradient_ascent(
    system: &ControlSystem,
    field0: &ControlField,
    objective: &Objective,
    penalty: &PenaltySpec,
    step_rule: &StepRule,
    max_steps: usize,
    tol: f64,
) -> Result<FlowTrajectory> {
    if objective.dim() != system.dim() {
        return Err(Error::DimensionMismatch("objective vs system".into()));
    }
    let orient = objective.orientation();
    let (mut traj, mut score) = penalized_score(system, field0, objective, penalty)?;
    let mut field = field0.clone();
    let mut dir = ascent_direction(&traj, objective, penalty)?;
    let dt = field.dt();
    let sup = |d: &RMat| d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut s_grid = vec![0.0];
    let mut values = vec![orient * score];
    let mut norms = vec![sup(&dir)];
    let mut fields = vec![field.clone()];
    let mut alpha = step_rule.initial;
    let mut s = 0.0;
    let mut converged = norms[0] < tol;
    let mut stalled = false;
    let mut it = 0;
    while !converged && it < max_steps {
        it += 1;
        let slope = dir.iter().map(|v| v * v).sum::<f64>() * dt;
        let mut accepted = None;
        while alpha >= step_rule.min_step {
            let trial = field.with_values(field.values() + &dir * alpha)?;
            let (t_traj, t_score) = penalized_score(system, &trial, objective, penalty)?;
            if t_score >= score + step_rule.armijo * alpha * slope {
                accepted = Some((trial, t_traj, t_score));
                break;
            }
            alpha *= step_rule.shrink;
        }
        let Some((trial, t_traj, t_score)) = accepted else {
            stalled = true;
            break;
        };
        s += alpha;
        field = trial;
        traj = t_traj;
        score = t_score;
        dir = ascent_direction(&traj, objective, penalty)?;
        let gn = sup(&dir);
        s_grid.push(s);
        values.push(orient * score);
        norms.push(gn);
        fields.push(field.clone());
        converged = gn < tol;
        alpha *= step_rule.grow;
    }
    Ok(FlowTrajectory {
        s_grid,
        values,
        gradient_norms: norms,
        points: FlowPoints::Fields(fields),
        converged,
        stalled,
    })
}

/// D = n(2N - n) - sum n_i^2 for nonzero-eigenvalue multiplicities n_i of rho0.
pub fn gradient_subspace_dimension(multiplicities: &[usize], n: usize) -> Result<usize> {
    let support: usize = multiplicities.iter().sum();
    if multiplicities.contains(&0) || support == 0 || support > n {
        return Err(Error::InvalidInput(format!(
            "invalid multiplicities {multiplicities:?} for N = {n}"
        )));
    }
    let sq: usize = multiplicities.iter().map(|m| m * m).sum();
    Ok(support * (2 * n - support) - sq)
}

/// G = int v(mu(t)) v(mu(t))^T dt (shared with the tracking module).
pub fn kinematic_projection_matrix(traj: &Trajectory) -> RMat {
    crate::tracking::correlation_matrix(traj).g
}

/// Kinematic gradient of Phi1 in isometric Hermitian coordinates: the vector X
/// with dPhi1 = <v(X), v(A)> for U -> U exp(iA).
pub fn kinematic_gradient_phi1(u: &CMat, spec: &ObservableSpec) -> RVec {
    let th = u.adjoint() * spec.theta() * u;
    let x = (spec.rho0() * &th - &th * spec.rho0()) * c(0.0, 1.0);
    herm_to_vec(&crate::linalg::hermitian_part(&x))
}

/// Kinematic gradient of Phi2 in the same coordinates.
pub fn kinematic_gradient_phi2(u: &CMat, spec: &GateSpec) -> RVec {
    let y = spec.w().adjoint() * u;
    let x = (&y - y.adjoint()) * c(0.0, -1.0);
    herm_to_vec(&crate::linalg::hermitian_part(&x))
}

/// Velocity of U(T) in the same coordinates induced by a field velocity:
/// v(-i U† dU/ds) = dt sum_a v(M_a) d eps_a/ds.
pub fn induced_unitary_velocity(traj: &Trajectory, field_velocity: &FieldGradient) -> RVec {
    let n = traj.dim();
    let mut acc = CMat::zeros(n, n);
    for k in 0..traj.n_steps() {
        for ch in 0..traj.system().n_controls() {
            acc += traj.averaged_dipole(ch, k) * c(field_velocity.values[(k, ch)] * traj.dt(), 0.0);
        }
    }
    herm_to_vec(&acc)
}

/// Eigen-decomposition helper: coefficients of a pure state in Theta's eigenbasis
/// together with the (ascending) Theta spectrum.
pub fn theta_basis_coefficients(psi: &DVector<C64>, theta: &CMat) -> (Vec<C64>, Vec<f64>) {
    let (vals, vecs) = hermitian_eigen(theta);
    let coeffs = vecs.adjoint() * psi;
    (coeffs.iter().copied().collect(), vals)
}
