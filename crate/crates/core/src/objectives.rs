//! Observable and gate objectives, the penalized cost, and their exact
//! field-space gradients and Hessians on the piecewise-constant grid.
//!
//! Gradients are Riemann-weighted: dPhi = sum_k g_k d eps_k dt. Hessian kernels
//! satisfy d^2 Phi = sum_{a,b} H_ab d eps_a d eps_b dt^2, with index a = k*m + c.

use crate::error::{Error, Result};
use crate::linalg::{
    c, hermitian_eigenvalues, is_hermitian, is_unitary, real_symmetric_eigen, trace, trace_prod,
    CMat, RMat, RVec,
};
use crate::quantum::{propagate, ControlField, ControlSystem, Trajectory};

/// Initial state and observable for Phi1 = Tr(U rho U† Theta).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSpec {
    rho0: CMat,
    theta: CMat,
}

impl ObservableSpec {
    pub fn new(rho0: CMat, theta: CMat) -> Result<Self> {
        let n = rho0.nrows();
        if !rho0.is_square() || theta.nrows() != n || theta.ncols() != n {
            return Err(Error::DimensionMismatch("rho0 and theta must be N x N".into()));
        }
        if !is_hermitian(&rho0, 1e-12) || !is_hermitian(&theta, 1e-12) {
            return Err(Error::InvalidInput("rho0 and theta must be Hermitian".into()));
        }
        if (trace(&rho0).re - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput("Tr rho0 must be 1".into()));
        }
        if hermitian_eigenvalues(&rho0)[0] < -1e-12 {
            return Err(Error::InvalidInput("rho0 must be positive semidefinite".into()));
        }
        let sym = |m: &CMat| (m + m.adjoint()).scale(0.5);
        Ok(Self {
            rho0: sym(&rho0),
            theta: sym(&theta),
        })
    }

    /// Pure initial state |psi><psi| (normalized internally).
    pub fn pure(psi: &nalgebra::DVector<crate::linalg::C64>, theta: CMat) -> Result<Self> {
        let nrm = psi.norm();
        if nrm == 0.0 {
            return Err(Error::InvalidInput("zero state vector".into()));
        }
        let v = psi / c(nrm, 0.0);
        Self::new(&v * v.adjoint(), theta)
    }

    pub fn rho0(&self) -> &CMat {
        &self.rho0
    }

    pub fn theta(&self) -> &CMat {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.rho0.nrows()
    }
}

/// Target unitary W for Phi2 = 2N - 2 Re Tr(W† U).
#[derive(Debug, Clone, PartialEq)]
pub struct GateSpec {
    w: CMat,
}

impl GateSpec {
    pub fn new(w: CMat) -> Result<Self> {
        let n = w.nrows();
        if !w.is_square() || !is_unitary(&w, 1e-10 * n as f64) {
            return Err(Error::InvalidInput("gate target must be unitary".into()));
        }
        Ok(Self { w })
    }

    pub fn w(&self) -> &CMat {
        &self.w
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }
}

/// Fluence penalty lambda * int eps^2 / S dt. The envelope is taken from the field
/// unless given here.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PenaltySpec {
    pub lambda: f64,
    pub shape: Option<Vec<f64>>,
}

impl PenaltySpec {
    pub fn new(lambda: f64, shape: Option<Vec<f64>>) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
        }
        if let Some(s) = &shape {
            if s.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidInput("penalty shape must be strictly positive".into()));
            }
        }
        Ok(Self { lambda, shape })
    }

    pub fn none() -> Self {
        Self::default()
    }

    fn shape_at(&self, field: &ControlField, k: usize) -> f64 {
        self.shape.as_ref().map_or_else(|| field.shape_at(k), |s| s[k])
    }

    /// lambda * int eps^2 / S dt.
    pub fn value(&self, field: &ControlField) -> Result<f64> {
        if let Some(s) = &self.shape {
            if s.len() != field.n_steps() {
                return Err(Error::DimensionMismatch("penalty shape length".into()));
            }
        }
        let dt = field.dt();
        let mut acc = 0.0;
        for k in 0..field.n_steps() {
            let s = self.shape_at(field, k);
            for ch in 0..field.n_controls() {
                acc += field.value(k, ch).powi(2) / s;
            }
        }
        Ok(self.lambda * acc * dt)
    }

    /// Functional gradient 2 lambda eps / S.
    pub fn gradient(&self, field: &ControlField) -> RMat {
        RMat::from_fn(field.n_steps(), field.n_controls(), |k, ch| {
            2.0 * self.lambda * field.value(k, ch) / self.shape_at(field, k)
        })
    }
}

/// Either objective; Phi1 is maximized, Phi2 minimized.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Observable(ObservableSpec),
    Gate(GateSpec),
}

impl Objective {
    pub fn dim(&self) -> usize {
        match self {
            Objective::Observable(s) => s.dim(),
            Objective::Gate(g) => g.dim(),
        }
    }

    pub fn value(&self, u: &CMat) -> Result<f64> {
        match self {
            Objective::Observable(s) => phi1(u, s),
            Objective::Gate(g) => phi2(u, g),
        }
    }

    pub fn gradient(&self, traj: &Trajectory) -> Result<FieldGradient> {
        match self {
            Objective::Observable(s) => grad_phi1_field(traj, s),
            Objective::Gate(g) => grad_phi2_field(traj, g),
        }
    }

    pub fn hessian(&self, traj: &Trajectory) -> Result<RMat> {
        match self {
            Objective::Observable(s) => hessian_phi1(traj, s),
            Objective::Gate(g) => hessian_phi2(traj, g),
        }
    }

    /// +1 for ascent objectives, -1 for descent objectives.
    pub fn orientation(&self) -> f64 {
        match self {
            Objective::Observable(_) => 1.0,
            Objective::Gate(_) => -1.0,
        }
    }
}

/// dPhi/d eps on the grid, K x m.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGradient {
    pub values: RMat,
}

impl FieldGradient {
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// L2 norm with the time weight, sqrt(int g^2 dt).
    pub fn l2_norm(&self, dt: f64) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * dt).sqrt()
    }

    /// Flattened time-major vector (index k*m + c).
    pub fn flatten(&self) -> RVec {
        let (k, m) = self.values.shape();
        RVec::from_fn(k * m, |i, _| self.values[(i / m, i % m)])
    }
}

fn check_dim(u: &CMat, n: usize) -> Result<()> {
    if u.nrows() != n || u.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "propagator is {}x{}, objective expects {n}x{n}",
            u.nrows(),
            u.ncols()
        )));
    }
    Ok(())
}

/// Tr(U rho U† Theta).
pub fn phi1(u: &CMat, spec: &ObservableSpec) -> Result<f64> {
    check_dim(u, spec.dim())?;
    let v = trace_prod(&(u * &spec.rho0 * u.adjoint()), &spec.theta);
    let scale = spec.theta.norm().max(1.0);
    if v.im.abs() > 1e-10 * scale {
        return Err(Error::InvalidInput(format!(
            "Phi1 has imaginary residue {:e}",
            v.im
        )));
    }
    Ok(v.re)
}

/// 2N - 2 Re Tr(W† U).
pub fn phi2(u: &CMat, spec: &GateSpec) -> Result<f64> {
    check_dim(u, spec.dim())?;
    let n = spec.dim() as f64;
    Ok(2.0 * n - 2.0 * trace_prod(&spec.w.adjoint(), u).re)
}

/// Penalized cost: Phi1 - penalty (maximize) or Phi2 + penalty (minimize).
pub fn cost_j(
    system: &ControlSystem,
    field: &ControlField,
    objective: &Objective,
    penalty: &PenaltySpec,
) -> Result<f64> {
    let traj = propagate(system, field)?;
    let phi = objective.value(traj.final_unitary())?;
    let p = penalty.value(field)?;
    Ok(match objective {
        Objective::Observable(_) => phi - p,
        Objective::Gate(_) => phi + p,
    })
}

/// Operator whose overlap with each averaged dipole gives the gradient:
/// g_{c,k} = Re Tr(avg_k(mu_c) X).
fn gradient_from_kernel(traj: &Trajectory, x: &CMat) -> FieldGradient {
    let (k_steps, m) = (traj.n_steps(), traj.system().n_controls());
    let mut values = RMat::zeros(k_steps, m);
    for k in 0..k_steps {
        for ch in 0..m {
            values[(k, ch)] = trace_prod(&traj.averaged_dipole(ch, k), x).re;
        }
    }
    FieldGradient { values }
}

fn heisenberg_theta(traj: &Trajectory, spec: &ObservableSpec) -> CMat {
    let u = traj.final_unitary();
    u.adjoint() * &spec.theta * u
}

/// dPhi1/d eps(t) = i Tr(avg mu(t) [rho, U† Theta U]).
pub fn grad_phi1_field(traj: &Trajectory, spec: &ObservableSpec) -> Result<FieldGradient> {
    check_dim(traj.final_unitary(), spec.dim())?;
    let th = heisenberg_theta(traj, spec);
    let comm = &spec.rho0 * &th - &th * &spec.rho0;
    Ok(gradient_from_kernel(traj, &(comm * c(0.0, 1.0))))
}

/// dPhi2/d eps(t) = 2 Im Tr(W† U(T) avg mu(t)).
pub fn grad_phi2_field(traj: &Trajectory, spec: &GateSpec) -> Result<FieldGradient> {
    check_dim(traj.final_unitary(), spec.dim())?;
    let y = spec.w.adjoint() * traj.final_unitary();
    // 2 Im Tr(Y M) = Re Tr(M (-i)(Y - Y†)) for Hermitian M.
    let x = (&y - y.adjoint()) * c(0.0, -1.0);
    Ok(gradient_from_kernel(traj, &x))
}

/// Second derivative of exp(-i H_k dt) with respect to eps_{c1}, eps_{c2} on the
/// same interval, mapped into the frame U(t_{k+1})† (.) U(t_k).
fn same_interval_second(traj: &Trajectory, k: usize, c1: usize, c2: usize) -> CMat {
    let n = traj.dim();
    let dt = traj.dt();
    let sys = traj.system();
    let h = sys.hamiltonian(&traj.field().row(k));
    let x = h * c(0.0, -dt);
    let y1 = sys.dipole(c1) * c(0.0, dt);
    let y2 = sys.dipole(c2) * c(0.0, dt);
    let block = |a: &CMat, b: &CMat| -> CMat {
        let mut m = CMat::zeros(3 * n, 3 * n);
        for i in 0..3 {
            m.view_mut((i * n, i * n), (n, n)).copy_from(&x);
        }
        m.view_mut((0, n), (n, n)).copy_from(a);
        m.view_mut((n, 2 * n), (n, n)).copy_from(b);
        m.exp().view((0, 2 * n), (n, n)).into_owned()
    };
    let d2 = if c1 == c2 {
        block(&y1, &y1) * c(2.0, 0.0)
    } else {
        block(&y1, &y2) + block(&y2, &y1)
    };
    traj.unitary(k + 1).adjoint() * d2 * traj.unitary(k)
}

/// Shared Hessian assembly. With d^2 U(T) = U(T) Q_ab, the objective-specific
/// pieces are `first(Q)` = the contribution linear in the second derivative and
/// `cross(a, b)` = the product-of-first-derivatives term (both already / dt^2).
fn assemble_hessian(
    traj: &Trajectory,
    linear: &CMat,
    cross: Option<(&CMat, &CMat)>,
    diagonal_only: bool,
) -> RMat {
    let k_steps = traj.n_steps();
    let m = traj.system().n_controls();
    let dim = k_steps * m;
    let dt = traj.dt();
    let dt2 = dt * dt;
    let mu: Vec<CMat> = (0..dim).map(|a| traj.averaged_dipole(a % m, a / m)).collect();
    // Off-interval: Q_ab = -dt^2 M_a M_b for a later than b, so
    // linear term = Re Tr(Q L) / dt^2 = -Re Tr(M_a (M_b L)).
    let ml: Vec<CMat> = mu.iter().map(|mb| mb * linear).collect();
    let cr: Option<Vec<CMat>> = cross.map(|(left, right)| mu.iter().map(|mb| left * mb * right).collect());
    let mut h = RMat::zeros(dim, dim);
    for a in 0..dim {
        let ka = a / m;
        let b_range: Box<dyn Iterator<Item = usize>> = if diagonal_only {
            Box::new(std::iter::once(a))
        } else {
            Box::new(0..=a)
        };
        for b in b_range {
            let kb = b / m;
            let lin = if ka == kb {
                let q = same_interval_second(traj, ka, a % m, b % m);
                trace_prod(&q, linear).re / dt2
            } else {
                -trace_prod(&mu[a], &ml[b]).re
            };
            let cross_term = cr.as_ref().map_or(0.0, |cr| trace_prod(&mu[a], &cr[b]).re);
            let v = lin + cross_term;
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Field-space Hessian kernel of Phi1, (K m) x (K m), symmetrized.
pub fn hessian_phi1(traj: &Trajectory, spec: &ObservableSpec) -> Result<RMat> {
    check_dim(traj.final_unitary(), spec.dim())?;
    let th = heisenberg_theta(traj, spec);
    // d^2 Phi1 = 2 Re Tr(Q rho Th) + 2 dt^2 Re Tr(M_a rho M_b Th).
    let linear = (&spec.rho0 * &th) * c(2.0, 0.0);
    let rho2 = &spec.rho0 * c(2.0, 0.0);
    Ok(assemble_hessian(traj, &linear, Some((&rho2, &th)), false))
}

/// Field-space Hessian kernel of Phi2, symmetrized.
pub fn hessian_phi2(traj: &Trajectory, spec: &GateSpec) -> Result<RMat> {
    check_dim(traj.final_unitary(), spec.dim())?;
    // d^2 Phi2 = -2 Re Tr(W† U Q).
    let linear = (spec.w.adjoint() * traj.final_unitary()) * c(-2.0, 0.0);
    Ok(assemble_hessian(traj, &linear, None, false))
}

/// Diagonal of the Phi1 Hessian kernel only (cheap robustness monitor).
pub fn hessian_phi1_diagonal(traj: &Trajectory, spec: &ObservableSpec) -> Result<RVec> {
    check_dim(traj.final_unitary(), spec.dim())?;
    let th = heisenberg_theta(traj, spec);
    let linear = (&spec.rho0 * &th) * c(2.0, 0.0);
    let rho2 = &spec.rho0 * c(2.0, 0.0);
    let h = assemble_hessian(traj, &linear, Some((&rho2, &th)), true);
    Ok(h.diagonal())
}

/// Trace of the Hessian viewed as an integral operator: dt * sum_a H_aa.
pub fn hessian_phi1_trace(traj: &Trajectory, spec: &ObservableSpec) -> Result<f64> {
    Ok(hessian_phi1_diagonal(traj, spec)?.sum() * traj.dt())
}

/// omega^T H omega with the double-integral weight dt^2.
pub fn hqf(hessian: &RMat, omega: &RVec, dt: f64) -> Result<f64> {
    if hessian.nrows() != omega.len() || !hessian.is_square() {
        return Err(Error::DimensionMismatch("hqf shape".into()));
    }
    Ok(dt * dt * omega.dot(&(hessian * omega)))
}

/// Eigenvalues of the Hessian as an integral operator (eigenvalues of dt * H),
/// ascending, with eigenfunctions normalized so that int omega^2 dt = 1.
pub fn hessian_operator_eigen(hessian: &RMat, dt: f64) -> (Vec<f64>, RMat) {
    let (vals, vecs) = real_symmetric_eigen(&(hessian * dt));
    (vals, vecs / dt.sqrt())
}

/// Inertia of a symmetric matrix with zero threshold tau = rel * max|eig|:
/// returns (positive, zero, negative).
pub fn signature_counts(eigs: &[f64], rel: f64) -> (usize, usize, usize) {
    let tau = rel * eigs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let pos = eigs.iter().filter(|&&v| v > tau).count();
    let neg = eigs.iter().filter(|&&v| v < -tau).count();
    (pos, eigs.len() - pos - neg, neg)
}

/// Default relative zero threshold for Hessian eigenvalue counts.
pub const HESSIAN_ZERO_TOL: f64 = 1e-8;
