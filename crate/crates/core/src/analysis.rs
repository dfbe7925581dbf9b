//! Controllability rank, analytic optimal-control oracles, the SU(2)
//! abnormal extremal, and the Kraus lift of open-system landscapes.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{
    c, herm_to_vec, hermitian_eigenvalues, hermitian_part, identity, is_hermitian, kron, sqrt_psd, trace,
    trace_prod, CMat, RMat, RVec,
};
use crate::quantum::{ControlField, ControlSystem};
use crate::topology::{enumerate_from_spectra, SpectrumData, ENUMERATION_CAP};

/// Dimension of the dynamical Lie algebra generated by iH0 and i mu_k.
#[derive(Debug, Clone, PartialEq)]
pub struct LieRankReport {
    pub dimension_found: usize,
    pub ambient: usize,
    pub controllable: bool,
    /// Dimension of the algebra intersected with su(N).
    pub su_dimension: usize,
    pub controllable_up_to_phase: bool,
    /// Commutator nesting depth at which the last new direction appeared.
    pub generator_depth: usize,
    /// False when the depth cap stopped the search before closure.
    pub closed: bool,
}

const LIE_REL_TOL: f64 = 1e-10;

/// Adds `v` to the orthonormal set if its residual exceeds the relative
/// threshold; returns the new unit vector.
fn try_extend(basis: &mut Vec<RVec>, v: RVec) -> Option<RVec> {
    let scale = v.norm();
    if scale == 0.0 {
        return None;
    }
    let mut r = v;
    // Two passes of classical Gram-Schmidt for stability.
    for _ in 0..2 {
        for q in basis.iter() {
            let p = q.dot(&r);
            r -= q * p;
        }
    }
    let nrm = r.norm();
    if nrm > LIE_REL_TOL * scale {
        let q = r / nrm;
        basis.push(q.clone());
        Some(q)
    } else {
        None
    }
}

/// Breadth-first closure of {H0, mu_k} under X, Y -> i[X, Y] (the Hermitian
/// image of the skew-Hermitian bracket).
pub fn lie_rank(system: &ControlSystem, depth_cap: usize) -> Result<LieRankReport> {
    if depth_cap == 0 {
        return Err(Error::InvalidInput("depth_cap must be >= 1".into()));
    }
    let n = system.dim();
    let ambient = n * n;
    let mut gens: Vec<CMat> = vec![system.h0().clone()];
    gens.extend(system.dipoles().iter().cloned());
    let mut basis: Vec<RVec> = Vec::new();
    let mut elements: Vec<CMat> = Vec::new();
    let mut frontier: Vec<CMat> = Vec::new();
    for g in &gens {
        if let Some(q) = try_extend(&mut basis, herm_to_vec(g)) {
            let m = crate::linalg::vec_to_herm(&q, n);
            elements.push(m.clone());
            frontier.push(m);
        }
    }
    let gens_n: Vec<CMat> = elements.clone();
    let mut depth = 0;
    let mut level = 0;
    let mut closed = false;
    while level < depth_cap {
        level += 1;
        let mut next = Vec::new();
        for x in &frontier {
            for g in &gens_n {
                if basis.len() == ambient {
                    break;
                }
                let br = hermitian_part(&((x * g - g * x) * c(0.0, 1.0)));
                if let Some(q) = try_extend(&mut basis, herm_to_vec(&br)) {
                    next.push(crate::linalg::vec_to_herm(&q, n));
                }
            }
        }
        if next.is_empty() {
            closed = true;
            break;
        }
        depth = level;
        frontier = next;
        if basis.len() == ambient {
            closed = true;
            break;
        }
    }
    let dimension_found = basis.len();
    // The trace functional restricted to the algebra: if it is nonzero the
    // traceless part has one dimension less.
    let id = herm_to_vec(&identity(n));
    let has_trace = basis.iter().any(|q| q.dot(&id).abs() > 1e-9);
    let su_dimension = if has_trace { dimension_found - 1 } else { dimension_found };
    Ok(LieRankReport {
        dimension_found,
        ambient,
        controllable: dimension_found == ambient,
        su_dimension,
        controllable_up_to_phase: su_dimension == ambient - 1,
        generator_depth: depth,
        closed,
    })
}

/// Constant field of the SU(2) abnormal extremal for H = H_d - mu eps: the
/// value making the traceless part of H orthogonal to that of mu, i.e.
/// Tr(H_d mu) / Tr(mu mu) on traceless parts.
pub fn abnormal_extremal_su2(h_d: &CMat, mu: &CMat) -> Result<f64> {
    if h_d.nrows() != 2 || h_d.ncols() != 2 || mu.nrows() != 2 || mu.ncols() != 2 {
        return Err(Error::DimensionMismatch("abnormal extremal formula is for N = 2".into()));
    }
    if !is_hermitian(h_d, 1e-12) || !is_hermitian(mu, 1e-12) {
        return Err(Error::InvalidInput("operators must be Hermitian".into()));
    }
    let tl = |a: &CMat| a - identity(2) * (trace(a) * 0.5);
    let (h0, m0) = (tl(h_d), tl(mu));
    let den = trace_prod(&m0, &m0).re;
    if den.abs() < 1e-300 {
        return Err(Error::InvalidInput("Tr(mu mu) vanishes".into()));
    }
    Ok(trace_prod(&h0, &m0).re / den)
}

/// Sampled optimal path of an oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTrajectory {
    pub t: Vec<f64>,
    /// Rows of (theta, phi, p_theta, p_phi).
    pub states: Vec<[f64; 4]>,
    /// Controls (eps1, eps2) at each sample.
    pub controls: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub value: f64,
    pub trajectory: Option<OracleTrajectory>,
    pub parameters: BTreeMap<String, f64>,
}

fn reduced_rhs(x: &[f64; 4]) -> [f64; 4] {
    let [th, _, pt, pp] = *x;
    let ta = th.tan();
    [pt, pp * ta * ta, -pp * pp * ta * (1.0 + ta * ta), 0.0]
}

fn rk4_reduced(x0: [f64; 4], t_total: f64, steps: usize) -> Vec<[f64; 4]> {
    let h = t_total / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut x = x0;
    out.push(x);
    let add = |a: &[f64; 4], b: &[f64; 4], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2], a[3] + s * b[3]];
    for _ in 0..steps {
        let k1 = reduced_rhs(&x);
        let k2 = reduced_rhs(&add(&x, &k1, h / 2.0));
        let k3 = reduced_rhs(&add(&x, &k2, h / 2.0));
        let k4 = reduced_rhs(&add(&x, &k3, h));
        for i in 0..4 {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push(x);
    }
    out
}

/// (eps1, eps2) from the reduced state: rotation by phi of
/// (v1, v2) = (p_theta, p_phi tan(theta)).
fn reduced_controls(x: &[f64; 4]) -> [f64; 2] {
    let [th, ph, pt, pp] = *x;
    let (v1, v2) = (pt, pp * th.tan());
    [v1 * ph.cos() + v2 * ph.sin(), -v1 * ph.sin() + v2 * ph.cos()]
}

const SHOOT_STEPS: usize = 4000;

fn shoot(p: [f64; 2], t_total: f64) -> [f64; 2] {
    let end = *rk4_reduced([0.0, 0.0, p[0], p[1]], t_total, SHOOT_STEPS).last().unwrap();
    [end[0], end[1] - std::f64::consts::FRAC_PI_2]
}

/// Minimal-fluence transfer |1> -> |3> in the resonant three-level system
/// H = [[0, e1, 0], [e1, 0, e2], [0, e2, 0]] over time T. The value is
/// 3 pi^2 / (4T); the path is found by shooting on (p_theta(0), p_phi).
pub fn three_level_oracle(t_total: f64) -> Result<OracleResult> {
    if !(t_total > 0.0) || !t_total.is_finite() {
        return Err(Error::InvalidInput("T must be positive".into()));
    }
    let mut p = [2.5 / t_total, 1.2 / t_total];
    let mut r = shoot(p, t_total);
    let mut iterations = 0;
    while r[0].hypot(r[1]) > 1e-11 {
        if iterations == 60 {
            return Err(Error::NoConvergence {
                iterations,
                residual: r[0].hypot(r[1]),
            });
        }
        iterations += 1;
        let h = 1e-7 / t_total;
        let ra = shoot([p[0] + h, p[1]], t_total);
        let rb = shoot([p[0], p[1] + h], t_total);
        let j = [[(ra[0] - r[0]) / h, (rb[0] - r[0]) / h], [(ra[1] - r[1]) / h, (rb[1] - r[1]) / h]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 {
            return Err(Error::NoConvergence {
                iterations,
                residual: r[0].hypot(r[1]),
            });
        }
        let dx = [(j[1][1] * r[0] - j[0][1] * r[1]) / det, (-j[1][0] * r[0] + j[0][0] * r[1]) / det];
        // Damped Newton: halve until the residual drops.
        let mut lam = 1.0;
        loop {
            let cand = [p[0] - lam * dx[0], p[1] - lam * dx[1]];
            let rc = shoot(cand, t_total);
            if rc[0].hypot(rc[1]) < r[0].hypot(r[1]) || lam < 1e-4 {
                p = cand;
                r = rc;
                break;
            }
            lam *= 0.5;
        }
    }
    let states = rk4_reduced([0.0, 0.0, p[0], p[1]], t_total, SHOOT_STEPS);
    let h = t_total / SHOOT_STEPS as f64;
    let traj = OracleTrajectory {
        t: (0..=SHOOT_STEPS).map(|i| i as f64 * h).collect(),
        controls: states.iter().map(reduced_controls).collect(),
        states,
    };
    let mut parameters = BTreeMap::new();
    parameters.insert("T".to_string(), t_total);
    parameters.insert("p_theta0".to_string(), p[0]);
    parameters.insert("p_phi".to_string(), p[1]);
    parameters.insert("shooting_residual".to_string(), r[0].hypot(r[1]));
    Ok(OracleResult {
        value: 0.75 * std::f64::consts::PI.powi(2) / t_total,
        trajectory: Some(traj),
        parameters,
    })
}

/// The resonant three-level system of `three_level_oracle` in the
/// H = H0 - sum mu_c eps_c convention (dipoles carry a minus sign).
pub fn three_level_system(t_total: f64) -> Result<ControlSystem> {
    let mut m1 = CMat::zeros(3, 3);
    m1[(0, 1)] = c(-1.0, 0.0);
    m1[(1, 0)] = c(-1.0, 0.0);
    let mut m2 = CMat::zeros(3, 3);
    m2[(1, 2)] = c(-1.0, 0.0);
    m2[(2, 1)] = c(-1.0, 0.0);
    ControlSystem::new(CMat::zeros(3, 3), vec![m1, m2], t_total)
}

/// Piecewise-constant field sampling the oracle controls at interval midpoints.
pub fn three_level_oracle_field(result: &OracleResult, k_steps: usize) -> Result<ControlField> {
    let t_total = *result
        .parameters
        .get("T")
        .ok_or_else(|| Error::InvalidInput("not a three-level oracle result".into()))?;
    let (pt, pp) = (result.parameters["p_theta0"], result.parameters["p_phi"]);
    let sub = 8;
    let states = rk4_reduced([0.0, 0.0, pt, pp], t_total, 2 * k_steps * sub);
    let mut values = RMat::zeros(k_steps, 2);
    for k in 0..k_steps {
        let u = reduced_controls(&states[(2 * k + 1) * sub]);
        values[(k, 0)] = u[0];
        values[(k, 1)] = u[1];
    }
    ControlField::new(t_total, values)
}

/// Minimum time to produce exp(-i theta I1z I2z I3z) with couplings
/// J12 = J23 = J: t* = sqrt(kappa (4 - kappa)) / (2J), kappa = theta / 2pi.
/// The optimal adjoint control sweeps phase at rate beta / T with
/// beta = pi (2 - kappa).
pub fn trilinear_min_time(theta: f64, j_coupling: f64) -> Result<OracleResult> {
    use std::f64::consts::PI;
    if !(0.0..=4.0 * PI).contains(&theta) {
        return Err(Error::InvalidInput(format!("theta = {theta} outside [0, 4 pi]")));
    }
    if !(j_coupling > 0.0) {
        return Err(Error::InvalidInput("J must be positive".into()));
    }
    let kappa = theta / (2.0 * PI);
    let value = (kappa * (4.0 - kappa)).max(0.0).sqrt() / (2.0 * j_coupling);
    let mut parameters = BTreeMap::new();
    parameters.insert("theta".to_string(), theta);
    parameters.insert("J".to_string(), j_coupling);
    parameters.insert("kappa".to_string(), kappa);
    parameters.insert("beta".to_string(), PI * (2.0 - kappa));
    parameters.insert("amplitude".to_string(), 2.0 * PI * j_coupling);
    Ok(OracleResult {
        value,
        trajectory: None,
        parameters,
    })
}

/// Spin-1/2 operators (I_x, I_y, I_z).
pub fn spin_half() -> [CMat; 3] {
    let h = 0.5;
    [
        CMat::from_row_slice(2, 2, &[c(0., 0.), c(h, 0.), c(h, 0.), c(0., 0.)]),
        CMat::from_row_slice(2, 2, &[c(0., 0.), c(0., -h), c(0., h), c(0., 0.)]),
        CMat::from_row_slice(2, 2, &[c(h, 0.), c(0., 0.), c(0., 0.), c(-h, 0.)]),
    ]
}

/// Adjoint control Hamiltonian of the trilinear problem at time t (three
/// spins, spin 1 the most significant factor):
/// 2 pi J [(I1z I2x + I2x I3z) cos(beta t / T) - (I1z I2y + I2y I3z) sin(beta t / T)].
pub fn trilinear_hamiltonian(result: &OracleResult, t: f64) -> CMat {
    let [ix, iy, iz] = spin_half();
    let id = identity(2);
    let k3 = |a: &CMat, b: &CMat, d: &CMat| kron(&kron(a, b), d);
    let a = k3(&iz, &ix, &id) + k3(&id, &ix, &iz);
    let b = k3(&iz, &iy, &id) + k3(&id, &iy, &iz);
    let amp = result.parameters["amplitude"];
    let beta = result.parameters["beta"];
    let w = if result.value > 0.0 { beta * t / result.value } else { 0.0 };
    (a * c(w.cos(), 0.0) - b * c(w.sin(), 0.0)) * c(amp, 0.0)
}

/// Two-spin local conjugators k_y^- (sign = -1) and k_y^+ (sign = +1):
/// exp(sign i pi/2 I_y) exp(-i pi/2 S_y).
pub fn ky_conjugator(sign: f64) -> CMat {
    let [_, iy, _] = spin_half();
    let id = identity(2);
    let a = crate::linalg::expm_hermitian(&kron(&iy, &id), -sign * std::f64::consts::FRAC_PI_2);
    let b = crate::linalg::expm_hermitian(&kron(&id, &iy), std::f64::consts::FRAC_PI_2);
    a * b
}

/// System state, environment state and observable of an open problem.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausLift {
    pub rho_s: CMat,
    pub rho_e: CMat,
    pub theta: CMat,
}

fn check_density(rho: &CMat, what: &str) -> Result<()> {
    if rho.nrows() != rho.ncols() || !is_hermitian(rho, 1e-10) {
        return Err(Error::InvalidInput(format!("{what} must be Hermitian")));
    }
    if (trace(rho).re - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!("{what} must have unit trace")));
    }
    if hermitian_eigenvalues(rho)[0] < -1e-10 {
        return Err(Error::InvalidInput(format!("{what} must be positive semidefinite")));
    }
    Ok(())
}

impl KrausLift {
    pub fn new(rho_s: CMat, rho_e: CMat, theta: CMat) -> Result<Self> {
        check_density(&rho_s, "rho_s")?;
        check_density(&rho_e, "rho_e")?;
        if theta.nrows() != rho_s.nrows() || !is_hermitian(&theta, 1e-10) {
            return Err(Error::InvalidInput("theta must be Hermitian and match rho_s".into()));
        }
        Ok(Self { rho_s, rho_e, theta })
    }

    pub fn system_dim(&self) -> usize {
        self.rho_s.nrows()
    }

    pub fn env_dim(&self) -> usize {
        self.rho_e.nrows()
    }

    pub fn lifted_dim(&self) -> usize {
        self.system_dim() * self.env_dim()
    }

    /// rho_s (x) rho_e.
    pub fn lifted_state(&self) -> CMat {
        kron(&self.rho_s, &self.rho_e)
    }

    /// Theta (x) I.
    pub fn lifted_observable(&self) -> CMat {
        kron(&self.theta, &identity(self.env_dim()))
    }

    fn check(&self, u: &CMat) -> Result<()> {
        if u.nrows() != self.lifted_dim() || u.ncols() != self.lifted_dim() {
            return Err(Error::DimensionMismatch(format!(
                "lifted unitary must be {0}x{0}",
                self.lifted_dim()
            )));
        }
        Ok(())
    }
}

/// Kraus operators K_ab = (I (x) <a|) U (I (x) sqrt(rho_e)|b>), listed with
/// the environment output index a varying slowest.
pub fn kraus_operators(lift: &KrausLift, u: &CMat) -> Result<Vec<CMat>> {
    lift.check(u)?;
    let (n, l) = (lift.system_dim(), lift.env_dim());
    let k = u * kron(&identity(n), &sqrt_psd(&lift.rho_e));
    let mut out = Vec::with_capacity(l * l);
    for a in 0..l {
        for b in 0..l {
            out.push(CMat::from_fn(n, n, |i, j| k[(i * l + a, j * l + b)]));
        }
    }
    Ok(out)
}

/// Tr(U P U† Theta') with P = rho_s (x) rho_e and Theta' = Theta (x) I.
pub fn kraus_lift_objective(lift: &KrausLift, u: &CMat) -> Result<f64> {
    lift.check(u)?;
    let rho = u * lift.lifted_state() * u.adjoint();
    Ok(trace_prod(&rho, &lift.lifted_observable()).re)
}

/// The same objective through the Kraus map: Tr(sum K rho_s K† Theta).
pub fn kraus_map_objective(lift: &KrausLift, u: &CMat) -> Result<f64> {
    let n = lift.system_dim();
    let mut out = CMat::zeros(n, n);
    for k in kraus_operators(lift, u)? {
        out += &k * &lift.rho_s * k.adjoint();
    }
    Ok(trace_prod(&out, &lift.theta).re)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpenExtrema {
    pub max: f64,
    pub min: f64,
    /// True when enumeration over the lifted critical manifolds confirmed both.
    pub cross_checked: bool,
}

/// Extremes of Tr(U P U† Theta') over U(lambda_E N): sorted and anti-sorted
/// pairing of the lifted spectra.
pub fn open_landscape_extrema(lift: &KrausLift) -> Result<OpenExtrema> {
    let mut p = hermitian_eigenvalues(&lift.lifted_state());
    let mut q = hermitian_eigenvalues(&lift.lifted_observable());
    p.sort_by(|a, b| b.total_cmp(a));
    q.sort_by(|a, b| b.total_cmp(a));
    let max: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
    let min: f64 = p.iter().zip(q.iter().rev()).map(|(a, b)| a * b).sum();
    let mut cross_checked = false;
    if lift.lifted_dim() <= ENUMERATION_CAP {
        let spectra = SpectrumData::from_eigenvalues(&p, &q)?;
        let recs = enumerate_from_spectra(&spectra)?;
        let emax = recs.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
        let emin = recs.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
        let tol = 1e-10 * (1.0 + max.abs());
        if (emax - max).abs() > tol || (emin - min).abs() > tol {
            return Err(Error::InvalidInput(format!(
                "enumeration disagrees with pairing: [{emin}, {emax}] vs [{min}, {max}]"
            )));
        }
        cross_checked = true;
    }
    Ok(OpenExtrema { max, min, cross_checked })
}
