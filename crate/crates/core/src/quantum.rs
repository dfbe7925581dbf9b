//! Systems, fields, piecewise-constant propagation, unitary logarithms and the
//! rotating-wave reduction.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{
    c, check_finite, hermitian_eigen, identity, is_unitary, phi_imag, unitary_eigen, CMat, RMat,
    C64,
};

const HERMITIAN_TOL: f64 = 1e-12;

/// Internal Hamiltonian, dipole operators and final time. H = H0 - sum_c mu_c eps_c.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSystem {
    h0: CMat,
    dipoles: Vec<CMat>,
    horizon: f64,
}

fn max_antihermitian(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

impl ControlSystem {
    pub fn new(h0: CMat, dipoles: Vec<CMat>, horizon: f64) -> Result<Self> {
        let n = h0.nrows();
        if !h0.is_square() || n < 2 {
            return Err(Error::InvalidInput(format!(
                "h0 must be square with dim >= 2, got {}x{}",
                h0.nrows(),
                h0.ncols()
            )));
        }
        if dipoles.is_empty() {
            return Err(Error::InvalidInput("at least one dipole required".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
        }
        check_finite(&h0, "h0")?;
        if max_antihermitian(&h0) > HERMITIAN_TOL {
            return Err(Error::InvalidInput("h0 is not Hermitian".into()));
        }
        for (i, mu) in dipoles.iter().enumerate() {
            if mu.nrows() != n || mu.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "dipole {i} is {}x{}, expected {n}x{n}",
                    mu.nrows(),
                    mu.ncols()
                )));
            }
            check_finite(mu, "dipole")?;
            if max_antihermitian(mu) > HERMITIAN_TOL {
                return Err(Error::InvalidInput(format!("dipole {i} is not Hermitian")));
            }
        }
        let sym = |m: &CMat| (m + m.adjoint()).scale(0.5);
        Ok(Self {
            h0: sym(&h0),
            dipoles: dipoles.iter().map(sym).collect(),
            horizon,
        })
    }

    pub fn dim(&self) -> usize {
        self.h0.nrows()
    }

    pub fn n_controls(&self) -> usize {
        self.dipoles.len()
    }

    pub fn h0(&self) -> &CMat {
        &self.h0
    }

    pub fn dipoles(&self) -> &[CMat] {
        &self.dipoles
    }

    pub fn dipole(&self, c: usize) -> &CMat {
        &self.dipoles[c]
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::new(self.h0.clone(), self.dipoles.clone(), horizon)
    }

    /// H0 - sum_c mu_c eps_c.
    pub fn hamiltonian(&self, eps: &[f64]) -> CMat {
        let mut h = self.h0.clone();
        for (mu, &e) in self.dipoles.iter().zip(eps) {
            h -= mu * c(e, 0.0);
        }
        h
    }

    /// True when every dipole is traceless, so the global phase of U(T) is not steerable.
    pub fn phase_locked(&self) -> bool {
        self.dipoles
            .iter()
            .all(|mu| crate::linalg::trace(mu).norm() < 1e-12 * (1.0 + mu.norm()))
    }
}

/// Piecewise-constant multi-channel field on a uniform grid over [0, T].
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    horizon: f64,
    values: RMat,
    shape: Option<Vec<f64>>,
}

impl ControlField {
    /// `values` is K x m: row k holds the channel amplitudes on interval k.
    pub fn new(horizon: f64, values: RMat) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
        }
        if values.nrows() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 intervals, got {}",
                values.nrows()
            )));
        }
        if values.ncols() < 1 {
            return Err(Error::InvalidInput("need at least one channel".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field values"));
        }
        Ok(Self {
            horizon,
            values,
            shape: None,
        })
    }

    pub fn zeros(horizon: f64, steps: usize, channels: usize) -> Result<Self> {
        Self::new(horizon, RMat::zeros(steps, channels))
    }

    pub fn constant(horizon: f64, steps: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(horizon, RMat::from_element(steps, channels, value))
    }

    /// Samples `f(t, channel)` at interval midpoints.
    pub fn from_fn(
        horizon: f64,
        steps: usize,
        channels: usize,
        f: impl Fn(f64, usize) -> f64,
    ) -> Result<Self> {
        let dt = horizon / steps as f64;
        Self::new(
            horizon,
            RMat::from_fn(steps, channels, |k, ch| f((k as f64 + 0.5) * dt, ch)),
        )
    }

    /// Attaches an envelope S(t) > 0, one value per interval.
    pub fn with_shape(mut self, shape: Vec<f64>) -> Result<Self> {
        if shape.len() != self.n_steps() {
            return Err(Error::DimensionMismatch(format!(
                "shape has {} entries, field has {} intervals",
                shape.len(),
                self.n_steps()
            )));
        }
        if shape.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidInput("shape must be strictly positive".into()));
        }
        self.shape = Some(shape);
        Ok(self)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_controls(&self) -> usize {
        self.values.ncols()
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps() as f64
    }

    pub fn values(&self) -> &RMat {
        &self.values
    }

    /// Replaces the amplitudes, keeping grid and shape.
    pub fn with_values(&self, values: RMat) -> Result<Self> {
        if values.shape() != self.values.shape() {
            return Err(Error::DimensionMismatch("field value shape changed".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field values"));
        }
        Ok(Self {
            horizon: self.horizon,
            values,
            shape: self.shape.clone(),
        })
    }

    pub fn value(&self, k: usize, channel: usize) -> f64 {
        self.values[(k, channel)]
    }

    pub fn row(&self, k: usize) -> Vec<f64> {
        self.values.row(k).iter().copied().collect()
    }

    pub fn shape(&self) -> Option<&[f64]> {
        self.shape.as_deref()
    }

    pub fn shape_at(&self, k: usize) -> f64 {
        self.shape.as_ref().map_or(1.0, |s| s[k])
    }

    pub fn grid(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..=self.n_steps()).map(|k| k as f64 * dt).collect()
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dt()
    }

    /// Integrated squared field summed over channels.
    pub fn fluence(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.dt()
    }

    /// Integral of eps^2 / S summed over channels.
    pub fn weighted_fluence(&self) -> f64 {
        let dt = self.dt();
        let mut acc = 0.0;
        for k in 0..self.n_steps() {
            let s = self.shape_at(k);
            for ch in 0..self.n_controls() {
                acc += self.values[(k, ch)].powi(2) / s;
            }
        }
        acc * dt
    }
}

/// A propagator U(t) together with its time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryPropagator {
    pub matrix: CMat,
    pub time: f64,
}

impl UnitaryPropagator {
    pub fn new(matrix: CMat, time: f64) -> Result<Self> {
        let n = matrix.nrows();
        if !is_unitary(&matrix, 1e-9 * n as f64) {
            return Err(Error::InvalidInput("matrix is not unitary".into()));
        }
        Ok(Self { matrix, time })
    }
}

#[derive(Debug, Clone)]
struct StepSpectrum {
    energies: Vec<f64>,
    basis: CMat,
}

/// Propagators on every grid point plus the per-interval spectral data needed
/// for exact discrete derivatives.
#[derive(Debug, Clone)]
pub struct Trajectory {
    system: ControlSystem,
    field: ControlField,
    propagators: Vec<CMat>,
    steps: Vec<StepSpectrum>,
}

impl Trajectory {
    pub fn system(&self) -> &ControlSystem {
        &self.system
    }

    pub fn field(&self) -> &ControlField {
        &self.field
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn dt(&self) -> f64 {
        self.field.dt()
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    /// U(t_k), k = 0..=K.
    pub fn unitary(&self, k: usize) -> &CMat {
        &self.propagators[k]
    }

    pub fn final_unitary(&self) -> &CMat {
        self.propagators.last().expect("non-empty trajectory")
    }

    pub fn propagators(&self) -> Vec<UnitaryPropagator> {
        let dt = self.dt();
        self.propagators
            .iter()
            .enumerate()
            .map(|(k, u)| UnitaryPropagator {
                matrix: u.clone(),
                time: k as f64 * dt,
            })
            .collect()
    }

    /// exp(-i H_k dt) for interval k.
    pub fn step_unitary(&self, k: usize) -> CMat {
        let st = &self.steps[k];
        let dt = self.dt();
        crate::linalg::spectral(&st.energies, &st.basis, |e| C64::from_polar(1.0, -e * dt))
    }

    /// Eigen-decomposition of H_k.
    pub fn step_spectrum(&self, k: usize) -> (&[f64], &CMat) {
        (&self.steps[k].energies, &self.steps[k].basis)
    }

    /// Interval average of U(t)† A U(t) over interval k, computed exactly for the
    /// piecewise-constant Hamiltonian. This is the kernel of the discrete
    /// derivative: dU(T)/d eps_{c,k} = i dt U(T) avg_k(mu_c).
    pub fn averaged_operator(&self, op: &CMat, k: usize) -> CMat {
        let st = &self.steps[k];
        let dt = self.dt();
        let n = self.dim();
        let w = st.basis.adjoint() * &self.propagators[k];
        let mut inner = st.basis.adjoint() * op * &st.basis;
        for a in 0..n {
            for b in 0..n {
                inner[(a, b)] *= phi_imag((st.energies[a] - st.energies[b]) * dt);
            }
        }
        let m = w.adjoint() * inner * w;
        (&m + m.adjoint()).scale(0.5)
    }

    pub fn averaged_dipole(&self, channel: usize, k: usize) -> CMat {
        self.averaged_operator(&self.system.dipoles[channel], k)
    }

    /// All averaged dipoles, indexed [k][channel].
    pub fn averaged_dipoles(&self) -> Vec<Vec<CMat>> {
        (0..self.n_steps())
            .map(|k| {
                (0..self.system.n_controls())
                    .map(|ch| self.averaged_dipole(ch, k))
                    .collect()
            })
            .collect()
    }
}

/// Propagates U(t_{k+1}) = exp(-i H_k dt) U(t_k) from U(0) = I.
pub fn propagate(system: &ControlSystem, field: &ControlField) -> Result<Trajectory> {
    if field.n_controls() != system.n_controls() {
        return Err(Error::DimensionMismatch(format!(
            "field has {} channels, system has {} dipoles",
            field.n_controls(),
            system.n_controls()
        )));
    }
    if (field.horizon() - system.horizon()).abs() > 1e-12 * system.horizon().max(1.0) {
        return Err(Error::DimensionMismatch(format!(
            "field horizon {} differs from system horizon {}",
            field.horizon(),
            system.horizon()
        )));
    }
    let n = system.dim();
    let dt = field.dt();
    let mut propagators = Vec::with_capacity(field.n_steps() + 1);
    let mut steps = Vec::with_capacity(field.n_steps());
    let mut u = identity(n);
    propagators.push(u.clone());
    for k in 0..field.n_steps() {
        let h = system.hamiltonian(&field.row(k));
        let (energies, basis) = hermitian_eigen(&h);
        let step =
            crate::linalg::spectral(&energies, &basis, |e| C64::from_polar(1.0, -e * dt));
        u = step * u;
        propagators.push(u.clone());
        steps.push(StepSpectrum { energies, basis });
    }
    Ok(Trajectory {
        system: system.clone(),
        field: field.clone(),
        propagators,
        steps,
    })
}

/// U(t_k)† mu_channel U(t_k) at grid point k.
pub fn interaction_dipole(traj: &Trajectory, channel: usize, k: usize) -> Result<CMat> {
    if channel >= traj.system.n_controls() {
        return Err(Error::IndexOutOfRange {
            what: "channel",
            index: channel,
            len: traj.system.n_controls(),
        });
    }
    if k > traj.n_steps() {
        return Err(Error::IndexOutOfRange {
            what: "grid index",
            index: k,
            len: traj.n_steps() + 1,
        });
    }
    let u = &traj.propagators[k];
    let m = u.adjoint() * traj.system.dipole(channel) * u;
    Ok((&m + m.adjoint()).scale(0.5))
}

/// Principal logarithm of a unitary: skew-Hermitian A with exp(A) = U and
/// eigen-angles in (-pi, pi].
pub fn principal_log_unitary(u: &CMat) -> Result<CMat> {
    let n = u.nrows();
    if !is_unitary(u, 1e-9 * n as f64) {
        return Err(Error::InvalidInput("log of a non-unitary matrix".into()));
    }
    let (vals, vecs) = unitary_eigen(u);
    let mut angles = Vec::with_capacity(n);
    for z in &vals {
        let a = z.arg();
        if (a.abs() - std::f64::consts::PI).abs() < 1e-12 {
            return Err(Error::DegenerateBranch { angle: a });
        }
        angles.push(a);
    }
    let d = CMat::from_diagonal(&DVector::from_iterator(n, angles.iter().map(|&a| c(0.0, a))));
    let a = &vecs * d * vecs.adjoint();
    Ok((&a - a.adjoint()).scale(0.5))
}

/// U(s) = u0 exp(s log(u0† w)).
pub fn geodesic_point(u0: &CMat, w: &CMat, s: f64) -> Result<CMat> {
    let l = principal_log_unitary(&(u0.adjoint() * w))?;
    Ok(u0 * exp_skew(&(l * c(s, 0.0))))
}

/// exp(A) for skew-Hermitian A.
pub fn exp_skew(a: &CMat) -> CMat {
    let h = a * c(0.0, -1.0);
    crate::linalg::exp_i_hermitian(&h)
}

/// One carrier of the rotating-wave reduction: all dipole elements on one
/// channel sharing a transition frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct RwaCarrier {
    pub channel: usize,
    pub frequency: f64,
    pub pairs: Vec<(usize, usize)>,
    /// Index of the in-phase control in the rotated system.
    pub in_phase: usize,
    /// Index of the quadrature control, absent for zero-frequency carriers.
    pub quadrature: Option<usize>,
}

/// Rotating-frame system plus the bookkeeping to map fields and propagators
/// back to the laboratory frame.
#[derive(Debug, Clone)]
pub struct RwaFrame {
    pub energies: Vec<f64>,
    pub carriers: Vec<RwaCarrier>,
    pub rotated: ControlSystem,
}

/// Resonant rotating-wave reduction of a system with diagonal H0.
///
/// Lab field on channel c: eps_c(t) = sum_g x_g(t) cos(w_g t) + y_g(t) sin(w_g t)
/// over the carriers g of that channel, with x_g, y_g slowly varying.
pub fn rwa_transform(system: &ControlSystem) -> Result<RwaFrame> {
    let n = system.dim();
    let h0 = system.h0();
    for i in 0..n {
        for j in 0..n {
            if i != j && h0[(i, j)].norm() > 1e-12 {
                return Err(Error::InvalidInput(
                    "rwa_transform needs H0 diagonal in the working basis".into(),
                ));
            }
        }
    }
    let energies: Vec<f64> = (0..n).map(|i| h0[(i, i)].re).collect();
    let freq_tol = 1e-9 * (1.0 + energies.iter().fold(0.0f64, |m, e| m.max(e.abs())));
    let mut carriers: Vec<RwaCarrier> = Vec::new();
    for (ch, mu) in system.dipoles().iter().enumerate() {
        for j in 0..n {
            if mu[(j, j)].norm() > 1e-12 {
                return Err(Error::InvalidInput(
                    "rwa_transform needs dipoles off-diagonal in the H0 eigenbasis".into(),
                ));
            }
            for k in (j + 1)..n {
                if mu[(j, k)].norm() <= 1e-14 {
                    continue;
                }
                let w = (energies[k] - energies[j]).abs();
                match carriers
                    .iter_mut()
                    .find(|g| g.channel == ch && (g.frequency - w).abs() <= freq_tol)
                {
                    Some(g) => g.pairs.push((j, k)),
                    None => carriers.push(RwaCarrier {
                        channel: ch,
                        frequency: w,
                        pairs: vec![(j, k)],
                        in_phase: 0,
                        quadrature: None,
                    }),
                }
            }
        }
    }
    let mut dipoles = Vec::new();
    for g in carriers.iter_mut() {
        let mu = system.dipole(g.channel);
        let mut p = CMat::zeros(n, n);
        let mut q = CMat::zeros(n, n);
        let dc = g.frequency <= freq_tol;
        for &(j, k) in &g.pairs {
            if dc {
                p[(j, k)] = mu[(j, k)];
                p[(k, j)] = mu[(k, j)];
                continue;
            }
            let sigma = (energies[k] - energies[j]).signum();
            p[(j, k)] = mu[(j, k)] * 0.5;
            p[(k, j)] = mu[(k, j)] * 0.5;
            let z = mu[(j, k)] * c(0.0, -0.5 * sigma);
            q[(j, k)] = z;
            q[(k, j)] = z.conj();
        }
        g.in_phase = dipoles.len();
        dipoles.push(p);
        if !dc {
            g.quadrature = Some(dipoles.len());
            dipoles.push(q);
        }
    }
    if dipoles.is_empty() {
        return Err(Error::InvalidInput("no nonzero dipole couplings".into()));
    }
    let rotated = ControlSystem::new(CMat::zeros(n, n), dipoles, system.horizon())?;
    Ok(RwaFrame {
        energies,
        carriers,
        rotated,
    })
}

impl RwaFrame {
    /// Samples the laboratory field implied by rotating-frame amplitudes on a
    /// grid of `lab_steps` intervals.
    pub fn lab_field(&self, rotated: &ControlField, lab_steps: usize, lab_channels: usize) -> Result<ControlField> {
        if rotated.n_controls() != self.rotated.n_controls() {
            return Err(Error::DimensionMismatch("rotated field channel count".into()));
        }
        let t_final = rotated.horizon();
        let k_rot = rotated.n_steps();
        ControlField::from_fn(t_final, lab_steps, lab_channels, |t, ch| {
            let k = ((t / t_final) * k_rot as f64).floor().min(k_rot as f64 - 1.0) as usize;
            self.carriers
                .iter()
                .filter(|g| g.channel == ch)
                .map(|g| {
                    let x = rotated.value(k, g.in_phase) * (g.frequency * t).cos();
                    let y = g
                        .quadrature
                        .map_or(0.0, |qi| rotated.value(k, qi) * (g.frequency * t).sin());
                    x + y
                })
                .sum()
        })
    }

    /// Demodulates a laboratory field onto `rot_steps` rotating-frame intervals.
    pub fn rotating_field(&self, lab: &ControlField, rot_steps: usize) -> Result<ControlField> {
        let t_final = lab.horizon();
        let mut values = RMat::zeros(rot_steps, self.rotated.n_controls());
        let dt_lab = lab.dt();
        let dt_rot = t_final / rot_steps as f64;
        for kl in 0..lab.n_steps() {
            let t = lab.midpoint(kl);
            let kr = ((t / dt_rot).floor() as usize).min(rot_steps - 1);
            for g in &self.carriers {
                let e = lab.value(kl, g.channel);
                match g.quadrature {
                    None => values[(kr, g.in_phase)] += e * dt_lab / dt_rot,
                    Some(qi) => {
                        values[(kr, g.in_phase)] += 2.0 * e * (g.frequency * t).cos() * dt_lab / dt_rot;
                        values[(kr, qi)] += 2.0 * e * (g.frequency * t).sin() * dt_lab / dt_rot;
                    }
                }
            }
        }
        ControlField::new(t_final, values)
    }

    /// U_lab(t) = exp(-i D t) U_rot(t).
    pub fn restore_lab(&self, u_rot: &CMat, t: f64) -> CMat {
        let n = self.energies.len();
        let mut out = u_rot.clone();
        for i in 0..n {
            let ph = C64::from_polar(1.0, -self.energies[i] * t);
            for j in 0..n {
                out[(i, j)] *= ph;
            }
        }
        out
    }
}
