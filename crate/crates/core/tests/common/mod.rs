//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DVector;
use num_complex::Complex64;
use qcl_core::linalg::{c, herm_to_vec, numerical_rank, CMat, RMat, RVec};
use qcl_core::objectives::Objective;
use qcl_core::quantum::{exp_skew, propagate, ControlField, ControlSystem};
use rand::Rng;
use rand_distr::StandardNormal;

pub type C = Complex64;

/// Objective value after propagating `field`.
pub fn value_at(sys: &ControlSystem, field: &ControlField, obj: &Objective) -> f64 {
    obj.value(propagate(sys, field).unwrap().final_unitary()).unwrap()
}

/// Central-difference gradient dPhi/d eps_{k,c} / dt (a functional derivative).
pub fn fd_gradient(sys: &ControlSystem, field: &ControlField, obj: &Objective, h: f64) -> RMat {
    let (k_steps, m) = (field.n_steps(), field.n_controls());
    let mut out = RMat::zeros(k_steps, m);
    for k in 0..k_steps {
        for ch in 0..m {
            let mut plus = field.values().clone();
            plus[(k, ch)] += h;
            let mut minus = field.values().clone();
            minus[(k, ch)] -= h;
            let vp = value_at(sys, &field.with_values(plus).unwrap(), obj);
            let vm = value_at(sys, &field.with_values(minus).unwrap(), obj);
            out[(k, ch)] = (vp - vm) / (2.0 * h * field.dt());
        }
    }
    out
}

/// Second differences of the value, scaled to the functional Hessian
/// convention d^2 Phi / (d eps_a d eps_b dt^2), index a = k m + c.
pub fn fd_hessian(sys: &ControlSystem, field: &ControlField, obj: &Objective, h: f64) -> RMat {
    let (k_steps, m) = (field.n_steps(), field.n_controls());
    let n = k_steps * m;
    let base = field.values().clone();
    let at = |shift: &[(usize, f64)]| {
        let mut v = base.clone();
        for &(a, d) in shift {
            v[(a / m, a % m)] += d;
        }
        value_at(sys, &field.with_values(v).unwrap(), obj)
    };
    let f0 = at(&[]);
    let mut hmat = RMat::zeros(n, n);
    let dt2 = field.dt() * field.dt();
    for a in 0..n {
        let d2 = (at(&[(a, h)]) - 2.0 * f0 + at(&[(a, -h)])) / (h * h);
        hmat[(a, a)] = d2 / dt2;
        for b in (a + 1)..n {
            let v = (at(&[(a, h), (b, h)]) - at(&[(a, h), (b, -h)]) - at(&[(a, -h), (b, h)]) + at(&[(a, -h), (b, -h)]))
                / (4.0 * h * h);
            hmat[(a, b)] = v / dt2;
            hmat[(b, a)] = v / dt2;
        }
    }
    hmat
}

/// Dimension of the critical manifold through u: N^2 minus the rank of the
/// linearized critical condition A -> [[U† Theta U, A], rho].
pub fn tangent_rank_dimension(u: &CMat, rho: &CMat, theta: &CMat) -> usize {
    let n = u.nrows();
    let th = u.adjoint() * theta * u;
    let d = n * n;
    let mut jac = RMat::zeros(2 * d, d);
    let mut col = 0;
    let mut push = |a: CMat, jac: &mut RMat| {
        let inner = &th * &a - &a * &th;
        let out = &inner * rho - rho * &inner;
        for i in 0..n {
            for j in 0..n {
                jac[(i * n + j, col)] = out[(i, j)].re;
                jac[(d + i * n + j, col)] = out[(i, j)].im;
            }
        }
        col += 1;
    };
    for i in 0..n {
        for j in i..n {
            let mut a = CMat::zeros(n, n);
            if i == j {
                a[(i, i)] = c(1.0, 0.0);
                push(a, &mut jac);
            } else {
                a[(i, j)] = c(1.0, 0.0);
                a[(j, i)] = c(1.0, 0.0);
                push(a.clone(), &mut jac);
                let mut b = CMat::zeros(n, n);
                b[(i, j)] = c(0.0, 1.0);
                b[(j, i)] = c(0.0, -1.0);
                push(b, &mut jac);
            }
        }
    }
    // Absolute threshold: the map can vanish identically (rho proportional to I).
    let scale = 1.0f64.max(rho.norm() * theta.norm());
    let rank = jac.singular_values().iter().filter(|&&x| x > 1e-9 * scale).count();
    d - rank
}

/// Minimal rotation V with V a = e^{i alpha} b for unit vectors a, b, where
/// alpha makes <b|V a> real and positive.
pub fn rotation_onto(a: &DVector<C>, b: &DVector<C>) -> CMat {
    let n = a.len();
    let ov = b.dotc(a);
    let phase = if ov.norm() > 0.0 { ov / ov.norm() } else { c(1.0, 0.0) };
    let b = b * phase;
    let cos = ov.norm().min(1.0);
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    if sin < 1e-15 {
        return CMat::identity(n, n);
    }
    let perp = (a - &b * c(cos, 0.0)) / c(sin, 0.0);
    let theta = sin.atan2(cos);
    let k = (&b * perp.adjoint() - &perp * b.adjoint()) * c(theta, 0.0);
    exp_skew(&k)
}

pub fn random_unit<R: Rng>(n: usize, rng: &mut R) -> DVector<C> {
    let v = DVector::from_fn(n, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let nrm = v.norm();
    v / c(nrm, 0.0)
}

/// Brute-force Lie closure: repeatedly bracket every pair of accumulated
/// elements (randomly shuffled, random linear mixes added) and re-orthogonalize
/// with SVD until the rank stops growing.
pub fn brute_force_lie_dimension<R: Rng>(gens: &[CMat], rng: &mut R) -> usize {
    let n = gens[0].nrows();
    let mut elems: Vec<CMat> = gens.to_vec();
    let rank_of = |e: &[CMat]| {
        let mut m = RMat::zeros(n * n, e.len());
        for (j, x) in e.iter().enumerate() {
            m.set_column(j, &herm_to_vec(x));
        }
        numerical_rank(&m, 1e-9)
    };
    let mut rank = rank_of(&elems);
    loop {
        let mut next = elems.clone();
        for i in 0..elems.len() {
            for j in 0..elems.len() {
                let br = (&elems[i] * &elems[j] - &elems[j] * &elems[i]) * c(0.0, 1.0);
                let br = (&br + br.adjoint()) * c(0.5, 0.0);
                if br.norm() > 1e-12 {
                    next.push(&br / c(br.norm(), 0.0));
                }
            }
        }
        // Random mixes guard against accidental cancellations.
        for _ in 0..4 {
            let mut mix = CMat::zeros(n, n);
            for e in &next {
                let w: f64 = rng.sample(StandardNormal);
                mix += e * c(w, 0.0);
            }
            next.push(mix);
        }
        // Keep an orthonormal basis of the span (via SVD) to bound growth.
        let mut m = RMat::zeros(n * n, next.len());
        for (j, x) in next.iter().enumerate() {
            m.set_column(j, &herm_to_vec(x));
        }
        let svd = m.svd(true, false);
        let u = svd.u.unwrap();
        let smax = svd.singular_values.max();
        let basis: Vec<CMat> = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 1e-9 * smax)
            .map(|(j, _)| qcl_core::linalg::vec_to_herm(&RVec::from(u.column(j)), n))
            .collect();
        let new_rank = basis.len();
        if new_rank == rank {
            return rank;
        }
        rank = new_rank;
        elems = basis;
    }
}

/// Operator-Schmidt coefficients of x across a split of `dims` into
/// (first `split` factors, rest), normalized by the largest.
pub fn operator_schmidt(x: &CMat, d1: usize, d2: usize) -> Vec<f64> {
    let mut t = CMat::zeros(d1 * d1, d2 * d2);
    for i1 in 0..d1 {
        for j1 in 0..d1 {
            for i2 in 0..d2 {
                for j2 in 0..d2 {
                    t[(i1 * d1 + j1, i2 * d2 + j2)] = x[(i1 * d2 + i2, j1 * d2 + j2)];
                }
            }
        }
    }
    let s = t.singular_values();
    let mut v: Vec<f64> = s.iter().cloned().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    let top = v[0];
    v.into_iter().map(|x| x / top).collect()
}

/// Fourth-order Runge-Kutta on i dpsi/dt = H(t) psi with many substeps, as an
/// independent check of the exact piecewise propagator.
pub fn rk4_state(h_of_t: &dyn Fn(f64) -> CMat, psi0: &DVector<C>, t_total: f64, steps: usize) -> DVector<C> {
    let h = t_total / steps as f64;
    let mi = c(0.0, -1.0);
    let f = |t: f64, y: &DVector<C>| h_of_t(t) * y * mi;
    let mut y = psi0.clone();
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = f(t, &y);
        let k2 = f(t + h / 2.0, &(&y + &k1 * c(h / 2.0, 0.0)));
        let k3 = f(t + h / 2.0, &(&y + &k2 * c(h / 2.0, 0.0)));
        let k4 = f(t + h, &(&y + &k3 * c(h, 0.0)));
        y += (k1 + (k2 + k3) * c(2.0, 0.0) + k4) * c(h / 6.0, 0.0);
    }
    y
}
