//! Dense complex linear-algebra helpers shared by every module.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().sum()
}

/// Tr(a b) without forming the product.
pub fn trace_prod(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    m.is_square() && (m - m.adjoint()).norm() <= tol * (1.0 + m.norm())
}

pub fn unitarity_error(u: &CMat) -> f64 {
    let n = u.nrows();
    (u.adjoint() * u - identity(n)).norm()
}

pub fn is_unitary(u: &CMat, tol: f64) -> bool {
    u.is_square() && unitarity_error(u) <= tol
}

pub fn check_finite(m: &CMat, what: &'static str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Eigen-decomposition of a Hermitian matrix with ascending eigenvalues.
pub fn hermitian_eigen(h: &CMat) -> (Vec<f64>, CMat) {
    let eig = hermitian_part(h).symmetric_eigen();
    let n = h.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in idx.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues(h: &CMat) -> Vec<f64> {
    let mut v: Vec<f64> = hermitian_part(h).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Ascending eigen-decomposition of a real symmetric matrix.
pub fn real_symmetric_eigen(a: &RMat) -> (Vec<f64>, RMat) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = a.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = RMat::zeros(n, n);
    for (dst, &src) in idx.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// f(H) for Hermitian H via its spectral decomposition.
pub fn hermitian_function(h: &CMat, f: impl Fn(f64) -> C64) -> CMat {
    let (vals, vecs) = hermitian_eigen(h);
    spectral(&vals, &vecs, f)
}

pub fn spectral(vals: &[f64], vecs: &CMat, f: impl Fn(f64) -> C64) -> CMat {
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let fj = f(v);
        scaled.column_mut(j).scale_mut(1.0);
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= fj;
        }
    }
    scaled * vecs.adjoint()
}

/// exp(-i H t) for Hermitian H.
pub fn expm_hermitian(h: &CMat, t: f64) -> CMat {
    hermitian_function(h, |e| C64::from_polar(1.0, -e * t))
}

/// exp(i A) for Hermitian A.
pub fn exp_i_hermitian(a: &CMat) -> CMat {
    hermitian_function(a, |e| C64::from_polar(1.0, e))
}

/// Square root of a positive semidefinite Hermitian matrix (negative rounding clipped).
pub fn sqrt_psd(m: &CMat) -> CMat {
    hermitian_function(m, |e| c(e.max(0.0).sqrt(), 0.0))
}

/// Closest unitary in Frobenius norm (polar factor).
pub fn polar_unitary(m: &CMat) -> CMat {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    u * vt
}

/// Eigenvalues and eigenvectors of a unitary (normal) matrix.
pub fn unitary_eigen(u: &CMat) -> (Vec<C64>, CMat) {
    let n = u.nrows();
    // A generic real combination of the Hermitian and anti-Hermitian parts
    // separates distinct eigenvalues and keeps the eigenbasis orthonormal.
    let alpha = 0.618_033_988_749_895;
    let re = hermitian_part(u);
    let im = (u - u.adjoint()) * c(0.0, -0.5);
    let mix = &re + &im * c(alpha, 0.0);
    let (_, vecs) = hermitian_eigen(&mix);
    let d = vecs.adjoint() * u * &vecs;
    let off: f64 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .map(|(i, j)| d[(i, j)].norm_sqr())
        .sum::<f64>()
        .sqrt();
    if off < 1e-9 {
        let vals = (0..n).map(|i| d[(i, i)] / d[(i, i)].norm()).collect();
        return (vals, vecs);
    }
    let schur = u.clone().schur();
    let (q, t) = schur.unpack();
    let vals = (0..n).map(|i| t[(i, i)] / t[(i, i)].norm()).collect();
    (vals, q)
}

/// Eigen-angles of a unitary in (-pi, pi], ascending.
pub fn unitary_angles(u: &CMat) -> Vec<f64> {
    let (vals, _) = unitary_eigen(u);
    let mut a: Vec<f64> = vals.iter().map(|z| z.arg()).collect();
    a.sort_by(|x, y| x.total_cmp(y));
    a
}

/// Kronecker product a ⊗ b.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Trace over the second factor of a bipartite operator on C^ns ⊗ C^ne.
pub fn partial_trace_second(m: &CMat, ns: usize, ne: usize) -> CMat {
    let mut out = CMat::zeros(ns, ns);
    for i in 0..ns {
        for j in 0..ns {
            let mut acc = c(0.0, 0.0);
            for e in 0..ne {
                acc += m[(i * ne + e, j * ne + e)];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// Isometric real coordinates of a Hermitian matrix: diagonal entries, then
/// sqrt(2) Re and sqrt(2) Im of each upper-triangular entry.
pub fn herm_to_vec(a: &CMat) -> RVec {
    let n = a.nrows();
    let mut v = RVec::zeros(n * n);
    for i in 0..n {
        v[i] = a[(i, i)].re;
    }
    let s2 = std::f64::consts::SQRT_2;
    let mut p = n;
    for i in 0..n {
        for j in (i + 1)..n {
            v[p] = s2 * a[(i, j)].re;
            v[p + 1] = s2 * a[(i, j)].im;
            p += 2;
        }
    }
    v
}

pub fn vec_to_herm(v: &RVec, n: usize) -> CMat {
    let mut a = CMat::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = c(v[i], 0.0);
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut p = n;
    for i in 0..n {
        for j in (i + 1)..n {
            let z = c(r * v[p], r * v[p + 1]);
            a[(i, j)] = z;
            a[(j, i)] = z.conj();
            p += 2;
        }
    }
    a
}

/// Orthonormal basis (columns) of the orthogonal complement of v(I) in R^{N^2}.
pub fn traceless_basis(n: usize) -> RMat {
    let d = n * n;
    let mut basis = RMat::zeros(d, d - 1);
    // Diagonal part: normalized Helmert contrasts.
    for k in 1..n {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            basis[(i, k - 1)] = 1.0 / norm;
        }
        basis[(k, k - 1)] = -(k as f64) / norm;
    }
    for p in n..d {
        basis[(p, p - 1)] = 1.0;
    }
    basis
}

/// Numerical rank with a threshold relative to the largest singular value.
pub fn numerical_rank(a: &RMat, rel_tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Haar-random unitary via QR of a complex Ginibre matrix with phase fix.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Random Hermitian matrix with Gaussian entries (GUE normalization).
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    });
    hermitian_part(&g)
}

/// Random full-rank density matrix with the given spectrum in a Haar basis.
pub fn density_with_spectrum<R: Rng + ?Sized>(spectrum: &[f64], rng: &mut R) -> CMat {
    let n = spectrum.len();
    let u = haar_unitary(n, rng);
    let d = CMat::from_diagonal(&DVector::from_iterator(
        n,
        spectrum.iter().map(|&x| c(x, 0.0)),
    ));
    hermitian_part(&(&u * d * u.adjoint()))
}

pub fn diag(values: &[f64]) -> CMat {
    CMat::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|&x| c(x, 0.0)),
    ))
}

/// Outer product |a><b|.
pub fn ket_bra(a: &DVector<C64>, b: &DVector<C64>) -> CMat {
    a * b.adjoint()
}

pub fn basis_ket(n: usize, i: usize) -> DVector<C64> {
    let mut v = DVector::zeros(n);
    v[i] = c(1.0, 0.0);
    v
}

pub fn projector(n: usize, i: usize) -> CMat {
    let mut p = CMat::zeros(n, n);
    p[(i, i)] = c(1.0, 0.0);
    p
}

/// Real-valued function of x: (e^{ix} - 1)/(ix), stable near 0.
pub fn phi_imag(x: f64) -> C64 {
    let h = 0.5 * x;
    let sinc = if h.abs() < 1e-4 {
        1.0 - h * h / 6.0 + h.powi(4) / 120.0
    } else {
        h.sin() / h
    };
    C64::from_polar(sinc, h)
}

/// Distance between unitaries modulo a global phase: min_phi ||U - e^{i phi} V||_F.
pub fn phase_free_distance(u: &CMat, v: &CMat) -> f64 {
    let n = u.nrows() as f64;
    let t = trace_prod(&u.adjoint(), v).norm();
    (2.0 * n - 2.0 * t).max(0.0).sqrt()
}
