//! Kinematic critical manifolds of Phi1 and Phi2: enumeration, dimensions and
//! Hessian signatures on U(N).

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{diag, hermitian_eigen, CMat, C64};
use crate::objectives::ObservableSpec;

/// Largest N for which permutations are enumerated explicitly.
pub const ENUMERATION_CAP: usize = 8;

const BLOCK_TOL: f64 = 1e-10;

/// Sorted spectra, degeneracy blocks and diagonalizers of rho0 and Theta:
/// rho0 = Q diag(eps) Q†, Theta = R diag(lambda) R†, both descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumData {
    pub rho_eigs: Vec<f64>,
    pub theta_eigs: Vec<f64>,
    pub rho_blocks: Vec<usize>,
    pub theta_blocks: Vec<usize>,
    pub q: CMat,
    pub r: CMat,
}

fn descending_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let (vals, vecs) = hermitian_eigen(m);
    let n = vals.len();
    let mut out = CMat::zeros(n, n);
    for j in 0..n {
        out.set_column(j, &vecs.column(n - 1 - j));
    }
    (vals.into_iter().rev().collect(), out)
}

fn blocks_of(sorted: &[f64]) -> Vec<usize> {
    let scale = sorted.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut blocks = Vec::new();
    let mut start = 0;
    for i in 1..=sorted.len() {
        if i == sorted.len() || (sorted[i - 1] - sorted[i]).abs() > BLOCK_TOL * scale {
            blocks.push(i - start);
            start = i;
        }
    }
    blocks
}

impl SpectrumData {
    pub fn from_spec(spec: &ObservableSpec) -> Self {
        let (rho_eigs, q) = descending_eigen(spec.rho0());
        let (theta_eigs, r) = descending_eigen(spec.theta());
        Self {
            rho_blocks: blocks_of(&rho_eigs),
            theta_blocks: blocks_of(&theta_eigs),
            rho_eigs,
            theta_eigs,
            q,
            r,
        }
    }

    /// Spectra in the computational basis (Q = R = I); inputs are sorted descending.
    pub fn from_eigenvalues(rho_eigs: &[f64], theta_eigs: &[f64]) -> Result<Self> {
        if rho_eigs.len() != theta_eigs.len() || rho_eigs.is_empty() {
            return Err(Error::DimensionMismatch("spectra lengths differ".into()));
        }
        let mut re = rho_eigs.to_vec();
        let mut te = theta_eigs.to_vec();
        re.sort_by(|a, b| b.total_cmp(a));
        te.sort_by(|a, b| b.total_cmp(a));
        let n = re.len();
        Ok(Self {
            rho_blocks: blocks_of(&re),
            theta_blocks: blocks_of(&te),
            rho_eigs: re,
            theta_eigs: te,
            q: CMat::identity(n, n),
            r: CMat::identity(n, n),
        })
    }

    pub fn dim(&self) -> usize {
        self.rho_eigs.len()
    }

    /// rho0 and Theta rebuilt from the decomposition.
    pub fn observable_spec(&self) -> Result<ObservableSpec> {
        let rho = &self.q * diag(&self.rho_eigs) * self.q.adjoint();
        let th = &self.r * diag(&self.theta_eigs) * self.r.adjoint();
        ObservableSpec::new(rho, th)
    }

    fn block_index(blocks: &[usize]) -> Vec<usize> {
        blocks
            .iter()
            .enumerate()
            .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
            .collect()
    }

    /// Overlap numbers o_{s,t} = #{i in rho block s : pi(i) in theta block t}.
    pub fn overlaps(&self, perm: &[usize]) -> Vec<Vec<usize>> {
        let rb = Self::block_index(&self.rho_blocks);
        let tb = Self::block_index(&self.theta_blocks);
        let mut o = vec![vec![0; self.theta_blocks.len()]; self.rho_blocks.len()];
        for (i, &p) in perm.iter().enumerate() {
            o[rb[i]][tb[p]] += 1;
        }
        o
    }

    fn check_perm(&self, perm: &[usize]) -> Result<()> {
        let n = self.dim();
        let mut seen = vec![false; n];
        if perm.len() != n {
            return Err(Error::InvalidInput("permutation length".into()));
        }
        for &p in perm {
            if p >= n || seen[p] {
                return Err(Error::InvalidInput(format!("not a permutation: {perm:?}")));
            }
            seen[p] = true;
        }
        Ok(())
    }
}

/// One kinematic critical manifold of Phi1.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalManifoldRecord {
    pub permutation: Vec<usize>,
    pub value: f64,
    pub dimension: usize,
    /// (h+, h0, h-)
    pub signature: (usize, usize, usize),
    pub representative: CMat,
    /// Number of permutations merged into this record by degeneracy.
    pub multiplicity: usize,
}

/// Sum_i eps_i lambda_{pi(i)}.
pub fn critical_value(spectra: &SpectrumData, perm: &[usize]) -> f64 {
    perm.iter()
        .enumerate()
        .map(|(i, &p)| spectra.rho_eigs[i] * spectra.theta_eigs[p])
        .sum()
}

/// U = R P Q† with P = sum_i e^{i phi_i} |pi(i)><i|.
pub fn representative(spectra: &SpectrumData, perm: &[usize], phases: &[f64]) -> CMat {
    let n = spectra.dim();
    let mut p = CMat::zeros(n, n);
    for (i, &pi) in perm.iter().enumerate() {
        let ph = phases.get(i).copied().unwrap_or(0.0);
        p[(pi, i)] = C64::from_polar(1.0, ph);
    }
    &spectra.r * p * spectra.q.adjoint()
}

/// d = sum D_s^2 + sum E_t^2 - sum o_{s,t}^2.
pub fn manifold_dimension(spectra: &SpectrumData, perm: &[usize]) -> Result<usize> {
    spectra.check_perm(perm)?;
    let sq = |v: &[usize]| v.iter().map(|x| x * x).sum::<usize>();
    let o: usize = spectra.overlaps(perm).iter().map(|row| sq(row)).sum();
    Ok(sq(&spectra.rho_blocks) + sq(&spectra.theta_blocks) - o)
}

/// (h+, h0, h-) on the N^2 directions of U(N).
pub fn phi1_signature(spectra: &SpectrumData, perm: &[usize]) -> Result<(usize, usize, usize)> {
    spectra.check_perm(perm)?;
    let n = spectra.dim();
    let scale = spectra
        .rho_eigs
        .iter()
        .chain(&spectra.theta_eigs)
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = BLOCK_TOL * scale * scale;
    let (mut pos, mut neg) = (0, 0);
    for j in 0..n {
        for k in (j + 1)..n {
            let prod = (spectra.theta_eigs[perm[j]] - spectra.theta_eigs[perm[k]])
                * (spectra.rho_eigs[j] - spectra.rho_eigs[k]);
            if prod > tol {
                neg += 2;
            } else if prod < -tol {
                pos += 2;
            }
        }
    }
    Ok((pos, n * n - pos - neg, neg))
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// All permutations of 0..n in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut p: Vec<usize> = (0..n).collect();
    let mut out = vec![p.clone()];
    while next_permutation(&mut p) {
        out.push(p.clone());
    }
    out
}

/// One record per critical manifold; permutations with identical block-overlap
/// pattern (same manifold under degeneracy) are merged.
pub fn enumerate_phi1_critical(spec: &ObservableSpec) -> Result<Vec<CriticalManifoldRecord>> {
    enumerate_from_spectra(&SpectrumData::from_spec(spec))
}

pub fn enumerate_from_spectra(spectra: &SpectrumData) -> Result<Vec<CriticalManifoldRecord>> {
    let n = spectra.dim();
    if n > ENUMERATION_CAP {
        return Err(Error::EnumerationBound {
            n,
            cap: ENUMERATION_CAP,
        });
    }
    let mut records: Vec<(Vec<Vec<usize>>, CriticalManifoldRecord)> = Vec::new();
    for perm in permutations(n) {
        let pattern = spectra.overlaps(&perm);
        let value = critical_value(spectra, &perm);
        if let Some((_, rec)) = records.iter_mut().find(|(pat, rec)| {
            *pat == pattern && (rec.value - value).abs() <= 1e-12 * (1.0 + value.abs())
        }) {
            rec.multiplicity += 1;
            continue;
        }
        let rec = CriticalManifoldRecord {
            dimension: manifold_dimension(spectra, &perm)?,
            signature: phi1_signature(spectra, &perm)?,
            representative: representative(spectra, &perm, &[]),
            permutation: perm,
            value,
            multiplicity: 1,
        };
        records.push((pattern, rec));
    }
    Ok(records.into_iter().map(|(_, r)| r).collect())
}

/// ||[U† Theta U, rho0]||_F, zero exactly on the critical set.
pub fn critical_residual(u: &CMat, spec: &ObservableSpec) -> f64 {
    let th = u.adjoint() * spec.theta() * u;
    (&th * spec.rho0() - spec.rho0() * &th).norm()
}

/// A Phi2 critical class: W†U has m eigenvalues +1 and N - m eigenvalues -1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateCriticalClass {
    pub n: usize,
    pub m: usize,
}

impl GateCriticalClass {
    pub fn value(&self) -> f64 {
        4.0 * (self.n - self.m) as f64
    }

    /// (h+, h0, h-) = (m^2, N^2 - m^2 - (N-m)^2, (N-m)^2).
    pub fn signature(&self) -> (usize, usize, usize) {
        let (n, m) = (self.n, self.m);
        let hp = m * m;
        let hm = (n - m) * (n - m);
        (hp, n * n - hp - hm, hm)
    }

    /// U = W V D V† with D = diag(+1 x m, -1 x (N - m)).
    pub fn representative(&self, w: &CMat, v: &CMat) -> CMat {
        let d: Vec<f64> = (0..self.n).map(|i| if i < self.m { 1.0 } else { -1.0 }).collect();
        w * v * diag(&d) * v.adjoint()
    }
}

pub fn enumerate_phi2_critical(n: usize) -> Result<Vec<GateCriticalClass>> {
    if n == 0 {
        return Err(Error::InvalidInput("N must be >= 1".into()));
    }
    Ok((0..=n).map(|m| GateCriticalClass { n, m }).collect())
}

/// Which family of spectra to count critical values for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalCase {
    Nondegenerate,
    ProjectorPair,
    Gate,
}

/// Number of distinct critical manifolds: N!, 2 or N + 1.
pub fn count_critical_values(n: usize, case: CriticalCase) -> Result<u64> {
    match case {
        CriticalCase::Nondegenerate => {
            if n > 12 {
                return Err(Error::EnumerationBound { n, cap: 12 });
            }
            Ok((1..=n as u64).product())
        }
        CriticalCase::ProjectorPair => Ok(2),
        CriticalCase::Gate => Ok(n as u64 + 1),
    }
}

/// Diagonal unitary with the given phases.
pub fn phase_diag(phases: &[f64]) -> CMat {
    CMat::from_diagonal(&DVector::from_iterator(
        phases.len(),
        phases.iter().map(|&p| C64::from_polar(1.0, p)),
    ))
}
