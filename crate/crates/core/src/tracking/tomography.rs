//! Simulated POVM measurements and maximum-likelihood state reconstruction.

use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::linalg::{c, herm_to_vec, hermitian_part, identity, is_hermitian, numerical_rank, trace, trace_prod, CMat, RMat};
use crate::rng::substream;

/// POVM effects with observed counts.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub povm: Vec<CMat>,
    pub counts: Vec<u64>,
    pub n_total: u64,
}

impl MeasurementRecord {
    pub fn new(povm: Vec<CMat>, counts: Vec<u64>) -> Result<Self> {
        validate_povm(&povm)?;
        if counts.len() != povm.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} counts for {} effects",
                counts.len(),
                povm.len()
            )));
        }
        let n_total = counts.iter().sum();
        if n_total == 0 {
            return Err(Error::InvalidInput("record has no counts".into()));
        }
        Ok(Self { povm, counts, n_total })
    }

    pub fn dim(&self) -> usize {
        self.povm[0].nrows()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.counts.iter().map(|&k| k as f64 / self.n_total as f64).collect()
    }

    /// Sum over effects of n_i ln Tr(rho F_i).
    pub fn log_likelihood(&self, rho: &CMat) -> f64 {
        self.povm
            .iter()
            .zip(&self.counts)
            .filter(|(_, &n)| n > 0)
            .map(|(f, &n)| n as f64 * trace_prod(rho, f).re.max(1e-300).ln())
            .sum()
    }

    /// True when the effects span all Hermitian matrices.
    pub fn informationally_complete(&self) -> bool {
        let n = self.dim();
        let mut m = RMat::zeros(self.povm.len(), n * n);
        for (i, f) in self.povm.iter().enumerate() {
            m.set_row(i, &herm_to_vec(f).transpose());
        }
        numerical_rank(&m, 1e-10) == n * n
    }
}

/// Effects must be Hermitian, PSD, and resolve the identity; when several
/// complete measurements are pooled the sum may be a multiple of I.
fn validate_povm(povm: &[CMat]) -> Result<()> {
    let first = povm.first().ok_or_else(|| Error::InvalidInput("empty POVM".into()))?;
    let n = first.nrows();
    let mut sum = CMat::zeros(n, n);
    for f in povm {
        if f.nrows() != n || f.ncols() != n {
            return Err(Error::DimensionMismatch("POVM effects differ in size".into()));
        }
        if !is_hermitian(f, 1e-10) {
            return Err(Error::InvalidInput("POVM effect is not Hermitian".into()));
        }
        let min = crate::linalg::hermitian_eigenvalues(f)[0];
        if min < -1e-10 {
            return Err(Error::InvalidInput(format!("POVM effect has eigenvalue {min:e}")));
        }
        sum += f;
    }
    let scale = (trace(&sum).re / n as f64).round().max(1.0);
    if (sum - identity(n) * c(scale, 0.0)).norm() > 1e-10 * scale {
        return Err(Error::InvalidInput("POVM effects do not sum to the identity".into()));
    }
    Ok(())
}

/// Multinomial sample of `n` shots of the POVM on `rho`.
pub fn simulate_measurements(rho: &CMat, povm: &[CMat], n: u64, seed: u64) -> Result<MeasurementRecord> {
    validate_povm(povm)?;
    if n == 0 {
        return Err(Error::InvalidInput("need at least one shot".into()));
    }
    if rho.nrows() != povm[0].nrows() {
        return Err(Error::DimensionMismatch("state and POVM sizes differ".into()));
    }
    let mut probs = Vec::with_capacity(povm.len());
    for f in povm {
        let p = trace_prod(rho, f).re;
        if p < -1e-12 {
            return Err(Error::NegativeProbability(p));
        }
        probs.push(p.max(0.0));
    }
    let total: f64 = probs.iter().sum();
    let mut rng = substream(seed, "measurements");
    let mut counts = vec![0u64; povm.len()];
    let mut left = n;
    let mut mass = total;
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == probs.len() {
            counts[i] = left;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = Binomial::new(left, q).expect("valid binomial").sample(&mut rng);
        counts[i] = k;
        left -= k;
        mass -= p;
    }
    MeasurementRecord::new(povm.to_vec(), counts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub initial_step: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            tol: 1e-10,
            initial_step: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MleResult {
    pub rho: CMat,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// False when the POVM does not determine the state uniquely.
    pub unique: bool,
    pub history: Vec<f64>,
}

fn normalized(t: &CMat) -> CMat {
    let rho = t.adjoint() * t;
    let tr = trace(&rho).re;
    hermitian_part(&(rho / c(tr, 0.0)))
}

/// Maximum-likelihood estimate with rho = T†T / Tr(T†T), using a diluted
/// R-rho-R fixed-point iteration with backtracking so that the likelihood
/// never decreases.
pub fn mle_reconstruct(record: &MeasurementRecord) -> Result<MleResult> {
    mle_reconstruct_with(record, MleOptions::default())
}

pub fn mle_reconstruct_with(record: &MeasurementRecord, opts: MleOptions) -> Result<MleResult> {
    let n = record.dim();
    let total = record.n_total as f64;
    // Pooled measurements may sum to a multiple of I.
    let mut sum = CMat::zeros(n, n);
    for f in &record.povm {
        sum += f;
    }
    let scale = trace(&sum).re / n as f64;
    let mut t = identity(n) * c((1.0 / n as f64).sqrt(), 0.0);
    let mut rho = normalized(&t);
    let mut ll = record.log_likelihood(&rho);
    let mut history = vec![ll];
    let mut eta = opts.initial_step;
    for it in 0..opts.max_iter {
        let mut r = CMat::zeros(n, n);
        for (f, &k) in record.povm.iter().zip(&record.counts) {
            if k > 0 {
                let p = trace_prod(&rho, f).re.max(1e-300);
                r += f * c(k as f64 / (total * p * scale), 0.0);
            }
        }
        let r = hermitian_part(&r);
        let stationarity = (&r * &rho - &rho).norm();
        if stationarity < opts.tol {
            return Ok(MleResult {
                rho,
                log_likelihood: ll,
                iterations: it,
                unique: record.informationally_complete(),
                history,
            });
        }
        let mut accepted = false;
        let mut h = eta;
        for _ in 0..60 {
            let g = identity(n) + (&r - identity(n)) * c(h, 0.0);
            let t_new = &t * &g;
            let rho_new = normalized(&t_new);
            let ll_new = record.log_likelihood(&rho_new);
            if ll_new >= ll {
                let gain = ll_new - ll;
                t = &t_new / c(t_new.norm(), 0.0);
                rho = rho_new;
                ll = ll_new;
                history.push(ll);
                accepted = true;
                eta = (h * 2.0).min(opts.initial_step);
                if gain <= opts.tol * total.max(1.0) * 1e-6 && stationarity < opts.tol.sqrt() {
                    return Ok(MleResult {
                        rho,
                        log_likelihood: ll,
                        iterations: it + 1,
                        unique: record.informationally_complete(),
                        history,
                    });
                }
                break;
            }
            h *= 0.5;
        }
        if !accepted {
            // No ascent direction left at machine precision.
            return Ok(MleResult {
                rho,
                log_likelihood: ll,
                iterations: it,
                unique: record.informationally_complete(),
                history,
            });
        }
    }
    let mut r = CMat::zeros(n, n);
    for (f, &k) in record.povm.iter().zip(&record.counts) {
        if k > 0 {
            r += f * c(k as f64 / (total * trace_prod(&rho, f).re.max(1e-300) * scale), 0.0);
        }
    }
    let residual = (&r * &rho - &rho).norm();
    if residual < opts.tol.sqrt() {
        return Ok(MleResult {
            rho,
            log_likelihood: ll,
            iterations: opts.max_iter,
            unique: record.informationally_complete(),
            history,
        });
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

/// Trace distance ½‖a − b‖₁ between Hermitian matrices.
pub fn trace_distance(a: &CMat, b: &CMat) -> f64 {
    0.5 * crate::linalg::hermitian_eigenvalues(&hermitian_part(&(a - b)))
        .iter()
        .map(|x| x.abs())
        .sum::<f64>()
}
