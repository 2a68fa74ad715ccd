//! Monte Carlo and closed-form validation of the regime-transition
//! analysis: concentration of the directional-conflict statistic D_K,
//! the factorized expectation of the regime ratio U_K = D_K * mbar/A_K,
//! exact Pareto inverse moments, the beneficial-range endpoint K*, and
//! the additive parameter-block decomposition of the loss-indexed
//! kernel.

use crate::{ParamVector, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("invalid tail model: {0}")]
    BadTail(String),
}

/// Mean and standard error of a Monte Carlo run.
#[derive(Clone, Debug)]
pub struct MCEstimate {
    pub mean: Real,
    /// Sample standard deviation / sqrt(trials).
    pub se: Real,
    pub trials: usize,
}

impl MCEstimate {
    pub fn from_samples(samples: &[Real]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<Real>() / n as Real;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<Real>() / (n - 1) as Real;
        MCEstimate {
            mean,
            se: (var / n as Real).sqrt(),
            trials: n,
        }
    }
}

/// Independent per-trial generator: one base seed, one stream per trial,
/// so trial i is reproducible regardless of evaluation order.
fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Uniform direction on the unit sphere (normalized Gaussian).
pub fn sample_unit_sphere(d: usize, rng: &mut ChaCha8Rng) -> Vec<Real> {
    assert!(d >= 1);
    loop {
        let v: Vec<Real> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<Real>().sqrt();
        if n > 1e-30 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// mu_d = Gamma(d/2) / (2 sqrt(pi) Gamma((d+1)/2)): the mean of
/// max(0, -u.v) for independent uniform directions in dimension d.
pub fn mu_d(d: usize) -> Real {
    assert!(d >= 1);
    let d = d as Real;
    (ln_gamma(d / 2.0) - ln_gamma((d + 1.0) / 2.0)).exp() / (2.0 * std::f64::consts::PI.sqrt())
}

/// Mean clipped negative cosine over all pairs, from pairwise cosines in
/// upper-triangle order.
pub fn dk_from_cosines(cosines: &[Real]) -> Real {
    assert!(!cosines.is_empty());
    cosines.iter().map(|c| (-c).max(0.0)).sum::<Real>() / cosines.len() as Real
}

/// D_K of a set of unit direction vectors.
pub fn dk_statistic(dirs: &[Vec<Real>]) -> Real {
    let k = dirs.len();
    assert!(k >= 2);
    let mut cos = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            cos.push(dirs[i].iter().zip(&dirs[j]).map(|(a, b)| a * b).sum());
        }
    }
    dk_from_cosines(&cos)
}

/// Concentration figures of D_K under iid uniform directions.
#[derive(Clone, Debug)]
pub struct DkConcentration {
    pub estimate: MCEstimate,
    pub var_empirical: Real,
    /// (1/n_K)(1/(2d) - mu_d^2) with n_K = K(K-1)/2.
    pub var_target: Real,
    pub mu_target: Real,
}

pub fn mc_dk_concentration(d: usize, k: usize, trials: usize, seed: u64) -> DkConcentration {
    assert!(trials >= 1_000);
    let samples: Vec<Real> = (0..trials)
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let dirs: Vec<Vec<Real>> = (0..k).map(|_| sample_unit_sphere(d, &mut rng)).collect();
            dk_statistic(&dirs)
        })
        .collect();
    let estimate = MCEstimate::from_samples(&samples);
    let var_empirical = estimate.se * estimate.se * trials as Real;
    let n_k = (k * (k - 1) / 2) as Real;
    let mu = mu_d(d);
    DkConcentration {
        estimate,
        var_empirical,
        var_target: (1.0 / n_k) * (1.0 / (2.0 * d as Real) - mu * mu),
        mu_target: mu,
    }
}

/// Magnitude tail models: shifted pure-exponential tail t0 + Exp(nu), or
/// Pareto(alpha, t0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailModel {
    Exponential { nu: Real, t0: Real },
    Pareto { alpha: Real, t0: Real },
}

impl TailModel {
    pub fn validate(&self) -> Result<(), TheoryError> {
        match *self {
            TailModel::Exponential { nu, t0 } => {
                if nu > 0.0 && t0 > 0.0 {
                    Ok(())
                } else {
                    Err(TheoryError::BadTail(format!("need nu, t0 > 0, got nu={nu}, t0={t0}")))
                }
            }
            TailModel::Pareto { alpha, t0 } => {
                if alpha > 1.0 && t0 > 0.0 {
                    Ok(())
                } else {
                    Err(TheoryError::BadTail(format!(
                        "need alpha > 1 and t0 > 0, got alpha={alpha}, t0={t0}"
                    )))
                }
            }
        }
    }
}

/// Inverse-CDF magnitude draw; always >= t0.
pub fn sample_magnitude(tail: TailModel, rng: &mut ChaCha8Rng) -> Real {
    let u: Real = rng.gen::<Real>().max(1e-16);
    match tail {
        TailModel::Exponential { nu, t0 } => t0 - u.ln() / nu,
        TailModel::Pareto { alpha, t0 } => t0 * u.powf(-1.0 / alpha),
    }
}

/// mbar / A_K of one magnitude draw of size K.
fn magnitude_ratio(mags: &[Real]) -> Real {
    let a = mags.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
    let mbar = mags.iter().sum::<Real>() / mags.len() as Real;
    mbar / a
}

/// Joint vs factorized estimates of E[U_K]. Independence of directions
/// and magnitudes implies E[U_K] = mu_d * E[mbar / A_K]; the two columns
/// should agree within combined Monte Carlo error.
#[derive(Clone, Debug)]
pub struct UkEstimate {
    pub joint: MCEstimate,
    /// mu_d times an independent estimate of E[mbar / A_K].
    pub factorized: MCEstimate,
    pub d: usize,
    pub k: usize,
}

/// E[U_K] with a caller-supplied magnitude sampler (used for degenerate
/// magnitude checks).
pub fn mc_uk_with<F>(mut mag: F, d: usize, k: usize, trials: usize, seed: u64) -> UkEstimate
where
    F: FnMut(&mut ChaCha8Rng) -> Real,
{
    assert!(k >= 2 && trials >= 2);
    let mut joint = Vec::with_capacity(trials);
    let mut ratios = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut rng = trial_rng(seed, t as u64);
        let dirs: Vec<Vec<Real>> = (0..k).map(|_| sample_unit_sphere(d, &mut rng)).collect();
        let mags: Vec<Real> = (0..k).map(|_| mag(&mut rng)).collect();
        joint.push(dk_statistic(&dirs) * magnitude_ratio(&mags));
        // independent magnitude draw for the factorized column
        let mags: Vec<Real> = (0..k).map(|_| mag(&mut rng)).collect();
        ratios.push(magnitude_ratio(&mags));
    }
    let mu = mu_d(d);
    let mut factorized = MCEstimate::from_samples(&ratios);
    factorized.mean *= mu;
    factorized.se *= mu;
    UkEstimate {
        joint: MCEstimate::from_samples(&joint),
        factorized,
        d,
        k,
    }
}

pub fn mc_uk(tail: TailModel, d: usize, k: usize, trials: usize, seed: u64) -> UkEstimate {
    tail.validate().expect("valid tail");
    mc_uk_with(|rng| sample_magnitude(tail, rng), d, k, trials, seed)
}

/// Exact Pareto inverse moment E[A_K^{-r}] =
/// t0^{-r} Gamma(1 + r/alpha) Gamma(K+1) / Gamma(K+1+r/alpha).
pub fn pareto_inverse_moment_exact(k: usize, r: Real, alpha: Real, t0: Real) -> Real {
    assert!(alpha > 0.0 && r > 0.0 && t0 > 0.0 && k >= 1);
    let kf = k as Real;
    t0.powf(-r)
        * (ln_gamma(1.0 + r / alpha) + ln_gamma(kf + 1.0) - ln_gamma(kf + 1.0 + r / alpha)).exp()
}

/// Largest K <= k_max whose Monte Carlo E[U_K] exceeds tau (factorized
/// estimator, mu_d analytic); None when even K = 2 falls below tau.
pub fn kstar_scan(tail: TailModel, d: usize, tau: Real, k_max: usize, trials: usize, seed: u64) -> Option<usize> {
    assert!(tau > 0.0 && k_max >= 2);
    tail.validate().expect("valid tail");
    let mu = mu_d(d);
    for k in (2..=k_max).rev() {
        let ratios: Vec<Real> = (0..trials)
            .map(|t| {
                let mut rng = trial_rng(seed.wrapping_add(k as u64), t as u64);
                let mags: Vec<Real> = (0..k).map(|_| sample_magnitude(tail, &mut rng)).collect();
                magnitude_ratio(&mags)
            })
            .collect();
        if mu * MCEstimate::from_samples(&ratios).mean > tau {
            return Some(k);
        }
    }
    None
}

/// Loss-indexed kernel tables over a list of channel gradients, split by
/// parameter block. The partition gap is the worst absolute deviation of
/// full - (shared + sum of adapter blocks), which is an exact algebraic
/// identity up to float association.
#[derive(Clone, Debug)]
pub struct NtkCheck {
    pub full: Vec<Vec<Real>>,
    pub shared: Vec<Vec<Real>>,
    pub per_adapter: Vec<(String, Vec<Vec<Real>>)>,
    pub max_partition_gap: Real,
}

fn block_dot(a: &ParamVector, b: &ParamVector, names: &[&str]) -> Real {
    names
        .iter()
        .map(|n| {
            a.block(n)
                .unwrap()
                .iter()
                .zip(b.block(n).unwrap())
                .map(|(x, y)| x * y)
                .sum::<Real>()
        })
        .sum()
}

/// Pairwise kernel of channel gradients (one ParamVector per channel /
/// evaluation point), decomposed over shared vs adapter blocks.
pub fn ntk_block_check(grads: &[ParamVector], adapter_blocks: &[&str]) -> NtkCheck {
    assert!(!grads.is_empty());
    let shared_names: Vec<&str> = grads[0]
        .block_names()
        .filter(|n| !adapter_blocks.contains(n))
        .collect();
    let n = grads.len();
    let mut full = vec![vec![0.0; n]; n];
    let mut shared = vec![vec![0.0; n]; n];
    let mut per_adapter: Vec<(String, Vec<Vec<Real>>)> = adapter_blocks
        .iter()
        .map(|b| (b.to_string(), vec![vec![0.0; n]; n]))
        .collect();
    let mut gap: Real = 0.0;
    for i in 0..n {
        for j in 0..n {
            full[i][j] = grads[i].dot(&grads[j]);
            shared[i][j] = block_dot(&grads[i], &grads[j], &shared_names);
            let mut sum = shared[i][j];
            for (bi, b) in adapter_blocks.iter().enumerate() {
                per_adapter[bi].1[i][j] = block_dot(&grads[i], &grads[j], &[b]);
                sum += per_adapter[bi].1[i][j];
            }
            gap = gap.max((full[i][j] - sum).abs());
        }
    }
    NtkCheck {
        full,
        shared,
        per_adapter,
        max_partition_gap: gap,
    }
}
