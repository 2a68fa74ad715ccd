//! Conflict metrics, per-step summaries, and windowed profiling
//! statistics.
//!
//! Step quantities: the fraction `f_neg` of loss pairs with negative
//! cosine, the mean negative cosine, the directional score
//! `D = f_neg * |mean_neg_cos|`, and the coefficient of variation `M` of
//! gradient norms. Window summaries average these over a profiling run
//! and add the persistence ratio `P` (late-third over early-third mean of
//! `f_neg`) and the least-squares slope of `f_neg` against the step index.

use crate::params::ParamVec;
use crate::scalar::Scalar;
use serde::Serialize;
use thiserror::Error;

/// Numerical floor for gradient norms in logs and ratios.
pub const EPS_G: f64 = 1e-12;
/// Floor in the directional-to-magnitude surrogate ratio.
pub const EPS_R: f64 = 1e-8;
/// Floor in the persistence denominator.
pub const EPS_P: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} {what}, got {got}")]
    TooFew {
        what: &'static str,
        need: usize,
        got: usize,
    },
}

/// Cosine similarity with the zero-gradient convention: 0 when either
/// norm vanishes.
pub fn safe_cosine<S: Scalar>(a: &[S], b: &[S]) -> Result<S, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    let mut dot = S::zero();
    let mut na = S::zero();
    let mut nb = S::zero();
    for (x, y) in a.iter().zip(b) {
        dot = dot + *x * *y;
        na = na + *x * *x;
        nb = nb + *y * *y;
    }
    let (na, nb) = (na.sqrt(), nb.sqrt());
    if na == S::zero() || nb == S::zero() {
        Ok(S::zero())
    } else {
        Ok(dot / (na * nb))
    }
}

/// Regularized magnitude-aware conflict score from cosine and norms:
/// `[cos]_- * (1 + |log((|gi|+eps)/(|gj|+eps))|)`.
pub fn conflict_score_parts<S: Scalar>(cos: S, norm_i: S, norm_j: S, eps_g: S) -> S {
    let neg = (-cos).max(S::zero());
    let ratio = (norm_i + eps_g) / (norm_j + eps_g);
    neg * (S::one() + ratio.ln().abs())
}

/// Conflict score of two gradient vectors (regularized cosine and
/// log-norm-ratio factor). Nonnegative and symmetric.
pub fn conflict_score<S: Scalar>(g_i: &[S], g_j: &[S], eps_g: S) -> Result<S, MetricsError> {
    if g_i.len() != g_j.len() {
        return Err(MetricsError::LengthMismatch(g_i.len(), g_j.len()));
    }
    let cos = safe_cosine(g_i, g_j)?;
    let ni = norm(g_i);
    let nj = norm(g_j);
    Ok(conflict_score_parts(cos, ni, nj, eps_g))
}

fn norm<S: Scalar>(v: &[S]) -> S {
    v.iter().fold(S::zero(), |acc, &x| acc + x * x).sqrt()
}

/// Aggregate conflict for loss `k`: mean of row `k` of the pairwise
/// conflict matrix over the other losses.
pub fn aggregate_conflict<S: Scalar>(c: &[Vec<S>], k: usize) -> Result<S, MetricsError> {
    let kk = c.len();
    if kk < 2 {
        return Err(MetricsError::TooFew {
            what: "losses",
            need: 2,
            got: kk,
        });
    }
    let mut acc = S::zero();
    for (j, row) in c[k].iter().enumerate() {
        if j != k {
            acc = acc + *row;
        }
    }
    Ok(acc / S::c((kk - 1) as f64))
}

/// Mean over pairs of (max norm + eps)/(min norm + eps); always >= 1.
pub fn magnitude_ratio_bar<S: Scalar>(norms: &[S]) -> Result<S, MetricsError> {
    let k = norms.len();
    if k < 2 {
        return Err(MetricsError::TooFew {
            what: "losses",
            need: 2,
            got: k,
        });
    }
    let eps = S::c(EPS_G);
    let mut acc = S::zero();
    let mut n_pairs = 0usize;
    for i in 0..k {
        for j in (i + 1)..k {
            let hi = norms[i].max(norms[j]);
            let lo = norms[i].min(norms[j]);
            acc = acc + (hi + eps) / (lo + eps);
            n_pairs += 1;
        }
    }
    Ok(acc / S::c(n_pairs as f64))
}

/// Per-step per-loss gradient statistics.
#[derive(Clone, Debug)]
pub struct StepConflictRecord<S> {
    pub step: usize,
    /// Per-loss gradient norms.
    pub norms: Vec<S>,
    /// Pairwise cosines in (i, j) upper-triangle order.
    pub cosines: Vec<S>,
    /// Fraction of pairs with negative cosine.
    pub f_neg: S,
    /// Mean cosine over negative pairs, 0 if none.
    pub mean_neg_cos: S,
    /// Directional conflict D = f_neg * |mean_neg_cos|.
    pub directional: S,
    /// Magnitude imbalance M = population std of norms / (mean + eps).
    pub magnitude_cv: S,
}

impl<S: Scalar> StepConflictRecord<S> {
    /// Build a record from precomputed norms and pairwise cosines.
    pub fn from_parts(step: usize, norms: Vec<S>, cosines: Vec<S>) -> Result<Self, MetricsError> {
        let k = norms.len();
        if k < 2 {
            return Err(MetricsError::TooFew {
                what: "losses",
                need: 2,
                got: k,
            });
        }
        let n_pairs = k * (k - 1) / 2;
        if cosines.len() != n_pairs {
            return Err(MetricsError::LengthMismatch(cosines.len(), n_pairs));
        }
        let neg: Vec<S> = cosines.iter().copied().filter(|c| *c < S::zero()).collect();
        let f_neg = S::c(neg.len() as f64) / S::c(n_pairs as f64);
        let mean_neg_cos = if neg.is_empty() {
            S::zero()
        } else {
            neg.iter().fold(S::zero(), |a, &c| a + c) / S::c(neg.len() as f64)
        };
        let directional = f_neg * mean_neg_cos.abs();
        // population std (divide by K) keeps M defined for K = 2
        let mean = norms.iter().fold(S::zero(), |a, &n| a + n) / S::c(k as f64);
        let var = norms
            .iter()
            .fold(S::zero(), |a, &n| a + (n - mean) * (n - mean))
            / S::c(k as f64);
        let magnitude_cv = var.sqrt() / (mean + S::c(EPS_G));
        Ok(StepConflictRecord {
            step,
            norms,
            cosines,
            f_neg,
            mean_neg_cos,
            directional,
            magnitude_cv,
        })
    }
}

/// Per-step summaries of a set of per-loss gradients.
pub fn step_summaries<S: Scalar>(
    step: usize,
    grads: &[ParamVec<S>],
) -> Result<StepConflictRecord<S>, MetricsError> {
    let k = grads.len();
    if k < 2 {
        return Err(MetricsError::TooFew {
            what: "losses",
            need: 2,
            got: k,
        });
    }
    let norms: Vec<S> = grads.iter().map(|g| g.norm()).collect();
    let mut cosines = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            let c = if norms[i] == S::zero() || norms[j] == S::zero() {
                S::zero()
            } else {
                grads[i].dot(&grads[j]) / (norms[i] * norms[j])
            };
            cosines.push(c);
        }
    }
    StepConflictRecord::from_parts(step, norms, cosines)
}

/// Pairwise conflict matrix (symmetric, zero diagonal) from per-loss
/// gradient norms and cosines.
pub fn conflict_matrix<S: Scalar>(norms: &[S], cosines: &[S]) -> Vec<Vec<S>> {
    let k = norms.len();
    let eps = S::c(EPS_G);
    let mut m = vec![vec![S::zero(); k]; k];
    let mut idx = 0;
    for i in 0..k {
        for j in (i + 1)..k {
            let s = conflict_score_parts(cosines[idx], norms[i], norms[j], eps);
            m[i][j] = s;
            m[j][i] = s;
            idx += 1;
        }
    }
    m
}

/// Windowed profiling summary over a vanilla optimization window.
#[derive(Clone, Debug)]
pub struct ConflictProfile<S> {
    pub records: Vec<StepConflictRecord<S>>,
    pub f_neg_hat: S,
    pub d_hat: S,
    pub m_hat: S,
    pub r_hat: S,
    /// Persistence: late-third mean of f_neg over early-third mean.
    pub persistence: S,
    /// Least-squares slope of f_neg against the raw step index.
    pub slope: S,
    /// Relative L2 error of the profiled vanilla run on the test grid,
    /// filled by the profiler.
    pub eps_van: Option<S>,
    /// Set when profiling diverged; the selector falls back to its
    /// default conflict branch.
    pub failed: bool,
}

/// Window means plus persistence and slope. With `T` not divisible by 3
/// the early/late thirds use `floor(T/3)` entries each.
pub fn profile_summaries<S: Scalar>(
    records: Vec<StepConflictRecord<S>>,
) -> Result<ConflictProfile<S>, MetricsError> {
    let t = records.len();
    if t < 3 {
        return Err(MetricsError::TooFew {
            what: "records",
            need: 3,
            got: t,
        });
    }
    let tf = S::c(t as f64);
    let mut f_neg_hat = S::zero();
    let mut d_hat = S::zero();
    let mut m_hat = S::zero();
    for r in &records {
        f_neg_hat = f_neg_hat + r.f_neg;
        d_hat = d_hat + r.directional;
        m_hat = m_hat + r.magnitude_cv;
    }
    f_neg_hat = f_neg_hat / tf;
    d_hat = d_hat / tf;
    m_hat = m_hat / tf;
    let r_hat = d_hat / (m_hat + S::c(EPS_R));

    let third = t / 3;
    let mean_f = |slice: &[StepConflictRecord<S>]| {
        slice.iter().fold(S::zero(), |a, r| a + r.f_neg) / S::c(slice.len() as f64)
    };
    let early = mean_f(&records[..third]);
    let late = mean_f(&records[t - third..]);
    let persistence = late / early.max(S::c(EPS_P));

    // ordinary least squares of f_neg against 0-based index
    let n = tf;
    let mut sx = S::zero();
    let mut sy = S::zero();
    let mut sxx = S::zero();
    let mut sxy = S::zero();
    for (i, r) in records.iter().enumerate() {
        let x = S::c(i as f64);
        sx = sx + x;
        sy = sy + r.f_neg;
        sxx = sxx + x * x;
        sxy = sxy + x * r.f_neg;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);

    Ok(ConflictProfile {
        records,
        f_neg_hat,
        d_hat,
        m_hat,
        r_hat,
        persistence,
        slope,
        eps_van: None,
        failed: false,
    })
}

/// JSON summary record of a profile.
#[derive(Clone, Debug, Serialize)]
pub struct ProfileSummaryJson {
    pub f_neg_hat: f64,
    pub d_hat: f64,
    pub m_hat: f64,
    pub r_hat: f64,
    pub persistence: f64,
    pub slope: f64,
    pub eps_van: Option<f64>,
    pub failed: bool,
    pub steps: usize,
}

impl ConflictProfile<f64> {
    pub fn summary_json(&self) -> ProfileSummaryJson {
        ProfileSummaryJson {
            f_neg_hat: self.f_neg_hat,
            d_hat: self.d_hat,
            m_hat: self.m_hat,
            r_hat: self.r_hat,
            persistence: self.persistence,
            slope: self.slope,
            eps_van: self.eps_van,
            failed: self.failed,
            steps: self.records.len(),
        }
    }

    /// CSV: one row per step with t, per-loss norms, f_neg, D, M.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let k = self.records.first().map(|r| r.norms.len()).unwrap_or(0);
        let mut header = String::from("t");
        for i in 1..=k {
            header.push_str(&format!(",norm_{i}"));
        }
        header.push_str(",f_neg,D,M");
        writeln!(w, "{header}")?;
        for r in &self.records {
            let mut line = format!("{}", r.step);
            for n in &r.norms {
                line.push_str(&format!(",{:.17e}", n));
            }
            line.push_str(&format!(
                ",{:.17e},{:.17e},{:.17e}",
                r.f_neg, r.directional, r.magnitude_cv
            ));
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}
