//! Loss-weighting and gradient-surgery strategies.
//!
//! Weighting: fixed, loss-driven dual-ascent reweighting on raw or log
//! losses, gradient-norm equalization, and learned homoscedastic
//! uncertainty. Surgery: pairwise projection of conflicting gradients,
//! full or restricted to network parameter blocks.

use crate::{ParamVector, Real};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

/// Dual-ascent logit step size.
pub const FAMO_GAMMA: Real = 0.01;
/// Weight floor applied after the softmax.
pub const FAMO_FLOOR: Real = 0.01;
/// Gradient-norm equalization exponent.
pub const GRADNORM_ALPHA: Real = 1.5;
/// Learning rate of the weight optimizer (gradient-norm and uncertainty).
pub const WEIGHT_LR: Real = 0.025;
const EPS_L: Real = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum BalanceError {
    #[error("unknown parameter block: {0}")]
    UnknownBlock(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BalanceStrategy {
    Fixed,
    Famo,
    FamoLog,
    GradNorm,
    Uncertainty,
    PcGrad,
    PcGradGrouped,
}

/// Mutable per-run state of a weighting strategy.
#[derive(Clone, Debug)]
pub struct WeightState {
    pub strategy: BalanceStrategy,
    pub k: usize,
    /// Dual-ascent logits.
    pub z: Vec<Real>,
    /// Last emitted weights.
    pub w: Vec<Real>,
    /// Log-variance parameters of the uncertainty strategy.
    pub s: Vec<Real>,
    prev_losses: Option<Vec<Real>>,
    init_losses: Option<Vec<Real>>,
    /// Gradient-norm task weights with their own first/second moment
    /// optimizer state.
    gn_w: Vec<Real>,
    gn_m: Vec<Real>,
    gn_v: Vec<Real>,
    gn_t: usize,
    /// Count of steps skipped because a loss was non-finite.
    pub nonfinite_events: usize,
}

impl WeightState {
    pub fn new(strategy: BalanceStrategy, k: usize) -> Self {
        WeightState {
            strategy,
            k,
            z: vec![0.0; k],
            w: vec![1.0 / k as Real; k],
            s: vec![0.0; k],
            prev_losses: None,
            init_losses: None,
            gn_w: vec![1.0; k],
            gn_m: vec![0.0; k],
            gn_v: vec![0.0; k],
            gn_t: 0,
            nonfinite_events: 0,
        }
    }

    fn famo_update(&mut self, losses: &[Real], log_space: bool) -> Vec<Real> {
        debug_assert_eq!(losses.len(), self.k);
        if losses.iter().any(|l| !l.is_finite()) {
            self.nonfinite_events += 1;
            return self.w.clone();
        }
        if let Some(prev) = &self.prev_losses {
            for i in 0..self.k {
                let delta = if log_space {
                    (losses[i] + EPS_L).ln() - (prev[i] + EPS_L).ln()
                } else {
                    losses[i] - prev[i]
                };
                self.z[i] += FAMO_GAMMA * delta;
            }
            self.w = clamped_softmax(&self.z);
        }
        self.prev_losses = Some(losses.to_vec());
        self.w.clone()
    }

    /// Dual-ascent step on raw loss changes; first call records the
    /// losses and returns uniform weights.
    pub fn famo_step(&mut self, losses: &[Real]) -> Vec<Real> {
        self.famo_update(losses, false)
    }

    /// Scale-invariant variant on log-loss changes.
    pub fn famo_log_step(&mut self, losses: &[Real]) -> Vec<Real> {
        self.famo_update(losses, true)
    }

    /// One optimizer step on the gradient-norm equalization objective
    /// sum_k |w_k n_k - target_k| with target_k = mean(w n) * xi_k^alpha,
    /// xi_k the normalized loss ratio. Weights renormalized to sum K.
    pub fn gradnorm_step(&mut self, grad_norms: &[Real], losses: &[Real]) -> Vec<Real> {
        debug_assert_eq!(grad_norms.len(), self.k);
        if losses.iter().chain(grad_norms).any(|v| !v.is_finite()) {
            self.nonfinite_events += 1;
            return self.gn_w.clone();
        }
        if self.init_losses.is_none() {
            self.init_losses = Some(losses.iter().map(|l| l.max(EPS_L)).collect());
        }
        let init = self.init_losses.as_ref().unwrap();
        let ratios: Vec<Real> = losses
            .iter()
            .zip(init)
            .map(|(l, l0)| (l / l0).max(EPS_L))
            .collect();
        let mean_ratio: Real = ratios.iter().sum::<Real>() / self.k as Real;
        let g: Vec<Real> = self
            .gn_w
            .iter()
            .zip(grad_norms)
            .map(|(w, n)| w * n)
            .collect();
        let g_bar: Real = g.iter().sum::<Real>() / self.k as Real;
        let targets: Vec<Real> = ratios
            .iter()
            .map(|r| g_bar * (r / mean_ratio).powf(GRADNORM_ALPHA))
            .collect();

        // d/dw_k |w_k n_k - target_k| with targets held fixed
        self.gn_t += 1;
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        for i in 0..self.k {
            let grad = (g[i] - targets[i]).signum() * grad_norms[i];
            let grad = if g[i] == targets[i] { 0.0 } else { grad };
            self.gn_m[i] = b1 * self.gn_m[i] + (1.0 - b1) * grad;
            self.gn_v[i] = b2 * self.gn_v[i] + (1.0 - b2) * grad * grad;
            let mh = self.gn_m[i] / (1.0 - b1.powi(self.gn_t as i32));
            let vh = self.gn_v[i] / (1.0 - b2.powi(self.gn_t as i32));
            self.gn_w[i] -= WEIGHT_LR * mh / (vh.sqrt() + eps);
            self.gn_w[i] = self.gn_w[i].max(1e-3);
        }
        let sum: Real = self.gn_w.iter().sum();
        for w in &mut self.gn_w {
            *w *= self.k as Real / sum;
        }
        self.gn_w.clone()
    }

    /// One gradient step on the uncertainty parameters; returns the
    /// effective loss weights exp(-s_k).
    pub fn uncertainty_step(&mut self, losses: &[Real]) -> Vec<Real> {
        if losses.iter().any(|l| !l.is_finite()) {
            self.nonfinite_events += 1;
        } else {
            for i in 0..self.k {
                // d/ds (exp(-s) L + s) = 1 - exp(-s) L
                let grad = 1.0 - (-self.s[i]).exp() * losses[i];
                self.s[i] -= WEIGHT_LR * grad;
            }
        }
        self.s.iter().map(|s| (-s).exp()).collect()
    }
}

fn clamped_softmax(z: &[Real]) -> Vec<Real> {
    let zmax = z.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
    let exps: Vec<Real> = z.iter().map(|v| (v - zmax).exp()).collect();
    let sum: Real = exps.iter().sum();
    let mut w: Vec<Real> = exps.iter().map(|e| (e / sum).max(FAMO_FLOOR)).collect();
    let s: Real = w.iter().sum();
    for v in &mut w {
        *v /= s;
    }
    w
}

/// Combined objective sum_k exp(-s_k) L_k + s_k.
pub fn uncertainty_total(losses: &[Real], s: &[Real]) -> Real {
    losses
        .iter()
        .zip(s)
        .map(|(l, sk)| (-sk).exp() * l + sk)
        .sum()
}

/// L1 gradient-norm objective given current weights, per-loss norms, and
/// fixed targets.
pub fn gradnorm_objective(w: &[Real], norms: &[Real], targets: &[Real]) -> Real {
    w.iter()
        .zip(norms)
        .zip(targets)
        .map(|((w, n), t)| (w * n - t).abs())
        .sum()
}

fn dot_skipping(a: &ParamVector, b: &ParamVector, skip: &HashSet<&str>) -> Real {
    let mut acc = 0.0;
    for (name, av) in a.iter_blocks() {
        if skip.contains(name) {
            continue;
        }
        let bv = b.block(name).unwrap();
        for (x, y) in av.iter().zip(bv) {
            acc += x * y;
        }
    }
    acc
}

fn axpy_skipping(a: &mut ParamVector, c: Real, b: &ParamVector, skip: &HashSet<&str>) {
    let names: Vec<String> = a.block_names().map(|s| s.to_string()).collect();
    for name in names {
        if skip.contains(name.as_str()) {
            continue;
        }
        let bv = b.block(&name).unwrap().to_vec();
        let av = a.block_mut(&name).unwrap();
        for (x, y) in av.iter_mut().zip(bv) {
            *x += c * y;
        }
    }
}

fn pcgrad_on_blocks(
    grads: &[ParamVector],
    skip: &HashSet<&str>,
    rng: &mut impl Rng,
) -> ParamVector {
    let k = grads.len();
    let mut combined = grads[0].zeros_like();
    for i in 0..k {
        let mut gi = grads[i].clone();
        let mut order: Vec<usize> = (0..k).filter(|&j| j != i).collect();
        // random surgery order per the reference method
        for idx in (1..order.len()).rev() {
            let swap = rng.gen_range(0..=idx);
            order.swap(idx, swap);
        }
        for j in order {
            let d = dot_skipping(&gi, &grads[j], skip);
            if d < 0.0 {
                let nj = dot_skipping(&grads[j], &grads[j], skip);
                if nj > 0.0 {
                    axpy_skipping(&mut gi, -d / nj, &grads[j], skip);
                }
            }
        }
        // surgered network part; skipped blocks keep the vanilla term
        let mut term = gi;
        for name in skip {
            let src = grads[i].block(name).unwrap().to_vec();
            term.block_mut(name).unwrap().copy_from_slice(&src);
        }
        combined.axpy(1.0, &term);
    }
    combined
}

/// Pairwise projection surgery over the full parameter vector: each g_i
/// loses its component along every conflicting g_j, then the surgered
/// gradients are summed.
pub fn pcgrad_combine(grads: &[ParamVector], rng: &mut impl Rng) -> ParamVector {
    assert!(grads.len() >= 2);
    pcgrad_on_blocks(grads, &HashSet::new(), rng)
}

/// Surgery restricted to network blocks; the named physical blocks
/// receive the plain summed gradient.
pub fn pcgrad_grouped(
    grads: &[ParamVector],
    physical_blocks: &[&str],
    rng: &mut impl Rng,
) -> Result<ParamVector, BalanceError> {
    assert!(grads.len() >= 2);
    for name in physical_blocks {
        if !grads[0].has_block(name) {
            return Err(BalanceError::UnknownBlock(name.to_string()));
        }
    }
    let skip: HashSet<&str> = physical_blocks.iter().copied().collect();
    Ok(pcgrad_on_blocks(grads, &skip, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamVec;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pv(pairs: &[(&str, &[Real])]) -> ParamVector {
        let mut p = ParamVec::new();
        for (n, v) in pairs {
            p.push_block(n, v.to_vec()).unwrap();
        }
        p
    }

    #[test]
    fn famo_first_call_uniform() {
        let mut st = WeightState::new(BalanceStrategy::Famo, 3);
        let w = st.famo_step(&[1.0, 2.0, 3.0]);
        for v in &w {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn famo_hand_softmax() {
        let mut st = WeightState::new(BalanceStrategy::Famo, 2);
        st.famo_step(&[1.0, 1.0]);
        // loss 1 rises by 0.5: z = (0.005, 0)
        let w = st.famo_step(&[1.5, 1.0]);
        assert!((st.z[0] - 0.005).abs() < 1e-15);
        assert!((w[0] - 0.50125).abs() < 1e-5, "{}", w[0]);
        assert!((w[1] - 0.49875).abs() < 1e-5);
    }

    #[test]
    fn famo_unchanged_losses_keep_weights() {
        let mut st = WeightState::new(BalanceStrategy::Famo, 3);
        st.famo_step(&[0.5, 0.2, 0.9]);
        let w1 = st.famo_step(&[0.5, 0.2, 0.9]);
        let w2 = st.famo_step(&[0.5, 0.2, 0.9]);
        assert_eq!(w1, w2);
    }

    #[test]
    fn famo_floor_and_normalization() {
        let mut st = WeightState::new(BalanceStrategy::Famo, 3);
        st.famo_step(&[0.0, 0.0, 0.0]);
        // drive logits far apart
        for t in 0..2000 {
            let l0 = 1000.0 - t as Real;
            st.famo_step(&[l0, 0.0, 0.0]);
        }
        let min = st.w.iter().cloned().fold(Real::INFINITY, Real::min);
        // floor applies before the final renormalization, whose divisor
        // is at most 1 + K * floor
        let bound = FAMO_FLOOR / (1.0 + 3.0 * FAMO_FLOOR);
        assert!(min >= bound - 1e-15, "min weight {min} below {bound}");
        assert!((st.w.iter().sum::<Real>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn famo_nonfinite_keeps_previous_weights() {
        let mut st = WeightState::new(BalanceStrategy::Famo, 2);
        st.famo_step(&[1.0, 2.0]);
        let w_before = st.famo_step(&[0.9, 2.0]);
        let w = st.famo_step(&[Real::NAN, 2.0]);
        assert_eq!(w, w_before);
        assert_eq!(st.nonfinite_events, 1);
    }

    #[test]
    fn log_famo_scale_invariance() {
        let run = |scale: Real| {
            let mut st = WeightState::new(BalanceStrategy::FamoLog, 2);
            st.famo_log_step(&[1.0 * scale, 4.0 * scale]);
            st.famo_log_step(&[0.8 * scale, 4.4 * scale])
        };
        let a = run(1.0);
        let b = run(10.0);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn log_famo_halving_delta() {
        let mut st = WeightState::new(BalanceStrategy::FamoLog, 1);
        st.famo_log_step(&[2.0]);
        st.famo_log_step(&[1.0]);
        let expect = FAMO_GAMMA * (0.5f64.ln());
        assert!((st.z[0] - expect).abs() < 1e-12);
        // zero losses stay finite through the floor
        st.famo_log_step(&[0.0]);
        assert!(st.z[0].is_finite());
    }

    #[test]
    fn gradnorm_hand_objective() {
        let obj = gradnorm_objective(&[1.0, 1.0], &[2.0, 1.0], &[1.5, 1.5]);
        assert!((obj - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gradnorm_symmetric_fixed_point() {
        let mut st = WeightState::new(BalanceStrategy::GradNorm, 2);
        // equal norms, equal ratios: objective zero, weights unchanged
        let w = st.gradnorm_step(&[1.0, 1.0], &[1.0, 1.0]);
        assert_eq!(w, vec![1.0, 1.0]);
    }

    #[test]
    fn gradnorm_renormalizes_to_k() {
        let mut st = WeightState::new(BalanceStrategy::GradNorm, 3);
        st.gradnorm_step(&[1.0, 2.0, 0.5], &[1.0, 1.0, 1.0]);
        for _ in 0..20 {
            let w = st.gradnorm_step(&[1.0, 2.0, 0.5], &[0.9, 1.5, 0.3]);
            assert!((w.iter().sum::<Real>() - 3.0).abs() < 1e-10);
            assert!(w.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn gradnorm_pushes_large_norm_weight_down() {
        let mut st = WeightState::new(BalanceStrategy::GradNorm, 2);
        st.gradnorm_step(&[1.0, 1.0], &[1.0, 1.0]);
        let mut w = vec![1.0, 1.0];
        for _ in 0..50 {
            w = st.gradnorm_step(&[4.0, 1.0], &[1.0, 1.0]);
        }
        assert!(w[0] < w[1]);
    }

    #[test]
    fn uncertainty_identities() {
        assert!((uncertainty_total(&[1.0, 2.0], &[0.0, 0.0]) - 3.0).abs() < 1e-15);
        assert!((uncertainty_total(&[0.0, 0.0], &[0.3, 0.7]) - 1.0).abs() < 1e-15);
        // stationary at s = ln L
        let l: Real = 2.5;
        let s = l.ln();
        let grad = 1.0 - (-s).exp() * l;
        assert!(grad.abs() < 1e-15);
    }

    #[test]
    fn uncertainty_step_moves_toward_stationarity() {
        let mut st = WeightState::new(BalanceStrategy::Uncertainty, 1);
        for _ in 0..4000 {
            st.uncertainty_step(&[2.5]);
        }
        assert!((st.s[0] - 2.5f64.ln()).abs() < 1e-3);
    }

    #[test]
    fn pcgrad_hand_projection() {
        let g1 = pv(&[("x", &[1.0, 0.0])]);
        let g2 = pv(&[("x", &[-1.0, 1.0])]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = pcgrad_combine(&[g1, g2], &mut rng);
        // g1 -> (0.5, 0.5); g2 -> (0, 1); sum (0.5, 1.5)
        let v = out.block("x").unwrap();
        assert!((v[0] - 0.5).abs() < 1e-12);
        assert!((v[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn pcgrad_nonconflicting_untouched() {
        let g1 = pv(&[("x", &[1.0, 0.2])]);
        let g2 = pv(&[("x", &[0.5, 1.0])]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = pcgrad_combine(&[g1.clone(), g2.clone()], &mut rng);
        let v = out.block("x").unwrap();
        assert!((v[0] - 1.5).abs() < 1e-12);
        assert!((v[1] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn pcgrad_antipodal_annihilation() {
        let g1 = pv(&[("x", &[2.0, -1.0])]);
        let mut g2 = g1.clone();
        g2.scale_in_place(-1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = pcgrad_combine(&[g1, g2], &mut rng);
        assert!(out.norm() < 1e-12);
    }

    #[test]
    fn grouped_leaves_physical_at_vanilla_sum() {
        // heterogeneous scales: tiny network grads, huge physical grads
        let g1 = pv(&[("net", &[1e-2, 0.0]), ("alpha", &[1e2])]);
        let g2 = pv(&[("net", &[-1e-2, 1e-2]), ("alpha", &[-3e2])]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = pcgrad_grouped(&[g1.clone(), g2.clone()], &["alpha"], &mut rng).unwrap();
        let a = out.block("alpha").unwrap();
        assert!((a[0] - (1e2 - 3e2)).abs() < 1e-12);
        // network part got surgery (differs from plain sum)
        let plain = g1.add(&g2);
        let n = out.block("net").unwrap();
        assert!((n[0] - plain.block("net").unwrap()[0]).abs() > 1e-4);
    }

    #[test]
    fn grouped_equals_full_without_physical_blocks() {
        let g1 = pv(&[("net", &[1.0, 0.0])]);
        let g2 = pv(&[("net", &[-1.0, 1.0])]);
        let a = pcgrad_combine(&[g1.clone(), g2.clone()], &mut ChaCha8Rng::seed_from_u64(4));
        let b = pcgrad_grouped(&[g1, g2], &[], &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grouped_unknown_block_rejected() {
        let g1 = pv(&[("net", &[1.0])]);
        let g2 = pv(&[("net", &[2.0])]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(
            pcgrad_grouped(&[g1, g2], &["bogus"], &mut rng),
            Err(BalanceError::UnknownBlock("bogus".into()))
        );
    }

    proptest! {
        #[test]
        fn pcgrad_k2_nonnegative_dots(
            a in proptest::collection::vec(-5.0f64..5.0, 3),
            b in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            let g1 = pv(&[("x", &a)]);
            let g2 = pv(&[("x", &b)]);
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let out = pcgrad_combine(&[g1.clone(), g2.clone()], &mut rng);
            prop_assert!(out.dot(&g1) >= -1e-9);
            prop_assert!(out.dot(&g2) >= -1e-9);
        }

        #[test]
        fn famo_invariants_hold(losses in proptest::collection::vec(0.0f64..10.0, 6)) {
            let mut st = WeightState::new(BalanceStrategy::Famo, 3);
            st.famo_step(&losses[..3].to_vec());
            let w = st.famo_step(&losses[3..].to_vec());
            prop_assert!((w.iter().sum::<Real>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|&v| v >= FAMO_FLOOR - 1e-15));
        }
    }
}
