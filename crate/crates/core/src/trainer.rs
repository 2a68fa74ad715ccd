//! Training loop: warm-up, per-loss weighting, conflict-aware mixing
//! updates, orthogonality regularization, decoupled-weight-decay
//! adaptive-moment optimization, cosine schedule, gradient clipping.

use crate::autodiff::Node;
use crate::balance::{pcgrad_combine, pcgrad_grouped, BalanceStrategy, WeightState};
use crate::metrics::{aggregate_conflict, conflict_score, step_summaries, StepConflictRecord, EPS_G};
use crate::model::{MixingMode, ModelError, PinnModel, Tracer, LAMBDA_CROSS, LAMBDA_SELF, RHO_MAX, RHO_MIN};
use crate::problems::{relative_l2, CollocationCounts, Problem, ProblemError};
use crate::{Graph, ParamVector, Real};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Hyperparameters of one training run.
#[derive(Clone, Debug, Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Linear learning-rate ramp length; mixing stays uniform before it.
    pub warmup: usize,
    pub lr: Real,
    /// Decoupled weight decay, skipped on the physical block.
    pub weight_decay: Real,
    pub clip_norm: Real,
    /// Mixing update period after warm-up.
    pub mixing_period: usize,
    /// EMA momentum of the smoothed conflict scores.
    pub ema_beta: Real,
    /// Mixing bias a0 and sensitivity b of rho = sigmoid(a0 - b C).
    pub a0: Real,
    pub b: Real,
    /// Layerwise mixing bias offsets, interpolated linearly from the
    /// first residual layer to the last.
    pub delta_shallow: Real,
    pub delta_deep: Real,
    pub lambda_ortho: Real,
    pub lambda_cross: Real,
    /// Clip range of the mixing scores rho.
    pub rho_min: Real,
    pub rho_max: Real,
    pub seed: u64,
    pub strategy: BalanceStrategy,
    pub counts: CollocationCounts,
    /// Record full per-loss gradient statistics every epoch (profiling).
    pub record_conflict: bool,
}

impl TrainConfig {
    pub fn desk(epochs: usize, seed: u64) -> Self {
        TrainConfig {
            epochs,
            warmup: 200,
            lr: 1e-3,
            weight_decay: 1e-5,
            clip_norm: 1.0,
            mixing_period: 20,
            ema_beta: 0.95,
            a0: 1.0,
            b: 2.0,
            delta_shallow: 0.3,
            delta_deep: -0.3,
            lambda_ortho: LAMBDA_SELF,
            lambda_cross: LAMBDA_CROSS,
            rho_min: RHO_MIN,
            rho_max: RHO_MAX,
            seed,
            strategy: BalanceStrategy::Famo,
            counts: CollocationCounts::default(),
            record_conflict: false,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.warmup >= self.epochs {
            return Err(TrainError::BadConfig(format!(
                "warmup {} must be below epochs {}",
                self.warmup, self.epochs
            )));
        }
        if !(self.clip_norm > 0.0) {
            return Err(TrainError::BadConfig("clip_norm must be positive".into()));
        }
        if self.mixing_period == 0 {
            return Err(TrainError::BadConfig("mixing_period must be >= 1".into()));
        }
        if !(0.0 < self.rho_min && self.rho_min < self.rho_max && self.rho_max < 1.0) {
            return Err(TrainError::BadConfig(format!(
                "need 0 < rho_min < rho_max < 1, got [{}, {}]",
                self.rho_min, self.rho_max
            )));
        }
        Ok(())
    }
}

/// Curves and outcomes of one run. Curves have one entry per completed
/// epoch; a failed run keeps its partial curves.
#[derive(Clone, Debug, Default)]
pub struct TrainResult {
    pub loss_curves: Vec<Vec<Real>>,
    pub total_curve: Vec<Real>,
    pub weight_curves: Vec<Vec<Real>>,
    pub lr_curve: Vec<Real>,
    pub ortho_curve: Vec<Real>,
    pub conflict_records: Vec<StepConflictRecord<Real>>,
    pub final_rel_l2: Option<Real>,
    /// Recovered physical scalar (inverse problems).
    pub physical: Option<Real>,
    pub wall_time_s: Real,
    pub failed: bool,
}

impl TrainResult {
    /// Per-epoch log: epoch, per-loss values, weights, lr, f_neg.
    pub fn write_log_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let k = self.loss_curves.first().map_or(0, |v| v.len());
        let loss_cols: Vec<String> = (0..k).map(|i| format!("loss{i}")).collect();
        let weight_cols: Vec<String> = (0..k).map(|i| format!("w{i}")).collect();
        writeln!(w, "epoch,{},{},lr,f_neg", loss_cols.join(","), weight_cols.join(","))?;
        for t in 0..self.loss_curves.len() {
            let ls: Vec<String> = self.loss_curves[t].iter().map(|v| format!("{v:.17e}")).collect();
            let ws: Vec<String> = self.weight_curves[t].iter().map(|v| format!("{v:.17e}")).collect();
            let f_neg = self
                .conflict_records
                .get(t)
                .map_or(String::new(), |r| format!("{:.17e}", r.f_neg));
            writeln!(w, "{t},{},{},{:.17e},{f_neg}", ls.join(","), ws.join(","), self.lr_curve[t])?;
        }
        Ok(())
    }
}

/// Linear ramp 0 -> lr over the warm-up, then cosine decay to 0 at the
/// final epoch.
pub fn lr_schedule(t: usize, cfg: &TrainConfig) -> Real {
    if t < cfg.warmup {
        return cfg.lr * t as Real / cfg.warmup as Real;
    }
    let span = (cfg.epochs - cfg.warmup) as Real;
    let frac = (t - cfg.warmup) as Real / span;
    cfg.lr * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// beta * old + (1 - beta) * new.
pub fn ema(old: Real, new: Real, beta: Real) -> Real {
    beta * old + (1.0 - beta) * new
}

/// Rescale in place iff the global L2 norm exceeds `max_norm`.
pub fn clip_global_norm(grad: &mut ParamVector, max_norm: Real) {
    let n = grad.norm();
    if n > max_norm {
        grad.scale_in_place(max_norm / n);
    }
}

/// rho = sigmoid(a0 + delta - b * conflict), clipped to [lo, hi].
/// Larger conflict gives smaller rho and hence larger pi.
pub fn rho_update(conflict: Real, a0: Real, delta: Real, b: Real, lo: Real, hi: Real) -> Real {
    let z = a0 + delta - b * conflict;
    let sig = 1.0 / (1.0 + (-z).exp());
    sig.clamp(lo, hi)
}

/// Layer bias offset, linear from `delta_shallow` (first layer) to
/// `delta_deep` (last layer).
pub fn layer_delta(l: usize, depth: usize, cfg: &TrainConfig) -> Real {
    if depth <= 1 {
        return 0.5 * (cfg.delta_shallow + cfg.delta_deep);
    }
    let t = l as Real / (depth - 1) as Real;
    cfg.delta_shallow + t * (cfg.delta_deep - cfg.delta_shallow)
}

/// Adaptive-moment optimizer with decoupled weight decay (moment
/// coefficients 0.9 / 0.999); decay skips the named block.
pub struct AdamW {
    m: ParamVector,
    v: ParamVector,
    t: usize,
}

impl AdamW {
    pub fn new(like: &ParamVector) -> Self {
        AdamW {
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
        }
    }

    pub fn step(
        &mut self,
        params: &mut ParamVector,
        grad: &ParamVector,
        lr: Real,
        weight_decay: Real,
        skip_decay: &str,
    ) {
        debug_assert!(params.same_shape(grad));
        self.t += 1;
        let (b1, b2, eps): (Real, Real, Real) = (0.9, 0.999, 1e-8);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let names: Vec<String> = params.block_names().map(|s| s.to_string()).collect();
        for name in names {
            let decay = if name == skip_decay { 0.0 } else { weight_decay };
            let gb = grad.block(&name).unwrap().to_vec();
            let mb = self.m.block_mut(&name).unwrap();
            let vb = {
                for (m, g) in mb.iter_mut().zip(&gb) {
                    *m = b1 * *m + (1.0 - b1) * g;
                }
                self.v.block_mut(&name).unwrap()
            };
            for (v, g) in vb.iter_mut().zip(&gb) {
                *v = b2 * *v + (1.0 - b2) * g * g;
            }
            let mb = self.m.block(&name).unwrap().to_vec();
            let vb = self.v.block(&name).unwrap().to_vec();
            let pb = params.block_mut(&name).unwrap();
            for i in 0..pb.len() {
                let mh = mb[i] / bc1;
                let vh = vb[i] / bc2;
                pb[i] -= lr * (mh / (vh.sqrt() + eps) + decay * pb[i]);
            }
        }
    }
}

fn per_loss_gradients(g: &Graph, tracer: &Tracer, nodes: &[Node]) -> Vec<ParamVector> {
    nodes
        .iter()
        .map(|&n| {
            let adj = g.backward(n);
            tracer.gradient(&adj)
        })
        .collect()
}

/// Smoothed per-layer per-loss conflict from trunk-restricted per-loss
/// gradients; layerwise slicing only in the layerwise mode.
fn update_mixing(
    model: &PinnModel,
    grads: &[ParamVector],
    ema_c: &mut [Vec<Real>],
    cfg: &TrainConfig,
) -> Vec<Vec<Real>> {
    let k = model.num_losses();
    let depth = model.cfg.trunk.depth;
    let layerwise = model.mixing.mode == MixingMode::Lcam;
    let trunk: Vec<&[Real]> = grads.iter().map(|g| g.block("trunk").unwrap()).collect();

    let mut new_rho = vec![vec![0.0; k]; depth];
    for l in 0..depth {
        let slices: Vec<&[Real]> = if layerwise {
            let r = model.trunk_layer_range(l);
            trunk.iter().map(|t| &t[r.clone()]).collect()
        } else {
            trunk.clone()
        };
        if layerwise || l == 0 {
            let mut c = vec![vec![0.0; k]; k];
            for i in 0..k {
                for j in (i + 1)..k {
                    let s = conflict_score(slices[i], slices[j], EPS_G).unwrap();
                    c[i][j] = s;
                    c[j][i] = s;
                }
            }
            for ki in 0..k {
                let agg = aggregate_conflict(&c, ki).unwrap();
                ema_c[l][ki] = ema(ema_c[l][ki], agg, cfg.ema_beta);
            }
        } else {
            // layer-independent mode shares the layer-0 score
            let (head, tail) = ema_c.split_at_mut(l);
            tail[0].copy_from_slice(&head[0]);
        }
        let delta = if layerwise { layer_delta(l, depth, cfg) } else { 0.0 };
        for ki in 0..k {
            new_rho[l][ki] = rho_update(ema_c[l][ki], cfg.a0, delta, cfg.b, cfg.rho_min, cfg.rho_max);
        }
    }
    new_rho
}

/// Run the training loop; a non-finite loss sets the failure flag and
/// keeps the partial curves instead of raising.
pub fn train(
    problem: &dyn Problem,
    model: &mut PinnModel,
    cfg: &TrainConfig,
) -> Result<TrainResult, TrainError> {
    cfg.validate()?;
    assert_eq!(problem.input_dim(), model.cfg.trunk.input_dim);
    assert_eq!(problem.num_losses(), model.num_losses());

    let k = model.num_losses();
    let depth = model.cfg.trunk.depth;
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(&model.params);
    let mut wstate = WeightState::new(cfg.strategy, k);
    let mut ema_c = vec![vec![0.0; k]; depth];
    let mut out = TrainResult::default();
    let surgery = matches!(
        cfg.strategy,
        BalanceStrategy::PcGrad | BalanceStrategy::PcGradGrouped
    );

    for t in 0..cfg.epochs {
        let lr = lr_schedule(t, cfg);
        let colloc = problem.sample(&cfg.counts, &mut rng);
        let mut g = Graph::new();
        let tracer = Tracer::new(&mut g, model);
        let loss_nodes = problem.losses(&mut g, &tracer, &colloc);
        debug_assert_eq!(loss_nodes.len(), k);
        let ortho_node = tracer.ortho_regularizer(&mut g, cfg.lambda_ortho, cfg.lambda_cross);
        let losses: Vec<Real> = loss_nodes.iter().map(|&n| g.value(n)).collect();
        let ortho_val = g.value(ortho_node);
        if losses.iter().any(|l| !l.is_finite()) || !ortho_val.is_finite() {
            out.failed = true;
            break;
        }

        let mixing_epoch = matches!(model.mixing.mode, MixingMode::Cam | MixingMode::Lcam)
            && t >= cfg.warmup
            && (t - cfg.warmup) % cfg.mixing_period == 0;
        let need_per_loss = surgery
            || cfg.record_conflict
            || mixing_epoch
            || cfg.strategy == BalanceStrategy::GradNorm;
        let per_loss = if need_per_loss {
            per_loss_gradients(&g, &tracer, &loss_nodes)
        } else {
            Vec::new()
        };
        if cfg.record_conflict {
            out.conflict_records
                .push(step_summaries(t, &per_loss).expect("K >= 2"));
        }

        let weights = match cfg.strategy {
            BalanceStrategy::Fixed | BalanceStrategy::PcGrad | BalanceStrategy::PcGradGrouped => {
                vec![1.0; k]
            }
            BalanceStrategy::Famo => wstate.famo_step(&losses),
            BalanceStrategy::FamoLog => wstate.famo_log_step(&losses),
            BalanceStrategy::GradNorm => {
                let norms: Vec<Real> = per_loss.iter().map(|g| g.norm()).collect();
                wstate.gradnorm_step(&norms, &losses)
            }
            BalanceStrategy::Uncertainty => wstate.uncertainty_step(&losses),
        };

        let mut grad = if surgery {
            let mut combined = if cfg.strategy == BalanceStrategy::PcGradGrouped
                && model.params.has_block("physical")
            {
                pcgrad_grouped(&per_loss, &["physical"], &mut rng).expect("block exists")
            } else {
                pcgrad_combine(&per_loss, &mut rng)
            };
            if model.has_adapters() {
                let adj = g.backward(ortho_node);
                combined.axpy(1.0, &tracer.gradient(&adj));
            }
            combined
        } else {
            let mut total = g.scale(loss_nodes[0], weights[0]);
            for ki in 1..k {
                let term = g.scale(loss_nodes[ki], weights[ki]);
                total = g.add(total, term);
            }
            total = g.add(total, ortho_node);
            let adj = g.backward(total);
            tracer.gradient(&adj)
        };
        drop(tracer);

        if !grad.is_finite() {
            out.failed = true;
            break;
        }
        clip_global_norm(&mut grad, cfg.clip_norm);
        opt.step(&mut model.params, &grad, lr, cfg.weight_decay, "physical");

        if mixing_epoch {
            model.mixing.rho = update_mixing(model, &per_loss, &mut ema_c, cfg);
            model.mixing.refresh()?;
        }

        let total_val: Real = losses.iter().zip(&weights).map(|(l, w)| l * w).sum::<Real>() + ortho_val;
        out.loss_curves.push(losses);
        out.weight_curves.push(weights);
        out.lr_curve.push(lr);
        out.ortho_curve.push(ortho_val);
        out.total_curve.push(total_val);
    }

    out.final_rel_l2 = relative_l2(model, problem).ok();
    out.physical = model
        .params
        .block("physical")
        .ok()
        .and_then(|b| b.first().map(|v| v.exp()));
    out.wall_time_s = start.elapsed().as_secs_f64();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MixingState, ModelConfig};
    use crate::problems::make_problem;

    fn tiny_train_cfg(epochs: usize, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::desk(epochs, seed);
        cfg.warmup = epochs / 4;
        cfg.counts = CollocationCounts {
            interior: 8,
            boundary: 4,
            initial: 4,
            data: 4,
        };
        cfg
    }

    fn tiny_model(problem: &dyn Problem, rank: usize, seed: u64) -> PinnModel {
        let mut mc = ModelConfig::desk(problem.input_dim(), problem.num_losses());
        mc.trunk.hidden_dim = 8;
        mc.trunk.depth = 2;
        mc.trunk.fourier_bands = 2;
        mc.rank = rank;
        if let Some(spec) = problem.physical() {
            mc.physical_init = vec![spec.init_log];
        }
        PinnModel::new(mc, MixingMode::Uam, seed).unwrap()
    }

    #[test]
    fn lr_schedule_examples() {
        let mut cfg = TrainConfig::desk(1000, 0);
        cfg.warmup = 200;
        assert_eq!(lr_schedule(0, &cfg), 0.0);
        assert!((lr_schedule(200, &cfg) - cfg.lr).abs() < 1e-15);
        // cosine midpoint
        assert!((lr_schedule(600, &cfg) - cfg.lr / 2.0).abs() < 1e-15);
        assert!(lr_schedule(999, &cfg) > 0.0);
    }

    #[test]
    fn ema_examples() {
        assert_eq!(ema(0.7, 0.7, 0.95), 0.7);
        assert!((ema(0.0, 1.0, 0.95) - 0.05).abs() < 1e-15);
        // geometric convergence toward a fixed input
        let mut e: Real = 0.0;
        for t in 1..=50 {
            e = ema(e, 1.0, 0.95);
            assert!(((1.0 - e) - 0.95f64.powi(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn clip_examples() {
        let mut p = ParamVector::new();
        p.push_block("a", vec![0.3, 0.4]).unwrap();
        let orig = p.clone();
        clip_global_norm(&mut p, 1.0);
        assert_eq!(p, orig);

        let mut p = ParamVector::new();
        p.push_block("a", vec![4.0, 0.0]).unwrap();
        clip_global_norm(&mut p, 1.0);
        assert_eq!(p.block("a").unwrap(), &[1.0, 0.0]);
        assert!(p.norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn rho_update_examples() {
        let sig = |z: Real| 1.0 / (1.0 + (-z).exp());
        assert!((rho_update(0.0, 1.0, 0.0, 2.0, RHO_MIN, RHO_MAX) - sig(1.0)).abs() < 1e-12);
        assert!((rho_update(0.0, 1.0, 0.0, 2.0, RHO_MIN, RHO_MAX) - 0.7311).abs() < 1e-4);
        // sigma(-5) clips to the floor
        assert_eq!(rho_update(3.0, 1.0, 0.0, 2.0, RHO_MIN, RHO_MAX), RHO_MIN);
        // shallow layerwise bias
        assert!((rho_update(0.0, 1.0, 0.3, 2.0, RHO_MIN, RHO_MAX) - 0.7858).abs() < 1e-4);
    }

    #[test]
    fn layer_delta_interpolates() {
        let cfg = TrainConfig::desk(10, 0);
        assert_eq!(layer_delta(0, 3, &cfg), 0.3);
        assert!((layer_delta(1, 3, &cfg)).abs() < 1e-15);
        assert_eq!(layer_delta(2, 3, &cfg), -0.3);
        assert_eq!(layer_delta(0, 1, &cfg), 0.0);
    }

    /// The optimizer drives a convex quadratic to its minimizer.
    #[test]
    fn adamw_quadratic_convergence() {
        let target = [1.5, -0.7, 0.25];
        let mut p = ParamVector::new();
        p.push_block("a", vec![0.0; 3]).unwrap();
        let mut opt = AdamW::new(&p);
        for _ in 0..4000 {
            let mut grad = p.zeros_like();
            let gb = grad.block_mut("a").unwrap();
            for (i, g) in gb.iter_mut().enumerate() {
                *g = 2.0 * (p.block("a").unwrap()[i] - target[i]);
            }
            opt.step(&mut p, &grad, 0.01, 0.0, "physical");
        }
        for (have, want) in p.block("a").unwrap().iter().zip(&target) {
            assert!((have - want).abs() < 1e-6, "{have} vs {want}");
        }
    }

    #[test]
    fn uam_rho_constant_and_curves_full_length() {
        let problem = make_problem("poisson1d").unwrap();
        let mut model = tiny_model(problem.as_ref(), 2, 7);
        let cfg = tiny_train_cfg(40, 7);
        let before = model.mixing.clone();
        let res = train(problem.as_ref(), &mut model, &cfg).unwrap();
        assert!(!res.failed);
        assert_eq!(res.loss_curves.len(), 40);
        assert_eq!(model.mixing, before);
    }

    #[test]
    fn warmup_keeps_pi_uniform_in_conflict_aware_mode() {
        let problem = make_problem("poisson1d").unwrap();
        let mut model = tiny_model(problem.as_ref(), 2, 7);
        model.mixing = MixingState::uniform(MixingMode::Cam, model.num_losses(), model.cfg.trunk.depth);
        let mut cfg = tiny_train_cfg(60, 7);
        cfg.warmup = 30;
        // stop checking right at the warm-up boundary
        let mut probe_cfg = cfg.clone();
        probe_cfg.epochs = 30;
        probe_cfg.warmup = 29;
        let mut probe = tiny_model(problem.as_ref(), 2, 7);
        probe.mixing = MixingState::uniform(MixingMode::Cam, probe.num_losses(), probe.cfg.trunk.depth);
        // 29-warmup run of 30 epochs touches mixing only at t = 29
        train(problem.as_ref(), &mut probe, &probe_cfg).unwrap();
        assert_ne!(
            probe.mixing.rho[0][0], 0.5,
            "mixing should move once past warm-up"
        );

        let res = train(problem.as_ref(), &mut model, &cfg).unwrap();
        assert!(!res.failed);
        // after the full run rho moved away from uniform
        assert!(model.mixing.rho.iter().flatten().any(|&r| r != 0.5));
        for row in &model.mixing.pi {
            let s: Real = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let problem = make_problem("heat1d").unwrap();
        let cfg = tiny_train_cfg(25, 3);
        let mut m1 = tiny_model(problem.as_ref(), 1, 3);
        let mut m2 = tiny_model(problem.as_ref(), 1, 3);
        let r1 = train(problem.as_ref(), &mut m1, &cfg).unwrap();
        let r2 = train(problem.as_ref(), &mut m2, &cfg).unwrap();
        assert_eq!(r1.loss_curves, r2.loss_curves);
        assert_eq!(m1.params, m2.params);
    }

    /// With the adapter path disabled the trunk trajectory matches a
    /// rank-0 model bit for bit.
    #[test]
    fn disabled_adapters_reproduce_vanilla_trunk() {
        let problem = make_problem("poisson1d").unwrap();
        let mut cfg = tiny_train_cfg(20, 11);
        cfg.strategy = BalanceStrategy::Fixed;

        let mut vanilla = tiny_model(problem.as_ref(), 0, 11);
        let mut disabled = {
            let mut mc = vanilla.cfg.clone();
            mc.rank = 2;
            mc.alpha_ad = 0.0;
            PinnModel::new(mc, MixingMode::Uam, 11).unwrap()
        };
        let rv = train(problem.as_ref(), &mut vanilla, &cfg).unwrap();
        let rd = train(problem.as_ref(), &mut disabled, &cfg).unwrap();
        assert_eq!(rv.loss_curves, rd.loss_curves);
        assert_eq!(vanilla.params.block("trunk").unwrap(), disabled.params.block("trunk").unwrap());
        assert_eq!(vanilla.params.block("readout").unwrap(), disabled.params.block("readout").unwrap());
    }

    #[test]
    fn smoke_run_decreases_loss() {
        let problem = make_problem("poisson1d").unwrap();
        let mut model = tiny_model(problem.as_ref(), 0, 5);
        let mut cfg = tiny_train_cfg(500, 5);
        cfg.warmup = 100;
        let res = train(problem.as_ref(), &mut model, &cfg).unwrap();
        assert!(!res.failed);
        let first = res.total_curve[0];
        let last = *res.total_curve.last().unwrap();
        assert!(last.is_finite() && last < first, "{first} -> {last}");
        assert!(res.final_rel_l2.unwrap() < 1.0);
    }

    #[test]
    fn strategies_run_without_failure() {
        let problem = make_problem("inverse_poisson").unwrap();
        for strategy in [
            BalanceStrategy::Famo,
            BalanceStrategy::FamoLog,
            BalanceStrategy::GradNorm,
            BalanceStrategy::Uncertainty,
            BalanceStrategy::PcGrad,
            BalanceStrategy::PcGradGrouped,
        ] {
            let mut model = tiny_model(problem.as_ref(), 1, 2);
            let mut cfg = tiny_train_cfg(16, 2);
            cfg.strategy = strategy;
            let res = train(problem.as_ref(), &mut model, &cfg).unwrap();
            assert!(!res.failed, "{strategy:?} failed");
            assert_eq!(res.loss_curves.len(), 16);
            assert!(res.physical.unwrap() > 0.0);
        }
    }

    #[test]
    fn conflict_recording_covers_every_epoch() {
        let problem = make_problem("poisson1d").unwrap();
        let mut model = tiny_model(problem.as_ref(), 0, 9);
        let mut cfg = tiny_train_cfg(12, 9);
        cfg.record_conflict = true;
        let res = train(problem.as_ref(), &mut model, &cfg).unwrap();
        assert_eq!(res.conflict_records.len(), 12);
        for (t, r) in res.conflict_records.iter().enumerate() {
            assert_eq!(r.step, t);
            assert_eq!(r.norms.len(), problem.num_losses());
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = TrainConfig::desk(100, 0);
        cfg.warmup = 100;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::desk(100, 0);
        cfg.clip_norm = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::desk(100, 0);
        cfg.mixing_period = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::desk(100, 0);
        cfg.rho_min = 0.95;
        cfg.rho_max = 0.15;
        assert!(cfg.validate().is_err());
    }
}
