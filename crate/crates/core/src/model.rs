//! Shared-output PINN: Fourier features, residual trunk, per-loss
//! low-rank adapters with mixing, affine readout, and the adapter
//! orthogonality penalty.
//!
//! The field is `u(x) = H(h^(L))` where each layer applies
//! `h = trunk_block(h_prev) + alpha_ad * sum_k pi_k A_k(h_prev)` and
//! `A_k(h) = B_k tanh(D_k h)`. Up-projections `B_k` start at zero, so a
//! freshly initialized adapted model is exactly the vanilla trunk.

use crate::autodiff::{Jet, Node};
use crate::{Graph, ParamVector, Real};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

/// Latent mixing score clip range.
pub const RHO_MIN: Real = 0.15;
pub const RHO_MAX: Real = 0.95;

/// Default orthogonality penalty coefficients.
pub const LAMBDA_SELF: Real = 0.01;
pub const LAMBDA_CROSS: Real = 0.001;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("degenerate mixing scores: all rho = 1")]
    DegenerateMixing,
    #[error("checkpoint format: {0}")]
    CheckpointFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Trunk architecture. Desk-scale defaults keep CPU runtimes in minutes;
/// the larger published configuration stays reachable through the fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrunkConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub depth: usize,
    pub fourier_bands: usize,
    pub omega_max: Real,
    pub output_dim: usize,
}

impl TrunkConfig {
    pub fn desk(input_dim: usize) -> Self {
        TrunkConfig {
            input_dim,
            hidden_dim: 32,
            depth: 3,
            fourier_bands: 4,
            omega_max: 10.0 * std::f64::consts::PI,
            output_dim: 1,
        }
    }

    pub fn feature_len(&self) -> usize {
        2 * self.fourier_bands * self.input_dim
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub trunk: TrunkConfig,
    /// Number of loss terms K; one adapter stack per loss.
    pub num_losses: usize,
    /// Adapter rank r; 0 disables adapters entirely.
    pub rank: usize,
    /// Global adapter correction scale.
    pub alpha_ad: Real,
    /// Initial log-space values of learnable physical scalars.
    pub physical_init: Vec<Real>,
}

impl ModelConfig {
    pub fn desk(input_dim: usize, num_losses: usize) -> Self {
        ModelConfig {
            trunk: TrunkConfig::desk(input_dim),
            num_losses,
            rank: 0,
            alpha_ad: 1.0,
            physical_init: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let t = &self.trunk;
        if t.input_dim < 1 || t.hidden_dim < 1 || t.depth < 1 || t.fourier_bands < 1 {
            return Err(ModelError::InvalidConfig(
                "input_dim, hidden_dim, depth, fourier_bands must all be >= 1".into(),
            ));
        }
        if t.output_dim < 1 {
            return Err(ModelError::InvalidConfig("output_dim must be >= 1".into()));
        }
        if self.num_losses < 1 {
            return Err(ModelError::InvalidConfig("num_losses must be >= 1".into()));
        }
        if self.rank > t.hidden_dim {
            return Err(ModelError::InvalidConfig(format!(
                "rank {} exceeds hidden_dim {}",
                self.rank, t.hidden_dim
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MixingMode {
    Uam,
    Cam,
    Lcam,
}

/// Per-layer adapter mixing state: latent scores `rho[layer][k]` and the
/// normalized weights `pi[layer][k]` derived from them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingState {
    pub mode: MixingMode,
    pub rho: Vec<Vec<Real>>,
    pub pi: Vec<Vec<Real>>,
}

impl MixingState {
    /// Uniform state: rho = 0.5 everywhere, pi = 1/K.
    pub fn uniform(mode: MixingMode, num_losses: usize, depth: usize) -> Self {
        MixingState {
            mode,
            rho: vec![vec![0.5; num_losses]; depth],
            pi: vec![vec![1.0 / num_losses as Real; num_losses]; depth],
        }
    }

    /// Recompute pi from rho at every layer.
    pub fn refresh(&mut self) -> Result<(), ModelError> {
        for (l, rho) in self.rho.iter().enumerate() {
            self.pi[l] = mixing_weights(rho)?;
        }
        Ok(())
    }
}

/// Normalized mixing weights pi_k = (1 - rho_k) / sum_j (1 - rho_j).
pub fn mixing_weights(rho_layer: &[Real]) -> Result<Vec<Real>, ModelError> {
    let denom: Real = rho_layer.iter().map(|r| 1.0 - r).sum();
    if denom <= 0.0 {
        return Err(ModelError::DegenerateMixing);
    }
    Ok(rho_layer.iter().map(|r| (1.0 - r) / denom).collect())
}

/// Fourier encoding of a point: for band f = 1..F and input dimension i,
/// emit sin(w_f x_i), cos(w_f x_i) with w_f = f * omega_max / F.
pub fn fourier_features(x: &[Real], cfg: &TrunkConfig) -> Vec<Real> {
    let mut out = Vec::with_capacity(cfg.feature_len());
    for f in 1..=cfg.fourier_bands {
        let w = f as Real * cfg.omega_max / cfg.fourier_bands as Real;
        for &xi in x {
            out.push((w * xi).sin());
            out.push((w * xi).cos());
        }
    }
    out
}

/// Residual trunk block on a plain vector: h + tanh(W2 tanh(W1 h + b1) + b2).
/// `w1, b1, w2, b2` are row-major slices of a single flat layer segment.
pub fn trunk_block_apply(layer: &[Real], h: &[Real]) -> Vec<Real> {
    let d = h.len();
    let (w1, rest) = layer.split_at(d * d);
    let (b1, rest) = rest.split_at(d);
    let (w2, b2) = rest.split_at(d * d);
    let mut inner = vec![0.0; d];
    for i in 0..d {
        let mut acc = b1[i];
        for j in 0..d {
            acc += w1[i * d + j] * h[j];
        }
        inner[i] = acc.tanh();
    }
    let mut out = vec![0.0; d];
    for i in 0..d {
        let mut acc = b2[i];
        for j in 0..d {
            acc += w2[i * d + j] * inner[j];
        }
        out[i] = h[i] + acc.tanh();
    }
    out
}

/// Adapter correction B tanh(D h) on a plain vector. `d` is r x d_h
/// row-major, `b` is d_h x r row-major.
pub fn adapter_apply(d: &[Real], b: &[Real], rank: usize, h: &[Real]) -> Vec<Real> {
    let dh = h.len();
    let mut z = vec![0.0; rank];
    for a in 0..rank {
        let mut acc = 0.0;
        for j in 0..dh {
            acc += d[a * dh + j] * h[j];
        }
        z[a] = acc.tanh();
    }
    let mut out = vec![0.0; dh];
    for i in 0..dh {
        let mut acc = 0.0;
        for a in 0..rank {
            acc += b[i * rank + a] * z[a];
        }
        out[i] = acc;
    }
    out
}

/// The model: configuration, parameter vector, and mixing state.
#[derive(Clone, Debug)]
pub struct PinnModel {
    pub cfg: ModelConfig,
    pub params: ParamVector,
    pub mixing: MixingState,
}

impl PinnModel {
    /// Initialize with seeded Gaussian trunk/readout weights, random
    /// down-projections (std 1/sqrt(d_h)) and zero up-projections.
    pub fn new(cfg: ModelConfig, mode: MixingMode, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = &cfg.trunk;
        let (dh, feat) = (t.hidden_dim, t.feature_len());

        let mut params = ParamVector::new();
        let mut trunk = Vec::new();
        push_affine(&mut trunk, &mut rng, dh, feat);
        for _ in 0..t.depth {
            push_affine(&mut trunk, &mut rng, dh, dh);
            push_affine(&mut trunk, &mut rng, dh, dh);
        }
        params.push_block("trunk", trunk).unwrap();

        // zero-bias readout
        let mut readout = Vec::new();
        push_weights(&mut readout, &mut rng, t.output_dim, dh);
        readout.extend(std::iter::repeat(0.0).take(t.output_dim));
        params.push_block("readout", readout).unwrap();

        if cfg.rank > 0 {
            let std = 1.0 / (dh as Real).sqrt();
            let normal = Normal::new(0.0, std).unwrap();
            for k in 0..cfg.num_losses {
                let mut blk = Vec::new();
                for _ in 0..t.depth {
                    for _ in 0..cfg.rank * dh {
                        blk.push(rng.sample(normal));
                    }
                    blk.extend(std::iter::repeat(0.0).take(dh * cfg.rank));
                }
                params.push_block(&adapter_block_name(k), blk).unwrap();
            }
        }
        if !cfg.physical_init.is_empty() {
            params
                .push_block("physical", cfg.physical_init.clone())
                .unwrap();
        }

        let mixing = MixingState::uniform(mode, cfg.num_losses, t.depth);
        Ok(PinnModel {
            cfg,
            params,
            mixing,
        })
    }

    pub fn num_losses(&self) -> usize {
        self.cfg.num_losses
    }

    pub fn has_adapters(&self) -> bool {
        self.cfg.rank > 0
    }

    /// Range of residual layer `l` inside the trunk block (after the
    /// input projection). Used for layerwise conflict slicing.
    pub fn trunk_layer_range(&self, l: usize) -> std::ops::Range<usize> {
        let t = &self.cfg.trunk;
        let dh = t.hidden_dim;
        let head = dh * t.feature_len() + dh;
        let per = 2 * (dh * dh + dh);
        head + l * per..head + (l + 1) * per
    }

    /// Offsets of (D, B) of layer `l` inside an adapter block.
    pub fn adapter_layer_offsets(&self, l: usize) -> (usize, usize) {
        let per = 2 * self.cfg.rank * self.cfg.trunk.hidden_dim;
        let d_off = l * per;
        (d_off, d_off + self.cfg.rank * self.cfg.trunk.hidden_dim)
    }

    /// Plain-value forward pass (no graph); used on test grids.
    pub fn eval(&self, x: &[Real]) -> Vec<Real> {
        let t = &self.cfg.trunk;
        let dh = t.hidden_dim;
        let feat = fourier_features(x, t);
        let trunk = self.params.block("trunk").unwrap();
        let mut h = vec![0.0; dh];
        let fl = t.feature_len();
        for i in 0..dh {
            let mut acc = trunk[dh * fl + i];
            for j in 0..fl {
                acc += trunk[i * fl + j] * feat[j];
            }
            h[i] = acc;
        }
        let head = dh * fl + dh;
        let per = 2 * (dh * dh + dh);
        let adapters_on = self.has_adapters() && self.cfg.alpha_ad != 0.0;
        for l in 0..t.depth {
            let layer = &trunk[head + l * per..head + (l + 1) * per];
            let mut next = trunk_block_apply(layer, &h);
            if adapters_on {
                let (d_off, b_off) = self.adapter_layer_offsets(l);
                let r = self.cfg.rank;
                for k in 0..self.cfg.num_losses {
                    let blk = self.params.block(&adapter_block_name(k)).unwrap();
                    let corr = adapter_apply(
                        &blk[d_off..d_off + r * dh],
                        &blk[b_off..b_off + dh * r],
                        r,
                        &h,
                    );
                    let w = self.cfg.alpha_ad * self.mixing.pi[l][k];
                    for i in 0..dh {
                        next[i] += w * corr[i];
                    }
                }
            }
            h = next;
        }
        let ro = self.params.block("readout").unwrap();
        let mut out = vec![0.0; t.output_dim];
        for o in 0..t.output_dim {
            let mut acc = ro[t.output_dim * dh + o];
            for j in 0..dh {
                acc += ro[o * dh + j] * h[j];
            }
            out[o] = acc;
        }
        out
    }

    /// Orthogonality penalty value on the current parameters (plain
    /// arithmetic, for logging and tests).
    pub fn ortho_penalty_value(&self, lambda_self: Real, lambda_cross: Real) -> Real {
        if !self.has_adapters() {
            return 0.0;
        }
        let (r, dh) = (self.cfg.rank, self.cfg.trunk.hidden_dim);
        let k = self.cfg.num_losses;
        let mut total = 0.0;
        for l in 0..self.cfg.trunk.depth {
            let (d_off, _) = self.adapter_layer_offsets(l);
            let d_mat = |ki: usize| {
                let blk = self.params.block(&adapter_block_name(ki)).unwrap();
                &blk[d_off..d_off + r * dh]
            };
            for ki in 0..k {
                let d = d_mat(ki);
                for a in 0..r {
                    for b in 0..r {
                        let mut g = 0.0;
                        for j in 0..dh {
                            g += d[a * dh + j] * d[b * dh + j];
                        }
                        let target = if a == b { 1.0 } else { 0.0 };
                        total += lambda_self * (g - target) * (g - target);
                    }
                }
            }
            for i in 0..k {
                for j in (i + 1)..k {
                    let (di, dj) = (d_mat(i), d_mat(j));
                    for a in 0..r {
                        for b in 0..r {
                            let mut m = 0.0;
                            for c in 0..dh {
                                m += di[a * dh + c] * dj[b * dh + c];
                            }
                            total += lambda_cross * m * m;
                        }
                    }
                }
            }
        }
        total
    }
}

fn adapter_block_name(k: usize) -> String {
    format!("adapter{k}")
}

/// Names of the adapter blocks of a K-loss model.
pub fn adapter_block_names(num_losses: usize) -> Vec<String> {
    (0..num_losses).map(adapter_block_name).collect()
}

fn push_weights(out: &mut Vec<Real>, rng: &mut ChaCha8Rng, rows: usize, cols: usize) {
    let normal = Normal::new(0.0, 1.0 / (cols as Real).sqrt()).unwrap();
    for _ in 0..rows * cols {
        out.push(rng.sample(normal));
    }
}

fn push_affine(out: &mut Vec<Real>, rng: &mut ChaCha8Rng, rows: usize, cols: usize) {
    push_weights(out, rng, rows, cols);
    out.extend(std::iter::repeat(0.0).take(rows));
}

/// Anything that can trace a field value (with input-derivative lanes)
/// into a graph: the model tracer, or an analytic reference field.
pub trait FieldTracer {
    /// Field components at `x`. With `with_derivs` the jets carry one
    /// lane per input dimension; otherwise zero lanes (values only).
    fn trace(&self, g: &mut Graph, x: &[Real], with_derivs: bool) -> Vec<Jet>;

    /// Node for physical scalar `idx` (already exponentiated out of log
    /// space where applicable).
    fn physical(&self, g: &mut Graph, idx: usize) -> Node;
}

/// Per-graph view of the model: one leaf per parameter, plus the traced
/// forward pass and the in-graph orthogonality penalty.
pub struct Tracer<'m> {
    model: &'m PinnModel,
    /// Leaves in flat parameter order.
    leaves: Vec<Node>,
    /// exp(leaf) nodes of the physical block.
    physical_nodes: Vec<Node>,
}

impl<'m> Tracer<'m> {
    pub fn new(g: &mut Graph, model: &'m PinnModel) -> Self {
        let leaves: Vec<Node> = model.params.iter_flat().map(|v| g.leaf(v)).collect();
        let physical_nodes = if model.params.has_block("physical") {
            let off = model.params.block_offset("physical").unwrap();
            let len = model.params.block("physical").unwrap().len();
            leaves[off..off + len].iter().map(|&n| g.exp(n)).collect()
        } else {
            Vec::new()
        };
        Tracer {
            model,
            leaves,
            physical_nodes,
        }
    }

    fn block_nodes(&self, name: &str) -> &[Node] {
        let off = self.model.params.block_offset(name).unwrap();
        let len = self.model.params.block(name).unwrap().len();
        &self.leaves[off..off + len]
    }

    /// Gradient of the node whose adjoints are `adj`, shaped like the
    /// model parameters.
    pub fn gradient(&self, adj: &[Real]) -> ParamVector {
        let mut out = self.model.params.zeros_like();
        let mut idx = 0;
        let names: Vec<String> = out.block_names().map(|s| s.to_string()).collect();
        for name in names {
            let blk = out.block_mut(&name).unwrap();
            for v in blk.iter_mut() {
                *v = adj[self.leaves[idx].index()];
                idx += 1;
            }
        }
        out
    }

    /// In-graph orthogonality penalty over all layers and adapters.
    pub fn ortho_regularizer(&self, g: &mut Graph, lambda_self: Real, lambda_cross: Real) -> Node {
        let m = self.model;
        // inert when the adapter path is disabled, mirroring the forward
        // skip, so a disabled model matches the vanilla trunk exactly
        if !m.has_adapters() || m.cfg.alpha_ad == 0.0 {
            return g.zero();
        }
        let (r, dh) = (m.cfg.rank, m.cfg.trunk.hidden_dim);
        let k = m.cfg.num_losses;
        let mut total = g.zero();
        for l in 0..m.cfg.trunk.depth {
            let (d_off, _) = m.adapter_layer_offsets(l);
            for ki in 0..k {
                let d = &self.block_nodes(&adapter_block_name(ki))[d_off..d_off + r * dh];
                for a in 0..r {
                    for b in a..r {
                        let mut gram = g.zero();
                        for c in 0..dh {
                            let t = g.mul(d[a * dh + c], d[b * dh + c]);
                            gram = g.add(gram, t);
                        }
                        if a == b {
                            let one = g.one();
                            gram = g.sub(gram, one);
                        }
                        let sq = g.square(gram);
                        // symmetric Gram: off-diagonal entries count twice
                        let w = if a == b { lambda_self } else { 2.0 * lambda_self };
                        let term = g.scale(sq, w);
                        total = g.add(total, term);
                    }
                }
            }
            for i in 0..k {
                for j in (i + 1)..k {
                    let di = &self.block_nodes(&adapter_block_name(i))[d_off..d_off + r * dh];
                    let dj = &self.block_nodes(&adapter_block_name(j))[d_off..d_off + r * dh];
                    for a in 0..r {
                        for b in 0..r {
                            let mut mm = g.zero();
                            for c in 0..dh {
                                let t = g.mul(di[a * dh + c], dj[b * dh + c]);
                                mm = g.add(mm, t);
                            }
                            let sq = g.square(mm);
                            let term = g.scale(sq, lambda_cross);
                            total = g.add(total, term);
                        }
                    }
                }
            }
        }
        total
    }
}

/// Dot of constant-coefficient nodes with a jet vector.
fn jet_dot(g: &mut Graph, ws: &[Node], xs: &[Jet]) -> Jet {
    let lanes = xs[0].lanes();
    let mut val = g.zero();
    let mut d1 = vec![g.zero(); lanes];
    let mut d2 = vec![g.zero(); lanes];
    for (w, x) in ws.iter().zip(xs) {
        let t = g.mul(*w, x.val);
        val = g.add(val, t);
        for l in 0..lanes {
            let t = g.mul(*w, x.d1[l]);
            d1[l] = g.add(d1[l], t);
            let t = g.mul(*w, x.d2[l]);
            d2[l] = g.add(d2[l], t);
        }
    }
    Jet { val, d1, d2 }
}

/// Affine map rows of `w` (row-major) over jets, bias optional.
fn jet_affine(g: &mut Graph, w: &[Node], b: Option<&[Node]>, xs: &[Jet], rows: usize) -> Vec<Jet> {
    let cols = xs.len();
    (0..rows)
        .map(|r| {
            let mut out = jet_dot(g, &w[r * cols..(r + 1) * cols], xs);
            if let Some(b) = b {
                out.val = g.add(out.val, b[r]);
            }
            out
        })
        .collect()
}

impl<'m> FieldTracer for Tracer<'m> {
    fn trace(&self, g: &mut Graph, x: &[Real], with_derivs: bool) -> Vec<Jet> {
        let m = self.model;
        let t = &m.cfg.trunk;
        debug_assert_eq!(x.len(), t.input_dim);
        let lanes = if with_derivs { t.input_dim } else { 0 };
        let dh = t.hidden_dim;

        let inputs: Vec<Jet> = x
            .iter()
            .enumerate()
            .map(|(i, &xi)| {
                let n = g.constant(xi);
                let mut j = Jet::from_node(g, n, lanes);
                if with_derivs {
                    j.d1[i] = g.one();
                }
                j
            })
            .collect();

        let mut feats = Vec::with_capacity(t.feature_len());
        for f in 1..=t.fourier_bands {
            let w = f as Real * t.omega_max / t.fourier_bands as Real;
            for inp in &inputs {
                let wx = Jet::scale_const(g, inp, w);
                feats.push(Jet::sin(g, &wx));
                feats.push(Jet::cos(g, &wx));
            }
        }

        let trunk = self.block_nodes("trunk");
        let fl = t.feature_len();
        let mut h = jet_affine(
            g,
            &trunk[..dh * fl],
            Some(&trunk[dh * fl..dh * fl + dh]),
            &feats,
            dh,
        );
        let head = dh * fl + dh;
        let per = 2 * (dh * dh + dh);
        let adapters_on = m.has_adapters() && m.cfg.alpha_ad != 0.0;
        let r = m.cfg.rank;
        for l in 0..t.depth {
            let layer = &trunk[head + l * per..head + (l + 1) * per];
            let (w1, rest) = layer.split_at(dh * dh);
            let (b1, rest) = rest.split_at(dh);
            let (w2, b2) = rest.split_at(dh * dh);
            let inner = jet_affine(g, w1, Some(b1), &h, dh);
            let inner: Vec<Jet> = inner.iter().map(|j| Jet::tanh(g, j)).collect();
            let outer = jet_affine(g, w2, Some(b2), &inner, dh);
            let mut next: Vec<Jet> = h
                .iter()
                .zip(&outer)
                .map(|(hi, oi)| {
                    let ti = Jet::tanh(g, oi);
                    Jet::add(g, hi, &ti)
                })
                .collect();
            if adapters_on {
                let (d_off, b_off) = m.adapter_layer_offsets(l);
                for k in 0..m.cfg.num_losses {
                    let blk = self.block_nodes(&adapter_block_name(k));
                    let z = jet_affine(g, &blk[d_off..d_off + r * dh], None, &h, r);
                    let z: Vec<Jet> = z.iter().map(|j| Jet::tanh(g, j)).collect();
                    let corr = jet_affine(g, &blk[b_off..b_off + dh * r], None, &z, dh);
                    let w = m.cfg.alpha_ad * m.mixing.pi[l][k];
                    for (ni, ci) in next.iter_mut().zip(&corr) {
                        let sc = Jet::scale_const(g, ci, w);
                        *ni = Jet::add(g, ni, &sc);
                    }
                }
            }
            h = next;
        }

        let ro = self.block_nodes("readout");
        let od = t.output_dim;
        jet_affine(g, &ro[..od * dh], Some(&ro[od * dh..]), &h, od)
    }

    fn physical(&self, _g: &mut Graph, idx: usize) -> Node {
        self.physical_nodes[idx]
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: ModelConfig,
    mixing: MixingState,
    blocks: Vec<(String, usize)>,
}

/// Write config JSON header plus a little-endian f64 dump of the flat
/// parameter vector.
pub fn save_checkpoint(model: &PinnModel, path: &std::path::Path) -> Result<(), ModelError> {
    let header = CheckpointHeader {
        config: model.cfg.clone(),
        mixing: model.mixing.clone(),
        blocks: model
            .params
            .iter_blocks()
            .map(|(n, v)| (n.to_string(), v.len()))
            .collect(),
    };
    let hdr = serde_json::to_vec(&header)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&(hdr.len() as u64).to_le_bytes())?;
    f.write_all(&hdr)?;
    for v in model.params.iter_flat() {
        f.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Load a checkpoint, validating block names and lengths against a model
/// freshly laid out from the stored config.
pub fn load_checkpoint(path: &std::path::Path) -> Result<PinnModel, ModelError> {
    let mut f = std::fs::File::open(path)?;
    let mut len8 = [0u8; 8];
    f.read_exact(&mut len8)?;
    let hdr_len = u64::from_le_bytes(len8) as usize;
    let mut hdr = vec![0u8; hdr_len];
    f.read_exact(&mut hdr)?;
    let header: CheckpointHeader = serde_json::from_slice(&hdr)?;

    let mut model = PinnModel::new(header.config, header.mixing.mode, 0)?;
    let expected: Vec<(String, usize)> = model
        .params
        .iter_blocks()
        .map(|(n, v)| (n.to_string(), v.len()))
        .collect();
    if expected != header.blocks {
        return Err(ModelError::CheckpointFormat(format!(
            "block layout mismatch: file has {:?}, config implies {:?}",
            header.blocks, expected
        )));
    }
    let total = model.params.total_len();
    let mut flat = vec![0.0; total];
    let mut buf = [0u8; 8];
    for v in flat.iter_mut() {
        f.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    model.params = model.params.with_flat(&flat);
    model.mixing = header.mixing;
    Ok(model)
}
