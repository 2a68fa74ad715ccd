//! Scalar computation-graph differentiation engine.
//!
//! A [`Graph`] is an eagerly evaluated tape of scalar operations. Values
//! are computed as nodes are pushed; a reverse sweep ([`Graph::backward`])
//! yields adjoints for every node, which callers slice into parameter
//! gradients. Input derivatives of the network output (needed for PDE
//! residuals) are carried by [`Jet`]s: a forward-mode pass whose value and
//! per-axis first/second derivative lanes are themselves graph nodes, so
//! residuals built from them stay differentiable with respect to the
//! parameters.
//!
//! Graphs are rebuilt per batch; [`Graph::clear`] keeps the allocation.
//! Evaluation is deterministic: identical graphs and bindings give
//! bit-identical values.

use crate::scalar::Scalar;
use thiserror::Error;

/// Index of a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Node(pub(crate) u32);

impl Node {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Const,
    Leaf,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Neg(u32),
    Tanh(u32),
    Sin(u32),
    Cos(u32),
    Exp(u32),
    Ln(u32),
    Sqrt(u32),
    Powi(u32, i32),
}

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("graph contains {0} unbound leaf node(s)")]
    UnboundLeaf(usize),
    #[error("input derivatives of order {0} are unsupported (order must be 1 or 2)")]
    UnsupportedOrder(u8),
}

/// Eagerly evaluated scalar computation graph.
pub struct Graph<S> {
    ops: Vec<Op>,
    vals: Vec<S>,
    unbound: usize,
    zero: Node,
    one: Node,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        let mut g = Graph {
            ops: Vec::new(),
            vals: Vec::new(),
            unbound: 0,
            zero: Node(0),
            one: Node(0),
        };
        g.zero = g.push(Op::Const, S::zero());
        g.one = g.push(Op::Const, S::one());
        g
    }

    /// Drop all nodes but keep allocations; the canonical 0/1 constants
    /// are re-created.
    pub fn clear(&mut self) {
        self.ops.clear();
        self.vals.clear();
        self.unbound = 0;
        self.zero = self.push(Op::Const, S::zero());
        self.one = self.push(Op::Const, S::one());
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn zero(&self) -> Node {
        self.zero
    }

    pub fn one(&self) -> Node {
        self.one
    }

    /// Raw value of a node. For checked evaluation see [`Graph::evaluate`].
    pub fn value(&self, n: Node) -> S {
        self.vals[n.index()]
    }

    /// Value of `root`, failing if the graph still has unbound leaves.
    pub fn evaluate(&self, root: Node) -> Result<S, AutodiffError> {
        if self.unbound > 0 {
            return Err(AutodiffError::UnboundLeaf(self.unbound));
        }
        Ok(self.vals[root.index()])
    }

    fn push(&mut self, op: Op, val: S) -> Node {
        let id = self.ops.len() as u32;
        self.ops.push(op);
        self.vals.push(val);
        Node(id)
    }

    pub fn constant(&mut self, v: S) -> Node {
        if v == S::zero() {
            self.zero
        } else if v == S::one() {
            self.one
        } else {
            self.push(Op::Const, v)
        }
    }

    /// Differentiable leaf (parameter or input) bound to `v`.
    pub fn leaf(&mut self, v: S) -> Node {
        self.push(Op::Leaf, v)
    }

    /// Differentiable leaf with no value yet; [`Graph::evaluate`] fails
    /// until it is bound.
    pub fn leaf_unbound(&mut self) -> Node {
        self.unbound += 1;
        self.push(Op::Leaf, S::nan())
    }

    /// Rebind a leaf and recompute every downstream value.
    pub fn bind(&mut self, leaf: Node, v: S) {
        debug_assert!(matches!(self.ops[leaf.index()], Op::Leaf));
        if self.vals[leaf.index()].is_nan() && self.unbound > 0 {
            self.unbound -= 1;
        }
        self.vals[leaf.index()] = v;
        self.reevaluate();
    }

    /// Recompute all node values in topological (id) order.
    pub fn reevaluate(&mut self) {
        for i in 0..self.ops.len() {
            let v = match self.ops[i] {
                Op::Const | Op::Leaf => continue,
                Op::Add(a, b) => self.vals[a as usize] + self.vals[b as usize],
                Op::Sub(a, b) => self.vals[a as usize] - self.vals[b as usize],
                Op::Mul(a, b) => self.vals[a as usize] * self.vals[b as usize],
                Op::Div(a, b) => self.vals[a as usize] / self.vals[b as usize],
                Op::Neg(a) => -self.vals[a as usize],
                Op::Tanh(a) => self.vals[a as usize].tanh(),
                Op::Sin(a) => self.vals[a as usize].sin(),
                Op::Cos(a) => self.vals[a as usize].cos(),
                Op::Exp(a) => self.vals[a as usize].exp(),
                Op::Ln(a) => self.vals[a as usize].ln(),
                Op::Sqrt(a) => self.vals[a as usize].sqrt(),
                Op::Powi(a, n) => self.vals[a as usize].powi(n),
            };
            self.vals[i] = v;
        }
    }

    fn is_const(&self, n: Node) -> Option<S> {
        match self.ops[n.index()] {
            Op::Const => Some(self.vals[n.index()]),
            _ => None,
        }
    }

    pub fn add(&mut self, a: Node, b: Node) -> Node {
        if a == self.zero {
            return b;
        }
        if b == self.zero {
            return a;
        }
        if let (Some(va), Some(vb)) = (self.is_const(a), self.is_const(b)) {
            return self.constant(va + vb);
        }
        let v = self.vals[a.index()] + self.vals[b.index()];
        self.push(Op::Add(a.0, b.0), v)
    }

    pub fn sub(&mut self, a: Node, b: Node) -> Node {
        if b == self.zero {
            return a;
        }
        if a == self.zero {
            return self.neg(b);
        }
        if let (Some(va), Some(vb)) = (self.is_const(a), self.is_const(b)) {
            return self.constant(va - vb);
        }
        let v = self.vals[a.index()] - self.vals[b.index()];
        self.push(Op::Sub(a.0, b.0), v)
    }

    pub fn mul(&mut self, a: Node, b: Node) -> Node {
        if a == self.zero || b == self.zero {
            return self.zero;
        }
        if a == self.one {
            return b;
        }
        if b == self.one {
            return a;
        }
        if let (Some(va), Some(vb)) = (self.is_const(a), self.is_const(b)) {
            return self.constant(va * vb);
        }
        let v = self.vals[a.index()] * self.vals[b.index()];
        self.push(Op::Mul(a.0, b.0), v)
    }

    pub fn div(&mut self, a: Node, b: Node) -> Node {
        if b == self.one {
            return a;
        }
        if a == self.zero {
            return self.zero;
        }
        if let (Some(va), Some(vb)) = (self.is_const(a), self.is_const(b)) {
            return self.constant(va / vb);
        }
        let v = self.vals[a.index()] / self.vals[b.index()];
        self.push(Op::Div(a.0, b.0), v)
    }

    pub fn neg(&mut self, a: Node) -> Node {
        if a == self.zero {
            return self.zero;
        }
        if let Some(va) = self.is_const(a) {
            return self.constant(-va);
        }
        self.push(Op::Neg(a.0), -self.vals[a.index()])
    }

    pub fn tanh(&mut self, a: Node) -> Node {
        if let Some(va) = self.is_const(a) {
            return self.constant(va.tanh());
        }
        self.push(Op::Tanh(a.0), self.vals[a.index()].tanh())
    }

    pub fn sin(&mut self, a: Node) -> Node {
        if let Some(va) = self.is_const(a) {
            return self.constant(va.sin());
        }
        self.push(Op::Sin(a.0), self.vals[a.index()].sin())
    }

    pub fn cos(&mut self, a: Node) -> Node {
        if let Some(va) = self.is_const(a) {
            return self.constant(va.cos());
        }
        self.push(Op::Cos(a.0), self.vals[a.index()].cos())
    }

    pub fn exp(&mut self, a: Node) -> Node {
        if let Some(va) = self.is_const(a) {
            return self.constant(va.exp());
        }
        self.push(Op::Exp(a.0), self.vals[a.index()].exp())
    }

    pub fn ln(&mut self, a: Node) -> Node {
        if let Some(va) = self.is_const(a) {
            return self.constant(va.ln());
        }
        self.push(Op::Ln(a.0), self.vals[a.index()].ln())
    }

    pub fn sqrt(&mut self, a: Node) -> Node {
        if let Some(va) = self.is_const(a) {
            return self.constant(va.sqrt());
        }
        self.push(Op::Sqrt(a.0), self.vals[a.index()].sqrt())
    }

    pub fn powi(&mut self, a: Node, n: i32) -> Node {
        match n {
            0 => self.one,
            1 => a,
            2 => self.mul(a, a),
            _ => {
                if let Some(va) = self.is_const(a) {
                    return self.constant(va.powi(n));
                }
                self.push(Op::Powi(a.0, n), self.vals[a.index()].powi(n))
            }
        }
    }

    pub fn square(&mut self, a: Node) -> Node {
        self.mul(a, a)
    }

    pub fn scale(&mut self, a: Node, c: S) -> Node {
        let cn = self.constant(c);
        self.mul(cn, a)
    }

    pub fn sum(&mut self, nodes: &[Node]) -> Node {
        let mut acc = self.zero;
        for &n in nodes {
            acc = self.add(acc, n);
        }
        acc
    }

    pub fn mean(&mut self, nodes: &[Node]) -> Node {
        assert!(!nodes.is_empty());
        let s = self.sum(nodes);
        self.scale(s, S::one() / S::c(nodes.len() as f64))
    }

    /// Reverse sweep from `root`; returns the adjoint of every node.
    pub fn backward(&self, root: Node) -> Vec<S> {
        let mut adj = vec![S::zero(); self.ops.len()];
        self.backward_into(root, &mut adj);
        adj
    }

    /// Reverse sweep writing into a caller-owned adjoint buffer (zeroed
    /// first). Lets per-loss gradients reuse one allocation.
    pub fn backward_into(&self, root: Node, adj: &mut Vec<S>) {
        adj.clear();
        adj.resize(self.ops.len(), S::zero());
        adj[root.index()] = S::one();
        let two = S::c(2.0);
        for i in (0..=root.index()).rev() {
            let a = adj[i];
            if a == S::zero() {
                continue;
            }
            match self.ops[i] {
                Op::Const | Op::Leaf => {}
                Op::Add(p, q) => {
                    adj[p as usize] = adj[p as usize] + a;
                    adj[q as usize] = adj[q as usize] + a;
                }
                Op::Sub(p, q) => {
                    adj[p as usize] = adj[p as usize] + a;
                    adj[q as usize] = adj[q as usize] - a;
                }
                Op::Mul(p, q) => {
                    adj[p as usize] = adj[p as usize] + a * self.vals[q as usize];
                    adj[q as usize] = adj[q as usize] + a * self.vals[p as usize];
                }
                Op::Div(p, q) => {
                    let vq = self.vals[q as usize];
                    adj[p as usize] = adj[p as usize] + a / vq;
                    adj[q as usize] = adj[q as usize] - a * self.vals[i] / vq;
                }
                Op::Neg(p) => adj[p as usize] = adj[p as usize] - a,
                Op::Tanh(p) => {
                    let y = self.vals[i];
                    adj[p as usize] = adj[p as usize] + a * (S::one() - y * y);
                }
                Op::Sin(p) => {
                    adj[p as usize] = adj[p as usize] + a * self.vals[p as usize].cos();
                }
                Op::Cos(p) => {
                    adj[p as usize] = adj[p as usize] - a * self.vals[p as usize].sin();
                }
                Op::Exp(p) => adj[p as usize] = adj[p as usize] + a * self.vals[i],
                Op::Ln(p) => adj[p as usize] = adj[p as usize] + a / self.vals[p as usize],
                Op::Sqrt(p) => {
                    adj[p as usize] = adj[p as usize] + a / (two * self.vals[i]);
                }
                Op::Powi(p, n) => {
                    let x = self.vals[p as usize];
                    adj[p as usize] = adj[p as usize] + a * S::c(n as f64) * x.powi(n - 1);
                }
            }
        }
    }
}

/// Forward-mode value plus per-axis first/second derivative lanes, all
/// carried as graph nodes. Pure second derivatives only (no mixed
/// partials); the supported PDE operators need nothing else.
#[derive(Clone, Debug)]
pub struct Jet {
    pub val: Node,
    pub d1: Vec<Node>,
    pub d2: Vec<Node>,
}

impl Jet {
    /// A jet with no input dependence (constant or parameter).
    pub fn from_node<S: Scalar>(g: &Graph<S>, n: Node, lanes: usize) -> Jet {
        Jet {
            val: n,
            d1: vec![g.zero(); lanes],
            d2: vec![g.zero(); lanes],
        }
    }

    /// The jet of input coordinate `axis`: unit first derivative in its
    /// own lane, zero elsewhere.
    pub fn input<S: Scalar>(g: &mut Graph<S>, value: S, axis: usize, lanes: usize) -> Jet {
        let n = g.leaf(value);
        let mut j = Jet::from_node(g, n, lanes);
        j.d1[axis] = g.one();
        j
    }

    pub fn lanes(&self) -> usize {
        self.d1.len()
    }

    /// Node representing `∂^order (self) / ∂x_axis^order`; stays
    /// differentiable with respect to parameters.
    pub fn input_derivative(&self, axis: usize, order: u8) -> Result<Node, AutodiffError> {
        match order {
            1 => Ok(self.d1[axis]),
            2 => Ok(self.d2[axis]),
            _ => Err(AutodiffError::UnsupportedOrder(order)),
        }
    }

    pub fn add<S: Scalar>(g: &mut Graph<S>, a: &Jet, b: &Jet) -> Jet {
        debug_assert_eq!(a.lanes(), b.lanes());
        Jet {
            val: g.add(a.val, b.val),
            d1: a.d1.iter().zip(&b.d1).map(|(&x, &y)| g.add(x, y)).collect(),
            d2: a.d2.iter().zip(&b.d2).map(|(&x, &y)| g.add(x, y)).collect(),
        }
    }

    pub fn sub<S: Scalar>(g: &mut Graph<S>, a: &Jet, b: &Jet) -> Jet {
        debug_assert_eq!(a.lanes(), b.lanes());
        Jet {
            val: g.sub(a.val, b.val),
            d1: a.d1.iter().zip(&b.d1).map(|(&x, &y)| g.sub(x, y)).collect(),
            d2: a.d2.iter().zip(&b.d2).map(|(&x, &y)| g.sub(x, y)).collect(),
        }
    }

    pub fn mul<S: Scalar>(g: &mut Graph<S>, a: &Jet, b: &Jet) -> Jet {
        debug_assert_eq!(a.lanes(), b.lanes());
        let val = g.mul(a.val, b.val);
        let lanes = a.lanes();
        let mut d1 = Vec::with_capacity(lanes);
        let mut d2 = Vec::with_capacity(lanes);
        for i in 0..lanes {
            let t1 = g.mul(a.d1[i], b.val);
            let t2 = g.mul(a.val, b.d1[i]);
            d1.push(g.add(t1, t2));
            // (ab)'' = a''b + 2a'b' + ab''
            let u1 = g.mul(a.d2[i], b.val);
            let u2 = g.mul(a.d1[i], b.d1[i]);
            let u2 = g.scale(u2, S::c(2.0));
            let u3 = g.mul(a.val, b.d2[i]);
            let s = g.add(u1, u2);
            d2.push(g.add(s, u3));
        }
        Jet { val, d1, d2 }
    }

    /// Multiply by a node with no input dependence (e.g. a parameter).
    /// Cheaper than the general product.
    pub fn scale_node<S: Scalar>(g: &mut Graph<S>, a: &Jet, w: Node) -> Jet {
        Jet {
            val: g.mul(w, a.val),
            d1: a.d1.iter().map(|&x| g.mul(w, x)).collect(),
            d2: a.d2.iter().map(|&x| g.mul(w, x)).collect(),
        }
    }

    pub fn neg<S: Scalar>(g: &mut Graph<S>, a: &Jet) -> Jet {
        Jet {
            val: g.neg(a.val),
            d1: a.d1.iter().map(|&x| g.neg(x)).collect(),
            d2: a.d2.iter().map(|&x| g.neg(x)).collect(),
        }
    }

    /// Chain rule through a unary map given `(y, y', y'')` at the point.
    fn unary<S: Scalar>(g: &mut Graph<S>, a: &Jet, y: Node, dy: Node, d2y: Node) -> Jet {
        let lanes = a.lanes();
        let mut d1 = Vec::with_capacity(lanes);
        let mut d2 = Vec::with_capacity(lanes);
        for i in 0..lanes {
            d1.push(g.mul(dy, a.d1[i]));
            // f(a)'' = f''(a) a'^2 + f'(a) a''
            let sq = g.square(a.d1[i]);
            let t1 = g.mul(d2y, sq);
            let t2 = g.mul(dy, a.d2[i]);
            d2.push(g.add(t1, t2));
        }
        Jet { val: y, d1, d2 }
    }

    pub fn tanh<S: Scalar>(g: &mut Graph<S>, a: &Jet) -> Jet {
        let y = g.tanh(a.val);
        let y2 = g.square(y);
        let one = g.one();
        let dy = g.sub(one, y2); // 1 - y^2
        let m2y = g.scale(y, S::c(-2.0));
        let d2y = g.mul(m2y, dy); // -2y(1 - y^2)
        Jet::unary(g, a, y, dy, d2y)
    }

    pub fn sin<S: Scalar>(g: &mut Graph<S>, a: &Jet) -> Jet {
        let y = g.sin(a.val);
        let dy = g.cos(a.val);
        let d2y = g.neg(y);
        Jet::unary(g, a, y, dy, d2y)
    }

    pub fn cos<S: Scalar>(g: &mut Graph<S>, a: &Jet) -> Jet {
        let y = g.cos(a.val);
        let s = g.sin(a.val);
        let dy = g.neg(s);
        let d2y = g.neg(y);
        Jet::unary(g, a, y, dy, d2y)
    }

    pub fn exp<S: Scalar>(g: &mut Graph<S>, a: &Jet) -> Jet {
        let y = g.exp(a.val);
        Jet::unary(g, a, y, y, y)
    }

    pub fn ln<S: Scalar>(g: &mut Graph<S>, a: &Jet) -> Jet {
        let y = g.ln(a.val);
        let one = g.one();
        let dy = g.div(one, a.val);
        let dy2 = g.square(dy);
        let d2y = g.neg(dy2);
        Jet::unary(g, a, y, dy, d2y)
    }

    pub fn square<S: Scalar>(g: &mut Graph<S>, a: &Jet) -> Jet {
        Jet::mul(g, a, a)
    }

    pub fn scale_const<S: Scalar>(g: &mut Graph<S>, a: &Jet, c: S) -> Jet {
        let cn = g.constant(c);
        Jet::scale_node(g, a, cn)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    type G = Graph<f64>;

    #[test]
    fn tanh_at_origin_is_zero() {
        let mut g = G::new();
        let x = g.leaf(0.0);
        let y = g.tanh(x);
        assert_eq!(g.evaluate(y).unwrap(), 0.0);
    }

    #[test]
    fn sin_half_pi_times_two() {
        let mut g = G::new();
        let x = g.leaf(std::f64::consts::FRAC_PI_2);
        let s = g.sin(x);
        let y = g.scale(s, 2.0);
        assert!((g.evaluate(y).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn unbound_leaf_rejected_until_bound() {
        let mut g = G::new();
        let x = g.leaf_unbound();
        let y = g.mul(x, x);
        assert_eq!(g.evaluate(y), Err(AutodiffError::UnboundLeaf(1)));
        g.bind(x, 3.0);
        assert_eq!(g.evaluate(y).unwrap(), 9.0);
    }

    #[test]
    fn grad_of_square_at_three() {
        let mut g = G::new();
        let th = g.leaf(3.0);
        let loss = g.square(th);
        let adj = g.backward(loss);
        assert_eq!(adj[th.index()], 6.0);
    }

    #[test]
    fn grad_of_sum_is_all_ones() {
        let mut g = G::new();
        let leaves: Vec<Node> = (0..5).map(|i| g.leaf(i as f64)).collect();
        let s = g.sum(&leaves);
        let adj = g.backward(s);
        for l in &leaves {
            assert_eq!(adj[l.index()], 1.0);
        }
    }

    /// Small 2-layer tanh net: loss = sum(tanh(W2 tanh(W1 x + b1) + b2))^2.
    fn tiny_net_loss(g: &mut G, params: &[Node], x: &[f64]) -> Node {
        let (n_in, n_h) = (x.len(), 3);
        let mut idx = 0;
        let mut take = || {
            let p = params[idx];
            idx += 1;
            p
        };
        let xs: Vec<Node> = x.iter().map(|&v| g.constant(v)).collect();
        let mut h = Vec::new();
        for _ in 0..n_h {
            let mut acc = take();
            for xj in &xs {
                let w = take();
                let t = g.mul(w, *xj);
                acc = g.add(acc, t);
            }
            h.push(g.tanh(acc));
        }
        let mut out = take();
        for hj in &h {
            let w = take();
            let t = g.mul(w, *hj);
            out = g.add(out, t);
        }
        let _ = n_in;
        g.square(out)
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n_params = 3 * (1 + 2) + 1 + 3;
        let x = [0.3, -0.8];
        let theta: Vec<f64> = (0..n_params).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut g = G::new();
        let leaves: Vec<Node> = theta.iter().map(|&v| g.leaf(v)).collect();
        let loss = tiny_net_loss(&mut g, &leaves, &x);
        let adj = g.backward(loss);

        let eps = 1e-5;
        for i in 0..n_params {
            let eval = |shift: f64| {
                let mut g2 = G::new();
                let mut t2 = theta.clone();
                t2[i] += shift;
                let l2: Vec<Node> = t2.iter().map(|&v| g2.leaf(v)).collect();
                let l = tiny_net_loss(&mut g2, &l2, &x);
                g2.value(l)
            };
            let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
            let ad = adj[leaves[i].index()];
            let denom = fd.abs().max(1e-8);
            assert!(
                (ad - fd).abs() / denom < 1e-6,
                "param {i}: ad={ad} fd={fd}"
            );
        }
    }

    #[test]
    fn cube_second_derivative() {
        // u(x) = x^3, u''(2) = 12
        let mut g = G::new();
        let x = Jet::input(&mut g, 2.0, 0, 1);
        let x2 = Jet::mul(&mut g, &x, &x);
        let u = Jet::mul(&mut g, &x2, &x);
        let d2 = u.input_derivative(0, 2).unwrap();
        assert!((g.value(d2) - 12.0).abs() < 1e-12);
        assert!((g.value(u.input_derivative(0, 1).unwrap()) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn sine_second_derivative() {
        // u(x) = sin(pi x), u''(0.5) = -pi^2
        let pi = std::f64::consts::PI;
        let mut g = G::new();
        let x = Jet::input(&mut g, 0.5, 0, 1);
        let px = Jet::scale_const(&mut g, &x, pi);
        let u = Jet::sin(&mut g, &px);
        let d2 = u.input_derivative(0, 2).unwrap();
        assert!((g.value(d2) + pi * pi).abs() < 1e-10);
    }

    #[test]
    fn order_three_unsupported() {
        let mut g = G::new();
        let x = Jet::input(&mut g, 1.0, 0, 1);
        assert_eq!(
            x.input_derivative(0, 3),
            Err(AutodiffError::UnsupportedOrder(3))
        );
    }

    /// ∇_θ of ∂²u/∂x² must match finite differences of grad_params across
    /// perturbed θ (nested oracle).
    #[test]
    fn param_gradient_of_second_input_derivative_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        // u(x) = w2 * tanh(w1 * x + b)
        let theta: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x0 = 0.37;

        let build = |g: &mut G, th: &[f64]| -> (Vec<Node>, Node) {
            let leaves: Vec<Node> = th.iter().map(|&v| g.leaf(v)).collect();
            let x = Jet::input(g, x0, 0, 1);
            let wx = Jet::scale_node(g, &x, leaves[0]);
            let b = Jet::from_node(g, leaves[1], 1);
            let z = Jet::add(g, &wx, &b);
            let t = Jet::tanh(g, &z);
            let u = Jet::scale_node(g, &t, leaves[2]);
            (leaves, u.input_derivative(0, 2).unwrap())
        };

        let mut g = G::new();
        let (leaves, d2) = build(&mut g, &theta);
        let adj = g.backward(d2);

        let eps = 1e-5;
        for i in 0..3 {
            let eval = |shift: f64| {
                let mut g2 = G::new();
                let mut t2 = theta.clone();
                t2[i] += shift;
                let (_, n) = build(&mut g2, &t2);
                g2.value(n)
            };
            let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
            let ad = adj[leaves[i].index()];
            assert!(
                (ad - fd).abs() / fd.abs().max(1e-6) < 1e-5,
                "param {i}: ad={ad} fd={fd}"
            );
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let build = || {
            let mut g = G::new();
            let x = g.leaf(0.123456);
            let s = g.sin(x);
            let t = g.tanh(s);
            let e = g.exp(t);
            g.value(e)
        };
        assert_eq!(build().to_bits(), build().to_bits());
    }

    #[test]
    fn primitive_gradients_match_fd() {
        // one FD sweep per unary primitive at a few points
        let unaries: Vec<(&str, fn(&mut G, Node) -> Node)> = vec![
            ("tanh", |g, x| g.tanh(x)),
            ("sin", |g, x| g.sin(x)),
            ("cos", |g, x| g.cos(x)),
            ("exp", |g, x| g.exp(x)),
            ("ln", |g, x| g.ln(x)),
            ("sqrt", |g, x| g.sqrt(x)),
            ("powi3", |g, x| g.powi(x, 3)),
        ];
        for (name, f) in unaries {
            for &x0 in &[0.3, 0.9, 1.7] {
                let mut g = G::new();
                let x = g.leaf(x0);
                let y = f(&mut g, x);
                let ad = g.backward(y)[x.index()];
                let eval = |v: f64| {
                    let mut g2 = G::new();
                    let x2 = g2.leaf(v);
                    let y2 = f(&mut g2, x2);
                    g2.value(y2)
                };
                let eps = 1e-5;
                let fd = (eval(x0 + eps) - eval(x0 - eps)) / (2.0 * eps);
                assert!(
                    (ad - fd).abs() / fd.abs().max(1e-8) < 1e-5,
                    "{name} at {x0}: ad={ad} fd={fd}"
                );
            }
        }
    }
}
