//! Reverse-mode automatic differentiation over dense row-major matrices.
//!
//! A [`Tape`] records one forward computation. Parameters are borrowed from a
//! [`ParamStore`] and never copied; [`Tape::backward`] returns one gradient
//! slot per stored parameter.

use ndarray::{Array2, Axis};

use crate::scalar::Scalar;

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Named parameter tensors, all stored as matrices (vectors are `1 × n`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<S> {
    pub tensors: Vec<Array2<S>>,
    pub names: Vec<String>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            tensors: Vec::new(),
            names: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Array2<S>) -> usize {
        self.tensors.push(value);
        self.names.push(name.into());
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total number of scalar entries.
    pub fn size(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn zeros_like(&self) -> Vec<Array2<S>> {
        self.tensors.iter().map(|t| Array2::zeros(t.raw_dim())).collect()
    }
}

enum Op<S> {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, S),
    Relu(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Array2<S>,
        inv_std: Vec<S>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    Row(Var, usize),
    Column(Var, usize),
    CrossEntropy {
        logits: Var,
        target: usize,
        probs: Array2<S>,
    },
    BceMean {
        logits: Var,
        targets: Array2<S>,
    },
    WeightedSum(Vec<(Var, S)>),
}

struct Node<S> {
    op: Op<S>,
    value: Option<Array2<S>>,
}

pub struct Tape<'p, S: Scalar> {
    params: &'p ParamStore<S>,
    nodes: Vec<Node<S>>,
}

fn softmax_in_place<S: Scalar>(row: &mut [S]) {
    let max = row.iter().copied().fold(S::neg_infinity(), S::max);
    let mut total = S::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total = total + *x;
    }
    for x in row.iter_mut() {
        *x = *x / total;
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus<S: Scalar>(z: S) -> S {
    z.max(S::zero()) + (-z.abs()).exp().ln_1p()
}

fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

impl<'p, S: Scalar> Tape<'p, S> {
    pub fn new(params: &'p ParamStore<S>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, op: Op<S>, value: Array2<S>) -> Var {
        self.nodes.push(Node { op, value: Some(value) });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<S> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(value), _) => value,
            (None, Op::Param(i)) => &self.params.tensors[*i],
            (None, _) => unreachable!("only parameter nodes are stored by reference"),
        }
    }

    /// The single entry of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> S {
        self.value(v)[[0, 0]]
    }

    pub fn param(&mut self, index: usize) -> Var {
        self.nodes.push(Node {
            op: Op::Param(index),
            value: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives no parameter gradient.
    pub fn constant(&mut self, value: Array2<S>) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(self.value(b));
        self.push(Op::MatMul(a, b), out)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(&self.value(b).t());
        self.push(Op::MatMulT(a, b), out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) + self.value(b);
        self.push(Op::Add(a, b), out)
    }

    /// Adds the `1 × n` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) + self.value(b);
        self.push(Op::AddRow(a, b), out)
    }

    pub fn scale(&mut self, a: Var, factor: S) -> Var {
        let out = self.value(a) * factor;
        self.push(Op::Scale(a, factor), out)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x.max(S::zero()));
        self.push(Op::Relu(a), out)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).as_standard_layout().into_owned();
        for mut row in out.rows_mut() {
            softmax_in_place(row.as_slice_mut().expect("standard layout"));
        }
        self.push(Op::SoftmaxRows(a), out)
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let input = self.value(x);
        let n = S::of(input.ncols() as f64);
        let eps = S::of(LAYER_NORM_EPS);
        let mut xhat = input.clone();
        let mut inv_std = Vec::with_capacity(input.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
            let inv = S::one() / (var + eps).sqrt();
            row.mapv_inplace(|v| (v - mean) * inv);
            inv_std.push(inv);
        }
        let out = &xhat * self.value(gamma) + self.value(beta);
        self.push(
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            out,
        )
    }

    /// Rows of `table` selected by `ids`, in order.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let out = self.value(table).select(Axis(0), ids);
        self.push(
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            out,
        )
    }

    pub fn row(&mut self, a: Var, i: usize) -> Var {
        let out = self.value(a).row(i).insert_axis(Axis(0)).to_owned();
        self.push(Op::Row(a, i), out)
    }

    pub fn column(&mut self, a: Var, j: usize) -> Var {
        let out = self.value(a).column(j).insert_axis(Axis(1)).to_owned();
        self.push(Op::Column(a, j), out)
    }

    /// Softmax cross-entropy treating every entry of `logits` as one class.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Var {
        let values = self.value(logits);
        assert!(target < values.len(), "target {target} outside {} logits", values.len());
        let mut probs = values.as_standard_layout().into_owned();
        softmax_in_place(probs.as_slice_mut().expect("standard layout"));
        let flat: Vec<S> = values.iter().copied().collect();
        let max = flat.iter().copied().fold(S::neg_infinity(), S::max);
        let lse = max + flat.iter().map(|&z| (z - max).exp()).sum::<S>().ln();
        let loss = lse - flat[target];
        self.push(Op::CrossEntropy { logits, target, probs }, Array2::from_elem((1, 1), loss))
    }

    /// Binary cross-entropy with logits, averaged over all entries.
    pub fn bce_mean(&mut self, logits: Var, targets: Array2<S>) -> Var {
        let values = self.value(logits);
        assert_eq!(values.dim(), targets.dim(), "target shape mismatch");
        let n = S::of(values.len().max(1) as f64);
        let total = values
            .iter()
            .zip(targets.iter())
            .map(|(&z, &y)| softplus(z) - y * z)
            .sum::<S>();
        self.push(Op::BceMean { logits, targets }, Array2::from_elem((1, 1), total / n))
    }

    /// `Σ wᵢ · vᵢ` over `1 × 1` nodes, accumulated left to right.
    pub fn weighted_sum(&mut self, terms: &[(Var, S)]) -> Var {
        let mut total = S::zero();
        for &(v, w) in terms {
            total = total + w * self.scalar(v);
        }
        self.push(Op::WeightedSum(terms.to_vec()), Array2::from_elem((1, 1), total))
    }

    /// Gradients of the `1 × 1` node `loss`, one slot per stored parameter;
    /// `None` for parameters the computation never touched.
    pub fn backward(&self, loss: Var) -> Vec<Option<Array2<S>>> {
        let mut grads: Vec<Option<Array2<S>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Array2::from_elem((1, 1), S::one()));
        let mut param_grads: Vec<Option<Array2<S>>> = (0..self.params.len()).map(|_| None).collect();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Param(i) => accumulate(&mut param_grads[*i], g),
                Op::MatMul(a, b) => {
                    let da = g.dot(&self.value(*b).t());
                    let db = self.value(*a).t().dot(&g);
                    accumulate(&mut grads[a.0], da);
                    accumulate(&mut grads[b.0], db);
                }
                Op::MatMulT(a, b) => {
                    let da = g.dot(self.value(*b));
                    let db = g.t().dot(self.value(*a));
                    accumulate(&mut grads[a.0], da);
                    accumulate(&mut grads[b.0], db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], g.clone());
                    accumulate(&mut grads[b.0], g);
                }
                Op::AddRow(a, b) => {
                    let db = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads[a.0], g);
                    accumulate(&mut grads[b.0], db);
                }
                Op::Scale(a, factor) => accumulate(&mut grads[a.0], g * *factor),
                Op::Relu(a) => {
                    let mut da = g;
                    da.zip_mut_with(self.value(*a), |d, &x| {
                        if x <= S::zero() {
                            *d = S::zero();
                        }
                    });
                    accumulate(&mut grads[a.0], da);
                }
                Op::SoftmaxRows(a) => {
                    let y = self.value(Var(idx));
                    let mut da = &g * y;
                    for (mut row, yr) in da.rows_mut().into_iter().zip(y.rows()) {
                        let dot = row.sum();
                        row.zip_mut_with(&yr, |d, &p| *d = *d - p * dot);
                    }
                    accumulate(&mut grads[a.0], da);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let dgamma = (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dbeta = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dxhat = &g * self.value(*gamma);
                    let n = S::of(xhat.ncols() as f64);
                    let mut dx = Array2::zeros(xhat.raw_dim());
                    for r in 0..xhat.nrows() {
                        let dh = dxhat.row(r);
                        let h = xhat.row(r);
                        let sum_dh = dh.sum();
                        let sum_dh_h = dh.iter().zip(h.iter()).map(|(&a, &b)| a * b).sum::<S>();
                        let scale = inv_std[r] / n;
                        for c in 0..xhat.ncols() {
                            dx[[r, c]] = scale * (n * dh[c] - sum_dh - h[c] * sum_dh_h);
                        }
                    }
                    accumulate(&mut grads[x.0], dx);
                    accumulate(&mut grads[gamma.0], dgamma);
                    accumulate(&mut grads[beta.0], dbeta);
                }
                Op::Gather { table, ids } => {
                    let mut dt = Array2::zeros(self.value(*table).raw_dim());
                    for (r, &id) in ids.iter().enumerate() {
                        let mut dst = dt.row_mut(id);
                        dst += &g.row(r);
                    }
                    accumulate(&mut grads[table.0], dt);
                }
                Op::Row(a, i) => {
                    let mut da = Array2::zeros(self.value(*a).raw_dim());
                    da.row_mut(*i).assign(&g.row(0));
                    accumulate(&mut grads[a.0], da);
                }
                Op::Column(a, j) => {
                    let mut da = Array2::zeros(self.value(*a).raw_dim());
                    da.column_mut(*j).assign(&g.column(0));
                    accumulate(&mut grads[a.0], da);
                }
                Op::CrossEntropy { logits, target, probs } => {
                    let upstream = g[[0, 0]];
                    let mut dz = probs.clone();
                    let cols = dz.ncols();
                    dz[[target / cols, target % cols]] = dz[[target / cols, target % cols]] - S::one();
                    accumulate(&mut grads[logits.0], dz * upstream);
                }
                Op::BceMean { logits, targets } => {
                    let upstream = g[[0, 0]];
                    let n = S::of(targets.len().max(1) as f64);
                    let mut dz = self.value(*logits).mapv(sigmoid);
                    dz.zip_mut_with(targets, |d, &y| *d = (*d - y) * upstream / n);
                    accumulate(&mut grads[logits.0], dz);
                }
                Op::WeightedSum(terms) => {
                    let upstream = g[[0, 0]];
                    for &(v, w) in terms {
                        accumulate(&mut grads[v.0], Array2::from_elem((1, 1), w * upstream));
                    }
                }
            }
        }
        param_grads
    }
}

fn accumulate<S: Scalar>(slot: &mut Option<Array2<S>>, delta: Array2<S>) {
    match slot {
        Some(existing) => *existing += &delta,
        None => *slot = Some(delta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Central finite differences of `f` with respect to every entry of parameter `p`.
    fn numeric_grad(store: &ParamStore<f64>, p: usize, f: &dyn Fn(&ParamStore<f64>) -> f64) -> Array2<f64> {
        let h = 1e-6;
        let mut out = Array2::zeros(store.tensors[p].raw_dim());
        for idx in 0..store.tensors[p].len() {
            let (r, c) = (idx / store.tensors[p].ncols(), idx % store.tensors[p].ncols());
            let mut plus = store.clone();
            plus.tensors[p][[r, c]] += h;
            let mut minus = store.clone();
            minus.tensors[p][[r, c]] -= h;
            out[[r, c]] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        out
    }

    fn check(store: &ParamStore<f64>, f: &dyn Fn(&mut Tape<f64>) -> Var) {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape);
        let grads = tape.backward(loss);
        let eval = |s: &ParamStore<f64>| {
            let mut t = Tape::new(s);
            let l = f(&mut t);
            t.scalar(l)
        };
        for p in 0..store.len() {
            let numeric = numeric_grad(store, p, &eval);
            let analytic = grads[p].clone().unwrap_or_else(|| Array2::zeros(numeric.raw_dim()));
            for (a, n) in analytic.iter().zip(numeric.iter()) {
                assert!((a - n).abs() < 1e-6 * (1.0 + n.abs()), "param {p}: {a} vs {n}");
            }
        }
    }

    fn store() -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.push("x", array![[0.3, -1.2, 0.5], [1.1, 0.4, -0.7]]);
        s.push("w", array![[0.2, -0.5], [0.9, 0.1], [-0.4, 0.8]]);
        s.push("b", array![[0.05, -0.1]]);
        s.push("gamma", array![[1.2, 0.7, -0.3]]);
        s.push("beta", array![[0.1, 0.0, -0.2]]);
        s
    }

    #[test]
    fn linear_relu_cross_entropy() {
        check(&store(), &|t| {
            let (x, w, b) = (t.param(0), t.param(1), t.param(2));
            let h = t.matmul(x, w);
            let h = t.add_row(h, b);
            let h = t.relu(h);
            t.cross_entropy(h, 3)
        });
    }

    #[test]
    fn layer_norm_softmax_attention() {
        check(&store(), &|t| {
            let (x, g, be) = (t.param(0), t.param(3), t.param(4));
            let n = t.layer_norm(x, g, be);
            let scores = t.matmul_t(n, x);
            let scores = t.scale(scores, 0.5);
            let attn = t.softmax_rows(scores);
            let mixed = t.matmul(attn, n);
            let r = t.row(mixed, 1);
            t.cross_entropy(r, 0)
        });
    }

    #[test]
    fn gather_column_bce_weighted_sum() {
        check(&store(), &|t| {
            let x = t.param(0);
            let rows = t.gather(x, &[1, 0, 1]);
            let w = t.param(1);
            let z = t.matmul(rows, w);
            let c = t.column(z, 1);
            let bce = t.bce_mean(c, array![[1.0], [0.0], [1.0]]);
            let both = t.add(z, z);
            let ce = t.cross_entropy(both, 4);
            t.weighted_sum(&[(bce, 0.7), (ce, 1.5)])
        });
    }

    #[test]
    fn zero_weight_gives_exact_zero_gradient() {
        let s = store();
        let mut t = Tape::new(&s);
        let (x, w) = (t.param(0), t.param(1));
        let z = t.matmul(x, w);
        let ce = t.cross_entropy(z, 0);
        let b = t.param(2);
        let other = t.cross_entropy(b, 1);
        let total = t.weighted_sum(&[(ce, 1.0), (other, 0.0)]);
        let grads = t.backward(total);
        assert!(grads[2].as_ref().unwrap().iter().all(|&g| g == 0.0));
        assert!(grads[3].is_none());
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let s = ParamStore::<f64>::new();
        let mut t = Tape::new(&s);
        let z = t.constant(Array2::zeros((1, 9)));
        let ce = t.cross_entropy(z, 4);
        assert!((t.scalar(ce) - 9f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn bce_is_stable_for_large_logits() {
        let s = ParamStore::<f32>::new();
        let mut t = Tape::new(&s);
        let z = t.constant(array![[80.0f32, -80.0]]);
        let l = t.bce_mean(z, array![[1.0, 0.0]]);
        assert!(t.scalar(l).is_finite() && t.scalar(l) < 1e-6);
    }
}
