//! Tensor-level reverse-mode differentiation.
//!
//! Operations are recorded on a [`Tape`] in evaluation order, so node indices are
//! already a topological order and the backward sweep is a single reverse scan.

use super::kernels;
use super::tensor::{Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<T>,
        rstd: Vec<T>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        horizons: Vec<usize>,
        probs: Vec<T>,
    },
    Softmax(Var),
    LogSoftmax(Var),
    LogSumExp(Var),
    Sum(Var),
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads[v.0].take()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        debug_assert!(value.all_finite(), "non-finite value produced on tape");
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn dims2(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.dims2(a);
        let (k2, n) = self.dims2(b);
        assert_eq!(k, k2, "matmul inner dimensions differ");
        let out = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), &[a, b])
    }

    /// `x · w + b`, the affine map used by every projection in the model.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let (m, k) = self.dims2(x);
        let (k2, n) = self.dims2(w);
        assert_eq!(k, k2, "linear inner dimensions differ");
        let out = kernels::linear(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            m,
            k,
            n,
        );
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(
            Tensor::from_parts(vec![m, n], out),
            Op::Linear { x, w, b },
            &inputs,
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "add shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect();
        let shape = va.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::Add(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "mul shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let shape = va.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|&x| x * c).collect();
        let shape = va.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::Scale(a, c), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let data = kernels::relu(va.data());
        let shape = va.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::Relu(a), &[a])
    }

    /// Gathers rows of `table` (`[vocab, d]`) for each id.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let d = t.cols();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            data.extend_from_slice(t.row(id));
        }
        self.push(
            Tensor::from_parts(vec![ids.len(), d], data),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        )
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let vx = self.value(x);
        let d = vx.cols();
        let (y, mean, rstd) =
            kernels::layer_norm(vx.data(), self.value(gamma).data(), self.value(beta).data(), d);
        let shape = vx.shape().to_vec();
        self.push(
            Tensor::from_parts(shape, y),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                mean,
                rstd,
            },
            &[x, gamma, beta],
        )
    }

    /// Multi-head attention where query row `i` sees key rows `0..horizons[i]`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, horizons: &[usize]) -> Var {
        let (tq, d) = self.dims2(q);
        assert_eq!(tq, horizons.len(), "one horizon per query row");
        let (out, probs) = kernels::attention(
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
            d,
            heads,
            horizons,
        );
        self.push(
            Tensor::from_parts(vec![tq, d], out),
            Op::Attention {
                q,
                k,
                v,
                heads,
                horizons: horizons.to_vec(),
                probs,
            },
            &[q, k, v],
        )
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let c = va.cols();
        let mut data = va.data().to_vec();
        for row in data.chunks_mut(c) {
            kernels::softmax_in_place(row);
        }
        let shape = va.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::Softmax(a), &[a])
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let data = kernels::log_softmax_rows(va.data(), va.cols());
        let shape = va.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::LogSoftmax(a), &[a])
    }

    /// Row-wise log-sum-exp, producing a vector with one entry per row.
    pub fn log_sum_exp(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let c = va.cols();
        let data: Vec<T> = va
            .data()
            .chunks(c)
            .map(|row| {
                let mut tmp = row.to_vec();
                kernels::log_softmax_in_place(&mut tmp);
                // log_softmax gives v - lse; recover lse from the first entry.
                row[0] - tmp[0]
            })
            .collect();
        let n = data.len();
        self.push(Tensor::from_parts(vec![n], data), Op::LogSumExp(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// Multiplies by a precomputed keep mask (already scaled by `1/(1-p)`).
    pub fn dropout(&mut self, x: Var, mask: Vec<T>) -> Var {
        let vx = self.value(x);
        assert_eq!(vx.numel(), mask.len());
        let data = vx.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let shape = vx.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::Dropout { x, mask }, &[x])
    }

    /// Back-propagates `seed` (the gradient of some scalar objective with respect
    /// to `root`) through every recorded operation.
    pub fn backward(&self, root: Var, seed: Tensor<T>) -> Gradients<T> {
        assert_eq!(
            self.nodes[root.0].value.shape(),
            seed.shape(),
            "seed gradient must match the root shape"
        );
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed);
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else { continue };
            self.backprop_node(node, &dy, &mut grads);
            grads[idx] = Some(dy);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop_node(&self, node: &Node<T>, dy: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let shape_of = |v: Var| self.nodes[v.0].value.shape().to_vec();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) | Op::Linear { x: a, w: b, .. } => {
                let (m, k) = self.dims2(*a);
                let n = self.dims2(*b).1;
                if self.nodes[a.0].needs_grad {
                    let bt = kernels::transpose(self.value(*b).data(), k, n);
                    let da = kernels::matmul(dy.data(), &bt, m, n, k);
                    self.accumulate(grads, *a, Tensor::from_parts(shape_of(*a), da));
                }
                if self.nodes[b.0].needs_grad {
                    let at = kernels::transpose(self.value(*a).data(), m, k);
                    let db = kernels::matmul(&at, dy.data(), k, m, n);
                    self.accumulate(grads, *b, Tensor::from_parts(shape_of(*b), db));
                }
                if let Op::Linear { b: Some(bias), .. } = &node.op {
                    let mut db = vec![T::zero(); n];
                    for row in dy.data().chunks(n) {
                        for (acc, &g) in db.iter_mut().zip(row) {
                            *acc += g;
                        }
                    }
                    self.accumulate(grads, *bias, Tensor::from_parts(shape_of(*bias), db));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, dy.clone());
                self.accumulate(grads, *b, dy.clone());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let da = dy.data().iter().zip(vb.data()).map(|(&g, &y)| g * y).collect();
                let db = dy.data().iter().zip(va.data()).map(|(&g, &x)| g * x).collect();
                self.accumulate(grads, *a, Tensor::from_parts(shape_of(*a), da));
                self.accumulate(grads, *b, Tensor::from_parts(shape_of(*b), db));
            }
            Op::Scale(a, c) => {
                let da = dy.data().iter().map(|&g| g * *c).collect();
                self.accumulate(grads, *a, Tensor::from_parts(shape_of(*a), da));
            }
            Op::Relu(a) => {
                let va = self.value(*a);
                let da = dy
                    .data()
                    .iter()
                    .zip(va.data())
                    .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                    .collect();
                self.accumulate(grads, *a, Tensor::from_parts(shape_of(*a), da));
            }
            Op::Embedding { table, ids } => {
                let shape = shape_of(*table);
                let d = shape[1];
                let mut dt = Tensor::zeros(&shape);
                let data = dt.data_mut();
                for (r, &id) in ids.iter().enumerate() {
                    for c in 0..d {
                        data[id * d + c] += dy.data()[r * d + c];
                    }
                }
                self.accumulate(grads, *table, dt);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                mean,
                rstd,
            } => {
                let vx = self.value(*x);
                let d = vx.cols();
                let (dx, dg, db) = kernels::layer_norm_backward(
                    vx.data(),
                    self.value(*gamma).data(),
                    mean,
                    rstd,
                    dy.data(),
                    d,
                );
                self.accumulate(grads, *x, Tensor::from_parts(shape_of(*x), dx));
                self.accumulate(grads, *gamma, Tensor::from_parts(shape_of(*gamma), dg));
                self.accumulate(grads, *beta, Tensor::from_parts(shape_of(*beta), db));
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                horizons,
                probs,
            } => {
                let d = self.dims2(*q).1;
                let (dq, dk, dv) = kernels::attention_backward(
                    self.value(*q).data(),
                    self.value(*k).data(),
                    self.value(*v).data(),
                    probs,
                    dy.data(),
                    d,
                    *heads,
                    horizons,
                );
                self.accumulate(grads, *q, Tensor::from_parts(shape_of(*q), dq));
                self.accumulate(grads, *k, Tensor::from_parts(shape_of(*k), dk));
                self.accumulate(grads, *v, Tensor::from_parts(shape_of(*v), dv));
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let c = y.cols();
                let mut da = Vec::with_capacity(y.numel());
                for (yr, gr) in y.data().chunks(c).zip(dy.data().chunks(c)) {
                    let dot: T = yr.iter().zip(gr).map(|(&p, &g)| p * g).sum();
                    da.extend(yr.iter().zip(gr).map(|(&p, &g)| p * (g - dot)));
                }
                self.accumulate(grads, *a, Tensor::from_parts(shape_of(*a), da));
            }
            Op::LogSoftmax(a) => {
                let y = &node.value;
                let c = y.cols();
                let mut da = Vec::with_capacity(y.numel());
                for (yr, gr) in y.data().chunks(c).zip(dy.data().chunks(c)) {
                    let total: T = gr.iter().copied().sum();
                    da.extend(yr.iter().zip(gr).map(|(&ly, &g)| g - ly.exp() * total));
                }
                self.accumulate(grads, *a, Tensor::from_parts(shape_of(*a), da));
            }
            Op::LogSumExp(a) => {
                let va = self.value(*a);
                let c = va.cols();
                let mut da = Vec::with_capacity(va.numel());
                for (r, row) in va.data().chunks(c).enumerate() {
                    let lse = node.value.data()[r];
                    let g = dy.data()[r];
                    da.extend(row.iter().map(|&x| g * (x - lse).exp()));
                }
                self.accumulate(grads, *a, Tensor::from_parts(shape_of(*a), da));
            }
            Op::Sum(a) => {
                let shape = shape_of(*a);
                self.accumulate(grads, *a, Tensor::full(&shape, dy.item()));
            }
            Op::Dropout { x, mask } => {
                let dx = dy.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
                self.accumulate(grads, *x, Tensor::from_parts(shape_of(*x), dx));
            }
        }
    }
}
