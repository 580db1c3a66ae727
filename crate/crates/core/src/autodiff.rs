//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! Nodes are appended in evaluation order, so the tape is acyclic and
//! `backward` can walk it in reverse. Parameters enter as leaves via
//! [`Graph::param`]; their gradients accumulate across `backward` calls until
//! [`Graph::zero_grad`].

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{numel, Tensor};

/// Target id skipped by [`Graph::cross_entropy`].
pub const IGNORE: u32 = u32::MAX;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    BatchMatMul { a: Var, b: Var, trans_b: bool },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Relu(Var),
    Softmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, rstd: Vec<T> },
    Gather { table: Var, ids: Vec<usize> },
    MaskedFill { a: Var, mask: Vec<bool> },
    CrossEntropy { logits: Var, targets: Vec<u32>, probs: Vec<T>, count: usize },
    Dropout { a: Var, mask: Vec<T> },
    Scale { a: Var, s: T },
    Sum(Var),
    Reshape(Var),
    SwapMiddle { a: Var, dims: [usize; 4] },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    /// Accumulated gradient; kept only for parameter leaves.
    grad: Option<Vec<T>>,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    train: bool,
}

impl<T: Scalar> std::fmt::Debug for Graph<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Graph").field("nodes", &self.nodes.len()).field("train", &self.train).finish()
    }
}

fn dim_err<T>(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Result<T> {
    Err(Error::Dimension { op, lhs: lhs.to_vec(), rhs: rhs.to_vec() })
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new(train: bool) -> Self {
        Self { nodes: Vec::new(), train }
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf that receives gradients.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a parameter leaf; zeros when nothing reached it.
    pub fn grad(&self, v: Var) -> Vec<T> {
        let n = &self.nodes[v.0];
        n.grad.clone().unwrap_or_else(|| vec![T::zero(); n.value.len()])
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// `a · b` where `a` is `[.., m, k]` and `b` is `[k, n]`, or `[n, k]`
    /// when `trans_b`. Leading dims of `a` are treated as extra rows.
    pub fn matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (ash, bsh) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if bsh.len() != 2 || ash.is_empty() {
            return dim_err("matmul", &ash, &bsh);
        }
        let k = *ash.last().unwrap();
        let (bk, n) = if trans_b { (bsh[1], bsh[0]) } else { (bsh[0], bsh[1]) };
        if k != bk {
            return dim_err("matmul", &ash, &bsh);
        }
        let m = numel(&ash) / k.max(1);
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), trans_b, &mut out, false);
        let mut shape = ash.clone();
        *shape.last_mut().unwrap() = n;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::MatMul { a, b, trans_b }, rg))
    }

    /// Batched product of `[B, m, k]` with `[B, k, n]` (or `[B, n, k]`).
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (ash, bsh) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if ash.len() != 3 || bsh.len() != 3 || ash[0] != bsh[0] {
            return dim_err("batch_matmul", &ash, &bsh);
        }
        let (batch, m, k) = (ash[0], ash[1], ash[2]);
        let (bk, n) = if trans_b { (bsh[2], bsh[1]) } else { (bsh[1], bsh[2]) };
        if k != bk {
            return dim_err("batch_matmul", &ash, &bsh);
        }
        let mut out = vec![T::zero(); batch * m * n];
        {
            let (av, bv) = (self.value(a).data(), self.value(b).data());
            for i in 0..batch {
                T::gemm(
                    m,
                    k,
                    n,
                    &av[i * m * k..(i + 1) * m * k],
                    false,
                    &bv[i * k * n..(i + 1) * k * n],
                    trans_b,
                    &mut out[i * m * n..(i + 1) * m * n],
                    false,
                );
            }
        }
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(vec![batch, m, n], out)?, Op::BatchMatMul { a, b, trans_b }, rg))
    }

    /// Elementwise sum. `b` may match a trailing suffix of `a`'s shape, in
    /// which case it is broadcast over `a`'s leading dims.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ash, bsh) = (self.shape(a), self.shape(b));
        if bsh.len() > ash.len() || ash[ash.len() - bsh.len()..] != *bsh {
            return dim_err("add", ash, bsh);
        }
        let bn = self.value(b).len();
        let bv = self.value(b).data();
        let out: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bv[i % bn])
            .collect();
        let shape = ash.to_vec();
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::Add { a, b }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return dim_err("mul", self.shape(a), self.shape(b));
        }
        let out: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::Mul { a, b }, rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out: Vec<T> = self.value(a).data().iter().map(|&x| x.max(T::zero())).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs(a);
        self.push(Tensor::new(shape, out).expect("same numel"), Op::Relu(a), rg)
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let c = t.cols();
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(c) {
            softmax_in_place(row);
        }
        let shape = t.shape().to_vec();
        let rg = self.needs(a);
        self.push(Tensor::new(shape, out).expect("same numel"), Op::Softmax(a), rg)
    }

    /// Normalizes the last axis to zero mean and unit variance, then applies
    /// `gain` and `bias` (both shaped like the last axis).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let c = self.value(x).cols();
        if self.shape(gain) != [c] || self.shape(bias) != [c] {
            return dim_err("layer_norm", self.shape(x), self.shape(gain));
        }
        let eps = T::from_f64_lossy(eps);
        let n = T::from_usize(c).unwrap();
        let xv = self.value(x).data();
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let rows = xv.len() / c;
        let mut xhat = vec![T::zero(); xv.len()];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); xv.len()];
        for r in 0..rows {
            let row = &xv[r * c..(r + 1) * c];
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..c {
                let h = (row[j] - mean) * rs;
                xhat[r * c + j] = h;
                out[r * c + j] = h * g[j] + b[j];
            }
        }
        let shape = self.shape(x).to_vec();
        let rg = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(Tensor::new(shape, out)?, Op::LayerNorm { x, gain, bias, xhat, rstd }, rg))
    }

    /// Row lookup: output shape is `out_shape ++ [table_cols]` with one row per
    /// id. Used for embeddings and for picking hidden states by position.
    pub fn gather(&mut self, table: Var, ids: &[usize], out_shape: &[usize]) -> Result<Var> {
        let tsh = self.shape(table).to_vec();
        if tsh.len() != 2 || numel(out_shape) != ids.len() {
            return dim_err("gather", &tsh, out_shape);
        }
        let (rows, cols) = (tsh[0], tsh[1]);
        if let Some(position) = ids.iter().position(|&i| i >= rows) {
            return Err(Error::Input {
                position,
                message: format!("id {} out of range for table with {rows} rows", ids[position]),
            });
        }
        let tv = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &i in ids {
            out.extend_from_slice(&tv[i * cols..(i + 1) * cols]);
        }
        let mut shape = out_shape.to_vec();
        shape.push(cols);
        let rg = self.needs(table);
        Ok(self.push(Tensor::new(shape, out)?, Op::Gather { table, ids: ids.to_vec() }, rg))
    }

    /// Replaces entries where `mask` is true with `value`.
    pub fn masked_fill(&mut self, a: Var, mask: Vec<bool>, value: f64) -> Result<Var> {
        if mask.len() != self.value(a).len() {
            return dim_err("masked_fill", self.shape(a), &[mask.len()]);
        }
        let fill = T::from_f64_lossy(value);
        let out: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .zip(&mask)
            .map(|(&x, &m)| if m { fill } else { x })
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs(a);
        Ok(self.push(Tensor::new(shape, out)?, Op::MaskedFill { a, mask }, rg))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits` (`[.., K]`). Rows whose target is [`IGNORE`] are skipped.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[u32]) -> Result<Var> {
        let t = self.value(logits);
        let k = t.cols();
        let rows = t.len() / k.max(1);
        if rows != targets.len() {
            return dim_err("cross_entropy", t.shape(), &[targets.len()]);
        }
        let mut probs = t.data().to_vec();
        let mut total = 0.0f64;
        let mut count = 0usize;
        for (r, &tgt) in targets.iter().enumerate() {
            let row = &mut probs[r * k..(r + 1) * k];
            let lse = log_sum_exp(row);
            if tgt != IGNORE {
                let tgt = tgt as usize;
                if tgt >= k {
                    return Err(Error::Input {
                        position: r,
                        message: format!("target {tgt} out of range for {k} classes"),
                    });
                }
                total += (lse - row[tgt]).as_f64();
                count += 1;
            }
            for v in row.iter_mut() {
                *v = (*v - lse).exp();
            }
        }
        if count == 0 {
            return Err(Error::Contract("cross_entropy with no scored targets".into()));
        }
        let loss = T::from_f64_lossy(total / count as f64);
        let rg = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy { logits, targets: targets.to_vec(), probs, count },
            rg,
        ))
    }

    /// Inverted dropout. Returns `a` itself when the graph is not training
    /// or `rate` is zero.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R) -> Var {
        if !self.train || rate <= 0.0 {
            return a;
        }
        let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(a).len())
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let out: Vec<T> = self.value(a).data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs(a);
        self.push(Tensor::new(shape, out).expect("same numel"), Op::Dropout { a, mask }, rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let s = T::from_f64_lossy(s);
        let out: Vec<T> = self.value(a).data().iter().map(|&x| x * s).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs(a);
        self.push(Tensor::new(shape, out).expect("same numel"), Op::Scale { a, s }, rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().copied().sum::<T>();
        let rg = self.needs(a);
        self.push(Tensor::scalar(total), Op::Sum(a), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        let rg = self.needs(a);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    /// `[A, B, C, D] -> [A, C, B, D]`.
    pub fn swap_middle(&mut self, a: Var) -> Result<Var> {
        let sh = self.shape(a).to_vec();
        if sh.len() != 4 {
            return dim_err("swap_middle", &sh, &[4]);
        }
        let dims = [sh[0], sh[1], sh[2], sh[3]];
        let out = swap_middle_data(self.value(a).data(), dims);
        let rg = self.needs(a);
        Ok(self.push(
            Tensor::new(vec![sh[0], sh[2], sh[1], sh[3]], out)?,
            Op::SwapMiddle { a, dims },
            rg,
        ))
    }

    /// Back-propagates from a scalar `loss`, adding into parameter gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.backward_node(i, &g, &mut grads);
            if matches!(self.nodes[i].op, Op::Leaf) {
                match &mut self.nodes[i].grad {
                    Some(acc) => add_into(acc, &g),
                    slot => *slot = Some(g),
                }
            }
        }
        // Unreached parameters read as zero through `grad`.
        Ok(())
    }

    fn backward_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let node = &nodes[i];
        macro_rules! with_grad {
            ($v:expr, |$d:ident| $body:expr) => {
                if nodes[$v.0].requires_grad {
                    let n = nodes[$v.0].value.len();
                    let $d: &mut Vec<T> = grads[$v.0].get_or_insert_with(|| vec![T::zero(); n]);
                    $body;
                }
            };
        }
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, trans_b } => {
                let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                let bsh = nodes[b.0].value.shape();
                let (k, n) = if *trans_b { (bsh[1], bsh[0]) } else { (bsh[0], bsh[1]) };
                let m = av.len() / k.max(1);
                with_grad!(a, |da| T::gemm(m, n, k, g, false, bv, !*trans_b, da, true));
                with_grad!(b, |db| if *trans_b {
                    T::gemm(n, m, k, g, true, av, false, db, true)
                } else {
                    T::gemm(k, m, n, av, true, g, false, db, true)
                });
            }
            Op::BatchMatMul { a, b, trans_b } => {
                let (ash, bsh) = (nodes[a.0].value.shape(), nodes[b.0].value.shape());
                let (batch, m, k) = (ash[0], ash[1], ash[2]);
                let n = if *trans_b { bsh[1] } else { bsh[2] };
                let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                with_grad!(a, |da| for p in 0..batch {
                    T::gemm(
                        m,
                        n,
                        k,
                        &g[p * m * n..(p + 1) * m * n],
                        false,
                        &bv[p * k * n..(p + 1) * k * n],
                        !*trans_b,
                        &mut da[p * m * k..(p + 1) * m * k],
                        true,
                    );
                });
                with_grad!(b, |db| for p in 0..batch {
                    let gp = &g[p * m * n..(p + 1) * m * n];
                    let ap = &av[p * m * k..(p + 1) * m * k];
                    let dbp = &mut db[p * k * n..(p + 1) * k * n];
                    if *trans_b {
                        T::gemm(n, m, k, gp, true, ap, false, dbp, true);
                    } else {
                        T::gemm(k, m, n, ap, true, gp, false, dbp, true);
                    }
                });
            }
            Op::Add { a, b } => {
                with_grad!(a, |da| add_into(da, g));
                with_grad!(b, |db| {
                    let bn = db.len();
                    for (j, &gv) in g.iter().enumerate() {
                        db[j % bn] += gv;
                    }
                });
            }
            Op::Mul { a, b } => {
                let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                with_grad!(a, |da| for j in 0..g.len() {
                    da[j] += g[j] * bv[j];
                });
                with_grad!(b, |db| for j in 0..g.len() {
                    db[j] += g[j] * av[j];
                });
            }
            Op::Relu(a) => {
                let av = nodes[a.0].value.data();
                with_grad!(a, |da| for j in 0..g.len() {
                    if av[j] > T::zero() {
                        da[j] += g[j];
                    }
                });
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let c = node.value.cols();
                with_grad!(a, |da| for r in 0..y.len() / c {
                    let (yr, gr) = (&y[r * c..(r + 1) * c], &g[r * c..(r + 1) * c]);
                    let dot: T = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                    for j in 0..c {
                        da[r * c + j] += yr[j] * (gr[j] - dot);
                    }
                });
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let c = node.value.cols();
                let rows = g.len() / c;
                let gv = nodes[gain.0].value.data();
                with_grad!(gain, |dg| for r in 0..rows {
                    for j in 0..c {
                        dg[j] += g[r * c + j] * xhat[r * c + j];
                    }
                });
                with_grad!(bias, |db| for r in 0..rows {
                    for j in 0..c {
                        db[j] += g[r * c + j];
                    }
                });
                with_grad!(x, |dx| {
                    let n = T::from_usize(c).unwrap();
                    for r in 0..rows {
                        let mut mean_d = T::zero();
                        let mut mean_dx = T::zero();
                        for j in 0..c {
                            let d = g[r * c + j] * gv[j];
                            mean_d += d;
                            mean_dx += d * xhat[r * c + j];
                        }
                        mean_d /= n;
                        mean_dx /= n;
                        for j in 0..c {
                            let d = g[r * c + j] * gv[j];
                            dx[r * c + j] += rstd[r] * (d - mean_d - xhat[r * c + j] * mean_dx);
                        }
                    }
                });
            }
            Op::Gather { table, ids } => {
                let c = nodes[table.0].value.cols();
                with_grad!(table, |dt| for (r, &id) in ids.iter().enumerate() {
                    add_into(&mut dt[id * c..(id + 1) * c], &g[r * c..(r + 1) * c]);
                });
            }
            Op::MaskedFill { a, mask } => {
                with_grad!(a, |da| for j in 0..g.len() {
                    if !mask[j] {
                        da[j] += g[j];
                    }
                });
            }
            Op::CrossEntropy { logits, targets, probs, count } => {
                let k = nodes[logits.0].value.cols();
                let scale = g[0] / T::from_usize(*count).unwrap();
                with_grad!(logits, |dl| for (r, &t) in targets.iter().enumerate() {
                    if t == IGNORE {
                        continue;
                    }
                    for j in 0..k {
                        let mut d = probs[r * k + j];
                        if j == t as usize {
                            d -= T::one();
                        }
                        dl[r * k + j] += scale * d;
                    }
                });
            }
            Op::Dropout { a, mask } => {
                with_grad!(a, |da| for j in 0..g.len() {
                    da[j] += g[j] * mask[j];
                });
            }
            Op::Scale { a, s } => {
                with_grad!(a, |da| for j in 0..g.len() {
                    da[j] += g[j] * *s;
                });
            }
            Op::Sum(a) => {
                with_grad!(a, |da| for d in da.iter_mut() {
                    *d += g[0];
                });
            }
            Op::Reshape(a) => {
                with_grad!(a, |da| add_into(da, g));
            }
            Op::SwapMiddle { a, dims } => {
                let back = swap_middle_data(g, [dims[0], dims[2], dims[1], dims[3]]);
                with_grad!(a, |da| add_into(da, &back));
            }
        }
    }
}

fn swap_middle_data<T: Copy>(src: &[T], [a, b, c, d]: [usize; 4]) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for i in 0..a {
        for k in 0..c {
            for j in 0..b {
                let off = ((i * b + j) * c + k) * d;
                out.extend_from_slice(&src[off..off + d]);
            }
        }
    }
    out
}

pub fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Row-wise log-softmax without building a graph.
pub fn log_softmax<T: Scalar>(row: &[T]) -> Vec<f64> {
    let lse = log_sum_exp(row).as_f64();
    row.iter().map(|&v| v.as_f64() - lse).collect()
}
