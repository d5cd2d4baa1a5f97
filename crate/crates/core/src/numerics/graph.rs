//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every op as it is evaluated. Node ids are handed out
//! in creation order, so the node list is already a topological order and
//! [`Graph::backward`] is a single reverse sweep. The graph is consumed by
//! the backward pass; build a fresh one per forward pass.

use ndarray::{concatenate, Array2, Array3, ArrayD, Axis, Ix2, Ix3, IxDyn, Slice, Zip};
use rand::Rng;

use super::tensor::{broadcast_shape, Tensor};
use super::TensorError;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    Max,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Elementwise(ElementwiseKind, Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    BatchMatMul(Var, Var),
    Permute(Var, Vec<usize>),
    Reshape(Var),
    Reduce(Var, usize, ReduceKind, Vec<usize>),
    Softmax(Var, usize),
    Relu(Var),
    Abs(Var),
    Dropout(Var, ArrayD<f64>),
    Slice(Var, usize, usize),
    Concat(Vec<Var>, usize),
    Gather(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Accumulated gradients of every `requires_grad` leaf, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Removes and returns a gradient. Leaves that were never reached by
    /// the backward sweep get a zero tensor of the requested shape.
    pub fn take_or_zeros(&mut self, var: Var, shape: &[usize]) -> Tensor {
        self.grads
            .get_mut(var.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Tensor::zeros(shape))
    }
}

fn check_finite(op: &'static str, array: &ArrayD<f64>) -> Result<(), TensorError> {
    if array.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

fn check_axis(axis: usize, ndim: usize) -> Result<(), TensorError> {
    if axis < ndim {
        Ok(())
    } else {
        Err(TensorError::Axis { axis, ndim })
    }
}

/// Sums a broadcast gradient back down to `shape`.
fn reduce_to(grad: ArrayD<f64>, shape: &[usize]) -> ArrayD<f64> {
    let mut g = grad;
    while g.ndim() > shape.len() {
        g = g.sum_axis(Axis(0));
    }
    for (axis, &dim) in shape.iter().enumerate() {
        if dim == 1 && g.shape()[axis] != 1 {
            g = g.sum_axis(Axis(axis)).insert_axis(Axis(axis));
        }
    }
    g
}

fn as2(a: &ArrayD<f64>) -> ndarray::ArrayView2<'_, f64> {
    a.view().into_dimensionality::<Ix2>().expect("rank checked")
}

fn as3(a: &ArrayD<f64>) -> ndarray::ArrayView3<'_, f64> {
    a.view().into_dimensionality::<Ix3>().expect("rank checked")
}

fn bmm(a: ndarray::ArrayView3<'_, f64>, b: ndarray::ArrayView3<'_, f64>) -> Array3<f64> {
    let (batch, m, _) = a.dim();
    let n = b.dim().2;
    let mut out = Array3::zeros((batch, m, n));
    for ((a, b), mut o) in a
        .outer_iter()
        .zip(b.outer_iter())
        .zip(out.outer_iter_mut())
    {
        ndarray::linalg::general_mat_mul(1.0, &a, &b, 0.0, &mut o);
    }
    out
}

fn softmax_forward(x: &ArrayD<f64>, axis: usize) -> ArrayD<f64> {
    let mut out = x.clone();
    for mut lane in out.lanes_mut(Axis(axis)) {
        let max = lane.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        lane.mapv_inplace(|v| (v - max).exp());
        let total = lane.sum();
        lane.mapv_inplace(|v| v / total);
    }
    out
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: ArrayD<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Tensor::from_array(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_checked(
        &mut self,
        name: &'static str,
        value: ArrayD<f64>,
        op: Op,
        requires_grad: bool,
    ) -> Result<Var, TensorError> {
        check_finite(name, &value)?;
        Ok(self.push(value, op, requires_grad))
    }

    fn arr(&self, v: Var) -> &ArrayD<f64> {
        self.nodes[v.0].value.array()
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value.into_array(), Op::Leaf, requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn elementwise(
        &mut self,
        a: Var,
        b: Var,
        kind: ElementwiseKind,
    ) -> Result<Var, TensorError> {
        broadcast_shape(self.shape(a), self.shape(b))?;
        let (x, y) = (self.arr(a), self.arr(b));
        let (name, out) = match kind {
            ElementwiseKind::Add => ("add", x + y),
            ElementwiseKind::Sub => ("sub", x - y),
            ElementwiseKind::Mul => ("mul", x * y),
            ElementwiseKind::Div => ("div", x / y),
        };
        let rg = self.rg(a) || self.rg(b);
        self.push_checked(name, out, Op::Elementwise(kind, a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(a, b, ElementwiseKind::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(a, b, ElementwiseKind::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(a, b, ElementwiseKind::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(a, b, ElementwiseKind::Div)
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, TensorError> {
        let out = self.arr(a) * factor;
        let rg = self.rg(a);
        self.push_checked("scale", out, Op::Scale(a, factor), rg)
    }

    /// `[m, k] x [k, n] -> [m, n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::MatMul {
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let out = as2(self.arr(a)).dot(&as2(self.arr(b))).into_dyn();
        let rg = self.rg(a) || self.rg(b);
        self.push_checked("matmul", out, Op::MatMul(a, b), rg)
    }

    /// `[batch, m, k] x [batch, k, n] -> [batch, m, n]`
    pub fn batch_matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(TensorError::MatMul {
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let out = bmm(as3(self.arr(a)), as3(self.arr(b))).into_dyn();
        let rg = self.rg(a) || self.rg(b);
        self.push_checked("batch_matmul", out, Op::BatchMatMul(a, b), rg)
    }

    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var, TensorError> {
        let ndim = self.shape(a).len();
        let mut seen = vec![false; ndim];
        if axes.len() != ndim
            || axes
                .iter()
                .any(|&ax| ax >= ndim || std::mem::replace(&mut seen[ax], true))
        {
            return Err(TensorError::Permutation {
                axes: axes.to_vec(),
                ndim,
            });
        }
        let out = self
            .arr(a)
            .view()
            .permuted_axes(IxDyn(axes))
            .as_standard_layout()
            .into_owned();
        let rg = self.rg(a);
        Ok(self.push(out, Op::Permute(a, axes.to_vec()), rg))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let ndim = self.shape(a).len();
        if ndim < 2 {
            return Err(TensorError::Axis { axis: 1, ndim });
        }
        let mut axes: Vec<usize> = (0..ndim).collect();
        axes.swap(ndim - 2, ndim - 1);
        self.permute(a, &axes)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let from = self.shape(a);
        if from.iter().product::<usize>() != shape.iter().product::<usize>() {
            return Err(TensorError::Reshape {
                from: from.to_vec(),
                to: shape.to_vec(),
            });
        }
        let data = self.value(a).data().to_vec();
        let out = ArrayD::from_shape_vec(IxDyn(shape), data).expect("element count checked");
        let rg = self.rg(a);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// Inserts a size-1 axis at `axis`.
    pub fn unsqueeze(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let mut shape = self.shape(a).to_vec();
        check_axis(axis, shape.len() + 1)?;
        shape.insert(axis, 1);
        self.reshape(a, &shape)
    }

    /// Reduces over `axis`, removing it.
    pub fn reduce(&mut self, a: Var, axis: usize, kind: ReduceKind) -> Result<Var, TensorError> {
        let x = self.arr(a);
        check_axis(axis, x.ndim())?;
        let mut argmax = Vec::new();
        let out = match kind {
            ReduceKind::Sum => x.sum_axis(Axis(axis)),
            ReduceKind::Mean => {
                let n = x.shape()[axis];
                if n == 0 {
                    return Err(TensorError::EmptyReduction { axis });
                }
                x.sum_axis(Axis(axis)) / n as f64
            }
            ReduceKind::Max => {
                if x.shape()[axis] == 0 {
                    return Err(TensorError::EmptyReduction { axis });
                }
                let mut out_shape = x.shape().to_vec();
                out_shape.remove(axis);
                let mut values = Vec::with_capacity(out_shape.iter().product());
                for lane in x.lanes(Axis(axis)) {
                    // strict `>` keeps the first maximal index on ties
                    let (mut best, mut best_i) = (lane[0], 0);
                    for (i, &v) in lane.iter().enumerate().skip(1) {
                        if v > best {
                            best = v;
                            best_i = i;
                        }
                    }
                    values.push(best);
                    argmax.push(best_i);
                }
                ArrayD::from_shape_vec(IxDyn(&out_shape), values).expect("lane count matches")
            }
        };
        let rg = self.rg(a);
        self.push_checked("reduce", out, Op::Reduce(a, axis, kind, argmax), rg)
    }

    pub fn sum(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        self.reduce(a, axis, ReduceKind::Sum)
    }

    pub fn mean(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        self.reduce(a, axis, ReduceKind::Mean)
    }

    /// Mean over every element, as a 0-d tensor.
    pub fn mean_all(&mut self, a: Var) -> Result<Var, TensorError> {
        let n = self.value(a).len();
        let flat = self.reshape(a, &[n])?;
        self.mean(flat, 0)
    }

    /// Numerically stable softmax (max-subtracted) along `axis`.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        check_axis(axis, self.shape(a).len())?;
        let out = softmax_forward(self.arr(a), axis);
        let rg = self.rg(a);
        self.push_checked("softmax", out, Op::Softmax(a, axis), rg)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        let out = self.arr(a).mapv(|v| v.max(0.0));
        let rg = self.rg(a);
        Ok(self.push(out, Op::Relu(a), rg))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var, TensorError> {
        let out = self.arr(a).mapv(f64::abs);
        let rg = self.rg(a);
        Ok(self.push(out, Op::Abs(a), rg))
    }

    /// Inverted dropout with a mask drawn from `rng`. A `rate` of zero
    /// returns `a` unchanged and draws nothing.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: f64,
        rng: &mut R,
    ) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::DropoutRate { rate });
        }
        if rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask = self
            .arr(a)
            .mapv(|_| if rng.random::<f64>() < rate { 0.0 } else { keep });
        let out = self.arr(a) * &mask;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Dropout(a, mask), rg))
    }

    /// `a[.., start..end, ..]` along `axis`.
    pub fn slice(
        &mut self,
        a: Var,
        axis: usize,
        start: usize,
        end: usize,
    ) -> Result<Var, TensorError> {
        let shape = self.shape(a);
        check_axis(axis, shape.len())?;
        if start > end || end > shape[axis] {
            return Err(TensorError::SliceRange {
                start,
                end,
                dim: shape[axis],
            });
        }
        let out = self
            .arr(a)
            .slice_axis(Axis(axis), Slice::from(start..end))
            .as_standard_layout()
            .into_owned();
        let rg = self.rg(a);
        Ok(self.push(out, Op::Slice(a, axis, start), rg))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = parts.first().ok_or(TensorError::EmptyConcat)?;
        let ndim = self.shape(*first).len();
        check_axis(axis, ndim)?;
        let views: Vec<_> = parts.iter().map(|&p| self.arr(p).view()).collect();
        let out = concatenate(Axis(axis), &views).map_err(|_| TensorError::Concat {
            shapes: parts.iter().map(|&p| self.shape(p).to_vec()).collect(),
            axis,
        })?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), rg))
    }

    /// Selects rows (axis 0) by index; repeated indices are allowed.
    pub fn gather(&mut self, a: Var, indices: &[usize]) -> Result<Var, TensorError> {
        let rows = self.shape(a).first().copied().unwrap_or(0);
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(TensorError::Index {
                index: bad,
                len: rows,
            });
        }
        let out = self.arr(a).select(Axis(0), indices);
        let rg = self.rg(a);
        Ok(self.push(out, Op::Gather(a, indices.to_vec()), rg))
    }

    /// Back-propagates from a scalar `loss`, consuming the graph.
    pub fn backward(self, loss: Var) -> Result<Gradients, TensorError> {
        let loss_shape = self.shape(loss).to_vec();
        if loss_shape.iter().product::<usize>() != 1 {
            return Err(TensorError::NotScalar { shape: loss_shape });
        }
        let mut grads: Vec<Option<ArrayD<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(ArrayD::ones(IxDyn(&loss_shape)));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            for (input, gi) in self.input_grads(node, &g) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                check_finite("backward", &gi)?;
                match &mut grads[input.0] {
                    Some(acc) => *acc += &gi,
                    slot @ None => *slot = Some(gi),
                }
            }
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| match (&node.op, node.requires_grad) {
                (Op::Leaf, true) => g.map(Tensor::from_array),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn input_grads(&self, node: &Node, g: &ArrayD<f64>) -> Vec<(Var, ArrayD<f64>)> {
        match &node.op {
            Op::Leaf => Vec::new(),
            &Op::Elementwise(kind, a, b) => {
                let (x, y) = (self.arr(a), self.arr(b));
                let (ga, gb) = match kind {
                    ElementwiseKind::Add => (g.clone(), g.clone()),
                    ElementwiseKind::Sub => (g.clone(), -g),
                    ElementwiseKind::Mul => (g * y, g * x),
                    ElementwiseKind::Div => {
                        let ga = g / y;
                        let gb = -(&ga * node.value.array()) ;
                        (ga, gb)
                    }
                };
                vec![(a, reduce_to(ga, x.shape())), (b, reduce_to(gb, y.shape()))]
            }
            &Op::Scale(a, factor) => vec![(a, g * factor)],
            &Op::MatMul(a, b) => {
                let g2 = as2(g);
                let ga = g2.dot(&as2(self.arr(b)).t()).into_dyn();
                let gb = as2(self.arr(a)).t().dot(&g2).into_dyn();
                vec![(a, ga), (b, gb)]
            }
            &Op::BatchMatMul(a, b) => {
                let g3 = as3(g);
                let bt = as3(self.arr(b)).permuted_axes([0, 2, 1]);
                let at = as3(self.arr(a)).permuted_axes([0, 2, 1]);
                let ga = bmm(g3, bt).into_dyn();
                let gb = bmm(at, g3).into_dyn();
                vec![(a, ga), (b, gb)]
            }
            Op::Permute(a, axes) => {
                let mut inverse = vec![0; axes.len()];
                for (i, &ax) in axes.iter().enumerate() {
                    inverse[ax] = i;
                }
                let ga = g
                    .view()
                    .permuted_axes(IxDyn(&inverse))
                    .as_standard_layout()
                    .into_owned();
                vec![(*a, ga)]
            }
            &Op::Reshape(a) => {
                let ga = g
                    .as_standard_layout()
                    .into_owned()
                    .into_shape_with_order(IxDyn(self.shape(a)))
                    .expect("element count preserved by reshape");
                vec![(a, ga)]
            }
            Op::Reduce(a, axis, kind, argmax) => {
                let (a, axis) = (*a, *axis);
                let in_shape = self.shape(a);
                let ga = match kind {
                    ReduceKind::Sum => g
                        .view()
                        .insert_axis(Axis(axis))
                        .broadcast(IxDyn(in_shape))
                        .expect("reduced axis re-expands")
                        .to_owned(),
                    ReduceKind::Mean => {
                        let n = in_shape[axis] as f64;
                        g.view()
                            .insert_axis(Axis(axis))
                            .broadcast(IxDyn(in_shape))
                            .expect("reduced axis re-expands")
                            .mapv(|v| v / n)
                    }
                    ReduceKind::Max => {
                        let mut ga = ArrayD::zeros(IxDyn(in_shape));
                        for ((mut lane, &idx), &gv) in ga
                            .lanes_mut(Axis(axis))
                            .into_iter()
                            .zip(argmax)
                            .zip(g.iter())
                        {
                            lane[idx] = gv;
                        }
                        ga
                    }
                };
                vec![(a, ga)]
            }
            &Op::Softmax(a, axis) => {
                let y = node.value.array();
                let gy = g * y;
                let dot = gy.sum_axis(Axis(axis)).insert_axis(Axis(axis));
                let ga = &gy - &(y * &dot);
                vec![(a, ga)]
            }
            &Op::Relu(a) => {
                let mut ga = g.clone();
                Zip::from(&mut ga)
                    .and(self.arr(a))
                    .for_each(|gv, &x| if x <= 0.0 { *gv = 0.0 });
                vec![(a, ga)]
            }
            &Op::Abs(a) => {
                let mut ga = g.clone();
                Zip::from(&mut ga).and(self.arr(a)).for_each(|gv, &x| {
                    *gv *= if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                vec![(a, ga)]
            }
            Op::Dropout(a, mask) => vec![(*a, g * mask)],
            &Op::Slice(a, axis, start) => {
                let mut ga = ArrayD::zeros(IxDyn(self.shape(a)));
                let end = start + g.shape()[axis];
                ga.slice_axis_mut(Axis(axis), Slice::from(start..end))
                    .assign(g);
                vec![(a, ga)]
            }
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let n = self.shape(p)[*axis];
                        let gp = g
                            .slice_axis(Axis(*axis), Slice::from(offset..offset + n))
                            .as_standard_layout()
                            .into_owned();
                        offset += n;
                        (p, gp)
                    })
                    .collect()
            }
            Op::Gather(a, indices) => {
                let mut ga = ArrayD::zeros(IxDyn(self.shape(*a)));
                for (row, &i) in indices.iter().enumerate() {
                    let mut dst = ga.index_axis_mut(Axis(0), i);
                    dst += &g.index_axis(Axis(0), row);
                }
                vec![(*a, ga)]
            }
        }
    }
}

/// Plain 2-D product outside any graph.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
        return Err(TensorError::MatMul {
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        });
    }
    let out: Array2<f64> = as2(a.array()).dot(&as2(b.array()));
    Ok(Tensor::from_array(out.into_dyn()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let mut g = Graph::new();
        let eye = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let m = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let out = g.matmul(eye, m).unwrap();
        assert_eq!(g.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);

        let row = g.constant(t(&[1, 2], &[1.0, 2.0]));
        let col = g.constant(t(&[2, 1], &[3.0, 4.0]));
        let out = g.matmul(row, col).unwrap();
        assert_eq!(g.value(out).data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, TensorError::MatMul { .. }));
    }

    #[test]
    fn softmax_examples() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![0.0, 0.0, 0.0]));
        let y = g.softmax(x, 0).unwrap();
        for &v in g.value(y).data() {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
        let x = g.constant(Tensor::vector(vec![1000.0, 0.0]));
        let y = g.softmax(x, 0).unwrap();
        assert_eq!(g.value(y).data()[0], 1.0);
        assert!(g.value(y).data()[1] < 1e-300);
    }

    #[test]
    fn broadcast_mul_and_add_identity() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = g.constant(t(&[2, 1], &[1.0, 10.0]));
        let out = g.mul(a, b).unwrap();
        assert_eq!(g.value(out).shape(), &[2, 2]);
        assert_eq!(g.value(out).data(), &[1.0, 2.0, 10.0, 20.0]);

        let zero = g.constant(Tensor::zeros(&[2]));
        let same = g.add(a, zero).unwrap();
        assert_eq!(g.value(same).data(), &[1.0, 2.0]);

        let bad = g.constant(Tensor::zeros(&[3]));
        assert!(matches!(g.add(a, bad), Err(TensorError::Broadcast { .. })));
    }

    #[test]
    fn reduce_examples() {
        let mut g = Graph::new();
        let x = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let s = g.sum(x, 0).unwrap();
        assert_eq!(g.value(s).data(), &[4.0, 6.0]);
        let c = g.constant(Tensor::full(&[3, 4], 2.5));
        let m = g.mean(c, 1).unwrap();
        assert_eq!(g.value(m).data(), &[2.5, 2.5, 2.5]);
        assert!(matches!(g.sum(x, 2), Err(TensorError::Axis { .. })));
    }

    #[test]
    fn max_routes_gradient_to_first_tie() {
        let mut g = Graph::new();
        let x = g.param(t(&[2, 3], &[1.0, 5.0, 5.0, 7.0, 2.0, 7.0]));
        let m = g.reduce(x, 1, ReduceKind::Max).unwrap();
        assert_eq!(g.value(m).data(), &[5.0, 7.0]);
        let loss = g.sum(m, 0).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(
            grads.get(x).unwrap().data(),
            &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn backward_simple_losses() {
        let w0 = Tensor::vector(vec![0.5, -1.5, 2.0]);
        let mut g = Graph::new();
        let w = g.param(w0.clone());
        let loss = g.sum(w, 0).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[1.0, 1.0, 1.0]);

        let mut g = Graph::new();
        let w = g.param(w0.clone());
        let sq = g.mul(w, w).unwrap();
        let loss = g.sum(sq, 0).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[1.0, -3.0, 4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let w = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(
            g.backward(w),
            Err(TensorError::NotScalar { .. })
        ));
    }

    #[test]
    fn non_finite_results_are_errors() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![1.0]));
        let z = g.constant(Tensor::vector(vec![0.0]));
        assert!(matches!(g.div(a, z), Err(TensorError::NonFinite { .. })));
    }

    #[test]
    fn dropout_masks_and_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = Graph::new();
        let x = g.param(Tensor::full(&[1000], 1.0));
        let y = g.dropout(x, 0.25, &mut rng).unwrap();
        let vals = g.value(y).data();
        assert!(vals.iter().all(|&v| v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-15));
        let dropped = vals.iter().filter(|&&v| v == 0.0).count();
        assert!((150..350).contains(&dropped), "{dropped}");
        let same = g.dropout(x, 0.0, &mut rng).unwrap();
        assert_eq!(same, x);
    }

    #[test]
    fn slice_concat_gather_permute_shapes() {
        let mut g = Graph::new();
        let x = g.constant(t(&[2, 3], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]));
        let s = g.slice(x, 1, 1, 3).unwrap();
        assert_eq!(g.value(s).data(), &[1.0, 2.0, 4.0, 5.0]);
        let c = g.concat(&[x, s], 1).unwrap();
        assert_eq!(g.value(c).shape(), &[2, 5]);
        let r = g.gather(x, &[1, 1, 0]).unwrap();
        assert_eq!(g.value(r).data(), &[3.0, 4.0, 5.0, 3.0, 4.0, 5.0, 0.0, 1.0, 2.0]);
        let p = g.transpose(x).unwrap();
        assert_eq!(g.value(p).data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
        assert!(g.permute(x, &[0, 0]).is_err());
        assert!(g.gather(x, &[2]).is_err());
    }
}
