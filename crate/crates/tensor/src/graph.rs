use std::collections::HashMap;
use std::rc::Rc;

use ndarray::{s, Array2, ArrayView2, Axis, Zip};

use crate::params::{ParamId, ParamStore};
use crate::Scalar;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy)]
enum Unary<T> {
    Neg,
    Exp,
    Log,
    Tanh,
    Sin,
    Cos,
    Sigmoid,
    Relu,
    LeakyRelu(T),
    Abs,
    Square,
    Sqrt,
    Scale(T),
    AddScalar(T),
    Clamp(T, T),
}

enum Op<T> {
    Constant,
    Param,
    Binary(Binary, Var, Var),
    Unary(Unary<T>, Var),
    MatMul(Var, Var),
    Transpose(Var),
    SoftmaxRows(Var),
    SumAll(Var),
    SumRows(Var),
    SumCols(Var),
    Gather(Var, Rc<[Option<usize>]>),
    Reshape(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
}

struct Node<T> {
    value: Array2<T>,
    op: Op<T>,
    tracked: bool,
}

/// Append-only computation tape.
///
/// Shape mismatches inside graph operations are programming errors and
/// panic; validate external inputs before they reach the graph.
pub struct Graph<'s, T: Scalar> {
    store: Option<&'s ParamStore<T>>,
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
}

impl<'s, T: Scalar> Graph<'s, T> {
    pub fn new(store: &'s ParamStore<T>) -> Self {
        Self {
            store: Some(store),
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    /// A graph with no parameter store, for pure tensor computations.
    pub fn detached() -> Self {
        Self {
            store: None,
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<T>, op: Op<T>, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn rows(&self, v: Var) -> usize {
        self.shape(v).0
    }

    pub fn cols(&self, v: Var) -> usize {
        self.shape(v).1
    }

    /// Scalar value of a 1x1 node.
    pub fn item(&self, v: Var) -> T {
        let val = self.value(v);
        assert_eq!(val.dim(), (1, 1), "item() on non-scalar node");
        val[[0, 0]]
    }

    pub fn constant(&mut self, value: Array2<T>) -> Var {
        let value = standard(value);
        self.push(value, Op::Constant, false)
    }

    pub fn scalar(&mut self, x: T) -> Var {
        self.constant(Array2::from_elem((1, 1), x))
    }

    /// Copies the value of `v` into an untracked constant.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.push(value, Op::Constant, false)
    }

    /// Loads a parameter from the store. Each parameter gets one node per graph.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let store = self.store.expect("graph has no parameter store");
        let value = store.value(id).clone();
        let v = self.push(value, Op::Param, true);
        self.params.insert(id, v);
        v
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let out = broadcast_shape(sa, sb).unwrap_or_else(|| {
            panic!("cannot broadcast {kind:?} operands {sa:?} and {sb:?}")
        });
        let av = self.value(a).broadcast(out).unwrap();
        let bv = self.value(b).broadcast(out).unwrap();
        let value = match kind {
            Binary::Add => Zip::from(&av).and(&bv).map_collect(|&x, &y| x + y),
            Binary::Sub => Zip::from(&av).and(&bv).map_collect(|&x, &y| x - y),
            Binary::Mul => Zip::from(&av).and(&bv).map_collect(|&x, &y| x * y),
            Binary::Div => Zip::from(&av).and(&bv).map_collect(|&x, &y| x / y),
        };
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(value, Op::Binary(kind, a, b), tracked)
    }

    /// Elementwise sum with row/column/scalar broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Div, a, b)
    }

    fn unary(&mut self, kind: Unary<T>, a: Var) -> Var {
        let x = self.value(a);
        let value = match kind {
            Unary::Neg => x.mapv(|v| -v),
            Unary::Exp => x.mapv(T::exp),
            Unary::Log => x.mapv(T::ln),
            Unary::Tanh => x.mapv(T::tanh),
            Unary::Sin => x.mapv(T::sin),
            Unary::Cos => x.mapv(T::cos),
            Unary::Sigmoid => x.mapv(|v| T::one() / (T::one() + (-v).exp())),
            Unary::Relu => x.mapv(|v| if v > T::zero() { v } else { T::zero() }),
            Unary::LeakyRelu(slope) => x.mapv(|v| if v > T::zero() { v } else { v * slope }),
            Unary::Abs => x.mapv(T::abs),
            Unary::Square => x.mapv(|v| v * v),
            Unary::Sqrt => x.mapv(T::sqrt),
            Unary::Scale(c) => x.mapv(|v| v * c),
            Unary::AddScalar(c) => x.mapv(|v| v + c),
            Unary::Clamp(lo, hi) => x.mapv(|v| v.max(lo).min(hi)),
        };
        let tracked = self.tracked(a);
        self.push(value, Op::Unary(kind, a), tracked)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(Unary::Neg, a)
    }
    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a)
    }
    pub fn log(&mut self, a: Var) -> Var {
        self.unary(Unary::Log, a)
    }
    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }
    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(Unary::Sin, a)
    }
    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(Unary::Cos, a)
    }
    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Unary::Relu, a)
    }
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(Unary::LeakyRelu(T::lit(slope)), a)
    }
    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(Unary::Abs, a)
    }
    pub fn square(&mut self, a: Var) -> Var {
        self.unary(Unary::Square, a)
    }
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(Unary::Sqrt, a)
    }
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(Unary::Scale(T::lit(c)), a)
    }
    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(Unary::AddScalar(T::lit(c)), a)
    }
    /// Clamp into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(Unary::Clamp(T::lit(lo), T::lit(hi)), a)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert_eq!(sa.1, sb.0, "matmul shape mismatch {sa:?} x {sb:?}");
        let value = self.value(a).dot(self.value(b));
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(value, Op::MatMul(a, b), tracked)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = standard(self.value(a).t().to_owned());
        let tracked = self.tracked(a);
        self.push(value, Op::Transpose(a), tracked)
    }

    /// Row-wise softmax. `-inf` entries get probability zero; a row that is
    /// entirely `-inf` yields all zeros.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.rows_mut() {
            let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
            if max == T::neg_infinity() {
                row.fill(T::zero());
                continue;
            }
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v = *v / total;
            }
        }
        let tracked = self.tracked(a);
        self.push(value, Op::SoftmaxRows(a), tracked)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).iter().fold(T::zero(), |acc, &v| acc + v);
        let tracked = self.tracked(a);
        self.push(Array2::from_elem((1, 1), total), Op::SumAll(a), tracked)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1);
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// Sum over rows: `n x m -> 1 x m`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        let tracked = self.tracked(a);
        self.push(value, Op::SumRows(a), tracked)
    }

    /// Sum over columns: `n x m -> n x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let tracked = self.tracked(a);
        self.push(value, Op::SumCols(a), tracked)
    }

    /// Builds a matrix whose row `i` is row `index[i]` of `a`, or zeros for `None`.
    pub fn gather_rows(&mut self, a: Var, index: Rc<[Option<usize>]>) -> Var {
        let src = self.value(a);
        let (n, m) = src.dim();
        let mut value = Array2::zeros((index.len(), m));
        for (i, idx) in index.iter().enumerate() {
            if let Some(j) = *idx {
                assert!(j < n, "gather index {j} out of range for {n} rows");
                value.row_mut(i).assign(&src.row(j));
            }
        }
        let tracked = self.tracked(a);
        self.push(value, Op::Gather(a, index), tracked)
    }

    /// Gather with plain indices.
    pub fn select_rows(&mut self, a: Var, index: &[usize]) -> Var {
        let index: Rc<[Option<usize>]> = index.iter().map(|&i| Some(i)).collect();
        self.gather_rows(a, index)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let index: Vec<usize> = (start..start + len).collect();
        self.select_rows(a, &index)
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let src = self.value(a);
        assert_eq!(src.len(), rows * cols, "reshape size mismatch");
        let data: Vec<T> = src.iter().copied().collect();
        let value = Array2::from_shape_vec((rows, cols), data).unwrap();
        let tracked = self.tracked(a);
        self.push(value, Op::Reshape(a), tracked)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<T>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat_cols row mismatch");
        let tracked = parts.iter().any(|&p| self.tracked(p));
        self.push(standard(value), Op::ConcatCols(parts.to_vec()), tracked)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<T>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("concat_rows col mismatch");
        let tracked = parts.iter().any(|&p| self.tracked(p));
        self.push(standard(value), Op::ConcatRows(parts.to_vec()), tracked)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(s![.., start..start + len]).to_owned();
        let tracked = self.tracked(a);
        self.push(value, Op::SliceCols(a, start), tracked)
    }

    /// Reverse-mode sweep from a 1x1 node.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.shape(loss), (1, 1), "backward from non-scalar node");
        let mut grads: Vec<Option<Array2<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.tracked {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Gradients {
            grads,
            params: self.params.clone(),
        }
    }

    fn propagate(&self, i: usize, g: &Array2<T>, grads: &mut [Option<Array2<T>>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        match &node.op {
            Op::Constant | Op::Param => {}
            Op::Binary(kind, a, b) => {
                let (a, b) = (*a, *b);
                let av = self.value(a).broadcast(y.dim()).unwrap();
                let bv = self.value(b).broadcast(y.dim()).unwrap();
                if self.tracked(a) {
                    let ga = match kind {
                        Binary::Add | Binary::Sub => g.clone(),
                        Binary::Mul => Zip::from(g).and(&bv).map_collect(|&g, &b| g * b),
                        Binary::Div => Zip::from(g).and(&bv).map_collect(|&g, &b| g / b),
                    };
                    self.accumulate(grads, a, reduce_to(ga, self.shape(a)));
                }
                if self.tracked(b) {
                    let gb = match kind {
                        Binary::Add => g.clone(),
                        Binary::Sub => g.mapv(|v| -v),
                        Binary::Mul => Zip::from(g).and(&av).map_collect(|&g, &a| g * a),
                        Binary::Div => Zip::from(g)
                            .and(y)
                            .and(&bv)
                            .map_collect(|&g, &y, &b| -g * y / b),
                    };
                    self.accumulate(grads, b, reduce_to(gb, self.shape(b)));
                }
            }
            Op::Unary(kind, a) => {
                let a = *a;
                if !self.tracked(a) {
                    return;
                }
                let x = self.value(a);
                let one = T::one();
                let two = T::lit(2.0);
                let ga = match *kind {
                    Unary::Neg => g.mapv(|v| -v),
                    Unary::Exp => g * y,
                    Unary::Log => g / x,
                    Unary::Tanh => Zip::from(g).and(y).map_collect(|&g, &y| g * (one - y * y)),
                    Unary::Sin => Zip::from(g).and(x).map_collect(|&g, &x| g * x.cos()),
                    Unary::Cos => Zip::from(g).and(x).map_collect(|&g, &x| -(g * x.sin())),
                    Unary::Sigmoid => Zip::from(g).and(y).map_collect(|&g, &y| g * y * (one - y)),
                    Unary::Relu => Zip::from(g)
                        .and(x)
                        .map_collect(|&g, &x| if x > T::zero() { g } else { T::zero() }),
                    Unary::LeakyRelu(slope) => Zip::from(g)
                        .and(x)
                        .map_collect(|&g, &x| if x > T::zero() { g } else { g * slope }),
                    Unary::Abs => Zip::from(g).and(x).map_collect(|&g, &x| {
                        if x > T::zero() {
                            g
                        } else if x < T::zero() {
                            -g
                        } else {
                            T::zero()
                        }
                    }),
                    Unary::Square => Zip::from(g).and(x).map_collect(|&g, &x| two * x * g),
                    Unary::Sqrt => Zip::from(g).and(y).map_collect(|&g, &y| g / (two * y)),
                    Unary::Scale(c) => g.mapv(|v| v * c),
                    Unary::AddScalar(_) => g.clone(),
                    Unary::Clamp(lo, hi) => Zip::from(g).and(x).map_collect(|&g, &x| {
                        if x >= lo && x <= hi {
                            g
                        } else {
                            T::zero()
                        }
                    }),
                };
                self.accumulate(grads, a, ga);
            }
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                if self.tracked(a) {
                    let ga = g.dot(&self.value(b).t());
                    self.accumulate(grads, a, ga);
                }
                if self.tracked(b) {
                    let gb = self.value(a).t().dot(g);
                    self.accumulate(grads, b, gb);
                }
            }
            Op::Transpose(a) => {
                self.accumulate(grads, *a, standard(g.t().to_owned()));
            }
            Op::SoftmaxRows(a) => {
                let mut ga = Array2::zeros(y.dim());
                Zip::from(ga.rows_mut())
                    .and(g.rows())
                    .and(y.rows())
                    .for_each(|mut out, g, y| {
                        let dot = g.iter().zip(y.iter()).fold(T::zero(), |acc, (&g, &y)| acc + g * y);
                        Zip::from(&mut out).and(&g).and(&y).for_each(|o, &g, &y| *o = y * (g - dot));
                    });
                self.accumulate(grads, *a, ga);
            }
            Op::SumAll(a) => {
                let ga = Array2::from_elem(self.shape(*a), g[[0, 0]]);
                self.accumulate(grads, *a, ga);
            }
            Op::SumRows(a) => {
                let ga = g.broadcast(self.shape(*a)).unwrap().to_owned();
                self.accumulate(grads, *a, ga);
            }
            Op::SumCols(a) => {
                let ga = g.broadcast(self.shape(*a)).unwrap().to_owned();
                self.accumulate(grads, *a, ga);
            }
            Op::Gather(a, index) => {
                let mut ga = Array2::zeros(self.shape(*a));
                for (i, idx) in index.iter().enumerate() {
                    if let Some(j) = *idx {
                        let mut dst = ga.row_mut(j);
                        dst += &g.row(i);
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Reshape(a) => {
                let (r, c) = self.shape(*a);
                let data: Vec<T> = g.iter().copied().collect();
                self.accumulate(grads, *a, Array2::from_shape_vec((r, c), data).unwrap());
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.cols(p);
                    if self.tracked(p) {
                        let gp = g.slice(s![.., offset..offset + w]).to_owned();
                        self.accumulate(grads, p, gp);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let h = self.rows(p);
                    if self.tracked(p) {
                        let gp = g.slice(s![offset..offset + h, ..]).to_owned();
                        self.accumulate(grads, p, gp);
                    }
                    offset += h;
                }
            }
            Op::SliceCols(a, start) => {
                let mut ga = Array2::zeros(self.shape(*a));
                ga.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                self.accumulate(grads, *a, ga);
            }
        }
    }

    fn accumulate(&self, grads: &mut [Option<Array2<T>>], v: Var, g: Array2<T>) {
        if !self.tracked(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => *existing += &g,
            slot => *slot = Some(g),
        }
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Array2<T>>>,
    params: HashMap<ParamId, Var>,
}

impl<T: Scalar> Gradients<T> {
    pub fn wrt(&self, v: Var) -> Option<&Array2<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn param(&self, id: ParamId) -> Option<&Array2<T>> {
        self.params.get(&id).and_then(|&v| self.wrt(v))
    }

    /// Parameter gradients ordered by parameter id.
    pub fn into_param_grads(mut self) -> Vec<(ParamId, Array2<T>)> {
        let mut out: Vec<(ParamId, Array2<T>)> = self
            .params
            .iter()
            .filter_map(|(&id, &v)| self.grads.get_mut(v.0).and_then(|g| g.take()).map(|g| (id, g)))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }
}

fn standard<T: Scalar>(a: Array2<T>) -> Array2<T> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> Option<(usize, usize)> {
    fn dim(x: usize, y: usize) -> Option<usize> {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    }
    Some((dim(a.0, b.0)?, dim(a.1, b.1)?))
}

fn reduce_to<T: Scalar>(g: Array2<T>, shape: (usize, usize)) -> Array2<T> {
    let mut g = g;
    if shape.0 == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn numeric_grad(f: impl Fn(&Array2<f64>) -> f64, x: &Array2<f64>) -> Array2<f64> {
        let h = 1e-6;
        let mut out = Array2::zeros(x.dim());
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let mut xp = x.clone();
            xp[[r, c]] += h;
            let mut xm = x.clone();
            xm[[r, c]] -= h;
            out[[r, c]] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        out
    }

    fn check(build: impl Fn(&mut Graph<f64>, Var) -> Var, x: Array2<f64>) {
        let mut store = ParamStore::new();
        let id = store.insert("x", x.clone());
        let mut g = Graph::new(&store);
        let xv = g.param(id);
        let y = build(&mut g, xv);
        let grads = g.backward(y);
        let analytic = grads.param(id).unwrap().clone();
        let numeric = numeric_grad(
            |x| {
                let mut g = Graph::detached();
                let xv = g.constant(x.clone());
                let y = build(&mut g, xv);
                g.item(y)
            },
            &x,
        );
        for (a, n) in analytic.iter().zip(numeric.iter()) {
            assert!((a - n).abs() <= 1e-6 * (1.0 + n.abs()), "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn elementwise_gradients() {
        let x = array![[0.3, -0.7, 1.2], [0.5, 0.9, -1.1]];
        check(|g, x| { let t = g.tanh(x); g.sum(t) }, x.clone());
        check(|g, x| { let t = g.sigmoid(x); let s = g.square(t); g.sum(s) }, x.clone());
        check(|g, x| { let t = g.exp(x); g.mean(t) }, x.clone());
        check(|g, x| { let t = g.leaky_relu(x, 0.1); let s = g.mul(t, x); g.sum(s) }, x.clone());
        check(|g, x| { let t = g.abs(x); let l = g.add_scalar(t, 1.0); let l = g.log(l); g.sum(l) }, x.clone());
        check(|g, x| { let t = g.square(x); let t = g.add_scalar(t, 0.5); let t = g.sqrt(t); g.sum(t) }, x.clone());
        check(|g, x| { let s = g.sin(x); let c = g.cos(x); let t = g.mul(s, x); let t = g.add(t, c); g.sum(t) }, x);
    }

    #[test]
    fn broadcast_and_matmul_gradients() {
        let x = array![[0.3, -0.7, 1.2], [0.5, 0.9, -1.1]];
        check(
            |g, x| {
                let row = g.slice_rows(x, 0, 1);
                let col = g.slice_cols(x, 1, 1);
                let a = g.add(x, row);
                let b = g.mul(a, col);
                let two = g_const(g, 2.0);
                let c = g.div(b, two);
                let t = g.transpose(x);
                let m = g.matmul(c, t);
                let s = g.softmax_rows(m);
                let w = g.sum_rows(s);
                let w = g.square(w);
                g.sum(w)
            },
            x,
        );
    }

    fn g_const(g: &mut Graph<f64>, v: f64) -> Var {
        g.scalar(v)
    }

    #[test]
    fn structural_gradients() {
        let x = array![[0.3, -0.7], [0.5, 0.9], [1.5, -0.2]];
        check(
            |g, x| {
                let idx: Rc<[Option<usize>]> = vec![Some(2), None, Some(0), Some(2)].into();
                let a = g.gather_rows(x, idx);
                let b = g.reshape(a, 2, 4);
                let c = g.concat_cols(&[b, b]);
                let d = g.concat_rows(&[c, c]);
                let e = g.sum_cols(d);
                let e = g.tanh(e);
                let f = g.clamp(x, -0.6, 0.6);
                let f = g.sum(f);
                let e = g.sum(e);
                g.add(e, f)
            },
            x,
        );
    }

    #[test]
    fn masked_softmax_rows() {
        let mut g = Graph::<f64>::detached();
        let x = g.constant(array![[1.0, f64::NEG_INFINITY], [f64::NEG_INFINITY, f64::NEG_INFINITY]]);
        let y = g.softmax_rows(x);
        assert_eq!(g.value(y), &array![[1.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn constants_are_not_differentiated() {
        let mut store = ParamStore::new();
        let id = store.insert("w", array![[2.0f64]]);
        let mut g = Graph::new(&store);
        let w = g.param(id);
        let c = g.scalar(3.0);
        let y = g.mul(w, c);
        let grads = g.backward(y);
        assert_eq!(grads.param(id).unwrap()[[0, 0]], 3.0);
        assert!(grads.wrt(c).is_none());
    }
}
