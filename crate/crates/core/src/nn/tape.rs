//! Reverse-mode differentiation over dense matrices.
//!
//! Every node stores its forward value; `backward` walks the tape in reverse
//! and accumulates adjoints. Nodes that do not depend on a parameter carry no
//! adjoint at all, so constant inputs (edge features, targets) cost nothing
//! in the backward pass.

use std::rc::Rc;

use ndarray::{s, Array2, Axis, Zip};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Silu(Var),
    SqrtEps(Var),
    Gather(Var, Rc<Vec<usize>>),
    ScatterAdd(Var, Rc<Vec<usize>>),
    ScaleRows(Var, Rc<Vec<f64>>),
    SliceCols(Var, usize),
    ConcatCols(Var, Var),
    Tile3(Var),
    SumBlocks3(Var),
    /// Σ w·|a − target|
    WeightedL1(Var, Rc<Array2<f64>>, Rc<Array2<f64>>),
    /// Σ w·(a − target)²
    WeightedL2(Var, Rc<Array2<f64>>, Rc<Array2<f64>>),
    /// Σ w·(softplus(z) − y·z) over a column of logits
    WeightedBce(Var, Rc<Vec<f64>>, Rc<Vec<f64>>),
    /// Σ w·a
    Dot(Var, Rc<Array2<f64>>),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Leaf bound to parameter slot `slot`.
    pub fn param(&mut self, slot: usize, value: Array2<f64>) -> Var {
        self.push(value, Op::Param(slot), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMul(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Add(a, b), ng)
    }

    /// `a + row` with `row` (1×C) broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(v, Op::AddRow(a, row), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Mul(a, b), ng)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(silu);
        let ng = self.ng(a);
        self.push(v, Op::Silu(a), ng)
    }

    /// Elementwise sqrt(a + eps).
    pub fn sqrt_eps(&mut self, a: Var, eps: f64) -> Var {
        let v = self.value(a).mapv(|x| (x + eps).sqrt());
        let ng = self.ng(a);
        self.push(v, Op::SqrtEps(a), ng)
    }

    /// Row gather: out[r] = a[idx[r]].
    pub fn gather(&mut self, a: Var, idx: Rc<Vec<usize>>) -> Var {
        let src = self.value(a);
        let mut v = Array2::zeros((idx.len(), src.ncols()));
        for (r, &i) in idx.iter().enumerate() {
            v.row_mut(r).assign(&src.row(i));
        }
        let ng = self.ng(a);
        self.push(v, Op::Gather(a, idx), ng)
    }

    /// Row scatter-add into `rows` output rows: out[idx[r]] += a[r].
    pub fn scatter_add(&mut self, a: Var, idx: Rc<Vec<usize>>, rows: usize) -> Var {
        let src = self.value(a);
        let mut v = Array2::zeros((rows, src.ncols()));
        for (r, &i) in idx.iter().enumerate() {
            let mut dst = v.row_mut(i);
            dst += &src.row(r);
        }
        let ng = self.ng(a);
        self.push(v, Op::ScatterAdd(a, idx), ng)
    }

    /// out[r] = a[r] · w[r].
    pub fn scale_rows(&mut self, a: Var, w: Rc<Vec<f64>>) -> Var {
        let mut v = self.value(a).clone();
        for (mut row, &wr) in v.rows_mut().into_iter().zip(w.iter()) {
            row *= wr;
        }
        let ng = self.ng(a);
        self.push(v, Op::ScaleRows(a, w), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + width]).to_owned();
        let ng = self.ng(a);
        self.push(v, Op::SliceCols(a, start), ng)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let v = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("concat_cols: row counts differ");
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::ConcatCols(a, b), ng)
    }

    /// N×C → 3N×C by stacking three copies.
    pub fn tile3(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let v = ndarray::concatenate(Axis(0), &[src.view(), src.view(), src.view()]).unwrap();
        let ng = self.ng(a);
        self.push(v, Op::Tile3(a), ng)
    }

    /// 3N×C → N×C by summing the three row blocks.
    pub fn sum_blocks3(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let n = src.nrows() / 3;
        let v = &src.slice(s![0..n, ..]) + &src.slice(s![n..2 * n, ..]) + &src.slice(s![2 * n..3 * n, ..]);
        let ng = self.ng(a);
        self.push(v, Op::SumBlocks3(a), ng)
    }

    pub fn weighted_l1(&mut self, a: Var, target: Rc<Array2<f64>>, weight: Rc<Array2<f64>>) -> Var {
        let mut total = 0.0;
        Zip::from(self.value(a))
            .and(&*target)
            .and(&*weight)
            .for_each(|&x, &t, &w| {
                total += w * (x - t).abs();
            });
        let ng = self.ng(a);
        self.push(Array2::from_elem((1, 1), total), Op::WeightedL1(a, target, weight), ng)
    }

    pub fn weighted_l2(&mut self, a: Var, target: Rc<Array2<f64>>, weight: Rc<Array2<f64>>) -> Var {
        let mut total = 0.0;
        Zip::from(self.value(a))
            .and(&*target)
            .and(&*weight)
            .for_each(|&x, &t, &w| {
                total += w * (x - t) * (x - t);
            });
        let ng = self.ng(a);
        self.push(Array2::from_elem((1, 1), total), Op::WeightedL2(a, target, weight), ng)
    }

    /// Weighted binary cross-entropy on a G×1 column of logits.
    pub fn weighted_bce(&mut self, logits: Var, labels: Rc<Vec<f64>>, weights: Rc<Vec<f64>>) -> Var {
        let z = self.value(logits);
        let total: f64 = z
            .iter()
            .zip(labels.iter())
            .zip(weights.iter())
            .map(|((&z, &y), &w)| w * (softplus(z) - y * z))
            .sum();
        let ng = self.ng(logits);
        self.push(
            Array2::from_elem((1, 1), total),
            Op::WeightedBce(logits, labels, weights),
            ng,
        )
    }

    pub fn dot(&mut self, a: Var, w: Rc<Array2<f64>>) -> Var {
        let total = (self.value(a) * &*w).sum();
        let ng = self.ng(a);
        self.push(Array2::from_elem((1, 1), total), Op::Dot(a, w), ng)
    }

    /// Adjoints of the scalar node `loss` with respect to every parameter
    /// slot below `num_params`. Unused slots get `None`.
    pub fn backward(&self, loss: Var, num_params: usize) -> Result<Vec<Option<Array2<f64>>>> {
        if loss.0 >= self.nodes.len() || self.value(loss).dim() != (1, 1) {
            return Err(Error::NoContext);
        }
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut out: Vec<Option<Array2<f64>>> = (0..num_params).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones((1, 1)));

        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for k in (0..=loss.0).rev() {
            let Some(g) = grads[k].take() else { continue };
            let node = &self.nodes[k];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(slot) => {
                    if *slot < num_params {
                        match &mut out[*slot] {
                            Some(e) => *e += &g,
                            s @ None => *s = Some(g),
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    if self.ng(*a) {
                        acc(&mut grads, *a, g.dot(&self.value(*b).t()));
                    }
                    if self.ng(*b) {
                        acc(&mut grads, *b, self.value(*a).t().dot(&g));
                    }
                }
                Op::Add(a, b) => {
                    if self.ng(*a) {
                        acc(&mut grads, *a, g.clone());
                    }
                    if self.ng(*b) {
                        acc(&mut grads, *b, g);
                    }
                }
                Op::AddRow(a, row) => {
                    if self.ng(*row) {
                        acc(&mut grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.ng(*a) {
                        acc(&mut grads, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.ng(*a) {
                        acc(&mut grads, *a, &g * self.value(*b));
                    }
                    if self.ng(*b) {
                        acc(&mut grads, *b, &g * self.value(*a));
                    }
                }
                Op::Silu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|g, &x| *g *= silu_grad(x));
                    acc(&mut grads, *a, ga);
                }
                Op::SqrtEps(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(&node.value).for_each(|g, &y| *g *= 0.5 / y);
                    acc(&mut grads, *a, ga);
                }
                Op::Gather(a, idx) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    for (r, &i) in idx.iter().enumerate() {
                        let mut dst = ga.row_mut(i);
                        dst += &g.row(r);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ScatterAdd(a, idx) => {
                    let mut ga = Array2::zeros((idx.len(), g.ncols()));
                    for (r, &i) in idx.iter().enumerate() {
                        ga.row_mut(r).assign(&g.row(i));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ScaleRows(a, w) => {
                    let mut ga = g;
                    for (mut row, &wr) in ga.rows_mut().into_iter().zip(w.iter()) {
                        row *= wr;
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SliceCols(a, start) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    ga.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).ncols();
                    if self.ng(*a) {
                        acc(&mut grads, *a, g.slice(s![.., ..ca]).to_owned());
                    }
                    if self.ng(*b) {
                        acc(&mut grads, *b, g.slice(s![.., ca..]).to_owned());
                    }
                }
                Op::Tile3(a) => {
                    let n = g.nrows() / 3;
                    let ga = &g.slice(s![0..n, ..]) + &g.slice(s![n..2 * n, ..]) + &g.slice(s![2 * n..3 * n, ..]);
                    acc(&mut grads, *a, ga);
                }
                Op::SumBlocks3(a) => {
                    let ga = ndarray::concatenate(Axis(0), &[g.view(), g.view(), g.view()]).unwrap();
                    acc(&mut grads, *a, ga);
                }
                Op::WeightedL1(a, target, weight) => {
                    let gs = g[(0, 0)];
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .and(&**target)
                        .and(&**weight)
                        .for_each(|o, &x, &t, &w| {
                            let d = x - t;
                            *o = if d > 0.0 {
                                gs * w
                            } else if d < 0.0 {
                                -gs * w
                            } else {
                                0.0
                            };
                        });
                    acc(&mut grads, *a, ga);
                }
                Op::WeightedL2(a, target, weight) => {
                    let gs = g[(0, 0)];
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .and(&**target)
                        .and(&**weight)
                        .for_each(|o, &x, &t, &w| *o = 2.0 * gs * w * (x - t));
                    acc(&mut grads, *a, ga);
                }
                Op::WeightedBce(a, labels, weights) => {
                    let gs = g[(0, 0)];
                    let z = self.value(*a);
                    let mut ga = Array2::zeros(z.dim());
                    for (r, (&zr, (&y, &w))) in z.iter().zip(labels.iter().zip(weights.iter())).enumerate() {
                        ga[(r, 0)] = gs * w * (sigmoid(zr) - y);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Dot(a, w) => {
                    let gs = g[(0, 0)];
                    acc(&mut grads, *a, w.mapv(|x| x * gs));
                }
            }
        }
        Ok(out)
    }
}

pub(crate) fn logistic(x: f64) -> f64 {
    sigmoid(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0))
    }

    /// Central-difference check of d loss / d params for a tape builder.
    fn check<F>(params: Vec<Array2<f64>>, build: F)
    where
        F: Fn(&mut Tape, &[Var]) -> Var,
    {
        let eval = |ps: &[Array2<f64>]| {
            let mut t = Tape::new();
            let vars: Vec<Var> = ps.iter().enumerate().map(|(i, p)| t.param(i, p.clone())).collect();
            let l = build(&mut t, &vars);
            (t.value(l)[(0, 0)], t, l)
        };
        let (_, tape, loss) = eval(&params);
        let grads = tape.backward(loss, params.len()).unwrap();
        let h = 1e-6;
        for (slot, p) in params.iter().enumerate() {
            let g = grads[slot].clone().unwrap_or_else(|| Array2::zeros(p.dim()));
            for idx in 0..p.len() {
                let (r, c) = (idx / p.ncols(), idx % p.ncols());
                let mut plus = params.clone();
                plus[slot][(r, c)] += h;
                let mut minus = params.clone();
                minus[slot][(r, c)] -= h;
                let fd = (eval(&plus).0 - eval(&minus).0) / (2.0 * h);
                let an = g[(r, c)];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                assert!(rel < 1e-6, "slot {slot} ({r},{c}): fd {fd} analytic {an}");
            }
        }
    }

    #[test]
    fn dense_ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = rand_mat(&mut rng, 4, 3);
        let w = rand_mat(&mut rng, 3, 5);
        let b = rand_mat(&mut rng, 1, 5);
        let probe = Rc::new(rand_mat(&mut rng, 12, 5));
        check(vec![x, w, b], move |t, v| {
            let h = t.matmul(v[0], v[1]);
            let h = t.add_row(h, v[2]);
            let h = t.silu(h);
            let sq = t.mul(h, h);
            let n = t.sqrt_eps(sq, 1e-3);
            let k = t.add(n, h);
            let tiled = t.tile3(k);
            t.dot(tiled, probe.clone())
        });
    }

    #[test]
    fn index_ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = rand_mat(&mut rng, 6, 4);
        let probe = Rc::new(rand_mat(&mut rng, 3, 6));
        let idx = Rc::new(vec![0, 2, 2, 5, 1, 3, 4, 0]);
        let dst = Rc::new(vec![0, 1, 2, 2, 1, 0, 0, 2]);
        let scale = Rc::new((0..8).map(|i| 0.3 * i as f64 - 1.0).collect::<Vec<_>>());
        check(vec![a], move |t, v| {
            let g = t.gather(v[0], idx.clone());
            let g = t.scale_rows(g, scale.clone());
            let left = t.slice_cols(g, 0, 2);
            let right = t.slice_cols(g, 2, 2);
            let m = t.mul(left, right);
            let c = t.concat_cols(m, g);
            let s = t.scatter_add(c, dst.clone(), 3);
            let three = t.tile3(s);
            let back = t.sum_blocks3(three);
            t.dot(back, probe.clone())
        });
    }

    #[test]
    fn losses_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = rand_mat(&mut rng, 5, 2);
        let target = Rc::new(rand_mat(&mut rng, 5, 2));
        let weight = Rc::new(rand_mat(&mut rng, 5, 2).mapv(f64::abs));
        let (t1, w1) = (target.clone(), weight.clone());
        check(vec![a.clone()], move |t, v| t.weighted_l1(v[0], t1.clone(), w1.clone()));
        check(vec![a.clone()], move |t, v| {
            t.weighted_l2(v[0], target.clone(), weight.clone())
        });
        let z = rand_mat(&mut rng, 4, 1).mapv(|x| 4.0 * x);
        let labels = Rc::new(vec![1.0, 0.0, 1.0, 0.0]);
        let weights = Rc::new(vec![0.5, 1.5, 2.0, 1.0]);
        check(vec![z], move |t, v| {
            t.weighted_bce(v[0], labels.clone(), weights.clone())
        });
    }

    #[test]
    fn l1_subgradient_is_bracketed_at_kink() {
        let target = Rc::new(Array2::from_elem((1, 1), 0.5));
        let weight = Rc::new(Array2::ones((1, 1)));
        let eval = |x: f64| {
            let mut t = Tape::new();
            let p = t.param(0, Array2::from_elem((1, 1), x));
            let l = t.weighted_l1(p, target.clone(), weight.clone());
            let g = t.backward(l, 1).unwrap()[0].clone().unwrap()[(0, 0)];
            (t.value(l)[(0, 0)], g)
        };
        let h = 1e-5;
        let (f0, g0) = eval(0.5);
        let right = (eval(0.5 + h).0 - f0) / h;
        let left = (f0 - eval(0.5 - h).0) / h;
        assert!(left <= g0 && g0 <= right, "{left} <= {g0} <= {right}");
        assert!((right - 1.0).abs() < 1e-6 && (left + 1.0).abs() < 1e-6);
    }

    #[test]
    fn unused_parameter_gets_no_gradient() {
        let mut t = Tape::new();
        let a = t.param(0, Array2::ones((2, 2)));
        let _b = t.param(1, Array2::ones((2, 2)));
        let l = t.dot(a, Rc::new(Array2::ones((2, 2))));
        let g = t.backward(l, 2).unwrap();
        assert!(g[0].is_some());
        assert!(g[1].is_none());
    }

    #[test]
    fn backward_needs_scalar_loss() {
        let mut t = Tape::new();
        let a = t.param(0, Array2::ones((2, 2)));
        assert!(matches!(t.backward(a, 1), Err(Error::NoContext)));
        let empty = Tape::new();
        assert!(matches!(empty.backward(Var(0), 1), Err(Error::NoContext)));
    }
}
