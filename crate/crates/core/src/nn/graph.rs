//! Reverse-mode differentiation over a per-forward tape.

use alloc::vec::Vec;

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    ScaleBy(Var, Var),
    Affine(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    HCat(Vec<Var>),
    VCat(Vec<Var>),
    Sparse { x: Var, entries: Vec<(usize, usize, f64)> },
    SegMax { x: Var, argmax: Vec<Option<usize>> },
    Transpose(Var),
    ColSlice { x: Var, start: usize },
    Softmax(Var),
    Entropy(Var),
    Sum(Var),
    Pick(Var, usize),
}

/// Records values and the operations producing them, then back-propagates
/// into per-parameter gradients.
pub struct Graph<'p> {
    params: &'p ParamStore,
    values: Vec<Tensor>,
    ops: Vec<Op>,
}

/// Gradients aligned with a [`ParamStore`]; parameters the loss does not
/// touch stay `None`.
#[derive(Debug, Clone)]
pub struct Grads(pub Vec<Option<Tensor>>);

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Grads(alloc::vec![None; store.len()])
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.0[id.0].as_ref()
    }

    pub fn accumulate(&mut self, other: &Grads) {
        for (mine, theirs) in self.0.iter_mut().zip(&other.0) {
            if let Some(t) = theirs {
                match mine {
                    Some(m) => m.add_assign(t),
                    None => *mine = Some(t.clone()),
                }
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.0.iter_mut().flatten() {
            t.scale_assign(k);
        }
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.0.iter().flatten().map(Tensor::norm_sq).sum())
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self { params, values: Vec::new(), ops: Vec::new() }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn scalar_of(&self, v: Var) -> f64 {
        self.values[v.0].item()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let t = self.params.get(id).clone();
        self.push(t, Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let t = self.value(a).matmul(self.value(b));
        self.push(t, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut t = self.value(a).clone();
        t.add_assign(self.value(b));
        self.push(t, Op::Add(a, b))
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let mut t = self.value(a).clone();
        let r = self.value(row);
        assert_eq!(r.shape(), (1, t.cols()), "add_row shape");
        for i in 0..t.rows() {
            for (x, y) in t.row_mut(i).iter_mut().zip(r.data()) {
                *x += y;
            }
        }
        self.push(t, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "mul shape");
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let t = Tensor::from_vec(x.rows(), x.cols(), data);
        self.push(t, Op::Mul(a, b))
    }

    /// `s · a` for a `1 × 1` variable `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        let k = self.value(s).item();
        let t = self.value(a).map(|x| k * x);
        self.push(t, Op::ScaleBy(a, s))
    }

    /// `k · a + c` with constants `k` and `c`.
    pub fn affine(&mut self, a: Var, k: f64, c: f64) -> Var {
        let t = self.value(a).map(|x| k * x + c);
        self.push(t, Op::Affine(a, k))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.affine(a, k, 0.0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let nb = self.scale(b, -1.0);
        self.add(a, nb)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).map(libm::tanh);
        self.push(t, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(sigmoid);
        self.push(t, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let t = self.value(a).map(libm::exp);
        self.push(t, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let t = self.value(a).map(libm::log);
        self.push(t, Op::Log(a))
    }

    /// Concatenates along columns; all parts share the row count.
    pub fn hcat(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut t = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for p in parts {
                let v = self.value(*p);
                assert_eq!(v.rows(), rows, "hcat rows");
                t.row_mut(r)[c0..c0 + v.cols()].copy_from_slice(v.row(r));
                c0 += v.cols();
            }
        }
        self.push(t, Op::HCat(parts.to_vec()))
    }

    /// Concatenates along rows; all parts share the column count.
    pub fn vcat(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        for p in parts {
            let v = self.value(*p);
            assert_eq!(v.cols(), cols, "vcat cols");
            data.extend_from_slice(v.data());
        }
        let rows = data.len() / cols.max(1);
        self.push(Tensor::from_vec(rows, cols, data), Op::VCat(parts.to_vec()))
    }

    /// `out[i] = Σ w · x[j]` over `(i, j, w)` entries: a constant sparse
    /// matrix times `x`. Covers row gathers, sums and averages.
    pub fn sparse(&mut self, x: Var, rows: usize, entries: Vec<(usize, usize, f64)>) -> Var {
        let xv = self.value(x);
        let mut t = Tensor::zeros(rows, xv.cols());
        for &(i, j, w) in &entries {
            let src = xv.row(j);
            for (o, s) in t.row_mut(i).iter_mut().zip(src) {
                *o += w * s;
            }
        }
        self.push(t, Op::Sparse { x, entries })
    }

    /// Rows of `x` selected by index.
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Var {
        let entries = idx.iter().enumerate().map(|(i, &j)| (i, j, 1.0)).collect();
        self.sparse(x, idx.len(), entries)
    }

    /// Column-wise maximum over each group of rows; empty groups give zeros.
    pub fn segment_max(&mut self, x: Var, groups: &[Vec<usize>]) -> Var {
        let xv = self.value(x);
        let cols = xv.cols();
        let mut t = Tensor::zeros(groups.len(), cols);
        let mut argmax = alloc::vec![None; groups.len() * cols];
        for (g, members) in groups.iter().enumerate() {
            for c in 0..cols {
                let mut best: Option<usize> = None;
                for &j in members {
                    if best.is_none_or(|b| xv.at(j, c) > xv.at(b, c)) {
                        best = Some(j);
                    }
                }
                if let Some(b) = best {
                    t.row_mut(g)[c] = xv.at(b, c);
                }
                argmax[g * cols + c] = best;
            }
        }
        self.push(t, Op::SegMax { x, argmax })
    }

    /// Column-wise maximum over all rows.
    pub fn max_rows(&mut self, x: Var) -> Var {
        let all: Vec<usize> = (0..self.value(x).rows()).collect();
        self.segment_max(x, &[all])
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let t = self.value(a).transpose();
        self.push(t, Op::Transpose(a))
    }

    pub fn col_slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        let mut t = Tensor::zeros(xv.rows(), len);
        for r in 0..xv.rows() {
            t.row_mut(r).copy_from_slice(&xv.row(r)[start..start + len]);
        }
        self.push(t, Op::ColSlice { x, start })
    }

    /// Softmax over all entries, restricted to `mask` (masked-out entries get
    /// probability 0). At least one entry must be allowed.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Var {
        let v = self.value(a);
        let allowed = |i: usize| mask.is_none_or(|m| m[i]);
        let max = (0..v.len()).filter(|&i| allowed(i)).map(|i| v.data()[i]).fold(f64::NEG_INFINITY, f64::max);
        assert!(max > f64::NEG_INFINITY, "softmax over an empty support");
        let mut out: Vec<f64> = (0..v.len()).map(|i| if allowed(i) { libm::exp(v.data()[i] - max) } else { 0.0 }).collect();
        let z: f64 = out.iter().sum();
        for x in &mut out {
            *x /= z;
        }
        let t = Tensor::from_vec(v.rows(), v.cols(), out);
        self.push(t, Op::Softmax(a))
    }

    /// `-Σ p log p` over the positive entries of a probability tensor.
    pub fn entropy(&mut self, p: Var) -> Var {
        let h = -self.value(p).data().iter().filter(|&&x| x > 0.0).map(|&x| x * libm::log(x)).sum::<f64>();
        self.push(Tensor::scalar(h), Op::Entropy(p))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn sum_all(&mut self, parts: &[Var]) -> Var {
        let mut acc = parts[0];
        for p in &parts[1..] {
            acc = self.add(acc, *p);
        }
        acc
    }

    /// Entry `idx` in row-major order, as a `1 × 1` value.
    pub fn pick(&mut self, a: Var, idx: usize) -> Var {
        let x = self.value(a).data()[idx];
        self.push(Tensor::scalar(x), Op::Pick(a, idx))
    }

    /// Back-propagates from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Grads {
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be a scalar");
        let mut grads: Vec<Option<Tensor>> = alloc::vec![None; self.values.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Grads::zeros_like(self.params);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let y = &self.values[i];
            match &self.ops[i] {
                Op::Leaf => {}
                Op::Param(id) => accumulate(&mut out.0[id.0], g),
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(self.value(*b));
                    let db = self.value(*a).t_matmul(&g);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::AddRow(a, r) => {
                    let mut dr = Tensor::zeros(1, g.cols());
                    for row in 0..g.rows() {
                        for (d, x) in dr.data_mut().iter_mut().zip(g.row(row)) {
                            *d += x;
                        }
                    }
                    acc(&mut grads, *r, dr);
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (x, z) = (self.value(*a), self.value(*b));
                    let da = zip(&g, z, |d, q| d * q);
                    let db = zip(&g, x, |d, p| d * p);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::ScaleBy(a, s) => {
                    let k = self.value(*s).item();
                    let ds: f64 = g.data().iter().zip(self.value(*a).data()).map(|(d, x)| d * x).sum();
                    acc(&mut grads, *s, Tensor::scalar(ds));
                    acc(&mut grads, *a, g.map(|d| d * k));
                }
                Op::Affine(a, k) => acc(&mut grads, *a, g.map(|d| d * k)),
                Op::Tanh(a) => acc(&mut grads, *a, zip(&g, y, |d, t| d * (1.0 - t * t))),
                Op::Sigmoid(a) => acc(&mut grads, *a, zip(&g, y, |d, s| d * s * (1.0 - s))),
                Op::Exp(a) => acc(&mut grads, *a, zip(&g, y, |d, e| d * e)),
                Op::Log(a) => acc(&mut grads, *a, zip(&g, self.value(*a), |d, x| d / x)),
                Op::HCat(parts) => {
                    let mut c0 = 0;
                    for p in parts {
                        let cols = self.value(*p).cols();
                        let mut dp = Tensor::zeros(g.rows(), cols);
                        for r in 0..g.rows() {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[c0..c0 + cols]);
                        }
                        c0 += cols;
                        acc(&mut grads, *p, dp);
                    }
                }
                Op::VCat(parts) => {
                    let mut r0 = 0;
                    for p in parts {
                        let (rows, cols) = self.value(*p).shape();
                        let dp = Tensor::from_vec(rows, cols, g.data()[r0 * cols..(r0 + rows) * cols].to_vec());
                        r0 += rows;
                        acc(&mut grads, *p, dp);
                    }
                }
                Op::Sparse { x, entries } => {
                    let (rows, cols) = self.value(*x).shape();
                    let mut dx = Tensor::zeros(rows, cols);
                    for &(i, j, w) in entries {
                        let src = g.row(i);
                        for (o, s) in dx.row_mut(j).iter_mut().zip(src) {
                            *o += w * s;
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::SegMax { x, argmax } => {
                    let (rows, cols) = self.value(*x).shape();
                    let mut dx = Tensor::zeros(rows, cols);
                    for (k, best) in argmax.iter().enumerate() {
                        if let Some(j) = best {
                            let c = k % cols;
                            dx.row_mut(*j)[c] += g.data()[k];
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::ColSlice { x, start } => {
                    let (rows, cols) = self.value(*x).shape();
                    let mut dx = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        dx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::Softmax(a) => {
                    let dot: f64 = g.data().iter().zip(y.data()).map(|(d, p)| d * p).sum();
                    acc(&mut grads, *a, zip(&g, y, |d, p| p * (d - dot)));
                }
                Op::Entropy(p) => {
                    let d = g.item();
                    let dp = self.value(*p).map(|x| if x > 0.0 { -d * (libm::log(x) + 1.0) } else { 0.0 });
                    acc(&mut grads, *p, dp);
                }
                Op::Sum(a) => {
                    let d = g.item();
                    let (rows, cols) = self.value(*a).shape();
                    acc(&mut grads, *a, Tensor::from_vec(rows, cols, alloc::vec![d; rows * cols]));
                }
                Op::Pick(a, idx) => {
                    let (rows, cols) = self.value(*a).shape();
                    let mut da = Tensor::zeros(rows, cols);
                    da.data_mut()[*idx] = g.item();
                    acc(&mut grads, *a, da);
                }
            }
        }
        out
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data)
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(t) => t.add_assign(&g),
        None => *slot = Some(g),
    }
}

fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    accumulate(&mut grads[v.0], g);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::ParamStore;

    /// Central differences of `f` against the tape gradient of every entry
    /// of every parameter.
    fn check(store: &mut ParamStore, f: impl Fn(&mut Graph) -> Var) {
        let analytic = {
            let mut g = Graph::new(store);
            let loss = f(&mut g);
            g.backward(loss)
        };
        let h = 1e-6;
        for id in store.ids().collect::<Vec<_>>() {
            for k in 0..store.get(id).len() {
                let orig = store.get(id).data()[k];
                store.get_mut(id).data_mut()[k] = orig + h;
                let up = {
                    let mut g = Graph::new(store);
                    let l = f(&mut g);
                    g.scalar_of(l)
                };
                store.get_mut(id).data_mut()[k] = orig - h;
                let down = {
                    let mut g = Graph::new(store);
                    let l = f(&mut g);
                    g.scalar_of(l)
                };
                store.get_mut(id).data_mut()[k] = orig;
                let numeric = (up - down) / (2.0 * h);
                let exact = analytic.get(id).map_or(0.0, |t| t.data()[k]);
                let tol = 1e-6 * (1.0 + numeric.abs().max(exact.abs()));
                assert!((numeric - exact).abs() <= tol, "{} [{k}]: numeric {numeric} vs tape {exact}", store.name(id));
            }
        }
    }

    fn store() -> ParamStore {
        let mut s = ParamStore::new(3);
        s.add_uniform("a", 3, 4, 1.0);
        s.add_uniform("b", 4, 2, 1.0);
        s.add_uniform("r", 1, 4, 1.0);
        s.add_uniform("s", 1, 1, 1.0);
        s
    }

    #[test]
    fn dense_ops_match_finite_differences() {
        let mut s = store();
        let (a, b, r, k) = (s.id("a"), s.id("b"), s.id("r"), s.id("s"));
        check(&mut s, |g| {
            let a = g.param(a);
            let b = g.param(b);
            let r = g.param(r);
            let k = g.param(k);
            let x = g.add_row(a, r);
            let x = g.tanh(x);
            let y = g.matmul(x, b);
            let y = g.sigmoid(y);
            let z = g.scale_by(y, k);
            let w = g.mul(z, y);
            let e = g.exp(w);
            let t = g.transpose(e);
            let l = g.affine(t, 2.0, 3.0);
            let l = g.log(l);
            g.sum(l)
        });
    }

    #[test]
    fn structural_ops_match_finite_differences() {
        let mut s = store();
        let (a, b, r) = (s.id("a"), s.id("b"), s.id("r"));
        check(&mut s, |g| {
            let a = g.param(a);
            let b = g.param(b);
            let r = g.param(r);
            let bt = g.transpose(b);
            let stacked = g.vcat(&[a, r, bt]);
            let wide = g.hcat(&[stacked, stacked]);
            let sl = g.col_slice(wide, 2, 4);
            let sp = g.sparse(sl, 3, alloc::vec![(0, 1, 0.5), (0, 4, -1.0), (2, 5, 2.0), (1, 0, 1.0)]);
            let mx = g.segment_max(sp, &[alloc::vec![0, 2], alloc::vec![], alloc::vec![1, 2]]);
            let pooled = g.max_rows(stacked);
            let picked = g.pick(mx, 5);
            let sum_mx = g.sum(mx);
            let sum_pool = g.sum(pooled);
            g.sum_all(&[picked, sum_mx, sum_pool])
        });
    }

    #[test]
    fn softmax_and_entropy_match_finite_differences() {
        let mut s = store();
        let (a, r) = (s.id("a"), s.id("r"));
        let mask = [true, false, true, true];
        check(&mut s, |g| {
            let r = g.param(r);
            let p = g.softmax(r, Some(&mask));
            let h = g.entropy(p);
            let a = g.param(a);
            let q = g.softmax(a, None);
            let hq = g.entropy(q);
            let pick = g.pick(p, 2);
            let lp = g.log(pick);
            let t = g.add(h, hq);
            g.add(t, lp)
        });
    }

    #[test]
    fn masked_softmax_zeroes_disallowed_entries() {
        let s = store();
        let mut g = Graph::new(&s);
        let r = g.param(s.id("r"));
        let p = g.softmax(r, Some(&[false, true, false, true]));
        let v = g.value(p).data().to_vec();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[2], 0.0);
        assert!((v[1] + v[3] - 1.0).abs() < 1e-12);
    }
}
