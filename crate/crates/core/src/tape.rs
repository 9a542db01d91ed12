//! Reverse-mode automatic differentiation on a flat tape of dense vector
//! operations.
//!
//! The training losses are built by recording the whole computation — the
//! network layers, the Euler velocity updates and the trigonometric pose
//! updates — as nodes on this tape, then sweeping it backward once. The op
//! set is exactly what those graphs need; there is no broadcasting and no
//! graph rewriting.
//!
//! Every node owns a contiguous slice of the value arena. Matrices are
//! row-major with an explicit row count; vectors are single-column.

use crate::mat::Mat;

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    /// Parameter or constant input; gradients accumulate but are only read
    /// for parameters.
    Leaf,
    /// out = M x, with M a (rows x cols) matrix node and x a cols-vector.
    MatVec { m: NodeId, x: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    /// out = a + k * b.
    AddScaled { a: NodeId, b: NodeId, k: f64 },
    Scale { a: NodeId, k: f64 },
    Tanh { a: NodeId },
    Sin { a: NodeId },
    Cos { a: NodeId },
    /// Elementwise product.
    Mul { a: NodeId, b: NodeId },
    /// Single element extraction: out = [a[idx]].
    Gather { a: NodeId, idx: usize },
    /// Stack three scalars into a 3-vector.
    Concat3 { a: NodeId, b: NodeId, c: NodeId },
    /// Standardized squared error against constant targets:
    /// out = sum_j ((x_j - t_j) * s_j)^2 with s_j = 1/sigma_j.
    NormSqErr {
        x: NodeId,
        targets: Box<[f64]>,
        inv_sigma: Box<[f64]>,
    },
}

pub struct Tape {
    ops: Vec<Op>,
    off: Vec<usize>,
    len: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<f64>,
    adj: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            ops: Vec::new(),
            off: Vec::new(),
            len: Vec::new(),
            rows: Vec::new(),
            vals: Vec::new(),
            adj: Vec::new(),
        }
    }

    /// Reset for reuse, keeping the allocated capacity.
    pub fn clear(&mut self) {
        self.ops.clear();
        self.off.clear();
        self.len.clear();
        self.rows.clear();
        self.vals.clear();
        self.adj.clear();
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, op: Op, rows: usize, values: &[f64]) -> NodeId {
        let id = self.ops.len();
        self.ops.push(op);
        self.off.push(self.vals.len());
        self.len.push(values.len());
        self.rows.push(rows);
        self.vals.extend_from_slice(values);
        id
    }

    pub fn val(&self, id: NodeId) -> &[f64] {
        &self.vals[self.off[id]..self.off[id] + self.len[id]]
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.len[id], 1);
        self.vals[self.off[id]]
    }

    /// Adjoint of a node after [`Tape::backward`].
    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.adj[self.off[id]..self.off[id] + self.len[id]]
    }

    pub fn leaf(&mut self, values: &[f64]) -> NodeId {
        self.push(Op::Leaf, values.len(), values)
    }

    pub fn leaf_scalar(&mut self, v: f64) -> NodeId {
        self.push(Op::Leaf, 1, &[v])
    }

    pub fn leaf_matrix(&mut self, m: &Mat) -> NodeId {
        self.push(Op::Leaf, m.rows, &m.data)
    }

    pub fn matvec(&mut self, m: NodeId, x: NodeId) -> NodeId {
        let rows = self.rows[m];
        let cols = self.len[m] / rows;
        debug_assert_eq!(cols, self.len[x], "matvec shape");
        let (moff, xoff) = (self.off[m], self.off[x]);
        let id = self.ops.len();
        let out_off = self.vals.len();
        self.ops.push(Op::MatVec { m, x });
        self.off.push(out_off);
        self.len.push(rows);
        self.rows.push(rows);
        self.vals.resize(out_off + rows, 0.0);
        // The arena is append-only: inputs live strictly before the output.
        let (head, out) = self.vals.split_at_mut(out_off);
        let mat = &head[moff..moff + rows * cols];
        let xv = &head[xoff..xoff + cols];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &mat[i * cols..(i + 1) * cols];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(xv) {
                acc += a * b;
            }
            *o = acc;
        }
        id
    }

    fn binary(&mut self, op: Op, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> NodeId {
        debug_assert_eq!(self.len[a], self.len[b]);
        let n = self.len[a];
        let (ao, bo) = (self.off[a], self.off[b]);
        let rows = self.rows[a];
        let id = self.ops.len();
        let off = self.vals.len();
        self.ops.push(op);
        self.off.push(off);
        self.len.push(n);
        self.rows.push(rows);
        self.vals.resize(off + n, 0.0);
        let (head, out) = self.vals.split_at_mut(off);
        let av = &head[ao..ao + n];
        let bv = &head[bo..bo + n];
        for ((o, x), y) in out.iter_mut().zip(av).zip(bv) {
            *o = f(*x, *y);
        }
        id
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(Op::Add { a, b }, a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(Op::Sub { a, b }, a, b, |x, y| x - y)
    }

    pub fn add_scaled(&mut self, a: NodeId, b: NodeId, k: f64) -> NodeId {
        self.binary(Op::AddScaled { a, b, k }, a, b, move |x, y| x + k * y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(Op::Mul { a, b }, a, b, |x, y| x * y)
    }

    fn unary(&mut self, op: Op, a: NodeId, f: impl Fn(f64) -> f64) -> NodeId {
        let n = self.len[a];
        let ao = self.off[a];
        let rows = self.rows[a];
        let id = self.ops.len();
        let off = self.vals.len();
        self.ops.push(op);
        self.off.push(off);
        self.len.push(n);
        self.rows.push(rows);
        self.vals.resize(off + n, 0.0);
        let (head, out) = self.vals.split_at_mut(off);
        let av = &head[ao..ao + n];
        for (o, x) in out.iter_mut().zip(av) {
            *o = f(*x);
        }
        id
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        self.unary(Op::Scale { a, k }, a, move |x| k * x)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Tanh { a }, a, f64::tanh)
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Sin { a }, a, f64::sin)
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Cos { a }, a, f64::cos)
    }

    pub fn gather(&mut self, a: NodeId, idx: usize) -> NodeId {
        debug_assert!(idx < self.len[a]);
        let v = self.vals[self.off[a] + idx];
        self.push(Op::Gather { a, idx }, 1, &[v])
    }

    pub fn concat3(&mut self, a: NodeId, b: NodeId, c: NodeId) -> NodeId {
        debug_assert!(self.len[a] == 1 && self.len[b] == 1 && self.len[c] == 1);
        let vals = [
            self.vals[self.off[a]],
            self.vals[self.off[b]],
            self.vals[self.off[c]],
        ];
        self.push(Op::Concat3 { a, b, c }, 3, &vals)
    }

    /// sum_j ((x_j - t_j) / sigma_j)^2 as a scalar node.
    pub fn norm_sq_err(&mut self, x: NodeId, targets: &[f64], inv_sigma: &[f64]) -> NodeId {
        debug_assert_eq!(self.len[x], targets.len());
        debug_assert_eq!(targets.len(), inv_sigma.len());
        let xo = self.off[x];
        let mut acc = 0.0;
        for j in 0..targets.len() {
            let e = (self.vals[xo + j] - targets[j]) * inv_sigma[j];
            acc += e * e;
        }
        self.push(
            Op::NormSqErr {
                x,
                targets: targets.into(),
                inv_sigma: inv_sigma.into(),
            },
            1,
            &[acc],
        )
    }

    /// Reverse sweep from a scalar node. Adjoints of all nodes are reset.
    pub fn backward(&mut self, loss: NodeId) {
        assert_eq!(self.len[loss], 1, "backward needs a scalar");
        self.adj.clear();
        self.adj.resize(self.vals.len(), 0.0);
        self.adj[self.off[loss]] = 1.0;

        for id in (0..=loss).rev() {
            let out_off = self.off[id];
            let out_len = self.len[id];
            match &self.ops[id] {
                Op::Leaf => {}
                Op::MatVec { m, x } => {
                    let (m, x) = (*m, *x);
                    let rows = self.rows[m];
                    let cols = self.len[m] / rows;
                    let (moff, xoff) = (self.off[m], self.off[x]);
                    // Output adjoints live after both inputs' adjoints.
                    let (adj_head, adj_out) = self.adj.split_at_mut(out_off);
                    let g = &adj_out[..rows];
                    let xv = &self.vals[xoff..xoff + cols];
                    {
                        let madj = &mut adj_head[moff..moff + rows * cols];
                        for (i, gi) in g.iter().enumerate() {
                            if *gi == 0.0 {
                                continue;
                            }
                            for (a, b) in madj[i * cols..(i + 1) * cols].iter_mut().zip(xv) {
                                *a += gi * b;
                            }
                        }
                    }
                    {
                        let mval = &self.vals[moff..moff + rows * cols];
                        let xadj = &mut adj_head[xoff..xoff + cols];
                        for (i, gi) in g.iter().enumerate() {
                            if *gi == 0.0 {
                                continue;
                            }
                            for (a, b) in xadj.iter_mut().zip(&mval[i * cols..(i + 1) * cols]) {
                                *a += gi * b;
                            }
                        }
                    }
                }
                Op::Add { a, b } => {
                    let (ao, bo) = (self.off[*a], self.off[*b]);
                    let (head, gout) = self.adj.split_at_mut(out_off);
                    let g = &gout[..out_len];
                    for (x, gi) in head[ao..ao + out_len].iter_mut().zip(g) {
                        *x += gi;
                    }
                    for (x, gi) in head[bo..bo + out_len].iter_mut().zip(g) {
                        *x += gi;
                    }
                }
                Op::Sub { a, b } => {
                    let (ao, bo) = (self.off[*a], self.off[*b]);
                    let (head, gout) = self.adj.split_at_mut(out_off);
                    let g = &gout[..out_len];
                    for (x, gi) in head[ao..ao + out_len].iter_mut().zip(g) {
                        *x += gi;
                    }
                    for (x, gi) in head[bo..bo + out_len].iter_mut().zip(g) {
                        *x -= gi;
                    }
                }
                Op::AddScaled { a, b, k } => {
                    let (ao, bo, k) = (self.off[*a], self.off[*b], *k);
                    let (head, gout) = self.adj.split_at_mut(out_off);
                    let g = &gout[..out_len];
                    for (x, gi) in head[ao..ao + out_len].iter_mut().zip(g) {
                        *x += gi;
                    }
                    for (x, gi) in head[bo..bo + out_len].iter_mut().zip(g) {
                        *x += k * gi;
                    }
                }
                Op::Scale { a, k } => {
                    let (ao, k) = (self.off[*a], *k);
                    let (head, gout) = self.adj.split_at_mut(out_off);
                    for (x, gi) in head[ao..ao + out_len].iter_mut().zip(&gout[..out_len]) {
                        *x += k * gi;
                    }
                }
                Op::Tanh { a } => {
                    let ao = self.off[*a];
                    let (head, gout) = self.adj.split_at_mut(out_off);
                    let y = &self.vals[out_off..out_off + out_len];
                    for ((x, gi), yi) in head[ao..ao + out_len].iter_mut().zip(&gout[..out_len]).zip(y) {
                        *x += (1.0 - yi * yi) * gi;
                    }
                }
                Op::Sin { a } => {
                    let ao = self.off[*a];
                    let (head, gout) = self.adj.split_at_mut(out_off);
                    let xv = &self.vals[ao..ao + out_len];
                    for ((x, gi), xi) in head[ao..ao + out_len].iter_mut().zip(&gout[..out_len]).zip(xv) {
                        *x += xi.cos() * gi;
                    }
                }
                Op::Cos { a } => {
                    let ao = self.off[*a];
                    let (head, gout) = self.adj.split_at_mut(out_off);
                    let xv = &self.vals[ao..ao + out_len];
                    for ((x, gi), xi) in head[ao..ao + out_len].iter_mut().zip(&gout[..out_len]).zip(xv) {
                        *x -= xi.sin() * gi;
                    }
                }
                Op::Mul { a, b } => {
                    let (ao, bo) = (self.off[*a], self.off[*b]);
                    let (head, gout) = self.adj.split_at_mut(out_off);
                    let g = &gout[..out_len];
                    let av = &self.vals[ao..ao + out_len];
                    let bv = &self.vals[bo..bo + out_len];
                    for ((x, gi), vb) in head[ao..ao + out_len].iter_mut().zip(g).zip(bv) {
                        *x += vb * gi;
                    }
                    for ((x, gi), va) in head[bo..bo + out_len].iter_mut().zip(g).zip(av) {
                        *x += va * gi;
                    }
                }
                Op::Gather { a, idx } => {
                    let (a, idx) = (*a, *idx);
                    self.adj[self.off[a] + idx] += self.adj[out_off];
                }
                Op::Concat3 { a, b, c } => {
                    let (a, b, c) = (*a, *b, *c);
                    self.adj[self.off[a]] += self.adj[out_off];
                    self.adj[self.off[b]] += self.adj[out_off + 1];
                    self.adj[self.off[c]] += self.adj[out_off + 2];
                }
                Op::NormSqErr { x, targets, inv_sigma } => {
                    let x = *x;
                    let g = self.adj[out_off];
                    if g != 0.0 {
                        let xo = self.off[x];
                        for j in 0..targets.len() {
                            let s = inv_sigma[j];
                            self.adj[xo + j] +=
                                2.0 * (self.vals[xo + j] - targets[j]) * s * s * g;
                        }
                    }
                }
            }
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}
