use super::{ParamStore, Result, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul { a: TensorId, b: TensorId, trans_b: bool },
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Scale(TensorId, f64),
    /// Row-broadcast add: `[n,d] + [d]`.
    AddRow { x: TensorId, row: TensorId },
    Gelu(TensorId),
    /// Softmax over the last axis of a rank-2 tensor.
    Softmax(TensorId),
    LayerNorm { x: TensorId, gamma: TensorId, beta: TensorId, eps: f64 },
    GatherRows { x: TensorId, idx: Vec<usize> },
    /// Place the k rows of `x` at `idx` in an otherwise-zero `[rows, d]` matrix.
    ScatterRows { x: TensorId, idx: Vec<usize> },
    RepeatRow { v: TensorId, n: usize },
    ConcatRows(Vec<TensorId>),
    ConcatCols(Vec<TensorId>),
    SliceRows { x: TensorId, start: usize, len: usize },
    SliceCols { x: TensorId, start: usize, len: usize },
    MeanAll(TensorId),
    SumAll(TensorId),
    Reshape(TensorId),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    op: Op,
    requires_grad: bool,
    /// Set for leaves leased from a `ParamStore`.
    param_name: Option<String>,
}

/// Eager reverse-mode tape. One tape per computation graph, one thread per tape.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Interpret a rank-1 or rank-2 shape as (rows, cols).
fn as_2d(shape: &[usize]) -> Option<(usize, usize)> {
    match shape {
        [d] => Some((1, *d)),
        [n, d] => Some((*n, *d)),
        _ => None,
    }
}

#[allow(clippy::too_many_arguments)]
unsafe fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: *const f64,
    rsa: isize,
    csa: isize,
    b: *const f64,
    rsb: isize,
    csb: isize,
    beta: f64,
    c: *mut f64,
) {
    matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, n as isize, 1);
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn data(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].data
    }

    /// Gradient of the last `backward` call w.r.t. this node, if any flowed.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn value(&self, id: TensorId) -> f64 {
        debug_assert_eq!(numel(&self.nodes[id.0].shape), 1);
        self.nodes[id.0].data[0]
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, requires_grad: bool) -> TensorId {
        debug_assert_eq!(numel(&shape), data.len());
        self.nodes.push(Node { shape, data, grad: None, op, requires_grad, param_name: None });
        TensorId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|i| self.nodes[i.0].requires_grad)
    }

    fn mismatch(op: &'static str, detail: String) -> TensorError {
        TensorError::ShapeMismatch { op, detail }
    }

    /// Constant input; gradients do not flow into it.
    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> TensorId {
        assert_eq!(numel(shape), data.len(), "constant data length must match shape");
        self.push(shape.to_vec(), data, Op::Leaf, false)
    }

    pub fn scalar(&mut self, v: f64) -> TensorId {
        self.push(vec![], vec![v], Op::Leaf, false)
    }

    /// Differentiable leaf with externally provided data.
    pub fn leaf(&mut self, shape: &[usize], data: Vec<f64>) -> TensorId {
        assert_eq!(numel(shape), data.len(), "leaf data length must match shape");
        self.push(shape.to_vec(), data, Op::Leaf, true)
    }

    /// Lease a named parameter from `store` onto the tape.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<TensorId> {
        let p = store.get(name).ok_or_else(|| TensorError::UnknownParam(name.to_string()))?;
        let id = self.push(p.shape.clone(), p.data.clone(), Op::Leaf, true);
        self.nodes[id.0].param_name = Some(name.to_string());
        Ok(id)
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.matmul_impl(a, b, false)
    }

    /// `a [n,k] x transpose(b [m,k]) -> [n,m]`.
    pub fn matmul_nt(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: TensorId, b: TensorId, trans_b: bool) -> Result<TensorId> {
        let (n, k) = as_2d(self.shape(a))
            .ok_or_else(|| Self::mismatch("matmul", format!("lhs rank {:?}", self.shape(a))))?;
        let (br, bc) = as_2d(self.shape(b))
            .ok_or_else(|| Self::mismatch("matmul", format!("rhs rank {:?}", self.shape(b))))?;
        let (kb, m) = if trans_b { (bc, br) } else { (br, bc) };
        if k != kb {
            return Err(Self::mismatch(
                "matmul",
                format!("inner dims disagree: [{n}x{k}] vs [{br}x{bc}] (trans_b={trans_b})"),
            ));
        }
        let mut out = vec![0.0; n * m];
        unsafe {
            let (rsb, csb) = if trans_b { (1, bc as isize) } else { (bc as isize, 1) };
            gemm(
                n, k, m, 1.0,
                self.nodes[a.0].data.as_ptr(), k as isize, 1,
                self.nodes[b.0].data.as_ptr(), rsb, csb,
                0.0, out.as_mut_ptr(),
            );
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(vec![n, m], out, Op::Matmul { a, b, trans_b }, rg))
    }

    fn zip(&mut self, op_name: &'static str, a: TensorId, b: TensorId, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Self::mismatch(op_name, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(shape, data, op, rg))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: TensorId, c: f64) -> TensorId {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|&v| v * c).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x]);
        self.push(shape, data, Op::Scale(x, c), rg)
    }

    /// `x [n,d] + row [d]`, broadcast over rows.
    pub fn add_row(&mut self, x: TensorId, row: TensorId) -> Result<TensorId> {
        let (n, d) = as_2d(self.shape(x))
            .ok_or_else(|| Self::mismatch("add_row", format!("lhs {:?}", self.shape(x))))?;
        if self.shape(row) != [d] {
            return Err(Self::mismatch(
                "add_row",
                format!("row {:?} does not match [{n}x{d}]", self.shape(row)),
            ));
        }
        let mut data = self.nodes[x.0].data.clone();
        for r in 0..n {
            for c in 0..d {
                data[r * d + c] += self.nodes[row.0].data[c];
            }
        }
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x, row]);
        Ok(self.push(shape, data, Op::AddRow { x, row }, rg))
    }

    /// `y = x W + bias`, bias broadcast over rows.
    pub fn linear(&mut self, x: TensorId, w: TensorId, bias: TensorId) -> Result<TensorId> {
        let y = self.matmul(x, w)?;
        self.add_row(y, bias)
    }

    pub fn gelu(&mut self, x: TensorId) -> TensorId {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|&v| gelu(v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x]);
        self.push(shape, data, Op::Gelu(x), rg)
    }

    /// Softmax over the last axis, with max-subtraction stabilization.
    pub fn softmax(&mut self, x: TensorId) -> Result<TensorId> {
        let (n, d) = as_2d(self.shape(x))
            .ok_or_else(|| Self::mismatch("softmax", format!("{:?}", self.shape(x))))?;
        let mut data = self.nodes[x.0].data.clone();
        for r in 0..n {
            let row = &mut data[r * d..(r + 1) * d];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(shape, data, Op::Softmax(x), rg))
    }

    /// Per-row layer normalization with affine parameters; eps inside the sqrt.
    pub fn layer_norm(&mut self, x: TensorId, gamma: TensorId, beta: TensorId, eps: f64) -> Result<TensorId> {
        let (n, d) = as_2d(self.shape(x))
            .ok_or_else(|| Self::mismatch("layer_norm", format!("{:?}", self.shape(x))))?;
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(Self::mismatch(
                "layer_norm",
                format!("gamma {:?} / beta {:?} vs width {d}", self.shape(gamma), self.shape(beta)),
            ));
        }
        let mut data = vec![0.0; n * d];
        for r in 0..n {
            let xr = &self.nodes[x.0].data[r * d..(r + 1) * d];
            let mean = xr.iter().sum::<f64>() / d as f64;
            let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for c in 0..d {
                let xhat = (xr[c] - mean) * inv;
                data[r * d + c] = self.nodes[gamma.0].data[c] * xhat + self.nodes[beta.0].data[c];
            }
        }
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(shape, data, Op::LayerNorm { x, gamma, beta, eps }, rg))
    }

    pub fn gather_rows(&mut self, x: TensorId, idx: &[usize]) -> Result<TensorId> {
        let (n, d) = as_2d(self.shape(x))
            .ok_or_else(|| Self::mismatch("gather_rows", format!("{:?}", self.shape(x))))?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Self::mismatch("gather_rows", format!("row {bad} out of {n}")));
        }
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(&self.nodes[x.0].data[i * d..(i + 1) * d]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(vec![idx.len(), d], data, Op::GatherRows { x, idx: idx.to_vec() }, rg))
    }

    /// Rows of `x` placed at `idx` into a zero `[rows, d]` matrix. Indices must be unique.
    pub fn scatter_rows(&mut self, x: TensorId, idx: &[usize], rows: usize) -> Result<TensorId> {
        let (k, d) = as_2d(self.shape(x))
            .ok_or_else(|| Self::mismatch("scatter_rows", format!("{:?}", self.shape(x))))?;
        if k != idx.len() {
            return Err(Self::mismatch("scatter_rows", format!("{k} rows vs {} indices", idx.len())));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Self::mismatch("scatter_rows", format!("row {bad} out of {rows}")));
        }
        let mut data = vec![0.0; rows * d];
        for (r, &i) in idx.iter().enumerate() {
            data[i * d..(i + 1) * d].copy_from_slice(&self.nodes[x.0].data[r * d..(r + 1) * d]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(vec![rows, d], data, Op::ScatterRows { x, idx: idx.to_vec() }, rg))
    }

    /// `[d] -> [n,d]` by repetition.
    pub fn repeat_row(&mut self, v: TensorId, n: usize) -> Result<TensorId> {
        let d = match self.shape(v) {
            [d] => *d,
            s => return Err(Self::mismatch("repeat_row", format!("{s:?}"))),
        };
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            data.extend_from_slice(&self.nodes[v.0].data);
        }
        let rg = self.rg(&[v]);
        Ok(self.push(vec![n, d], data, Op::RepeatRow { v, n }, rg))
    }

    pub fn concat_rows(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        let d = match parts {
            [] => return Err(Self::mismatch("concat_rows", "empty".into())),
            [first, ..] => {
                as_2d(self.shape(*first))
                    .ok_or_else(|| Self::mismatch("concat_rows", format!("{:?}", self.shape(*first))))?
                    .1
            }
        };
        let mut total = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (n, dp) = as_2d(self.shape(p))
                .ok_or_else(|| Self::mismatch("concat_rows", format!("{:?}", self.shape(p))))?;
            if dp != d {
                return Err(Self::mismatch("concat_rows", format!("widths {d} vs {dp}")));
            }
            total += n;
            data.extend_from_slice(&self.nodes[p.0].data);
        }
        let rg = self.rg(parts);
        Ok(self.push(vec![total, d], data, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        let n = match parts {
            [] => return Err(Self::mismatch("concat_cols", "empty".into())),
            [first, ..] => {
                as_2d(self.shape(*first))
                    .ok_or_else(|| Self::mismatch("concat_cols", format!("{:?}", self.shape(*first))))?
                    .0
            }
        };
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (np, dp) = as_2d(self.shape(p)).unwrap_or((0, 0));
                if np != n {
                    0
                } else {
                    dp
                }
            })
            .collect();
        if widths.iter().any(|&w| w == 0) {
            return Err(Self::mismatch("concat_cols", "row counts disagree".into()));
        }
        let d: usize = widths.iter().sum();
        let mut data = vec![0.0; n * d];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            for r in 0..n {
                data[r * d + off..r * d + off + w]
                    .copy_from_slice(&self.nodes[p.0].data[r * w..(r + 1) * w]);
            }
            off += w;
        }
        let rg = self.rg(parts);
        Ok(self.push(vec![n, d], data, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn slice_rows(&mut self, x: TensorId, start: usize, len: usize) -> Result<TensorId> {
        let (n, d) = as_2d(self.shape(x))
            .ok_or_else(|| Self::mismatch("slice_rows", format!("{:?}", self.shape(x))))?;
        if start + len > n {
            return Err(Self::mismatch("slice_rows", format!("{start}+{len} out of {n}")));
        }
        let data = self.nodes[x.0].data[start * d..(start + len) * d].to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(vec![len, d], data, Op::SliceRows { x, start, len }, rg))
    }

    pub fn slice_cols(&mut self, x: TensorId, start: usize, len: usize) -> Result<TensorId> {
        let (n, d) = as_2d(self.shape(x))
            .ok_or_else(|| Self::mismatch("slice_cols", format!("{:?}", self.shape(x))))?;
        if start + len > d {
            return Err(Self::mismatch("slice_cols", format!("{start}+{len} out of {d}")));
        }
        let mut data = Vec::with_capacity(n * len);
        for r in 0..n {
            data.extend_from_slice(&self.nodes[x.0].data[r * d + start..r * d + start + len]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(vec![n, len], data, Op::SliceCols { x, start, len }, rg))
    }

    pub fn mean_all(&mut self, x: TensorId) -> TensorId {
        let n = self.nodes[x.0].data.len();
        let v = self.nodes[x.0].data.iter().sum::<f64>() / n as f64;
        let rg = self.rg(&[x]);
        self.push(vec![], vec![v], Op::MeanAll(x), rg)
    }

    pub fn sum_all(&mut self, x: TensorId) -> TensorId {
        let v = self.nodes[x.0].data.iter().sum::<f64>();
        let rg = self.rg(&[x]);
        self.push(vec![], vec![v], Op::SumAll(x), rg)
    }

    pub fn reshape(&mut self, x: TensorId, shape: &[usize]) -> Result<TensorId> {
        if numel(shape) != self.nodes[x.0].data.len() {
            return Err(Self::mismatch(
                "reshape",
                format!("{:?} -> {:?}", self.shape(x), shape),
            ));
        }
        let data = self.nodes[x.0].data.clone();
        let rg = self.rg(&[x]);
        Ok(self.push(shape.to_vec(), data, Op::Reshape(x), rg))
    }

    /// Mean of squared differences.
    pub fn mse(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let diff = self.sub(a, b)?;
        let sq = self.mul(diff, diff)?;
        Ok(self.mean_all(sq))
    }

    fn accum(&mut self, id: TensorId, delta: &[f64]) {
        let node = &mut self.nodes[id.0];
        if !node.requires_grad {
            return;
        }
        let g = node
            .grad
            .get_or_insert_with(|| vec![0.0; node.data.len()]);
        for (gi, &di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }

    /// Reverse pass from a scalar loss. Gradients sum across multiple uses of a
    /// node; accumulation order is the fixed reverse tape order.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if !self.nodes[loss.0].shape.is_empty() {
            return Err(TensorError::NonScalarLoss(self.nodes[loss.0].shape.clone()));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.nodes[i].grad.clone() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Matmul { a, b, trans_b } => {
                    let (n, k) = as_2d(self.shape(a)).unwrap();
                    let (br, bc) = as_2d(self.shape(b)).unwrap();
                    let m = if trans_b { br } else { bc };
                    if self.nodes[a.0].requires_grad {
                        // dA = G . B^T (or G . B when trans_b)
                        let mut da = vec![0.0; n * k];
                        unsafe {
                            let (rsb, csb) = if trans_b { (bc as isize, 1) } else { (1, bc as isize) };
                            gemm(
                                n, m, k, 1.0,
                                g.as_ptr(), m as isize, 1,
                                self.nodes[b.0].data.as_ptr(), rsb, csb,
                                0.0, da.as_mut_ptr(),
                            );
                        }
                        self.accum(a, &da);
                    }
                    if self.nodes[b.0].requires_grad {
                        let mut db = vec![0.0; br * bc];
                        unsafe {
                            if trans_b {
                                // dB = G^T . A  -> [m, k]
                                gemm(
                                    m, n, k, 1.0,
                                    g.as_ptr(), 1, m as isize,
                                    self.nodes[a.0].data.as_ptr(), k as isize, 1,
                                    0.0, db.as_mut_ptr(),
                                );
                            } else {
                                // dB = A^T . G  -> [k, m]
                                gemm(
                                    k, n, m, 1.0,
                                    self.nodes[a.0].data.as_ptr(), 1, k as isize,
                                    g.as_ptr(), m as isize, 1,
                                    0.0, db.as_mut_ptr(),
                                );
                            }
                        }
                        self.accum(b, &db);
                    }
                }
                Op::Add(a, b) => {
                    self.accum(a, &g);
                    self.accum(b, &g);
                }
                Op::Sub(a, b) => {
                    self.accum(a, &g);
                    let neg: Vec<f64> = g.iter().map(|&v| -v).collect();
                    self.accum(b, &neg);
                }
                Op::Mul(a, b) => {
                    let da: Vec<f64> =
                        g.iter().zip(&self.nodes[b.0].data).map(|(&gi, &bi)| gi * bi).collect();
                    let db: Vec<f64> =
                        g.iter().zip(&self.nodes[a.0].data).map(|(&gi, &ai)| gi * ai).collect();
                    self.accum(a, &da);
                    self.accum(b, &db);
                }
                Op::Scale(x, c) => {
                    let dx: Vec<f64> = g.iter().map(|&v| v * c).collect();
                    self.accum(x, &dx);
                }
                Op::AddRow { x, row } => {
                    self.accum(x, &g);
                    let (n, d) = as_2d(&self.nodes[i].shape).unwrap();
                    let mut dr = vec![0.0; d];
                    for r in 0..n {
                        for c in 0..d {
                            dr[c] += g[r * d + c];
                        }
                    }
                    self.accum(row, &dr);
                }
                Op::Gelu(x) => {
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(&self.nodes[x.0].data)
                        .map(|(&gi, &xi)| gi * gelu_grad(xi))
                        .collect();
                    self.accum(x, &dx);
                }
                Op::Softmax(x) => {
                    let (n, d) = as_2d(&self.nodes[i].shape).unwrap();
                    let y = &self.nodes[i].data;
                    let mut dx = vec![0.0; n * d];
                    for r in 0..n {
                        let dot: f64 =
                            (0..d).map(|c| g[r * d + c] * y[r * d + c]).sum();
                        for c in 0..d {
                            dx[r * d + c] = y[r * d + c] * (g[r * d + c] - dot);
                        }
                    }
                    self.accum(x, &dx);
                }
                Op::LayerNorm { x, gamma, beta, eps } => {
                    let (n, d) = as_2d(&self.nodes[i].shape).unwrap();
                    let mut dx = vec![0.0; n * d];
                    let mut dgamma = vec![0.0; d];
                    let mut dbeta = vec![0.0; d];
                    for r in 0..n {
                        let xr = &self.nodes[x.0].data[r * d..(r + 1) * d];
                        let mean = xr.iter().sum::<f64>() / d as f64;
                        let var =
                            xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                        let inv = 1.0 / (var + eps).sqrt();
                        let gr = &g[r * d..(r + 1) * d];
                        let mut sum_gg = 0.0;
                        let mut sum_ggx = 0.0;
                        for c in 0..d {
                            let xhat = (xr[c] - mean) * inv;
                            let gg = gr[c] * self.nodes[gamma.0].data[c];
                            sum_gg += gg;
                            sum_ggx += gg * xhat;
                            dgamma[c] += gr[c] * xhat;
                            dbeta[c] += gr[c];
                        }
                        let m1 = sum_gg / d as f64;
                        let m2 = sum_ggx / d as f64;
                        for c in 0..d {
                            let xhat = (xr[c] - mean) * inv;
                            let gg = gr[c] * self.nodes[gamma.0].data[c];
                            dx[r * d + c] = (gg - m1 - xhat * m2) * inv;
                        }
                    }
                    self.accum(x, &dx);
                    self.accum(gamma, &dgamma);
                    self.accum(beta, &dbeta);
                }
                Op::GatherRows { x, idx } => {
                    let (_, d) = as_2d(self.shape(x)).unwrap();
                    let mut dx = vec![0.0; self.nodes[x.0].data.len()];
                    for (r, &src) in idx.iter().enumerate() {
                        for c in 0..d {
                            dx[src * d + c] += g[r * d + c];
                        }
                    }
                    self.accum(x, &dx);
                }
                Op::ScatterRows { x, idx } => {
                    let (_, d) = as_2d(self.shape(x)).unwrap();
                    let mut dx = vec![0.0; self.nodes[x.0].data.len()];
                    for (r, &dst) in idx.iter().enumerate() {
                        dx[r * d..(r + 1) * d].copy_from_slice(&g[dst * d..(dst + 1) * d]);
                    }
                    self.accum(x, &dx);
                }
                Op::RepeatRow { v, n } => {
                    let d = self.nodes[v.0].data.len();
                    let mut dv = vec![0.0; d];
                    for r in 0..n {
                        for c in 0..d {
                            dv[c] += g[r * d + c];
                        }
                    }
                    self.accum(v, &dv);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let len = self.nodes[p.0].data.len();
                        let slice = g[off..off + len].to_vec();
                        self.accum(p, &slice);
                        off += len;
                    }
                }
                Op::ConcatCols(parts) => {
                    let (n, d) = as_2d(&self.nodes[i].shape).unwrap();
                    let mut off = 0;
                    for p in parts {
                        let (_, w) = as_2d(self.shape(p)).unwrap();
                        let mut dp = vec![0.0; n * w];
                        for r in 0..n {
                            dp[r * w..(r + 1) * w]
                                .copy_from_slice(&g[r * d + off..r * d + off + w]);
                        }
                        self.accum(p, &dp);
                        off += w;
                    }
                }
                Op::SliceRows { x, start, len } => {
                    let (_, d) = as_2d(self.shape(x)).unwrap();
                    let mut dx = vec![0.0; self.nodes[x.0].data.len()];
                    dx[start * d..(start + len) * d].copy_from_slice(&g);
                    self.accum(x, &dx);
                }
                Op::SliceCols { x, start, len } => {
                    let (n, d) = as_2d(self.shape(x)).unwrap();
                    let mut dx = vec![0.0; self.nodes[x.0].data.len()];
                    for r in 0..n {
                        dx[r * d + start..r * d + start + len]
                            .copy_from_slice(&g[r * len..(r + 1) * len]);
                    }
                    self.accum(x, &dx);
                }
                Op::MeanAll(x) => {
                    let n = self.nodes[x.0].data.len();
                    let dx = vec![g[0] / n as f64; n];
                    self.accum(x, &dx);
                }
                Op::SumAll(x) => {
                    let n = self.nodes[x.0].data.len();
                    let dx = vec![g[0]; n];
                    self.accum(x, &dx);
                }
                Op::Reshape(x) => {
                    self.accum(x, &g);
                }
            }
        }
        Ok(())
    }

    /// Add gradients of leased parameter leaves into their store slots.
    pub fn grads_into(&self, store: &mut ParamStore) {
        for node in &self.nodes {
            if let (Some(name), Some(grad)) = (&node.param_name, &node.grad) {
                let p = store.get_mut(name).expect("leased param still in store");
                for (gi, &di) in p.grad.iter_mut().zip(grad) {
                    *gi += di;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central finite differences of `f` w.r.t. a leaf's coordinates.
    fn finite_diff(
        build: &dyn Fn(&mut Tape, &[f64]) -> TensorId,
        x0: &[f64],
        h: f64,
    ) -> Vec<f64> {
        let mut out = Vec::with_capacity(x0.len());
        for i in 0..x0.len() {
            let mut xp = x0.to_vec();
            let mut xm = x0.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let mut tp = Tape::new();
            let fp = build(&mut tp, &xp);
            let mut tm = Tape::new();
            let fm = build(&mut tm, &xm);
            out.push((tp.value(fp) - tm.value(fm)) / (2.0 * h));
        }
        out
    }

    fn assert_close(got: &[f64], want: &[f64], rel: f64) {
        for (i, (&g, &w)) in got.iter().zip(want).enumerate() {
            let denom = w.abs().max(1e-8);
            assert!(
                (g - w).abs() / denom < rel,
                "coord {i}: got {g}, want {w} (rel {})",
                (g - w).abs() / denom
            );
        }
    }

    #[test]
    fn linear_identity_input() {
        let mut t = Tape::new();
        let x = t.constant(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let w = t.constant(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = t.constant(&[2], vec![0.0, 0.0]);
        let y = t.linear(x, w, b).unwrap();
        assert_eq!(t.data(y), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn linear_hand_multiply_with_bias() {
        let mut t = Tape::new();
        let x = t.constant(&[1, 2], vec![1.0, 1.0]);
        let w = t.constant(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = t.constant(&[2], vec![10.0, 10.0]);
        let y = t.linear(x, w, b).unwrap();
        assert_eq!(t.data(y), &[14.0, 16.0]);
    }

    #[test]
    fn linear_shape_mismatch_reports_dims() {
        let mut t = Tape::new();
        let x = t.constant(&[1, 3], vec![0.0; 3]);
        let w = t.constant(&[2, 2], vec![0.0; 4]);
        let b = t.constant(&[2], vec![0.0; 2]);
        let err = t.linear(x, w, b).unwrap_err();
        assert!(err.to_string().contains("inner dims"));
    }

    #[test]
    fn linear_weight_gradient_matches_finite_differences() {
        // 64-coordinate gradient of sum(linear(x, W, b)) w.r.t. W.
        let mut w0 = Vec::with_capacity(64);
        for i in 0..64 {
            w0.push((i as f64 * 0.37).sin() * 0.5);
        }
        let x0: Vec<f64> = (0..24).map(|i| (i as f64 * 0.11).cos()).collect();
        let build = |t: &mut Tape, w: &[f64]| {
            let x = t.constant(&[3, 8], x0.clone());
            let wt = t.leaf(&[8, 8], w.to_vec());
            let b = t.constant(&[8], vec![0.1; 8]);
            let y = t.linear(x, wt, b).unwrap();
            t.sum_all(y)
        };
        let mut tape = Tape::new();
        let loss = build(&mut tape, &w0);
        tape.backward(loss).unwrap();
        let got = tape.grad(TensorId(1)).unwrap().to_vec();
        let want = finite_diff(&build, &w0, 1e-4);
        assert_close(&got, &want, 1e-6);
    }

    #[test]
    fn softmax_uniform_and_analytic() {
        let mut t = Tape::new();
        let x = t.constant(&[1, 3], vec![0.0, 0.0, 0.0]);
        let y = t.softmax(x).unwrap();
        for &v in t.data(y) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let x2 = t.constant(&[1, 2], vec![0.0, 2.0f64.ln()]);
        let y2 = t.softmax(x2).unwrap();
        assert!((t.data(y2)[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((t.data(y2)[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariance_and_row_sums() {
        let vals = vec![0.3, -1.2, 2.5, 0.0, 7.0, -3.0];
        let mut t = Tape::new();
        let x = t.constant(&[2, 3], vals.clone());
        let y = t.softmax(x).unwrap();
        let shifted: Vec<f64> = vals.iter().map(|v| v + 100.0).collect();
        let xs = t.constant(&[2, 3], shifted);
        let ys = t.softmax(xs).unwrap();
        for (a, b) in t.data(y).to_vec().iter().zip(t.data(ys)) {
            assert!((a - b).abs() < 1e-12);
        }
        for r in 0..2 {
            let s: f64 = t.data(y)[r * 3..(r + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_examples() {
        let mut t = Tape::new();
        // constant row -> zeros
        let x = t.constant(&[1, 4], vec![5.0; 4]);
        let g = t.constant(&[4], vec![1.0; 4]);
        let b = t.constant(&[4], vec![0.0; 4]);
        let y = t.layer_norm(x, g, b, 1e-6).unwrap();
        for &v in t.data(y) {
            assert!(v.abs() < 1e-3);
        }
        // x=[1,3], eps=0 -> [-1, 1]
        let x2 = t.constant(&[1, 2], vec![1.0, 3.0]);
        let g2 = t.constant(&[2], vec![1.0; 2]);
        let b2 = t.constant(&[2], vec![0.0; 2]);
        let y2 = t.layer_norm(x2, g2, b2, 0.0).unwrap();
        assert!((t.data(y2)[0] + 1.0).abs() < 1e-12);
        assert!((t.data(y2)[1] - 1.0).abs() < 1e-12);
        // beta offset
        let b3 = t.constant(&[2], vec![5.0; 2]);
        let y3 = t.layer_norm(x2, g2, b3, 0.0).unwrap();
        assert!((t.data(y3)[0] - 4.0).abs() < 1e-12);
        assert!((t.data(y3)[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_row_mean_is_zero_with_zero_beta() {
        let mut t = Tape::new();
        let x = t.constant(&[3, 5], (0..15).map(|i| (i as f64 * 1.3).sin()).collect());
        let g = t.constant(&[5], vec![1.0; 5]);
        let b = t.constant(&[5], vec![0.0; 5]);
        let y = t.layer_norm(x, g, b, 1e-6).unwrap();
        for r in 0..3 {
            let mean: f64 = t.data(y)[r * 5..(r + 1) * 5].iter().sum::<f64>() / 5.0;
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn gelu_and_mse_basics() {
        let mut t = Tape::new();
        let x = t.constant(&[1], vec![0.0]);
        let y = t.gelu(x);
        assert_eq!(t.data(y), &[0.0]);
        let a = t.constant(&[2], vec![1.0, -2.0]);
        let z = t.mse(a, a).unwrap();
        assert_eq!(t.value(z), 0.0);
        let p = t.constant(&[2], vec![0.0, 2.0]);
        let q = t.constant(&[2], vec![0.0, 0.0]);
        let m = t.mse(p, q).unwrap();
        assert_eq!(t.value(m), 2.0);
    }

    #[test]
    fn backward_analytic_and_accumulation() {
        // d/dx (x*x) at 3 -> 6
        let mut t = Tape::new();
        let x = t.leaf(&[1], vec![3.0]);
        let y = t.mul(x, x).unwrap();
        let s = t.sum_all(y);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[6.0]);
        // y = x + x -> dy/dx = 2
        let mut t2 = Tape::new();
        let x2 = t2.leaf(&[1], vec![1.5]);
        let y2 = t2.add(x2, x2).unwrap();
        let s2 = t2.sum_all(y2);
        t2.backward(s2).unwrap();
        assert_eq!(t2.grad(x2).unwrap(), &[2.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.leaf(&[2], vec![1.0, 2.0]);
        assert!(matches!(t.backward(x), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn primitive_gradients_match_finite_differences() {
        let x0: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin() * 1.5).collect();
        let cases: Vec<(&str, Box<dyn Fn(&mut Tape, &[f64]) -> TensorId>)> = vec![
            (
                "gelu",
                Box::new(|t: &mut Tape, x: &[f64]| {
                    let xt = t.leaf(&[3, 4], x.to_vec());
                    let y = t.gelu(xt);
                    t.sum_all(y)
                }),
            ),
            (
                "softmax",
                Box::new(|t: &mut Tape, x: &[f64]| {
                    let xt = t.leaf(&[3, 4], x.to_vec());
                    let y = t.softmax(xt).unwrap();
                    let w = t.constant(&[3, 4], (0..12).map(|i| i as f64 * 0.3).collect());
                    let z = t.mul(y, w).unwrap();
                    t.sum_all(z)
                }),
            ),
            (
                "layer_norm",
                Box::new(|t: &mut Tape, x: &[f64]| {
                    let xt = t.leaf(&[3, 4], x.to_vec());
                    let g = t.constant(&[4], vec![1.2, 0.8, -0.5, 1.0]);
                    let b = t.constant(&[4], vec![0.1, -0.2, 0.3, 0.0]);
                    let y = t.layer_norm(xt, g, b, 1e-6).unwrap();
                    let w = t.constant(&[3, 4], (0..12).map(|i| (i as f64 - 4.0) * 0.25).collect());
                    let z = t.mul(y, w).unwrap();
                    t.sum_all(z)
                }),
            ),
            (
                "matmul_nt",
                Box::new(|t: &mut Tape, x: &[f64]| {
                    let xt = t.leaf(&[3, 4], x.to_vec());
                    let b = t.constant(&[2, 4], (0..8).map(|i| (i as f64 * 0.9).cos()).collect());
                    let y = t.matmul_nt(xt, b).unwrap();
                    let s = t.mul(y, y).unwrap();
                    t.sum_all(s)
                }),
            ),
            (
                "scatter_gather",
                Box::new(|t: &mut Tape, x: &[f64]| {
                    let xt = t.leaf(&[3, 4], x.to_vec());
                    let sc = t.scatter_rows(xt, &[4, 0, 2], 5).unwrap();
                    let ga = t.gather_rows(sc, &[0, 2, 4, 4]).unwrap();
                    let s = t.mul(ga, ga).unwrap();
                    t.sum_all(s)
                }),
            ),
        ];
        for (name, build) in &cases {
            let mut tape = Tape::new();
            let loss = build(&mut tape, &x0);
            tape.backward(loss).unwrap();
            let got = tape.grad(TensorId(0)).unwrap().to_vec();
            let want = finite_diff(build.as_ref(), &x0, 1e-4);
            assert_close(&got, &want, 1e-6);
            let _ = name;
        }
    }

    #[test]
    fn forward_backward_is_bit_deterministic() {
        let run = || {
            let mut t = Tape::new();
            let x = t.leaf(&[4, 4], (0..16).map(|i| (i as f64 * 0.21).sin()).collect());
            let w = t.leaf(&[4, 4], (0..16).map(|i| (i as f64 * 0.13).cos()).collect());
            let y = t.matmul(x, w).unwrap();
            let g = t.gelu(y);
            let sm = t.softmax(g).unwrap();
            let s = t.sum_all(sm);
            let l = t.mul(s, s).unwrap();
            t.backward(l).unwrap();
            (t.data(l).to_vec(), t.grad(x).unwrap().to_vec(), t.grad(w).unwrap().to_vec())
        };
        let a = run();
        let b = run();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }
}
