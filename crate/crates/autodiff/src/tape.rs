use crate::{Error, ParamId, ParamSet, Result, LOG_FLOOR};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf { param: Option<ParamId> },
    Matmul { a: usize, b: usize },
    Add { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, c: f64 },
    Tanh { a: usize },
    Softmax { a: usize },
    Log { a: usize },
    Sum { a: usize },
    Index { a: usize, i: usize },
    Row { a: usize, i: usize },
    ConcatRows { parts: Vec<usize> },
    Detach,
}

struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Node {
    fn numel(&self) -> usize {
        self.rows * self.cols
    }
}

/// A Wengert list: an ordered record of primitive operations.
///
/// Nodes only reference earlier nodes, so the record is topologically
/// ordered and [`Tape::backward`] visits each node exactly once, in
/// reverse. Vectors are column vectors (`rows × 1`).
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, values: Vec<f64>) -> Var {
        self.nodes.push(Node {
            op,
            rows,
            cols,
            values,
        });
        Var(self.nodes.len() - 1)
    }

    // ── Leaves ──────────────────────────────────────────────────────

    /// A constant input; no gradient flows into it.
    pub fn constant(&mut self, values: &[f64]) -> Var {
        self.push(Op::Leaf { param: None }, values.len(), 1, values.to_vec())
    }

    pub fn constant_matrix(&mut self, rows: usize, cols: usize, values: &[f64]) -> Var {
        debug_assert_eq!(rows * cols, values.len());
        self.push(Op::Leaf { param: None }, rows, cols, values.to_vec())
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.push(Op::Leaf { param: None }, 1, 1, vec![value])
    }

    /// Bind one parameter as a leaf. `backward` accumulates its gradient
    /// back into the owning [`ParamSet`].
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        let t = &params.get(id).tensor;
        let (rows, cols) = t.dims2();
        self.push(Op::Leaf { param: Some(id) }, rows, cols, t.values.clone())
    }

    // ── Primitive operations ────────────────────────────────────────

    /// Standard matrix product `[m×k]·[k×n] -> [m×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = (self.nodes[a.0].rows, self.nodes[a.0].cols);
        let (k2, n) = (self.nodes[b.0].rows, self.nodes[b.0].cols);
        if k != k2 {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let av = &self.nodes[a.0].values;
        let bv = &self.nodes[b.0].values;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += aip * b;
                }
            }
        }
        Ok(self.push(Op::Matmul { a: a.0, b: b.0 }, m, n, out))
    }

    /// Elementwise sum of two same-shape nodes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("add", a, b)?;
        let (rows, cols) = (self.nodes[a.0].rows, self.nodes[a.0].cols);
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(Op::Add { a: a.0, b: b.0 }, rows, cols, out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let neg_b = self.scale(b, -1.0);
        self.add(a, neg_b)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("mul", a, b)?;
        let (rows, cols) = (self.nodes[a.0].rows, self.nodes[a.0].cols);
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(Op::Mul { a: a.0, b: b.0 }, rows, cols, out))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let (rows, cols) = (self.nodes[a.0].rows, self.nodes[a.0].cols);
        let out: Vec<f64> = self.nodes[a.0].values.iter().map(|x| c * x).collect();
        self.push(Op::Scale { a: a.0, c }, rows, cols, out)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let (rows, cols) = (self.nodes[a.0].rows, self.nodes[a.0].cols);
        let out: Vec<f64> = self.nodes[a.0].values.iter().map(|x| x.tanh()).collect();
        self.push(Op::Tanh { a: a.0 }, rows, cols, out)
    }

    /// Numerically stable softmax over a column vector (max-subtraction).
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let node = &self.nodes[a.0];
        if node.cols != 1 || node.rows == 0 {
            return Err(Error::DimensionMismatch {
                op: "softmax",
                left: vec![node.rows, node.cols],
                right: vec![],
            });
        }
        let out = softmax_stable(&node.values);
        let rows = node.rows;
        Ok(self.push(Op::Softmax { a: a.0 }, rows, 1, out))
    }

    /// Natural log with inputs clamped at [`LOG_FLOOR`].
    pub fn log(&mut self, a: Var) -> Var {
        let (rows, cols) = (self.nodes[a.0].rows, self.nodes[a.0].cols);
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .map(|x| x.max(LOG_FLOOR).ln())
            .collect();
        self.push(Op::Log { a: a.0 }, rows, cols, out)
    }

    /// Sum of all entries, as a scalar node.
    pub fn sum(&mut self, a: Var) -> Var {
        let total: f64 = self.nodes[a.0].values.iter().sum();
        self.push(Op::Sum { a: a.0 }, 1, 1, vec![total])
    }

    /// Extract entry `i` of a vector as a scalar node.
    pub fn index(&mut self, a: Var, i: usize) -> Result<Var> {
        let len = self.nodes[a.0].numel();
        if i >= len {
            return Err(Error::IndexOutOfRange { index: i, len });
        }
        let v = self.nodes[a.0].values[i];
        Ok(self.push(Op::Index { a: a.0, i }, 1, 1, vec![v]))
    }

    /// Row `i` of a matrix as a column vector (differentiable gather).
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let (rows, cols) = (self.nodes[a.0].rows, self.nodes[a.0].cols);
        if i >= rows {
            return Err(Error::IndexOutOfRange { index: i, len: rows });
        }
        let out = self.nodes[a.0].values[i * cols..(i + 1) * cols].to_vec();
        Ok(self.push(Op::Row { a: a.0, i }, cols, 1, out))
    }

    /// Stack column vectors into one longer column vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        for &p in parts {
            if self.nodes[p.0].cols != 1 {
                return Err(Error::DimensionMismatch {
                    op: "concat",
                    left: vec![self.nodes[p.0].rows, self.nodes[p.0].cols],
                    right: vec![],
                });
            }
            out.extend_from_slice(&self.nodes[p.0].values);
        }
        let rows = out.len();
        Ok(self.push(
            Op::ConcatRows {
                parts: parts.iter().map(|v| v.0).collect(),
            },
            rows,
            1,
            out,
        ))
    }

    /// Identity in the forward pass; blocks the gradient in the backward pass.
    pub fn detach(&mut self, a: Var) -> Var {
        let (rows, cols) = (self.nodes[a.0].rows, self.nodes[a.0].cols);
        let values = self.nodes[a.0].values.clone();
        self.push(Op::Detach, rows, cols, values)
    }

    /// `-log_probs[target]`, the negative log-likelihood of one class.
    ///
    /// `log_probs` must already be a log-distribution (e.g. `log(softmax(..))`).
    pub fn cross_entropy(&mut self, log_probs: Var, target: usize) -> Result<Var> {
        let picked = self.index(log_probs, target)?;
        Ok(self.neg(picked))
    }

    /// Weighted sum `Σ w_i · v_i` against constant weights.
    pub fn weighted_sum(&mut self, weights: &[f64], v: Var) -> Result<Var> {
        let w = self.constant_matrix(1, weights.len(), weights);
        self.matmul(w, v)
    }

    // ── Reads ───────────────────────────────────────────────────────

    pub fn values(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].values
    }

    pub fn value(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].numel(), 1);
        self.nodes[v.0].values[0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        (self.nodes[v.0].rows, self.nodes[v.0].cols)
    }

    // ── Backward ────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss. Gradients accumulate into every
    /// reachable parameter of `params`; repeated calls keep accumulating
    /// until the caller clears the grads.
    pub fn backward(&self, loss: Var, params: &mut ParamSet) -> Result<()> {
        let node = &self.nodes[loss.0];
        if node.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got {}x{}",
                node.rows, node.cols
            )));
        }
        if !node.values[0].is_finite() {
            return Err(Error::NonFinite {
                context: "loss before backward".into(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            match &self.nodes[idx].op {
                Op::Leaf { param } => {
                    if let Some(id) = param {
                        params.get_mut(*id).tensor.accumulate_grad(&gout);
                    }
                }
                Op::Matmul { a, b } => {
                    let (m, k) = (self.nodes[*a].rows, self.nodes[*a].cols);
                    let n = self.nodes[*b].cols;
                    let av = &self.nodes[*a].values;
                    let bv = &self.nodes[*b].values;
                    // dA = dOut · Bᵀ
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += gout[i * n + j] * bv[p * n + j];
                            }
                            da[i * k + p] = s;
                        }
                    }
                    accumulate(&mut grads[*a], &da);
                    // dB = Aᵀ · dOut
                    let mut db = vec![0.0; k * n];
                    for p in 0..k {
                        for j in 0..n {
                            let mut s = 0.0;
                            for i in 0..m {
                                s += av[i * k + p] * gout[i * n + j];
                            }
                            db[p * n + j] = s;
                        }
                    }
                    accumulate(&mut grads[*b], &db);
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads[*a], &gout);
                    accumulate(&mut grads[*b], &gout);
                }
                Op::Mul { a, b } => {
                    let da: Vec<f64> = gout
                        .iter()
                        .zip(&self.nodes[*b].values)
                        .map(|(g, y)| g * y)
                        .collect();
                    accumulate(&mut grads[*a], &da);
                    let db: Vec<f64> = gout
                        .iter()
                        .zip(&self.nodes[*a].values)
                        .map(|(g, x)| g * x)
                        .collect();
                    accumulate(&mut grads[*b], &db);
                }
                Op::Scale { a, c } => {
                    let da: Vec<f64> = gout.iter().map(|g| g * c).collect();
                    accumulate(&mut grads[*a], &da);
                }
                Op::Tanh { a } => {
                    let da: Vec<f64> = gout
                        .iter()
                        .zip(&self.nodes[idx].values)
                        .map(|(g, y)| g * (1.0 - y * y))
                        .collect();
                    accumulate(&mut grads[*a], &da);
                }
                Op::Softmax { a } => {
                    let y = &self.nodes[idx].values;
                    let dot: f64 = gout.iter().zip(y).map(|(g, yi)| g * yi).sum();
                    let da: Vec<f64> =
                        gout.iter().zip(y).map(|(g, yi)| yi * (g - dot)).collect();
                    accumulate(&mut grads[*a], &da);
                }
                Op::Log { a } => {
                    // Zero subgradient inside the clamped region.
                    let da: Vec<f64> = gout
                        .iter()
                        .zip(&self.nodes[*a].values)
                        .map(|(g, &x)| if x > LOG_FLOOR { g / x } else { 0.0 })
                        .collect();
                    accumulate(&mut grads[*a], &da);
                }
                Op::Sum { a } => {
                    let da = vec![gout[0]; self.nodes[*a].numel()];
                    accumulate(&mut grads[*a], &da);
                }
                Op::Index { a, i } => {
                    let mut da = vec![0.0; self.nodes[*a].numel()];
                    da[*i] = gout[0];
                    accumulate(&mut grads[*a], &da);
                }
                Op::Row { a, i } => {
                    let cols = self.nodes[*a].cols;
                    let mut da = vec![0.0; self.nodes[*a].numel()];
                    da[i * cols..(i + 1) * cols].copy_from_slice(&gout);
                    accumulate(&mut grads[*a], &da);
                }
                Op::ConcatRows { parts } => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.nodes[p].numel();
                        accumulate(&mut grads[p], &gout[offset..offset + len]);
                        offset += len;
                    }
                }
                Op::Detach => {}
            }
        }
        Ok(())
    }

    fn check_same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (ar, ac) = (self.nodes[a.0].rows, self.nodes[a.0].cols);
        let (br, bc) = (self.nodes[b.0].rows, self.nodes[b.0].cols);
        if ar != br || ac != bc {
            return Err(Error::DimensionMismatch {
                op,
                left: vec![ar, ac],
                right: vec![br, bc],
            });
        }
        Ok(())
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, delta: &[f64]) {
    match slot {
        Some(g) => {
            for (gi, di) in g.iter_mut().zip(delta) {
                *gi += di;
            }
        }
        None => *slot = Some(delta.to_vec()),
    }
}

/// Max-subtracted softmax over a slice.
pub fn softmax_stable(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}
