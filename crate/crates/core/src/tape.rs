//! Reverse-mode differentiation over a closed set of ops.
//!
//! Every value on the tape is a flat `Vec<f64>`; complex tensors are stored
//! interleaved `(re, im)`. Nodes are appended in evaluation order, so the
//! reverse index order is a valid reverse topological order.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{shape_err, Error, Result};
use crate::fft::{Layout1d, Layout2d, RealFft, RealFft2d};
use crate::math;
use crate::prior::{envelope, envelope_dalpha};
use crate::svi::kl::{kl_lowrank_diag_grad, LowRankView};

/// Handle to a tape value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub enum Op {
    Leaf,
    Constant,
    Add,
    Sub,
    Mul,
    /// `scale * x + shift`.
    Affine { scale: f64, shift: f64 },
    Tanh,
    Softplus,
    Exp,
    Log,
    Square,
    Sum,
    /// `a[o, m, i] + b[m]`.
    BroadcastAdd { outer: usize, mid: usize, inner: usize },
    /// `(m x k) . (k x n)`, both row-major.
    MatMul { m: usize, k: usize, n: usize },
    Rfft { plan: Arc<RealFft>, batch: usize },
    Irfft { plan: Arc<RealFft>, batch: usize },
    Rfft2 { plan: Arc<RealFft2d>, batch: usize },
    Irfft2 { plan: Arc<RealFft2d>, batch: usize },
    /// Effective coordinates to an interleaved half-spectrum.
    Unpack1d { layout: Layout1d },
    /// `planes` stacked layouts to interleaved half-planes.
    Unpack2d { layout: Arc<Layout2d>, planes: usize },
    /// `Y[b, o, k] = sum_c K[o, c, k] X[b, c, k]` over complex bins.
    ChannelMix { cout: usize, cin: usize, bins: usize, batch: usize },
    /// Row-wise log-softmax over rows of width `cols`.
    LogSoftmax { cols: usize },
    /// `tau_i = weight_i * S(rho_i; sigma0_sq, alpha)` from a scalar `alpha`.
    PriorVariances { rho: Arc<[f64]>, weight: Arc<[f64]>, sigma0_sq: f64 },
    /// Closed-form KL; inputs `(mu, U, lambda, sigma, tau_sq)`.
    KlLowRank { dim: usize, rank: usize, eps: f64 },
}

impl Op {
    /// Looks up a parameter-free op by name.
    pub fn from_name(name: &str) -> Result<Op> {
        Ok(match name {
            "add" => Op::Add,
            "sub" => Op::Sub,
            "mul" => Op::Mul,
            "tanh" => Op::Tanh,
            "softplus" => Op::Softplus,
            "exp" => Op::Exp,
            "log" => Op::Log,
            "square" => Op::Square,
            "sum" => Op::Sum,
            other => return Err(Error::UnregisteredOp(String::from(other))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Affine { .. } => "affine",
            Op::Tanh => "tanh",
            Op::Softplus => "softplus",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Square => "square",
            Op::Sum => "sum",
            Op::BroadcastAdd { .. } => "broadcast_add",
            Op::MatMul { .. } => "matmul",
            Op::Rfft { .. } => "rfft",
            Op::Irfft { .. } => "irfft",
            Op::Rfft2 { .. } => "rfft2",
            Op::Irfft2 { .. } => "irfft2",
            Op::Unpack1d { .. } => "unpack1d",
            Op::Unpack2d { .. } => "unpack2d",
            Op::ChannelMix { .. } => "channel_mix",
            Op::LogSoftmax { .. } => "log_softmax",
            Op::PriorVariances { .. } => "prior_variances",
            Op::KlLowRank { .. } => "kl_lowrank",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Op::Leaf | Op::Constant => 0,
            Op::Add | Op::Sub | Op::Mul | Op::BroadcastAdd { .. } | Op::MatMul { .. } => 2,
            Op::ChannelMix { .. } => 2,
            Op::KlLowRank { .. } => 5,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    inputs: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
}

/// Single-owner computation tape.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// `None` when the variable does not influence the root or is constant.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient or zeros of length `len`.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v).map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }
}

fn to_complex(v: &[f64]) -> Vec<Complex64> {
    v.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

fn to_flat(c: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * c.len());
    for z in c {
        out.push(z.re);
        out.push(z.im);
    }
    out
}

fn expect_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(shape_err(format!("{what}: expected length {expected}, got {got}")));
    }
    Ok(())
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

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Trainable input.
    pub fn leaf(&mut self, value: Vec<f64>) -> Var {
        self.push(Op::Leaf, Vec::new(), value, true)
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push(Op::Constant, Vec::new(), value, false)
    }

    fn push(&mut self, op: Op, inputs: Vec<usize>, value: Vec<f64>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Evaluates `op` on `inputs` and appends the result.
    pub fn record(&mut self, op: Op, inputs: &[Var]) -> Result<Var> {
        if matches!(op, Op::Leaf | Op::Constant) {
            return Err(Error::InvalidArgument(
                "leaves and constants are created with leaf()/constant()".into(),
            ));
        }
        if inputs.len() != op.arity() {
            return Err(shape_err(format!(
                "{} takes {} inputs, got {}",
                op.name(),
                op.arity(),
                inputs.len()
            )));
        }
        for v in inputs {
            if v.0 >= self.nodes.len() {
                return Err(Error::OutOfRange {
                    index: v.0,
                    len: self.nodes.len(),
                });
            }
        }
        let value = {
            let vals: Vec<&[f64]> = inputs.iter().map(|v| self.nodes[v.0].value.as_slice()).collect();
            forward(&op, &vals)?
        };
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(op, inputs.iter().map(|v| v.0).collect(), value, requires_grad))
    }

    /// Records a parameter-free op looked up by name.
    pub fn record_named(&mut self, name: &str, inputs: &[Var]) -> Result<Var> {
        self.record(Op::from_name(name)?, inputs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Mul, &[a, b])
    }

    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        self.record(Op::Affine { scale, shift }, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.record(Op::Tanh, &[x])
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        self.record(Op::Softplus, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.record(Op::Sum, &[x])
    }

    pub fn matmul(&mut self, a: Var, b: Var, m: usize, k: usize, n: usize) -> Result<Var> {
        self.record(Op::MatMul { m, k, n }, &[a, b])
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_len = self.nodes.get(root.0).map(|n| n.value.len()).ok_or(Error::OutOfRange {
            index: root.0,
            len: self.nodes.len(),
        })?;
        if root_len != 1 {
            return Err(Error::NonScalarRoot(root_len));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || node.inputs.is_empty() {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let vals: Vec<&[f64]> = node.inputs.iter().map(|&i| self.nodes[i].value.as_slice()).collect();
            let wanted: Vec<bool> = node.inputs.iter().map(|&i| self.nodes[i].requires_grad).collect();
            let input_grads = vjp(&node.op, &vals, &node.value, &g, &wanted)?;
            for ((&i, gi), w) in node.inputs.iter().zip(input_grads).zip(wanted) {
                if !w {
                    continue;
                }
                let Some(gi) = gi else { continue };
                match &mut grads[i] {
                    Some(acc) => acc.iter_mut().zip(&gi).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(gi),
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn forward(op: &Op, x: &[&[f64]]) -> Result<Vec<f64>> {
    let unary = |f: fn(f64) -> f64| x[0].iter().map(|&v| f(v)).collect::<Vec<f64>>();
    Ok(match op {
        Op::Leaf | Op::Constant => unreachable!(),
        Op::Add | Op::Sub | Op::Mul => {
            expect_len(op.name(), x[1].len(), x[0].len())?;
            let f = match op {
                Op::Add => |a: f64, b: f64| a + b,
                Op::Sub => |a: f64, b: f64| a - b,
                _ => |a: f64, b: f64| a * b,
            };
            x[0].iter().zip(x[1]).map(|(&a, &b)| f(a, b)).collect()
        }
        Op::Affine { scale, shift } => x[0].iter().map(|&v| scale * v + shift).collect(),
        Op::Tanh => unary(math::tanh),
        Op::Softplus => unary(math::softplus),
        Op::Exp => unary(math::exp),
        Op::Log => unary(math::ln),
        Op::Square => x[0].iter().map(|&v| v * v).collect(),
        Op::Sum => vec![x[0].iter().sum()],
        Op::BroadcastAdd { outer, mid, inner } => {
            expect_len("broadcast_add input", x[0].len(), outer * mid * inner)?;
            expect_len("broadcast_add bias", x[1].len(), *mid)?;
            let mut out = x[0].to_vec();
            for (i, v) in out.iter_mut().enumerate() {
                *v += x[1][(i / inner) % mid];
            }
            out
        }
        Op::MatMul { m, k, n } => {
            expect_len("matmul lhs", x[0].len(), m * k)?;
            expect_len("matmul rhs", x[1].len(), k * n)?;
            matmul(x[0], x[1], *m, *k, *n)
        }
        Op::Rfft { plan, batch } => {
            let (n, kh) = (plan.len(), plan.half_len());
            expect_len("rfft", x[0].len(), batch * n)?;
            let mut out = vec![Complex64::new(0.0, 0.0); batch * kh];
            for b in 0..*batch {
                plan.forward_into(&x[0][b * n..(b + 1) * n], &mut out[b * kh..(b + 1) * kh]);
            }
            to_flat(&out)
        }
        Op::Irfft { plan, batch } => {
            let (n, kh) = (plan.len(), plan.half_len());
            expect_len("irfft", x[0].len(), 2 * batch * kh)?;
            let z = to_complex(x[0]);
            let mut out = vec![0.0; batch * n];
            for b in 0..*batch {
                plan.inverse_into(&z[b * kh..(b + 1) * kh], &mut out[b * n..(b + 1) * n]);
            }
            out
        }
        Op::Rfft2 { plan, batch } => {
            let (hw, bins) = (plan.rows() * plan.cols(), plan.bins());
            expect_len("rfft2", x[0].len(), batch * hw)?;
            let mut out = vec![Complex64::new(0.0, 0.0); batch * bins];
            for b in 0..*batch {
                plan.forward_raw(&x[0][b * hw..(b + 1) * hw], &mut out[b * bins..(b + 1) * bins]);
            }
            to_flat(&out)
        }
        Op::Irfft2 { plan, batch } => {
            let (hw, bins) = (plan.rows() * plan.cols(), plan.bins());
            expect_len("irfft2", x[0].len(), 2 * batch * bins)?;
            let z = to_complex(x[0]);
            let mut out = vec![0.0; batch * hw];
            for b in 0..*batch {
                plan.inverse_raw(&z[b * bins..(b + 1) * bins], &mut out[b * hw..(b + 1) * hw]);
            }
            out
        }
        Op::Unpack1d { layout } => {
            expect_len("unpack1d", x[0].len(), layout.d_eff())?;
            let mut out = vec![Complex64::new(0.0, 0.0); layout.half_len()];
            layout.unpack_into(x[0], &mut out);
            to_flat(&out)
        }
        Op::Unpack2d { layout, planes } => {
            let (d, bins) = (layout.d_eff(), layout.bins());
            expect_len("unpack2d", x[0].len(), planes * d)?;
            let mut out = vec![Complex64::new(0.0, 0.0); planes * bins];
            for p in 0..*planes {
                layout.unpack_into(&x[0][p * d..(p + 1) * d], &mut out[p * bins..(p + 1) * bins]);
            }
            to_flat(&out)
        }
        Op::ChannelMix { cout, cin, bins, batch } => {
            expect_len("channel_mix kernel", x[0].len(), 2 * cout * cin * bins)?;
            expect_len("channel_mix input", x[1].len(), 2 * batch * cin * bins)?;
            let (k, xs) = (to_complex(x[0]), to_complex(x[1]));
            let mut y = vec![Complex64::new(0.0, 0.0); batch * cout * bins];
            for b in 0..*batch {
                for o in 0..*cout {
                    let yo = &mut y[(b * cout + o) * bins..(b * cout + o + 1) * bins];
                    for c in 0..*cin {
                        let kk = &k[(o * cin + c) * bins..(o * cin + c + 1) * bins];
                        let xx = &xs[(b * cin + c) * bins..(b * cin + c + 1) * bins];
                        for ((yv, kv), xv) in yo.iter_mut().zip(kk).zip(xx) {
                            *yv += kv * xv;
                        }
                    }
                }
            }
            to_flat(&y)
        }
        Op::LogSoftmax { cols } => {
            if *cols == 0 || x[0].len() % cols != 0 {
                return Err(shape_err(format!(
                    "log_softmax: length {} not a multiple of {cols}",
                    x[0].len()
                )));
            }
            let mut out = x[0].to_vec();
            for row in out.chunks_exact_mut(*cols) {
                let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = mx + math::ln(row.iter().map(|&v| math::exp(v - mx)).sum::<f64>());
                row.iter_mut().for_each(|v| *v -= lse);
            }
            out
        }
        Op::PriorVariances { rho, weight, sigma0_sq } => {
            expect_len("prior_variances alpha", x[0].len(), 1)?;
            expect_len("prior_variances weight", weight.len(), rho.len())?;
            let alpha = x[0][0];
            rho.iter()
                .zip(weight.iter())
                .map(|(&r, &w)| w * envelope(*sigma0_sq, alpha, r))
                .collect()
        }
        Op::KlLowRank { dim, rank, eps } => {
            let view = kl_view(x, *dim, *rank, *eps)?;
            vec![crate::svi::kl::kl_lowrank_diag(&view, x[4])?]
        }
    })
}

fn kl_view<'a>(x: &[&'a [f64]], dim: usize, rank: usize, eps: f64) -> Result<LowRankView<'a>> {
    expect_len("kl mu", x[0].len(), dim)?;
    expect_len("kl U", x[1].len(), dim * rank)?;
    expect_len("kl lambda", x[2].len(), rank)?;
    expect_len("kl sigma", x[3].len(), dim)?;
    expect_len("kl tau", x[4].len(), dim)?;
    Ok(LowRankView {
        mu: x[0],
        u: x[1],
        lambda: x[2],
        sigma: x[3],
        eps,
    })
}

fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// `c_k = 1` for self-conjugate bins of a length-`n` axis, else 2.
fn hermitian_weight(k: usize, n: usize) -> f64 {
    if k == 0 || 2 * k == n {
        1.0
    } else {
        2.0
    }
}

fn vjp(
    op: &Op,
    x: &[&[f64]],
    y: &[f64],
    g: &[f64],
    wanted: &[bool],
) -> Result<Vec<Option<Vec<f64>>>> {
    let one = |v: Vec<f64>| vec![Some(v)];
    let want = |i: usize| wanted[i];
    Ok(match op {
        Op::Leaf | Op::Constant => Vec::new(),
        Op::Add => vec![Some(g.to_vec()), Some(g.to_vec())],
        Op::Sub => vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())],
        Op::Mul => vec![
            want(0).then(|| g.iter().zip(x[1]).map(|(a, b)| a * b).collect()),
            want(1).then(|| g.iter().zip(x[0]).map(|(a, b)| a * b).collect()),
        ],
        Op::Affine { scale, .. } => one(g.iter().map(|v| v * scale).collect()),
        Op::Tanh => one(g.iter().zip(y).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect()),
        Op::Softplus => one(g.iter().zip(x[0]).map(|(gv, &xv)| gv * math::sigmoid(xv)).collect()),
        Op::Exp => one(g.iter().zip(y).map(|(gv, yv)| gv * yv).collect()),
        Op::Log => one(g.iter().zip(x[0]).map(|(gv, xv)| gv / xv).collect()),
        Op::Square => one(g.iter().zip(x[0]).map(|(gv, xv)| 2.0 * gv * xv).collect()),
        Op::Sum => one(vec![g[0]; x[0].len()]),
        Op::BroadcastAdd { mid, inner, .. } => {
            let gb = want(1).then(|| {
                let mut gb = vec![0.0; *mid];
                for (i, gv) in g.iter().enumerate() {
                    gb[(i / inner) % mid] += gv;
                }
                gb
            });
            vec![want(0).then(|| g.to_vec()), gb]
        }
        Op::MatMul { m, k, n } => {
            let ga = want(0).then(|| {
                let mut ga = vec![0.0; m * k];
                for i in 0..*m {
                    for p in 0..*k {
                        ga[i * k + p] = (0..*n).map(|j| g[i * n + j] * x[1][p * n + j]).sum();
                    }
                }
                ga
            });
            let gb = want(1).then(|| {
                let mut gb = vec![0.0; k * n];
                for i in 0..*m {
                    for p in 0..*k {
                        let aip = x[0][i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for j in 0..*n {
                            gb[p * n + j] += aip * g[i * n + j];
                        }
                    }
                }
                gb
            });
            vec![ga, gb]
        }
        Op::Rfft { plan, batch } => {
            let (n, kh) = (plan.len(), plan.half_len());
            let mut gz = to_complex(g);
            for (i, z) in gz.iter_mut().enumerate() {
                *z *= n as f64 / hermitian_weight(i % kh, n);
            }
            let mut gx = vec![0.0; batch * n];
            for b in 0..*batch {
                plan.inverse_into(&gz[b * kh..(b + 1) * kh], &mut gx[b * n..(b + 1) * n]);
            }
            one(gx)
        }
        Op::Irfft { plan, batch } => {
            let (n, kh) = (plan.len(), plan.half_len());
            let mut gz = vec![Complex64::new(0.0, 0.0); batch * kh];
            for b in 0..*batch {
                plan.forward_into(&g[b * n..(b + 1) * n], &mut gz[b * kh..(b + 1) * kh]);
            }
            for (i, z) in gz.iter_mut().enumerate() {
                *z *= hermitian_weight(i % kh, n) / n as f64;
            }
            one(to_flat(&gz))
        }
        Op::Rfft2 { plan, batch } => {
            let (hw, bins, wh, w) = (plan.rows() * plan.cols(), plan.bins(), plan.half_cols(), plan.cols());
            let mut gz = to_complex(g);
            for (i, z) in gz.iter_mut().enumerate() {
                *z *= hw as f64 / hermitian_weight(i % wh, w);
            }
            let mut gx = vec![0.0; batch * hw];
            for b in 0..*batch {
                plan.inverse_raw(&gz[b * bins..(b + 1) * bins], &mut gx[b * hw..(b + 1) * hw]);
            }
            one(gx)
        }
        Op::Irfft2 { plan, batch } => {
            let (hw, bins, wh, w) = (plan.rows() * plan.cols(), plan.bins(), plan.half_cols(), plan.cols());
            let mut gz = vec![Complex64::new(0.0, 0.0); batch * bins];
            for b in 0..*batch {
                plan.forward_raw(&g[b * hw..(b + 1) * hw], &mut gz[b * bins..(b + 1) * bins]);
            }
            for (i, z) in gz.iter_mut().enumerate() {
                *z *= hermitian_weight(i % wh, w) / hw as f64;
            }
            one(to_flat(&gz))
        }
        Op::Unpack1d { layout } => {
            let mut ga = vec![0.0; layout.d_eff()];
            layout.unpack_adjoint(&to_complex(g), &mut ga);
            one(ga)
        }
        Op::Unpack2d { layout, planes } => {
            let (d, bins) = (layout.d_eff(), layout.bins());
            let gz = to_complex(g);
            let mut ga = vec![0.0; planes * d];
            for p in 0..*planes {
                layout.unpack_adjoint(&gz[p * bins..(p + 1) * bins], &mut ga[p * d..(p + 1) * d]);
            }
            one(ga)
        }
        Op::ChannelMix { cout, cin, bins, batch } => {
            let (k, xs, gy) = (to_complex(x[0]), to_complex(x[1]), to_complex(g));
            let mut gk = vec![Complex64::new(0.0, 0.0); k.len()];
            let mut gx = vec![Complex64::new(0.0, 0.0); xs.len()];
            for b in 0..*batch {
                for o in 0..*cout {
                    let go = &gy[(b * cout + o) * bins..(b * cout + o + 1) * bins];
                    for c in 0..*cin {
                        let kb = (o * cin + c) * bins;
                        let xb = (b * cin + c) * bins;
                        for q in 0..*bins {
                            gk[kb + q] += go[q] * xs[xb + q].conj();
                            gx[xb + q] += go[q] * k[kb + q].conj();
                        }
                    }
                }
            }
            vec![want(0).then(|| to_flat(&gk)), want(1).then(|| to_flat(&gx))]
        }
        Op::LogSoftmax { cols } => {
            let mut gx = vec![0.0; g.len()];
            for ((gr, yr), out) in g.chunks_exact(*cols).zip(y.chunks_exact(*cols)).zip(gx.chunks_exact_mut(*cols)) {
                let s: f64 = gr.iter().sum();
                for ((o, gv), yv) in out.iter_mut().zip(gr).zip(yr) {
                    *o = gv - math::exp(*yv) * s;
                }
            }
            one(gx)
        }
        Op::PriorVariances { rho, weight, sigma0_sq } => {
            let alpha = x[0][0];
            let d: f64 = g
                .iter()
                .zip(rho.iter())
                .zip(weight.iter())
                .map(|((gv, &r), &w)| gv * w * envelope_dalpha(*sigma0_sq, alpha, r))
                .sum();
            one(vec![d])
        }
        Op::KlLowRank { dim, rank, eps } => {
            let view = kl_view(x, *dim, *rank, *eps)?;
            let (_, kg) = kl_lowrank_diag_grad(&view, x[4])?;
            let s = g[0];
            let scale = |v: Vec<f64>| v.into_iter().map(|e| e * s).collect::<Vec<f64>>();
            vec![
                Some(scale(kg.mu)),
                Some(scale(kg.u)),
                Some(scale(kg.lambda)),
                Some(scale(kg.sigma)),
                Some(scale(kg.tau_sq)),
            ]
        }
    })
}
