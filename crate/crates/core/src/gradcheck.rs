//! Central finite-difference checks for every hand-written backward pass.
//!
//! Each check draws a small random problem, evaluates a scalar loss
//! `L = Σ r · f(x)` with fixed random `r`, and compares the analytic gradient
//! against `(L(x + h) − L(x − h)) / 2h` with `h = 1e-5`. The error reported is
//! normwise: `‖g_analytic − g_numeric‖∞ / max(‖g_analytic‖∞, ‖g_numeric‖∞)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adis::{soft_separate, soft_separate_backward, DepthMap, IntervalPartition};
use crate::error::Result;
use crate::pipeline::DecoupledFusion;
use crate::tensor::{self, Conv2d, FeatureMap, Linear};
use crate::uncertainty::{
    apply_weight_map, apply_weight_map_backward, uncertainty_feature, uncertainty_feature_backward,
    UncertaintyHead,
};

pub const STEP: f64 = 1e-5;
pub const ELEMENTARY_TOLERANCE: f64 = 1e-5;
pub const COMPOSITE_TOLERANCE: f64 = 1e-4;
/// Factor applied to analytic gradients in the negative-control mode.
pub const CORRUPTION_FACTOR: f64 = 1.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Elementary,
    Composite,
}

impl Kind {
    pub fn tolerance(self) -> f64 {
        match self {
            Kind::Elementary => ELEMENTARY_TOLERANCE,
            Kind::Composite => COMPOSITE_TOLERANCE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub kind: Kind,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let inf = |v: &mut dyn Iterator<Item = f64>| v.fold(0.0_f64, |m, x| m.max(x.abs()));
    let diff = inf(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = inf(&mut analytic.iter().copied()).max(inf(&mut numeric.iter().copied()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn numeric_gradient(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + STEP;
            let plus = f(&probe);
            probe[i] = x[i] - STEP;
            let minus = f(&probe);
            probe[i] = x[i];
            (plus - minus) / (2.0 * STEP)
        })
        .collect()
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn random_map(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureMap {
    FeatureMap::new(c, h, w, uniform_vec(rng, c * h * w, -1.0, 1.0)).expect("non-empty")
}

fn map_like(shape: (usize, usize, usize), data: &[f64]) -> FeatureMap {
    FeatureMap::new(shape.0, shape.1, shape.2, data.to_vec()).expect("probe keeps the shape")
}

/// Splits `x` into consecutive pieces of the given lengths.
fn split<'a>(x: &'a [f64], lens: &[usize]) -> Vec<&'a [f64]> {
    let mut out = Vec::with_capacity(lens.len());
    let mut at = 0;
    for &n in lens {
        out.push(&x[at..at + n]);
        at += n;
    }
    out
}

fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

fn conv_with(template: &Conv2d, weight: &[f64], bias: &[f64]) -> Conv2d {
    let (kh, kw) = template.kernel_size();
    Conv2d::new(
        template.out_channels(),
        template.in_channels(),
        kh,
        kw,
        weight.to_vec(),
        bias.to_vec(),
        template.stride(),
        template.padding(),
    )
    .expect("probe keeps the shape")
}

type Loss = Box<dyn Fn(&[f64]) -> f64>;

/// A differentiable problem: parameters, loss, analytic gradient at `x`.
struct Problem {
    name: &'static str,
    kind: Kind,
    x: Vec<f64>,
    loss: Loss,
    grad: Vec<f64>,
}

fn conv2d(rng: &mut ChaCha8Rng, name: &'static str, c_in: usize, c_out: usize, stride: usize, padding: usize) -> Result<Problem> {
    let input = random_map(rng, c_in, 5, 5);
    let conv = Conv2d::random(c_out, c_in, 3, 3, stride, padding, rng)?;
    let out = conv.forward(&input)?;
    let r = random_map(rng, out.channels(), out.height(), out.width());
    let g = conv.backward(&input, &r)?;
    let x = concat(&[input.as_slice(), conv.weight(), conv.bias()]);
    let lens = [input.len(), conv.weight().len(), conv.bias().len()];
    let shape = input.shape();
    Ok(Problem {
        name,
        kind: Kind::Elementary,
        x,
        loss: Box::new(move |x| {
            let p = split(x, &lens);
            conv_with(&conv, p[1], p[2]).forward(&map_like(shape, p[0])).unwrap().dot(&r).unwrap()
        }),
        grad: concat(&[g.input.as_slice(), &g.weight, &g.bias]),
    })
}

fn linear(rng: &mut ChaCha8Rng) -> Result<Problem> {
    let (m, n) = (4, 6);
    let layer = Linear::random(m, n, rng)?;
    let input = uniform_vec(rng, n, -1.0, 1.0);
    let r = uniform_vec(rng, m, -1.0, 1.0);
    let g = layer.backward(&input, &r)?;
    let x = concat(&[&input, layer.weight(), layer.bias()]);
    Ok(Problem {
        name: "linear",
        kind: Kind::Elementary,
        x,
        loss: Box::new(move |x| {
            let p = split(x, &[n, m * n, m]);
            let l = Linear::new(m, n, p[1].to_vec(), p[2].to_vec()).unwrap();
            l.forward(p[0]).unwrap().iter().zip(&r).map(|(a, b)| a * b).sum()
        }),
        grad: concat(&[&g.input, &g.weight, &g.bias]),
    })
}

fn sigmoid(rng: &mut ChaCha8Rng) -> Result<Problem> {
    let input = random_map(rng, 2, 4, 5).map(|v| 3.0 * v);
    let r = random_map(rng, 2, 4, 5);
    let g = tensor::sigmoid_backward(&tensor::sigmoid(&input), &r)?;
    let shape = input.shape();
    Ok(Problem {
        name: "sigmoid",
        kind: Kind::Elementary,
        x: input.as_slice().to_vec(),
        loss: Box::new(move |x| tensor::sigmoid(&map_like(shape, x)).dot(&r).unwrap()),
        grad: g.into_vec(),
    })
}

fn softmax(rng: &mut ChaCha8Rng) -> Result<Problem> {
    let input = uniform_vec(rng, 7, -3.0, 3.0);
    let r = uniform_vec(rng, 7, -1.0, 1.0);
    let grad = tensor::softmax_backward(&tensor::softmax(&input), &r)?;
    Ok(Problem {
        name: "softmax",
        kind: Kind::Elementary,
        x: input,
        loss: Box::new(move |x| tensor::softmax(x).iter().zip(&r).map(|(a, b)| a * b).sum()),
        grad,
    })
}

fn upsample(rng: &mut ChaCha8Rng) -> Result<Problem> {
    let input = random_map(rng, 2, 3, 4);
    let target = (7, 9);
    let r = random_map(rng, 2, target.0, target.1);
    let g = tensor::bilinear_upsample_backward(input.shape(), &r)?;
    let shape = input.shape();
    Ok(Problem {
        name: "bilinear_upsample",
        kind: Kind::Elementary,
        x: input.as_slice().to_vec(),
        loss: Box::new(move |x| {
            tensor::bilinear_upsample(&map_like(shape, x), target).unwrap().dot(&r).unwrap()
        }),
        grad: g.into_vec(),
    })
}

fn add(rng: &mut ChaCha8Rng) -> Result<Problem> {
    let (a, b) = (random_map(rng, 2, 3, 4), random_map(rng, 2, 3, 4));
    let r = random_map(rng, 2, 3, 4);
    let shape = a.shape();
    let n = a.len();
    // d(a + b)/da = d(a + b)/db = identity
    let grad = concat(&[r.as_slice(), r.as_slice()]);
    Ok(Problem {
        name: "add",
        kind: Kind::Elementary,
        x: concat(&[a.as_slice(), b.as_slice()]),
        loss: Box::new(move |x| {
            let p = split(x, &[n, n]);
            tensor::add(&map_like(shape, p[0]), &map_like(shape, p[1])).unwrap().dot(&r).unwrap()
        }),
        grad,
    })
}

fn elementwise_mul(rng: &mut ChaCha8Rng) -> Result<Problem> {
    let (a, b) = (random_map(rng, 2, 3, 4), random_map(rng, 2, 3, 4));
    let r = random_map(rng, 2, 3, 4);
    let (ga, gb) = tensor::elementwise_mul_backward(&a, &b, &r)?;
    let shape = a.shape();
    let n = a.len();
    Ok(Problem {
        name: "elementwise_mul",
        kind: Kind::Elementary,
        x: concat(&[a.as_slice(), b.as_slice()]),
        loss: Box::new(move |x| {
            let p = split(x, &[n, n]);
            tensor::elementwise_mul(&map_like(shape, p[0]), &map_like(shape, p[1]))
                .unwrap()
                .dot(&r)
                .unwrap()
        }),
        grad: concat(&[ga.as_slice(), gb.as_slice()]),
    })
}

fn broadcast(rng: &mut ChaCha8Rng) -> Result<Problem> {
    let input = random_map(rng, 1, 3, 4);
    let r = random_map(rng, 3, 3, 4);
    let g = tensor::broadcast_channels_backward(&r);
    let shape = input.shape();
    Ok(Problem {
        name: "broadcast_channels",
        kind: Kind::Elementary,
        x: input.as_slice().to_vec(),
        loss: Box::new(move |x| {
            tensor::broadcast_channels(&map_like(shape, x), 3).unwrap().dot(&r).unwrap()
        }),
        grad: g.into_vec(),
    })
}

/// Gradient with respect to the fused feature and the 1×1 head parameters.
fn compute_uncertainty(rng: &mut ChaCha8Rng) -> Result<Problem> {
    let fused = random_map(rng, 3, 3, 4);
    let head = UncertaintyHead::random(3, rng)?;
    let target = (6, 9);
    let u = head.compute(&fused, target)?;
    let r = random_map(rng, 1, target.0, target.1);
    let g = head.backward(&fused, &u, &r)?;
    let conv = head.reduce().clone();
    let x = concat(&[fused.as_slice(), conv.weight(), conv.bias()]);
    let lens = [fused.len(), conv.weight().len(), conv.bias().len()];
    let shape = fused.shape();
    Ok(Problem {
        name: "compute_uncertainty",
        kind: Kind::Composite,
        x,
        loss: Box::new(move |x| {
            let p = split(x, &lens);
            let head = UncertaintyHead::new(conv_with(&conv, p[1], p[2])).unwrap();
            let u = head.compute(&map_like(shape, p[0]), target).unwrap();
            u.to_feature_map().dot(&r).unwrap()
        }),
        grad: concat(&[g.fused.as_slice(), &g.weight, &g.bias]),
    })
}

/// `conv(S ⊙ dup(U))` with respect to the stack, `U` and the conv parameters.
fn apply_uncertainty(rng: &mut ChaCha8Rng) -> Result<Problem> {
    let stack = random_map(rng, 3, 4, 6);
    let weights = random_map(rng, 1, 4, 6).map(|v| 0.5 + 0.4 * v);
    let conv = Conv2d::random(2, 3, 2, 2, 2, 0, rng)?;
    let out = apply_weight_map(&stack, &weights, &conv)?;
    let r = random_map(rng, out.channels(), out.height(), out.width());
    let g = apply_weight_map_backward(&stack, &weights, &conv, &r)?;
    let x = concat(&[stack.as_slice(), weights.as_slice(), conv.weight(), conv.bias()]);
    let lens = [stack.len(), weights.len(), conv.weight().len(), conv.bias().len()];
    let (ss, ws) = (stack.shape(), weights.shape());
    Ok(Problem {
        name: "apply_uncertainty",
        kind: Kind::Composite,
        x,
        loss: Box::new(move |x| {
            let p = split(x, &lens);
            apply_weight_map(&map_like(ss, p[0]), &map_like(ws, p[1]), &conv_with(&conv, p[2], p[3]))
                .unwrap()
                .dot(&r)
                .unwrap()
        }),
        grad: concat(&[g.stack.as_slice(), g.weights.as_slice(), &g.conv_weight, &g.conv_bias]),
    })
}

fn uncertainty_feature_check(rng: &mut ChaCha8Rng) -> Result<Problem> {
    let u = random_map(rng, 1, 4, 6).map(|v| 0.5 + 0.4 * v);
    let conv = Conv2d::random(3, 3, 2, 2, 2, 0, rng)?;
    let out = uncertainty_feature(&u, &conv)?;
    let r = random_map(rng, out.channels(), out.height(), out.width());
    let g = uncertainty_feature_backward(&u, &conv, &r)?;
    let shape = u.shape();
    Ok(Problem {
        name: "uncertainty_feature",
        kind: Kind::Composite,
        x: u.as_slice().to_vec(),
        loss: Box::new(move |x| uncertainty_feature(&map_like(shape, x), &conv).unwrap().dot(&r).unwrap()),
        grad: g.into_vec(),
    })
}

/// Logits → softmax widths → bounds → soft membership, end to end.
fn soft_separation(rng: &mut ChaCha8Rng) -> Result<Problem> {
    let (n, d_max, tau) = (4, 20.0, 0.8);
    let (h, w) = (4, 5);
    let depth: Vec<f64> = (0..h * w)
        .map(|_| if rng.random_bool(0.15) { 0.0 } else { rng.random_range(0.2..24.0) })
        .collect();
    let dep = DepthMap::from_depths(h, w, depth)?;
    let logits = uniform_vec(rng, n, -1.0, 1.0);
    let r = random_map(rng, n, h, w);

    let part = IntervalPartition::from_logits(&logits, d_max)?;
    let g_bounds = soft_separate_backward(&dep, &part, tau, &r)?;
    let g_widths = part.bound_grad_to_widths(&g_bounds)?;
    let g_probs: Vec<f64> = g_widths.iter().map(|g| g * d_max).collect();
    let grad = tensor::softmax_backward(&tensor::softmax(&logits), &g_probs)?;
    Ok(Problem {
        name: "soft_separate",
        kind: Kind::Composite,
        x: logits,
        loss: Box::new(move |x| {
            let part = IntervalPartition::from_logits(x, d_max).unwrap();
            soft_separate(&dep, &part, tau).unwrap().values.dot(&r).unwrap()
        }),
        grad,
    })
}

/// `F_I, F_D → F_ID → U → (F_SD, F_U) → (I_A, I_L)`, checked at the encoder outputs.
fn fuse_chain(rng: &mut ChaCha8Rng) -> Result<Problem> {
    let (c, n_d, s) = (3, 4, 2);
    let (h, w) = (3, 4);
    let (f_i, f_d) = (random_map(rng, c, h, w), random_map(rng, c, h, w));
    let stack = FeatureMap::new(n_d, h * s, w * s, uniform_vec(rng, n_d * h * s * w * s, 0.0, 3.0))?;
    let fusion = DecoupledFusion {
        u_head: UncertaintyHead::random(c, rng)?,
        sd_conv: Conv2d::random(c, n_d, s, s, s, 0, rng)?,
        u_conv: Conv2d::random(c, c, s, s, s, 0, rng)?,
    };
    let (ra, rl) = (random_map(rng, c, h, w), random_map(rng, c, h, w));
    let out = fusion.forward(&f_i, &f_d, &stack)?;
    let g = fusion.backward(&stack, &out, &ra, &rl)?;
    let shape = f_i.shape();
    let n = f_i.len();
    Ok(Problem {
        name: "fuse_chain",
        kind: Kind::Composite,
        x: concat(&[f_i.as_slice(), f_d.as_slice()]),
        loss: Box::new(move |x| {
            let p = split(x, &[n, n]);
            let o = fusion.forward(&map_like(shape, p[0]), &map_like(shape, p[1]), &stack).unwrap();
            o.i_a.dot(&ra).unwrap() + o.i_l.dot(&rl).unwrap()
        }),
        grad: concat(&[g.f_i.as_slice(), g.f_d.as_slice()]),
    })
}

type Builder = fn(&mut ChaCha8Rng) -> Result<Problem>;

const SUITE: &[Builder] = &[
    |rng| conv2d(rng, "conv2d", 1, 1, 1, 0),
    |rng| conv2d(rng, "conv2d_padded_strided", 2, 3, 2, 1),
    linear,
    sigmoid,
    softmax,
    upsample,
    add,
    elementwise_mul,
    broadcast,
    compute_uncertainty,
    apply_uncertainty,
    uncertainty_feature_check,
    soft_separation,
    fuse_chain,
];

fn evaluate(p: &Problem, corrupt: bool) -> f64 {
    let numeric = numeric_gradient(&p.x, &p.loss);
    let analytic: Vec<f64> = if corrupt {
        p.grad.iter().map(|g| g * CORRUPTION_FACTOR).collect()
    } else {
        p.grad.clone()
    };
    relative_error(&analytic, &numeric)
}

/// Runs every check once per seed and reports the worst error per check.
///
/// With `corrupt`, analytic gradients are scaled by [`CORRUPTION_FACTOR`]
/// before comparison, so every check is expected to fail.
pub fn run(seeds: &[u64], corrupt: bool) -> Result<Vec<CheckResult>> {
    let mut worst = vec![0.0_f64; SUITE.len()];
    let mut meta = Vec::with_capacity(SUITE.len());
    for &seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (k, build) in SUITE.iter().enumerate() {
            let p = build(&mut rng)?;
            let err = evaluate(&p, corrupt);
            worst[k] = if err.is_nan() { f64::INFINITY } else { worst[k].max(err) };
            if meta.len() == k {
                meta.push((p.name, p.kind));
            }
        }
    }
    Ok(meta
        .into_iter()
        .zip(worst)
        .map(|((name, kind), max_rel_error)| CheckResult {
            name,
            kind,
            max_rel_error,
            tolerance: kind.tolerance(),
            passed: max_rel_error < kind.tolerance(),
        })
        .collect())
}

/// Seeds `base, base + 1, …`.
pub fn seeds_from(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_add(i)).collect()
}
