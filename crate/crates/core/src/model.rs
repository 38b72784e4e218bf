//! The small dual-branch regression model.
//!
//! Structure: a 2-layer tanh trunk on the shared features `r`, a depth-L
//! tanh branch on the modality features `m`, and a linear head mapping the
//! concatenated features to four box parameters. The parameters are squashed
//! into a valid box, so every forward pass yields positive extents.
//!
//! Loss is mean squared error in pre-squash parameter space; gradients are
//! exact reverse-mode derivatives of the batch-mean loss.

use crate::error::{Error, Result};
use crate::metrics::BBox;
use crate::rng::Rng;
use serde::{Deserialize, Serialize};

/// Frame geometry of the synthetic world.
pub const FRAME_SIZE: f64 = 100.0;
const CENTER_MID: f64 = 50.0;
const CENTER_SPAN: f64 = 30.0;
const SIZE_MID: f64 = 25.0;
const SIZE_SPAN: f64 = 15.0;

/// Squash four unconstrained parameters into a valid box: center in
/// (20, 80)^2, width/height in (10, 40).
pub fn squash(params: [f64; 4]) -> BBox {
    let cx = CENTER_MID + CENTER_SPAN * params[0].tanh();
    let cy = CENTER_MID + CENTER_SPAN * params[1].tanh();
    let w = SIZE_MID + SIZE_SPAN * params[2].tanh();
    let h = SIZE_MID + SIZE_SPAN * params[3].tanh();
    BBox::new(cx - w / 2.0, cy - h / 2.0, w, h).expect("squashed boxes are always valid")
}

/// Inverse of [`squash`]. Boxes outside the squash range are clamped to the
/// edge of the representable region, keeping the result finite.
pub fn unsquash(b: &BBox) -> [f64; 4] {
    let (cx, cy) = b.center();
    let clamp = |t: f64| t.clamp(-1.0 + 1e-12, 1.0 - 1e-12);
    [
        clamp((cx - CENTER_MID) / CENTER_SPAN).atanh(),
        clamp((cy - CENTER_MID) / CENTER_SPAN).atanh(),
        clamp((b.w() - SIZE_MID) / SIZE_SPAN).atanh(),
        clamp((b.h() - SIZE_MID) / SIZE_SPAN).atanh(),
    ]
}

/// Model dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub r_dim: usize,
    pub m_dim: usize,
    pub width: usize,
    /// Dense layers in the modality branch (1..=6 in the capacity sweep).
    pub branch_depth: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            r_dim: 8,
            m_dim: 8,
            width: 16,
            branch_depth: 3,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r_dim == 0 || self.m_dim == 0 || self.width == 0 {
            return Err(Error::Invalid("model dimensions must be positive".into()));
        }
        if self.branch_depth == 0 {
            return Err(Error::Invalid("branch_depth must be >= 1".into()));
        }
        Ok(())
    }
}

/// A dense layer: row-major weights (out x in) plus bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl DenseLayer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
        }
    }

    fn init(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let scale = 1.0 / (in_dim as f64).sqrt();
        let mut layer = DenseLayer::zeros(in_dim, out_dim);
        for w in &mut layer.w {
            *w = rng.next_normal() * scale;
        }
        layer
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(input.len(), self.in_dim);
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(input) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }

    fn len(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// All parameters of the dual-branch model. Doubles as the gradient
/// container, which shares the exact same layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub trunk: Vec<DenseLayer>,
    pub branch: Vec<DenseLayer>,
    pub head: DenseLayer,
}

/// Gradients use the same layout as the parameters.
pub type Gradients = ModelParams;

impl ModelParams {
    /// Random initialization from a dedicated stream.
    pub fn init(cfg: &ModelConfig, rng: &mut Rng) -> Self {
        let w = cfg.width;
        let trunk = vec![
            DenseLayer::init(cfg.r_dim, w, rng),
            DenseLayer::init(w, w, rng),
        ];
        let mut branch = vec![DenseLayer::init(cfg.m_dim, w, rng)];
        for _ in 1..cfg.branch_depth {
            branch.push(DenseLayer::init(w, w, rng));
        }
        let head = DenseLayer::init(2 * w, 4, rng);
        ModelParams { trunk, branch, head }
    }

    /// All-zero parameters with the same shapes.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let w = cfg.width;
        let trunk = vec![DenseLayer::zeros(cfg.r_dim, w), DenseLayer::zeros(w, w)];
        let mut branch = vec![DenseLayer::zeros(cfg.m_dim, w)];
        for _ in 1..cfg.branch_depth {
            branch.push(DenseLayer::zeros(w, w));
        }
        let head = DenseLayer::zeros(2 * w, 4);
        ModelParams { trunk, branch, head }
    }

    fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.trunk
            .iter()
            .chain(self.branch.iter())
            .chain(std::iter::once(&self.head))
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|l| l.len()).sum()
    }

    /// Flatten every parameter into one vector (trunk, branch, head; weights
    /// before bias within each layer).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    /// Rebuild from a flat vector produced by [`ModelParams::flatten`].
    pub fn from_flat(cfg: &ModelConfig, flat: &[f64]) -> Result<Self> {
        let mut params = ModelParams::zeros(cfg);
        if flat.len() != params.param_count() {
            return Err(Error::Invalid(format!(
                "flat parameter vector has {} entries, model needs {}",
                flat.len(),
                params.param_count()
            )));
        }
        let mut offset = 0;
        params.visit_mut(|slice| {
            slice.copy_from_slice(&flat[offset..offset + slice.len()]);
            offset += slice.len();
        });
        Ok(params)
    }

    fn visit_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        for l in self
            .trunk
            .iter_mut()
            .chain(self.branch.iter_mut())
            .chain(std::iter::once(&mut self.head))
        {
            f(&mut l.w);
            f(&mut l.b);
        }
    }

    fn is_finite(&self) -> bool {
        self.layers()
            .all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()))
    }
}

fn tanh_inplace(v: &mut [f64]) {
    for x in v {
        *x = x.tanh();
    }
}

/// Per-layer activations kept for the backward pass.
struct Activations {
    /// trunk activations after tanh, one per trunk layer
    trunk: Vec<Vec<f64>>,
    /// branch activations after tanh, one per branch layer
    branch: Vec<Vec<f64>>,
    /// head output (pre-squash box parameters)
    params: [f64; 4],
}

fn forward_cached(model: &ModelParams, r: &[f64], m: &[f64]) -> Activations {
    let mut trunk = Vec::with_capacity(model.trunk.len());
    let mut cur = r.to_vec();
    let mut next = Vec::new();
    for layer in &model.trunk {
        layer.apply(&cur, &mut next);
        tanh_inplace(&mut next);
        trunk.push(next.clone());
        std::mem::swap(&mut cur, &mut next);
    }
    let trunk_out = cur;

    let mut branch = Vec::with_capacity(model.branch.len());
    let mut cur = m.to_vec();
    for layer in &model.branch {
        layer.apply(&cur, &mut next);
        tanh_inplace(&mut next);
        branch.push(next.clone());
        std::mem::swap(&mut cur, &mut next);
    }
    let branch_out = cur;

    let mut concat = Vec::with_capacity(trunk_out.len() + branch_out.len());
    concat.extend_from_slice(&trunk_out);
    concat.extend_from_slice(&branch_out);
    let mut head_out = Vec::new();
    model.head.apply(&concat, &mut head_out);
    let params = [head_out[0], head_out[1], head_out[2], head_out[3]];

    Activations {
        trunk,
        branch,
        params,
    }
}

/// Pre-squash box parameters for one input pair.
pub fn forward_params(model: &ModelParams, r: &[f64], m: &[f64]) -> [f64; 4] {
    forward_cached(model, r, m).params
}

/// Predicted box for one input pair.
pub fn forward(model: &ModelParams, r: &[f64], m: &[f64]) -> BBox {
    squash(forward_params(model, r, m))
}

/// MSE over the four pre-squash parameters.
pub fn loss(pred: &[f64; 4], target: &[f64; 4]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / 4.0
}

/// One training example: input pair and pre-squash target parameters.
#[derive(Clone, Debug)]
pub struct TrainExample<'a> {
    pub r: &'a [f64],
    pub m: &'a [f64],
    pub target: [f64; 4],
}

/// Batch-mean loss and its exact gradient with respect to every parameter.
pub fn backward(model: &ModelParams, batch: &[TrainExample<'_>]) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("backward needs a nonempty batch".into()));
    }
    let mut grads = ModelParams {
        trunk: model
            .trunk
            .iter()
            .map(|l| DenseLayer::zeros(l.in_dim, l.out_dim))
            .collect(),
        branch: model
            .branch
            .iter()
            .map(|l| DenseLayer::zeros(l.in_dim, l.out_dim))
            .collect(),
        head: DenseLayer::zeros(model.head.in_dim, model.head.out_dim),
    };
    let inv_batch = 1.0 / batch.len() as f64;
    let mut total_loss = 0.0;

    for ex in batch {
        let acts = forward_cached(model, ex.r, ex.m);
        total_loss += loss(&acts.params, &ex.target) * inv_batch;

        // dL/dp for the batch-mean of per-example MSE over 4 params
        let dparams: Vec<f64> = acts
            .params
            .iter()
            .zip(&ex.target)
            .map(|(p, t)| (p - t) * inv_batch / 2.0)
            .collect();

        let trunk_out = acts.trunk.last().expect("trunk has layers");
        let branch_out = acts.branch.last().expect("branch has layers");
        let width = trunk_out.len();

        // head: p = H [trunk_out; branch_out] + b
        let mut dconcat = vec![0.0; model.head.in_dim];
        for (o, &dp) in dparams.iter().enumerate() {
            grads.head.b[o] += dp;
            let wrow = &model.head.w[o * model.head.in_dim..(o + 1) * model.head.in_dim];
            let grow =
                &mut grads.head.w[o * model.head.in_dim..(o + 1) * model.head.in_dim];
            for i in 0..width {
                grow[i] += dp * trunk_out[i];
                dconcat[i] += dp * wrow[i];
            }
            for i in 0..branch_out.len() {
                grow[width + i] += dp * branch_out[i];
                dconcat[width + i] += dp * wrow[width + i];
            }
        }

        backprop_stack(
            &model.trunk,
            &mut grads.trunk,
            &acts.trunk,
            ex.r,
            &dconcat[..width],
        );
        backprop_stack(
            &model.branch,
            &mut grads.branch,
            &acts.branch,
            ex.m,
            &dconcat[width..],
        );
    }

    Ok((total_loss, grads))
}

/// Backpropagate through a stack of dense+tanh layers.
///
/// `acts[k]` is the post-tanh output of layer `k`; `input` feeds layer 0;
/// `dout` is the loss gradient at the stack output.
fn backprop_stack(
    layers: &[DenseLayer],
    grads: &mut [DenseLayer],
    acts: &[Vec<f64>],
    input: &[f64],
    dout: &[f64],
) {
    let mut da = dout.to_vec();
    for k in (0..layers.len()).rev() {
        let layer = &layers[k];
        let act = &acts[k];
        // through tanh: dz = da * (1 - a^2)
        let dz: Vec<f64> = da
            .iter()
            .zip(act)
            .map(|(d, a)| d * (1.0 - a * a))
            .collect();
        let below: &[f64] = if k == 0 { input } else { &acts[k - 1] };
        let mut dbelow = vec![0.0; layer.in_dim];
        let grad = &mut grads[k];
        for (o, &dzo) in dz.iter().enumerate() {
            grad.b[o] += dzo;
            let wrow = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
            let grow = &mut grad.w[o * layer.in_dim..(o + 1) * layer.in_dim];
            for i in 0..layer.in_dim {
                grow[i] += dzo * below[i];
                dbelow[i] += dzo * wrow[i];
            }
        }
        da = dbelow;
    }
}

/// Momentum SGD. Velocity persists across steps; a fresh optimizer starts
/// each training stage.
#[derive(Clone, Debug)]
pub struct SgdOptimizer {
    lr: f64,
    momentum: f64,
    velocity: Option<ModelParams>,
}

impl SgdOptimizer {
    pub fn new(lr: f64, momentum: f64) -> Self {
        SgdOptimizer {
            lr,
            momentum,
            velocity: None,
        }
    }

    /// theta <- theta - lr * v with v <- momentum * v + grad.
    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        let velocity = self
            .velocity
            .get_or_insert_with(|| {
                let mut v = grads.clone();
                v.visit_mut(|s| s.iter_mut().for_each(|x| *x = 0.0));
                v
            });

        let mut g_layers: Vec<&[f64]> = Vec::new();
        for l in grads.layers() {
            g_layers.push(&l.w);
            g_layers.push(&l.b);
        }
        let mut idx = 0;
        let momentum = self.momentum;
        velocity.visit_mut(|v| {
            let g = g_layers[idx];
            for (vi, gi) in v.iter_mut().zip(g) {
                *vi = momentum * *vi + gi;
            }
            idx += 1;
        });

        let mut v_layers: Vec<Vec<f64>> = Vec::new();
        for l in velocity.layers() {
            v_layers.push(l.w.clone());
            v_layers.push(l.b.clone());
        }
        let mut idx = 0;
        let lr = self.lr;
        params.visit_mut(|p| {
            let v = &v_layers[idx];
            for (pi, vi) in p.iter_mut().zip(v) {
                *pi -= lr * vi;
            }
            idx += 1;
        });

        if !params.is_finite() {
            return Err(Error::Numeric("parameters diverged to non-finite values".into()));
        }
        Ok(())
    }
}

/// Central finite difference of a scalar function.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro_cfg() -> ModelConfig {
        ModelConfig {
            r_dim: 3,
            m_dim: 2,
            width: 4,
            branch_depth: 2,
        }
    }

    #[test]
    fn squash_produces_valid_boxes() {
        let mut rng = Rng::new(1);
        for _ in 0..200 {
            let p = [
                rng.next_normal() * 3.0,
                rng.next_normal() * 3.0,
                rng.next_normal() * 3.0,
                rng.next_normal() * 3.0,
            ];
            let b = squash(p);
            let (cx, cy) = b.center();
            assert!((20.0..=80.0).contains(&cx));
            assert!((20.0..=80.0).contains(&cy));
            assert!((10.0..=40.0).contains(&b.w()));
            assert!((10.0..=40.0).contains(&b.h()));
            assert!(b.x() >= 0.0 && b.x() + b.w() <= FRAME_SIZE);
            assert!(b.y() >= 0.0 && b.y() + b.h() <= FRAME_SIZE);
        }
    }

    #[test]
    fn unsquash_inverts_squash() {
        let mut rng = Rng::new(2);
        for _ in 0..100 {
            let p = [
                rng.next_normal(),
                rng.next_normal(),
                rng.next_normal(),
                rng.next_normal(),
            ];
            let q = unsquash(&squash(p));
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_model_predicts_center_box() {
        let cfg = micro_cfg();
        let model = ModelParams::zeros(&cfg);
        let b = forward(&model, &[1.0, -2.0, 0.5], &[0.3, 0.7]);
        let expected = squash([0.0; 4]);
        assert_eq!(b, expected);
        let (cx, cy) = b.center();
        assert_eq!((cx, cy), (50.0, 50.0));
        assert_eq!((b.w(), b.h()), (25.0, 25.0));
    }

    #[test]
    fn forward_always_valid_boxes() {
        let cfg = micro_cfg();
        let mut rng = Rng::new(3);
        let model = ModelParams::init(&cfg, &mut rng);
        for _ in 0..100 {
            let r: Vec<f64> = (0..cfg.r_dim).map(|_| rng.next_normal() * 5.0).collect();
            let m: Vec<f64> = (0..cfg.m_dim).map(|_| rng.next_normal() * 5.0).collect();
            let b = forward(&model, &r, &m);
            assert!(b.w() > 0.0 && b.h() > 0.0);
        }
    }

    #[test]
    fn forward_matches_hand_computation() {
        // one hidden unit everywhere: trunk tanh(tanh(r*w)), branch tanh(m*v),
        // head sums the two
        let cfg = ModelConfig {
            r_dim: 1,
            m_dim: 1,
            width: 1,
            branch_depth: 1,
        };
        let mut model = ModelParams::zeros(&cfg);
        model.trunk[0].w[0] = 0.5;
        model.trunk[0].b[0] = 0.1;
        model.trunk[1].w[0] = -0.7;
        model.trunk[1].b[0] = 0.2;
        model.branch[0].w[0] = 0.3;
        model.branch[0].b[0] = -0.4;
        for o in 0..4 {
            model.head.w[o * 2] = 0.6 + o as f64 * 0.1;
            model.head.w[o * 2 + 1] = -0.5;
            model.head.b[o] = 0.05 * o as f64;
        }
        let r = 0.8_f64;
        let m = -1.2_f64;
        let t1 = (0.5 * r + 0.1).tanh();
        let t2 = (-0.7 * t1 + 0.2).tanh();
        let x1 = (0.3 * m - 0.4).tanh();
        let pred = forward_params(&model, &[r], &[m]);
        for o in 0..4 {
            let expected = (0.6 + o as f64 * 0.1) * t2 - 0.5 * x1 + 0.05 * o as f64;
            assert!((pred[o] - expected).abs() < 1e-12, "param {o}");
        }
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]), 0.0);
        assert_eq!(loss(&[0.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]), 0.25);
        let mut rng = Rng::new(4);
        for _ in 0..20 {
            let a = [
                rng.next_normal(),
                rng.next_normal(),
                rng.next_normal(),
                rng.next_normal(),
            ];
            let b = [
                rng.next_normal(),
                rng.next_normal(),
                rng.next_normal(),
                rng.next_normal(),
            ];
            let direct: f64 =
                a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / 4.0;
            assert!((loss(&a, &b) - direct).abs() < 1e-15);
            assert!(loss(&a, &b) >= 0.0);
        }
    }

    #[test]
    fn zero_loss_batch_has_zero_gradient() {
        let cfg = micro_cfg();
        let mut rng = Rng::new(5);
        let model = ModelParams::init(&cfg, &mut rng);
        let r = vec![0.4, -0.2, 0.9];
        let m = vec![0.1, -0.8];
        let target = forward_params(&model, &r, &m);
        let batch = [TrainExample {
            r: &r,
            m: &m,
            target,
        }];
        let (l, grads) = backward(&model, &batch).unwrap();
        assert_eq!(l, 0.0);
        assert!(grads.flatten().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn central_difference_on_square() {
        let g = central_difference(|w| w * w, 3.0, 1e-5);
        assert!((g - 6.0).abs() < 1e-8, "got {g}");
    }

    fn relative_error(a: f64, b: f64) -> f64 {
        (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = micro_cfg();
        let mut rng = Rng::new(6);
        for trial in 0..3 {
            let model = ModelParams::init(&cfg, &mut rng);
            let r1: Vec<f64> = (0..3).map(|_| rng.next_normal()).collect();
            let m1: Vec<f64> = (0..2).map(|_| rng.next_normal()).collect();
            let r2: Vec<f64> = (0..3).map(|_| rng.next_normal()).collect();
            let m2: Vec<f64> = (0..2).map(|_| rng.next_normal()).collect();
            let t1 = [0.3, -0.1, 0.7, 0.2];
            let t2 = [-0.5, 0.4, 0.0, -0.3];
            let batch = [
                TrainExample {
                    r: &r1,
                    m: &m1,
                    target: t1,
                },
                TrainExample {
                    r: &r2,
                    m: &m2,
                    target: t2,
                },
            ];
            let (_, grads) = backward(&model, &batch).unwrap();
            let analytic = grads.flatten();
            let flat = model.flatten();
            let h = 1e-5;
            for i in 0..flat.len() {
                let mut plus = flat.clone();
                plus[i] += h;
                let mut minus = flat.clone();
                minus[i] -= h;
                let lp = batch_loss(&cfg, &plus, &batch);
                let lm = batch_loss(&cfg, &minus, &batch);
                let numeric = (lp - lm) / (2.0 * h);
                assert!(
                    relative_error(analytic[i], numeric) < 1e-4,
                    "trial {trial} param {i}: analytic {} vs numeric {}",
                    analytic[i],
                    numeric
                );
            }
        }
    }

    fn batch_loss(cfg: &ModelConfig, flat: &[f64], batch: &[TrainExample<'_>]) -> f64 {
        let model = ModelParams::from_flat(cfg, flat).unwrap();
        batch
            .iter()
            .map(|ex| loss(&forward_params(&model, ex.r, ex.m), &ex.target))
            .sum::<f64>()
            / batch.len() as f64
    }

    #[test]
    fn sgd_step_quadratic() {
        // one step on f(w) = w^2 at w = 1, lr 0.1, no momentum -> 0.8
        let cfg = ModelConfig {
            r_dim: 1,
            m_dim: 1,
            width: 1,
            branch_depth: 1,
        };
        let mut params = ModelParams::zeros(&cfg);
        params.head.b[0] = 1.0;
        let mut grads = ModelParams::zeros(&cfg);
        grads.head.b[0] = 2.0;
        let mut opt = SgdOptimizer::new(0.1, 0.0);
        opt.step(&mut params, &grads).unwrap();
        assert!((params.head.b[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_zero_gradient_keeps_params() {
        let cfg = micro_cfg();
        let mut rng = Rng::new(7);
        let mut params = ModelParams::init(&cfg, &mut rng);
        let before = params.clone();
        let grads = ModelParams::zeros(&cfg);
        let mut opt = SgdOptimizer::new(0.1, 0.9);
        opt.step(&mut params, &grads).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn sgd_converges_on_quadratic() {
        // 200 steps of w <- w - 0.1 * 2w from w = 1 without momentum
        let cfg = ModelConfig {
            r_dim: 1,
            m_dim: 1,
            width: 1,
            branch_depth: 1,
        };
        let mut params = ModelParams::zeros(&cfg);
        params.head.b[0] = 1.0;
        let mut opt = SgdOptimizer::new(0.1, 0.0);
        for _ in 0..200 {
            let mut grads = ModelParams::zeros(&cfg);
            grads.head.b[0] = 2.0 * params.head.b[0];
            opt.step(&mut params, &grads).unwrap();
        }
        assert!(params.head.b[0].abs() < 1e-6, "w = {}", params.head.b[0]);
    }

    #[test]
    fn sgd_rejects_nonfinite_gradient() {
        let cfg = micro_cfg();
        let mut params = ModelParams::zeros(&cfg);
        let mut grads = ModelParams::zeros(&cfg);
        grads.head.b[0] = f64::NAN;
        let mut opt = SgdOptimizer::new(0.1, 0.9);
        assert!(matches!(
            opt.step(&mut params, &grads),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn flatten_roundtrip() {
        let cfg = micro_cfg();
        let mut rng = Rng::new(8);
        let model = ModelParams::init(&cfg, &mut rng);
        let flat = model.flatten();
        assert_eq!(flat.len(), model.param_count());
        let rebuilt = ModelParams::from_flat(&cfg, &flat).unwrap();
        assert_eq!(rebuilt, model);
        assert!(ModelParams::from_flat(&cfg, &flat[1..]).is_err());
    }
}
