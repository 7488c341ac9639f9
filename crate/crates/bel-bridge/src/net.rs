//! The amortised control network u(t, x, y) and its optimiser.
//!
//! A fixed bowtie MLP: the input (t, x, y) is projected to width 256, passed
//! through widths 256-128-64-32-64-128-256 with additive skip connections
//! between mirror widths, and read out linearly to the state dimension. The
//! smooth activation keeps finite-difference gradient checks tight. Forward
//! and reverse passes are hand-rolled on f64 matrices.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::rng::CounterRng;

const HIDDEN: [usize; 7] = [256, 128, 64, 32, 64, 128, 256];
// Skip source activation index per hidden layer (mirror widths).
const SKIP: [Option<usize>; 7] = [None, None, None, None, Some(2), Some(1), Some(0)];

const SQRT_2_OVER_PI: f64 = 0.7978845608028654;
const GELU_C: f64 = 0.044715;

#[inline]
fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + (SQRT_2_OVER_PI * (z + GELU_C * z * z * z)).tanh())
}

#[inline]
fn gelu_prime(z: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (z + GELU_C * z * z * z);
    let th = u.tanh();
    0.5 * (1.0 + th) + 0.5 * z * (1.0 - th * th) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * z * z)
}

#[derive(Debug, Clone)]
struct Layer {
    /// (out, in)
    w: Array2<f64>,
    b: Array1<f64>,
}

impl Layer {
    fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Control network u(t, x, y) with state dimension `state_dim` and
/// conditioning dimension `cond_dim`; input layout [t, x.., y..].
#[derive(Debug, Clone)]
pub struct DriftNet {
    state_dim: usize,
    cond_dim: usize,
    /// 7 hidden layers followed by the linear readout.
    layers: Vec<Layer>,
}

/// Cached forward state for the reverse pass.
pub struct ForwardCache {
    input: Array2<f64>,
    /// Pre-activations per hidden layer.
    zs: Vec<Array2<f64>>,
    /// Post-activation (plus skip) outputs per hidden layer.
    acts: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl DriftNet {
    /// Variance-scaled random initialisation; the readout starts at zero so
    /// the initial control vanishes.
    pub fn new(state_dim: usize, cond_dim: usize, seed: u64) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::Invalid("state_dim = 0".into()));
        }
        let in_dim = 1 + state_dim + cond_dim;
        let rng = CounterRng::new(seed);
        let mut counter: u64 = 0;
        let mut layers = Vec::with_capacity(8);
        let mut fan_in = in_dim;
        for &width in &HIDDEN {
            let scale = (2.0 / fan_in as f64).sqrt();
            let w = Array2::from_shape_fn((width, fan_in), |_| {
                let v = scale * rng.normal_at(counter);
                counter += 1;
                v
            });
            layers.push(Layer { w, b: Array1::zeros(width) });
            fan_in = width;
        }
        layers.push(Layer { w: Array2::zeros((state_dim, fan_in)), b: Array1::zeros(state_dim) });
        Ok(Self { state_dim, cond_dim, layers })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn input_dim(&self) -> usize {
        1 + self.state_dim + self.cond_dim
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    /// Batched forward with cached intermediates. Rows of `input` are
    /// [t, x.., y..].
    pub fn forward_cached(&self, input: &Array2<f64>) -> Result<ForwardCache> {
        if input.ncols() != self.input_dim() {
            return Err(Error::DimMismatch { expected: self.input_dim(), got: input.ncols() });
        }
        let mut zs = Vec::with_capacity(7);
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(7);
        let mut cur = input.clone();
        for (li, layer) in self.layers[..7].iter().enumerate() {
            let mut z = cur.dot(&layer.w.t());
            z += &layer.b;
            let mut a = z.mapv(gelu);
            if let Some(src) = SKIP[li] {
                a += &acts[src];
            }
            zs.push(z);
            acts.push(a.clone());
            cur = a;
        }
        let out_layer = &self.layers[7];
        let mut output = cur.dot(&out_layer.w.t());
        output += &out_layer.b;
        Ok(ForwardCache { input: input.clone(), zs, acts, output })
    }

    /// Forward for a single (t, x, y) triple.
    pub fn forward(&self, t: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.state_dim || y.len() != self.cond_dim {
            return Err(Error::DimMismatch {
                expected: self.state_dim + self.cond_dim,
                got: x.len() + y.len(),
            });
        }
        let mut row = Vec::with_capacity(self.input_dim());
        row.push(t);
        row.extend_from_slice(x);
        row.extend_from_slice(y);
        let input = Array2::from_shape_vec((1, self.input_dim()), row).expect("shape");
        let cache = self.forward_cached(&input)?;
        Ok(cache.output.row(0).to_vec())
    }

    /// Reverse pass: given d(loss)/d(output), return the flat parameter
    /// gradient and d(loss)/d(input).
    pub fn backward(&self, cache: &ForwardCache, d_output: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
        let mut grads: Vec<(Array2<f64>, Array1<f64>)> = self
            .layers
            .iter()
            .map(|l| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.len())))
            .collect();
        // Pending gradients routed through the skip additions.
        let mut skip_grad: Vec<Option<Array2<f64>>> = vec![None; 7];
        let out_layer = &self.layers[7];
        grads[7].0 = d_output.t().dot(&cache.acts[6]);
        grads[7].1 = d_output.sum_axis(Axis(0));
        let mut d_act = d_output.dot(&out_layer.w);
        for li in (0..7).rev() {
            if let Some(extra) = skip_grad[li].take() {
                d_act += &extra;
            }
            if let Some(src) = SKIP[li] {
                // The skip adds acts[src] directly into this layer's output.
                let entry = skip_grad[src].get_or_insert_with(|| Array2::zeros(d_act.dim()));
                *entry += &d_act;
            }
            let d_z = &d_act * &cache.zs[li].mapv(gelu_prime);
            let below: &Array2<f64> = if li == 0 { &cache.input } else { &cache.acts[li - 1] };
            grads[li].0 = d_z.t().dot(below);
            grads[li].1 = d_z.sum_axis(Axis(0));
            d_act = d_z.dot(&self.layers[li].w);
        }
        let mut flat = Vec::with_capacity(self.n_params());
        for (gw, gb) in &grads {
            flat.extend(gw.iter().copied());
            flat.extend(gb.iter().copied());
        }
        (flat, d_act)
    }

    /// Sum-of-squares regression loss against `targets` plus its parameter
    /// gradient, over rows of `input`.
    pub fn loss_and_grad(
        &self,
        input: &Array2<f64>,
        targets: &Array2<f64>,
    ) -> Result<(f64, Vec<f64>)> {
        if targets.dim() != (input.nrows(), self.state_dim) {
            return Err(Error::DimMismatch {
                expected: input.nrows() * self.state_dim,
                got: targets.len(),
            });
        }
        let cache = self.forward_cached(input)?;
        let resid = &cache.output - targets;
        let loss = resid.iter().map(|r| r * r).sum::<f64>();
        if !loss.is_finite() {
            let (path, _) = resid
                .outer_iter()
                .enumerate()
                .find(|(_, row)| row.iter().any(|v| !v.is_finite()))
                .map(|(i, _)| (i, 0))
                .unwrap_or((0, 0));
            return Err(Error::NonFiniteLoss { path, step: 0 });
        }
        let d_output = resid.mapv(|r| 2.0 * r);
        let (grad, _) = self.backward(&cache, &d_output);
        Ok((loss, grad))
    }

    /// Jacobian of the output with respect to the input row, (state_dim x
    /// input_dim), by reverse passes from output basis vectors.
    pub fn input_jacobian(&self, t: f64, x: &[f64], y: &[f64]) -> Result<Array2<f64>> {
        let mut row = Vec::with_capacity(self.input_dim());
        row.push(t);
        row.extend_from_slice(x);
        row.extend_from_slice(y);
        let input = Array2::from_shape_vec((1, self.input_dim()), row).expect("shape");
        let cache = self.forward_cached(&input)?;
        let mut jac = Array2::zeros((self.state_dim, self.input_dim()));
        for k in 0..self.state_dim {
            let mut d_out = Array2::zeros((1, self.state_dim));
            d_out[(0, k)] = 1.0;
            let (_, d_in) = self.backward(&cache, &d_out);
            jac.row_mut(k).assign(&d_in.row(0));
        }
        Ok(jac)
    }

    /// Flat parameter vector (layer order, weights row-major then bias).
    pub fn params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            flat.extend(l.w.iter().copied());
            flat.extend(l.b.iter().copied());
        }
        flat
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::DimMismatch { expected: self.n_params(), got: params.len() });
        }
        let mut off = 0;
        for l in &mut self.layers {
            for w in l.w.iter_mut() {
                *w = params[off];
                off += 1;
            }
            for b in l.b.iter_mut() {
                *b = params[off];
                off += 1;
            }
        }
        Ok(())
    }

    /// Text checkpoint: header lines then one parameter per line with 17
    /// significant digits; round-trips bit-exactly.
    pub fn to_checkpoint(&self, step: u64) -> String {
        let mut s = String::new();
        s.push_str("driftnet-v1\n");
        s.push_str(&format!("state_dim {}\n", self.state_dim));
        s.push_str(&format!("cond_dim {}\n", self.cond_dim));
        s.push_str(&format!("step {step}\n"));
        s.push_str(&format!("params {}\n", self.n_params()));
        for p in self.params() {
            s.push_str(&format!("{p:.16e}\n"));
        }
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<(Self, u64)> {
        let mut lines = text.lines();
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if lines.next() != Some("driftnet-v1") {
            return Err(bad("missing driftnet-v1 header"));
        }
        let mut field = |name: &str| -> Result<u64> {
            let line = lines.next().ok_or_else(|| bad("truncated header"))?;
            let rest = line
                .strip_prefix(name)
                .and_then(|r| r.strip_prefix(' '))
                .ok_or_else(|| bad(&format!("expected `{name}` line, got `{line}`")))?;
            rest.trim().parse().map_err(|_| bad(&format!("bad `{name}` value `{rest}`")))
        };
        let state_dim = field("state_dim")? as usize;
        let cond_dim = field("cond_dim")? as usize;
        let step = field("step")?;
        let n_params = field("params")? as usize;
        let mut net = Self::new(state_dim, cond_dim, 0)?;
        if net.n_params() != n_params {
            return Err(bad(&format!(
                "parameter count {} does not match architecture ({})",
                n_params,
                net.n_params()
            )));
        }
        let mut params = Vec::with_capacity(n_params);
        for line in lines {
            let v: f64 = line.trim().parse().map_err(|_| bad(&format!("bad float `{line}`")))?;
            params.push(v);
        }
        if params.len() != n_params {
            return Err(bad(&format!("expected {} parameters, found {}", n_params, params.len())));
        }
        net.set_params(&params)?;
        Ok((net, step))
    }
}

/// Bias-corrected Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub lr: f64,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(n_params: usize, lr: f64) -> Self {
        Self { m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0, lr }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.step as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + Self::EPS);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_input(rng: &CounterRng, rows: usize, cols: usize, base: u64) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |(i, j)| {
            rng.normal_at(base + (i * cols + j) as u64)
        })
    }

    #[test]
    fn zero_readout_at_initialisation() {
        let net = DriftNet::new(2, 2, 7).unwrap();
        let out = net.forward(0.3, &[0.5, -1.0], &[1.0, 0.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn forward_deterministic() {
        let net = DriftNet::new(1, 1, 3).unwrap();
        let a = net.forward(0.2, &[0.4], &[-0.7]).unwrap();
        let b = net.forward(0.2, &[0.4], &[-0.7]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let rng = CounterRng::new(100);
        for trial in 0..3u64 {
            let mut net = DriftNet::new(1, 1, 40 + trial).unwrap();
            // Perturb the readout so the loss is not at its zero point.
            let mut p = net.params();
            for (i, v) in p.iter_mut().enumerate().rev().take(300) {
                *v += 0.05 * rng.normal_at(trial * 1000 + i as u64);
            }
            net.set_params(&p).unwrap();
            let input = random_input(&rng, 6, 3, 50_000 + trial * 100);
            let targets = random_input(&rng, 6, 1, 60_000 + trial * 100);
            let (_, grad) = net.loss_and_grad(&input, &targets).unwrap();
            let n = net.n_params();
            for probe in 0..10u64 {
                let idx = (rng.u64_at(trial * 17 + probe) % n as u64) as usize;
                let h = 1e-4;
                let mut pp = p.clone();
                pp[idx] += h;
                net.set_params(&pp).unwrap();
                let (lp, _) = net.loss_and_grad(&input, &targets).unwrap();
                pp[idx] -= 2.0 * h;
                net.set_params(&pp).unwrap();
                let (lm, _) = net.loss_and_grad(&input, &targets).unwrap();
                net.set_params(&p).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let scale = grad[idx].abs().max(fd.abs()).max(1e-8);
                assert!(
                    (grad[idx] - fd).abs() / scale < 1e-3,
                    "trial {trial} idx {idx}: analytic {} vs fd {fd}",
                    grad[idx]
                );
            }
        }
    }

    #[test]
    fn input_jacobian_matches_finite_differences() {
        let rng = CounterRng::new(5);
        let mut net = DriftNet::new(2, 1, 9).unwrap();
        let mut p = net.params();
        let n = p.len();
        for (i, v) in p.iter_mut().enumerate().skip(n - 600) {
            *v += 0.05 * rng.normal_at(i as u64);
        }
        net.set_params(&p).unwrap();
        let (t, x, y) = (0.4, [0.2, -0.6], [0.9]);
        let jac = net.input_jacobian(t, &x, &y).unwrap();
        let h = 1e-5;
        let base: Vec<f64> = {
            let mut r = vec![t];
            r.extend_from_slice(&x);
            r.extend_from_slice(&y);
            r
        };
        for c in 0..4 {
            let mut up = base.clone();
            up[c] += h;
            let mut dn = base.clone();
            dn[c] -= h;
            let fu = net.forward(up[0], &up[1..3], &up[3..4]).unwrap();
            let fd = net.forward(dn[0], &dn[1..3], &dn[3..4]).unwrap();
            for k in 0..2 {
                let est = (fu[k] - fd[k]) / (2.0 * h);
                let scale = est.abs().max(jac[(k, c)].abs()).max(1e-8);
                assert!((est - jac[(k, c)]).abs() / scale < 1e-3, "({k},{c})");
            }
        }
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let mut net = DriftNet::new(1, 2, 77).unwrap();
        let rng = CounterRng::new(8);
        let mut p = net.params();
        for (i, v) in p.iter_mut().enumerate() {
            *v += 0.01 * rng.normal_at(i as u64);
        }
        net.set_params(&p).unwrap();
        let text = net.to_checkpoint(123);
        let (back, step) = DriftNet::from_checkpoint(&text).unwrap();
        assert_eq!(step, 123);
        assert_eq!(net.params(), back.params());
        assert_eq!(text, back.to_checkpoint(123));
    }

    #[test]
    fn adam_zero_gradient_is_identity_and_first_step_has_lr_magnitude() {
        let mut adam = AdamState::new(3, 1e-3);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.0; 3]);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        let mut adam = AdamState::new(3, 1e-3);
        let mut p = vec![0.0; 3];
        let g = [3.0, -0.04, 1e-3];
        adam.step(&mut p, &g);
        for i in 0..3 {
            // First bias-corrected step moves by ~lr against the gradient sign.
            assert!((p[i] + g[i].signum() * 1e-3).abs() < 1e-5, "{p:?}");
        }
    }

    #[test]
    fn loss_zero_when_targets_equal_outputs() {
        let rng = CounterRng::new(4);
        let net = DriftNet::new(1, 1, 13).unwrap();
        let input = random_input(&rng, 5, 3, 0);
        let cache = net.forward_cached(&input).unwrap();
        let (loss, grad) = net.loss_and_grad(&input, &cache.output).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
    }
}
