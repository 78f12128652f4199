//! Plain MLPs over a flat `f64` parameter buffer, with hand-written
//! reverse-mode gradients.
//!
//! Every network in this crate is a stack of `Linear → ReLU → … → Linear`
//! with an optional LayerNorm on the final output. Parameters for one MLP
//! live in a contiguous slice of the model's flat parameter vector, laid out
//! layer by layer as `[W_0 row-major, b_0, W_1, b_1, …, (γ, β)]`. Keeping
//! everything in one buffer makes the optimizer and checkpointing trivial
//! and lets gradient checks sweep every parameter by index.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

/// LayerNorm variance guard. Small enough not to bias O(1) activations,
/// large enough to keep gradients finite on degenerate all-equal rows.
pub(crate) const LN_EPS: f64 = 1e-8;

/// Shape of one MLP: `widths[0]` inputs, `widths.last()` outputs, ReLU
/// between the linear layers, and an optional LayerNorm on the output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct MlpSpec {
    pub widths: Vec<usize>,
    pub layer_norm: bool,
}

impl MlpSpec {
    /// Panics if the shape has no hidden layer or a zero width; model specs
    /// are validated before layouts are built, so this is a programmer error.
    pub fn new(widths: Vec<usize>, layer_norm: bool) -> Self {
        assert!(widths.len() >= 3, "MLPs must have at least one hidden layer");
        assert!(widths.iter().all(|&w| w > 0), "zero-width MLP layer");
        MlpSpec { widths, layer_norm }
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn n_linears(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn n_params(&self) -> usize {
        let weights: usize = self
            .widths
            .windows(2)
            .map(|w| w[1] * w[0] + w[1])
            .sum();
        weights + if self.layer_norm { 2 * self.output_dim() } else { 0 }
    }

    /// `(weight_offset, bias_offset, rows, cols)` of linear layer `l` within
    /// this MLP's parameter segment.
    fn linear_offsets(&self, l: usize) -> (usize, usize, usize, usize) {
        let mut off = 0;
        for k in 0..l {
            off += self.widths[k + 1] * self.widths[k] + self.widths[k + 1];
        }
        let (rows, cols) = (self.widths[l + 1], self.widths[l]);
        (off, off + rows * cols, rows, cols)
    }

    /// `(γ_offset, β_offset)` of the output LayerNorm, if present.
    fn norm_offsets(&self) -> Option<(usize, usize)> {
        if !self.layer_norm {
            return None;
        }
        let d = self.output_dim();
        let base = self.n_params() - 2 * d;
        Some((base, base + d))
    }
}

/// Glorot-uniform initialization of one MLP segment: `W ~ U(−a, a)` with
/// `a = sqrt(6 / (fan_in + fan_out))`, zero biases, identity LayerNorm.
pub(crate) fn init_mlp<R: Rng>(spec: &MlpSpec, seg: &mut [f64], rng: &mut R) {
    debug_assert_eq!(seg.len(), spec.n_params());
    for l in 0..spec.n_linears() {
        let (w_off, b_off, rows, cols) = spec.linear_offsets(l);
        let a = (6.0 / (rows + cols) as f64).sqrt();
        for w in &mut seg[w_off..w_off + rows * cols] {
            *w = rng.random_range(-a..a);
        }
        seg[b_off..b_off + rows].fill(0.0);
    }
    if let Some((g_off, b_off)) = spec.norm_offsets() {
        let d = spec.output_dim();
        seg[g_off..g_off + d].fill(1.0);
        seg[b_off..b_off + d].fill(0.0);
    }
}

/// Intermediates retained by [`mlp_forward`] for the backward pass.
pub(crate) struct MlpCache {
    /// `xs[l]` is the input to linear layer `l`; `xs[l + 1] = relu(W_l xs[l] + b_l)`
    /// for hidden layers, so ReLU masks are recovered as `xs[l + 1] > 0`.
    xs: Vec<Array2<f64>>,
    /// Normalized pre-affine LayerNorm activations, if the MLP has one.
    xhat: Option<Array2<f64>>,
    /// Per-row `1 / sqrt(var + eps)` of the LayerNorm input.
    inv_sigma: Option<Array1<f64>>,
}

fn weight_view<'a>(seg: &'a [f64], off: usize, rows: usize, cols: usize) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((rows, cols), &seg[off..off + rows * cols]).unwrap()
}

/// Forward pass over a batch (rows) of inputs; returns the output and the
/// cache needed to backpropagate through it.
pub(crate) fn mlp_forward(spec: &MlpSpec, seg: &[f64], input: ArrayView2<f64>) -> (Array2<f64>, MlpCache) {
    debug_assert_eq!(input.ncols(), spec.input_dim());
    let n_lin = spec.n_linears();
    let mut xs = Vec::with_capacity(n_lin);
    let mut x = input.to_owned();
    for l in 0..n_lin {
        let (w_off, b_off, rows, cols) = spec.linear_offsets(l);
        let w = weight_view(seg, w_off, rows, cols);
        let b = ArrayView1::from(&seg[b_off..b_off + rows]);
        let mut y = x.dot(&w.t());
        y += &b;
        if l + 1 < n_lin {
            y.mapv_inplace(|v| v.max(0.0));
        }
        xs.push(std::mem::replace(&mut x, y));
    }
    let mut out = x;
    let (mut xhat, mut inv_sigma) = (None, None);
    if let Some((g_off, b_off)) = spec.norm_offsets() {
        let d = spec.output_dim();
        let gamma = ArrayView1::from(&seg[g_off..g_off + d]);
        let beta = ArrayView1::from(&seg[b_off..b_off + d]);
        let mut hat = out.clone();
        let mut inv = Array1::zeros(hat.nrows());
        for (mut row, i) in hat.rows_mut().into_iter().zip(0..) {
            let mean = row.mean().unwrap();
            row -= mean;
            let var = row.iter().map(|v| v * v).sum::<f64>() / d as f64;
            let s = 1.0 / (var + LN_EPS).sqrt();
            row *= s;
            inv[i] = s;
        }
        out = &hat * &gamma + beta;
        xhat = Some(hat);
        inv_sigma = Some(inv);
    }
    (out, MlpCache { xs, xhat, inv_sigma })
}

/// Backward pass: accumulates parameter gradients into `grad_seg` (same
/// layout as `seg`) and returns the gradient with respect to the MLP input.
pub(crate) fn mlp_backward(
    spec: &MlpSpec,
    seg: &[f64],
    grad_seg: &mut [f64],
    cache: &MlpCache,
    d_out: &Array2<f64>,
) -> Array2<f64> {
    let mut dz = d_out.clone();
    if let Some((g_off, b_off)) = spec.norm_offsets() {
        let d = spec.output_dim();
        let gamma = ArrayView1::from(&seg[g_off..g_off + d]);
        let xhat = cache.xhat.as_ref().unwrap();
        let inv = cache.inv_sigma.as_ref().unwrap();
        // dγ = Σ_rows dy ⊙ x̂, dβ = Σ_rows dy.
        for (g, v) in grad_seg[g_off..g_off + d].iter_mut().zip((d_out * xhat).sum_axis(Axis(0))) {
            *g += v;
        }
        for (g, v) in grad_seg[b_off..b_off + d].iter_mut().zip(d_out.sum_axis(Axis(0))) {
            *g += v;
        }
        // dx = inv ⊙ (dx̂ − mean(dx̂) − x̂ ⊙ mean(dx̂ ⊙ x̂)) per row.
        let dxhat = d_out * &gamma;
        let mut dx = Array2::zeros(dxhat.raw_dim());
        for (i, (dh_row, xh_row)) in dxhat.rows().into_iter().zip(xhat.rows()).enumerate() {
            let m1 = dh_row.mean().unwrap();
            let m2 = dh_row.iter().zip(xh_row).map(|(a, b)| a * b).sum::<f64>() / d as f64;
            for (o, (&dh, &xh)) in dx.row_mut(i).into_iter().zip(dh_row.iter().zip(xh_row)) {
                *o = inv[i] * (dh - m1 - xh * m2);
            }
        }
        dz = dx;
    }
    let n_lin = spec.n_linears();
    for l in (0..n_lin).rev() {
        let (w_off, b_off, rows, cols) = spec.linear_offsets(l);
        let x = &cache.xs[l];
        // dW += dzᵀ·x, db += Σ_rows dz.
        let dw = dz.t().dot(x);
        for (g, v) in grad_seg[w_off..w_off + rows * cols].iter_mut().zip(dw.iter()) {
            *g += v;
        }
        for (g, v) in grad_seg[b_off..b_off + rows].iter_mut().zip(dz.sum_axis(Axis(0))) {
            *g += v;
        }
        let w = weight_view(seg, w_off, rows, cols);
        let mut dx = dz.dot(&w);
        if l > 0 {
            // ReLU mask: xs[l] holds relu(z_{l−1}); positive entries pass.
            dx.zip_mut_with(&cache.xs[l], |d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
        }
        dz = dx;
    }
    dz
}
