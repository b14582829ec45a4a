//! Row-wise primitives with hand-written gradients.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

pub const LN_EPS: f64 = 1e-5;

pub struct LayerNormCache {
    pub normalized: Array2<f64>,
    pub inv_std: Array1<f64>,
}

pub fn layer_norm(
    x: ArrayView2<'_, f64>,
    gain: &Array2<f64>,
    bias: &Array2<f64>,
) -> (Array2<f64>, LayerNormCache) {
    let d = x.ncols() as f64;
    let mut normalized = x.to_owned();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in normalized.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *s = 1.0 / (var + LN_EPS).sqrt();
        let scale = *s;
        row.mapv_inplace(|v| v * scale);
    }
    let y = &normalized * gain + bias;
    (y, LayerNormCache { normalized, inv_std })
}

/// Returns the input gradient and accumulates gain/bias gradients.
pub fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LayerNormCache,
    gain: &Array2<f64>,
    d_gain: &mut Array2<f64>,
    d_bias: &mut Array2<f64>,
) -> Array2<f64> {
    *d_gain += &(dy * &cache.normalized).sum_axis(Axis(0)).insert_axis(Axis(0));
    *d_bias += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = dy * gain;
    for ((mut row, xhat), &s) in dx
        .rows_mut()
        .into_iter()
        .zip(cache.normalized.rows())
        .zip(cache.inv_std.iter())
    {
        let sum = row.sum();
        let dot: f64 = row.iter().zip(xhat.iter()).map(|(a, b)| a * b).sum();
        Zip::from(&mut row).and(&xhat).for_each(|g, &xh| {
            *g = s / d * (d * *g - sum - xh * dot);
        });
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// In-place softmax over each row; `-inf` entries become 0.
pub fn softmax_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Sinusoidal embeddings for distances `0..n`: `[sin(t·ω) ‖ cos(t·ω)]`.
pub fn distance_embedding(n: usize, d: usize) -> Array2<f64> {
    let half = d / 2;
    Array2::from_shape_fn((n, d), |(t, c)| {
        let i = c % half;
        let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / d as f64);
        let angle = t as f64 * freq;
        if c < half {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}
