//! Single LSTM cell: forward step and its reverse-mode derivative.

use super::params::LstmParams;
use crate::error::{Error, Result};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Activations of one step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub input_gate: Vec<f64>,
    pub forget_gate: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output_gate: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// One LSTM step. Returns `(h', c')`.
pub fn lstm_step(p: &LstmParams, h: &[f64], c: &[f64], x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let cache = forward(p, h, c, x)?;
    Ok((cache.h, cache.c))
}

pub(crate) fn forward(p: &LstmParams, h: &[f64], c: &[f64], x: &[f64]) -> Result<LstmStepCache> {
    let hid = p.hidden;
    if x.len() != p.input {
        return Err(Error::DimensionMismatch { expected: p.input, got: x.len() });
    }
    if h.len() != hid || c.len() != hid {
        return Err(Error::DimensionMismatch { expected: hid, got: h.len().min(c.len()) });
    }
    if x.iter().chain(h).chain(c).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lstm input".into()));
    }

    let mut pre = p.bias.clone();
    for (row, a) in pre.iter_mut().enumerate() {
        let wx = &p.w_input[row * p.input..(row + 1) * p.input];
        let wh = &p.w_hidden[row * hid..(row + 1) * hid];
        *a += dot(wx, x) + dot(wh, h);
    }

    let input_gate: Vec<f64> = pre[..hid].iter().map(|&a| sigmoid(a)).collect();
    let forget_gate: Vec<f64> = pre[hid..2 * hid].iter().map(|&a| sigmoid(a)).collect();
    let candidate: Vec<f64> = pre[2 * hid..3 * hid].iter().map(|&a| a.tanh()).collect();
    let output_gate: Vec<f64> = pre[3 * hid..].iter().map(|&a| sigmoid(a)).collect();

    let c_new: Vec<f64> = (0..hid).map(|j| forget_gate[j] * c[j] + input_gate[j] * candidate[j]).collect();
    let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
    let h_new: Vec<f64> = (0..hid).map(|j| output_gate[j] * tanh_c[j]).collect();

    Ok(LstmStepCache {
        x: x.to_vec(),
        h_prev: h.to_vec(),
        c_prev: c.to_vec(),
        input_gate,
        forget_gate,
        candidate,
        output_gate,
        c: c_new,
        tanh_c,
        h: h_new,
    })
}

/// Backward through one step given upstream `dh` and `dc` (w.r.t. this step's
/// outputs). Accumulates parameter gradients into `grad` and returns
/// `(dx, dh_prev, dc_prev)`.
pub(crate) fn backward(
    p: &LstmParams,
    cache: &LstmStepCache,
    dh: &[f64],
    dc_next: &[f64],
    grad: &mut LstmParams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hid = p.hidden;
    let mut dpre = vec![0.0; 4 * hid];
    let mut dc_prev = vec![0.0; hid];
    for j in 0..hid {
        let (i, f, g, o) = (cache.input_gate[j], cache.forget_gate[j], cache.candidate[j], cache.output_gate[j]);
        let tc = cache.tanh_c[j];
        let dc = dc_next[j] + dh[j] * o * (1.0 - tc * tc);
        dpre[j] = dc * g * i * (1.0 - i);
        dpre[hid + j] = dc * cache.c_prev[j] * f * (1.0 - f);
        dpre[2 * hid + j] = dc * i * (1.0 - g * g);
        dpre[3 * hid + j] = dh[j] * tc * o * (1.0 - o);
        dc_prev[j] = dc * f;
    }

    let mut dx = vec![0.0; p.input];
    let mut dh_prev = vec![0.0; hid];
    for (row, &da) in dpre.iter().enumerate() {
        grad.bias[row] += da;
        let wx = &p.w_input[row * p.input..(row + 1) * p.input];
        let gx = &mut grad.w_input[row * p.input..(row + 1) * p.input];
        for k in 0..p.input {
            gx[k] += da * cache.x[k];
            dx[k] += da * wx[k];
        }
        let wh = &p.w_hidden[row * hid..(row + 1) * hid];
        let gh = &mut grad.w_hidden[row * hid..(row + 1) * hid];
        for k in 0..hid {
            gh[k] += da * cache.h_prev[k];
            dh_prev[k] += da * wh[k];
        }
    }
    (dx, dh_prev, dc_prev)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
