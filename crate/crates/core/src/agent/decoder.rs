use super::lstm::dot;
use super::params::DecoderParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DecoderCache {
    pub h: Vec<f64>,
    pub activation: Vec<f64>,
}

/// Selection logit `w2 . tanh(W1 h + b1) + b2`.
pub fn decode_score(p: &DecoderParams, h: &[f64]) -> Result<f64> {
    forward(p, h).map(|(z, _)| z)
}

pub(crate) fn forward(p: &DecoderParams, h: &[f64]) -> Result<(f64, DecoderCache)> {
    if h.len() != p.hidden {
        return Err(Error::DimensionMismatch { expected: p.hidden, got: h.len() });
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("decoder input".into()));
    }
    let activation: Vec<f64> =
        (0..p.mid).map(|r| (dot(&p.w1[r * p.hidden..(r + 1) * p.hidden], h) + p.b1[r]).tanh()).collect();
    let z = dot(&p.w2, &activation) + p.b2;
    if !z.is_finite() {
        return Err(Error::NonFinite("decoder output".into()));
    }
    Ok((z, DecoderCache { h: h.to_vec(), activation }))
}

/// Accumulates gradients for upstream `dz`; returns `dh`.
pub(crate) fn backward(p: &DecoderParams, cache: &DecoderCache, dz: f64, grad: &mut DecoderParams) -> Vec<f64> {
    grad.b2 += dz;
    let mut dh = vec![0.0; p.hidden];
    for r in 0..p.mid {
        let q = cache.activation[r];
        grad.w2[r] += dz * q;
        let du = dz * p.w2[r] * (1.0 - q * q);
        grad.b1[r] += du;
        let row = r * p.hidden..(r + 1) * p.hidden;
        for (k, (g, w)) in grad.w1[row.clone()].iter_mut().zip(&p.w1[row]).enumerate() {
            *g += du * cache.h[k];
            dh[k] += du * w;
        }
    }
    dh
}
