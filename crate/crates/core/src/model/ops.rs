//! Layer primitives with batched forward and reverse-mode backward passes.
//! Batches are row-major: one item per row.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use super::params::{Linear, Mlp, ProjectionHead};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Vectors with a smaller norm cannot be normalized.
pub const MIN_NORM: f64 = 1e-12;

/// Exact GELU, 0.5 x (1 + erf(x / sqrt 2)).
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

pub fn layer_norm(v: &[f64], gain: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
    if v.len() < 2 {
        return Err(Error::InsufficientData {
            what: "layer norm",
            needed: 2,
            got: v.len(),
        });
    }
    if gain.len() != v.len() || bias.len() != v.len() {
        return Err(Error::Shape {
            what: "layer norm affine".into(),
            expected: v.len().to_string(),
            got: format!("{}/{}", gain.len(), bias.len()),
        });
    }
    let x = Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row shape");
    let (y, _) = layer_norm_forward(
        &x,
        &Array1::from(gain.to_vec()),
        &Array1::from(bias.to_vec()),
    );
    Ok(y.into_raw_vec_and_offset().0)
}

pub fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm.is_nan() || norm <= MIN_NORM {
        return Err(Error::DegenerateEmbedding(norm));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

pub(crate) fn linear_forward(x: &Array2<f64>, l: &Linear) -> Array2<f64> {
    x.dot(&l.weight.t()) + &l.bias
}

/// Accumulates parameter gradients into `grad` and returns d/dx.
pub(crate) fn linear_backward(
    x: &Array2<f64>,
    l: &Linear,
    dy: &Array2<f64>,
    grad: &mut Linear,
) -> Array2<f64> {
    grad.weight += &dy.t().dot(x);
    grad.bias += &dy.sum_axis(Axis(0));
    dy.dot(&l.weight)
}

fn gelu_backward(pre: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    Zip::from(&mut dx).and(pre).for_each(|d, &p| *d *= gelu_derivative(p));
    dx
}

pub(crate) struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

pub(crate) fn layer_norm_forward(
    x: &Array2<f64>,
    gain: &Array1<f64>,
    bias: &Array1<f64>,
) -> (Array2<f64>, LayerNormCache) {
    let n = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / n;
        *inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        row.mapv_inplace(|v| v * *inv);
    }
    let y = &xhat * gain + bias;
    (y, LayerNormCache { xhat, inv_std })
}

fn layer_norm_backward(
    cache: &LayerNormCache,
    gain: &Array1<f64>,
    dy: &Array2<f64>,
    dgain: &mut Array1<f64>,
    dbias: &mut Array1<f64>,
) -> Array2<f64> {
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0));
    let dxhat = dy * gain;
    let n = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let g = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let mean_g = g.sum() / n;
        let mean_gx = g.dot(&xh) / n;
        let inv = cache.inv_std[i];
        Zip::from(dx.row_mut(i))
            .and(g)
            .and(xh)
            .for_each(|d, &gi, &xi| *d = inv * (gi - mean_g - xi * mean_gx));
    }
    dx
}

pub(crate) struct NormalizeCache {
    unit: Array2<f64>,
    norms: Array1<f64>,
}

pub(crate) fn normalize_rows(x: &Array2<f64>) -> Result<(Array2<f64>, NormalizeCache)> {
    let norms: Array1<f64> = x.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    if let Some(&bad) = norms.iter().find(|&&n| n.is_nan() || n <= MIN_NORM) {
        return Err(Error::DegenerateEmbedding(bad));
    }
    let unit = x / &norms.view().insert_axis(Axis(1));
    Ok((
        unit.clone(),
        NormalizeCache { unit, norms },
    ))
}

fn normalize_backward(cache: &NormalizeCache, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    for (i, mut row) in dx.rows_mut().into_iter().enumerate() {
        let u = cache.unit.row(i);
        let along = u.dot(&dy.row(i));
        let inv = 1.0 / cache.norms[i];
        Zip::from(&mut row).and(u).for_each(|d, &ui| *d = (*d - ui * along) * inv);
    }
    dx
}

pub(crate) struct MlpCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

pub(crate) fn mlp_forward(x: Array2<f64>, mlp: &Mlp) -> (Array2<f64>, MlpCache) {
    let pre = linear_forward(&x, &mlp.hidden);
    let act = pre.mapv(gelu);
    let out = linear_forward(&act, &mlp.out);
    (out, MlpCache { input: x, pre, act })
}

pub(crate) fn mlp_backward(cache: &MlpCache, mlp: &Mlp, dy: &Array2<f64>, grad: &mut Mlp) -> Array2<f64> {
    let dact = linear_backward(&cache.act, &mlp.out, dy, &mut grad.out);
    let dpre = gelu_backward(&cache.pre, &dact);
    linear_backward(&cache.input, &mlp.hidden, &dpre, &mut grad.hidden)
}

pub(crate) struct HeadCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
    ln: LayerNormCache,
}

/// expand -> GELU -> shrink -> layer norm
pub(crate) fn head_forward(x: Array2<f64>, head: &ProjectionHead) -> (Array2<f64>, HeadCache) {
    let pre = linear_forward(&x, &head.expand);
    let act = pre.mapv(gelu);
    let shrunk = linear_forward(&act, &head.shrink);
    let (y, ln) = layer_norm_forward(&shrunk, &head.ln_gain, &head.ln_bias);
    (y, HeadCache { input: x, pre, act, ln })
}

pub(crate) fn head_backward(
    cache: &HeadCache,
    head: &ProjectionHead,
    dy: &Array2<f64>,
    grad: &mut ProjectionHead,
) -> Array2<f64> {
    let dshrunk = layer_norm_backward(&cache.ln, &head.ln_gain, dy, &mut grad.ln_gain, &mut grad.ln_bias);
    let dact = linear_backward(&cache.act, &head.shrink, &dshrunk, &mut grad.shrink);
    let dpre = gelu_backward(&cache.pre, &dact);
    linear_backward(&cache.input, &head.expand, &dpre, &mut grad.expand)
}

/// Projection plus L2 normalization: raw encoder output to the shared space.
pub(crate) struct BranchCache {
    head: HeadCache,
    norm: NormalizeCache,
}

pub(crate) fn branch_forward(raw: Array2<f64>, head: &ProjectionHead) -> Result<(Array2<f64>, BranchCache)> {
    let (projected, head_cache) = head_forward(raw, head);
    let (unit, norm) = normalize_rows(&projected)?;
    Ok((unit, BranchCache { head: head_cache, norm }))
}

pub(crate) fn branch_backward(
    cache: &BranchCache,
    head: &ProjectionHead,
    dunit: &Array2<f64>,
    grad: &mut ProjectionHead,
) -> Array2<f64> {
    let dprojected = normalize_backward(&cache.norm, dunit);
    head_backward(&cache.head, head, &dprojected, grad)
}

pub(crate) fn as_row(v: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, v.len()), v).expect("row shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_values() {
        assert_eq!(gelu(0.0), 0.0);
        // 0.5 * (1 + erf(1/sqrt 2)), erf(0.70710678) = 0.6826894921
        assert!((gelu(1.0) - 0.841_344_746).abs() < 1e-8);
        assert!(gelu(-10.0).abs() < 1e-8);
    }

    #[test]
    fn gelu_derivative_matches_central_difference() {
        for x in [-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-5;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_derivative(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_fixtures() {
        let y = layer_norm(&[2.0, 2.0, 2.0], &[1.0; 3], &[0.0; 3]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
        let y = layer_norm(&[1.0, -1.0], &[1.0; 2], &[0.0; 2]).unwrap();
        let expected = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y[0] - expected).abs() < 1e-12 && (y[1] + expected).abs() < 1e-12);
        assert!((y[0] - 0.999995).abs() < 1e-6);
        let y = layer_norm(&[5.0, -3.0, 0.5], &[0.0; 3], &[0.25; 3]).unwrap();
        assert_eq!(y, vec![0.25; 3]);
        assert!(layer_norm(&[1.0], &[1.0], &[0.0]).is_err());
    }

    #[test]
    fn normalize_fixtures() {
        let v = normalize(&[3.0, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        let u = normalize(&[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(u, vec![0.0, 1.0, 0.0]);
        assert!(matches!(normalize(&[0.0, 0.0]), Err(Error::DegenerateEmbedding(_))));
    }
}
