//! Per-sequence forward and reverse passes of the transformer encoder.

use crate::model::{EncoderParams, LayerParams, ModelConfig};
use crate::numeric::{axpy, dot, Matrix, Rng};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[derive(Debug, Clone)]
struct NormCache {
    normalized: Matrix,
    inv_std: Vec<f64>,
}

fn layer_norm(x: &Matrix, scale: &Matrix, offset: &Matrix) -> (Matrix, NormCache) {
    let (rows, cols) = x.shape();
    let mut normalized = Matrix::zeros(rows, cols);
    let mut out = Matrix::zeros(rows, cols);
    let mut inv_std = Vec::with_capacity(rows);
    let (g, b) = (scale.as_slice(), offset.as_slice());
    for i in 0..rows {
        let r = x.row(i);
        let mean = r.iter().sum::<f64>() / cols as f64;
        let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let s = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(s);
        let n = normalized.row_mut(i);
        for (nj, &v) in n.iter_mut().zip(r) {
            *nj = (v - mean) * s;
        }
        let o = out.row_mut(i);
        for j in 0..cols {
            o[j] = g[j] * normalized[(i, j)] + b[j];
        }
    }
    (
        out,
        NormCache {
            normalized,
            inv_std,
        },
    )
}

fn layer_norm_backward(
    cache: &NormCache,
    scale: &Matrix,
    dy: &Matrix,
    dscale: &mut Matrix,
    doffset: &mut Matrix,
) -> Matrix {
    let (rows, cols) = dy.shape();
    let g = scale.as_slice();
    let mut dx = Matrix::zeros(rows, cols);
    let mut dxhat = vec![0.0; cols];
    for i in 0..rows {
        let dyr = dy.row(i);
        let xh = cache.normalized.row(i);
        let ds = dscale.as_mut_slice();
        for j in 0..cols {
            ds[j] += dyr[j] * xh[j];
        }
        axpy(1.0, dyr, doffset.as_mut_slice());
        for j in 0..cols {
            dxhat[j] = dyr[j] * g[j];
        }
        let mean_d = dxhat.iter().sum::<f64>() / cols as f64;
        let mean_dx = dot(&dxhat, xh) / cols as f64;
        let s = cache.inv_std[i];
        let out = dx.row_mut(i);
        for j in 0..cols {
            out[j] = s * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
    }
    dx
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_A * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * u * u)
}

fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut Rng) -> Matrix {
    let keep = 1.0 / (1.0 - p);
    let data = (0..rows * cols)
        .map(|_| if rng.unit() < p { 0.0 } else { keep })
        .collect();
    Matrix::from_vec(rows, cols, data).expect("length matches shape")
}

fn apply_mask(x: &mut Matrix, mask: &Matrix) {
    for (v, m) in x.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        *v *= m;
    }
}

/// Leading `rows` rows of `x`.
fn head_rows(x: &Matrix, rows: usize) -> Matrix {
    Matrix::from_vec(rows, x.cols(), x.as_slice()[..rows * x.cols()].to_vec())
        .expect("slice of a valid matrix")
}

#[derive(Debug, Clone)]
struct LayerTape {
    /// Number of leading positions whose outputs the next stage consumes.
    rows: usize,
    ln1: NormCache,
    normed1: Matrix,
    query: Matrix,
    key: Matrix,
    value: Matrix,
    probs: Vec<Matrix>,
    context: Matrix,
    attn_mask: Option<Matrix>,
    ln2: NormCache,
    normed2: Matrix,
    pre_act: Matrix,
    act: Matrix,
    ff_mask: Option<Matrix>,
}

fn layer_forward(
    p: &LayerParams,
    config: &ModelConfig,
    x: &Matrix,
    rows: usize,
    mut dropout: Option<&mut Rng>,
) -> (Matrix, LayerTape) {
    let t = x.rows();
    let heads = config.heads;
    let hd = config.head_dim();
    let inv_sqrt = 1.0 / (hd as f64).sqrt();
    let drop_p = config.dropout_p;

    let (normed1, ln1) = layer_norm(x, &p.ln1_scale, &p.ln1_offset);
    let query = head_rows(&normed1, rows).matmul(&p.query).unwrap();
    let key = normed1.matmul(&p.key).unwrap();
    let value = normed1.matmul(&p.value).unwrap();

    let mut context = Matrix::zeros(rows, config.hidden_dim);
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = h * hd..(h + 1) * hd;
        let mut pm = Matrix::zeros(rows, t);
        for i in 0..rows {
            let qi = &query.row(i)[cols.clone()];
            let pr = pm.row_mut(i);
            let mut max = f64::NEG_INFINITY;
            for j in 0..t {
                let s = dot(qi, &key.row(j)[cols.clone()]) * inv_sqrt;
                pr[j] = s;
                max = max.max(s);
            }
            let mut sum = 0.0;
            for v in pr.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            pr.iter_mut().for_each(|v| *v /= sum);
            let ci = &mut context.row_mut(i)[cols.clone()];
            for j in 0..t {
                axpy(pm[(i, j)], &value.row(j)[cols.clone()], ci);
            }
        }
        probs.push(pm);
    }

    let mut attn = context.matmul(&p.output).unwrap();
    let attn_mask = match dropout.as_deref_mut() {
        Some(rng) if drop_p > 0.0 => {
            let m = dropout_mask(rows, config.hidden_dim, drop_p, rng);
            apply_mask(&mut attn, &m);
            Some(m)
        }
        _ => None,
    };
    let mut x1 = head_rows(x, rows);
    x1.add_scaled(1.0, &attn).unwrap();

    let (normed2, ln2) = layer_norm(&x1, &p.ln2_scale, &p.ln2_offset);
    let pre_act = normed2.matmul(&p.ff_in).unwrap();
    let mut act = pre_act.clone();
    act.as_mut_slice().iter_mut().for_each(|v| *v = gelu(*v));
    let mut ff = act.matmul(&p.ff_out).unwrap();
    let ff_mask = match dropout {
        Some(rng) if drop_p > 0.0 => {
            let m = dropout_mask(rows, config.hidden_dim, drop_p, rng);
            apply_mask(&mut ff, &m);
            Some(m)
        }
        _ => None,
    };
    x1.add_scaled(1.0, &ff).unwrap();

    let tape = LayerTape {
        rows,
        ln1,
        normed1,
        query,
        key,
        value,
        probs,
        context,
        attn_mask,
        ln2,
        normed2,
        pre_act,
        act,
        ff_mask,
    };
    (x1, tape)
}

/// Returns the gradient with respect to the layer input (all positions).
fn layer_backward(
    p: &LayerParams,
    g: &mut LayerParams,
    config: &ModelConfig,
    tape: &LayerTape,
    dy: &Matrix,
) -> Matrix {
    let rows = tape.rows;
    let t = tape.key.rows();
    let hd = config.head_dim();
    let inv_sqrt = 1.0 / (hd as f64).sqrt();

    // feed-forward branch
    let mut dff = dy.clone();
    if let Some(m) = &tape.ff_mask {
        apply_mask(&mut dff, m);
    }
    g.ff_out
        .add_scaled(1.0, &tape.act.t_matmul(&dff).unwrap())
        .unwrap();
    let mut dpre = dff.matmul_t(&p.ff_out).unwrap();
    for (dv, &u) in dpre.as_mut_slice().iter_mut().zip(tape.pre_act.as_slice()) {
        *dv *= gelu_grad(u);
    }
    g.ff_in
        .add_scaled(1.0, &tape.normed2.t_matmul(&dpre).unwrap())
        .unwrap();
    let dnormed2 = dpre.matmul_t(&p.ff_in).unwrap();
    let mut dx1 = layer_norm_backward(
        &tape.ln2,
        &p.ln2_scale,
        &dnormed2,
        &mut g.ln2_scale,
        &mut g.ln2_offset,
    );
    dx1.add_scaled(1.0, dy).unwrap();

    // attention branch
    let mut dattn = dx1.clone();
    if let Some(m) = &tape.attn_mask {
        apply_mask(&mut dattn, m);
    }
    g.output
        .add_scaled(1.0, &tape.context.t_matmul(&dattn).unwrap())
        .unwrap();
    let dcontext = dattn.matmul_t(&p.output).unwrap();

    let mut dquery = Matrix::zeros(rows, config.hidden_dim);
    let mut dkey = Matrix::zeros(t, config.hidden_dim);
    let mut dvalue = Matrix::zeros(t, config.hidden_dim);
    let mut dprob = vec![0.0; t];
    for (h, pm) in tape.probs.iter().enumerate() {
        let cols = h * hd..(h + 1) * hd;
        for i in 0..rows {
            let dci = &dcontext.row(i)[cols.clone()];
            let pr = pm.row(i);
            for j in 0..t {
                dprob[j] = dot(dci, &tape.value.row(j)[cols.clone()]);
                axpy(pr[j], dci, &mut dvalue.row_mut(j)[cols.clone()]);
            }
            let weighted = dot(&dprob, pr);
            let qi = &tape.query.row(i)[cols.clone()];
            for j in 0..t {
                let ds = pr[j] * (dprob[j] - weighted) * inv_sqrt;
                if ds == 0.0 {
                    continue;
                }
                axpy(
                    ds,
                    &tape.key.row(j)[cols.clone()],
                    &mut dquery.row_mut(i)[cols.clone()],
                );
                axpy(ds, qi, &mut dkey.row_mut(j)[cols.clone()]);
            }
        }
    }

    g.query
        .add_scaled(
            1.0,
            &head_rows(&tape.normed1, rows).t_matmul(&dquery).unwrap(),
        )
        .unwrap();
    g.key
        .add_scaled(1.0, &tape.normed1.t_matmul(&dkey).unwrap())
        .unwrap();
    g.value
        .add_scaled(1.0, &tape.normed1.t_matmul(&dvalue).unwrap())
        .unwrap();

    let mut dnormed1 = dkey.matmul_t(&p.key).unwrap();
    dnormed1
        .add_scaled(1.0, &dvalue.matmul_t(&p.value).unwrap())
        .unwrap();
    let dq_in = dquery.matmul_t(&p.query).unwrap();
    axpy(
        1.0,
        dq_in.as_slice(),
        &mut dnormed1.as_mut_slice()[..rows * config.hidden_dim],
    );

    let mut dx = layer_norm_backward(
        &tape.ln1,
        &p.ln1_scale,
        &dnormed1,
        &mut g.ln1_scale,
        &mut g.ln1_offset,
    );
    axpy(
        1.0,
        dx1.as_slice(),
        &mut dx.as_mut_slice()[..rows * config.hidden_dim],
    );
    dx
}

/// Recorded activations of one sequence's forward pass.
#[derive(Debug, Clone)]
pub(crate) struct SequenceTape {
    tokens: Vec<u32>,
    embed_mask: Option<Matrix>,
    layers: Vec<LayerTape>,
    final_norm: NormCache,
}

/// Forward pass of one (unpadded) sequence; returns the final `[CLS]` state.
pub(crate) fn forward_sequence(
    params: &EncoderParams,
    config: &ModelConfig,
    tokens: &[u32],
    mut dropout: Option<&mut Rng>,
) -> (Vec<f64>, SequenceTape) {
    let t = tokens.len();
    let d = config.hidden_dim;
    let mut x = Matrix::zeros(t, d);
    for (pos, &tok) in tokens.iter().enumerate() {
        let row = x.row_mut(pos);
        row.copy_from_slice(params.token_embedding.row(tok as usize));
        axpy(1.0, params.position_embedding.row(pos), row);
    }
    let embed_mask = dropout.as_deref_mut().map(|rng| {
        let m = dropout_mask(t, d, config.dropout_p, rng);
        apply_mask(&mut x, &m);
        m
    });

    let n_layers = params.layers.len();
    let mut layers = Vec::with_capacity(n_layers);
    for (l, lp) in params.layers.iter().enumerate() {
        // Only the [CLS] position leaves the last block.
        let rows = if l + 1 == n_layers { 1 } else { t };
        let (next, tape) = layer_forward(lp, config, &x, rows, dropout.as_deref_mut());
        x = next;
        layers.push(tape);
    }
    let cls = head_rows(&x, 1);
    let (out, final_norm) = layer_norm(&cls, &params.final_scale, &params.final_offset);
    (
        out.into_vec(),
        SequenceTape {
            tokens: tokens.to_vec(),
            embed_mask,
            layers,
            final_norm,
        },
    )
}

/// Accumulates parameter gradients of one sequence into `grads`.
pub(crate) fn backward_sequence(
    params: &EncoderParams,
    config: &ModelConfig,
    tape: &SequenceTape,
    d_cls: &[f64],
    grads: &mut EncoderParams,
) {
    let d = config.hidden_dim;
    let dy = Matrix::from_vec(1, d, d_cls.to_vec()).expect("hidden-sized gradient");
    let mut dx = layer_norm_backward(
        &tape.final_norm,
        &params.final_scale,
        &dy,
        &mut grads.final_scale,
        &mut grads.final_offset,
    );
    for l in (0..params.layers.len()).rev() {
        dx = layer_backward(
            &params.layers[l],
            &mut grads.layers[l],
            config,
            &tape.layers[l],
            &dx,
        );
    }
    if let Some(m) = &tape.embed_mask {
        let rows = dx.rows();
        let mask = head_rows(m, rows);
        apply_mask(&mut dx, &mask);
    }
    // With no blocks only the [CLS] row carries gradient.
    for (pos, &tok) in tape.tokens.iter().enumerate().take(dx.rows()) {
        let r = dx.row(pos);
        axpy(1.0, r, grads.token_embedding.row_mut(tok as usize));
        axpy(1.0, r, grads.position_embedding.row_mut(pos));
    }
}
