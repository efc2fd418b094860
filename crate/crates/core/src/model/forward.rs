use super::{Architecture, DenseSlot, Head, ModelConfig, ModelParams};
use crate::datasets::WindowSet;
use crate::error::{Error, Result};
use crate::tensor::{dot, matvec_t_acc, outer_acc, vecmat_acc, Mat};

/// Every intermediate of a full (all-token) forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub x_emb: Mat,
    pub q: Mat,
    pub k: Mat,
    pub v: Mat,
    /// Causal attention matrix; entries above the diagonal are exactly zero.
    pub a: Mat,
    pub z: Mat,
    /// `Z + X_emb`.
    pub r: Mat,
    pub prediction: Vec<f64>,
}

impl ForwardTrace {
    /// Last attention row.
    pub fn last_alpha(&self) -> &[f64] {
        self.a.row(self.a.rows() - 1)
    }
}

/// Reusable buffers for last-token forward and backward passes.
#[derive(Debug, Clone)]
pub struct Workspace {
    l: usize,
    d: usize,
    e: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    q: Vec<f64>,
    alpha: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    acts: Vec<Vec<f64>>,
    dacts: Vec<Vec<f64>>,
    dy: Vec<f64>,
    dr: Vec<f64>,
    dz: Vec<f64>,
    dalpha: Vec<f64>,
    dq: Vec<f64>,
    dk: Vec<f64>,
    dv: Vec<f64>,
    de: Vec<f64>,
}

impl Workspace {
    pub fn new(cfg: &ModelConfig, params: &ModelParams) -> Self {
        let l = cfg.context_len;
        let d = cfg.d_model;
        let head_in = match cfg.arch {
            Architecture::Transformer => d,
            Architecture::Mlp => cfg.token_dim(),
        };
        let widths: Vec<usize> = params.layout.dense.iter().map(|s| s.w.cols).collect();
        Workspace {
            l,
            d,
            e: vec![0.0; l * d],
            k: vec![0.0; l * d],
            v: vec![0.0; l * d],
            q: vec![0.0; d],
            alpha: vec![0.0; l],
            z: vec![0.0; d],
            r: vec![0.0; head_in],
            acts: widths.iter().map(|&w| vec![0.0; w]).collect(),
            dacts: widths.iter().map(|&w| vec![0.0; w]).collect(),
            dy: vec![0.0; cfg.input_dim],
            dr: vec![0.0; head_in],
            dz: vec![0.0; d],
            dalpha: vec![0.0; l],
            dq: vec![0.0; d],
            dk: vec![0.0; l * d],
            dv: vec![0.0; l * d],
            de: vec![0.0; l * d],
        }
    }
}

fn check_window(cfg: &ModelConfig, window: &[f64]) -> Result<()> {
    let td = cfg.token_dim();
    let ok = match cfg.arch {
        Architecture::Transformer => window.len() == cfg.context_len * td,
        Architecture::Mlp => window.len() >= td && window.len().is_multiple_of(td),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: cfg.context_len * td,
            got: window.len(),
        })
    }
}

fn dense_forward(params: &ModelParams, cfg: &ModelConfig, dense: &[DenseSlot], input: &[f64], acts: &mut [Vec<f64>]) {
    let n = dense.len();
    for (i, s) in dense.iter().enumerate() {
        let (prev, rest) = acts.split_at_mut(i);
        let x: &[f64] = if i == 0 { input } else { &prev[i - 1] };
        let out = &mut rest[0];
        out.copy_from_slice(params.get(s.b));
        vecmat_acc(x, params.get(s.w), out);
        if i + 1 < n {
            for o in out.iter_mut() {
                *o = cfg.activation.apply(*o);
            }
        }
    }
}

/// Last-token forward pass; the prediction is written to `out`.
fn forward_last(params: &ModelParams, cfg: &ModelConfig, window: &[f64], ws: &mut Workspace, out: &mut [f64]) {
    let lay = &params.layout;
    let td = cfg.token_dim();
    if cfg.arch == Architecture::Mlp {
        let last = &window[window.len() - td..];
        ws.r.copy_from_slice(last);
        dense_forward(params, cfg, &lay.dense, &ws.r, &mut ws.acts);
        out.copy_from_slice(ws.acts.last().expect("mlp has an output layer"));
        return;
    }
    let (l, d) = (ws.l, ws.d);
    for j in 0..l {
        let x = &window[j * td..(j + 1) * td];
        let e = &mut ws.e[j * d..(j + 1) * d];
        match lay.w_emb {
            Some(s) => {
                e.fill(0.0);
                vecmat_acc(x, params.get(s), e);
            }
            None => e.copy_from_slice(x),
        }
        if let Some(s) = lay.pe {
            for (ev, pv) in e.iter_mut().zip(&params.get(s)[j * d..(j + 1) * d]) {
                *ev += pv;
            }
        }
    }
    let wq = params.get(lay.w_q.expect("transformer"));
    let wk = params.get(lay.w_k.expect("transformer"));
    let wv = params.get(lay.w_v.expect("transformer"));
    ws.k.fill(0.0);
    ws.v.fill(0.0);
    for j in 0..l {
        let e = &ws.e[j * d..(j + 1) * d];
        vecmat_acc(e, wk, &mut ws.k[j * d..(j + 1) * d]);
        vecmat_acc(e, wv, &mut ws.v[j * d..(j + 1) * d]);
    }
    ws.q.fill(0.0);
    vecmat_acc(&ws.e[(l - 1) * d..], wq, &mut ws.q);
    let scale = 1.0 / (d as f64).sqrt();
    let mut smax = f64::NEG_INFINITY;
    for j in 0..l {
        let s = dot(&ws.q, &ws.k[j * d..(j + 1) * d]) * scale;
        ws.alpha[j] = s;
        smax = smax.max(s);
    }
    let mut tot = 0.0;
    for a in ws.alpha.iter_mut() {
        *a = (*a - smax).exp();
        tot += *a;
    }
    for a in ws.alpha.iter_mut() {
        *a /= tot;
    }
    ws.z.fill(0.0);
    for j in 0..l {
        let a = ws.alpha[j];
        for (zc, vc) in ws.z.iter_mut().zip(&ws.v[j * d..(j + 1) * d]) {
            *zc += a * vc;
        }
    }
    match cfg.head {
        Head::Linear => {
            out.fill(0.0);
            vecmat_acc(&ws.z, params.get(lay.w_o.expect("linear head")), out);
        }
        Head::Mlp => {
            for c in 0..d {
                ws.r[c] = ws.z[c] + ws.e[(l - 1) * d + c];
            }
            dense_forward(params, cfg, &lay.dense, &ws.r, &mut ws.acts);
            out.copy_from_slice(ws.acts.last().expect("mlp head has an output layer"));
        }
    }
}

/// Back-propagate `ws.dy` through the most recent `forward_last`, accumulating into `grad`.
fn backward_last(params: &ModelParams, cfg: &ModelConfig, window: &[f64], ws: &mut Workspace, grad: &mut [f64]) {
    let lay = &params.layout;
    let td = cfg.token_dim();
    let (l, d) = (ws.l, ws.d);

    if cfg.head == Head::Mlp {
        let n = lay.dense.len();
        ws.dacts[n - 1].copy_from_slice(&ws.dy);
        for i in (0..n).rev() {
            let s = lay.dense[i];
            {
                let (before, rest) = ws.dacts.split_at_mut(i);
                let g = &mut rest[0];
                if i + 1 < n {
                    for (gv, &y) in g.iter_mut().zip(&ws.acts[i]) {
                        *gv *= cfg.activation.deriv_from_output(y);
                    }
                }
                let x: &[f64] = if i == 0 { &ws.r } else { &ws.acts[i - 1] };
                outer_acc(x, g, &mut grad[s.w.range()]);
                for (gb, &gv) in grad[s.b.range()].iter_mut().zip(g.iter()) {
                    *gb += gv;
                }
                let dst: &mut [f64] = if i == 0 {
                    ws.dr.fill(0.0);
                    &mut ws.dr
                } else {
                    let prev = &mut before[i - 1];
                    prev.fill(0.0);
                    prev
                };
                matvec_t_acc(params.get(s.w), g, dst);
            }
        }
        if cfg.arch == Architecture::Mlp {
            return;
        }
    }

    ws.de.fill(0.0);
    match cfg.head {
        Head::Linear => {
            let so = lay.w_o.expect("linear head");
            outer_acc(&ws.z, &ws.dy, &mut grad[so.range()]);
            ws.dz.fill(0.0);
            matvec_t_acc(params.get(so), &ws.dy, &mut ws.dz);
        }
        Head::Mlp => {
            ws.dz.copy_from_slice(&ws.dr);
            for c in 0..d {
                ws.de[(l - 1) * d + c] += ws.dr[c];
            }
        }
    }

    let mut sbar = 0.0;
    for j in 0..l {
        let da = dot(&ws.dz, &ws.v[j * d..(j + 1) * d]);
        ws.dalpha[j] = da;
        sbar += ws.alpha[j] * da;
    }
    let scale = 1.0 / (d as f64).sqrt();
    ws.dq.fill(0.0);
    for j in 0..l {
        let a = ws.alpha[j];
        let ds = a * (ws.dalpha[j] - sbar) * scale;
        for c in 0..d {
            ws.dv[j * d + c] = a * ws.dz[c];
            ws.dq[c] += ds * ws.k[j * d + c];
            ws.dk[j * d + c] = ds * ws.q[c];
        }
    }

    let (sq, sk, sv) = (
        lay.w_q.expect("transformer"),
        lay.w_k.expect("transformer"),
        lay.w_v.expect("transformer"),
    );
    for j in 0..l {
        let e = &ws.e[j * d..(j + 1) * d];
        let dv = &ws.dv[j * d..(j + 1) * d];
        let dk = &ws.dk[j * d..(j + 1) * d];
        outer_acc(e, dv, &mut grad[sv.range()]);
        outer_acc(e, dk, &mut grad[sk.range()]);
        let de = &mut ws.de[j * d..(j + 1) * d];
        matvec_t_acc(params.get(sv), dv, de);
        matvec_t_acc(params.get(sk), dk, de);
    }
    let e_last = &ws.e[(l - 1) * d..];
    outer_acc(e_last, &ws.dq, &mut grad[sq.range()]);
    matvec_t_acc(params.get(sq), &ws.dq, &mut ws.de[(l - 1) * d..]);

    if let Some(s) = lay.pe {
        for (g, &v) in grad[s.range()].iter_mut().zip(&ws.de) {
            *g += v;
        }
    }
    if let Some(s) = lay.w_emb {
        for j in 0..l {
            outer_acc(
                &window[j * td..(j + 1) * td],
                &ws.de[j * d..(j + 1) * d],
                &mut grad[s.range()],
            );
        }
    }
}

/// Mean squared one-step error over the windows `idx` of `data`, with its gradient
/// written to `grad` (overwritten).
pub fn loss_and_grad(
    params: &ModelParams,
    cfg: &ModelConfig,
    data: &WindowSet,
    idx: &[usize],
    grad: &mut [f64],
    ws: &mut Workspace,
) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if grad.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            got: grad.len(),
        });
    }
    check_window(cfg, data.window(idx[0]))?;
    grad.fill(0.0);
    let p = cfg.input_dim;
    let norm = 1.0 / (idx.len() * p) as f64;
    let mut y = vec![0.0; p];
    let mut loss = 0.0;
    for &i in idx {
        let w = data.window(i);
        forward_last(params, cfg, w, ws, &mut y);
        for ((dy, &yv), &t) in ws.dy.iter_mut().zip(&y).zip(data.target(i)) {
            let r = yv - t;
            loss += r * r;
            *dy = 2.0 * r * norm;
        }
        backward_last(params, cfg, w, ws, grad);
    }
    let loss = loss * norm;
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    Ok(loss)
}

/// Next-step prediction for one window (token-major, `L × token_dim`).
pub fn predict(params: &ModelParams, cfg: &ModelConfig, window: &[f64]) -> Result<Vec<f64>> {
    check_window(cfg, window)?;
    let mut ws = Workspace::new(cfg, params);
    let mut y = vec![0.0; cfg.input_dim];
    forward_last(params, cfg, window, &mut ws, &mut y);
    finite(&y, "prediction")?;
    Ok(y)
}

pub(crate) fn predict_into(
    params: &ModelParams,
    cfg: &ModelConfig,
    window: &[f64],
    ws: &mut Workspace,
    out: &mut [f64],
) -> Result<()> {
    check_window(cfg, window)?;
    forward_last(params, cfg, window, ws, out);
    Ok(())
}

/// Predictions for every window of `data`, flattened `n × p`.
pub fn predict_batch(params: &ModelParams, cfg: &ModelConfig, data: &WindowSet) -> Result<Vec<f64>> {
    let p = cfg.input_dim;
    let mut ws = Workspace::new(cfg, params);
    let mut out = vec![0.0; data.n * p];
    for i in 0..data.n {
        predict_into(params, cfg, data.window(i), &mut ws, &mut out[i * p..(i + 1) * p])?;
    }
    finite(&out, "prediction")?;
    Ok(out)
}

/// Mean squared error over all windows and output channels.
pub fn evaluate_mse(params: &ModelParams, cfg: &ModelConfig, data: &WindowSet) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty window set"));
    }
    let pred = predict_batch(params, cfg, data)?;
    let se: f64 = pred.iter().zip(&data.targets).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(se / pred.len() as f64)
}

fn finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// Apply the prediction head to a head input (`R_n` for the MLP head, `Z_n` for
/// the linear head, the raw token for the MLP baseline).
pub fn head_forward(params: &ModelParams, cfg: &ModelConfig, input: &[f64]) -> Result<Vec<f64>> {
    let lay = &params.layout;
    let mut out = vec![0.0; cfg.input_dim];
    match cfg.head {
        Head::Linear => {
            let s = lay.w_o.expect("linear head");
            if input.len() != s.rows {
                return Err(Error::DimensionMismatch {
                    expected: s.rows,
                    got: input.len(),
                });
            }
            vecmat_acc(input, params.get(s), &mut out);
        }
        Head::Mlp => {
            let s0 = lay.dense[0].w;
            if input.len() != s0.rows {
                return Err(Error::DimensionMismatch {
                    expected: s0.rows,
                    got: input.len(),
                });
            }
            let mut acts: Vec<Vec<f64>> = lay.dense.iter().map(|s| vec![0.0; s.w.cols]).collect();
            dense_forward(params, cfg, &lay.dense, input, &mut acts);
            out.copy_from_slice(acts.last().expect("output layer"));
        }
    }
    Ok(out)
}

/// The feed-forward map of the MLP baseline.
pub fn mlp_forward(params: &ModelParams, cfg: &ModelConfig, x: &[f64]) -> Result<Vec<f64>> {
    if cfg.arch != Architecture::Mlp {
        return Err(Error::invalid("mlp_forward requires the MLP architecture"));
    }
    head_forward(params, cfg, x)
}

/// Full forward pass recording every token's activations.
/// Row-wise softmax of a square logit matrix over the lower triangle; entries
/// above the diagonal are exactly zero.
pub fn causal_softmax(logits: &Mat) -> Mat {
    let l = logits.rows();
    let mut a = Mat::zeros(l, logits.cols());
    for i in 0..l {
        let row = &logits.row(i)[..=i.min(logits.cols() - 1)];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<f64> = row.iter().map(|s| (s - m).exp()).collect();
        let tot: f64 = ex.iter().sum();
        for (j, v) in ex.iter().enumerate() {
            a[(i, j)] = v / tot;
        }
    }
    a
}

pub fn forward(params: &ModelParams, cfg: &ModelConfig, window: &[f64]) -> Result<ForwardTrace> {
    if cfg.arch != Architecture::Transformer {
        return Err(Error::invalid("forward trace requires the transformer architecture"));
    }
    check_window(cfg, window)?;
    let (l, d, td) = (cfg.context_len, cfg.d_model, cfg.token_dim());
    let x = Mat::from_vec(l, td, window.to_vec());
    let mut e = x.matmul(&params.embedding(cfg));
    if let Some(pe) = params.tensor("P") {
        e = e.add(&pe);
    }
    let q = e.matmul(&params.tensor("W_Q").expect("transformer"));
    let k = e.matmul(&params.tensor("W_K").expect("transformer"));
    let v = e.matmul(&params.tensor("W_V").expect("transformer"));
    let a = causal_softmax(&q.matmul(&k.transpose()).scale(1.0 / (d as f64).sqrt()));
    let z = a.matmul(&v);
    let r = z.add(&e);
    let head_in = match cfg.head {
        Head::Linear => z.row(l - 1).to_vec(),
        Head::Mlp => r.row(l - 1).to_vec(),
    };
    let prediction = head_forward(params, cfg, &head_in)?;
    for (m, what) in [(&e, "embedding"), (&a, "attention"), (&z, "context")] {
        if !m.is_finite() {
            return Err(Error::NonFinite(what.into()));
        }
    }
    finite(&prediction, "prediction")?;
    Ok(ForwardTrace {
        x_emb: e,
        q,
        k,
        v,
        a,
        z,
        r,
        prediction,
    })
}
