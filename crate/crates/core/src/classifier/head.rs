//! Gated fusion of encoder output with the three feature tracks.
//!
//! Per character position, with `h1` the encoder output:
//!
//! ```text
//! h2 = relu(h1·W1 + b1)
//! f1 = relu(e_pos[pos]·W_pos + e_neg[neg]·W_neg + e_order[order]·W_order + b_f)
//! h3 = tanh([f1;h2]·W_fm + b_fm)
//! g  = sigmoid([f1;h2]·W_g + c_g)
//! o  = g⊙h3 + (1−g)⊙h2
//! ```
//!
//! then `c = [max_rows(o); mean_rows(o)]` and `y = softmax(c·W_y + b_y)`.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::features::ContextSample;
use crate::rng;

pub const NUM_LABELS: usize = 3;

pub(crate) fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let m = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = logits.mapv(|x| (x - m).exp());
    let z = e.sum();
    e / z
}

/// All head parameters. The same struct holds gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedFusionHead {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub e_pos: Array2<f64>,
    pub e_neg: Array2<f64>,
    pub e_order: Array2<f64>,
    pub w_pos: Array2<f64>,
    pub w_neg: Array2<f64>,
    pub w_order: Array2<f64>,
    pub b_f: Array1<f64>,
    pub w_fm: Array2<f64>,
    pub b_fm: Array1<f64>,
    pub w_g: Array2<f64>,
    pub c_g: Array1<f64>,
    pub w_y: Array2<f64>,
    pub b_y: Array1<f64>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub h1: Array2<f64>,
    pub pre2: Array2<f64>,
    pub h2: Array2<f64>,
    pub f_pos: Array2<f64>,
    pub f_neg: Array2<f64>,
    pub f_order: Array2<f64>,
    pub pre_f1: Array2<f64>,
    pub f1: Array2<f64>,
    pub z: Array2<f64>,
    pub h3: Array2<f64>,
    pub g: Array2<f64>,
    pub o: Array2<f64>,
    pub argmax: Vec<usize>,
    pub c: Array1<f64>,
    pub probs: Array1<f64>,
}

/// Which feature tracks are fed to the head; a disabled track is read as
/// all zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureMask {
    pub pos: bool,
    pub neg: bool,
    pub order: bool,
}

impl Default for FeatureMask {
    fn default() -> Self {
        FeatureMask { pos: true, neg: true, order: true }
    }
}

fn xavier(r: &mut rng::Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    let a = scale * (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || r.gen_range(-a..a))
}

fn lookup(table: &Array2<f64>, bits: &[u8], enabled: bool) -> Array2<f64> {
    let mut out = Array2::zeros((bits.len(), table.ncols()));
    for (i, &b) in bits.iter().enumerate() {
        let idx = if enabled { b.min(1) as usize } else { 0 };
        out.row_mut(i).assign(&table.row(idx));
    }
    out
}

impl GatedFusionHead {
    /// Randomly initialized head. `d_enc` is the encoder width, `d` the
    /// fused width and `d_f` the feature-embedding width.
    pub fn new(d_enc: usize, d: usize, d_f: usize, seed: u64) -> Self {
        let mut r = rng::derived(seed, 23);
        let emb = |r: &mut rng::Rng| Array2::from_shape_simple_fn((2, d_f), || r.gen_range(-0.5..0.5));
        let e_pos = emb(&mut r);
        let e_neg = emb(&mut r);
        let e_order = emb(&mut r);
        GatedFusionHead {
            w1: xavier(&mut r, d_enc, d, 1.0),
            b1: Array1::zeros(d),
            e_pos,
            e_neg,
            e_order,
            w_pos: xavier(&mut r, d_f, d, 1.0),
            w_neg: xavier(&mut r, d_f, d, 1.0),
            w_order: xavier(&mut r, d_f, d, 1.0),
            b_f: Array1::zeros(d),
            w_fm: xavier(&mut r, 2 * d, d, 1.0),
            b_fm: Array1::zeros(d),
            w_g: xavier(&mut r, 2 * d, d, 1.0),
            c_g: Array1::zeros(d),
            w_y: xavier(&mut r, 2 * d, NUM_LABELS, 0.1),
            b_y: Array1::zeros(NUM_LABELS),
        }
    }

    /// A zero-valued head with the same shapes, used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn d_enc(&self) -> usize {
        self.w1.nrows()
    }

    pub fn d(&self) -> usize {
        self.w1.ncols()
    }

    pub fn d_f(&self) -> usize {
        self.e_pos.ncols()
    }

    /// Tensors in a fixed order (also the serialization order).
    pub fn tensors(&self) -> [&[f64]; 15] {
        [
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.e_pos.as_slice().unwrap(),
            self.e_neg.as_slice().unwrap(),
            self.e_order.as_slice().unwrap(),
            self.w_pos.as_slice().unwrap(),
            self.w_neg.as_slice().unwrap(),
            self.w_order.as_slice().unwrap(),
            self.b_f.as_slice().unwrap(),
            self.w_fm.as_slice().unwrap(),
            self.b_fm.as_slice().unwrap(),
            self.w_g.as_slice().unwrap(),
            self.c_g.as_slice().unwrap(),
            self.w_y.as_slice().unwrap(),
            self.b_y.as_slice().unwrap(),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 15] {
        [
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.e_pos.as_slice_mut().unwrap(),
            self.e_neg.as_slice_mut().unwrap(),
            self.e_order.as_slice_mut().unwrap(),
            self.w_pos.as_slice_mut().unwrap(),
            self.w_neg.as_slice_mut().unwrap(),
            self.w_order.as_slice_mut().unwrap(),
            self.b_f.as_slice_mut().unwrap(),
            self.w_fm.as_slice_mut().unwrap(),
            self.b_fm.as_slice_mut().unwrap(),
            self.w_g.as_slice_mut().unwrap(),
            self.c_g.as_slice_mut().unwrap(),
            self.w_y.as_slice_mut().unwrap(),
            self.b_y.as_slice_mut().unwrap(),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    fn check(&self, h1: &ArrayView2<f64>, sample: &ContextSample) -> Result<()> {
        if h1.ncols() != self.d_enc() {
            return Err(Error::ShapeMismatch(format!("encoder width {} but head expects {}", h1.ncols(), self.d_enc())));
        }
        if !sample.tracks_aligned() || h1.nrows() != sample.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} encoder rows, tracks {}/{}/{}",
                h1.nrows(),
                sample.pos_track.len(),
                sample.neg_track.len(),
                sample.order_track.len()
            )));
        }
        if sample.is_empty() {
            return Err(Error::EmptyContext);
        }
        Ok(())
    }

    pub fn forward(&self, h1: ArrayView2<f64>, sample: &ContextSample) -> Result<Array1<f64>> {
        Ok(self.forward_trace(h1, sample, FeatureMask::default())?.probs)
    }

    pub fn forward_trace(&self, h1: ArrayView2<f64>, sample: &ContextSample, mask: FeatureMask) -> Result<ForwardTrace> {
        self.check(&h1, sample)?;
        let d = self.d();
        let len = h1.nrows();
        let pre2 = h1.dot(&self.w1) + &self.b1;
        let h2 = pre2.mapv(relu);
        let f_pos = lookup(&self.e_pos, &sample.pos_track, mask.pos);
        let f_neg = lookup(&self.e_neg, &sample.neg_track, mask.neg);
        let f_order = lookup(&self.e_order, &sample.order_track, mask.order);
        let pre_f1 = f_pos.dot(&self.w_pos) + f_neg.dot(&self.w_neg) + f_order.dot(&self.w_order) + &self.b_f;
        let f1 = pre_f1.mapv(relu);
        let z = concatenate(Axis(1), &[f1.view(), h2.view()]).expect("equal row counts");
        let h3 = (z.dot(&self.w_fm) + &self.b_fm).mapv(f64::tanh);
        let g = (z.dot(&self.w_g) + &self.c_g).mapv(sigmoid);
        let o = &g * &h3 + &(1.0 - &g) * &h2;

        let mut c = Array1::zeros(2 * d);
        let mut argmax = vec![0usize; d];
        for k in 0..d {
            let col = o.column(k);
            let mut best = 0;
            for i in 1..len {
                if col[i] > col[best] {
                    best = i;
                }
            }
            argmax[k] = best;
            c[k] = col[best];
            c[d + k] = col.sum() / len as f64;
        }
        let probs = softmax(&(c.dot(&self.w_y) + &self.b_y));
        Ok(ForwardTrace {
            h1: h1.to_owned(),
            pre2,
            h2,
            f_pos,
            f_neg,
            f_order,
            pre_f1,
            f1,
            z,
            h3,
            g,
            o,
            argmax,
            c,
            probs,
        })
    }

    /// Same pooling and output layer applied directly to `h2`, i.e. the
    /// model with the fusion branch removed.
    pub fn forward_encoder_only(&self, h1: ArrayView2<f64>) -> Array1<f64> {
        let h2 = (h1.dot(&self.w1) + &self.b1).mapv(relu);
        let d = self.d();
        let mut c = Array1::zeros(2 * d);
        for k in 0..d {
            let col = h2.column(k);
            c[k] = col.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            c[d + k] = col.sum() / h2.nrows() as f64;
        }
        softmax(&(c.dot(&self.w_y) + &self.b_y))
    }

    /// Backpropagates d(loss)/d(logits) through the head, accumulating into
    /// `grad` and returning d(loss)/d(h1) for the encoder.
    pub fn backward(&self, t: &ForwardTrace, sample: &ContextSample, mask: FeatureMask, dlogits: &Array1<f64>, grad: &mut GatedFusionHead) -> Array2<f64> {
        let d = self.d();
        let len = t.o.nrows();

        for (i, &ci) in t.c.iter().enumerate() {
            for (j, &dl) in dlogits.iter().enumerate() {
                grad.w_y[[i, j]] += ci * dl;
            }
        }
        grad.b_y += dlogits;
        let dc = self.w_y.dot(dlogits);

        let mut d_o = Array2::from_shape_fn((len, d), |(_, k)| dc[d + k] / len as f64);
        for k in 0..d {
            d_o[[t.argmax[k], k]] += dc[k];
        }

        let dg = &d_o * &(&t.h3 - &t.h2);
        let dh3 = &d_o * &t.g;
        let mut dh2 = &d_o * &(1.0 - &t.g);
        let dpre3 = &dh3 * &t.h3.mapv(|h| 1.0 - h * h);
        let dpreg = &dg * &t.g.mapv(|g| g * (1.0 - g));

        grad.w_fm += &t.z.t().dot(&dpre3);
        grad.b_fm += &dpre3.sum_axis(Axis(0));
        grad.w_g += &t.z.t().dot(&dpreg);
        grad.c_g += &dpreg.sum_axis(Axis(0));
        let dz = dpre3.dot(&self.w_fm.t()) + dpreg.dot(&self.w_g.t());

        let df1 = dz.slice(s![.., ..d]);
        dh2 += &dz.slice(s![.., d..]);

        let dpre_f1 = &df1 * &t.pre_f1.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
        grad.w_pos += &t.f_pos.t().dot(&dpre_f1);
        grad.w_neg += &t.f_neg.t().dot(&dpre_f1);
        grad.w_order += &t.f_order.t().dot(&dpre_f1);
        grad.b_f += &dpre_f1.sum_axis(Axis(0));
        let tracks = [
            (&sample.pos_track, &self.w_pos, &mut grad.e_pos, mask.pos),
            (&sample.neg_track, &self.w_neg, &mut grad.e_neg, mask.neg),
            (&sample.order_track, &self.w_order, &mut grad.e_order, mask.order),
        ];
        for (bits, w, g_emb, enabled) in tracks {
            let df = dpre_f1.dot(&w.t());
            for (i, &b) in bits.iter().enumerate() {
                let idx = if enabled { b.min(1) as usize } else { 0 };
                let mut row = g_emb.row_mut(idx);
                row += &df.row(i);
            }
        }

        let dpre2 = &dh2 * &t.pre2.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
        grad.w1 += &t.h1.t().dot(&dpre2);
        grad.b1 += &dpre2.sum_axis(Axis(0));
        dpre2.dot(&self.w1.t())
    }
}
