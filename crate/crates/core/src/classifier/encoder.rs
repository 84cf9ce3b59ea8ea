use ndarray::{Array2, ArrayView2};
use rand::Rng as _;

use crate::rng;
use crate::vocab::CharVocab;

/// A trainable contextual encoder: one output row per input character.
pub trait Encoder: Send + Sync {
    fn dim(&self) -> usize;

    fn encode(&self, text: &str) -> Array2<f64>;

    /// Accumulates d(loss)/d(params) into `param_grad` given d(loss)/d(output).
    fn backward(&self, text: &str, grad_out: ArrayView2<f64>, param_grad: &mut [f64]);

    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];
}

/// Character embeddings averaged over a symmetric window of `radius`
/// neighbours on each side (clipped at the text edges).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowEncoder {
    pub vocab: CharVocab,
    pub table: Array2<f64>,
    pub radius: usize,
}

impl WindowEncoder {
    pub const DEFAULT_RADIUS: usize = 2;

    pub fn new(vocab: CharVocab, dim: usize, radius: usize, seed: u64) -> Self {
        let mut r = rng::derived(seed, 11);
        let table = Array2::from_shape_simple_fn((vocab.size(), dim), || r.gen_range(-0.5..0.5));
        WindowEncoder { vocab, table, radius }
    }

    fn window(&self, i: usize, len: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.radius)..(i + self.radius + 1).min(len)
    }
}

impl Encoder for WindowEncoder {
    fn dim(&self) -> usize {
        self.table.ncols()
    }

    fn encode(&self, text: &str) -> Array2<f64> {
        let ids = self.vocab.encode(text);
        let mut out = Array2::zeros((ids.len(), self.dim()));
        for i in 0..ids.len() {
            let w = self.window(i, ids.len());
            let n = w.len() as f64;
            let mut row = out.row_mut(i);
            for j in w {
                row.scaled_add(1.0 / n, &self.table.row(ids[j] as usize));
            }
        }
        out
    }

    fn backward(&self, text: &str, grad_out: ArrayView2<f64>, param_grad: &mut [f64]) {
        let ids = self.vocab.encode(text);
        let d = self.dim();
        for i in 0..ids.len() {
            let w = self.window(i, ids.len());
            let n = w.len() as f64;
            let g = grad_out.row(i);
            for j in w {
                let base = ids[j] as usize * d;
                for k in 0..d {
                    param_grad[base + k] += g[k] / n;
                }
            }
        }
    }

    fn params(&self) -> &[f64] {
        self.table.as_slice().expect("table is contiguous")
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.table.as_slice_mut().expect("table is contiguous")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_match_input_length_and_average_window() {
        let vocab = CharVocab::build(["abc"]);
        let enc = WindowEncoder::new(vocab, 3, 1, 7);
        let h = enc.encode("abc");
        assert_eq!(h.dim(), (3, 3));
        let t = |c: char| enc.table.row(enc.vocab.id(c) as usize).to_owned();
        let expect0 = (t('a') + t('b')) / 2.0;
        let expect1 = (t('a') + t('b') + t('c')) / 3.0;
        assert!((h.row(0).to_owned() - expect0).iter().all(|x| x.abs() < 1e-15));
        assert!((h.row(1).to_owned() - expect1).iter().all(|x| x.abs() < 1e-15));
        assert_eq!(enc.encode("abc"), h);
    }
}
