use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng as _;

use crate::rng;
use crate::vocab::CharVocab;

use super::pairs::DEFAULT_MAX_NAME;

/// Name encoder: mean of character embeddings over the first 50 characters.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEncoder {
    pub vocab: CharVocab,
    pub table: Array2<f64>,
}

impl PairEncoder {
    pub fn new(vocab: CharVocab, dim: usize, seed: u64) -> Self {
        let mut r = rng::derived(seed, 61);
        let table = Array2::from_shape_simple_fn((vocab.size(), dim), || r.gen_range(-0.5..0.5));
        PairEncoder { vocab, table }
    }

    pub fn dim(&self) -> usize {
        self.table.ncols()
    }

    fn ids(&self, name: &str) -> Vec<u32> {
        let mut ids = self.vocab.encode(name);
        ids.truncate(DEFAULT_MAX_NAME);
        ids
    }

    pub fn embed(&self, name: &str) -> Array1<f64> {
        let ids = self.ids(name);
        let mut out = Array1::zeros(self.dim());
        if ids.is_empty() {
            return out;
        }
        let w = 1.0 / ids.len() as f64;
        for id in ids {
            out.scaled_add(w, &self.table.row(id as usize));
        }
        out
    }

    /// Accumulates d(loss)/d(table) given d(loss)/d(embed(name)).
    pub fn backward(&self, name: &str, grad: ArrayView1<f64>, table_grad: &mut Array2<f64>) {
        let ids = self.ids(name);
        if ids.is_empty() {
            return;
        }
        let w = 1.0 / ids.len() as f64;
        for id in ids {
            table_grad.row_mut(id as usize).scaled_add(w, &grad);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_is_mean_of_rows() {
        let e = PairEncoder::new(CharVocab::build(["肺炎"]), 4, 1);
        let row = |c| e.table.row(e.vocab.id(c) as usize).to_owned();
        let expect = (row('肺') + row('炎')) / 2.0;
        assert!((e.embed("肺炎") - expect).iter().all(|x| x.abs() < 1e-15));
        assert_eq!(e.embed(""), Array1::<f64>::zeros(4));
    }
}
