//! In-batch InfoNCE over cosine similarities.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::encoder::PairEncoder;
use super::pairs::{DiseasePair, Polarity};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_TAU: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub tau: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Add the dissimilar partners of batch anchors as extra negatives.
    pub hard_negatives: bool,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig { tau: DEFAULT_TAU, learning_rate: 1e-6, batch_size: 256, epochs: 5, seed: 0, hard_negatives: true }
    }
}

const NORM_FLOOR: f64 = 1e-12;

fn cosine(x: ArrayView1<f64>, y: ArrayView1<f64>) -> (f64, f64, f64) {
    let nx = x.dot(&x).sqrt().max(NORM_FLOOR);
    let ny = y.dot(&y).sqrt().max(NORM_FLOOR);
    (x.dot(&y) / (nx * ny), nx, ny)
}

/// Loss and gradients for anchors `u`, positives `v` (row-aligned) and
/// optional extra negatives `hard`.
#[derive(Debug, Clone)]
pub struct InfoNce {
    pub loss: f64,
    pub du: Array2<f64>,
    pub dv: Array2<f64>,
    pub dhard: Array2<f64>,
}

/// Mean over rows of `−log(exp(cos(u_i,v_i)/τ) / Σ_j exp(cos(u_i,c_j)/τ))`
/// where `c` runs over all rows of `v` and then all rows of `hard`.
pub fn info_nce(u: &Array2<f64>, v: &Array2<f64>, hard: Option<&Array2<f64>>, tau: f64) -> Result<InfoNce> {
    let b = u.nrows();
    if b < 2 {
        return Err(Error::DegenerateBatch(format!("{b} positive pairs in batch, need at least 2")));
    }
    if v.dim() != u.dim() || hard.is_some_and(|h| h.ncols() != u.ncols()) {
        return Err(Error::ShapeMismatch("anchor, positive and negative widths differ".into()));
    }
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::Invalid(format!("temperature must be positive, got {tau}")));
    }
    let empty = Array2::zeros((0, u.ncols()));
    let hard = hard.unwrap_or(&empty);
    let cands: Vec<ArrayView1<f64>> = v.rows().into_iter().chain(hard.rows()).collect();
    let mut du = Array2::zeros(u.dim());
    let mut dc = Array2::zeros((cands.len(), u.ncols()));
    let mut loss = 0.0;
    for i in 0..b {
        let ui = u.row(i);
        let sims: Vec<(f64, f64, f64)> = cands.iter().map(|c| cosine(ui, *c)).collect();
        let logits: Array1<f64> = sims.iter().map(|s| s.0 / tau).collect();
        let m = logits.fold(f64::NEG_INFINITY, |a, &x| a.max(x));
        let lse = m + logits.mapv(|x| (x - m).exp()).sum().ln();
        loss += lse - logits[i];
        for (j, c) in cands.iter().enumerate() {
            let (cos, nu, nc) = sims[j];
            let w = ((logits[j] - lse).exp() - if j == i { 1.0 } else { 0.0 }) / (tau * b as f64);
            if w == 0.0 {
                continue;
            }
            let mut gu = du.row_mut(i);
            gu.scaled_add(w / (nu * nc), c);
            gu.scaled_add(-w * cos / (nu * nu), &ui);
            let mut gc = dc.row_mut(j);
            gc.scaled_add(w / (nu * nc), &ui);
            gc.scaled_add(-w * cos / (nc * nc), c);
        }
    }
    let dv = dc.slice(s![..b, ..]).to_owned();
    let dhard = dc.slice(s![b.., ..]).to_owned();
    Ok(InfoNce { loss: loss / b as f64, du, dv, dhard })
}

/// The plain in-batch objective on raw embeddings.
pub fn info_nce_loss(u: &Array2<f64>, v: &Array2<f64>, tau: f64) -> Result<f64> {
    Ok(info_nce(u, v, None, tau)?.loss)
}

fn embed_rows(enc: &PairEncoder, names: &[&str]) -> Array2<f64> {
    let mut m = Array2::zeros((names.len(), enc.dim()));
    for (i, n) in names.iter().enumerate() {
        m.row_mut(i).assign(&enc.embed(n));
    }
    m
}

/// Splits `n` items into chunks of `size`, folding a trailing singleton
/// into the previous chunk.
fn chunk_bounds(n: usize, size: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut s = 0;
    while s < n {
        let e = (s + size).min(n);
        out.push((s, e));
        s = e;
    }
    if out.len() >= 2 && out.last().is_some_and(|&(s, e)| e - s < 2) {
        let (_, e) = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").1 = e;
    }
    out
}

fn positives(pairs: &[DiseasePair]) -> Vec<(&str, &str)> {
    pairs.iter().filter(|p| p.polarity() == Polarity::Same).map(|p| (p.a.as_str(), p.b.as_str())).collect()
}

/// Mean positive-only InfoNCE over fixed, unshuffled batches.
pub fn eval_contrastive_loss(pairs: &[DiseasePair], enc: &PairEncoder, config: &ContrastiveConfig) -> Result<f64> {
    let pos = positives(pairs);
    if pos.len() < 2 {
        return Err(Error::DegenerateBatch(format!("{} positive pairs, need at least 2", pos.len())));
    }
    let bounds = chunk_bounds(pos.len(), config.batch_size.max(2));
    let mut total = 0.0;
    for &(s, e) in &bounds {
        let a: Vec<&str> = pos[s..e].iter().map(|p| p.0).collect();
        let b: Vec<&str> = pos[s..e].iter().map(|p| p.1).collect();
        total += info_nce_loss(&embed_rows(enc, &a), &embed_rows(enc, &b), config.tau)?;
    }
    Ok(total / bounds.len() as f64)
}

/// SGD on the in-batch objective. Returns the trained encoder and the
/// evaluation loss before training followed by one value per epoch.
pub fn contrastive_pretrain(pairs: &[DiseasePair], encoder: PairEncoder, config: &ContrastiveConfig) -> Result<(PairEncoder, Vec<f64>)> {
    let mut enc = encoder;
    let mut pos: Vec<(&str, &str)> = positives(pairs);
    if pos.len() < 2 {
        return Err(Error::DegenerateBatch(format!("{} positive pairs, need at least 2", pos.len())));
    }
    let mut partners: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    if config.hard_negatives {
        for p in pairs.iter().filter(|p| p.polarity() == Polarity::Dissimilar) {
            partners.entry(p.a.as_str()).or_default().insert(p.b.as_str());
            partners.entry(p.b.as_str()).or_default().insert(p.a.as_str());
        }
    }
    let partners: BTreeMap<&str, Vec<&str>> = partners.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect();

    let mut r = rng::derived(config.seed, 67);
    let mut history = vec![eval_contrastive_loss(pairs, &enc, config)?];
    for epoch in 0..config.epochs {
        pos.shuffle(&mut r);
        let batch: Vec<(&str, &str)> = pos.iter().map(|&(a, b)| if r.gen_bool(0.5) { (b, a) } else { (a, b) }).collect();
        for (s, e) in chunk_bounds(batch.len(), config.batch_size.max(2)) {
            let a: Vec<&str> = batch[s..e].iter().map(|p| p.0).collect();
            let b: Vec<&str> = batch[s..e].iter().map(|p| p.1).collect();
            let hard: Vec<&str> = a
                .iter()
                .enumerate()
                .filter_map(|(i, anchor)| partners.get(anchor).map(|ps| ps[(epoch + i) % ps.len()]))
                .collect();
            let hard_m = (!hard.is_empty()).then(|| embed_rows(&enc, &hard));
            let g = info_nce(&embed_rows(&enc, &a), &embed_rows(&enc, &b), hard_m.as_ref(), config.tau)?;
            let mut grad = Array2::zeros(enc.table.dim());
            for (i, name) in a.iter().enumerate() {
                enc.backward(name, g.du.row(i), &mut grad);
            }
            for (i, name) in b.iter().enumerate() {
                enc.backward(name, g.dv.row(i), &mut grad);
            }
            for (i, name) in hard.iter().enumerate() {
                enc.backward(name, g.dhard.row(i), &mut grad);
            }
            enc.table.scaled_add(-config.learning_rate, &grad);
        }
        history.push(eval_contrastive_loss(pairs, &enc, config)?);
    }
    Ok((enc, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn orthogonal_two_batch() {
        let u = array![[1.0, 0.0], [0.0, 1.0]];
        let l = info_nce_loss(&u, &u.clone(), 0.05).unwrap();
        let expect = -(20f64.exp() / (20f64.exp() + 1.0)).ln();
        assert!((l - expect).abs() < 1e-12);
    }

    #[test]
    fn identical_rows_give_log_batch() {
        let u = Array2::from_elem((5, 3), 0.7);
        assert!((info_nce_loss(&u, &u.clone(), 0.05).unwrap() - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_row_is_degenerate() {
        let u = array![[1.0, 0.0]];
        assert!(matches!(info_nce_loss(&u, &u.clone(), 0.05), Err(Error::DegenerateBatch(_))));
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let mut r = rng::seeded(3);
        let mut m = || Array2::from_shape_simple_fn((3, 4), || r.gen_range(-1.0..1.0));
        let (u, v, h) = (m(), m(), m());
        let tau = 0.5;
        let g = info_nce(&u, &v, Some(&h), tau).unwrap();
        let f = |u: &Array2<f64>, v: &Array2<f64>, h: &Array2<f64>| info_nce(u, v, Some(h), tau).unwrap().loss;
        let eps = 1e-6;
        for which in 0..3 {
            for idx in 0..12 {
                let (i, j) = (idx / 4, idx % 4);
                let (mut up, mut vp, mut hp) = (u.clone(), v.clone(), h.clone());
                let (mut um, mut vm, mut hm) = (u.clone(), v.clone(), h.clone());
                let analytic = match which {
                    0 => {
                        up[[i, j]] += eps;
                        um[[i, j]] -= eps;
                        g.du[[i, j]]
                    }
                    1 => {
                        vp[[i, j]] += eps;
                        vm[[i, j]] -= eps;
                        g.dv[[i, j]]
                    }
                    _ => {
                        hp[[i, j]] += eps;
                        hm[[i, j]] -= eps;
                        g.dhard[[i, j]]
                    }
                };
                let numeric = (f(&up, &vp, &hp) - f(&um, &vm, &hm)) / (2.0 * eps);
                assert!((numeric - analytic).abs() < 1e-6, "{which} {i} {j}: {numeric} vs {analytic}");
            }
        }
    }

    #[test]
    fn chunks_never_leave_a_singleton() {
        assert_eq!(chunk_bounds(5, 2), vec![(0, 2), (2, 5)]);
        assert_eq!(chunk_bounds(4, 2), vec![(0, 2), (2, 4)]);
        assert_eq!(chunk_bounds(3, 8), vec![(0, 3)]);
    }
}
