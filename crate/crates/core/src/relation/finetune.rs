//! Five-way relation classifier over `[u; v; |u−v|; u⊙v]`.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::encoder::PairEncoder;
use super::pairs::DiseasePair;
use crate::classifier::head::softmax;
use crate::error::{Error, Result};
use crate::normalize::fold_width;
use crate::rng;
use crate::types::Relation;

pub const NUM_RELATIONS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Also train on `(b, a)` for pairs whose relation is symmetric.
    pub symmetrize: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig { learning_rate: 5e-5, batch_size: 256, epochs: 10, seed: 0, symmetrize: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationHead {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl RelationHead {
    pub fn new(d_pair: usize, seed: u64) -> Self {
        let mut r = rng::derived(seed, 71);
        let a = (6.0 / (4 * d_pair + NUM_RELATIONS) as f64).sqrt();
        RelationHead { w: Array2::from_shape_simple_fn((4 * d_pair, NUM_RELATIONS), || r.gen_range(-a..a)), b: Array1::zeros(NUM_RELATIONS) }
    }
}

fn joint(u: &Array1<f64>, v: &Array1<f64>) -> Array1<f64> {
    let diff = (u - v).mapv(f64::abs);
    let prod = u * v;
    concatenate(Axis(0), &[u.view(), v.view(), diff.view(), prod.view()]).expect("equal widths")
}

/// Trained comparator: pair encoder plus relation head.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationModel {
    pub encoder: PairEncoder,
    pub head: RelationHead,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

fn prep(name: &str) -> String {
    fold_width(name.trim())
}

impl RelationModel {
    pub fn probs(&self, a: &str, b: &str) -> Array1<f64> {
        let u = self.encoder.embed(&prep(a));
        let v = self.encoder.embed(&prep(b));
        softmax(&(joint(&u, &v).dot(&self.head.w) + &self.head.b))
    }

    pub fn predict_relation(&self, a: &str, b: &str) -> (Relation, f64) {
        let p = self.probs(a, b);
        let mut best = 0;
        for i in 1..p.len() {
            if p[i] > p[best] {
                best = i;
            }
        }
        (Relation::from_index(best), p[best])
    }

    fn loss_and_grad(&self, batch: &[(&str, &str, Relation)]) -> (f64, RelationHead, Array2<f64>) {
        let d = self.encoder.dim();
        let mut gw = Array2::zeros(self.head.w.dim());
        let mut gb = Array1::zeros(NUM_RELATIONS);
        let mut gt = Array2::zeros(self.encoder.table.dim());
        let mut total = 0.0;
        let n = batch.len() as f64;
        for &(a, b, rel) in batch {
            let u = self.encoder.embed(a);
            let v = self.encoder.embed(b);
            let x = joint(&u, &v);
            let p = softmax(&(x.dot(&self.head.w) + &self.head.b));
            let k = rel.index();
            total -= p[k].max(1e-12).ln();
            let mut dz = p;
            dz[k] -= 1.0;
            dz /= n;
            for i in 0..x.len() {
                gw.row_mut(i).scaled_add(x[i], &dz);
            }
            gb += &dz;
            let dx = self.head.w.dot(&dz);
            let sign = (&u - &v).mapv(|t| if t > 0.0 { 1.0 } else if t < 0.0 { -1.0 } else { 0.0 });
            let dd = dx.slice(s![2 * d..3 * d]).to_owned() * &sign;
            let dp = dx.slice(s![3 * d..]);
            let du = &dx.slice(s![..d]) + &dd + &(&dp * &v);
            let dv = &dx.slice(s![d..2 * d]) - &dd + &(&dp * &u);
            self.encoder.backward(a, du.view(), &mut gt);
            self.encoder.backward(b, dv.view(), &mut gt);
        }
        (total / n, RelationHead { w: gw, b: gb }, gt)
    }

    pub fn mean_loss(&self, pairs: &[DiseasePair]) -> f64 {
        let labeled = labeled(pairs, false);
        if labeled.is_empty() {
            return 0.0;
        }
        self.loss_and_grad(&labeled).0
    }

    pub fn accuracy(&self, pairs: &[DiseasePair]) -> f64 {
        let labeled = labeled(pairs, false);
        let hit = labeled.iter().filter(|(a, b, r)| self.predict_relation(a, b).0 == *r).count();
        hit as f64 / labeled.len().max(1) as f64
    }
}

fn labeled(pairs: &[DiseasePair], symmetrize: bool) -> Vec<(&str, &str, Relation)> {
    let mut out = Vec::new();
    for p in pairs {
        let Some(rel) = p.relation else { continue };
        out.push((p.a.as_str(), p.b.as_str(), rel));
        if symmetrize && rel.is_symmetric() && p.a != p.b {
            out.push((p.b.as_str(), p.a.as_str(), rel));
        }
    }
    out
}

/// Identity pairs `(x, x, Similarity)` for every name.
pub fn identity_pairs<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<Vec<DiseasePair>> {
    names.into_iter().map(|n| DiseasePair::annotated(n, n, Relation::Similarity)).collect()
}

/// Cross-entropy fine-tuning of encoder and head on labelled pairs. Every
/// relation class must be present.
pub fn finetune(encoder: PairEncoder, pairs: &[DiseasePair], config: &FinetuneConfig) -> Result<(RelationModel, Vec<FinetuneMetrics>)> {
    for rel in Relation::ALL {
        if !pairs.iter().any(|p| p.relation == Some(rel)) {
            return Err(Error::DegenerateData(format!("no pair labelled {}", rel.as_str())));
        }
    }
    if config.batch_size == 0 {
        return Err(Error::Invalid("batch_size must be positive".into()));
    }
    let head = RelationHead::new(encoder.dim(), config.seed);
    let mut model = RelationModel { encoder, head, seed: config.seed };
    let mut data = labeled(pairs, config.symmetrize);
    let mut r = rng::derived(config.seed, 73);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        data.shuffle(&mut r);
        for batch in data.chunks(config.batch_size) {
            let (_, g, gt) = model.loss_and_grad(batch);
            model.head.w.scaled_add(-config.learning_rate, &g.w);
            model.head.b.scaled_add(-config.learning_rate, &g.b);
            model.encoder.table.scaled_add(-config.learning_rate, &gt);
        }
        history.push(FinetuneMetrics { epoch: epoch + 1, loss: model.mean_loss(pairs), accuracy: model.accuracy(pairs) });
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::CharVocab;

    fn fixture() -> Vec<DiseasePair> {
        [
            ("头部骨折", "头骨骨折", Relation::Similarity),
            ("电解质紊乱", "低钾血症", Relation::Inclusion),
            ("肺部感染", "脓毒症", Relation::Secondary),
            ("高血压", "肺炎", Relation::Irrelevance),
            ("糖尿病", "糖尿病足", Relation::Other),
        ]
        .iter()
        .map(|(a, b, r)| DiseasePair::annotated(a, b, *r).unwrap())
        .collect()
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let pairs = fixture();
        let enc = PairEncoder::new(CharVocab::build(pairs.iter().flat_map(|p| [p.a.as_str(), p.b.as_str()])), 3, 5);
        let m = RelationModel { head: RelationHead::new(3, 5), encoder: enc, seed: 5 };
        let batch = labeled(&pairs, false);
        let (_, g, gt) = m.loss_and_grad(&batch);
        let eps = 1e-6;
        for idx in [0usize, 5, 11, 30, 59] {
            let (i, j) = (idx / NUM_RELATIONS, idx % NUM_RELATIONS);
            let mut p = m.clone();
            p.head.w[[i, j]] += eps;
            let mut q = m.clone();
            q.head.w[[i, j]] -= eps;
            let n = (p.loss_and_grad(&batch).0 - q.loss_and_grad(&batch).0) / (2.0 * eps);
            assert!((n - g.w[[i, j]]).abs() < 1e-7);
        }
        for (i, j) in [(1, 0), (2, 1), (4, 2), (7, 0)] {
            let mut p = m.clone();
            p.encoder.table[[i, j]] += eps;
            let mut q = m.clone();
            q.encoder.table[[i, j]] -= eps;
            let n = (p.loss_and_grad(&batch).0 - q.loss_and_grad(&batch).0) / (2.0 * eps);
            assert!((n - gt[[i, j]]).abs() < 1e-7, "{i} {j}: {n} vs {}", gt[[i, j]]);
        }
    }

    #[test]
    fn missing_class_is_degenerate() {
        let pairs = fixture();
        let enc = PairEncoder::new(CharVocab::build(["头"]), 3, 0);
        assert!(matches!(finetune(enc, &pairs[..4], &FinetuneConfig::default()), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn memorizes_fixture() {
        let pairs = fixture();
        let enc = PairEncoder::new(CharVocab::build(pairs.iter().flat_map(|p| [p.a.as_str(), p.b.as_str()])), 16, 2);
        let cfg = FinetuneConfig { learning_rate: 0.5, epochs: 300, batch_size: 8, ..FinetuneConfig::default() };
        let (m, hist) = finetune(enc, &pairs, &cfg).unwrap();
        assert!(hist.last().unwrap().loss < hist[0].loss);
        assert_eq!(m.predict_relation("头部骨折", "头骨骨折").0, Relation::Similarity);
        assert_eq!(m.predict_relation("电解质紊乱", "低钾血症").0, Relation::Inclusion);
    }
}
