//! Synthetic corpus generation, scoring and ablations.

pub mod ablation;
pub mod score;
pub mod synth;

pub use ablation::{run_ablation, scores_csv, AblationRow};
pub use score::{score, Scores};
pub use synth::{gen_synthetic_corpus, GoldMention, Paraphrases, SynthResources, SyntheticCorpus, SyntheticSpec, Templates};
