//! Stage three: relation between two disease names.

pub mod contrastive;
pub mod encoder;
pub mod finetune;
pub mod io;
pub mod pairs;

pub use contrastive::{contrastive_pretrain, info_nce_loss, ContrastiveConfig};
pub use encoder::PairEncoder;
pub use finetune::{finetune, FinetuneConfig, RelationModel};
pub use pairs::{DiseasePair, PairSource, Polarity, SiblingScope};
