//! Non-autoregressive streaming translation with latent alignments.

pub mod data;
pub mod error;
pub mod lattice;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod stream;
pub mod train;
pub mod verify;
pub mod vocab;

pub use data::{Checkpoint, ParallelCorpus, SentencePair};
pub use error::{CheckpointError, NastError, Result};
pub use lattice::{Alignment, AlignmentPosterior, PosteriorMeta};
pub use model::{ModelConfig, NastModel};
pub use numeric::{Scalar, Tensor};
pub use stream::{CollapseMode, ReadWriteTrace, StreamSession};
pub use train::{TrainConfig, Trainer};
pub use vocab::{TokenId, Vocab, BLANK};
