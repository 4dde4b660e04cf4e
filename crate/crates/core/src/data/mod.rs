//! Corpora, synthetic tasks, checkpoints and run configuration files.

mod checkpoint;
mod config_file;
mod corpus;
mod synth;

pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC,
};
pub use config_file::RunConfig;
pub use corpus::{ParallelCorpus, SentencePair};
pub use synth::{synth_generate, SynthConfig, SynthTask};
