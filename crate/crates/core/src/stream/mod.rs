//! Simultaneous decoding: read source tokens one at a time, decode chunks on
//! the wait-k schedule and emit tokens as soon as their chunk is decoded.

mod session;
mod trace;

pub use session::{
    merge_chunks, offline_decode, offline_reference_decode, ChunkDecoder, ChunkOutput, CollapseMode, ModelChunkDecoder,
    stream_translate, ScriptedDecoder, StreamSession,
};
pub use trace::{ReadWriteTrace, TraceEvent};
