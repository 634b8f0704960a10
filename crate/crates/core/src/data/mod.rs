//! Embedding sets, their file formats, checkpoints and the synthetic
//! scenario generator.

mod checkpoint;
mod emb_io;
mod embedding;
mod scenario;

pub use checkpoint::{
    decode_blobs, decode_checkpoint, encode_checkpoint, load_checkpoint, restore_net,
    save_checkpoint, Blobs, Checkpoint, CheckpointHeader, CKPT_MAGIC, CKPT_VERSION,
};
pub use emb_io::{
    decode_embeddings, encode_embeddings, load_embeddings, save_embeddings, EMB_MAGIC, EMB_VERSION,
};
pub use embedding::{EmbeddingSet, PairedDataset};
pub use scenario::{
    calibration_summary, generate_scenario, ModelGenerator, Nonlinearity, Preset, Scenario,
    ScenarioMetadata, ScenarioSpec, ShiftLevel, DEGENERATE_RANK1, SCENARIO_FILES, SCENARIO_META,
};
