//! Corpus ingestion: manifests, WAV decoding, length normalization,
//! attribute binning and synthetic corpus generation.

mod audio;
mod binning;
mod manifest;
mod synth;

pub use audio::{clip_or_pad, decode_wav, write_wav, Waveform, SAMPLE_RATE};
pub use binning::{assign_bin, compute_bin_thresholds, BinLabel, BinThresholds, BIN_PROPORTIONS};
pub use manifest::{load_manifest, write_manifest, UtteranceRecord};
pub use synth::{default_profiles, parse_profiles, synthesize_corpus, ClassProfile, SynthOutput};
