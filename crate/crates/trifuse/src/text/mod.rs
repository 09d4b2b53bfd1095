//! Text pipeline: normalization, vocabulary, and the transformer encoder.

mod encoder;
pub mod normalize;
pub mod vocab;

pub use encoder::{prepare_sequence, TextEncoder, TextEncoderConfig, TextFeatures};
pub use normalize::{normalize_text, tokenize};
pub use vocab::{Vocab, CLS_ID, PAD_ID, UNK_ID};
