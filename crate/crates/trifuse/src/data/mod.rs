//! Dataset handling: manifests, stratified splitting, the synthetic
//! benchmark generator, and loading manifests into training examples.

pub mod manifest;
pub mod split;
pub mod synth;

pub use manifest::{
    load_manifest, parse_manifest, render_manifest, save_manifest, verify_images, ManifestRow,
    MANIFEST_HEADER,
};
pub use split::{stratified_split, Split, SplitRatios};
pub use synth::{bayes_accuracies, gen_synthetic, BayesReport, SynthSpec, FILLER_POOL};

use crate::error::{Error, Result};
use crate::fusion::IntentLabel;
use crate::text::{prepare_sequence, tokenize, Vocab};
use crate::trace::Trace;
use crate::train::TrainExample;
use crate::vision::Image;
use std::path::Path;

/// The three splits of a corpus, loaded and encoded for training.
#[derive(Debug, Default)]
pub struct SplitSets {
    pub train: Vec<TrainExample>,
    pub val: Vec<TrainExample>,
    pub test: Vec<TrainExample>,
}

impl SplitSets {
    pub fn get(&self, split: Split) -> &[TrainExample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    fn get_mut(&mut self, split: Split) -> &mut Vec<TrainExample> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    /// Class frequencies of the training split, in label order.
    pub fn train_class_counts(&self) -> [usize; IntentLabel::COUNT] {
        let mut counts = [0usize; IntentLabel::COUNT];
        for ex in &self.train {
            counts[ex.label.index()] += 1;
        }
        counts
    }
}

/// Builds the vocabulary from the *training* rows only. Validation and
/// test tokens the training split never produced map to the unknown id,
/// exactly as unseen tokens would at deployment; building on all three
/// splits would leak evaluation data into the model's input space.
pub fn build_vocab(rows: &[ManifestRow], max_size: usize) -> Result<Vocab> {
    let tokenized: Vec<Vec<String>> = rows
        .iter()
        .filter(|row| row.split == Split::Train)
        .map(|row| tokenize(&row.text))
        .collect();
    Vocab::build(tokenized.iter().map(Vec::as_slice), max_size)
}

/// Tokenizes, encodes, and loads every manifest row into its split.
/// Image paths resolve relative to `base_dir` (the manifest's
/// directory). Truncations are reported through `trace`.
pub fn prepare_examples(
    base_dir: &Path,
    rows: &[ManifestRow],
    vocab: &Vocab,
    max_len: usize,
    trace: &mut Trace,
) -> Result<SplitSets> {
    verify_images(base_dir, rows)?;
    let mut sets = SplitSets::default();
    for row in rows {
        let tokens = tokenize(&row.text);
        if tokens.is_empty() {
            return Err(Error::data(format!(
                "sample {:?} has no tokens after normalization: {:?}",
                row.id, row.text
            )));
        }
        let ids = vocab.encode_tokens(&tokens);
        let tokens = prepare_sequence(&ids, max_len, trace, &row.id);
        let image = match &row.image_path {
            Some(rel) => Some(Image::load_ppm(&base_dir.join(rel))?),
            None => None,
        };
        sets.get_mut(row.split).push(TrainExample {
            id: row.id.clone(),
            label: row.label,
            tokens,
            image,
        });
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{CLS_ID, UNK_ID};

    #[test]
    fn vocabulary_comes_from_the_training_split_only() {
        let rows = vec![
            ManifestRow {
                id: "a".into(),
                split: Split::Train,
                label: IntentLabel::Informative,
                image_path: None,
                text: "alpha beta".into(),
            },
            ManifestRow {
                id: "b".into(),
                split: Split::Val,
                label: IntentLabel::Informative,
                image_path: None,
                text: "gamma".into(),
            },
        ];
        let vocab = build_vocab(&rows, 64).unwrap();
        assert_ne!(vocab.encode("alpha"), UNK_ID);
        assert_ne!(vocab.encode("beta"), UNK_ID);
        assert_eq!(
            vocab.encode("gamma"),
            UNK_ID,
            "val-only tokens must stay unknown"
        );
    }

    #[test]
    fn prepare_examples_loads_each_split_with_encoded_tokens_and_images() {
        let dir = std::env::temp_dir().join(format!("prep_examples_{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        let spec = SynthSpec {
            n_per_class: 10,
            image_size: 8,
            text_len: 5,
            ..SynthSpec::default()
        };
        let rows = gen_synthetic(&spec, &dir).unwrap();
        let vocab = build_vocab(&rows, 128).unwrap();
        let mut trace = Trace::new(false);
        let sets = prepare_examples(&dir, &rows, &vocab, 16, &mut trace).unwrap();
        assert_eq!(
            sets.train.len() + sets.val.len() + sets.test.len(),
            rows.len(),
            "every row lands in exactly one split"
        );
        assert!(!sets.train.is_empty() && !sets.val.is_empty() && !sets.test.is_empty());
        for split in Split::ALL {
            for ex in sets.get(split) {
                assert_eq!(ex.tokens[0], CLS_ID);
                assert_eq!(ex.tokens.len(), spec.text_len + 1); // CLS + text
                let img = ex
                    .image
                    .as_ref()
                    .expect("synthetic samples all have images");
                assert_eq!((img.width(), img.height()), (8, 8));
            }
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn missing_images_and_empty_texts_are_rejected() {
        let dir = std::env::temp_dir().join(format!("prep_reject_{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        let mut rows = vec![ManifestRow {
            id: "a".into(),
            split: Split::Train,
            label: IntentLabel::Expressive,
            image_path: Some("images/a.ppm".into()),
            text: "hello".into(),
        }];
        let vocab = build_vocab(&rows, 16).unwrap();
        let mut trace = Trace::new(false);
        let err = prepare_examples(&dir, &rows, &vocab, 8, &mut trace).unwrap_err();
        assert!(err.to_string().contains("a.ppm"), "{err}");

        rows[0].image_path = None;
        rows[0].text = "?!".into(); // normalizes to nothing
        let err = prepare_examples(&dir, &rows, &vocab, 8, &mut trace).unwrap_err();
        assert!(err.to_string().contains("no tokens"), "{err}");
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
