//! Pairwise report similarity metrics.

mod bleu;
mod chexbert;
mod embedding;
mod radcliq;
mod radgraph;

pub use bleu::{bleu, bleu_tokens, BleuOptions};
pub use chexbert::{
    chexbert_similarity, label_pathologies, PathologyVector, CHEXPERT_LABELS, PATHOLOGY_COUNT,
};
pub use embedding::{embedding_similarity, TokenMatchScore};
pub use radcliq::{fit_radcliq, radcliq, RadCliqCoefficients};
pub use radgraph::{
    extract_radgraph_stub, radgraph_f1, radgraph_f1_with, EmptyComponent, Entity, Lexicon, RadGraphAnnotation,
    RadGraphOptions, Relation,
};

/// Lowercased alphanumeric runs; everything else separates tokens and is
/// dropped. De-identification placeholders such as "xxxx" stay ordinary tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::tokenize;

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(
            tokenize("No acute findings. XXXX opacity, right-sided."),
            ["no", "acute", "findings", "xxxx", "opacity", "right", "sided"]
        );
        assert!(tokenize("  ...  ").is_empty());
    }
}
