//! Tokenisation, dataset files and the synthetic corpus generator.

mod files;
mod synthetic;
mod vocab;

pub use files::{
    format_embeddings, load_cls_tsv, load_corpus, load_embeddings, load_nli_tsv, load_sts_tsv,
    parse_cls, parse_embeddings, parse_nli, parse_sts, save_cls_tsv, save_corpus, save_embeddings,
    save_nli_tsv, save_sts_tsv, LabeledSentence, StsPair,
};
pub use synthetic::{
    cosine_of_mixtures, gen_synthetic, nli_label, NliTriple, SynthPair, SynthSentence,
    SyntheticData, SyntheticSpec,
};
pub use vocab::{Vocab, CLS_ID, PAD_ID, RESERVED, UNK_ID};
