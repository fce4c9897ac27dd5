//! Training: Adam, end-to-end and frozen-encoder loops, encoder selection and
//! the two-step procedure.
//!
//! Two-step training for a target dimension `d` over candidates `𝒟`:
//!
//! 1. train end-to-end at `d` (giving `pooler_d`) and at every `d′ ∈ 𝒟`;
//!    pick the encoder whose `[CLS]` output scores best on the validation STS
//!    set (`encoder_opt`) and join it to `pooler_d`;
//! 2. fine-tune `pooler_d`, starting from its trained values, on the same
//!    corpus and objective with `encoder_opt` frozen.
//!
//! Cost is dominated by the `|𝒟| + 1` end-to-end trainings (one fewer when
//! `d ∈ 𝒟`, since that run is shared); step 2 only differentiates the pooler.

mod adam;
mod trainer;

pub use adam::Adam;
pub use trainer::*;

#[cfg(test)]
mod tests;
