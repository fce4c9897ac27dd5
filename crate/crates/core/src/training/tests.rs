use super::*;
use crate::data::{gen_synthetic, SyntheticData, SyntheticSpec};
use crate::eval::StsSet;
use crate::model::{encoder_digest, Model, ModelConfig};
use crate::numeric::Rng;
use crate::Error;

fn tiny_config(d: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: 40,
        hidden_dim: 8,
        layers: 1,
        heads: 2,
        ff_dim: 16,
        max_len: 12,
        dropout_p: 0.1,
        pooler_dim: d,
        ..ModelConfig::default()
    }
}

fn tiny_data(seed: u64) -> SyntheticData {
    gen_synthetic(&SyntheticSpec {
        vocab_size: 32,
        background_words: 8,
        min_words: 4,
        max_words: 10,
        corpus_size: 48,
        validation_pairs: 30,
        test_pairs: 10,
        nli_pairs: 48,
        labeled_train: 8,
        labeled_test: 8,
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

fn tiny_setup(objective: Objective) -> (ModelConfig, TrainConfig, TrainingCorpus, StsSet) {
    let config = tiny_config(4);
    let data = tiny_data(3);
    let corpus = TrainingCorpus::new("tiny", &data.vocab, &data.corpus_texts(), config.max_len)
        .with_nli(&data.vocab, &data.nli, config.max_len);
    let val = StsSet::new("val", &data.validation_sts(), &data.vocab, config.max_len);
    let tcfg = TrainConfig {
        epochs: 1,
        batch_size: 8,
        seed: 11,
        objective,
        ..TrainConfig::default()
    };
    (config, tcfg, corpus, val)
}

#[test]
fn zero_epochs_leave_initialisation_untouched() {
    let (config, mut tcfg, corpus, _) = tiny_setup(Objective::Contrastive);
    tcfg.epochs = 0;
    let bundle = train_end_to_end(&config, &tcfg, &corpus).unwrap();
    let init = Model::new(config, &mut Rng::new(tcfg.seed, 0)).unwrap();
    assert_eq!(bundle.model, init);
    assert!(bundle.loss_trace.is_empty());
}

#[test]
fn training_is_deterministic_for_both_objectives() {
    for objective in [Objective::Contrastive, Objective::Nli] {
        let (config, tcfg, corpus, _) = tiny_setup(objective);
        let a = train_end_to_end(&config, &tcfg, &corpus).unwrap();
        let b = train_end_to_end(&config, &tcfg, &corpus).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.head, b.head);
        assert_eq!(a.loss_trace, b.loss_trace);
        assert!(a.loss_trace.iter().all(|l| l.is_finite()));
    }
}

#[test]
fn training_changes_parameters() {
    let (config, tcfg, corpus, _) = tiny_setup(Objective::Contrastive);
    let bundle = train_end_to_end(&config, &tcfg, &corpus).unwrap();
    let init = Model::new(config, &mut Rng::new(tcfg.seed, 0)).unwrap();
    assert_ne!(
        encoder_digest(&bundle.model.encoder),
        encoder_digest(&init.encoder)
    );
    assert_ne!(bundle.model.pooler, init.pooler);
}

#[test]
fn empty_corpus_is_an_input_error() {
    let (config, tcfg, _, _) = tiny_setup(Objective::Contrastive);
    let data = tiny_data(3);
    let empty = TrainingCorpus::new("empty", &data.vocab, &Vec::<String>::new(), config.max_len);
    assert!(matches!(
        train_end_to_end(&config, &tcfg, &empty),
        Err(Error::Input(_))
    ));

    let (config, tcfg, corpus, _) = tiny_setup(Objective::Nli);
    let no_nli = TrainingCorpus {
        nli: Vec::new(),
        ..corpus
    };
    assert!(matches!(
        train_end_to_end(&config, &tcfg, &no_nli),
        Err(Error::Input(_))
    ));
}

#[test]
fn invalid_train_config_is_rejected() {
    let (config, tcfg, corpus, _) = tiny_setup(Objective::Contrastive);
    for bad in [
        TrainConfig {
            batch_size: 0,
            ..tcfg.clone()
        },
        TrainConfig {
            beta1: 1.0,
            ..tcfg.clone()
        },
        TrainConfig {
            temperature: 0.0,
            ..tcfg.clone()
        },
        TrainConfig {
            learning_rate: -1.0,
            ..tcfg.clone()
        },
    ] {
        assert!(train_end_to_end(&config, &bad, &corpus).is_err());
    }
}

#[test]
fn sweep_matches_individual_runs() {
    let (config, tcfg, corpus, _) = tiny_setup(Objective::Contrastive);
    let sweep = train_sweep(&config, &tcfg, &corpus, &[2, 4]).unwrap();
    for (bundle, d) in sweep.iter().zip([2, 4]) {
        let solo = train_end_to_end(&config.with_pooler_dim(d), &tcfg, &corpus).unwrap();
        assert_eq!(bundle.model, solo.model);
        assert_eq!(bundle.provenance.pooler_dim, d);
    }
}

#[test]
fn encoder_initialisation_is_shared_across_dimensions() {
    let (config, mut tcfg, corpus, _) = tiny_setup(Objective::Contrastive);
    tcfg.epochs = 0;
    let sweep = train_sweep(&config, &tcfg, &corpus, &[2, 8]).unwrap();
    assert_eq!(sweep[0].model.encoder, sweep[1].model.encoder);
}

#[test]
fn zero_epoch_finetune_keeps_pooler() {
    let (config, tcfg, corpus, _) = tiny_setup(Objective::Contrastive);
    let bundle = train_end_to_end(&config, &tcfg, &corpus).unwrap();
    let zero = TrainConfig { epochs: 0, ..tcfg };
    let tuned = finetune_pooler(&bundle.model, &bundle.model.pooler, None, &zero, &corpus).unwrap();
    assert_eq!(tuned.pooler, bundle.model.pooler);
}

#[test]
fn finetune_freezes_the_encoder_and_moves_the_pooler() {
    for objective in [Objective::Contrastive, Objective::Nli] {
        let (config, tcfg, corpus, _) = tiny_setup(objective);
        let bundle = train_end_to_end(&config, &tcfg, &corpus).unwrap();
        let before = encoder_digest(&bundle.model.encoder);
        let tuned = finetune_pooler(
            &bundle.model,
            &bundle.model.pooler,
            bundle.head.as_ref(),
            &tcfg,
            &corpus,
        )
        .unwrap();
        assert_eq!(encoder_digest(&bundle.model.encoder), before);
        assert_ne!(tuned.pooler, bundle.model.pooler);
        assert_eq!(tuned.head.is_some(), objective == Objective::Nli);
    }
}

#[test]
fn finetune_rejects_mismatched_pooler() {
    let (config, tcfg, corpus, _) = tiny_setup(Objective::Contrastive);
    let bundle = train_end_to_end(&config, &tcfg, &corpus).unwrap();
    let wrong = crate::model::PoolerParams::zeros(16, 4);
    assert!(matches!(
        finetune_pooler(&bundle.model, &wrong, None, &tcfg, &corpus),
        Err(Error::Shape(_))
    ));
}

#[test]
fn singleton_candidate_selects_itself() {
    let (config, tcfg, corpus, val) = tiny_setup(Objective::Contrastive);
    let bundle = train_end_to_end(&config.with_pooler_dim(2), &tcfg, &corpus).unwrap();
    let sel = select_optimal_encoder(&[&bundle], &val).unwrap();
    assert_eq!((sel.dim, sel.index), (2, 0));
}

#[test]
fn selection_ties_go_to_the_larger_dimension() {
    let (config, mut tcfg, corpus, val) = tiny_setup(Objective::Contrastive);
    // Untrained runs share the encoder, so every candidate scores the same.
    tcfg.epochs = 0;
    let sweep = train_sweep(&config, &tcfg, &corpus, &[2, 8, 4]).unwrap();
    let refs: Vec<&TrainedBundle> = sweep.iter().collect();
    let sel = select_optimal_encoder(&refs, &val).unwrap();
    assert_eq!(sel.dim, 8);
    assert_eq!(sel.index, 1);
    assert!(sel.scores.windows(2).all(|w| w[0].1 == w[1].1));
}

#[test]
fn selection_picks_the_maximum() {
    let (config, tcfg, corpus, val) = tiny_setup(Objective::Contrastive);
    let sweep = train_sweep(&config, &tcfg, &corpus, &[8, 4, 2]).unwrap();
    let refs: Vec<&TrainedBundle> = sweep.iter().collect();
    let sel = select_optimal_encoder(&refs, &val).unwrap();
    let best = sel
        .scores
        .iter()
        .map(|s| s.1)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(sel.scores[sel.index].1, best);
    // A superset never selects a worse encoder.
    let sub = select_optimal_encoder(&refs[1..], &val).unwrap();
    assert!(sel.scores[sel.index].1 >= sub.scores[sub.index].1);
}

#[test]
fn selection_needs_candidates() {
    let (_, _, _, val) = tiny_setup(Objective::Contrastive);
    assert!(matches!(
        select_optimal_encoder(&[], &val),
        Err(Error::Input(_))
    ));
}

#[test]
fn two_step_invariants_hold() {
    for objective in [Objective::Contrastive, Objective::Nli] {
        let (config, tcfg, corpus, val) = tiny_setup(objective);
        let out = two_step_train(&config, &tcfg, &corpus, &val, 2, &[8, 4]).unwrap();
        let opt = &out.candidates[out.selection.index];
        assert_eq!(out.selection.dim, opt.pooler_dim());
        assert_eq!(
            encoder_digest(&out.step2.model.encoder),
            encoder_digest(&opt.model.encoder)
        );
        assert_eq!(out.step1.model.encoder, opt.model.encoder);
        assert_eq!(out.step1.model.pooler, out.end_to_end.model.pooler);
        assert_eq!(out.step2.pooler_dim(), 2);
        assert_eq!(out.step2.provenance.stage, Stage::Step2);
        assert_eq!(out.step2.provenance.encoder_dim, out.selection.dim);

        // Step 2 starts from the step-1 pooler.
        let again = finetune_pooler(
            &out.step1.model,
            &out.step1.model.pooler,
            out.step1.head.as_ref(),
            &tcfg,
            &corpus,
        )
        .unwrap();
        assert_eq!(again.pooler, out.step2.model.pooler);
    }
}

#[test]
fn two_step_with_only_the_target_candidate() {
    let (config, tcfg, corpus, val) = tiny_setup(Objective::Contrastive);
    let out = two_step_train(&config, &tcfg, &corpus, &val, 4, &[4]).unwrap();
    let e2e = train_end_to_end(&config.with_pooler_dim(4), &tcfg, &corpus).unwrap();
    assert_eq!(out.end_to_end.model, e2e.model);
    assert_eq!(out.step1.model, e2e.model);
    let tuned = finetune_pooler(&e2e.model, &e2e.model.pooler, None, &tcfg, &corpus).unwrap();
    assert_eq!(
        out.step2.model,
        e2e.model.with_pooler(tuned.pooler).unwrap()
    );
}

#[test]
fn two_step_is_deterministic() {
    let (config, tcfg, corpus, val) = tiny_setup(Objective::Contrastive);
    let a = two_step_train(&config, &tcfg, &corpus, &val, 2, &[8, 4]).unwrap();
    let b = two_step_train(&config, &tcfg, &corpus, &val, 2, &[8, 4]).unwrap();
    assert_eq!(a.step2.model, b.step2.model);
    assert_eq!(a.selection, b.selection);
}

#[test]
fn two_step_rejects_bad_arguments() {
    let (config, tcfg, corpus, val) = tiny_setup(Objective::Contrastive);
    assert!(two_step_train(&config, &tcfg, &corpus, &val, 0, &[4]).is_err());
    assert!(two_step_train(&config, &tcfg, &corpus, &val, 2, &[]).is_err());
    assert!(two_step_train(&config, &tcfg, &corpus, &val, 2, &[64]).is_err());
}

#[test]
fn default_candidates_halve_down_to_four() {
    assert_eq!(default_candidates(32), vec![32, 16, 8, 4]);
    assert_eq!(default_candidates(4), vec![4]);
    assert_eq!(default_candidates(2), vec![2]);
}

#[test]
fn stage_tags_round_trip() {
    for stage in [Stage::EndToEnd, Stage::Step1, Stage::Step2] {
        assert_eq!(stage.to_string().parse::<Stage>().unwrap(), stage);
    }
}
