use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dataset::Interaction;
use crate::graph::build_graph;
use crate::model::{init_features, InitMode};

// two taste groups over ten items, each user rating most of the catalog
fn planted() -> Vec<Interaction> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut out = Vec::new();
    for u in 1..=12u64 {
        let group = u % 2;
        for i in 1..=10u64 {
            if rng.random::<f64>() < 0.3 {
                continue;
            }
            let liked = i % 2 == group;
            let rating = if liked { 4 + rng.random_range(0..2) } else { 1 + rng.random_range(0..2) };
            out.push(Interaction::new(u, i, rating, (u * 100 + i) as i64));
        }
    }
    out
}

fn small_config() -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        max_epochs: 30,
        lr_init: 1e-2,
        val_fraction: 0.2,
        model: ModelConfig {
            input_dim: 8,
            hidden_dim: 8,
            heads: 2,
            layers: 2,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn setup(config: &TrainConfig) -> (BipartiteGraph, Matrix) {
    let graph = build_graph(&planted()).unwrap();
    let features =
        init_features(&config.model, graph.node_index(), InitMode::RandomInit, None, 5).unwrap();
    (graph, features)
}

#[test]
fn zero_epochs_returns_initial_parameters() {
    let config = TrainConfig {
        max_epochs: 0,
        ..small_config()
    };
    let (graph, features) = setup(&config);
    let model = train(&graph, &[], &features, &config).unwrap();
    assert_eq!(model.meta.epochs_run, 0);
    assert!(model.meta.history.is_empty());
    assert_eq!(model.params, ModelParams::init(&config.model, config.seed).unwrap());
    let pass = model::forward(&graph, &model.params, &features, None).unwrap();
    assert_eq!(model.user_embeddings, pass.user_embeddings());
}

#[test]
fn training_is_deterministic() {
    let config = TrainConfig {
        max_epochs: 5,
        ..small_config()
    };
    let (graph, features) = setup(&config);
    let a = train(&graph, &[], &features, &config).unwrap();
    let b = train(&graph, &[], &features, &config).unwrap();
    assert_eq!(a, b);
    let c = train(&graph, &[], &features, &TrainConfig { seed: 43, ..config }).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn loss_decreases_on_planted_data() {
    let config = small_config();
    let (graph, features) = setup(&config);
    let model = train(&graph, &[], &features, &config).unwrap();
    let h = &model.meta.history;
    assert!(h.len() >= 5);
    assert!(h.last().unwrap().train_loss < h[0].train_loss, "{h:?}");
    assert!(model.meta.best_val_loss <= h[0].val_loss);
    assert!(h.iter().all(|r| r.train_loss.is_finite() && r.val_loss.is_finite()));
}

#[test]
fn hundred_steps_stay_finite() {
    let config = TrainConfig {
        max_epochs: 100,
        early_stop_patience: 1000,
        batch_size: 1_000_000,
        ..small_config()
    };
    let (graph, features) = setup(&config);
    let model = train(&graph, &[], &features, &config).unwrap();
    assert_eq!(model.meta.epochs_run, 100);
    assert!(model.params.is_finite());
    assert!(model.user_embeddings.is_finite() && model.item_embeddings.is_finite());
}

#[test]
fn one_small_step_lowers_the_batch_loss() {
    let mut config = small_config();
    config.model.dropout = 0.0;
    let (graph, features) = setup(&config);
    let sampler = NegativeSampler::new(&graph, &[]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let batch = make_triplets(&positive_pairs(&graph), &sampler, &mut rng, config.epsilon_neg).unwrap();
    let mut params = ModelParams::init(&config.model, 3).unwrap();
    let pass = model::forward(&graph, &params, &features, None).unwrap();
    let (before, d_out) = loss_and_grad(&batch, &pass.output, config.alpha).unwrap();
    let grads = model::backward(&graph, &params, &pass, &d_out, false).unwrap();
    let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut opt = AdamW::new(&shapes, 0.0);
    apply_step(&mut opt, &mut params, None, &grads, 1e-4).unwrap();
    let after_pass = model::forward(&graph, &params, &features, None).unwrap();
    let after = total_loss(&batch, &after_pass.output, config.alpha).unwrap();
    assert!(after < before, "{after} >= {before}");
}

#[test]
fn trained_features_change_only_when_enabled() {
    let mut config = TrainConfig {
        max_epochs: 3,
        ..small_config()
    };
    let (graph, features) = setup(&config);
    assert!(train(&graph, &[], &features, &config).unwrap().features.is_none());
    config.model.train_features = true;
    let m = train(&graph, &[], &features, &config).unwrap();
    assert_ne!(m.features.unwrap(), features);
}

#[test]
fn plateau_schedule_sequence() {
    let config = TrainConfig {
        lr_init: 1.0,
        lr_factor: 0.5,
        lr_patience: 2,
        early_stop_patience: 5,
        ..TrainConfig::default()
    };
    let mut s = PlateauSchedule::new(&config);
    let mut lrs = Vec::new();
    let mut outcomes = Vec::new();
    for v in [3.0, 2.0, 2.0, 2.5, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0] {
        outcomes.push(s.observe(v));
        lrs.push(s.lr());
    }
    assert_eq!(lrs, vec![1.0, 1.0, 1.0, 0.5, 0.5, 0.25, 0.25, 0.25, 0.125, 0.125, 0.0625, 0.0625]);
    use Plateau::*;
    assert_eq!(
        outcomes,
        vec![Improved, Improved, Waiting, Waiting, Waiting, Waiting, Improved, Waiting, Waiting, Waiting, Waiting, Stop]
    );
}

#[test]
fn early_stopping_truncates_history() {
    let config = TrainConfig {
        lr_init: 0.5,
        early_stop_patience: 2,
        lr_patience: 1,
        max_epochs: 50,
        ..small_config()
    };
    let (graph, features) = setup(&config);
    let model = train(&graph, &[], &features, &config).unwrap();
    assert!(model.meta.epochs_run < 50);
    let h = &model.meta.history;
    assert_eq!(model.meta.epochs_run, model.meta.best_epoch + 2);
    assert!(h.windows(2).all(|w| w[1].lr <= w[0].lr));
}

#[test]
fn shape_and_config_errors() {
    let config = small_config();
    let (graph, _) = setup(&config);
    assert!(matches!(
        train(&graph, &[], &Matrix::zeros(3, 8), &config),
        Err(TrainError::Shape(_))
    ));
    let bad = TrainConfig {
        batch_size: 0,
        ..small_config()
    };
    assert!(matches!(
        train(&graph, &[], &Matrix::zeros(graph.num_nodes(), 8), &bad),
        Err(TrainError::Config(_))
    ));
}

#[test]
fn training_log_format() {
    let mut out = Vec::new();
    write_training_log(
        &mut out,
        &[EpochRecord {
            epoch: 1,
            train_loss: 0.5,
            val_loss: 0.25,
            lr: 0.001,
        }],
    )
    .unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), "1\t0.5\t0.25\t0.001\n");
}
