use std::fs;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use summarunner::checkpoint::Checkpoint;
use summarunner::corpus::synthetic::{generate, SyntheticConfig};
use summarunner::corpus::{build_vocab, load_corpus, write_corpus, CorpusConfig};
use summarunner::diffcore::ParameterStore;
use summarunner::evaluation::{evaluate_corpus, tune_k, ModelScorer, SelectionPolicy, SentenceScorer};
use summarunner::model::{ModelConfig, SummaRunner};
use summarunner::oracle::{label_corpus, OracleConfig};
use summarunner::rouge::{Flavor, LengthLimit, RougeVariant};
use summarunner::training::{train, Example, TrainConfig};

#[test]
fn label_train_save_reload_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let raw = generate(
        &SyntheticConfig {
            documents: 12,
            positives: (3, 3),
            ..SyntheticConfig::default()
        },
        &mut rng,
    );
    let (docs, stats) = label_corpus(&raw, &OracleConfig::default()).unwrap();
    assert_eq!(stats.documents, 12);
    assert_eq!(stats.mean_selected, 3.0);

    let corpus_path = dir.path().join("labeled.jsonl");
    write_corpus(&corpus_path, &docs).unwrap();
    let docs = load_corpus(&corpus_path, &CorpusConfig::default()).unwrap().documents;

    let vocab = build_vocab(&docs, 500);
    let config = ModelConfig {
        embedding_dim: 8,
        hidden_dim: 12,
        position_embedding_dim: 4,
        max_abs_positions: 16,
        num_rel_segments: 4,
        ..ModelConfig::new(vocab.len())
    };
    let mut store = ParameterStore::new();
    let model = SummaRunner::new(config, &mut store, &mut rng).unwrap();
    let set: Vec<Example> = docs.iter().map(|d| Example::from_document(d, &vocab)).collect();
    let ckpt = dir.path().join("model.json");
    let train_config = TrainConfig {
        batch_size: 4,
        max_epochs: 40,
        seed: 1,
        ..TrainConfig::default()
    };
    let report = train(&model, None, &mut store, &set, &set, &train_config, |_, s| {
        Checkpoint::capture(&model, &vocab, s)?.save(&ckpt)
    })
    .unwrap();
    assert!(report.epochs.last().unwrap().train_loss < report.epochs[0].train_loss);

    // The saved checkpoint is the restored best state.
    let (loaded, loaded_store, loaded_vocab) = Checkpoint::load(&ckpt).unwrap().into_model().unwrap();
    let scorer = ModelScorer {
        model: &loaded,
        store: &loaded_store,
        vocab: &loaded_vocab,
    };
    let live = ModelScorer {
        model: &model,
        store: &store,
        vocab: &vocab,
    };
    for d in &docs {
        assert_eq!(scorer.probabilities(d).unwrap(), live.probabilities(d).unwrap());
    }

    // References are exactly the three oracle sentences.
    let search = tune_k(&scorer, &docs, &[1, 2, 3, 4, 5], RougeVariant::Rouge1, Flavor::F1).unwrap();
    assert_eq!(search.best_k, 3, "{search:?}");
    let fitted = evaluate_corpus(
        Some(&scorer),
        &docs,
        SelectionPolicy::TopK(3),
        LengthLimit::None,
        Flavor::F1,
        false,
    )
    .unwrap();
    let lead = evaluate_corpus(
        None,
        &docs,
        SelectionPolicy::Lead(3),
        LengthLimit::None,
        Flavor::F1,
        false,
    )
    .unwrap();
    assert!(
        fitted.rouge1 > 0.99 && fitted.rouge1 > lead.rouge1,
        "{fitted:?} vs {lead:?}"
    );
    let json = serde_json::to_value(&fitted).unwrap();
    for key in ["policy", "limit", "rouge1", "rouge2", "rougeL"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert!(fs::metadata(&ckpt).unwrap().len() > 0);
}
