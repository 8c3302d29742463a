use nhnn::dataio::{generate_synthetic, load_corpus, save_corpus, SyntheticSpec};
use nhnn::nhnn::{
    predict_label, train_base_dcnn, train_nhnn, ClusterConfig, DcnnArch, NhnnModel, TrainingConfig, Variant,
};

fn spec() -> SyntheticSpec {
    SyntheticSpec {
        n_speakers_per_group: 3,
        utterances_per_speaker: 30,
        d_s: 4,
        n_mel: 6,
        t_range: (8, 14),
        label_effect: 3.0,
        seed: 21,
        ..SyntheticSpec::default()
    }
}

fn arch() -> DcnnArch {
    DcnnArch {
        n_mel: 6,
        channels: 8,
        kernel_size: 3,
        dilations: [1, 2],
        hidden: 8,
        n_class: 3,
    }
}

#[test]
fn manifest_round_trip_is_exact() {
    let corpus = generate_synthetic(&spec()).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let path = save_corpus(&corpus, tmp.path()).unwrap();
    let (back, report) = load_corpus(&path).unwrap();
    assert_eq!(report.listed, corpus.len());
    assert_eq!(report.excluded_no_majority, 0);
    assert_eq!(back.utterances, corpus.utterances);
}

#[test]
fn trained_model_survives_save_and_load() {
    let corpus = generate_synthetic(&spec()).unwrap();
    let training = TrainingConfig {
        batch_size: 16,
        learning_rate: 1e-2,
        max_epochs: 15,
        ..TrainingConfig::default()
    };
    let (base, log) = train_base_dcnn(&corpus, &arch(), &training).unwrap();
    assert!(log.best_val_loss.is_finite());

    for variant in [Variant::Fc, Variant::FcConv] {
        let (model, report) = train_nhnn(&corpus, &base, variant, &ClusterConfig::default(), &training).unwrap();
        // two well-separated speaker groups
        assert_eq!(model.n_clusters(), 2, "{:?}", report.prune);

        let tmp = tempfile::tempdir().unwrap();
        model.save(tmp.path()).unwrap();
        let back = NhnnModel::load(tmp.path()).unwrap();
        for u in corpus.utterances.iter().take(20) {
            assert_eq!(model.predict(u).unwrap(), back.predict(u).unwrap());
        }

        let correct = corpus
            .utterances
            .iter()
            .filter(|u| predict_label(&model, u).unwrap() == u.label().unwrap().unwrap())
            .count();
        assert!(correct as f64 / corpus.len() as f64 > 0.8, "{variant:?}: {correct}/{}", corpus.len());
    }
}
