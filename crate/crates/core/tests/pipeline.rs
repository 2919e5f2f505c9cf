mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsmil::imaging::RgbImage;
use tsmil::mil::dropout_calls_on_this_thread;
use tsmil::pipeline::{
    evaluate, extract_tissue_tiles, normalize_slide, predict, EvalReport, Experiment, PreprocessConfig, SlideRecord, TwoStageModel,
    Variant,
};
use tsmil::synth::SlideClass;
use tsmil::Error;

#[test]
fn training_is_deterministic_and_checkpoints_round_trip() {
    let (dcfg, cfg) = common::tiny_setup();
    let data = common::prepare_synthetic(&dcfg, &cfg, 11);
    let train = |variant| Experiment::new(&data, cfg.clone(), 3).unwrap().train_variant(variant).unwrap();
    for variant in [Variant::OneStage, Variant::AttClusterTwoStage] {
        let (a, b) = (train(variant), train(variant));
        assert_eq!(a.model, b.model, "{variant}");
        assert_eq!(a.logs, b.logs);
        let (ra, rb) = (evaluate(&a.model, &data.test).unwrap(), evaluate(&b.model, &data.test).unwrap());
        assert_eq!(ra, rb);

        let dir = tempfile::tempdir().unwrap();
        a.model.save(dir.path()).unwrap();
        let loaded = TwoStageModel::load(dir.path()).unwrap();
        assert_eq!(loaded, a.model);
        assert_eq!(evaluate(&loaded, &data.test).unwrap(), ra);
    }
    let other = Experiment::new(&data, cfg.clone(), 4).unwrap().train_variant(Variant::OneStage).unwrap();
    assert_ne!(other.model, train(Variant::OneStage).model);
}

#[test]
fn inference_is_dropout_free_and_reports_are_consistent() {
    let (dcfg, cfg) = common::tiny_setup();
    let data = common::prepare_synthetic(&dcfg, &cfg, 12);
    let mut exp = Experiment::new(&data, cfg, 5).unwrap();
    let trained = exp.train_variant(Variant::AttTwoStage).unwrap();
    let slides: Vec<_> = data.test.iter().chain(&data.val).cloned().collect();

    let before = dropout_calls_on_this_thread();
    let first: Vec<_> = slides.iter().map(|s| predict(&trained.model, s).unwrap()).collect();
    let second: Vec<_> = slides.iter().map(|s| predict(&trained.model, s).unwrap()).collect();
    let report = evaluate(&trained.model, &slides).unwrap();
    assert_eq!(dropout_calls_on_this_thread(), before);
    for (p, q) in first.iter().zip(&second) {
        assert_eq!((p.class, &p.probs, &p.alpha, &p.selection.selected), (q.class, &q.probs, &q.alpha, &q.selection.selected));
        assert!(p.selection.selected.len() <= trained.model.selection.budget);
        assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    let trace: usize = (0..3).map(|i| report.confusion[i][i]).sum();
    assert_eq!(report.accuracy, trace as f64 / slides.len() as f64);
    for class in SlideClass::ALL {
        let row: usize = report.confusion[class.index()].iter().sum();
        assert_eq!(row, slides.iter().filter(|s| s.class == class).count());
    }
    for (rec, p) in report.per_slide.iter().zip(&first) {
        assert_eq!(rec.prediction, p.class);
    }
}

#[test]
fn zero_budget_and_empty_slides() {
    let (dcfg, cfg) = common::tiny_setup();
    let data = common::prepare_synthetic(&dcfg, &cfg, 13);
    let mut exp = Experiment::new(&data, cfg, 6).unwrap();
    let mut model = exp.train_variant(Variant::BrTwoStage).unwrap().model;

    let blank = RgbImage::filled(256, 256, [238, 238, 238]).unwrap();
    let raw = extract_tissue_tiles("blank", SlideClass::High, &blank, &PreprocessConfig::default()).unwrap();
    let empty = normalize_slide(raw, &data.reference).unwrap();
    assert!(empty.is_empty());
    let p = predict(&model, &empty).unwrap();
    assert_eq!(p.class, SlideClass::Benign);
    assert!(p.no_tissue && p.selection.selected.is_empty());
    let report = evaluate(&model, std::slice::from_ref(&empty)).unwrap();
    assert!(report.per_slide[0].no_tissue);
    assert_eq!(report.accuracy, 0.0);

    model.selection.budget = 0;
    assert!(matches!(predict(&model, &data.test[0]), Err(Error::EmptySelectionBudget)));
    assert!(matches!(evaluate(&model, &[]), Err(Error::EmptySplit(_))));
}

fn record(truth: SlideClass, prediction: SlideClass) -> SlideRecord {
    SlideRecord { slide_id: "s".into(), truth, prediction, no_tissue: false }
}

#[test]
fn accuracy_examples() {
    let balanced: Vec<SlideClass> = SlideClass::ALL.iter().flat_map(|&c| [c; 10]).collect();
    let constant = EvalReport::from_records(balanced.iter().map(|&t| record(t, SlideClass::Benign)).collect()).unwrap();
    assert!((constant.accuracy - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(constant.confusion.iter().map(|r| r[0]).collect::<Vec<_>>(), vec![10, 10, 10]);
    let perfect = EvalReport::from_records(balanced.iter().map(|&t| record(t, t)).collect()).unwrap();
    assert_eq!(perfect.accuracy, 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let random: Vec<SlideRecord> = (0..300)
        .map(|i| record(SlideClass::ALL[i % 3], SlideClass::ALL[rng.random_range(0..3)]))
        .collect();
    let acc = EvalReport::from_records(random).unwrap().accuracy;
    assert!((acc - 1.0 / 3.0).abs() <= 0.09, "random predictor accuracy {acc}");
}
