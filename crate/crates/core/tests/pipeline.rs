mod common;

use xnb::classifier::{fit_detailed, fit_fnb, fit_gnb, fit_xnb, load_model, save_model, Method, XnbConfig};
use xnb::dataset::{ClassColumn, Dataset};
use xnb::evaluation::evaluate_cv;
use xnb::hellinger::hellinger_table;
use xnb::kde::KdeBank;
use xnb::selection::{discriminatory_power, explain_selection, select_class_specific};

#[test]
fn fnb_agrees_with_gnb_on_separated_gaussians() {
    let train = common::separated_gaussians(400, 4, 4.0, 10);
    let test = common::separated_gaussians(1000, 4, 4.0, 11);
    let fnb = fit_fnb(&train, &XnbConfig::default()).unwrap();
    let gnb = fit_gnb(&train).unwrap();
    let a = fnb.predict_dataset(&test).unwrap();
    let b = gnb.predict_dataset(&test).unwrap();
    let agree = a.iter().zip(&b).filter(|(x, y)| x.label == y.label).count();
    assert!(agree >= 990, "label agreement {agree}/1000");
}

#[test]
fn xnb_recovers_shifted_blocks() {
    let d = common::shifted_blocks(300, 30, 3, 2, 6.0, 12);
    let fit = fit_detailed(&d, &XnbConfig::default(), Method::Xnb).unwrap();
    let selection = fit.selection.unwrap();
    for class in &selection.classes {
        assert!(!class.exhausted);
        assert!(class.len() <= 6, "{}: {:?}", class.class, class.names());
        let power = discriminatory_power(&class.names(), &class.class, fit.table.as_ref().unwrap()).unwrap();
        assert!(power > 0.999);
        for v in &class.variables {
            assert!(v.index < 6, "noise variable {} picked for {}", v.variable, class.class);
        }
    }
    let blocks = explain_selection(&selection);
    assert_eq!(blocks.len(), 3);
    let preds = fit.model.predict_dataset(&d).unwrap();
    let hits = preds.iter().zip(d.labels()).filter(|(p, l)| &p.label == *l).count();
    assert!(hits as f64 / d.n_samples() as f64 > 0.98);
}

#[test]
fn identical_class_distributions_select_everything() {
    let base = common::iid_columns(40, 6, &common::standard_normal(), 13);
    let columns: Vec<Vec<f64>> = base.columns().iter().map(|c| c.iter().chain(c).copied().collect()).collect();
    let labels = (0..80).map(|i| if i < 40 { "a" } else { "b" }.to_string()).collect();
    let d = Dataset::new(base.variable_names().to_vec(), columns, labels).unwrap();
    let bank = KdeBank::fit(&d, Default::default(), Default::default()).unwrap();
    let table = hellinger_table(&d, &bank, 50).unwrap();
    assert!(table.entries().all(|(_, _, _, h)| h < 1e-7), "{}", table.to_tsv());
    let map = select_class_specific(&table, &Default::default()).unwrap();
    assert_eq!(map.counts(), [6, 6]);
    assert_eq!(fit_xnb(&d, &XnbConfig::default()).unwrap().feature_counts(), [6, 6]);
}

#[test]
fn far_apart_classes_have_hellinger_near_one() {
    let labels: Vec<String> = (0..40).map(|i| if i % 2 == 0 { "a" } else { "b" }.to_string()).collect();
    let col: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 0.0 } else { 1000.0 } + (i as f64) * 0.01).collect();
    let d = Dataset::new(vec!["g".into()], vec![col], labels).unwrap();
    let bank = KdeBank::fit(&d, Default::default(), Default::default()).unwrap();
    let table = hellinger_table(&d, &bank, 50).unwrap();
    assert!(table.lookup("g", "a", "b").unwrap() >= 0.99);
}

#[test]
fn model_file_round_trip_predicts_identically() {
    let d = common::shifted_blocks(120, 12, 3, 2, 4.0, 14);
    let model = fit_xnb(&d, &XnbConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, model);
    let a = model.predict_dataset(&d).unwrap();
    let b = back.predict_dataset(&d).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.label, y.label);
        let bits = |p: &xnb::Prediction| p.log_scores.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(x), bits(y));
    }
}

#[test]
fn csv_round_trip_gives_the_same_model() {
    let d = common::shifted_blocks(90, 8, 3, 2, 4.0, 15);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    d.save_csv(&path, "class").unwrap();
    let back = Dataset::load_csv(&path, &ClassColumn::Name("class".into())).unwrap();
    assert_eq!(back, d);
    let cfg = XnbConfig::default();
    assert_eq!(fit_xnb(&back, &cfg).unwrap(), fit_xnb(&d, &cfg).unwrap());
}

#[test]
fn cross_validation_is_reproducible_and_bounded() {
    let d = common::shifted_blocks(90, 10, 3, 2, 5.0, 16);
    let cfg = XnbConfig::default();
    let methods = [Method::Gnb, Method::Fnb, Method::Xnb];
    let a = evaluate_cv(&d, &methods, 5, 99, &cfg).unwrap();
    let b = evaluate_cv(&d, &methods, 5, 99, &cfg).unwrap();
    assert_eq!(a.without_timings(), b.without_timings());
    assert_eq!(a.shuffler, "ChaCha8");
    let xnb = a.method(Method::Xnb).unwrap();
    assert!(xnb.mean_features <= 10.0);
    let mean_of_folds = xnb.fold_mean_features.iter().sum::<f64>() / xnb.fold_mean_features.len() as f64;
    assert!((xnb.mean_features - mean_of_folds).abs() < 1e-12);
}
