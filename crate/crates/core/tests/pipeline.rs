use coreset_core::boundary::{cal_scores, deepfool_margin_linear, DEFAULT_KNN};
use coreset_core::geometry::{contextual_diversity, herding, k_center_greedy};
use coreset_core::matching::{build_gradient_set, craig_select, glister_select, omp_gradmatch, GradientSpace};
use coreset_core::metrics::DistanceMetric;
use coreset_core::scores::{
    el2n_score, entropy_score, forgetting_count, grand_score, importance_sample, least_confidence, margin_score,
    select_by_score,
};
use coreset_core::selection::{class_quotas, random_select};
use coreset_core::submodular::{submodular_select, ObjectiveKind};
use coreset_core::trainer::{
    evaluate_coreset, generate_synthetic, record_trace_with_validation, train, Arch, SyntheticSpec, TrainConfig,
};
use coreset_core::{
    budget_from_fraction, load_artifact, save_artifact, CoresetResult, DatasetArtifact, Result, Selection,
    ValidationSplit,
};

fn artifact() -> (DatasetArtifact, coreset_core::trainer::SyntheticData) {
    let mut spec: SyntheticSpec = "c3-n60-d6-sep6".parse().unwrap();
    spec.seed = 5;
    let data = generate_synthetic(&spec).unwrap();
    let cfg = TrainConfig { epochs: 12, seed: 5, ..TrainConfig::default() };
    let rec = record_trace_with_validation(
        Arch::Mlp1 { hidden: 8 },
        &data.train_features,
        &data.train_labels,
        Some((&data.test_features, &data.test_labels)),
        &cfg,
        6,
    )
    .unwrap();
    let validation = ValidationSplit {
        features: data.test_features.clone(),
        labels: data.test_labels.clone(),
        trace: rec.validation.unwrap(),
    };
    let art = DatasetArtifact::new(
        data.train_features.clone(),
        data.train_labels.clone(),
        Some(rec.train),
        Some(validation),
    )
    .unwrap();
    (art, data)
}

fn run_all(art: &DatasetArtifact, sel: Selection) -> Vec<Result<CoresetResult>> {
    let t = art.trace.as_ref().unwrap();
    let (f, l) = (&art.features, &art.labels);
    let gs = build_gradient_set(t, GradientSpace::ErrorVector).unwrap();
    let proxy = train(Arch::Linear, f, l, None, &TrainConfig { epochs: 10, ..TrainConfig::default() }).unwrap();
    let inputs = f.to_f64();
    vec![
        random_select(l, sel),
        herding(f, l, sel),
        k_center_greedy(f, l, sel, DistanceMetric::Euclidean),
        contextual_diversity(t, l, sel),
        select_by_score(&least_confidence(t).unwrap(), l, sel),
        select_by_score(&entropy_score(t).unwrap(), l, sel),
        select_by_score(&margin_score(t).unwrap(), l, sel),
        select_by_score(&forgetting_count(t).unwrap(), l, sel),
        select_by_score(&grand_score(t, true).unwrap(), l, sel),
        select_by_score(&el2n_score(t).unwrap(), l, sel),
        importance_sample(t, l, sel),
        select_by_score(&cal_scores(f, t, DEFAULT_KNN).unwrap(), l, sel),
        select_by_score(
            &deepfool_margin_linear(proxy.output.weight.view(), proxy.output.bias.view(), inputs.view()).unwrap(),
            l,
            sel,
        ),
        craig_select(&gs, l, sel),
        omp_gradmatch(&gs, l, sel, 1.0, true),
        glister_select(art, sel, 0.1, None),
        submodular_select(f, l, sel, ObjectiveKind::FacilityLocation),
        submodular_select(f, l, sel, ObjectiveKind::GraphCut { lambda: 0.5 }),
    ]
}

#[test]
fn every_method_honors_the_budget_and_quotas() {
    let (art, _) = artifact();
    let dir = tempfile::tempdir().unwrap();
    save_artifact(&art, dir.path()).unwrap();
    let art = load_artifact(dir.path()).unwrap();
    let k = budget_from_fraction(art.n(), 0.25).unwrap();
    let sel = Selection::new(k, true, 3);
    let first = run_all(&art, sel);
    let second = run_all(&art, sel);
    for (a, b) in first.into_iter().zip(second) {
        let a = a.unwrap();
        assert_eq!(a, b.unwrap(), "{} is not deterministic", a.method);
        assert_eq!(a.len(), k, "{}", a.method);
        assert!(a.indices.windows(2).all(|w| w[0] < w[1]), "{}", a.method);
        assert!(a.weights.iter().all(|w| w.is_finite() && *w >= 0.0), "{}", a.method);
        let mut counts = vec![0; art.num_classes()];
        for &i in &a.indices {
            counts[art.labels.get(i)] += 1;
        }
        assert_eq!(counts, class_quotas(k, art.num_classes()), "{}", a.method);
    }
}

#[test]
fn unbalanced_selection_keeps_the_budget() {
    let (art, _) = artifact();
    let k = budget_from_fraction(art.n(), 0.1).unwrap();
    for res in run_all(&art, Selection::new(k, false, 9)) {
        let res = res.unwrap();
        assert_eq!(res.len(), k, "{}", res.method);
    }
}

#[test]
fn half_coresets_train_well() {
    let (art, data) = artifact();
    let k = budget_from_fraction(art.n(), 0.5).unwrap();
    let cfg = TrainConfig { epochs: 40, ..TrainConfig::default() };
    for res in run_all(&art, Selection::new(k, true, 1)) {
        let res = res.unwrap();
        let acc = evaluate_coreset(
            &res,
            &art.features,
            &art.labels,
            &data.test_features,
            &data.test_labels,
            Arch::Linear,
            &cfg,
        )
        .unwrap();
        assert!(acc >= 0.85, "{}: {acc}", res.method);
    }
}
