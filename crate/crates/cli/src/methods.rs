//! Name-to-algorithm dispatch shared by `select` and `sweep`.

use std::collections::BTreeMap;
use std::fmt;

use clap::ValueEnum;
use serde_json::{json, Value};

use coreset_core::boundary::{cal_scores, deepfool_iterative, deepfool_margin_linear};
use coreset_core::geometry::{contextual_diversity, herding, k_center_greedy};
use coreset_core::matching::{build_gradient_set, craig_select, glister_select, omp_gradmatch, GradientSpace};
use coreset_core::metrics::DistanceMetric;
use coreset_core::scores::{
    el2n_score, entropy_score, forgetting_count, grand_score, importance_sample, least_confidence, margin_score,
    select_by_score, ScoreVector,
};
use coreset_core::selection::random_select;
use coreset_core::submodular::{submodular_select, ObjectiveKind, DEFAULT_GC_LAMBDA};
use coreset_core::trainer::{train, Arch, TrainConfig};
use coreset_core::{CoresetError, CoresetResult, DatasetArtifact, Result, Selection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, ValueEnum)]
pub enum Method {
    #[value(name = "random")]
    Random,
    #[value(name = "herding")]
    Herding,
    #[value(name = "kcenter")]
    KCenter,
    #[value(name = "cd")]
    ContextualDiversity,
    #[value(name = "lc")]
    LeastConfidence,
    #[value(name = "entropy")]
    Entropy,
    #[value(name = "margin")]
    Margin,
    #[value(name = "forgetting")]
    Forgetting,
    #[value(name = "grand")]
    Grand,
    #[value(name = "el2n")]
    El2n,
    #[value(name = "importance")]
    Importance,
    #[value(name = "cal")]
    Cal,
    #[value(name = "deepfool")]
    DeepFool,
    #[value(name = "craig")]
    Craig,
    #[value(name = "gradmatch")]
    GradMatch,
    #[value(name = "glister")]
    Glister,
    #[value(name = "fl")]
    FacilityLocation,
    #[value(name = "gc")]
    GraphCut,
}

impl Method {
    pub const ALL: [Method; 18] = [
        Method::Random,
        Method::Herding,
        Method::KCenter,
        Method::ContextualDiversity,
        Method::LeastConfidence,
        Method::Entropy,
        Method::Margin,
        Method::Forgetting,
        Method::Grand,
        Method::El2n,
        Method::Importance,
        Method::Cal,
        Method::DeepFool,
        Method::Craig,
        Method::GradMatch,
        Method::Glister,
        Method::FacilityLocation,
        Method::GraphCut,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Herding => "herding",
            Method::KCenter => "kcenter",
            Method::ContextualDiversity => "cd",
            Method::LeastConfidence => "lc",
            Method::Entropy => "entropy",
            Method::Margin => "margin",
            Method::Forgetting => "forgetting",
            Method::Grand => "grand",
            Method::El2n => "el2n",
            Method::Importance => "importance",
            Method::Cal => "cal",
            Method::DeepFool => "deepfool",
            Method::Craig => "craig",
            Method::GradMatch => "gradmatch",
            Method::Glister => "glister",
            Method::FacilityLocation => "fl",
            Method::GraphCut => "gc",
        }
    }

    /// Methods whose per-sample scores can be averaged over several traces.
    pub fn averages_scores(self) -> bool {
        matches!(
            self,
            Method::LeastConfidence
                | Method::Entropy
                | Method::Margin
                | Method::Forgetting
                | Method::Grand
                | Method::El2n
                | Method::Cal
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Method-specific knobs. `None` falls back to the method's default.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodParams {
    pub lambda: Option<f64>,
    pub knn: usize,
    pub eta: f64,
    pub block: Option<usize>,
    pub grad_space: GradientSpace,
    pub nonneg: bool,
    pub metric: DistanceMetric,
    pub grand_bias: bool,
    /// DeepFool proxy model and its training recipe.
    pub proxy_arch: Arch,
    pub proxy: TrainConfig,
    pub max_iters: usize,
    pub overshoot: f64,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            lambda: None,
            knn: coreset_core::boundary::DEFAULT_KNN,
            eta: coreset_core::matching::DEFAULT_GLISTER_ETA,
            block: None,
            grad_space: GradientSpace::ErrorVector,
            nonneg: true,
            metric: DistanceMetric::Euclidean,
            grand_bias: true,
            proxy_arch: Arch::Mlp1 {
                hidden: Arch::DEFAULT_HIDDEN,
            },
            proxy: TrainConfig {
                epochs: 10,
                ..TrainConfig::default()
            },
            max_iters: coreset_core::boundary::DEFAULT_MAX_ITERS,
            overshoot: coreset_core::boundary::DEFAULT_OVERSHOOT,
        }
    }
}

fn metric_name(m: DistanceMetric) -> &'static str {
    match m {
        DistanceMetric::Euclidean => "euclidean",
        DistanceMetric::Cosine => "cosine",
        DistanceMetric::SymKl => "sym_kl",
    }
}

impl MethodParams {
    fn gc_lambda(&self) -> f64 {
        self.lambda.unwrap_or(DEFAULT_GC_LAMBDA)
    }

    fn omp_lambda(&self) -> f64 {
        self.lambda.unwrap_or(coreset_core::matching::DEFAULT_OMP_LAMBDA)
    }

    /// The parameters `method` actually uses, defaults filled in.
    pub fn resolved(&self, method: Method, balanced: bool) -> BTreeMap<String, Value> {
        let mut p = BTreeMap::new();
        p.insert("balanced".to_string(), json!(balanced));
        let mut put = |k: &str, v: Value| {
            p.insert(k.to_string(), v);
        };
        match method {
            Method::KCenter => put("metric", json!(metric_name(self.metric))),
            Method::ContextualDiversity => put("metric", json!("sym_kl")),
            Method::Grand => put("include_bias", json!(self.grand_bias)),
            Method::Cal => put("knn", json!(self.knn)),
            Method::DeepFool => {
                put("proxy_arch", json!(self.proxy_arch.name()));
                if let Arch::Mlp1 { hidden } = self.proxy_arch {
                    put("proxy_hidden", json!(hidden));
                }
                put("proxy_epochs", json!(self.proxy.epochs));
                put("max_iters", json!(self.max_iters));
                put("overshoot", json!(self.overshoot));
            }
            Method::Craig => put("grad_space", json!(self.grad_space.name())),
            Method::GradMatch => {
                put("grad_space", json!(self.grad_space.name()));
                put("lambda", json!(self.omp_lambda()));
                put("nonneg", json!(self.nonneg));
            }
            Method::Glister => {
                put("eta", json!(self.eta));
                put("block", self.block.map_or(Value::Null, |b| json!(b)));
            }
            Method::GraphCut => put("lambda", json!(self.gc_lambda())),
            _ => {}
        }
        p
    }
}

fn scores_for(method: Method, art: &DatasetArtifact, params: &MethodParams) -> Result<ScoreVector> {
    let trace = art.require_trace()?;
    match method {
        Method::LeastConfidence => least_confidence(trace),
        Method::Entropy => entropy_score(trace),
        Method::Margin => margin_score(trace),
        Method::Forgetting => forgetting_count(trace),
        Method::Grand => grand_score(trace, params.grand_bias),
        Method::El2n => el2n_score(trace),
        Method::Cal => cal_scores(&art.features, trace, params.knn),
        _ => unreachable!("not a score method"),
    }
}

fn deepfool_select(art: &DatasetArtifact, sel: Selection, params: &MethodParams) -> Result<CoresetResult> {
    let cfg = TrainConfig {
        seed: sel.seed,
        ..params.proxy.clone()
    };
    let model = train(params.proxy_arch, &art.features, &art.labels, None, &cfg)?;
    let inputs = art.features.to_f64();
    let (scores, unflipped) = match params.proxy_arch {
        Arch::Linear => (
            deepfool_margin_linear(model.output.weight.view(), model.output.bias.view(), inputs.view())?,
            None,
        ),
        Arch::Mlp1 { .. } => {
            let out = deepfool_iterative(&model, inputs.view(), params.max_iters, params.overshoot)?;
            (out.scores, Some((out.unflipped, out.unflipped_score)))
        }
    };
    let mut result = select_by_score(&scores, &art.labels, sel)?;
    if let Some((count, bound)) = unflipped {
        result = result
            .with_metadata("unflipped", count)
            .with_metadata("unflipped_score", bound);
    }
    Ok(result)
}

/// Runs `method` on `art`. For score-based methods, `runs` holds extra
/// artifacts (same samples, different training seeds) whose scores are
/// averaged with the primary one before ranking.
pub fn select(
    method: Method,
    art: &DatasetArtifact,
    runs: &[DatasetArtifact],
    sel: Selection,
    params: &MethodParams,
) -> Result<CoresetResult> {
    if !runs.is_empty() && !method.averages_scores() {
        return Err(CoresetError::InvalidArgument(format!(
            "--runs only applies to score methods, not `{method}`"
        )));
    }
    for run in runs {
        if run.labels != art.labels {
            return Err(CoresetError::InvalidArgument(
                "--runs artifacts must share the primary artifact's samples and labels".into(),
            ));
        }
    }
    let labels = &art.labels;
    let result = match method {
        Method::Random => random_select(labels, sel)?,
        Method::Herding => herding(&art.features, labels, sel)?,
        Method::KCenter => k_center_greedy(&art.features, labels, sel, params.metric)?,
        Method::ContextualDiversity => contextual_diversity(art.require_trace()?, labels, sel)?,
        m if m.averages_scores() => {
            let all = std::iter::once(art)
                .chain(runs)
                .map(|a| scores_for(m, a, params))
                .collect::<Result<Vec<_>>>()?;
            let result = select_by_score(&ScoreVector::mean(&all)?, labels, sel)?;
            if runs.is_empty() {
                result
            } else {
                result.with_metadata("runs", all.len())
            }
        }
        Method::Importance => importance_sample(art.require_trace()?, labels, sel)?,
        Method::DeepFool => deepfool_select(art, sel, params)?,
        Method::Craig => craig_select(&build_gradient_set(art.require_trace()?, params.grad_space)?, labels, sel)?,
        Method::GradMatch => omp_gradmatch(
            &build_gradient_set(art.require_trace()?, params.grad_space)?,
            labels,
            sel,
            params.omp_lambda(),
            params.nonneg,
        )?,
        Method::Glister => glister_select(art, sel, params.eta, params.block)?,
        Method::FacilityLocation => submodular_select(&art.features, labels, sel, ObjectiveKind::FacilityLocation)?,
        Method::GraphCut => submodular_select(
            &art.features,
            labels,
            sel,
            ObjectiveKind::GraphCut {
                lambda: params.gc_lambda(),
            },
        )?,
        _ => unreachable!("score methods handled above"),
    };
    Ok(CoresetResult {
        method: method.name().to_string(),
        ..result
    })
}
