//! k-fold cross-validation with per-fold oversampling and normalization.

use rayon::prelude::*;

use super::fit::{fit, predict_dataset, EpochStats};
use super::kfold::{kfold_split, FoldSplit};
use super::oversample::oversample_indices;
use super::{Dataset, TrainConfig, TrainError};
use crate::ingest::{compute_norm_stats, normalize, NormScope, NormStats};
use crate::metrics::{confusion_matrix, macro_average, ClassMetrics, ConfusionMatrix, MetricReport};
use crate::model::{ModelConfig, ModelGraph};

/// Where oversampling happens relative to the fold split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OversampleScope {
    /// Balance each training portion after splitting; test folds untouched.
    #[default]
    TrainFolds,
    /// Balance the whole dataset first, then split. Copies of a test
    /// segment can land in the training portion.
    WholeDataset,
}

/// Everything about a cross-validation run except the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct CvPlan {
    pub k_folds: usize,
    pub seed: u64,
    pub oversample: bool,
    pub oversample_scope: OversampleScope,
    pub norm_scope: NormScope,
}

/// What the learner returns for one fold.
#[derive(Debug, Clone)]
pub struct FoldRun {
    pub predictions: Vec<usize>,
    pub history: Vec<EpochStats>,
    pub model: Option<ModelGraph>,
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub split: FoldSplit,
    /// Original dataset index behind every training example, duplicates
    /// included, in training-set order.
    pub train_sources: Vec<usize>,
    /// Original dataset index behind every test example.
    pub test_sources: Vec<usize>,
    /// Statistics fitted on this fold's training portion, when
    /// normalization is per fold.
    pub norm_stats: Option<NormStats>,
    pub history: Vec<EpochStats>,
    pub model: Option<ModelGraph>,
    pub confusion: ConfusionMatrix,
    pub report: MetricReport,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub folds: Vec<FoldOutcome>,
    /// Sum of the per-fold confusion matrices.
    pub pooled_confusion: ConfusionMatrix,
    /// Metrics of the pooled matrix.
    pub pooled_report: MetricReport,
    /// Per-fold overall metrics averaged over folds.
    pub fold_mean: ClassMetrics,
}

/// Seed offset for fold `i`, so folds draw independent streams.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_add((fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn normalize_all(data: &Dataset) -> Result<Dataset, TrainError> {
    let stats = compute_norm_stats(&data.segments)?;
    let segments = data
        .segments
        .iter()
        .map(|s| normalize(s, &stats))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset {
        segments,
        scheme: data.scheme.clone(),
    })
}

/// Runs `learner` on every fold (folds run in parallel) and scores its test
/// predictions. `learner` receives the fold index, the prepared training set
/// and the prepared test set.
pub fn cross_validate<F>(data: &Dataset, plan: &CvPlan, learner: F) -> Result<CvOutcome, TrainError>
where
    F: Fn(usize, &Dataset, &Dataset) -> Result<FoldRun, TrainError> + Sync,
{
    let any_normalized = data.segments.iter().any(|s| s.normalized);
    let all_normalized = data.segments.iter().all(|s| s.normalized);
    let base = match plan.norm_scope {
        NormScope::TrainOnly if any_normalized => {
            return Err(TrainError::Config(
                "norm_scope = train_only needs unnormalized segments".into(),
            ))
        }
        NormScope::TrainOnly => data.clone(),
        NormScope::All if all_normalized => data.clone(),
        NormScope::All if any_normalized => {
            return Err(TrainError::Data("dataset mixes normalized and raw segments".into()))
        }
        NormScope::All => normalize_all(data)?,
    };

    // `pool` is the index space the folds are cut from; `pool_sources` maps
    // it back to the original dataset.
    let pool_sources: Vec<usize> = if plan.oversample && plan.oversample_scope == OversampleScope::WholeDataset {
        oversample_indices(&base.labels(), base.num_classes(), plan.seed)?
    } else {
        (0..base.len()).collect()
    };
    let splits = kfold_split(pool_sources.len(), plan.k_folds, plan.seed)?;
    let k = base.num_classes();

    let folds: Vec<FoldOutcome> = splits
        .into_par_iter()
        .map(|split| {
            let i = split.fold_index;
            let mut train_sources: Vec<usize> = split.train_indices.iter().map(|&j| pool_sources[j]).collect();
            let test_sources: Vec<usize> = split.test_indices.iter().map(|&j| pool_sources[j]).collect();
            if plan.oversample && plan.oversample_scope == OversampleScope::TrainFolds {
                let labels: Vec<usize> = train_sources.iter().map(|&j| base.segments[j].label.index).collect();
                let picks = oversample_indices(&labels, k, fold_seed(plan.seed, i))?;
                train_sources = picks.into_iter().map(|p| train_sources[p]).collect();
            }
            let mut train = base.subset(&train_sources);
            let mut test = base.subset(&test_sources);
            let mut norm_stats = None;
            if plan.norm_scope == NormScope::TrainOnly {
                let mut unique = train_sources.clone();
                unique.sort_unstable();
                unique.dedup();
                let stats = compute_norm_stats(unique.iter().map(|&j| &base.segments[j]))?;
                for s in train.segments.iter_mut().chain(test.segments.iter_mut()) {
                    *s = normalize(s, &stats)?;
                }
                norm_stats = Some(stats);
            }

            let run = learner(i, &train, &test).map_err(|e| TrainError::Fold {
                fold: i,
                source: Box::new(e),
            })?;
            let truth = test.labels();
            let confusion = confusion_matrix(&truth, &run.predictions, k)?;
            let report = MetricReport::from_confusion(&confusion, base.scheme.codes());
            Ok(FoldOutcome {
                split,
                train_sources,
                test_sources,
                norm_stats,
                history: run.history,
                model: run.model,
                confusion,
                report,
            })
        })
        .collect::<Result<_, TrainError>>()?;

    let mut pooled_confusion = ConfusionMatrix::zeros(k);
    for f in &folds {
        pooled_confusion.add(&f.confusion)?;
    }
    let pooled_report = MetricReport::from_confusion(&pooled_confusion, base.scheme.codes());
    let overalls: Vec<ClassMetrics> = folds.iter().map(|f| f.report.overall).collect();
    let mut fold_mean = macro_average(&overalls);
    // average each column directly, including F1
    fold_mean.f1 = overalls.iter().map(|m| m.f1).sum::<f64>() / overalls.len() as f64;
    Ok(CvOutcome {
        folds,
        pooled_confusion,
        pooled_report,
        fold_mean,
    })
}

/// Cross-validates the network: each fold builds a fresh model seeded from
/// the fold index, trains it on the prepared training set and predicts the
/// held-out fold.
pub fn run_cross_validation(data: &Dataset, model_cfg: &ModelConfig, train_cfg: &TrainConfig) -> Result<CvOutcome, TrainError> {
    train_cfg.validate()?;
    cross_validate(data, &train_cfg.plan(), |fold, train, test| {
        let seed = fold_seed(train_cfg.seed, fold);
        let mut model = ModelGraph::build(model_cfg, seed)?;
        let history = fit(&mut model, train, train_cfg, seed ^ 0x5EED)?;
        let predictions = predict_dataset(&model, test, train_cfg.batch_size)?;
        Ok(FoldRun {
            predictions,
            history,
            model: Some(model),
        })
    })
}
