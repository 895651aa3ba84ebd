//! The anomaly-detection block: isolation forest and DBSCAN over timeslot
//! vectors, three isolation-score thresholding policies, and the ideal
//! ensemble selector.

mod dbscan;
mod isolation;

pub use dbscan::DistanceMatrix;
pub use isolation::{average_path_length, score_from_path_length};

use crate::error::{Error, Result};
use crate::eval;
use crate::ingest::{standardize_case, CaseBundle};
use crate::model::{rank_from_scores, AnomalySource, AnomalyVector, Dataset};
use crate::score::FsPolicy;

/// How isolation scores are turned into a binary anomaly vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    /// Flag the ceil(X*T) highest-scoring slots.
    Contamination(f64),
    /// Flag slots whose score strictly exceeds the threshold.
    StaticScore(f64),
    /// Flag every slot scoring at or above the elbow of the sorted topmost
    /// scores (`top_fraction` of T, default 0.10).
    DynamicElbow { top_fraction: f64 },
}

impl ThresholdPolicy {
    pub const DEFAULT_ELBOW: ThresholdPolicy = ThresholdPolicy::DynamicElbow { top_fraction: 0.10 };

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            ThresholdPolicy::Contamination(x) => *x > 0.0 && *x < 1.0,
            ThresholdPolicy::StaticScore(theta) => *theta > 0.0 && *theta < 1.0,
            ThresholdPolicy::DynamicElbow { top_fraction } => {
                *top_fraction > 0.0 && *top_fraction <= 1.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{self:?} out of range")))
        }
    }

    pub fn label(&self) -> String {
        match self {
            ThresholdPolicy::Contamination(x) => format!("if_contamination{x}"),
            ThresholdPolicy::StaticScore(theta) => format!("if_theta{theta}"),
            ThresholdPolicy::DynamicElbow { .. } => "if_elbow".to_string(),
        }
    }
}

/// Isolation-forest settings. The tree count is fixed at 300 by default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsolationForestParams {
    pub n_trees: usize,
    pub subsample_size: usize,
    pub seed: u64,
    pub threshold_policy: ThresholdPolicy,
}

pub const DEFAULT_TREES: usize = 300;
pub const DEFAULT_SUBSAMPLE: usize = 256;

impl IsolationForestParams {
    /// Default settings (300 trees, subsample 256, 1% contamination) with an
    /// explicit seed.
    pub fn new(seed: u64) -> Self {
        IsolationForestParams {
            n_trees: DEFAULT_TREES,
            subsample_size: DEFAULT_SUBSAMPLE,
            seed,
            threshold_policy: ThresholdPolicy::Contamination(0.01),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParameter("n_trees must be >= 1".into()));
        }
        if self.subsample_size < 2 {
            return Err(Error::InvalidParameter("subsample_size must be >= 2".into()));
        }
        self.threshold_policy.validate()
    }

    /// Same params with the subsample clamped to the dataset size, the way the
    /// evaluation pipelines call the forest.
    pub fn clamped_to(&self, timeslots: usize) -> Self {
        IsolationForestParams {
            subsample_size: self.subsample_size.min(timeslots),
            ..*self
        }
    }
}

/// DBSCAN settings; epsilon is Euclidean in standardized units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanParams {
    pub epsilon: f64,
    pub min_pts: usize,
}

impl DbscanParams {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::InvalidParameter("epsilon must be positive".into()));
        }
        if self.min_pts < 2 {
            return Err(Error::InvalidParameter("min_pts must be >= 2".into()));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!("dbscan_eps{}_minpts{}", self.epsilon, self.min_pts)
    }
}

fn require_standardized(dataset: &Dataset) -> Result<()> {
    if dataset.is_standardized() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(
            "detector needs a standardized dataset".into(),
        ))
    }
}

/// Score every timeslot with an isolation forest. Higher means more isolated.
/// Deterministic given the seed.
pub fn isolation_scores(dataset: &Dataset, params: &IsolationForestParams) -> Result<Vec<f64>> {
    require_standardized(dataset)?;
    params.validate()?;
    let t = dataset.timeslot_count();
    if params.subsample_size > t {
        return Err(Error::InvalidParameter(format!(
            "subsample_size {} exceeds timeslot count {t}",
            params.subsample_size
        )));
    }
    let points: Vec<Vec<f64>> = (0..t).map(|slot| dataset.timeslot_vector(slot)).collect();
    Ok(isolation::forest_scores(
        &points,
        params.n_trees,
        params.subsample_size,
        params.seed,
    ))
}

/// Apply a thresholding policy to isolation scores.
pub fn if_detect(scores: &[f64], policy: &ThresholdPolicy) -> Result<AnomalyVector> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("no isolation scores".into()));
    }
    policy.validate()?;
    let t = scores.len();
    let flags = match policy {
        ThresholdPolicy::Contamination(x) => {
            let k = (x * t as f64).ceil() as usize;
            let k = k.clamp(1, t);
            // ties at the boundary: lower slot index wins
            let mut order: Vec<usize> = (0..t).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            let mut flags = vec![false; t];
            for &slot in order.iter().take(k) {
                flags[slot] = true;
            }
            flags
        }
        ThresholdPolicy::StaticScore(theta) => scores.iter().map(|&s| s > *theta).collect(),
        ThresholdPolicy::DynamicElbow { top_fraction } => {
            let k = ((top_fraction * t as f64).ceil() as usize).clamp(1, t);
            let mut top: Vec<f64> = scores.to_vec();
            top.sort_by(|a, b| b.total_cmp(a));
            top.truncate(k);
            let elbow = elbow_score(&top);
            scores.iter().map(|&s| s >= elbow).collect()
        }
    };
    Ok(AnomalyVector::new(flags, AnomalySource::IsolationForest))
}

/// Elbow of a descending score curve: the point with maximum perpendicular
/// distance to the chord joining the first and last points. Ties and
/// degenerate segments resolve to the earliest point.
fn elbow_score(sorted_desc: &[f64]) -> f64 {
    let n = sorted_desc.len();
    if n <= 2 {
        return sorted_desc[0];
    }
    // chord from (0, y0) to (n-1, y_last); distance needs only the numerator
    // |dx*(y - y0) - dy*(x - 0)| since the denominator is shared
    let dx = (n - 1) as f64;
    let dy = sorted_desc[n - 1] - sorted_desc[0];
    let mut best = 0usize;
    let mut best_dist = f64::NEG_INFINITY;
    for (i, &y) in sorted_desc.iter().enumerate() {
        let dist = (dx * (y - sorted_desc[0]) - dy * i as f64).abs();
        if dist > best_dist {
            best_dist = dist;
            best = i;
        }
    }
    sorted_desc[best]
}

/// Flag noise timeslots under classic density clustering. The noise/non-noise
/// partition does not depend on visit order.
pub fn dbscan_detect(dataset: &Dataset, params: &DbscanParams) -> Result<AnomalyVector> {
    require_standardized(dataset)?;
    params.validate()?;
    let t = dataset.timeslot_count();
    let points: Vec<Vec<f64>> = (0..t).map(|slot| dataset.timeslot_vector(slot)).collect();
    let dists = DistanceMatrix::from_points(&points);
    Ok(dbscan_from_distances(&dists, params))
}

/// DBSCAN over a precomputed distance matrix (grid search reuses the matrix
/// across parameter settings).
pub fn dbscan_from_distances(dists: &DistanceMatrix, params: &DbscanParams) -> AnomalyVector {
    AnomalyVector::new(dbscan::noise_flags(dists, params), AnomalySource::Dbscan)
}

/// A detection is unusable for feature scoring when either window is empty.
pub fn is_degenerate(a: &AnomalyVector) -> bool {
    let c = a.count();
    c == 0 || c == a.len()
}

/// Complete detection-method selection for the evaluation pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum AdMethod {
    /// Anomalous timeslots read from ground truth.
    Oracle,
    IsolationForest(IsolationForestParams),
    Dbscan(DbscanParams),
    /// Ideal selection between the two configured detectors.
    Ensemble {
        iforest: IsolationForestParams,
        dbscan: DbscanParams,
    },
}

impl AdMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            AdMethod::Oracle => "oracle",
            AdMethod::IsolationForest(_) => "if",
            AdMethod::Dbscan(_) => "dbscan",
            AdMethod::Ensemble { .. } => "ensemble",
        }
    }

    /// Run the method on a standardized case. The forest subsample clamps to
    /// the dataset size so the stock 256 setting works on short datasets.
    pub fn detect(&self, case: &CaseBundle) -> Result<AnomalyVector> {
        match self {
            AdMethod::Oracle => Ok(crate::model::derive_anomalous_timeslots(case.gt())),
            AdMethod::IsolationForest(params) => {
                let params = params.clamped_to(case.dataset().timeslot_count());
                let scores = isolation_scores(case.dataset(), &params)?;
                if_detect(&scores, &params.threshold_policy)
            }
            AdMethod::Dbscan(params) => dbscan_detect(case.dataset(), params),
            AdMethod::Ensemble { iforest, dbscan } => {
                let iforest = iforest.clamped_to(case.dataset().timeslot_count());
                let scores = isolation_scores(case.dataset(), &iforest)?;
                let from_forest = if_detect(&scores, &iforest.threshold_policy)?;
                let from_dbscan = dbscan_detect(case.dataset(), dbscan)?;
                ensemble_select(
                    &[
                        (from_forest, "if".to_string()),
                        (from_dbscan, "dbscan".to_string()),
                    ],
                    case,
                    FsPolicy::Fsa,
                )
            }
        }
    }
}

/// Pick the candidate whose downstream ranking agrees best with the expert
/// (an ideal selector: it reads the ground truth). Candidates with a
/// degenerate anomaly vector are skipped; ties keep the earliest candidate.
pub fn ensemble_select(
    candidates: &[(AnomalyVector, String)],
    case: &CaseBundle,
    fs: FsPolicy,
) -> Result<AnomalyVector> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("no ensemble candidates".into()));
    }
    let case = standardize_case(case)?;
    let mut best: Option<(f64, &AnomalyVector)> = None;
    for (candidate, _tag) in candidates {
        if is_degenerate(candidate) {
            continue;
        }
        let scores = fs.score(case.dataset(), candidate)?;
        let ranking = rank_from_scores(&scores, case.dataset().feature_names())?;
        let quality = eval::ndcg(&ranking, case.gt())?;
        match best {
            Some((incumbent, _)) if quality <= incumbent => {}
            _ => best = Some((quality, candidate)),
        }
    }
    match best {
        Some((_, winner)) => Ok(AnomalyVector::new(winner.flags.clone(), AnomalySource::Ensemble)),
        None => Err(Error::NoDetection),
    }
}
