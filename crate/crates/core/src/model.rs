//! Core domain types: KPI matrices, ground truth, anomaly vectors, score
//! vectors and rankings. Everything is immutable after construction and safe
//! to share across workers.
//!
//! Matrix orientation is fixed as features × timeslots (rows = KPIs).

use crate::error::{Error, Result};

/// Which detector produced an [`AnomalyVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalySource {
    /// Anomalous timeslots read directly from ground truth.
    Oracle,
    IsolationForest,
    Dbscan,
    Ensemble,
}

impl AnomalySource {
    pub fn tag(&self) -> &'static str {
        match self {
            AnomalySource::Oracle => "oracle",
            AnomalySource::IsolationForest => "if",
            AnomalySource::Dbscan => "dbscan",
            AnomalySource::Ensemble => "ensemble",
        }
    }
}

/// Which scoring policy produced a [`ScoreVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorePolicy {
    /// Absolute difference of window means.
    Fsa,
    /// Absolute difference of window ranks.
    Fsr,
    /// Scores after knowledge-base adjustment.
    EkAdjusted,
    /// Synthetic ramp backing a baseline (alphabetical / fallback) ranking.
    Baseline,
}

impl ScorePolicy {
    pub fn tag(&self) -> &'static str {
        match self {
            ScorePolicy::Fsa => "fsa",
            ScorePolicy::Fsr => "fsr",
            ScorePolicy::EkAdjusted => "ek-adjusted",
            ScorePolicy::Baseline => "baseline",
        }
    }
}

/// An F×T matrix of KPI values with named features and ordered timeslots.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    timestamps: Vec<String>,
    values: Vec<Vec<f64>>,
    standardized: bool,
}

impl Dataset {
    /// Build a raw (unstandardized) dataset, validating shape, finiteness,
    /// name uniqueness and timestamp ordering.
    pub fn new(
        feature_names: Vec<String>,
        timestamps: Vec<String>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        Self::with_flag(feature_names, timestamps, values, false)
    }

    pub(crate) fn with_flag(
        feature_names: Vec<String>,
        timestamps: Vec<String>,
        values: Vec<Vec<f64>>,
        standardized: bool,
    ) -> Result<Self> {
        let f = feature_names.len();
        let t = timestamps.len();
        if f == 0 {
            return Err(Error::InvalidData("dataset needs at least one feature".into()));
        }
        if t < 2 {
            return Err(Error::InvalidData("dataset needs at least two timeslots".into()));
        }
        if values.len() != f {
            return Err(Error::DimensionMismatch(format!(
                "expected {f} value rows, got {}",
                values.len()
            )));
        }
        for (j, row) in values.iter().enumerate() {
            if row.len() != t {
                return Err(Error::DimensionMismatch(format!(
                    "feature {} has {} values, expected {t}",
                    feature_names[j],
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "non-finite value {v} in feature {}",
                    feature_names[j]
                )));
            }
        }
        let mut sorted = feature_names.clone();
        sorted.sort_unstable();
        if let Some(dup) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidData(format!("duplicate feature name {}", dup[0])));
        }
        check_timestamps(&timestamps)?;
        Ok(Dataset {
            feature_names,
            timestamps,
            values,
            standardized,
        })
    }

    /// Number of features F.
    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    /// Number of timeslots T.
    pub fn timeslot_count(&self) -> usize {
        self.timestamps.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn timestamps(&self) -> &[String] {
        &self.timestamps
    }

    /// All rows, one per feature.
    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// One feature's time series.
    pub fn row(&self, feature: usize) -> &[f64] {
        &self.values[feature]
    }

    /// One timeslot as an F-dimensional point (the unit detectors work on).
    pub fn timeslot_vector(&self, slot: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[slot]).collect()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }
}

/// Timestamps must be monotonically increasing. When every entry parses as an
/// integer the comparison is numeric, otherwise lexicographic (which matches
/// chronological order for uniformly formatted ISO-8601 strings).
fn check_timestamps(timestamps: &[String]) -> Result<()> {
    let numeric: Option<Vec<i64>> = timestamps.iter().map(|s| s.parse().ok()).collect();
    let ordered = match numeric {
        Some(nums) => nums.windows(2).all(|w| w[0] < w[1]),
        None => timestamps.windows(2).all(|w| w[0] < w[1]),
    };
    if ordered {
        Ok(())
    } else {
        Err(Error::InvalidData("timestamps are not strictly increasing".into()))
    }
}

/// Expert flags: an F×T binary matrix aligned to a [`Dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    flags: Vec<Vec<bool>>,
    dataset_id: String,
}

impl GroundTruth {
    pub fn new(flags: Vec<Vec<bool>>, dataset_id: impl Into<String>) -> Result<Self> {
        if flags.is_empty() {
            return Err(Error::InvalidData("ground truth needs at least one feature".into()));
        }
        let t = flags[0].len();
        if t == 0 {
            return Err(Error::InvalidData("ground truth needs at least one timeslot".into()));
        }
        if flags.iter().any(|row| row.len() != t) {
            return Err(Error::DimensionMismatch("ragged ground-truth matrix".into()));
        }
        Ok(GroundTruth {
            flags,
            dataset_id: dataset_id.into(),
        })
    }

    pub fn flags(&self) -> &[Vec<bool>] {
        &self.flags
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn feature_count(&self) -> usize {
        self.flags.len()
    }

    pub fn timeslot_count(&self) -> usize {
        self.flags[0].len()
    }

    /// A feature is anomalous when the expert flagged it in any timeslot.
    pub fn is_feature_anomalous(&self, feature: usize) -> bool {
        self.flags[feature].iter().any(|&b| b)
    }

    /// Indices of all anomalous features, ascending.
    pub fn anomalous_features(&self) -> Vec<usize> {
        (0..self.feature_count())
            .filter(|&j| self.is_feature_anomalous(j))
            .collect()
    }
}

/// Per-timeslot anomaly flags produced by a detector.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyVector {
    pub flags: Vec<bool>,
    pub source: AnomalySource,
}

impl AnomalyVector {
    pub fn new(flags: Vec<bool>, source: AnomalySource) -> Self {
        AnomalyVector { flags, source }
    }

    /// Number of flagged timeslots.
    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&b| b).count()
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }
}

/// Per-feature anomaly scores. Entries are finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    scores: Vec<f64>,
    policy: ScorePolicy,
}

impl ScoreVector {
    pub fn new(scores: Vec<f64>, policy: ScorePolicy) -> Result<Self> {
        if let Some(s) = scores.iter().find(|s| !s.is_finite() || **s < 0.0) {
            return Err(Error::InvalidData(format!("score {s} is not a finite non-negative value")));
        }
        Ok(ScoreVector { scores, policy })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn policy(&self) -> ScorePolicy {
        self.policy
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// A feature ordering: `order()[0]` is the highest-scoring feature index.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    order: Vec<usize>,
    positions: Vec<usize>,
    scores: ScoreVector,
}

impl Ranking {
    /// Permutation of feature indices, best first.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// 1-based rank position of a feature index.
    pub fn rank_of(&self, feature: usize) -> usize {
        self.positions[feature] + 1
    }

    pub fn scores(&self) -> &ScoreVector {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Sort features by score descending; ties broken by ascending feature name so
/// the permutation is deterministic.
pub fn rank_from_scores(scores: &ScoreVector, feature_names: &[String]) -> Result<Ranking> {
    if scores.len() != feature_names.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} feature names",
            scores.len(),
            feature_names.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores.scores()[b]
            .total_cmp(&scores.scores()[a])
            .then_with(|| feature_names[a].cmp(&feature_names[b]))
    });
    let mut positions = vec![0usize; order.len()];
    for (pos, &feature) in order.iter().enumerate() {
        positions[feature] = pos;
    }
    Ok(Ranking {
        order,
        positions,
        scores: scores.clone(),
    })
}

/// A timeslot is anomalous when at least one feature is flagged there.
pub fn derive_anomalous_timeslots(gt: &GroundTruth) -> AnomalyVector {
    let t = gt.timeslot_count();
    let flags = (0..t)
        .map(|slot| gt.flags().iter().any(|row| row[slot]))
        .collect();
    AnomalyVector::new(flags, AnomalySource::Oracle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn rank_sorts_descending() {
        let scores = ScoreVector::new(vec![3.0, 1.0, 2.0], ScorePolicy::Fsa).unwrap();
        let ranking = rank_from_scores(&scores, &names(&["A", "B", "C"])).unwrap();
        assert_eq!(ranking.order(), &[0, 2, 1]); // A, C, B
    }

    #[test]
    fn rank_breaks_ties_alphabetically() {
        let scores = ScoreVector::new(vec![1.0, 1.0], ScorePolicy::Fsa).unwrap();
        let ranking = rank_from_scores(&scores, &names(&["B", "A"])).unwrap();
        assert_eq!(ranking.order(), &[1, 0]); // A before B
    }

    #[test]
    fn all_zero_scores_rank_alphabetically() {
        let scores = ScoreVector::new(vec![0.0; 4], ScorePolicy::Fsa).unwrap();
        let ranking = rank_from_scores(&scores, &names(&["d", "b", "a", "c"])).unwrap();
        assert_eq!(ranking.order(), &[2, 1, 3, 0]);
    }

    #[test]
    fn rank_rejects_length_mismatch() {
        let scores = ScoreVector::new(vec![1.0], ScorePolicy::Fsa).unwrap();
        assert!(matches!(
            rank_from_scores(&scores, &names(&["A", "B"])),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn score_vector_rejects_negative_and_nan() {
        assert!(ScoreVector::new(vec![-0.1], ScorePolicy::Fsa).is_err());
        assert!(ScoreVector::new(vec![f64::NAN], ScorePolicy::Fsa).is_err());
    }

    #[test]
    fn oracle_slots_empty_gt() {
        let gt = GroundTruth::new(vec![vec![false; 3]; 2], "d").unwrap();
        let a = derive_anomalous_timeslots(&gt);
        assert_eq!(a.flags, vec![false, false, false]);
        assert_eq!(a.source, AnomalySource::Oracle);
    }

    #[test]
    fn oracle_slots_single_flag() {
        let mut flags = vec![vec![false; 3]; 2];
        flags[1][2] = true;
        let gt = GroundTruth::new(flags, "d").unwrap();
        assert_eq!(derive_anomalous_timeslots(&gt).flags, vec![false, false, true]);
    }

    #[test]
    fn oracle_slots_are_indicators_not_counts() {
        let mut flags = vec![vec![false; 3]; 2];
        flags[0][0] = true;
        flags[1][0] = true;
        let gt = GroundTruth::new(flags, "d").unwrap();
        let a = derive_anomalous_timeslots(&gt);
        assert!(a.flags[0]);
        assert_eq!(a.count(), 1);
    }

    #[test]
    fn dataset_rejects_duplicate_names() {
        let err = Dataset::new(
            names(&["x", "x"]),
            vec!["0".into(), "1".into()],
            vec![vec![0.0, 1.0], vec![2.0, 3.0]],
        );
        assert!(matches!(err, Err(Error::InvalidData(_))));
    }

    #[test]
    fn dataset_rejects_non_monotonic_timestamps() {
        let err = Dataset::new(
            names(&["x"]),
            vec!["9".into(), "10".into(), "2".into()],
            vec![vec![0.0, 1.0, 2.0]],
        );
        assert!(err.is_err());
        // numeric comparison: "9" < "10" is fine even though lexicographically reversed
        let ok = Dataset::new(
            names(&["x"]),
            vec!["9".into(), "10".into()],
            vec![vec![0.0, 1.0]],
        );
        assert!(ok.is_ok());
    }

    proptest! {
        #[test]
        fn ranking_is_deterministic(raw in proptest::collection::vec(0.0f64..100.0, 1..20)) {
            let n = raw.len();
            let feature_names: Vec<String> = (0..n).map(|i| format!("k{i:02}")).collect();
            let scores = ScoreVector::new(raw, ScorePolicy::Fsa).unwrap();
            let a = rank_from_scores(&scores, &feature_names).unwrap();
            let b = rank_from_scores(&scores, &feature_names).unwrap();
            prop_assert_eq!(a.order(), b.order());
        }

        #[test]
        fn ranking_is_scale_invariant(
            // lattice-valued scores so products cannot collide in rounding
            lattice in proptest::collection::vec(0u32..1000, 1..20),
            scale in 0.001f64..1000.0,
        ) {
            let raw: Vec<f64> = lattice.iter().map(|&v| f64::from(v) * 0.1).collect();
            let n = raw.len();
            let feature_names: Vec<String> = (0..n).map(|i| format!("k{i:02}")).collect();
            let scaled: Vec<f64> = raw.iter().map(|v| v * scale).collect();
            let a = rank_from_scores(&ScoreVector::new(raw, ScorePolicy::Fsa).unwrap(), &feature_names).unwrap();
            let b = rank_from_scores(&ScoreVector::new(scaled, ScorePolicy::Fsa).unwrap(), &feature_names).unwrap();
            prop_assert_eq!(a.order(), b.order());
        }

        #[test]
        fn oracle_popcount_bounds(
            rows in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 5), 1..6)
        ) {
            let nonzero = rows.iter().flatten().any(|&b| b);
            let gt = GroundTruth::new(rows, "d").unwrap();
            let a = derive_anomalous_timeslots(&gt);
            prop_assert!(a.count() <= gt.timeslot_count());
            prop_assert_eq!(a.count() >= 1, nonzero);
        }
    }
}
