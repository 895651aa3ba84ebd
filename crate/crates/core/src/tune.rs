//! Hyperparameter search: the DBSCAN and isolation-forest grids, per-case-best
//! vs single-best-overall selection, and the randomized keep-the-better
//! tuning simulation.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;

use crate::detect::{
    dbscan_from_distances, if_detect, isolation_scores, DbscanParams, DistanceMatrix,
    IsolationForestParams, ThresholdPolicy, DEFAULT_TREES,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_detection, RankPolicy};
use crate::ingest::{standardize_case, CaseBundle};
use crate::score::FsPolicy;
use crate::seed::{derive_seed, seeded_rng};

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Combo {
    Dbscan(DbscanParams),
    /// Isolation forest with 300 trees; only the thresholding varies.
    IfThreshold(ThresholdPolicy),
}

impl Combo {
    pub fn label(&self) -> String {
        match self {
            Combo::Dbscan(p) => p.label(),
            Combo::IfThreshold(policy) => policy.label(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAlgorithm {
    Dbscan,
    IsolationForest,
}

impl GridAlgorithm {
    pub fn tag(&self) -> &'static str {
        match self {
            GridAlgorithm::Dbscan => "dbscan",
            GridAlgorithm::IsolationForest => "if",
        }
    }
}

/// An ordered list of parameter settings for one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub algorithm: GridAlgorithm,
    pub combos: Vec<Combo>,
}

impl GridSpec {
    /// DBSCAN grid: epsilon 1..=20 crossed with
    /// minPts {2, 5, 10, 20, 40, 60, ..., 200} - 260 combinations.
    pub fn dbscan() -> Self {
        let min_pts_values: Vec<usize> =
            [2, 5, 10, 20].into_iter().chain((2..=10).map(|k| k * 20)).collect();
        let mut combos = Vec::with_capacity(260);
        for eps in 1..=20u32 {
            for &min_pts in &min_pts_values {
                combos.push(Combo::Dbscan(DbscanParams {
                    epsilon: f64::from(eps),
                    min_pts,
                }));
            }
        }
        GridSpec {
            algorithm: GridAlgorithm::Dbscan,
            combos,
        }
    }

    /// Isolation-forest grid: contamination {0.001, 0.01, 0.05, 0.10}, static
    /// thresholds {0.55, 0.60, 0.65, 0.70}, and the dynamic elbow - 9
    /// hyperparametrizations; 300 trees throughout.
    pub fn isolation_forest() -> Self {
        let mut combos: Vec<Combo> = [0.001, 0.01, 0.05, 0.10]
            .into_iter()
            .map(|x| Combo::IfThreshold(ThresholdPolicy::Contamination(x)))
            .collect();
        combos.extend(
            [0.55, 0.60, 0.65, 0.70]
                .into_iter()
                .map(|theta| Combo::IfThreshold(ThresholdPolicy::StaticScore(theta))),
        );
        combos.push(Combo::IfThreshold(ThresholdPolicy::DEFAULT_ELBOW));
        GridSpec {
            algorithm: GridAlgorithm::IsolationForest,
            combos,
        }
    }

    pub fn for_algorithm(algorithm: GridAlgorithm) -> Self {
        match algorithm {
            GridAlgorithm::Dbscan => Self::dbscan(),
            GridAlgorithm::IsolationForest => Self::isolation_forest(),
        }
    }

    pub fn len(&self) -> usize {
        self.combos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.combos.is_empty()
    }
}

/// nDCG of every (case, combo) pair, the raw material for both searches.
#[derive(Debug, Clone)]
pub struct GridEvaluation {
    pub grid: GridSpec,
    pub case_ids: Vec<String>,
    /// `ndcg[case][combo]`.
    pub ndcg: Vec<Vec<f64>>,
}

impl GridEvaluation {
    /// Mean over cases for one combo.
    fn suite_mean(&self, combo: usize) -> f64 {
        let total: f64 = self.ndcg.iter().map(|row| row[combo]).sum();
        total / self.ndcg.len() as f64
    }
}

/// Distance matrices above this size are recomputed per combo instead of
/// cached (memory trade-off for very long datasets).
const MAX_CACHED_MATRIX_T: usize = 4096;

/// Evaluate every combo on every case: detection, scoring with `fs`, nDCG
/// against ground truth; degenerate detections fall back to the alphabetical
/// baseline ranking. Forest seeds derive from (case index, combo index) so
/// results do not depend on evaluation order.
pub fn evaluate_grid(
    cases: &[CaseBundle],
    grid: &GridSpec,
    fs: FsPolicy,
    seed: u64,
) -> Result<GridEvaluation> {
    if cases.is_empty() {
        return Err(Error::EmptyInput("no cases".into()));
    }
    if grid.is_empty() {
        return Err(Error::EmptyInput("empty grid".into()));
    }
    let fs_rank = match fs {
        FsPolicy::Fsa => RankPolicy::Fsa,
        FsPolicy::Fsr => RankPolicy::Fsr,
    };
    let mut matrix = Vec::with_capacity(cases.len());
    let mut case_ids = Vec::with_capacity(cases.len());
    for (case_idx, raw_case) in cases.iter().enumerate() {
        let case = standardize_case(raw_case)?;
        let t = case.dataset().timeslot_count();
        let dists = match grid.algorithm {
            GridAlgorithm::Dbscan if t <= MAX_CACHED_MATRIX_T => {
                let points: Vec<Vec<f64>> =
                    (0..t).map(|slot| case.dataset().timeslot_vector(slot)).collect();
                Some(DistanceMatrix::from_points(&points))
            }
            _ => None,
        };
        let mut row = Vec::with_capacity(grid.len());
        for (combo_idx, combo) in grid.combos.iter().enumerate() {
            let counter = (case_idx * grid.len() + combo_idx) as u64;
            let combo_seed = derive_seed(seed, counter);
            let detection = match combo {
                Combo::Dbscan(params) => match &dists {
                    Some(dists) => dbscan_from_distances(dists, params),
                    None => crate::detect::dbscan_detect(case.dataset(), params)?,
                },
                Combo::IfThreshold(policy) => {
                    let params = IsolationForestParams {
                        n_trees: DEFAULT_TREES,
                        subsample_size: crate::detect::DEFAULT_SUBSAMPLE,
                        seed: combo_seed,
                        threshold_policy: *policy,
                    }
                    .clamped_to(t);
                    let scores = isolation_scores(case.dataset(), &params)?;
                    if_detect(&scores, policy)?
                }
            };
            let metrics = evaluate_detection(&case, combo.label().as_str(), &detection, fs_rank, None)?;
            row.push(metrics.ndcg);
        }
        matrix.push(row);
        case_ids.push(case.case_id().to_string());
    }
    Ok(GridEvaluation {
        grid: grid.clone(),
        case_ids,
        ndcg: matrix,
    })
}

/// Result of exhaustive grid exploration.
#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub evaluation: GridEvaluation,
    /// Per case: (combo index, nDCG) of the best setting for that case.
    pub per_case_best: BTreeMap<String, (usize, f64)>,
    /// (combo index, mean nDCG) of the setting with the best cross-case mean.
    pub single_best: (usize, f64),
}

impl GridSearchResult {
    pub fn mean_of_per_case_best(&self) -> f64 {
        let total: f64 = self.per_case_best.values().map(|(_, v)| v).sum();
        total / self.per_case_best.len() as f64
    }
}

/// Exhaustive search: argmax per case and the best single setting overall.
/// Ties keep the earlier combo in grid order.
pub fn grid_search(
    cases: &[CaseBundle],
    grid: &GridSpec,
    fs: FsPolicy,
    seed: u64,
) -> Result<GridSearchResult> {
    let evaluation = evaluate_grid(cases, grid, fs, seed)?;
    let mut per_case_best = BTreeMap::new();
    for (case_idx, case_id) in evaluation.case_ids.iter().enumerate() {
        let row = &evaluation.ndcg[case_idx];
        let mut best = (0usize, row[0]);
        for (combo_idx, &value) in row.iter().enumerate().skip(1) {
            if value > best.1 {
                best = (combo_idx, value);
            }
        }
        per_case_best.insert(case_id.clone(), best);
    }
    let mut single_best = (0usize, evaluation.suite_mean(0));
    for combo_idx in 1..evaluation.grid.len() {
        let mean = evaluation.suite_mean(combo_idx);
        if mean > single_best.1 {
            single_best = (combo_idx, mean);
        }
    }
    Ok(GridSearchResult {
        evaluation,
        per_case_best,
        single_best,
    })
}

/// How the randomized tuner compares two settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TuningComparator {
    /// One incumbent judged by suite-mean nDCG (one curve per algorithm).
    #[default]
    SuiteMean,
    /// Independent incumbents per case, each normalized by its case's grid
    /// maximum before averaging.
    PerCase,
}

/// Mean normalized quality after each fraction of the grid explored.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningCurve {
    pub fractions: Vec<f64>,
    pub mean_normalized_ndcg: Vec<f64>,
    pub stderr: Vec<f64>,
    pub trials: usize,
}

/// Randomized tuning: each trial visits the grid in a fresh random order and
/// keeps the better of incumbent and candidate (a binary comparison only).
/// After the k-th test the incumbent's quality, normalized by the maximum
/// achievable over the whole grid, is recorded; the curve averages across
/// trials (and, in per-case mode, across cases). Deterministic given the seed.
pub fn randomized_tuning(
    cases: &[CaseBundle],
    grid: &GridSpec,
    fs: FsPolicy,
    trials: usize,
    seed: u64,
    comparator: TuningComparator,
) -> Result<TuningCurve> {
    if grid.len() < 2 {
        return Err(Error::InvalidParameter("grid needs at least two combos".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let evaluation = evaluate_grid(cases, grid, fs, seed)?;
    Ok(randomized_tuning_from(&evaluation, trials, seed, comparator))
}

/// The simulation itself, reusing an existing grid evaluation.
pub fn randomized_tuning_from(
    evaluation: &GridEvaluation,
    trials: usize,
    seed: u64,
    comparator: TuningComparator,
) -> TuningCurve {
    let n_combos = evaluation.grid.len();
    let n_cases = evaluation.ndcg.len();

    // per-combo suite means and per-case maxima, shared by both modes
    let suite_means: Vec<f64> = (0..n_combos).map(|c| evaluation.suite_mean(c)).collect();
    let best_suite_mean = suite_means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let case_max: Vec<f64> = evaluation
        .ndcg
        .iter()
        .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();

    // value 1.0 when the denominator is zero: the (degenerate) maximum is met
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 1.0 };

    // trial shuffles draw from their own seed branch so they never share a
    // stream with the per-(case, combo) forest seeds
    let shuffle_master = derive_seed(seed, u64::MAX);

    let mut sums = vec![0.0; n_combos];
    let mut sq_sums = vec![0.0; n_combos];
    let mut order: Vec<usize> = (0..n_combos).collect();
    for trial in 0..trials {
        let mut rng = seeded_rng(shuffle_master, trial as u64);
        order.shuffle(&mut rng);
        match comparator {
            TuningComparator::SuiteMean => {
                let mut incumbent = f64::NEG_INFINITY;
                for (k, &combo) in order.iter().enumerate() {
                    if suite_means[combo] > incumbent {
                        incumbent = suite_means[combo];
                    }
                    let value = ratio(incumbent, best_suite_mean);
                    sums[k] += value;
                    sq_sums[k] += value * value;
                }
            }
            TuningComparator::PerCase => {
                let mut incumbents = vec![f64::NEG_INFINITY; n_cases];
                for (k, &combo) in order.iter().enumerate() {
                    for (case_idx, inc) in incumbents.iter_mut().enumerate() {
                        let candidate = evaluation.ndcg[case_idx][combo];
                        if candidate > *inc {
                            *inc = candidate;
                        }
                    }
                    let value = incumbents
                        .iter()
                        .zip(&case_max)
                        .map(|(&inc, &max)| ratio(inc, max))
                        .sum::<f64>()
                        / n_cases as f64;
                    sums[k] += value;
                    sq_sums[k] += value * value;
                }
            }
        }
    }

    let tf = trials as f64;
    let mut fractions = Vec::with_capacity(n_combos);
    let mut means = Vec::with_capacity(n_combos);
    let mut stderr = Vec::with_capacity(n_combos);
    for k in 0..n_combos {
        fractions.push((k + 1) as f64 / n_combos as f64);
        let mean = sums[k] / tf;
        means.push(mean);
        let variance = (sq_sums[k] / tf - mean * mean).max(0.0);
        stderr.push(if trials > 1 {
            (variance * tf / (tf - 1.0)).sqrt() / tf.sqrt()
        } else {
            0.0
        });
    }
    TuningCurve {
        fractions,
        mean_normalized_ndcg: means,
        stderr,
        trials,
    }
}

/// `combo,case_id,ndcg` with 6-decimal floats, in grid-then-case order.
pub fn write_grid_csv(evaluation: &GridEvaluation, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "combo,case_id,ndcg")?;
    for (combo_idx, combo) in evaluation.grid.combos.iter().enumerate() {
        for (case_idx, case_id) in evaluation.case_ids.iter().enumerate() {
            writeln!(
                out,
                "{},{},{:.6}",
                combo.label(),
                case_id,
                evaluation.ndcg[case_idx][combo_idx]
            )?;
        }
    }
    Ok(())
}

/// `fraction,mean_normalized_ndcg,stderr` with 6-decimal floats.
pub fn write_curve_csv(curve: &TuningCurve, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "fraction,mean_normalized_ndcg,stderr")?;
    for k in 0..curve.fractions.len() {
        writeln!(
            out,
            "{:.6},{:.6},{:.6}",
            curve.fractions[k], curve.mean_normalized_ndcg[k], curve.stderr[k]
        )?;
    }
    Ok(())
}
