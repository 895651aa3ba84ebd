//! Feature scoring: rank KPIs by how much they deviate between the anomalous
//! and the normal window, plus the two naive baselines used for comparison.

use crate::error::{Error, Result};
use crate::eval;
use crate::ingest::CaseBundle;
use crate::model::{rank_from_scores, AnomalyVector, Dataset, Ranking, ScorePolicy, ScoreVector};
use crate::seed::seeded_rng;
use rand::seq::SliceRandom;

/// Scoring policy selector used by the pipeline stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsPolicy {
    Fsa,
    Fsr,
}

impl FsPolicy {
    pub fn tag(&self) -> &'static str {
        match self {
            FsPolicy::Fsa => "fsa",
            FsPolicy::Fsr => "fsr",
        }
    }

    pub fn score(&self, dataset: &Dataset, anomalies: &AnomalyVector) -> Result<ScoreVector> {
        match self {
            FsPolicy::Fsa => fsa(dataset, anomalies),
            FsPolicy::Fsr => fsr(dataset, anomalies),
        }
    }
}

fn check_windows(dataset: &Dataset, anomalies: &AnomalyVector) -> Result<usize> {
    if !dataset.is_standardized() {
        return Err(Error::InvalidParameter(
            "feature scoring needs a standardized dataset".into(),
        ));
    }
    let t = dataset.timeslot_count();
    if anomalies.len() != t {
        return Err(Error::DimensionMismatch(format!(
            "anomaly vector has {} slots, dataset has {t}",
            anomalies.len()
        )));
    }
    let n_anom = anomalies.count();
    if n_anom == 0 {
        return Err(Error::DegenerateWindow("no anomalous timeslot".into()));
    }
    if n_anom == t {
        return Err(Error::DegenerateWindow("no normal timeslot".into()));
    }
    Ok(n_anom)
}

/// Mean of each feature over the anomalous window and over the normal window.
fn window_means(dataset: &Dataset, anomalies: &AnomalyVector, n_anom: usize) -> (Vec<f64>, Vec<f64>) {
    let t = dataset.timeslot_count();
    let n_norm = t - n_anom;
    let mut anom = Vec::with_capacity(dataset.feature_count());
    let mut norm = Vec::with_capacity(dataset.feature_count());
    for row in dataset.values() {
        let mut sum_anom = 0.0;
        let mut sum_norm = 0.0;
        for (v, &flag) in row.iter().zip(&anomalies.flags) {
            if flag {
                sum_anom += v;
            } else {
                sum_norm += v;
            }
        }
        anom.push(sum_anom / n_anom as f64);
        norm.push(sum_norm / n_norm as f64);
    }
    (anom, norm)
}

/// Average-based scoring: the absolute difference between each feature's mean
/// value in the anomalous window and in the normal window.
pub fn fsa(dataset: &Dataset, anomalies: &AnomalyVector) -> Result<ScoreVector> {
    let n_anom = check_windows(dataset, anomalies)?;
    let (anom, norm) = window_means(dataset, anomalies, n_anom);
    let scores = anom
        .iter()
        .zip(&norm)
        .map(|(a, n)| (a - n).abs())
        .collect();
    ScoreVector::new(scores, ScorePolicy::Fsa)
}

/// Feature ranks over the anomalous-window means (`r_plus`) and the
/// normal-window means (`r_minus`); rank 1 is the largest mean, ties broken by
/// ascending feature name.
#[derive(Debug, Clone, PartialEq)]
pub struct RankPair {
    pub r_plus: Vec<usize>,
    pub r_minus: Vec<usize>,
}

fn ranks_desc(values: &[f64], names: &[String]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then_with(|| names[a].cmp(&names[b])));
    let mut ranks = vec![0usize; values.len()];
    for (pos, &feature) in idx.iter().enumerate() {
        ranks[feature] = pos + 1;
    }
    ranks
}

/// Both window rankings for a dataset/anomaly pair.
pub fn window_ranks(dataset: &Dataset, anomalies: &AnomalyVector) -> Result<RankPair> {
    let n_anom = check_windows(dataset, anomalies)?;
    let (anom, norm) = window_means(dataset, anomalies, n_anom);
    Ok(RankPair {
        r_plus: ranks_desc(&anom, dataset.feature_names()),
        r_minus: ranks_desc(&norm, dataset.feature_names()),
    })
}

/// Rank-based scoring: how far each feature moves between the normal-window
/// ranking and the anomalous-window ranking.
pub fn fsr(dataset: &Dataset, anomalies: &AnomalyVector) -> Result<ScoreVector> {
    let pair = window_ranks(dataset, anomalies)?;
    let scores = pair
        .r_plus
        .iter()
        .zip(&pair.r_minus)
        .map(|(&p, &m)| (p as f64 - m as f64).abs())
        .collect();
    ScoreVector::new(scores, ScorePolicy::Fsr)
}

/// The "current system": KPIs in ascending alphabetical order. Scores are a
/// descending integer ramp so the [`Ranking`] invariants hold.
pub fn baseline_alphabetical(case: &CaseBundle) -> Ranking {
    alphabetical_ranking(case.dataset().feature_names())
}

pub(crate) fn alphabetical_ranking(names: &[String]) -> Ranking {
    let f = names.len();
    let mut alpha: Vec<usize> = (0..f).collect();
    alpha.sort_by(|&a, &b| names[a].cmp(&names[b]));
    let mut scores = vec![0.0; f];
    for (pos, &feature) in alpha.iter().enumerate() {
        scores[feature] = (f - 1 - pos) as f64;
    }
    let scores = ScoreVector::new(scores, ScorePolicy::Baseline)
        .expect("ramp scores are finite and non-negative");
    rank_from_scores(&scores, names).expect("lengths match by construction")
}

/// Monte Carlo expectation of nDCG and reading effort for a uniformly random
/// ranking of `f` features of which `t` are anomalous. Deterministic given the
/// seed; per-trial seeds are counter-derived so a parallel evaluation would
/// produce the same result.
pub fn baseline_random_expectation(
    f: usize,
    t: usize,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if f == 0 || t == 0 {
        return Err(Error::InvalidParameter("f and t must be positive".into()));
    }
    if t > f {
        return Err(Error::InvalidParameter(format!("t = {t} exceeds f = {f}")));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let mut relevance: Vec<bool> = (0..f).map(|i| i < t).collect();
    let mut sum_ndcg = 0.0;
    let mut sum_effort = 0.0;
    for trial in 0..trials {
        let mut rng = seeded_rng(seed, trial as u64);
        relevance.shuffle(&mut rng);
        sum_ndcg += eval::ndcg_from_relevance(&relevance).expect("t >= 1");
        let (m, _, _) = eval::reading_effort_from_relevance(&relevance).expect("t >= 1");
        sum_effort += m as f64;
    }
    Ok((sum_ndcg / trials as f64, sum_effort / trials as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AnomalySource, Dataset, GroundTruth};
    use proptest::prelude::*;

    fn std_dataset(rows: Vec<Vec<f64>>) -> Dataset {
        let f = rows.len();
        let t = rows[0].len();
        Dataset::with_flag(
            (0..f).map(|j| format!("k{j}")).collect(),
            (0..t).map(|i| i.to_string()).collect(),
            rows,
            true,
        )
        .unwrap()
    }

    fn anomalies(flags: &[u8]) -> AnomalyVector {
        AnomalyVector::new(flags.iter().map(|&b| b == 1).collect(), AnomalySource::Oracle)
    }

    #[test]
    fn fsa_hand_case() {
        let ds = std_dataset(vec![vec![0.0, 0.0, 2.0, 2.0]]);
        let s = fsa(&ds, &anomalies(&[0, 0, 1, 1])).unwrap();
        assert_eq!(s.scores(), &[2.0]);
    }

    #[test]
    fn fsa_identical_windows_scores_zero() {
        // both windows hold one 1.0 and one 2.0: identical means
        let ds = std_dataset(vec![vec![1.0, 2.0, 2.0, 1.0]]);
        let s = fsa(&ds, &anomalies(&[1, 1, 0, 0])).unwrap();
        assert!(s.scores()[0].abs() < 1e-15);
    }

    #[test]
    fn fsa_rejects_degenerate_windows() {
        let ds = std_dataset(vec![vec![0.0, 1.0, 2.0]]);
        assert!(matches!(
            fsa(&ds, &anomalies(&[0, 0, 0])),
            Err(Error::DegenerateWindow(_))
        ));
        assert!(matches!(
            fsa(&ds, &anomalies(&[1, 1, 1])),
            Err(Error::DegenerateWindow(_))
        ));
    }

    #[test]
    fn fsa_matches_brute_force_on_random_instances() {
        use rand::Rng;
        let mut rng = seeded_rng(0xF5A, 0);
        for _ in 0..100 {
            let f = rng.random_range(1..=10usize);
            let t = rng.random_range(2..=50usize);
            let rows: Vec<Vec<f64>> = (0..f)
                .map(|_| (0..t).map(|_| rng.random_range(-3.0..3.0)).collect())
                .collect();
            let n_anom = rng.random_range(1..t);
            let mut flags = vec![false; t];
            let mut slots: Vec<usize> = (0..t).collect();
            slots.shuffle(&mut rng);
            for &slot in slots.iter().take(n_anom) {
                flags[slot] = true;
            }
            let ds = std_dataset(rows.clone());
            let a = AnomalyVector::new(flags.clone(), AnomalySource::Oracle);
            let got = fsa(&ds, &a).unwrap();

            // independent re-evaluation of the two window means
            for (j, row) in rows.iter().enumerate() {
                let anom: Vec<f64> = row
                    .iter()
                    .zip(&flags)
                    .filter(|(_, &fl)| fl)
                    .map(|(v, _)| *v)
                    .collect();
                let norm: Vec<f64> = row
                    .iter()
                    .zip(&flags)
                    .filter(|(_, &fl)| !fl)
                    .map(|(v, _)| *v)
                    .collect();
                let expected = (anom.iter().sum::<f64>() / anom.len() as f64
                    - norm.iter().sum::<f64>() / norm.len() as f64)
                    .abs();
                assert!((got.scores()[j] - expected).abs() < 1e-12);
            }

            // window-swap symmetry
            let swapped = AnomalyVector::new(flags.iter().map(|&b| !b).collect(), AnomalySource::Oracle);
            let flipped = fsa(&ds, &swapped).unwrap();
            for (x, y) in got.scores().iter().zip(flipped.scores()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fsr_hand_case() {
        // anomalous means (5,1,3), normal means (1,2,3):
        // r+ = (1,3,2), r- = (3,2,1), s = (2,1,1)
        let ds = std_dataset(vec![vec![1.0, 5.0], vec![2.0, 1.0], vec![3.0, 3.0]]);
        let a = anomalies(&[0, 1]);
        let pair = window_ranks(&ds, &a).unwrap();
        assert_eq!(pair.r_plus, vec![1, 3, 2]);
        assert_eq!(pair.r_minus, vec![3, 2, 1]);
        let s = fsr(&ds, &a).unwrap();
        assert_eq!(s.scores(), &[2.0, 1.0, 1.0]);
    }

    #[test]
    fn fsr_identical_windows_score_zero() {
        let ds = std_dataset(vec![vec![1.0, 1.0], vec![0.5, 0.5], vec![2.0, 2.0]]);
        let s = fsr(&ds, &anomalies(&[0, 1])).unwrap();
        assert_eq!(s.scores(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn fsr_single_feature_is_zero() {
        let ds = std_dataset(vec![vec![0.0, 9.0, 1.0]]);
        let s = fsr(&ds, &anomalies(&[0, 1, 0])).unwrap();
        assert_eq!(s.scores(), &[0.0]);
    }

    #[test]
    fn alphabetical_baseline_sorts_names() {
        let ds = Dataset::new(
            vec!["ifDrops".into(), "cpuLoad".into(), "bgpPeers".into()],
            vec!["0".into(), "1".into()],
            vec![vec![0.0, 1.0]; 3],
        )
        .unwrap();
        let gt = GroundTruth::new(vec![vec![false, true]; 3], "c").unwrap();
        let case = CaseBundle::new(ds, gt, "c").unwrap();
        let ranking = baseline_alphabetical(&case);
        // bgpPeers, cpuLoad, ifDrops
        assert_eq!(ranking.order(), &[2, 1, 0]);
        // idempotent on sorted input
        let sorted = alphabetical_ranking(&["a".into(), "b".into(), "c".into()]);
        assert_eq!(sorted.order(), &[0, 1, 2]);
        let single = alphabetical_ranking(&["only".into()]);
        assert_eq!(single.order(), &[0]);
    }

    #[test]
    fn random_baseline_perfect_when_all_anomalous() {
        let (ndcg, effort) = baseline_random_expectation(5, 5, 3, 1).unwrap();
        assert_eq!(ndcg, 1.0);
        assert_eq!(effort, 5.0);
    }

    #[test]
    fn random_baseline_matches_closed_form() {
        // E[max of t draws without replacement from 1..=f] = t(f+1)/(t+1)
        let (_, effort) = baseline_random_expectation(10, 2, 100_000, 7).unwrap();
        let expected = 2.0 * 11.0 / 3.0;
        assert!((effort - expected).abs() / expected < 0.01, "effort {effort}");

        let (_, effort1) = baseline_random_expectation(10, 1, 100_000, 7).unwrap();
        assert!((effort1 - 5.5).abs() / 5.5 < 0.01, "effort {effort1}");
    }

    #[test]
    fn random_baseline_rejects_bad_params() {
        assert!(baseline_random_expectation(3, 4, 10, 0).is_err());
        assert!(baseline_random_expectation(3, 1, 0, 0).is_err());
    }

    #[test]
    fn random_baseline_deterministic() {
        let a = baseline_random_expectation(12, 3, 500, 99).unwrap();
        let b = baseline_random_expectation(12, 3, 500, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fsa_ranks_shifted_feature_first() {
        // one feature shifted +10 inside the window on otherwise flat data
        let t = 40;
        let window = 30..35;
        let mut rows = vec![vec![0.0; t]; 5];
        for (slot, v) in rows[3].iter_mut().enumerate() {
            if window.contains(&slot) {
                *v += 10.0;
            }
        }
        // mild deterministic wiggle on the others so they are not constant
        for (j, row) in rows.iter_mut().enumerate() {
            if j != 3 {
                for (slot, v) in row.iter_mut().enumerate() {
                    *v += ((slot * (j + 2)) % 7) as f64 * 0.01;
                }
            }
        }
        let ds = std_dataset(rows);
        let mut flags = vec![false; t];
        for slot in window {
            flags[slot] = true;
        }
        let a = AnomalyVector::new(flags, AnomalySource::Oracle);
        let s = fsa(&ds, &a).unwrap();
        let ranking = rank_from_scores(&s, ds.feature_names()).unwrap();
        assert_eq!(ranking.order()[0], 3);
    }

    proptest! {
        #[test]
        fn fsa_is_permutation_equivariant(
            perm_seed in 0u64..1000,
            f in 2usize..6,
            t in 4usize..12,
        ) {
            use rand::Rng;
            let mut rng = seeded_rng(perm_seed, 0);
            let rows: Vec<Vec<f64>> = (0..f)
                .map(|_| (0..t).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let mut flags = vec![false; t];
            flags[0] = true; // one anomalous slot keeps both windows valid
            let a = AnomalyVector::new(flags, AnomalySource::Oracle);

            let ds = std_dataset(rows.clone());
            let base = fsa(&ds, &a).unwrap();

            let mut order: Vec<usize> = (0..f).collect();
            order.shuffle(&mut rng);
            let permuted_rows: Vec<Vec<f64>> = order.iter().map(|&j| rows[j].clone()).collect();
            let permuted_names: Vec<String> = order.iter().map(|&j| format!("k{j}")).collect();
            let permuted = Dataset::with_flag(
                permuted_names,
                (0..t).map(|i| i.to_string()).collect(),
                permuted_rows,
                true,
            ).unwrap();
            let got = fsa(&permuted, &a).unwrap();
            for (pos, &j) in order.iter().enumerate() {
                prop_assert!((got.scores()[pos] - base.scores()[j]).abs() < 1e-15);
            }
        }

        #[test]
        fn fsr_scores_are_integers_in_range(
            seed in 0u64..1000,
            f in 1usize..8,
            t in 3usize..10,
        ) {
            use rand::Rng;
            let mut rng = seeded_rng(seed, 1);
            let rows: Vec<Vec<f64>> = (0..f)
                .map(|_| (0..t).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let mut flags = vec![false; t];
            flags[t - 1] = true;
            let a = AnomalyVector::new(flags, AnomalySource::Oracle);
            let s = fsr(&std_dataset(rows), &a).unwrap();
            for &v in s.scores() {
                prop_assert_eq!(v.fract(), 0.0);
                prop_assert!(v >= 0.0 && v <= (f - 1) as f64);
            }
        }
    }
}
