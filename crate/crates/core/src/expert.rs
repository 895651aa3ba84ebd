//! Expert-knowledge base: per-KPI counters distilled from solved cases, score
//! adjustment, merging, and leave-one-out evaluation.
//!
//! For each KPI name the base tracks how often it was observed (`n`), how
//! often the expert flagged it (`n_plus`), and how often it was ignored
//! despite scoring above the weakest flagged KPI (`n_minus`). The rates
//! K+ = n_plus/n and K- = n_minus/n bias scores via
//! `s * (1 + gamma_plus*K+ - gamma_minus*K-)`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{standardize_case, CaseBundle};
use crate::model::{derive_anomalous_timeslots, ScorePolicy, ScoreVector};
use crate::score::FsPolicy;

/// Counters for one KPI name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbEntry {
    pub n: u64,
    pub n_plus: u64,
    pub n_minus: u64,
}

impl KbEntry {
    pub fn k_plus(&self) -> f64 {
        self.n_plus as f64 / self.n as f64
    }

    pub fn k_minus(&self) -> f64 {
        self.n_minus as f64 / self.n as f64
    }
}

/// Map from KPI name to counters. Names are the identity that transfers
/// across cases; a BTreeMap keeps persistence byte-reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KnowledgeBase {
    entries: BTreeMap<String, KbEntry>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build a base from raw counters, validating them.
    pub fn from_entries(entries: BTreeMap<String, KbEntry>) -> Result<Self> {
        let kb = KnowledgeBase { entries };
        kb.validate()?;
        Ok(kb)
    }

    pub fn entry(&self, name: &str) -> Option<&KbEntry> {
        self.entries.get(name)
    }

    /// (K+, K-) for a name; unknown names rate (0, 0).
    pub fn rates(&self, name: &str) -> (f64, f64) {
        match self.entries.get(name) {
            Some(e) => (e.k_plus(), e.k_minus()),
            None => (0.0, 0.0),
        }
    }

    pub fn entries(&self) -> &BTreeMap<String, KbEntry> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn validate(&self) -> Result<()> {
        for (name, e) in &self.entries {
            if e.n == 0 || e.n_plus > e.n || e.n_minus > e.n {
                return Err(Error::InvalidData(format!(
                    "inconsistent counters for {name}: n={} n_plus={} n_minus={}",
                    e.n, e.n_plus, e.n_minus
                )));
            }
        }
        Ok(())
    }

    /// Sorted-key JSON with a trailing newline; byte-reproducible.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("kb serializes");
        out.push('\n');
        out
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let kb: KnowledgeBase = serde_json::from_str(json)
            .map_err(|e| Error::InvalidData(format!("knowledge base: {e}")))?;
        kb.validate()?;
        Ok(kb)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&json)
    }
}

/// Bias gains; both non-negative. The recommended setting is a positive bias
/// only: gamma_plus = 1, gamma_minus = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkGains {
    pub gamma_plus: f64,
    pub gamma_minus: f64,
}

impl Default for EkGains {
    fn default() -> Self {
        EkGains {
            gamma_plus: 1.0,
            gamma_minus: 0.0,
        }
    }
}

impl EkGains {
    pub fn new(gamma_plus: f64, gamma_minus: f64) -> Result<Self> {
        let gains = EkGains {
            gamma_plus,
            gamma_minus,
        };
        gains.validate()?;
        Ok(gains)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma_plus.is_finite()
            && self.gamma_minus.is_finite()
            && self.gamma_plus >= 0.0
            && self.gamma_minus >= 0.0
        {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "gains must be finite and non-negative".into(),
            ))
        }
    }

    pub fn tag(&self) -> String {
        format!("ek_gp{}_gm{}", self.gamma_plus, self.gamma_minus)
    }
}

/// Absorb one solved case into the base. For every KPI of the case: `n`
/// increments; flagged KPIs increment `n_plus`; unflagged KPIs increment
/// `n_minus` when their score strictly exceeds the minimum score among the
/// flagged set. Cases with no flagged KPI skip the `n_minus` test (the
/// minimum is undefined) but still count observations. Returns a new base.
pub fn ek_update(
    kb: &KnowledgeBase,
    case: &CaseBundle,
    scores: &ScoreVector,
) -> Result<KnowledgeBase> {
    let names = case.dataset().feature_names();
    if scores.len() != names.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} KPIs",
            scores.len(),
            names.len()
        )));
    }
    let min_flagged = (0..names.len())
        .filter(|&j| case.gt().is_feature_anomalous(j))
        .map(|j| scores.scores()[j])
        .min_by(f64::total_cmp);

    let mut updated = kb.clone();
    for (j, name) in names.iter().enumerate() {
        let entry = updated
            .entries
            .entry(name.clone())
            .or_insert(KbEntry {
                n: 0,
                n_plus: 0,
                n_minus: 0,
            });
        entry.n += 1;
        if case.gt().is_feature_anomalous(j) {
            entry.n_plus += 1;
        } else if let Some(min) = min_flagged {
            if scores.scores()[j] > min {
                entry.n_minus += 1;
            }
        }
    }
    Ok(updated)
}

/// Adjust scores: `s * (1 + gamma_plus*K+ - gamma_minus*K-)`, clamped at zero
/// from below. Names absent from the base pass through unchanged, so an empty
/// base is the identity.
pub fn ek_apply(
    kb: &KnowledgeBase,
    scores: &ScoreVector,
    names: &[String],
    gains: &EkGains,
) -> Result<ScoreVector> {
    gains.validate()?;
    if scores.len() != names.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} names",
            scores.len(),
            names.len()
        )));
    }
    let adjusted = scores
        .scores()
        .iter()
        .zip(names)
        .map(|(&s, name)| {
            let (k_plus, k_minus) = kb.rates(name);
            let v = s * (1.0 + gains.gamma_plus * k_plus - gains.gamma_minus * k_minus);
            v.max(0.0)
        })
        .collect();
    ScoreVector::new(adjusted, ScorePolicy::EkAdjusted)
}

/// Sum counters name by name; equivalent to the n-weighted average of rates.
pub fn ek_merge(kbs: &[KnowledgeBase]) -> Result<KnowledgeBase> {
    if kbs.is_empty() {
        return Err(Error::EmptyInput("no knowledge bases to merge".into()));
    }
    let mut merged = KnowledgeBase::new();
    for kb in kbs {
        for (name, e) in &kb.entries {
            let slot = merged
                .entries
                .entry(name.clone())
                .or_insert(KbEntry {
                    n: 0,
                    n_plus: 0,
                    n_minus: 0,
                });
            slot.n += e.n;
            slot.n_plus += e.n_plus;
            slot.n_minus += e.n_minus;
        }
    }
    Ok(merged)
}

/// One case's contribution to a knowledge base: scores come from the oracle
/// anomalous timeslots and the chosen scoring policy (solved tickets carry
/// ground-truth times).
pub fn case_contribution(case: &CaseBundle, scoring: FsPolicy) -> Result<KnowledgeBase> {
    let case = standardize_case(case)?;
    let oracle = derive_anomalous_timeslots(case.gt());
    let scores = scoring.score(case.dataset(), &oracle)?;
    ek_update(&KnowledgeBase::new(), &case, &scores)
}

/// Leave-one-out bases: each case gets the merge of every *other* case's
/// contribution, so its own labels never influence its own base.
pub fn ek_leave_one_out(
    cases: &[CaseBundle],
    scoring: FsPolicy,
) -> Result<BTreeMap<String, KnowledgeBase>> {
    if cases.len() < 2 {
        return Err(Error::InvalidParameter(
            "leave-one-out needs at least two cases".into(),
        ));
    }
    let contributions: Vec<KnowledgeBase> = cases
        .iter()
        .map(|case| case_contribution(case, scoring))
        .collect::<Result<_>>()?;
    let mut out = BTreeMap::new();
    for (i, case) in cases.iter().enumerate() {
        let others: Vec<KnowledgeBase> = contributions
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, kb)| kb.clone())
            .collect();
        out.insert(case.case_id().to_string(), ek_merge(&others)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dataset, GroundTruth};
    use proptest::prelude::*;

    /// A two-KPI case where `flag_a` decides whether KPI a is flagged.
    fn two_kpi_case(id: &str, scores_hint: (f64, f64), flag_a: bool, flag_b: bool) -> (CaseBundle, ScoreVector) {
        let ds = Dataset::with_flag(
            vec!["a".into(), "b".into()],
            vec!["0".into(), "1".into()],
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            true,
        )
        .unwrap();
        let flags = vec![vec![false, flag_a], vec![false, flag_b]];
        let case = CaseBundle::new(ds, GroundTruth::new(flags, id).unwrap(), id).unwrap();
        let scores = ScoreVector::new(vec![scores_hint.0, scores_hint.1], ScorePolicy::Fsa).unwrap();
        (case, scores)
    }

    fn entry(kb: &KnowledgeBase, name: &str) -> KbEntry {
        *kb.entry(name).unwrap()
    }

    #[test]
    fn update_counts_ignored_high_scorer() {
        // A flagged with score 1.0; B unflagged with score 2.0 > 1.0
        let (case, scores) = two_kpi_case("c1", (1.0, 2.0), true, false);
        let kb = ek_update(&KnowledgeBase::new(), &case, &scores).unwrap();
        assert_eq!(entry(&kb, "a"), KbEntry { n: 1, n_plus: 1, n_minus: 0 });
        assert_eq!(entry(&kb, "b"), KbEntry { n: 1, n_plus: 0, n_minus: 1 });
    }

    #[test]
    fn update_skips_low_scoring_unflagged() {
        // B's 0.5 does not exceed the flagged minimum 2.0
        let (case, scores) = two_kpi_case("c1", (2.0, 0.5), true, false);
        let kb = ek_update(&KnowledgeBase::new(), &case, &scores).unwrap();
        assert_eq!(entry(&kb, "a"), KbEntry { n: 1, n_plus: 1, n_minus: 0 });
        assert_eq!(entry(&kb, "b"), KbEntry { n: 1, n_plus: 0, n_minus: 0 });
    }

    #[test]
    fn update_twice_doubles_counters() {
        let (case, scores) = two_kpi_case("c1", (1.0, 2.0), true, false);
        let once = ek_update(&KnowledgeBase::new(), &case, &scores).unwrap();
        let twice = ek_update(&once, &case, &scores).unwrap();
        for name in ["a", "b"] {
            let e1 = entry(&once, name);
            let e2 = entry(&twice, name);
            assert_eq!(e2.n, 2 * e1.n);
            assert_eq!(e2.n_plus, 2 * e1.n_plus);
            assert_eq!(e2.n_minus, 2 * e1.n_minus);
        }
    }

    #[test]
    fn update_never_decrements_and_keeps_counters_consistent() {
        // alternate two case shapes; counters stay monotone and a KPI never
        // accrues plus and minus from the same case
        let (case_a, scores_a) = two_kpi_case("c1", (1.0, 2.0), true, false);
        let (case_b, scores_b) = two_kpi_case("c2", (0.5, 3.0), false, true);
        let mut kb = KnowledgeBase::new();
        let mut previous: Vec<KbEntry> = Vec::new();
        for round in 0..6 {
            kb = if round % 2 == 0 {
                ek_update(&kb, &case_a, &scores_a).unwrap()
            } else {
                ek_update(&kb, &case_b, &scores_b).unwrap()
            };
            let current: Vec<KbEntry> = ["a", "b"].iter().map(|n| entry(&kb, n)).collect();
            for (now, before) in current.iter().zip(&previous) {
                assert!(now.n >= before.n);
                assert!(now.n_plus >= before.n_plus);
                assert!(now.n_minus >= before.n_minus);
            }
            for e in &current {
                assert!(e.n_plus + e.n_minus <= e.n);
            }
            previous = current;
        }
    }

    #[test]
    fn update_without_flagged_features_still_counts_n() {
        let (case, scores) = two_kpi_case("c1", (5.0, 1.0), false, false);
        let kb = ek_update(&KnowledgeBase::new(), &case, &scores).unwrap();
        assert_eq!(entry(&kb, "a"), KbEntry { n: 1, n_plus: 0, n_minus: 0 });
        assert_eq!(entry(&kb, "b"), KbEntry { n: 1, n_plus: 0, n_minus: 0 });
    }

    #[test]
    fn update_leaves_input_kb_untouched() {
        let (case, scores) = two_kpi_case("c1", (1.0, 2.0), true, false);
        let base = KnowledgeBase::new();
        let _ = ek_update(&base, &case, &scores).unwrap();
        assert!(base.is_empty());
    }

    #[test]
    fn apply_cold_start_is_bitwise_identity() {
        let scores = ScoreVector::new(vec![0.1, 2.5, 3.75], ScorePolicy::Fsa).unwrap();
        let names = vec!["a".into(), "b".into(), "c".into()];
        let gains = EkGains::new(3.0, 2.0).unwrap();
        let out = ek_apply(&KnowledgeBase::new(), &scores, &names, &gains).unwrap();
        assert_eq!(out.scores(), scores.scores());
        assert_eq!(out.policy(), ScorePolicy::EkAdjusted);
    }

    #[test]
    fn apply_hand_values() {
        let mut kb = KnowledgeBase::new();
        kb.entries.insert("a".into(), KbEntry { n: 2, n_plus: 1, n_minus: 0 });
        let scores = ScoreVector::new(vec![2.0], ScorePolicy::Fsa).unwrap();
        let out = ek_apply(
            &kb,
            &scores,
            &["a".into()],
            &EkGains::new(1.0, 0.0).unwrap(),
        )
        .unwrap();
        // 2.0 * (1 + 1*0.5) = 3.0
        assert_eq!(out.scores(), &[3.0]);
    }

    #[test]
    fn apply_clamps_negative_results() {
        let mut kb = KnowledgeBase::new();
        kb.entries.insert("a".into(), KbEntry { n: 1, n_plus: 0, n_minus: 1 });
        let scores = ScoreVector::new(vec![1.0], ScorePolicy::Fsa).unwrap();
        let out = ek_apply(
            &kb,
            &scores,
            &["a".into()],
            &EkGains::new(0.0, 2.0).unwrap(),
        )
        .unwrap();
        // 1.0 * (1 - 2) = -1.0, clamped to 0
        assert_eq!(out.scores(), &[0.0]);
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let (case, scores) = two_kpi_case("c1", (1.0, 2.0), true, false);
        let kb = ek_update(&KnowledgeBase::new(), &case, &scores).unwrap();
        let merged = ek_merge(&[kb.clone(), KnowledgeBase::new()]).unwrap();
        assert_eq!(merged, kb);
    }

    #[test]
    fn merge_sums_counters() {
        let mut kb1 = KnowledgeBase::new();
        kb1.entries.insert("a".into(), KbEntry { n: 2, n_plus: 1, n_minus: 0 });
        let mut kb2 = KnowledgeBase::new();
        kb2.entries.insert("a".into(), KbEntry { n: 2, n_plus: 1, n_minus: 2 });
        let merged = ek_merge(&[kb1, kb2]).unwrap();
        assert_eq!(entry(&merged, "a"), KbEntry { n: 4, n_plus: 2, n_minus: 2 });
        assert_eq!(entry(&merged, "a").k_plus(), 0.5);
    }

    #[test]
    fn merge_rejects_empty_list() {
        assert!(matches!(ek_merge(&[]), Err(Error::EmptyInput(_))));
    }

    fn loo_fixture(n: usize) -> Vec<CaseBundle> {
        // n structurally identical cases sharing KPI names
        (0..n)
            .map(|i| {
                let t = 10;
                let mut rows = vec![vec![0.0; t]; 3];
                rows[0][6..8].fill(5.0); // cause: flagged
                rows[1][6..8].fill(5.1); // symptom: unflagged, outscores the cause
                let ds = Dataset::with_flag(
                    vec!["cause".into(), "symptom".into(), "quiet".into()],
                    (0..t).map(|x| x.to_string()).collect(),
                    rows,
                    true,
                )
                .unwrap();
                let mut flags = vec![vec![false; t]; 3];
                flags[0][6] = true;
                flags[0][7] = true;
                let id = format!("case_{i}");
                CaseBundle::new(ds, GroundTruth::new(flags, id.clone()).unwrap(), id).unwrap()
            })
            .collect()
    }

    #[test]
    fn loo_two_cases_swap_contributions() {
        let cases = loo_fixture(2);
        let loo = ek_leave_one_out(&cases, FsPolicy::Fsa).unwrap();
        let c0 = case_contribution(&cases[0], FsPolicy::Fsa).unwrap();
        let c1 = case_contribution(&cases[1], FsPolicy::Fsa).unwrap();
        assert_eq!(loo["case_0"], c1);
        assert_eq!(loo["case_1"], c0);
    }

    #[test]
    fn loo_identical_cases_have_symmetric_counters() {
        let n = 4;
        let cases = loo_fixture(n);
        let loo = ek_leave_one_out(&cases, FsPolicy::Fsa).unwrap();
        for kb in loo.values() {
            assert_eq!(entry(kb, "cause").n, (n - 1) as u64);
            assert_eq!(entry(kb, "cause").n_plus, (n - 1) as u64);
            assert_eq!(entry(kb, "symptom").n_minus, (n - 1) as u64);
        }
    }

    #[test]
    fn loo_excludes_own_kpis() {
        let mut cases = loo_fixture(2);
        // rename case 1's quiet KPI so it appears only there
        let ds = cases[1].dataset();
        let renamed = Dataset::with_flag(
            vec!["cause".into(), "symptom".into(), "only_in_1".into()],
            ds.timestamps().to_vec(),
            ds.values().to_vec(),
            true,
        )
        .unwrap();
        let gt = GroundTruth::new(cases[1].gt().flags().to_vec(), "case_1").unwrap();
        cases[1] = CaseBundle::new(renamed, gt, "case_1").unwrap();

        let loo = ek_leave_one_out(&cases, FsPolicy::Fsa).unwrap();
        // case_1's own exclusive KPI is absent from its own base
        assert!(loo["case_1"].entry("only_in_1").is_none());
        // but present in case_0's base (contributed by case_1)
        assert!(loo["case_0"].entry("only_in_1").is_some());
    }

    #[test]
    fn loo_needs_two_cases() {
        let cases = loo_fixture(1);
        assert!(ek_leave_one_out(&cases, FsPolicy::Fsa).is_err());
    }

    #[test]
    fn json_round_trip_and_sorted_keys() {
        let mut kb = KnowledgeBase::new();
        kb.entries.insert("zeta".into(), KbEntry { n: 3, n_plus: 1, n_minus: 0 });
        kb.entries.insert("alpha".into(), KbEntry { n: 2, n_plus: 2, n_minus: 1 });
        let json = kb.to_json();
        assert!(json.find("alpha").unwrap() < json.find("zeta").unwrap());
        assert!(json.ends_with('\n'));
        let back = KnowledgeBase::from_json(&json).unwrap();
        assert_eq!(back, kb);
    }

    #[test]
    fn json_rejects_inconsistent_counters() {
        let bad = r#"{"a": {"n": 1, "n_plus": 2, "n_minus": 0}}"#;
        assert!(KnowledgeBase::from_json(bad).is_err());
        let zero = r#"{"a": {"n": 0, "n_plus": 0, "n_minus": 0}}"#;
        assert!(KnowledgeBase::from_json(zero).is_err());
    }

    fn arb_kb() -> impl Strategy<Value = KnowledgeBase> {
        proptest::collection::btree_map(
            "[a-e]{1,2}",
            (1u64..20).prop_flat_map(|n| {
                (Just(n), 0..=n, 0..=n).prop_map(|(n, p, m)| KbEntry {
                    n,
                    n_plus: p,
                    n_minus: m,
                })
            }),
            0..6,
        )
        .prop_map(|entries| KnowledgeBase { entries })
    }

    proptest! {
        #[test]
        fn zero_gains_are_bitwise_identity(kb in arb_kb(), raw in proptest::collection::vec(0.0f64..10.0, 1..8)) {
            let names: Vec<String> = (0..raw.len()).map(|i| format!("{}", (b'a' + i as u8) as char)).collect();
            let scores = ScoreVector::new(raw, ScorePolicy::Fsa).unwrap();
            let out = ek_apply(&kb, &scores, &names, &EkGains::new(0.0, 0.0).unwrap()).unwrap();
            prop_assert_eq!(out.scores(), scores.scores());
        }

        #[test]
        fn merge_is_commutative_and_associative(a in arb_kb(), b in arb_kb(), c in arb_kb()) {
            let ab = ek_merge(&[a.clone(), b.clone()]).unwrap();
            let ba = ek_merge(&[b.clone(), a.clone()]).unwrap();
            prop_assert_eq!(&ab, &ba);
            let ab_c = ek_merge(&[ab, c.clone()]).unwrap();
            let bc = ek_merge(&[b, c]).unwrap();
            let a_bc = ek_merge(&[a, bc]).unwrap();
            prop_assert_eq!(ab_c, a_bc);
        }

        #[test]
        fn positive_bias_preserves_order(
            s_lo in 0.0f64..10.0,
            s_delta in 0.0f64..5.0,
            n1 in 1u64..20, p1 in 0u64..20,
            n2 in 1u64..20, p2 in 0u64..20,
            gamma in 0.0f64..10.0,
        ) {
            // s_j >= s_k and K+_j >= K+_k with gamma_minus = 0 must keep order
            let e1 = KbEntry { n: n1, n_plus: p1.min(n1), n_minus: 0 };
            let e2 = KbEntry { n: n2, n_plus: p2.min(n2), n_minus: 0 };
            let (hi, lo) = if e1.k_plus() >= e2.k_plus() { (e1, e2) } else { (e2, e1) };
            let mut kb = KnowledgeBase::new();
            kb.entries.insert("hi".into(), hi);
            kb.entries.insert("lo".into(), lo);
            let scores = ScoreVector::new(vec![s_lo + s_delta, s_lo], ScorePolicy::Fsa).unwrap();
            let names = vec!["hi".to_string(), "lo".to_string()];
            let out = ek_apply(&kb, &scores, &names, &EkGains::new(gamma, 0.0).unwrap()).unwrap();
            prop_assert!(out.scores()[0] >= out.scores()[1]);
        }
    }
}
