//! Ranking-quality metrics (reading effort, nDCG) and the experiment harness
//! that turns pipeline configurations into plot-ready result tables.
//!
//! nDCG = DCG/iDCG with binary relevance and a log2 position discount,
//! 1-based positions:
//!   iDCG = sum_{i=1..t} 1/log2(i+1)
//!   DCG  = sum over positions i holding an anomalous KPI of 1/log2(i+1)
//! Reading effort m is the deepest rank position holding an anomalous KPI;
//! m = t + e with t anomalous KPIs and e interleaved false positives.

use std::collections::BTreeMap;
use std::io::Write;

use crate::detect::{self, AdMethod};
use crate::error::{Error, Result};
use crate::expert::{ek_apply, EkGains, KnowledgeBase};
use crate::ingest::{standardize_case, CaseBundle};
use crate::model::{rank_from_scores, AnomalyVector, GroundTruth, Ranking};
use crate::score::{self, FsPolicy};

/// nDCG of a relevance sequence (true = anomalous KPI at that position).
/// `None` when nothing is relevant.
pub(crate) fn ndcg_from_relevance(relevance: &[bool]) -> Option<f64> {
    let t = relevance.iter().filter(|&&r| r).count();
    if t == 0 {
        return None;
    }
    let discount = |i: usize| 1.0 / ((i + 1) as f64).log2();
    let dcg: f64 = relevance
        .iter()
        .enumerate()
        .filter(|(_, &r)| r)
        .map(|(idx, _)| discount(idx + 1))
        .sum();
    let idcg: f64 = (1..=t).map(discount).sum();
    Some(dcg / idcg)
}

/// (m, t, e) of a relevance sequence; `None` when nothing is relevant.
pub(crate) fn reading_effort_from_relevance(relevance: &[bool]) -> Option<(usize, usize, usize)> {
    let t = relevance.iter().filter(|&&r| r).count();
    if t == 0 {
        return None;
    }
    let m = relevance.iter().rposition(|&r| r).expect("t >= 1") + 1;
    Some((m, t, m - t))
}

fn relevance_of(ranking: &Ranking, gt: &GroundTruth) -> Result<Vec<bool>> {
    if ranking.len() != gt.feature_count() {
        return Err(Error::DimensionMismatch(format!(
            "ranking covers {} features, ground truth {}",
            ranking.len(),
            gt.feature_count()
        )));
    }
    Ok(ranking
        .order()
        .iter()
        .map(|&j| gt.is_feature_anomalous(j))
        .collect())
}

/// Reading effort: how many KPIs an expert walking the ranking top-down must
/// examine to see every flagged one. Returns (m, t, e).
pub fn reading_effort(ranking: &Ranking, gt: &GroundTruth) -> Result<(usize, usize, usize)> {
    let relevance = relevance_of(ranking, gt)?;
    reading_effort_from_relevance(&relevance).ok_or(Error::NoAnomalousFeatures)
}

/// Agreement between a ranking and the expert's flagged set, in [0, 1].
pub fn ndcg(ranking: &Ranking, gt: &GroundTruth) -> Result<f64> {
    let relevance = relevance_of(ranking, gt)?;
    ndcg_from_relevance(&relevance).ok_or(Error::NoAnomalousFeatures)
}

/// Ranking policy evaluated by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankPolicy {
    Fsa,
    Fsr,
    /// The naive "current system": ascending alphabetical order.
    Alphabetical,
}

impl RankPolicy {
    pub fn tag(&self) -> &'static str {
        match self {
            RankPolicy::Fsa => "fsa",
            RankPolicy::Fsr => "fsr",
            RankPolicy::Alphabetical => "alphabetical",
        }
    }

    fn fs_policy(&self) -> Option<FsPolicy> {
        match self {
            RankPolicy::Fsa => Some(FsPolicy::Fsa),
            RankPolicy::Fsr => Some(FsPolicy::Fsr),
            RankPolicy::Alphabetical => None,
        }
    }
}

/// One evaluated (case, configuration) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub case_id: String,
    pub ad_tag: String,
    pub fs_tag: String,
    pub ek_tag: String,
    pub ndcg: f64,
    /// Reading effort m.
    pub reading_effort: usize,
    pub t: usize,
    pub e: usize,
    pub f: usize,
}

/// Run standardize -> AD -> FS -> optional EK -> rank -> metrics for one case.
///
/// A degenerate detection (nothing flagged, or everything flagged) leaves
/// feature scoring undefined; the row then falls back to the alphabetical
/// baseline ranking with fs tag `fallback` and no EK adjustment. EK is applied
/// only to FS scores, never to the alphabetical baseline's ramp.
pub fn evaluate(
    case: &CaseBundle,
    ad: &AdMethod,
    fs: RankPolicy,
    ek: Option<(&KnowledgeBase, &EkGains)>,
) -> Result<MetricsRow> {
    let case = standardize_case(case)?;
    let detection = match ad.detect(&case) {
        Ok(d) => d,
        // an ensemble with every candidate degenerate is itself a no-detection
        Err(Error::NoDetection) => AnomalyVector::new(
            vec![false; case.dataset().timeslot_count()],
            crate::model::AnomalySource::Ensemble,
        ),
        Err(e) => return Err(e),
    };
    evaluate_detection(&case, ad.tag(), &detection, fs, ek)
}

/// Metric row for an already-computed detection on a standardized case.
pub fn evaluate_detection(
    case: &CaseBundle,
    ad_tag: &str,
    detection: &AnomalyVector,
    fs: RankPolicy,
    ek: Option<(&KnowledgeBase, &EkGains)>,
) -> Result<MetricsRow> {
    let names = case.dataset().feature_names();
    let (ranking, fs_tag, ek_tag) = match fs.fs_policy() {
        Some(policy) if !detect::is_degenerate(detection) => {
            let scores = policy.score(case.dataset(), detection)?;
            match ek {
                Some((kb, gains)) => {
                    let adjusted = ek_apply(kb, &scores, names, gains)?;
                    (
                        rank_from_scores(&adjusted, names)?,
                        fs.tag().to_string(),
                        gains.tag(),
                    )
                }
                None => (
                    rank_from_scores(&scores, names)?,
                    fs.tag().to_string(),
                    "none".to_string(),
                ),
            }
        }
        Some(_) => (
            score::baseline_alphabetical(case),
            "fallback".to_string(),
            "none".to_string(),
        ),
        None => (
            score::baseline_alphabetical(case),
            fs.tag().to_string(),
            "none".to_string(),
        ),
    };
    let quality = ndcg(&ranking, case.gt())?;
    let (m, t, e) = reading_effort(&ranking, case.gt())?;
    Ok(MetricsRow {
        case_id: case.case_id().to_string(),
        ad_tag: ad_tag.to_string(),
        fs_tag,
        ek_tag,
        ndcg: quality,
        reading_effort: m,
        t,
        e,
        f: case.dataset().feature_count(),
    })
}

/// Gain-sweep mode: which of the two biases follows gamma.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaMode {
    PlusOnly,
    MinusOnly,
    Both,
}

impl GammaMode {
    pub fn tag(&self) -> &'static str {
        match self {
            GammaMode::PlusOnly => "plus-only",
            GammaMode::MinusOnly => "minus-only",
            GammaMode::Both => "both",
        }
    }

    pub fn gains(&self, gamma: f64) -> EkGains {
        match self {
            GammaMode::PlusOnly => EkGains { gamma_plus: gamma, gamma_minus: 0.0 },
            GammaMode::MinusOnly => EkGains { gamma_plus: 0.0, gamma_minus: gamma },
            GammaMode::Both => EkGains { gamma_plus: gamma, gamma_minus: gamma },
        }
    }
}

/// One row of the gain-sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub gamma: f64,
    pub mode: &'static str,
    pub mean_ndcg: f64,
}

/// Mean nDCG over all cases for each gamma, on top of oracle detection and
/// average-based scoring, using each case's leave-one-out base.
pub fn gamma_sweep(
    cases: &[CaseBundle],
    kb_per_case: &BTreeMap<String, KnowledgeBase>,
    mode: GammaMode,
    gammas: &[f64],
) -> Result<Vec<SweepRow>> {
    if cases.is_empty() {
        return Err(Error::EmptyInput("no cases".into()));
    }
    if gammas.is_empty() {
        return Err(Error::EmptyInput("no gamma values".into()));
    }
    let mut rows = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let gains = mode.gains(gamma);
        gains.validate()?;
        let mut total = 0.0;
        for case in cases {
            let kb = kb_per_case.get(case.case_id()).ok_or_else(|| {
                Error::InvalidParameter(format!("no knowledge base for case {}", case.case_id()))
            })?;
            let row = evaluate(case, &AdMethod::Oracle, RankPolicy::Fsa, Some((kb, &gains)))?;
            total += row.ndcg;
        }
        rows.push(SweepRow {
            gamma,
            mode: mode.tag(),
            mean_ndcg: total / cases.len() as f64,
        });
    }
    Ok(rows)
}

/// Grouped means per configuration, for the relative-impact scatter data.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactRow {
    pub config: String,
    pub mean_ndcg: f64,
    pub mean_reading_effort: f64,
}

/// Group rows by (ad, fs, ek) and average. Duplicate rows count; rows are
/// plain arithmetic-mean samples.
pub fn relative_impact(rows: &[MetricsRow]) -> Result<Vec<ImpactRow>> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("no metric rows".into()));
    }
    let mut groups: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for row in rows {
        let key = format!("{}+{}+{}", row.ad_tag, row.fs_tag, row.ek_tag);
        let slot = groups.entry(key).or_insert((0.0, 0.0, 0));
        slot.0 += row.ndcg;
        slot.1 += row.reading_effort as f64;
        slot.2 += 1;
    }
    Ok(groups
        .into_iter()
        .map(|(config, (nd, m, count))| ImpactRow {
            config,
            mean_ndcg: nd / count as f64,
            mean_reading_effort: m / count as f64,
        })
        .collect())
}

/// `case_id,ad,fs,ek,ndcg,reading_effort,t,e,f` with 6-decimal floats. Rows
/// are sorted by (case_id, tags) so output is independent of evaluation order.
pub fn write_metrics_csv(rows: &[MetricsRow], out: &mut impl Write) -> std::io::Result<()> {
    let mut sorted: Vec<&MetricsRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.case_id, &a.ad_tag, &a.fs_tag, &a.ek_tag)
            .cmp(&(&b.case_id, &b.ad_tag, &b.fs_tag, &b.ek_tag))
    });
    writeln!(out, "case_id,ad,fs,ek,ndcg,reading_effort,t,e,f")?;
    for row in sorted {
        writeln!(
            out,
            "{},{},{},{},{:.6},{},{},{},{}",
            row.case_id,
            row.ad_tag,
            row.fs_tag,
            row.ek_tag,
            row.ndcg,
            row.reading_effort,
            row.t,
            row.e,
            row.f
        )?;
    }
    Ok(())
}

/// Read rows written by [`write_metrics_csv`].
pub fn read_metrics_csv(path: &std::path::Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    match lines.next() {
        Some((_, "case_id,ad,fs,ek,ndcg,reading_effort,t,e,f")) => {}
        _ => return Err(parse_err(1, "unexpected metrics header".into())),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(parse_err(idx + 1, format!("expected 9 fields, got {}", fields.len())));
        }
        let num = |field: &str| -> Result<f64> {
            field
                .parse()
                .map_err(|_| parse_err(idx + 1, format!("bad number `{field}`")))
        };
        let int = |field: &str| -> Result<usize> {
            field
                .parse()
                .map_err(|_| parse_err(idx + 1, format!("bad integer `{field}`")))
        };
        rows.push(MetricsRow {
            case_id: fields[0].to_string(),
            ad_tag: fields[1].to_string(),
            fs_tag: fields[2].to_string(),
            ek_tag: fields[3].to_string(),
            ndcg: num(fields[4])?,
            reading_effort: int(fields[5])?,
            t: int(fields[6])?,
            e: int(fields[7])?,
            f: int(fields[8])?,
        });
    }
    Ok(rows)
}

/// `gamma,mode,mean_ndcg` with 6-decimal floats.
pub fn write_sweep_csv(rows: &[SweepRow], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "gamma,mode,mean_ndcg")?;
    for row in rows {
        writeln!(out, "{:.6},{},{:.6}", row.gamma, row.mode, row.mean_ndcg)?;
    }
    Ok(())
}

/// `config,mean_ndcg,mean_reading_effort` with 6-decimal floats.
pub fn write_impact_csv(rows: &[ImpactRow], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "config,mean_ndcg,mean_reading_effort")?;
    for row in rows {
        writeln!(
            out,
            "{},{:.6},{:.6}",
            row.config, row.mean_ndcg, row.mean_reading_effort
        )?;
    }
    Ok(())
}
