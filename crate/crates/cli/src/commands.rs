//! Command handlers: thin wrappers that wire files and flags into the library
//! and write its tables out.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use kpitriage::detect::{AdMethod, DbscanParams, IsolationForestParams, ThresholdPolicy};
use kpitriage::eval::{
    evaluate, gamma_sweep, read_metrics_csv, relative_impact, write_impact_csv, write_metrics_csv,
    write_sweep_csv, GammaMode, RankPolicy,
};
use kpitriage::expert::{case_contribution, ek_apply, ek_leave_one_out, ek_merge, EkGains, KnowledgeBase};
use kpitriage::ingest::{corpus_stats, load_case, load_suite, standardize_case, CorpusStats};
use kpitriage::model::{rank_from_scores, Ranking, ScoreVector};
use kpitriage::score::{baseline_alphabetical, FsPolicy};
use kpitriage::seed::derive_seed;
use kpitriage::synth::{generate_suite, SuiteSpec};
use kpitriage::tune::{
    grid_search, randomized_tuning, write_curve_csv, write_grid_csv, GridAlgorithm, GridSpec,
    TuningComparator,
};

use crate::{
    AdChoice, AlgoChoice, ComparatorChoice, DetectorArgs, EkBuildArgs, EvalImpactArgs, EvalRunArgs,
    EvalSweepArgs, Failure, FsChoice, ModeChoice, RankArgs, StatsArgs, SynthArgs, TuneGridArgs,
    TuneRandomArgs,
};

type CmdResult = Result<(), Failure>;

impl DetectorArgs {
    fn threshold(&self) -> ThresholdPolicy {
        if let Some(theta) = self.theta_s {
            ThresholdPolicy::StaticScore(theta)
        } else if self.elbow {
            ThresholdPolicy::DEFAULT_ELBOW
        } else {
            ThresholdPolicy::Contamination(self.contamination)
        }
    }

    fn iforest(&self, seed: u64) -> IsolationForestParams {
        IsolationForestParams {
            n_trees: self.n_trees,
            subsample_size: self.subsample,
            seed,
            threshold_policy: self.threshold(),
        }
    }

    fn dbscan(&self) -> DbscanParams {
        DbscanParams {
            epsilon: self.epsilon,
            min_pts: self.min_pts,
        }
    }
}

/// Build the detection method; stochastic methods insist on a seed.
fn ad_method(choice: AdChoice, detector: &DetectorArgs, seed: Option<u64>) -> Result<AdMethod, Failure> {
    let need_seed = || {
        seed.ok_or_else(|| Failure::usage("--seed is required for stochastic detectors (if, ensemble)"))
    };
    Ok(match choice {
        AdChoice::Oracle => AdMethod::Oracle,
        AdChoice::Dbscan => AdMethod::Dbscan(detector.dbscan()),
        AdChoice::If => AdMethod::IsolationForest(detector.iforest(need_seed()?)),
        AdChoice::Ensemble => AdMethod::Ensemble {
            iforest: detector.iforest(need_seed()?),
            dbscan: detector.dbscan(),
        },
    })
}

fn rank_policy(fs: FsChoice) -> RankPolicy {
    match fs {
        FsChoice::Fsa => RankPolicy::Fsa,
        FsChoice::Fsr => RankPolicy::Fsr,
        FsChoice::Alphabetical => RankPolicy::Alphabetical,
    }
}

fn create_out(path: &Path) -> Result<File, Failure> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(File::create(path)?)
}

pub(crate) fn rank(args: RankArgs) -> CmdResult {
    let case = load_case(&args.data, &args.gt)?;
    let ad = ad_method(args.ad, &args.detector, args.seed)?;
    let kb = args.kb.as_deref().map(KnowledgeBase::load).transpose()?;
    let gains = EkGains::new(args.gamma_plus, args.gamma_minus)?;

    let case = standardize_case(&case)?;
    let names = case.dataset().feature_names();

    let (ranking, adjusted): (Ranking, Option<ScoreVector>) = match rank_policy(args.fs) {
        RankPolicy::Alphabetical => (baseline_alphabetical(&case), None),
        policy => {
            let detection = ad.detect(&case)?;
            let fs = match policy {
                RankPolicy::Fsa => FsPolicy::Fsa,
                RankPolicy::Fsr => FsPolicy::Fsr,
                RankPolicy::Alphabetical => unreachable!(),
            };
            let scores = fs.score(case.dataset(), &detection)?;
            match &kb {
                Some(kb) => {
                    let adjusted = ek_apply(kb, &scores, names, &gains)?;
                    (rank_from_scores(&adjusted, names)?, Some(scores))
                }
                None => (rank_from_scores(&scores, names)?, None),
            }
        }
    };

    // when a kb is active the table orders by the adjusted score and also
    // shows the raw one
    let mut stdout = std::io::stdout().lock();
    let name_width = names.iter().map(String::len).max().unwrap_or(4).max(4);
    let header_extra = if adjusted.is_some() { "  adjusted" } else { "" };
    writeln!(stdout, "{:>4}  {:<name_width$}  {:>12}{}", "rank", "kpi", "score", header_extra)?;
    for (pos, &feature) in ranking.order().iter().enumerate() {
        let shown = ranking.scores().scores()[feature];
        match &adjusted {
            Some(raw) => writeln!(
                stdout,
                "{:>4}  {:<name_width$}  {:>12.6}  {:>8.6}",
                pos + 1,
                names[feature],
                raw.scores()[feature],
                shown,
            )?,
            None => writeln!(
                stdout,
                "{:>4}  {:<name_width$}  {:>12.6}",
                pos + 1,
                names[feature],
                shown,
            )?,
        }
    }

    if let Some(out) = &args.out {
        let mut file = create_out(out)?;
        if adjusted.is_some() {
            writeln!(file, "rank,kpi,score,adjusted_score")?;
        } else {
            writeln!(file, "rank,kpi,score")?;
        }
        for (pos, &feature) in ranking.order().iter().enumerate() {
            let shown = ranking.scores().scores()[feature];
            match &adjusted {
                Some(raw) => writeln!(
                    file,
                    "{},{},{:.6},{:.6}",
                    pos + 1,
                    names[feature],
                    raw.scores()[feature],
                    shown
                )?,
                None => writeln!(file, "{},{},{:.6}", pos + 1, names[feature], shown)?,
            }
        }
    }
    Ok(())
}

/// Per-case knowledge base: a single shared file, a per-case directory, or
/// nothing.
fn kb_for_case(
    shared: &Option<KnowledgeBase>,
    ek_dir: &Option<std::path::PathBuf>,
    case_id: &str,
) -> Result<Option<KnowledgeBase>, Failure> {
    if let Some(kb) = shared {
        return Ok(Some(kb.clone()));
    }
    match ek_dir {
        Some(dir) => Ok(Some(KnowledgeBase::load(&dir.join(format!("{case_id}.kb.json")))?)),
        None => Ok(None),
    }
}

pub(crate) fn eval_run(args: EvalRunArgs) -> CmdResult {
    let cases = load_suite(&args.suite)?;
    let shared_kb = args.kb.as_deref().map(KnowledgeBase::load).transpose()?;
    let gains = EkGains::new(args.gamma_plus, args.gamma_minus)?;
    if matches!(args.ad, AdChoice::If | AdChoice::Ensemble) && args.seed.is_none() {
        return Err(Failure::usage("--seed is required for stochastic detectors (if, ensemble)"));
    }

    let mut rows = Vec::with_capacity(cases.len());
    for (case_idx, case) in cases.iter().enumerate() {
        // stochastic detectors get one derived seed per case
        let case_seed = args.seed.map(|s| derive_seed(s, case_idx as u64));
        let ad = ad_method(args.ad, &args.detector, case_seed)?;
        let kb = kb_for_case(&shared_kb, &args.ek_dir, case.case_id())?;
        let ek = kb.as_ref().map(|kb| (kb, &gains));
        rows.push(evaluate(case, &ad, rank_policy(args.fs), ek)?);
    }
    let mut out = create_out(&args.out)?;
    write_metrics_csv(&rows, &mut out)?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

pub(crate) fn eval_sweep(args: EvalSweepArgs) -> CmdResult {
    let cases = load_suite(&args.suite)?;
    let kbs = ek_leave_one_out(&cases, FsPolicy::Fsa)?;
    let modes: Vec<GammaMode> = match args.mode {
        ModeChoice::Plus => vec![GammaMode::PlusOnly],
        ModeChoice::Minus => vec![GammaMode::MinusOnly],
        ModeChoice::Both => vec![GammaMode::Both],
        ModeChoice::All => vec![GammaMode::PlusOnly, GammaMode::MinusOnly, GammaMode::Both],
    };
    let mut rows = Vec::new();
    for mode in modes {
        rows.extend(gamma_sweep(&cases, &kbs, mode, &args.gammas)?);
    }
    let mut out = create_out(&args.out)?;
    write_sweep_csv(&rows, &mut out)?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

pub(crate) fn eval_impact(args: EvalImpactArgs) -> CmdResult {
    let mut rows = Vec::new();
    for path in &args.metrics {
        rows.extend(read_metrics_csv(path)?);
    }
    let impact = relative_impact(&rows)?;
    let mut out = create_out(&args.out)?;
    write_impact_csv(&impact, &mut out)?;
    println!("wrote {} configurations to {}", impact.len(), args.out.display());
    Ok(())
}

pub(crate) fn ek_build(args: EkBuildArgs) -> CmdResult {
    let cases = load_suite(&args.suite)?;
    if args.loo {
        std::fs::create_dir_all(&args.out)?;
        let kbs = ek_leave_one_out(&cases, FsPolicy::Fsa)?;
        for (case_id, kb) in &kbs {
            kb.save(&args.out.join(format!("{case_id}.kb.json")))?;
        }
        println!("wrote {} leave-one-out bases to {}", kbs.len(), args.out.display());
    } else {
        let contributions: Vec<KnowledgeBase> = cases
            .iter()
            .map(|case| case_contribution(case, FsPolicy::Fsa))
            .collect::<Result<_, _>>()?;
        let merged = ek_merge(&contributions)?;
        merged.save(&args.out)?;
        println!("wrote merged base ({} KPIs) to {}", merged.len(), args.out.display());
    }
    Ok(())
}

fn algorithm(choice: AlgoChoice) -> GridAlgorithm {
    match choice {
        AlgoChoice::Dbscan => GridAlgorithm::Dbscan,
        AlgoChoice::If => GridAlgorithm::IsolationForest,
    }
}

pub(crate) fn tune_grid(args: TuneGridArgs) -> CmdResult {
    let cases = load_suite(&args.suite)?;
    let grid = GridSpec::for_algorithm(algorithm(args.algo));
    let result = grid_search(&cases, &grid, FsPolicy::Fsa, args.seed)?;
    let mut out = create_out(&args.out)?;
    write_grid_csv(&result.evaluation, &mut out)?;

    let mut stdout = std::io::stdout().lock();
    for (case_id, (combo_idx, ndcg)) in &result.per_case_best {
        writeln!(
            stdout,
            "best {case_id}: {} ndcg={ndcg:.6}",
            grid.combos[*combo_idx].label()
        )?;
    }
    writeln!(
        stdout,
        "single best: {} mean_ndcg={:.6}",
        grid.combos[result.single_best.0].label(),
        result.single_best.1
    )?;
    Ok(())
}

pub(crate) fn tune_random(args: TuneRandomArgs) -> CmdResult {
    let cases = load_suite(&args.suite)?;
    let grid = GridSpec::for_algorithm(algorithm(args.algo));
    let comparator = match args.comparator {
        ComparatorChoice::SuiteMean => TuningComparator::SuiteMean,
        ComparatorChoice::PerCase => TuningComparator::PerCase,
    };
    let curve = randomized_tuning(&cases, &grid, FsPolicy::Fsa, args.trials, args.seed, comparator)?;
    let mut out = create_out(&args.out)?;
    write_curve_csv(&curve, &mut out)?;
    println!(
        "wrote {} curve points ({} trials) to {}",
        curve.fractions.len(),
        curve.trials,
        args.out.display()
    );
    Ok(())
}

pub(crate) fn synth(args: SynthArgs) -> CmdResult {
    let mut spec = if args.ek_mode {
        SuiteSpec::ek_suite(args.cases, args.seed)
    } else {
        SuiteSpec::default_suite(args.seed)
    };
    spec.n_cases = args.cases;
    if let Some(t_min) = args.t_min {
        spec.t_range.0 = t_min;
    }
    if let Some(t_max) = args.t_max {
        spec.t_range.1 = t_max;
    }
    if let Some(f_min) = args.f_min {
        spec.f_range.0 = f_min;
    }
    if let Some(f_max) = args.f_max {
        spec.f_range.1 = f_max;
    }
    std::fs::create_dir_all(&args.out)?;
    let cases = generate_suite(&spec, Some(&args.out))?;
    println!("wrote {} cases to {}", cases.len(), args.out.display());
    Ok(())
}

type FiveNumberGetter = fn(&kpitriage::ingest::FiveNumber) -> f64;

fn write_stats_csv(stats: &CorpusStats, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "case_id,timeslots,kpis,anomalous_timeslot_fraction,anomalous_kpi_fraction"
    )?;
    for row in &stats.per_case {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6}",
            row.case_id, row.timeslots, row.kpis, row.anomalous_timeslot_fraction, row.anomalous_kpi_fraction
        )?;
    }
    let summary: [(&str, FiveNumberGetter); 5] = [
        ("min", |f| f.min),
        ("q1", |f| f.q1),
        ("median", |f| f.median),
        ("q3", |f| f.q3),
        ("max", |f| f.max),
    ];
    for (label, get) in summary {
        writeln!(
            out,
            "{label},{:.6},{:.6},{:.6},{:.6}",
            get(&stats.timeslots),
            get(&stats.kpis),
            get(&stats.anomalous_timeslot_fraction),
            get(&stats.anomalous_kpi_fraction)
        )?;
    }
    writeln!(
        out,
        "total,{},{},{:.6},{:.6}",
        stats.total_timeslots,
        stats.total_kpis,
        stats.total_anomalous_timeslot_fraction,
        stats.total_anomalous_kpi_fraction
    )?;
    Ok(())
}

pub(crate) fn stats(args: StatsArgs) -> CmdResult {
    let cases = load_suite(&args.suite)?;
    let stats = corpus_stats(&cases)?;
    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "{:<12} {:>10} {:>8} {:>16} {:>14}",
        "case", "timeslots", "kpis", "anom_slots_pct", "anom_kpis_pct"
    )?;
    for row in &stats.per_case {
        writeln!(
            stdout,
            "{:<12} {:>10} {:>8} {:>15.2}% {:>13.2}%",
            row.case_id,
            row.timeslots,
            row.kpis,
            100.0 * row.anomalous_timeslot_fraction,
            100.0 * row.anomalous_kpi_fraction
        )?;
    }
    writeln!(stdout, "---")?;
    let line = |label: &str, get: fn(&kpitriage::ingest::FiveNumber) -> f64| {
        format!(
            "{:<12} {:>10.0} {:>8.0} {:>15.2}% {:>13.2}%",
            label,
            get(&stats.timeslots),
            get(&stats.kpis),
            100.0 * get(&stats.anomalous_timeslot_fraction),
            100.0 * get(&stats.anomalous_kpi_fraction)
        )
    };
    writeln!(stdout, "{}", line("minimum", |f| f.min))?;
    writeln!(stdout, "{}", line("1st-quartile", |f| f.q1))?;
    writeln!(stdout, "{}", line("median", |f| f.median))?;
    writeln!(stdout, "{}", line("3rd-quartile", |f| f.q3))?;
    writeln!(stdout, "{}", line("maximum", |f| f.max))?;
    writeln!(
        stdout,
        "{:<12} {:>10} {:>8} {:>15.2}% {:>13.2}%",
        "total",
        stats.total_timeslots,
        stats.total_kpis,
        100.0 * stats.total_anomalous_timeslot_fraction,
        100.0 * stats.total_anomalous_kpi_fraction
    )?;

    if let Some(out) = &args.out {
        let mut file = create_out(out)?;
        write_stats_csv(&stats, &mut file)?;
    }
    Ok(())
}
