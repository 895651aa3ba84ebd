//! Labeled synthetic cases: unit-variance noise with a shifted window on the
//! anomalous features, optional "symptom" features that copy the pattern but
//! stay unflagged, and writers for the on-disk case format.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::CaseBundle;
use crate::model::{Dataset, GroundTruth};
use crate::seed::{derive_seed, seeded_rng};

/// Temporal shape of an injected anomaly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnomalyPattern {
    /// Constant offset across the window.
    LevelShift,
    /// Triangular bump peaking mid-window.
    Spike,
    /// Linear climb to the full magnitude at the window end.
    Ramp,
}

fn std_normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

impl AnomalyPattern {
    pub fn tag(&self) -> &'static str {
        match self {
            AnomalyPattern::LevelShift => "level-shift",
            AnomalyPattern::Spike => "spike",
            AnomalyPattern::Ramp => "ramp",
        }
    }

    /// Offset (in sigma units) added at window position `i` of `len`.
    fn offset(&self, i: usize, len: usize, magnitude: f64) -> f64 {
        match self {
            AnomalyPattern::LevelShift => magnitude,
            AnomalyPattern::Spike => {
                let center = (len - 1) as f64 / 2.0;
                let span = center + 1.0;
                magnitude * (1.0 - (i as f64 - center).abs() / span)
            }
            AnomalyPattern::Ramp => magnitude * (i + 1) as f64 / len as f64,
        }
    }
}

/// Everything needed to generate one case deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub f: usize,
    pub t_slots: usize,
    pub n_anomalous_features: usize,
    pub n_symptom_features: usize,
    /// (start, length) in slots.
    pub anomaly_window: (usize, usize),
    /// Shift in sigma units.
    pub shift_magnitude: f64,
    pub pattern: AnomalyPattern,
    pub noise_seed: u64,
    /// Names used by this case (first the anomalous ones, then the symptoms,
    /// then fillers). Shared across cases to give knowledge-base overlap.
    pub kpi_name_pool: Vec<String>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.f == 0 || self.t_slots < 2 {
            return Err(Error::InvalidParameter("need f >= 1 and t_slots >= 2".into()));
        }
        if self.n_anomalous_features == 0 {
            return Err(Error::InvalidParameter(
                "need at least one anomalous feature (metrics are undefined otherwise)".into(),
            ));
        }
        if self.n_anomalous_features + self.n_symptom_features > self.f {
            return Err(Error::InvalidParameter(
                "anomalous + symptom features exceed f".into(),
            ));
        }
        let (start, len) = self.anomaly_window;
        if len == 0 || start >= self.t_slots || start + len > self.t_slots {
            return Err(Error::InvalidParameter(format!(
                "window ({start},{len}) outside 0..{}",
                self.t_slots
            )));
        }
        if len >= self.t_slots {
            return Err(Error::InvalidParameter(
                "window must leave at least one normal slot".into(),
            ));
        }
        if !self.shift_magnitude.is_finite() || self.shift_magnitude <= 0.0 {
            return Err(Error::InvalidParameter("shift_magnitude must be positive".into()));
        }
        if self.kpi_name_pool.len() < self.f {
            return Err(Error::InvalidParameter(format!(
                "name pool holds {} names, need {}",
                self.kpi_name_pool.len(),
                self.f
            )));
        }
        Ok(())
    }
}

/// Generate one labeled case. Background is independent unit-variance noise
/// per feature (plus a per-feature baseline offset); the first
/// `n_anomalous_features` names get the pattern and the ground-truth flags,
/// the next `n_symptom_features` get the pattern plus 0.5-sigma noise but stay
/// unflagged. Deterministic given the spec.
pub fn generate_case(spec: &SynthSpec, case_id: &str) -> Result<CaseBundle> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.noise_seed, 0);
    let (start, len) = spec.anomaly_window;
    let names: Vec<String> = spec.kpi_name_pool[..spec.f].to_vec();

    let mut values = Vec::with_capacity(spec.f);
    for j in 0..spec.f {
        let baseline: f64 = rng.random_range(-5.0..5.0);
        let mut row: Vec<f64> = (0..spec.t_slots)
            .map(|_| baseline + std_normal(&mut rng))
            .collect();
        let anomalous = j < spec.n_anomalous_features;
        let symptom = !anomalous && j < spec.n_anomalous_features + spec.n_symptom_features;
        if anomalous || symptom {
            for i in 0..len {
                let mut offset = spec.pattern.offset(i, len, spec.shift_magnitude);
                if symptom {
                    offset += 0.5 * std_normal(&mut rng);
                }
                row[start + i] += offset;
            }
        }
        values.push(row);
    }

    let mut flags = vec![vec![false; spec.t_slots]; spec.f];
    for feature_flags in flags.iter_mut().take(spec.n_anomalous_features) {
        for slot in feature_flags.iter_mut().skip(start).take(len) {
            *slot = true;
        }
    }

    let timestamps: Vec<String> = (0..spec.t_slots).map(|i| i.to_string()).collect();
    let dataset = Dataset::new(names, timestamps, values)?;
    let gt = GroundTruth::new(flags, case_id)?;
    CaseBundle::new(dataset, gt, case_id)
}

/// Write `data.csv` and `gt.csv` for a case. Values print with the shortest
/// round-trippable representation so loading reproduces the in-memory bundle
/// exactly.
pub fn write_case(case: &CaseBundle, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let data_path = dir.join("data.csv");
    let gt_path = dir.join("gt.csv");
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };

    let ds = case.dataset();
    let mut data = String::new();
    data.push_str("timestamp");
    for name in ds.feature_names() {
        data.push(',');
        data.push_str(name);
    }
    data.push('\n');
    for (t, ts) in ds.timestamps().iter().enumerate() {
        data.push_str(ts);
        for row in ds.values() {
            data.push(',');
            data.push_str(&format!("{}", row[t]));
        }
        data.push('\n');
    }
    std::fs::File::create(&data_path)
        .and_then(|mut f| f.write_all(data.as_bytes()))
        .map_err(io_err(&data_path))?;

    let mut labels = String::new();
    labels.push_str("timestamp");
    for name in ds.feature_names() {
        labels.push(',');
        labels.push_str(name);
    }
    labels.push('\n');
    for (t, ts) in ds.timestamps().iter().enumerate() {
        labels.push_str(ts);
        for row in case.gt().flags() {
            labels.push(',');
            labels.push(if row[t] { '1' } else { '0' });
        }
        labels.push('\n');
    }
    std::fs::File::create(&gt_path)
        .and_then(|mut f| f.write_all(labels.as_bytes()))
        .map_err(io_err(&gt_path))?;

    Ok((data_path, gt_path))
}

/// Ranges the suite generator samples from. Validation keeps T and F inside
/// the corpus-property envelope of real troubleshooting datasets
/// (T in [211, 10770], F in [6, 373]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub n_cases: usize,
    pub t_range: (usize, usize),
    pub f_range: (usize, usize),
    pub anomalous_range: (usize, usize),
    pub symptom_range: (usize, usize),
    /// Window length as a fraction of T.
    pub window_fraction_range: (f64, f64),
    pub shift_range: (f64, f64),
    pub master_seed: u64,
    /// High KPI-name overlap across cases (shared cause/symptom families), so
    /// leave-one-out knowledge bases become informative.
    pub ek_mode: bool,
}

pub const T_BOUNDS: (usize, usize) = (211, 10_770);
pub const F_BOUNDS: (usize, usize) = (6, 373);

impl SuiteSpec {
    /// Default 28-case suite: compact sizes, short anomaly windows (the
    /// standardized contrast of a shifted window is capped near 1/sqrt(p) for
    /// window fraction p, so narrow windows keep strong shifts separable),
    /// no symptom features, ~<=5% pairwise name overlap.
    pub fn default_suite(master_seed: u64) -> Self {
        SuiteSpec {
            n_cases: 28,
            t_range: (211, 600),
            f_range: (6, 16),
            anomalous_range: (1, 3),
            symptom_range: (0, 0),
            window_fraction_range: (0.002, 0.01),
            shift_range: (9.0, 13.0),
            master_seed,
            ek_mode: false,
        }
    }

    /// EK stress suite: shared cause/symptom KPI families across cases.
    pub fn ek_suite(n_cases: usize, master_seed: u64) -> Self {
        SuiteSpec {
            n_cases,
            t_range: (211, 400),
            f_range: (8, 16),
            anomalous_range: (2, 3),
            symptom_range: (2, 3),
            window_fraction_range: (0.02, 0.1),
            shift_range: (8.0, 12.0),
            master_seed,
            ek_mode: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cases == 0 {
            return Err(Error::InvalidParameter("n_cases must be >= 1".into()));
        }
        let ordered = |(lo, hi): (usize, usize)| lo <= hi;
        if !ordered(self.t_range) || !ordered(self.f_range) || !ordered(self.anomalous_range)
            || !ordered(self.symptom_range)
        {
            return Err(Error::InvalidParameter("range lower bound exceeds upper".into()));
        }
        if self.t_range.0 < T_BOUNDS.0 || self.t_range.1 > T_BOUNDS.1 {
            return Err(Error::InvalidParameter(format!(
                "t_range {:?} outside corpus bounds {T_BOUNDS:?}",
                self.t_range
            )));
        }
        if self.f_range.0 < F_BOUNDS.0 || self.f_range.1 > F_BOUNDS.1 {
            return Err(Error::InvalidParameter(format!(
                "f_range {:?} outside corpus bounds {F_BOUNDS:?}",
                self.f_range
            )));
        }
        if self.anomalous_range.0 == 0 {
            return Err(Error::InvalidParameter("need at least one anomalous feature".into()));
        }
        let (lo, hi) = self.window_fraction_range;
        if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
            return Err(Error::InvalidParameter("window fractions must satisfy 0 < lo <= hi < 1".into()));
        }
        if !(self.shift_range.0 > 0.0 && self.shift_range.0 <= self.shift_range.1) {
            return Err(Error::InvalidParameter("bad shift range".into()));
        }
        Ok(())
    }
}

/// Manifest entry for one generated case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestCase {
    pub case_id: String,
    pub data_path: String,
    pub gt_path: String,
    pub spec: SynthSpec,
}

fn sample_usize(rng: &mut impl Rng, range: (usize, usize)) -> usize {
    rng.random_range(range.0..=range.1)
}

/// Build the per-case spec (names and dimensions) for case `index`.
fn case_spec(suite: &SuiteSpec, index: usize, fresh_name_counter: &mut usize) -> SynthSpec {
    let mut rng = seeded_rng(suite.master_seed, 2 * index as u64);
    let t_slots = sample_usize(&mut rng, suite.t_range);
    let f = sample_usize(&mut rng, suite.f_range);

    // keep the anomalous-KPI fraction inside the corpus envelope (<= 0.375)
    let max_anom = ((f as f64 * 0.375).floor() as usize).max(1);
    let n_anomalous = sample_usize(&mut rng, suite.anomalous_range).min(max_anom);
    let n_symptom = sample_usize(&mut rng, suite.symptom_range).min(f - n_anomalous);

    let frac = rng.random_range(suite.window_fraction_range.0..=suite.window_fraction_range.1);
    let len = ((t_slots as f64 * frac).round() as usize).clamp(1, t_slots - 1);
    let start = rng.random_range(0..=(t_slots - len - 1));
    let shift = rng.random_range(suite.shift_range.0..=suite.shift_range.1);
    let pattern = match index % 3 {
        0 => AnomalyPattern::LevelShift,
        1 => AnomalyPattern::Spike,
        _ => AnomalyPattern::Ramp,
    };

    let kpi_name_pool = if suite.ek_mode {
        // shared families: every case flags the same cause names and leaves
        // the same symptom names unflagged, so rates transfer across cases
        let mut pool: Vec<String> = (0..n_anomalous).map(|i| format!("cause_{i:02}")).collect();
        pool.extend((0..n_symptom).map(|i| format!("symptom_{i:02}")));
        let n_shared_fill = (f - pool.len()).min(6);
        pool.extend((0..n_shared_fill).map(|i| format!("common_{i:02}")));
        while pool.len() < f {
            pool.push(format!("kpi_{:05}", *fresh_name_counter));
            *fresh_name_counter += 1;
        }
        pool
    } else {
        // mostly fresh names plus at most one shared name (~<=5% overlap),
        // shuffled so anomalous roles land at random alphabetical positions
        let mut pool: Vec<String> = Vec::with_capacity(f);
        let n_shared = ((f as f64) * 0.04).floor() as usize;
        pool.extend((0..n_shared).map(|i| format!("common_{i:02}")));
        while pool.len() < f {
            pool.push(format!("kpi_{:05}", *fresh_name_counter));
            *fresh_name_counter += 1;
        }
        use rand::seq::SliceRandom;
        pool.shuffle(&mut rng);
        pool
    };

    SynthSpec {
        f,
        t_slots,
        n_anomalous_features: n_anomalous,
        n_symptom_features: n_symptom,
        anomaly_window: (start, len),
        shift_magnitude: shift,
        pattern,
        noise_seed: derive_seed(suite.master_seed, 2 * index as u64 + 1),
        kpi_name_pool,
    }
}

/// Generate a suite; when `out_dir` is given, write one directory per case
/// plus `suite_manifest.json` (sorted keys).
pub fn generate_suite(suite: &SuiteSpec, out_dir: Option<&Path>) -> Result<Vec<CaseBundle>> {
    suite.validate()?;
    let mut cases = Vec::with_capacity(suite.n_cases);
    let mut manifest_cases = Vec::with_capacity(suite.n_cases);
    let mut fresh_name_counter = 0usize;
    for index in 0..suite.n_cases {
        let spec = case_spec(suite, index, &mut fresh_name_counter);
        let case_id = format!("case_{index:03}");
        let case = generate_case(&spec, &case_id)?;
        if let Some(dir) = out_dir {
            let case_dir = dir.join(&case_id);
            let (data_path, gt_path) = write_case(&case, &case_dir)?;
            manifest_cases.push(ManifestCase {
                case_id: case_id.clone(),
                data_path: relative_to(&data_path, dir),
                gt_path: relative_to(&gt_path, dir),
                spec,
            });
        }
        cases.push(case);
    }
    if let Some(dir) = out_dir {
        let manifest = serde_json::json!({
            "n_cases": suite.n_cases,
            "master_seed": suite.master_seed,
            "ek_mode": suite.ek_mode,
            "cases": serde_json::to_value(&manifest_cases)
                .map_err(|e| Error::InvalidData(format!("manifest: {e}")))?,
        });
        let path = dir.join("suite_manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::InvalidData(format!("manifest: {e}")))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|source| Error::Io { path, source })?;
    }
    Ok(cases)
}

fn relative_to(path: &Path, base: &Path) -> String {
    path.strip_prefix(base)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}
