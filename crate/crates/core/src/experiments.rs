//! Simulation studies: rejection rates of the tests over generated scenes,
//! and the growth of the statistics' variance with the window size.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, ErrorClass, Result};
use crate::geometry::{Marks, Window};
use crate::procgen::{generate_model_with, simulate_poisson, GeneratedScene, ModelId, ModelSpec, SceneOptions};
use crate::randfield::{simulate_grf_pair, CorrelationFamily, CorrelationModel, FieldSpec, GridGeometry};
use crate::seeds;
use crate::shifttest::{run_shift_test, schlather_test, Correction, TestConfig, DEFAULT_SCHLATHER_SIMS};
use crate::stats::{field_at_points, stat_kendall, stat_mean_at_points, SchlatherSettings, StatisticKind};

pub const DESK_REPS: usize = 500;
pub const DESK_SHIFTS: usize = 199;
pub const FULL_REPS: usize = 5000;
pub const FULL_SHIFTS: usize = 999;
pub const MIN_REPS: usize = 50;
pub const ALPHA_GRID: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
pub const VARIANCE_SIDES: [f64; 8] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0];
pub const VARIANCE_SCALES: [f64; 3] = [0.05, 0.10, 0.20];
pub const VARIANCE_INTENSITY: f64 = 100.0;
/// Share of aborted replicates above which a cell is flagged.
pub const ABORT_WARNING_SHARE: f64 = 0.01;

/// One row of a rejection table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestVariant {
    PmSchlather,
    PcTorus,
    PcVariance,
    PcSchlather,
    PmcTorusCov,
    PmcVarianceCov,
    PmcTorusPea,
    PmcVariancePea,
    PmcTorusKen,
    PmcVarianceKen,
}

impl TestVariant {
    pub const ALL: [TestVariant; 10] = [
        TestVariant::PmSchlather,
        TestVariant::PcTorus,
        TestVariant::PcVariance,
        TestVariant::PcSchlather,
        TestVariant::PmcTorusCov,
        TestVariant::PmcVarianceCov,
        TestVariant::PmcTorusPea,
        TestVariant::PmcVariancePea,
        TestVariant::PmcTorusKen,
        TestVariant::PmcVarianceKen,
    ];

    /// Roster of the detailed studies: the P-M and P-C reference rows and
    /// all six PM-C variants.
    pub const DETAILED: [TestVariant; 8] = [
        TestVariant::PmSchlather,
        TestVariant::PcVariance,
        TestVariant::PmcTorusCov,
        TestVariant::PmcVarianceCov,
        TestVariant::PmcTorusPea,
        TestVariant::PmcVariancePea,
        TestVariant::PmcTorusKen,
        TestVariant::PmcVarianceKen,
    ];

    pub fn id(&self) -> u64 {
        *self as u64 + 1
    }

    /// Kebab-case name, as used in file names and on the command line.
    pub fn slug(&self) -> String {
        serde_json::to_value(self).ok().and_then(|j| j.as_str().map(str::to_string)).unwrap_or_default()
    }

    pub fn label(&self) -> &'static str {
        match self {
            TestVariant::PmSchlather => "P-M (Schlather)",
            TestVariant::PcTorus => "P-C (torus)",
            TestVariant::PcVariance => "P-C (variance)",
            TestVariant::PcSchlather => "P-C (Schlather)",
            TestVariant::PmcTorusCov => "PM-C (torus, cov)",
            TestVariant::PmcVarianceCov => "PM-C (variance, cov)",
            TestVariant::PmcTorusPea => "PM-C (torus, Pea)",
            TestVariant::PmcVariancePea => "PM-C (variance, Pea)",
            TestVariant::PmcTorusKen => "PM-C (torus, Ken)",
            TestVariant::PmcVarianceKen => "PM-C (variance, Ken)",
        }
    }

    /// Statistic and correction of the random shift variants.
    pub fn shift_setup(&self) -> Option<(StatisticKind, Correction)> {
        use Correction::*;
        use StatisticKind::*;
        Some(match self {
            TestVariant::PcTorus => (MeanAtPoints, Torus),
            TestVariant::PcVariance => (MeanAtPoints, Variance),
            TestVariant::PmcTorusCov => (Covariance, Torus),
            TestVariant::PmcVarianceCov => (Covariance, Variance),
            TestVariant::PmcTorusPea => (Pearson, Torus),
            TestVariant::PmcVariancePea => (Pearson, Variance),
            TestVariant::PmcTorusKen => (Kendall, Torus),
            TestVariant::PmcVarianceKen => (Kendall, Variance),
            TestVariant::PmSchlather | TestVariant::PcSchlather => return None,
        })
    }

    /// Runs the test on `scene` and returns its p-value.
    pub fn p_value(&self, scene: &GeneratedScene, n_shifts: usize, schlather_sims: usize, seed: u64) -> Result<f64> {
        let settings = SchlatherSettings::default();
        match self {
            TestVariant::PmSchlather => Ok(schlather_test(&scene.pattern, schlather_sims, seed, &settings)?.0.p_value),
            TestVariant::PcSchlather => {
                let z = field_at_points(&scene.pattern, &scene.covariate)?;
                let p = scene.pattern.clone().with_marks(Marks::Numeric { values: z })?;
                Ok(schlather_test(&p, schlather_sims, seed, &settings)?.0.p_value)
            }
            _ => {
                let (statistic, correction) = self.shift_setup().expect("shift variant");
                let cfg = TestConfig::new(statistic, correction, seed).with_shifts(n_shifts);
                Ok(run_shift_test(&scene.pattern, &scene.covariate, &cfg)?.p_value)
            }
        }
    }
}

impl std::str::FromStr for TestVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestVariant::ALL
            .into_iter()
            .find(|v| v.label().eq_ignore_ascii_case(s.trim()) || v.slug() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown test variant {s:?}")))
    }
}

/// Exact binomial (Clopper–Pearson) interval with coverage `1 - alpha`.
pub fn clopper_pearson(successes: usize, trials: usize, alpha: f64) -> Result<(f64, f64)> {
    if trials == 0 || successes > trials {
        return Err(Error::Config(format!("invalid binomial count {successes}/{trials}")));
    }
    let (x, n) = (successes as f64, trials as f64);
    let beta = |a: f64, b: f64| Beta::new(a, b).map_err(|e| Error::Numeric(e.to_string()));
    let lo = if successes == 0 { 0.0 } else { beta(x, n - x + 1.0)?.inverse_cdf(alpha / 2.0) };
    let hi = if successes == trials { 1.0 } else { beta(x + 1.0, n - x)?.inverse_cdf(1.0 - alpha / 2.0) };
    Ok((lo, hi))
}

/// Replicate counts and scene settings shared by the cells of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSettings {
    pub n_reps: usize,
    pub n_shifts: usize,
    pub level: f64,
    pub schlather_sims: usize,
    pub scene: SceneOptions,
}

impl Default for CellSettings {
    fn default() -> Self {
        CellSettings {
            n_reps: DESK_REPS,
            n_shifts: DESK_SHIFTS,
            level: 0.05,
            schlather_sims: DEFAULT_SCHLATHER_SIMS,
            scene: SceneOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub model: ModelId,
    pub alpha: f64,
    pub variant: TestVariant,
    pub seed: u64,
    pub n_reps: usize,
    pub rejections: usize,
    pub aborted: usize,
    pub rate: f64,
    pub lo: f64,
    pub hi: f64,
    /// One entry per replicate; `None` where the replicate aborted.
    pub p_values: Vec<Option<f64>>,
}

impl CellResult {
    pub fn completed(&self) -> usize {
        self.n_reps - self.aborted
    }

    pub fn abort_warning(&self) -> bool {
        self.aborted as f64 > ABORT_WARNING_SHARE * self.n_reps as f64
    }
}

/// Seed of the cell `(model, alpha, variant)` below `master`.
pub fn cell_seed(master: u64, model: ModelId, alpha: f64, variant: TestVariant) -> u64 {
    seeds::derive(master, &[model.number(), seeds::f64_tag(alpha), variant.id()])
}

/// Failures that make a single replicate unusable without invalidating the cell.
fn is_abort(e: &Error) -> bool {
    e.class() == ErrorClass::Numeric || matches!(e, Error::InsufficientPoints(_) | Error::DegenerateSample(_))
}

/// Generates `n_reps` scenes of `model` at `alpha`, runs `variant` on each
/// and reports the share of p-values at or below `level`.
pub fn rejection_rate(
    model: ModelId,
    alpha: f64,
    variant: TestVariant,
    settings: &CellSettings,
    seed: u64,
) -> Result<CellResult> {
    if settings.n_reps == 0 {
        return Err(Error::Config("a cell needs at least one replicate".into()));
    }
    if !(settings.level > 0.0 && settings.level <= 1.0) {
        return Err(Error::Config(format!("level must lie in (0, 1], got {}", settings.level)));
    }
    let p_values: Vec<Option<f64>> = (0..settings.n_reps as u64)
        .into_par_iter()
        .map(|r| {
            let spec = ModelSpec::new(model, alpha, seeds::derive(seed, &[r, 0]))?;
            let run = || -> Result<f64> {
                let scene = generate_model_with(&spec, &settings.scene)?;
                variant.p_value(&scene, settings.n_shifts, settings.schlather_sims, seeds::derive(seed, &[r, 1]))
            };
            match run() {
                Ok(p) => Ok(Some(p)),
                Err(e) if is_abort(&e) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let done: Vec<f64> = p_values.iter().flatten().copied().collect();
    if done.is_empty() {
        return Err(Error::Numeric(format!("every replicate of {model} / {} aborted", variant.label())));
    }
    let rejections = done.iter().filter(|&&p| p <= settings.level).count();
    let (lo, hi) = clopper_pearson(rejections, done.len(), 0.05)?;
    Ok(CellResult {
        model,
        alpha,
        variant,
        seed,
        n_reps: settings.n_reps,
        rejections,
        aborted: settings.n_reps - done.len(),
        rate: rejections as f64 / done.len() as f64,
        lo,
        hi,
        p_values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub model: ModelId,
    pub alpha: f64,
}

impl Column {
    pub fn label(&self, with_alpha: bool) -> String {
        if with_alpha {
            format!("{} alpha={:.1}", self.model, self.alpha)
        } else {
            self.model.to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionTable {
    pub rows: Vec<TestVariant>,
    pub columns: Vec<Column>,
    /// `cells[row][column]`.
    pub cells: Vec<Vec<CellResult>>,
    pub with_alpha: bool,
}

impl RejectionTable {
    pub fn cell(&self, variant: TestVariant, model: ModelId, alpha: f64) -> Option<&CellResult> {
        let r = self.rows.iter().position(|v| *v == variant)?;
        let c = self.columns.iter().position(|c| c.model == model && c.alpha == alpha)?;
        Some(&self.cells[r][c])
    }

    /// One row per test, one column per model (and alpha); cells read `rate,lo,hi`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["test".to_string()];
        header.extend(self.columns.iter().map(|c| c.label(self.with_alpha)));
        w.write_record(&header).map_err(csv_err)?;
        for (variant, row) in self.rows.iter().zip(&self.cells) {
            let mut rec = vec![variant.label().to_string()];
            rec.extend(row.iter().map(|c| format!("{:.3},{:.3},{:.3}", c.rate, c.lo, c.hi)));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Numeric(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceKind {
    /// Mean covariate value at Poisson points.
    PcMean,
    /// Kendall's tau between marks and covariate, both spherical.
    PmcKendallEqual,
    /// Kendall's tau with spherical marks and an exponential covariate.
    PmcKendallUnequal,
}

impl VarianceKind {
    pub const ALL: [VarianceKind; 3] = [VarianceKind::PcMean, VarianceKind::PmcKendallEqual, VarianceKind::PmcKendallUnequal];

    fn id(&self) -> u64 {
        *self as u64 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariancePoint {
    pub side: f64,
    pub scale: f64,
    /// `a^2` times the sample variance of the statistic.
    pub value: f64,
    pub n_reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceCurve {
    pub kind: VarianceKind,
    pub points: Vec<VariancePoint>,
}

impl VarianceCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("a,scale,value\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", p.side, p.scale, p.value));
        }
        s
    }

    /// Largest over smallest value among the points at `scale` with side in `sides`.
    pub fn max_min_ratio(&self, scale: f64, sides: &[f64]) -> Option<f64> {
        let v: Vec<f64> = self
            .points
            .iter()
            .filter(|p| p.scale == scale && sides.contains(&p.side))
            .map(|p| p.value)
            .collect();
        if v.is_empty() {
            return None;
        }
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        Some(max / min)
    }
}

/// Grid cell for the variance study: at least 128 cells per side and at
/// least 6.4 cells per correlation scale, so the sampled surface does not
/// get smoother as the window grows.
fn variance_cell(side: f64, scale: f64) -> f64 {
    (side / 128.0).min(scale / 6.4)
}

/// `a^2 * var(T)` over `n_reps` independent Poisson scenes on `[0, a]^2`.
pub fn variance_point(kind: VarianceKind, side: f64, scale: f64, n_reps: usize, seed: u64) -> Result<VariancePoint> {
    if n_reps < 2 {
        return Err(Error::Config("variance needs at least two replicates".into()));
    }
    let window = Window::square(side)?;
    let grid = GridGeometry::with_cell_size(&window.bounding_box(), variance_cell(side, scale))?;
    let spherical = FieldSpec::standard(CorrelationModel::new(CorrelationFamily::Spherical, scale)?);
    let exponential = FieldSpec::standard(CorrelationModel::new(CorrelationFamily::Exponential, scale)?);
    let values: Vec<f64> = (0..n_reps as u64)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let pattern = simulate_poisson(VARIANCE_INTENSITY, &window, seeds::derive(seed, &[r, 0]))?;
            match kind {
                VarianceKind::PcMean => {
                    // both halves of a simulated pair serve consecutive replicates
                    let (a, b) = simulate_grf_pair(&spherical, &grid, &window, seeds::derive(seed, &[r / 2, 1]))?;
                    stat_mean_at_points(&pattern, if r % 2 == 0 { &a } else { &b })
                }
                VarianceKind::PmcKendallEqual => {
                    let (m, z) = simulate_grf_pair(&spherical, &grid, &window, seeds::derive(seed, &[r, 2]))?;
                    stat_kendall(&field_at_points(&pattern, &m)?, &field_at_points(&pattern, &z)?)
                }
                VarianceKind::PmcKendallUnequal => {
                    let (m, _) = simulate_grf_pair(&spherical, &grid, &window, seeds::derive(seed, &[r, 3]))?;
                    let (z, _) = simulate_grf_pair(&exponential, &grid, &window, seeds::derive(seed, &[r, 4]))?;
                    stat_kendall(&field_at_points(&pattern, &m)?, &field_at_points(&pattern, &z)?)
                }
            }
        })
        .collect::<Result<_>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(VariancePoint { side, scale, value: side * side * var, n_reps })
}

fn variance_seed(master: u64, kind: VarianceKind, side: f64, scale: f64) -> u64 {
    seeds::derive(master, &[kind.id(), seeds::f64_tag(side), seeds::f64_tag(scale)])
}

/// Variance curve of `kind` over the given window sides and scales.
pub fn variance_order_study(
    kind: VarianceKind,
    sides: &[f64],
    scales: &[f64],
    n_reps: usize,
    seed: u64,
) -> Result<VarianceCurve> {
    let mut points = Vec::new();
    for &scale in scales {
        for &side in sides {
            points.push(variance_point(kind, side, scale, n_reps, variance_seed(seed, kind, side, scale))?);
        }
    }
    Ok(VarianceCurve { kind, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    Overall,
    Preferential,
    Marking,
    VarianceOrder,
}

impl std::str::FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "overall" => Ok(StudyKind::Overall),
            "preferential" => Ok(StudyKind::Preferential),
            "marking" => Ok(StudyKind::Marking),
            "variance-order" => Ok(StudyKind::VarianceOrder),
            _ => Err(Error::Config(format!("unknown study {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub kind: StudyKind,
    pub n_reps: usize,
    pub n_shifts: usize,
    pub level: f64,
    /// `None` uses the study's default roster.
    pub roster: Option<Vec<TestVariant>>,
    pub alphas: Vec<f64>,
    pub seed: u64,
    pub schlather_sims: usize,
    pub scene: SceneOptions,
    pub variance_kinds: Vec<VarianceKind>,
    pub sides: Vec<f64>,
    pub scales: Vec<f64>,
    /// Worker threads; `None` uses all cores. Not part of the config hash.
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl StudyConfig {
    pub fn desk(kind: StudyKind, seed: u64) -> Self {
        StudyConfig {
            kind,
            n_reps: if kind == StudyKind::VarianceOrder { 2000 } else { DESK_REPS },
            n_shifts: DESK_SHIFTS,
            level: 0.05,
            roster: None,
            alphas: ALPHA_GRID.to_vec(),
            seed,
            schlather_sims: DEFAULT_SCHLATHER_SIMS,
            scene: SceneOptions::default(),
            variance_kinds: VarianceKind::ALL.to_vec(),
            sides: VARIANCE_SIDES.to_vec(),
            scales: VARIANCE_SCALES.to_vec(),
            workers: None,
        }
    }

    pub fn full(kind: StudyKind, seed: u64) -> Self {
        let mut c = Self::desk(kind, seed);
        c.n_reps = FULL_REPS;
        c.n_shifts = FULL_SHIFTS;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_reps < MIN_REPS {
            return Err(Error::Config(format!("need at least {MIN_REPS} replications, got {}", self.n_reps)));
        }
        if !(self.level > 0.0 && self.level <= 1.0) {
            return Err(Error::Config(format!("level must lie in (0, 1], got {}", self.level)));
        }
        if let Some(a) = self.alphas.iter().find(|a| !ALPHA_GRID.contains(a)) {
            return Err(Error::Config(format!("alpha {a} is not on the grid 0.0, 0.2, ..., 1.0")));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("worker count must be positive".into()));
        }
        if self.kind == StudyKind::VarianceOrder
            && (self.sides.iter().chain(&self.scales).any(|v| !(*v > 0.0)) || self.variance_kinds.is_empty())
        {
            return Err(Error::Config("variance study needs positive sides and scales".into()));
        }
        Ok(())
    }

    pub fn roster(&self) -> Vec<TestVariant> {
        self.roster.clone().unwrap_or_else(|| match self.kind {
            StudyKind::Overall => TestVariant::ALL.to_vec(),
            _ => TestVariant::DETAILED.to_vec(),
        })
    }

    pub fn columns(&self) -> Vec<Column> {
        let with = |models: &[ModelId]| -> Vec<Column> {
            models
                .iter()
                .flat_map(|&model| self.alphas.iter().map(move |&alpha| Column { model, alpha }))
                .collect()
        };
        match self.kind {
            StudyKind::Overall => ModelId::ALL[..8].iter().map(|&model| Column { model, alpha: 0.0 }).collect(),
            StudyKind::Preferential => with(&[ModelId::M9, ModelId::M10]),
            StudyKind::Marking => with(&[ModelId::M11, ModelId::M12]),
            StudyKind::VarianceOrder => Vec::new(),
        }
    }

    pub fn cell_settings(&self) -> CellSettings {
        CellSettings {
            n_reps: self.n_reps,
            n_shifts: self.n_shifts,
            level: self.level,
            schlather_sims: self.schlather_sims,
            scene: self.scene.clone(),
        }
    }

    /// SHA-256 over the canonical JSON of everything that affects results.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "output", rename_all = "kebab-case")]
pub enum StudyOutput {
    Table(RejectionTable),
    Curves { curves: Vec<VarianceCurve> },
}

impl StudyOutput {
    pub fn to_csv(&self) -> Result<String> {
        match self {
            StudyOutput::Table(t) => t.to_csv(),
            StudyOutput::Curves { curves } => {
                let mut s = String::from("kind,a,scale,value\n");
                for c in curves {
                    let kind = serde_json::to_value(c.kind)?;
                    for p in &c.points {
                        s.push_str(&format!("{},{},{},{}\n", kind.as_str().unwrap_or(""), p.side, p.scale, p.value));
                    }
                }
                Ok(s)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub label: String,
    pub seed: u64,
    pub seconds: f64,
    pub aborted: usize,
    pub cached: bool,
}

/// Machine-readable account of a study run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyManifest {
    pub config: StudyConfig,
    pub config_hash: String,
    pub workers: usize,
    pub cells: Vec<CellRecord>,
    pub warnings: Vec<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRun {
    pub output: StudyOutput,
    pub manifest: StudyManifest,
}

/// On-disk store of finished cells, keyed by the study's config hash.
struct CellCache {
    dir: PathBuf,
    hash: String,
}

#[derive(Serialize, Deserialize)]
struct CacheStamp {
    config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct CachedCell<T> {
    config_hash: String,
    cell: T,
}

impl CellCache {
    fn open(dir: &Path, hash: &str) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let stamp = dir.join("study.json");
        if stamp.exists() {
            let s: CacheStamp = serde_json::from_slice(&fs::read(&stamp)?)?;
            if s.config_hash != hash {
                return Err(Error::StaleCache(format!(
                    "{} holds cells for config {}, current config is {hash}",
                    dir.display(),
                    s.config_hash
                )));
            }
        } else {
            write_atomic(&stamp, &serde_json::to_vec_pretty(&CacheStamp { config_hash: hash.to_string() })?)?;
        }
        Ok(CellCache { dir: dir.to_path_buf(), hash: hash.to_string() })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("cell-{key}.json"))
    }

    fn load<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Result<Option<T>> {
        let p = self.path(key);
        if !p.exists() {
            return Ok(None);
        }
        let c: CachedCell<T> = serde_json::from_slice(&fs::read(&p)?)?;
        if c.config_hash != self.hash {
            return Err(Error::StaleCache(format!("{} was written for config {}", p.display(), c.config_hash)));
        }
        Ok(Some(c.cell))
    }

    fn store<T: Serialize>(&self, key: &str, cell: &T) -> Result<()> {
        let c = CachedCell { config_hash: self.hash.clone(), cell };
        write_atomic(&self.path(key), &serde_json::to_vec(&c)?)
    }
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn cell_key(col: &Column, variant: TestVariant) -> String {
    format!("{}-a{:.1}-{}", col.model, col.alpha, variant.slug())
}

/// Runs a study, reusing finished cells from `cache_dir` when given.
pub fn run_study(config: &StudyConfig, cache_dir: Option<&Path>) -> Result<StudyRun> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| run_study_in_pool(config, cache_dir, pool.current_num_threads()))
}

fn run_study_in_pool(config: &StudyConfig, cache_dir: Option<&Path>, workers: usize) -> Result<StudyRun> {
    let started = Instant::now();
    let hash = config.hash();
    let cache = cache_dir.map(|d| CellCache::open(d, &hash)).transpose()?;
    let mut records = Vec::new();
    let mut warnings = Vec::new();

    let output = if config.kind == StudyKind::VarianceOrder {
        let mut curves = Vec::new();
        for &kind in &config.variance_kinds {
            let mut points = Vec::new();
            for &scale in &config.scales {
                for &side in &config.sides {
                    let kind_name = serde_json::to_value(kind)?.as_str().unwrap_or("").to_string();
                    let key = format!("{kind_name}-s{scale}-a{side}");
                    let seed = variance_seed(config.seed, kind, side, scale);
                    let t = Instant::now();
                    let cached = match &cache {
                        Some(c) => c.load::<VariancePoint>(&key)?,
                        None => None,
                    };
                    let hit = cached.is_some();
                    let point = match cached {
                        Some(p) => p,
                        None => {
                            let p = variance_point(kind, side, scale, config.n_reps, seed)?;
                            if let Some(c) = &cache {
                                c.store(&key, &p)?;
                            }
                            p
                        }
                    };
                    records.push(CellRecord {
                        label: key,
                        seed,
                        seconds: t.elapsed().as_secs_f64(),
                        aborted: 0,
                        cached: hit,
                    });
                    points.push(point);
                }
            }
            curves.push(VarianceCurve { kind, points });
        }
        StudyOutput::Curves { curves }
    } else {
        let settings = config.cell_settings();
        let rows = config.roster();
        let columns = config.columns();
        let mut cells = Vec::with_capacity(rows.len());
        for &variant in &rows {
            let mut row = Vec::with_capacity(columns.len());
            for col in &columns {
                let key = cell_key(col, variant);
                let seed = cell_seed(config.seed, col.model, col.alpha, variant);
                let t = Instant::now();
                let cached = match &cache {
                    Some(c) => c.load::<CellResult>(&key)?,
                    None => None,
                };
                let hit = cached.is_some();
                let cell = match cached {
                    Some(c) => c,
                    None => {
                        let c = rejection_rate(col.model, col.alpha, variant, &settings, seed)?;
                        if let Some(cache) = &cache {
                            cache.store(&key, &c)?;
                        }
                        c
                    }
                };
                if cell.abort_warning() {
                    warnings.push(format!(
                        "{} / {}: {} of {} replicates aborted",
                        col.label(true),
                        variant.label(),
                        cell.aborted,
                        cell.n_reps
                    ));
                }
                records.push(CellRecord {
                    label: key,
                    seed,
                    seconds: t.elapsed().as_secs_f64(),
                    aborted: cell.aborted,
                    cached: hit,
                });
                row.push(cell);
            }
            cells.push(row);
        }
        StudyOutput::Table(RejectionTable { rows, columns, cells, with_alpha: config.kind != StudyKind::Overall })
    };

    Ok(StudyRun {
        output,
        manifest: StudyManifest {
            config: config.clone(),
            config_hash: hash,
            workers,
            cells: records,
            warnings,
            seconds: started.elapsed().as_secs_f64(),
        },
    })
}
