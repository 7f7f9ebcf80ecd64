//! Random shift Monte Carlo tests.
//!
//! The pattern (with its marks) is shifted against the fixed covariate
//! field and the test statistic recomputed for every shift. Two corrections
//! for edge effects are available: the torus correction wraps the pattern
//! around a rectangular window, the variance correction drops points shifted
//! outside the window and standardizes each replicate by the square root of
//! its retained point count.
//!
//! Replicate `i` draws from its own stream derived from `(seed, i)`, so
//! results do not depend on evaluation order or thread count.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MarkedPointPattern, ShiftVector, Window};
use crate::randfield::CovariateField;
use crate::seeds;
use crate::stats::{
    estimate_e, field_at_points, fit_exponential_variogram, level_means, normal_scores, pairwise_differences,
    schlather_statistic, stat_kendall, stat_mean_at_points, stat_pearson, stat_sample_cov, SchlatherSettings,
    StatisticKind, VariogramFit,
};

pub const DEFAULT_N_SHIFTS: usize = 999;
pub const MIN_N_SHIFTS: usize = 19;
pub const DEFAULT_N_MIN: usize = 5;
pub const MAX_REDRAWS: usize = 100;
pub const DEFAULT_SCHLATHER_SIMS: usize = 99;
/// Replicates whose extreme rank length p-value is at most this level are
/// left out of the envelope.
pub const ENVELOPE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShiftDistribution {
    /// Uniform on `[0, width) x [0, height)` of the window's bounding box.
    UniformOnWindow,
    UniformOnDisc { radius: f64 },
}

impl ShiftDistribution {
    /// Uniform on the window for the torus correction, otherwise uniform on
    /// the disc of radius half the window's shorter side.
    pub fn default_for(correction: Correction, window: &Window) -> Self {
        match correction {
            Correction::Torus => ShiftDistribution::UniformOnWindow,
            Correction::Variance => ShiftDistribution::UniformOnDisc { radius: window.shorter_side() / 2.0 },
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ShiftDistribution::UniformOnDisc { radius } if !(radius > 0.0 && radius.is_finite()) => {
                Err(Error::Config(format!("shift radius must be positive, got {radius}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Correction {
    Torus,
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    TwoSided,
    OneSidedUpper,
}

impl Sidedness {
    pub fn default_for(statistic: StatisticKind) -> Self {
        match statistic {
            StatisticKind::SchlatherE => Sidedness::OneSidedUpper,
            _ => Sidedness::TwoSided,
        }
    }

    fn extremeness(&self, centred: f64) -> f64 {
        match self {
            Sidedness::TwoSided => centred.abs(),
            Sidedness::OneSidedUpper => centred,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub n_shifts: usize,
    pub correction: Correction,
    pub statistic: StatisticKind,
    /// `None` picks [`ShiftDistribution::default_for`].
    pub shift: Option<ShiftDistribution>,
    /// `None` picks [`Sidedness::default_for`].
    pub sidedness: Option<Sidedness>,
    pub n_min: usize,
    pub seed: u64,
}

impl TestConfig {
    pub fn new(statistic: StatisticKind, correction: Correction, seed: u64) -> Self {
        TestConfig {
            n_shifts: DEFAULT_N_SHIFTS,
            correction,
            statistic,
            shift: None,
            sidedness: None,
            n_min: DEFAULT_N_MIN,
            seed,
        }
    }

    pub fn with_shifts(mut self, n: usize) -> Self {
        self.n_shifts = n;
        self
    }

    pub fn shift_distribution(&self, window: &Window) -> ShiftDistribution {
        self.shift.unwrap_or_else(|| ShiftDistribution::default_for(self.correction, window))
    }

    pub fn resolved_sidedness(&self) -> Sidedness {
        self.sidedness.unwrap_or_else(|| Sidedness::default_for(self.statistic))
    }

    pub fn validate(&self, window: &Window) -> Result<()> {
        if self.n_shifts < MIN_N_SHIFTS {
            return Err(Error::Config(format!("need at least {MIN_N_SHIFTS} shifts, got {}", self.n_shifts)));
        }
        if self.n_min < DEFAULT_N_MIN {
            return Err(Error::Config(format!("n_min must be at least {DEFAULT_N_MIN}, got {}", self.n_min)));
        }
        if self.correction == Correction::Torus && !window.is_rectangle() {
            return Err(Error::TorusUnsupported);
        }
        self.shift_distribution(window).validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: StatisticKind,
    pub correction: Option<Correction>,
    pub sidedness: Sidedness,
    pub shift: Option<ShiftDistribution>,
    pub n_shifts: usize,
    pub seed: u64,
    pub t0: f64,
    /// `T_1..T_N`.
    pub replicates: Vec<f64>,
    /// `S_0..S_N` under the variance correction.
    pub standardized: Option<Vec<f64>>,
    /// Retained point counts `n_0..n_N`.
    pub retained: Vec<usize>,
    /// Shifts redrawn because too few points were retained.
    pub redraws: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeResult {
    pub t0: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Extreme rank length p-value of each of `T_0..T_N`; smaller is more extreme.
    pub erl: Vec<f64>,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorTestResult {
    pub statistic: StatisticKind,
    pub correction: Correction,
    pub shift: ShiftDistribution,
    pub n_shifts: usize,
    pub seed: u64,
    /// Statistic vectors `T_1..T_N` as fed to the envelope test.
    pub replicates: Vec<Vec<f64>>,
    /// Total retained point counts `n_0..n_N`.
    pub retained: Vec<usize>,
    pub redraws: usize,
    pub envelope: EnvelopeResult,
}

impl VectorTestResult {
    pub fn p_value(&self) -> f64 {
        self.envelope.p_value
    }
}

/// One draw from `dist`.
pub fn draw_shift_with<R: Rng>(dist: &ShiftDistribution, window: &Window, rng: &mut R) -> ShiftVector {
    match *dist {
        ShiftDistribution::UniformOnWindow => {
            let bb = window.bounding_box();
            ShiftVector::new(rng.random_range(0.0..bb.width()), rng.random_range(0.0..bb.height()))
        }
        ShiftDistribution::UniformOnDisc { radius } => loop {
            let dx = rng.random_range(-radius..=radius);
            let dy = rng.random_range(-radius..=radius);
            if dx * dx + dy * dy <= radius * radius {
                break ShiftVector::new(dx, dy);
            }
        },
    }
}

/// First shift of replicate `index`.
pub fn draw_shift(dist: &ShiftDistribution, window: &Window, seed: u64, index: u64) -> ShiftVector {
    draw_shift_with(dist, window, &mut replicate_rng(seed, index))
}

fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    seeds::rng(seed, &[index])
}

/// `S_i = (T_i - mean(T)) * sqrt(n_i)`, the mean taken over all `N + 1` values.
pub fn variance_correct(t: &[f64], n: &[usize]) -> Result<Vec<f64>> {
    if t.len() != n.len() {
        return Err(Error::LengthMismatch { expected: t.len(), got: n.len() });
    }
    if t.is_empty() {
        return Err(Error::InsufficientPoints("no values to standardize".into()));
    }
    if let Some(i) = n.iter().position(|&c| c == 0) {
        return Err(Error::InsufficientPoints(format!("replicate {i} retains no points")));
    }
    let bar = t.iter().sum::<f64>() / t.len() as f64;
    Ok(t.iter().zip(n).map(|(ti, &ni)| (ti - bar) * (ni as f64).sqrt()).collect())
}

/// `(1 + #{i >= 1 : E_i >= E_0}) / (N + 1)`; ties count as extreme.
pub fn mc_pvalue(values: &[f64]) -> Result<f64> {
    let (e0, rest) = values
        .split_first()
        .ok_or_else(|| Error::Config("p-value needs the observed value".into()))?;
    if rest.is_empty() {
        return Err(Error::Config("p-value needs at least one replicate".into()));
    }
    let k = rest.iter().filter(|&&e| e >= *e0).count();
    Ok((1 + k) as f64 / values.len() as f64)
}

/// `min(1, K * min(p))`.
pub fn bonferroni_combine(p_values: &[f64]) -> Result<f64> {
    if p_values.is_empty() {
        return Err(Error::Config("nothing to combine".into()));
    }
    if let Some(p) = p_values.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::Config(format!("p-value {p} outside (0, 1]")));
    }
    let min = p_values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((p_values.len() as f64 * min).min(1.0))
}

fn is_degenerate(e: &Error) -> bool {
    matches!(e, Error::InsufficientPoints(_) | Error::DegenerateSample(_))
}

fn scalar_statistic(kind: StatisticKind, pattern: &MarkedPointPattern, field: &CovariateField) -> Result<f64> {
    match kind {
        StatisticKind::MeanAtPoints => stat_mean_at_points(pattern, field),
        StatisticKind::Covariance | StatisticKind::Pearson | StatisticKind::Kendall => {
            let m = pattern
                .numeric_marks()
                .ok_or_else(|| Error::Validation(format!("{} needs numeric marks", kind.name())))?;
            let z = field_at_points(pattern, field)?;
            match kind {
                StatisticKind::Covariance => stat_sample_cov(m, &z),
                StatisticKind::Pearson => stat_pearson(m, &z),
                _ => stat_kendall(m, &z),
            }
        }
        other => Err(Error::Config(format!("{} is not a scalar shift-test statistic", other.name()))),
    }
}

fn shifted(pattern: &MarkedPointPattern, correction: Correction, v: ShiftVector) -> Result<MarkedPointPattern> {
    match correction {
        Correction::Torus => pattern.torus_shift(v),
        Correction::Variance => Ok(pattern.crop_shift(v)),
    }
}

/// Runs replicate `index`, redrawing the shift while `eval` reports a
/// degenerate shifted pattern.
fn run_replicate<T>(
    pattern: &MarkedPointPattern,
    correction: Correction,
    dist: &ShiftDistribution,
    n_min: usize,
    seed: u64,
    index: u64,
    eval: &(impl Fn(&MarkedPointPattern) -> Result<T> + Sync),
) -> Result<(T, usize, usize)> {
    let mut rng = replicate_rng(seed, index);
    for redraws in 0..=MAX_REDRAWS {
        let v = draw_shift_with(dist, pattern.window(), &mut rng);
        let p = shifted(pattern, correction, v)?;
        if p.len() < n_min {
            continue;
        }
        match eval(&p) {
            Ok(t) => return Ok((t, p.len(), redraws)),
            Err(e) if is_degenerate(&e) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::DegenerateShift { replicate: index as usize, redraws: MAX_REDRAWS })
}

/// Scalar random shift test for the P-C (mean at points) or PM-C
/// (covariance, Pearson, Kendall) hypotheses.
pub fn run_shift_test(pattern: &MarkedPointPattern, field: &CovariateField, config: &TestConfig) -> Result<TestResult> {
    let window = pattern.window();
    config.validate(window)?;
    let dist = config.shift_distribution(window);
    let sidedness = config.resolved_sidedness();
    if pattern.len() < config.n_min {
        return Err(Error::InsufficientPoints(format!(
            "pattern has {} points, fewer than n_min = {}",
            pattern.len(),
            config.n_min
        )));
    }
    let eval = |p: &MarkedPointPattern| scalar_statistic(config.statistic, p, field);
    let t0 = eval(pattern)?;
    let reps: Vec<(f64, usize, usize)> = (1..=config.n_shifts as u64)
        .into_par_iter()
        .map(|i| run_replicate(pattern, config.correction, &dist, config.n_min, config.seed, i, &eval))
        .collect::<Result<_>>()?;

    let mut t = Vec::with_capacity(reps.len() + 1);
    let mut n = Vec::with_capacity(reps.len() + 1);
    t.push(t0);
    n.push(pattern.len());
    for &(ti, ni, _) in &reps {
        t.push(ti);
        n.push(ni);
    }
    let (centred, standardized) = match config.correction {
        Correction::Variance => {
            let s = variance_correct(&t, &n)?;
            (s.clone(), Some(s))
        }
        Correction::Torus => {
            let bar = t.iter().sum::<f64>() / t.len() as f64;
            (t.iter().map(|x| x - bar).collect(), None)
        }
    };
    let e: Vec<f64> = centred.iter().map(|&c| sidedness.extremeness(c)).collect();
    Ok(TestResult {
        statistic: config.statistic,
        correction: Some(config.correction),
        sidedness,
        shift: Some(dist),
        n_shifts: config.n_shifts,
        seed: config.seed,
        t0,
        replicates: t[1..].to_vec(),
        standardized,
        retained: n,
        redraws: reps.iter().map(|r| r.2).sum(),
        p_value: mc_pvalue(&e)?,
    })
}

/// Statistic and fitted model of the points-marks test on a pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchlatherFit {
    pub variogram: VariogramFit,
    pub t_max: f64,
    pub t0: f64,
}

/// Monte Carlo test of independence between points and numeric marks.
///
/// Marks are transformed to normal scores and an exponential covariance is
/// fitted to them. Each replicate draws a Gaussian vector with that
/// covariance at the observed locations and recomputes the L2 distance
/// between `E(t)` and the replicate's mean mark.
pub fn schlather_test(
    pattern: &MarkedPointPattern,
    n_sims: usize,
    seed: u64,
    settings: &SchlatherSettings,
) -> Result<(TestResult, SchlatherFit)> {
    let marks = pattern
        .numeric_marks()
        .ok_or_else(|| Error::Validation("points-marks test needs numeric marks".into()))?;
    if n_sims < MIN_N_SHIFTS {
        return Err(Error::Config(format!("need at least {MIN_N_SHIFTS} simulations, got {n_sims}")));
    }
    let y = normal_scores(marks)?;
    let t_max = settings.t_max_for(pattern);
    let points = pattern.points();
    let fit = fit_exponential_variogram(points, &y, t_max, settings.variogram_bins)?;
    let grid = settings.t_grid(t_max);
    let h = settings.bandwidth(t_max);
    let stat = |v: &[f64]| -> Result<f64> {
        let mbar = v.iter().sum::<f64>() / v.len() as f64;
        schlather_statistic(&estimate_e(points, v, &grid, h)?, mbar, &grid)
    };
    let t0 = stat(&y)?;

    let n = points.len();
    let jitter = 1e-6 * fit.sill;
    let cov = DMatrix::from_fn(n, n, |i, j| {
        fit.covariance(points[i].dist(&points[j])) + if i == j { jitter } else { 0.0 }
    });
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::Numeric("fitted covariance matrix is not positive definite".into()))?;
    let l = chol.l();
    let reps: Vec<f64> = (1..=n_sims as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i);
            let w = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &l * w;
            stat(x.as_slice())
        })
        .collect::<Result<_>>()?;

    let mut e = Vec::with_capacity(n_sims + 1);
    e.push(t0);
    e.extend_from_slice(&reps);
    let result = TestResult {
        statistic: StatisticKind::SchlatherE,
        correction: None,
        sidedness: Sidedness::OneSidedUpper,
        shift: None,
        n_shifts: n_sims,
        seed,
        t0,
        replicates: reps,
        standardized: None,
        retained: vec![n; n_sims + 1],
        redraws: 0,
        p_value: mc_pvalue(&e)?,
    };
    Ok((result, SchlatherFit { variogram: fit, t_max, t0 }))
}

/// Two-sided pointwise ranks `min(#{j: T_jk <= T_ik}, #{j: T_jk >= T_ik})`
/// over all `N + 1` vectors, each row sorted ascending.
fn sorted_rank_vectors(all: &[&[f64]]) -> Vec<Vec<usize>> {
    let k = all[0].len();
    let mut ranks = vec![Vec::with_capacity(k); all.len()];
    let mut col = vec![0.0; all.len()];
    for c in 0..k {
        for (slot, row) in col.iter_mut().zip(all) {
            *slot = row[c];
        }
        col.sort_by(f64::total_cmp);
        for (i, row) in all.iter().enumerate() {
            let v = row[c];
            let le = col.partition_point(|x| *x <= v);
            let ge = col.len() - col.partition_point(|x| *x < v);
            ranks[i].push(le.min(ge));
        }
    }
    for r in &mut ranks {
        r.sort_unstable();
    }
    ranks
}

/// Global envelope test with the extreme rank length ordering.
pub fn global_envelope_test(t0: &[f64], replicates: &[Vec<f64>]) -> Result<EnvelopeResult> {
    let k = t0.len();
    if k == 0 {
        return Err(Error::Config("envelope test needs at least one component".into()));
    }
    if replicates.len() < MIN_N_SHIFTS {
        return Err(Error::Config(format!(
            "envelope test needs at least {MIN_N_SHIFTS} replicates, got {}",
            replicates.len()
        )));
    }
    if let Some(r) = replicates.iter().find(|r| r.len() != k) {
        return Err(Error::LengthMismatch { expected: k, got: r.len() });
    }
    if t0.iter().chain(replicates.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite statistic in envelope test".into()));
    }
    let all: Vec<&[f64]> = std::iter::once(t0).chain(replicates.iter().map(Vec::as_slice)).collect();
    let ranks = sorted_rank_vectors(&all);
    let mut order: Vec<usize> = (0..ranks.len()).collect();
    order.sort_by(|&a, &b| ranks[a].cmp(&ranks[b]));
    // erl[i] = #{j : R_j <=lex R_i} / (N + 1)
    let total = ranks.len() as f64;
    let mut erl = vec![0.0; ranks.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && ranks[order[j]] == ranks[order[i]] {
            j += 1;
        }
        for &idx in &order[i..j] {
            erl[idx] = j as f64 / total;
        }
        i = j;
    }
    let mut lower = vec![f64::INFINITY; k];
    let mut upper = vec![f64::NEG_INFINITY; k];
    for (r, &p) in replicates.iter().zip(&erl[1..]) {
        if p > ENVELOPE_LEVEL {
            for c in 0..k {
                lower[c] = lower[c].min(r[c]);
                upper[c] = upper[c].max(r[c]);
            }
        }
    }
    Ok(EnvelopeResult { t0: t0.to_vec(), lower, upper, p_value: erl[0], erl })
}

/// Runs a vector-valued shift test. `eval` returns the raw statistic
/// components and the retained count behind each component.
fn run_vector_test(
    pattern: &MarkedPointPattern,
    config: &TestConfig,
    statistic: StatisticKind,
    eval: impl Fn(&MarkedPointPattern) -> Result<(Vec<f64>, Vec<usize>)> + Sync,
    combine: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<VectorTestResult> {
    let window = pattern.window();
    config.validate(window)?;
    let dist = config.shift_distribution(window);
    let t0 = eval(pattern)?;
    let reps: Vec<((Vec<f64>, Vec<usize>), usize, usize)> = (1..=config.n_shifts as u64)
        .into_par_iter()
        .map(|i| run_replicate(pattern, config.correction, &dist, config.n_min, config.seed, i, &eval))
        .collect::<Result<_>>()?;

    let mut raw: Vec<(Vec<f64>, Vec<usize>)> = Vec::with_capacity(reps.len() + 1);
    let mut retained = vec![pattern.len()];
    raw.push(t0);
    let mut redraws = 0;
    for (r, n, d) in reps {
        raw.push(r);
        retained.push(n);
        redraws += d;
    }
    let k = raw[0].0.len();
    let mut vectors: Vec<Vec<f64>> = vec![Vec::with_capacity(k); raw.len()];
    for c in 0..k {
        let t: Vec<f64> = raw.iter().map(|r| r.0[c]).collect();
        let col = match config.correction {
            Correction::Variance => {
                let n: Vec<usize> = raw.iter().map(|r| r.1[c]).collect();
                variance_correct(&t, &n)?
            }
            Correction::Torus => t,
        };
        for (v, x) in vectors.iter_mut().zip(col) {
            v.push(x);
        }
    }
    let vectors: Vec<Vec<f64>> = vectors.iter().map(|v| combine(v)).collect();
    let envelope = global_envelope_test(&vectors[0], &vectors[1..])?;
    Ok(VectorTestResult {
        statistic,
        correction: config.correction,
        shift: dist,
        n_shifts: config.n_shifts,
        seed: config.seed,
        replicates: vectors[1..].to_vec(),
        retained,
        redraws,
        envelope,
    })
}

/// PM-C test for categorical marks: pairwise differences of the per-level
/// mean covariate values (standardized level by level under the variance
/// correction), assessed with the global envelope test.
pub fn multitype_pmc_test(
    pattern: &MarkedPointPattern,
    field: &CovariateField,
    config: &TestConfig,
) -> Result<VectorTestResult> {
    let levels = pattern
        .n_levels()
        .ok_or_else(|| Error::Validation("multitype test needs categorical marks".into()))?;
    if levels < 2 {
        return Err(Error::Validation(format!("multitype test needs at least 2 levels, got {levels}")));
    }
    let n_min = config.n_min;
    let eval = |p: &MarkedPointPattern| -> Result<(Vec<f64>, Vec<usize>)> {
        let (means, counts) = level_means(p, field)?;
        if let Some(k) = counts.iter().position(|&c| c < n_min) {
            return Err(Error::InsufficientPoints(format!(
                "level {} has {} points, fewer than n_min = {n_min}",
                k + 1,
                counts[k]
            )));
        }
        Ok((means, counts))
    };
    run_vector_test(pattern, config, StatisticKind::MultitypeMeanDiffs, eval, pairwise_differences)
}

/// P-C test against several covariates at once: the vector of mean values
/// at the points, assessed with the global envelope test.
pub fn multicovariate_pc_test(
    pattern: &MarkedPointPattern,
    fields: &[&CovariateField],
    config: &TestConfig,
) -> Result<VectorTestResult> {
    if fields.is_empty() {
        return Err(Error::Config("need at least one covariate".into()));
    }
    let eval = |p: &MarkedPointPattern| -> Result<(Vec<f64>, Vec<usize>)> {
        let means = fields.iter().map(|f| stat_mean_at_points(p, f)).collect::<Result<Vec<_>>>()?;
        Ok((means, vec![p.len(); fields.len()]))
    };
    run_vector_test(pattern, config, StatisticKind::MulticovariateMeans, eval, |v| v.to_vec())
}
