//! Test statistics.
//!
//! Scalar statistics compare marks with covariate values sampled at the
//! points (sample covariance, Pearson, Kendall) or average the covariate over
//! the points. Vector statistics extend these to several covariates or to
//! categorical marks. The functional mark statistic `E(t)` and the
//! variogram fit back the simulation-based points-marks test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::geometry::{MarkedPointPattern, Marks, Point};
use crate::randfield::{CorrelationFamily, CovariateField};

/// Below this size Kendall's statistic is computed pair by pair.
const KENDALL_FAST_MIN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticKind {
    MeanAtPoints,
    Covariance,
    Pearson,
    Kendall,
    SchlatherE,
    MultitypeMeanDiffs,
    MulticovariateMeans,
}

impl StatisticKind {
    pub fn name(&self) -> &'static str {
        match self {
            StatisticKind::MeanAtPoints => "mean-at-points",
            StatisticKind::Covariance => "covariance",
            StatisticKind::Pearson => "pearson",
            StatisticKind::Kendall => "kendall",
            StatisticKind::SchlatherE => "schlather-E",
            StatisticKind::MultitypeMeanDiffs => "multitype-mean-diffs",
            StatisticKind::MulticovariateMeans => "multicovariate-means",
        }
    }
}

/// Covariate values at the points of `pattern`.
pub fn field_at_points(pattern: &MarkedPointPattern, field: &CovariateField) -> Result<Vec<f64>> {
    pattern.points().iter().map(|p| field.eval(*p)).collect()
}

/// Mean covariate value over the points.
pub fn stat_mean_at_points(pattern: &MarkedPointPattern, field: &CovariateField) -> Result<f64> {
    if pattern.is_empty() {
        return Err(Error::InsufficientPoints("mean over an empty pattern".into()));
    }
    let mut sum = 0.0;
    for p in pattern.points() {
        sum += field.eval(*p)?;
    }
    Ok(sum / pattern.len() as f64)
}

fn check_pair(m: &[f64], z: &[f64], min: usize) -> Result<()> {
    if m.len() != z.len() {
        return Err(Error::LengthMismatch { expected: m.len(), got: z.len() });
    }
    if m.len() < min {
        return Err(Error::InsufficientPoints(format!("need at least {min} observations, got {}", m.len())));
    }
    if m.iter().chain(z).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSample("non-finite value".into()));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample covariance with the `n - 1` divisor.
pub fn stat_sample_cov(m: &[f64], z: &[f64]) -> Result<f64> {
    check_pair(m, z, 2)?;
    let (mm, mz) = (mean(m), mean(z));
    let s: f64 = m.iter().zip(z).map(|(a, b)| (a - mm) * (b - mz)).sum();
    Ok(s / (m.len() - 1) as f64)
}

/// Pearson's correlation coefficient.
pub fn stat_pearson(m: &[f64], z: &[f64]) -> Result<f64> {
    check_pair(m, z, 3)?;
    let (mm, mz) = (mean(m), mean(z));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in m.iter().zip(z) {
        let (da, db) = (a - mm, b - mz);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateSample("constant sample in Pearson correlation".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn sgn(a: f64, b: f64) -> i64 {
    match a.partial_cmp(&b) {
        Some(std::cmp::Ordering::Greater) => 1,
        Some(std::cmp::Ordering::Less) => -1,
        _ => 0,
    }
}

fn tau_from_sum(sum: i64, n: usize) -> f64 {
    sum as f64 / (n as f64 * (n - 1) as f64)
}

/// Kendall's tau-a over ordered pairs, evaluated pair by pair in O(n^2).
/// Ties contribute zero.
pub fn stat_kendall_reference(m: &[f64], z: &[f64]) -> Result<f64> {
    check_pair(m, z, 2)?;
    let n = m.len();
    let mut s: i64 = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += sgn(m[i], m[j]) * sgn(z[i], z[j]);
        }
    }
    Ok(tau_from_sum(2 * s, n))
}

/// Kendall's tau-a in O(n log n) (Knight's merge-sort count). Produces the
/// same integer pair sum as [`stat_kendall_reference`], so results agree
/// bit for bit, ties included.
pub fn stat_kendall_fast(m: &[f64], z: &[f64]) -> Result<f64> {
    check_pair(m, z, 2)?;
    let n = m.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| m[a].total_cmp(&m[b]).then(z[a].total_cmp(&z[b])));

    let pairs = |t: i64| t * (t - 1) / 2;
    let (mut tied_m, mut tied_both) = (0i64, 0i64);
    let (mut run_m, mut run_both) = (1i64, 1i64);
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        if m[a] == m[b] {
            run_m += 1;
            if z[a] == z[b] {
                run_both += 1;
            } else {
                tied_both += pairs(run_both);
                run_both = 1;
            }
        } else {
            tied_m += pairs(run_m);
            tied_both += pairs(run_both);
            run_m = 1;
            run_both = 1;
        }
    }
    tied_m += pairs(run_m);
    tied_both += pairs(run_both);

    let mut seq: Vec<f64> = idx.iter().map(|&i| z[i]).collect();
    let mut scratch = vec![0.0; n];
    let discordant = count_inversions(&mut seq, &mut scratch) as i64;

    // seq is now sorted by z
    let mut tied_z = 0i64;
    let mut run = 1i64;
    for w in seq.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            tied_z += pairs(run);
            run = 1;
        }
    }
    tied_z += pairs(run);

    let n0 = pairs(n as i64);
    let c_minus_d = n0 - tied_m - tied_z + tied_both - 2 * discordant;
    Ok(tau_from_sum(2 * c_minus_d, n))
}

/// Sorts `v` ascending and returns the number of pairs `i < j` with `v[i] > v[j]`.
fn count_inversions(v: &mut [f64], scratch: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = {
        let (l, r) = v.split_at_mut(mid);
        let (sl, sr) = scratch.split_at_mut(mid);
        count_inversions(l, sl) + count_inversions(r, sr)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            scratch[k] = v[j];
            inv += (mid - i) as u64;
            j += 1;
        } else {
            scratch[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    scratch[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    scratch[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&scratch[..n]);
    inv
}

/// Kendall's tau-a; dispatches to the O(n log n) path for larger samples.
pub fn stat_kendall(m: &[f64], z: &[f64]) -> Result<f64> {
    if m.len() >= KENDALL_FAST_MIN {
        stat_kendall_fast(m, z)
    } else {
        stat_kendall_reference(m, z)
    }
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && v[idx[j]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Marginal transform to standard normal through the empirical distribution:
/// value `i` becomes the normal quantile of `(rank_i - 0.5) / n`.
pub fn normal_scores(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::InsufficientPoints(format!("normal scores need n >= 2, got {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSample("non-finite value".into()));
    }
    let n = values.len() as f64;
    let std = Normal::standard();
    Ok(average_ranks(values).into_iter().map(|r| std.inverse_cdf((r - 0.5) / n)).collect())
}

/// Tuning for the functional mark statistic and the variogram fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchlatherSettings {
    /// Largest lag considered; `None` means a quarter of the window's shorter side.
    pub t_max: Option<f64>,
    pub grid_len: usize,
    /// Kernel half-width as a fraction of `t_max`.
    pub bandwidth_fraction: f64,
    pub variogram_bins: usize,
}

impl Default for SchlatherSettings {
    fn default() -> Self {
        SchlatherSettings { t_max: None, grid_len: 50, bandwidth_fraction: 0.1, variogram_bins: 15 }
    }
}

impl SchlatherSettings {
    pub fn t_max_for(&self, pattern: &MarkedPointPattern) -> f64 {
        self.t_max.unwrap_or_else(|| pattern.window().shorter_side() / 4.0)
    }

    /// `grid_len` equally spaced lags in `(0, t_max]`.
    pub fn t_grid(&self, t_max: f64) -> Vec<f64> {
        (1..=self.grid_len).map(|j| t_max * j as f64 / self.grid_len as f64).collect()
    }

    pub fn bandwidth(&self, t_max: f64) -> f64 {
        self.bandwidth_fraction * t_max
    }
}

/// Exponential variogram `sill * (1 - exp(-h / scale))`, no nugget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariogramFit {
    pub sill: f64,
    pub scale: f64,
    pub family: CorrelationFamily,
}

impl VariogramFit {
    pub fn covariance(&self, h: f64) -> f64 {
        self.sill * (-h / self.scale).exp()
    }
}

pub const MIN_VARIOGRAM_POINTS: usize = 20;
const MIN_NONEMPTY_BINS: usize = 5;

/// Weighted least-squares fit of an exponential variogram.
///
/// Pairs closer than `t_max` are binned into equal-width lag classes; each
/// class contributes its mean semivariance at its mean lag, weighted by its
/// pair count. The scale is found by golden-section search on
/// `[t_max / 100, 2 t_max]` with the sill profiled out in closed form.
pub fn fit_exponential_variogram(points: &[Point], values: &[f64], t_max: f64, bins: usize) -> Result<VariogramFit> {
    if points.len() != values.len() {
        return Err(Error::LengthMismatch { expected: points.len(), got: values.len() });
    }
    if points.len() < MIN_VARIOGRAM_POINTS {
        return Err(Error::InsufficientPoints(format!(
            "variogram fit needs at least {MIN_VARIOGRAM_POINTS} points, got {}",
            points.len()
        )));
    }
    if !(t_max > 0.0) || bins == 0 {
        return Err(Error::Config(format!("invalid variogram range {t_max} / {bins} bins")));
    }
    let width = t_max / bins as f64;
    let mut count = vec![0usize; bins];
    let mut lag_sum = vec![0.0; bins];
    let mut gamma_sum = vec![0.0; bins];
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = points[i].dist(&points[j]);
            if d >= t_max {
                continue;
            }
            let b = ((d / width) as usize).min(bins - 1);
            let dv = values[i] - values[j];
            count[b] += 1;
            lag_sum[b] += d;
            gamma_sum[b] += 0.5 * dv * dv;
        }
    }
    let classes: Vec<(f64, f64, f64)> = (0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| (count[b] as f64, lag_sum[b] / count[b] as f64, gamma_sum[b] / count[b] as f64))
        .collect();
    if classes.len() < MIN_NONEMPTY_BINS {
        return Err(Error::FitFailure(format!("only {} non-empty lag classes", classes.len())));
    }

    let profile = |scale: f64| -> (f64, f64) {
        let (mut num, mut den) = (0.0, 0.0);
        for &(w, h, g) in &classes {
            let shape = 1.0 - (-h / scale).exp();
            num += w * g * shape;
            den += w * shape * shape;
        }
        let sill = if den > 0.0 { num / den } else { 0.0 };
        let sse = classes
            .iter()
            .map(|&(w, h, g)| {
                let r = g - sill * (1.0 - (-h / scale).exp());
                w * r * r
            })
            .sum();
        (sill, sse)
    };

    let (lo, hi) = (t_max / 100.0, 2.0 * t_max);
    let scale = golden_section(lo, hi, |s| profile(s).1);
    let (sill, _) = profile(scale);
    if !(sill > 0.0 && sill.is_finite()) {
        return Err(Error::FitFailure(format!("non-positive sill {sill}")));
    }
    Ok(VariogramFit { sill, scale, family: CorrelationFamily::Exponential })
}

fn golden_section(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (lo, hi) = (a, b);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-10 * (a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // the search interval ends are candidates too
    [mid, lo, hi]
        .into_iter()
        .map(|s| (s, f(s)))
        .fold((mid, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
        .0
}

fn epanechnikov(u: f64) -> f64 {
    if u.abs() < 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// Kernel estimate of the mean mark of a point given another point at
/// distance `t`, for each `t` in `t_grid`. Entries with no pair inside the
/// kernel support are `None`.
pub fn estimate_e(points: &[Point], marks: &[f64], t_grid: &[f64], bandwidth: f64) -> Result<Vec<Option<f64>>> {
    if points.len() != marks.len() {
        return Err(Error::LengthMismatch { expected: points.len(), got: marks.len() });
    }
    if points.len() < 2 {
        return Err(Error::InsufficientPoints("E(t) needs at least two points".into()));
    }
    if t_grid.is_empty() || t_grid[0] <= 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("t grid must be positive and strictly increasing".into()));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::Config(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let reach = t_grid[t_grid.len() - 1] + bandwidth;
    let mut num = vec![0.0; t_grid.len()];
    let mut den = vec![0.0; t_grid.len()];
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = points[i].dist(&points[j]);
            if d >= reach {
                continue;
            }
            let start = t_grid.partition_point(|&t| t <= d - bandwidth);
            let pair_marks = marks[i] + marks[j];
            for (k, &t) in t_grid.iter().enumerate().skip(start) {
                if t >= d + bandwidth {
                    break;
                }
                let w = epanechnikov((t - d) / bandwidth);
                // both orderings of the pair
                num[k] += w * pair_marks;
                den[k] += 2.0 * w;
            }
        }
    }
    let out: Vec<Option<f64>> = num
        .iter()
        .zip(&den)
        .map(|(&n, &d)| if d > 0.0 { Some(n / d) } else { None })
        .collect();
    if out.iter().all(Option::is_none) {
        return Err(Error::Estimation("no pair within kernel reach of any lag".into()));
    }
    Ok(out)
}

/// L2 distance between `E(t)` and the mean mark over the lag grid.
pub fn schlather_statistic(e_hat: &[Option<f64>], mean_mark: f64, t_grid: &[f64]) -> Result<f64> {
    if e_hat.len() != t_grid.len() {
        return Err(Error::LengthMismatch { expected: t_grid.len(), got: e_hat.len() });
    }
    let dt = match t_grid {
        [] => return Err(Error::Estimation("empty lag grid".into())),
        [t] => *t,
        [a, b, ..] => b - a,
    };
    let defined: Vec<f64> = e_hat.iter().flatten().map(|e| (e - mean_mark).powi(2)).collect();
    if defined.is_empty() {
        return Err(Error::Estimation("no defined E(t) entry".into()));
    }
    Ok((dt * defined.iter().sum::<f64>()).sqrt())
}

/// Mean covariate value and point count per categorical level.
pub fn level_means(pattern: &MarkedPointPattern, field: &CovariateField) -> Result<(Vec<f64>, Vec<usize>)> {
    let Marks::Categorical { levels, names } = pattern.marks() else {
        return Err(Error::Validation("pattern does not carry categorical marks".into()));
    };
    let m = names.len();
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for (p, &l) in pattern.points().iter().zip(levels) {
        let k = l as usize - 1;
        sums[k] += field.eval(*p)?;
        counts[k] += 1;
    }
    let means = sums.iter().zip(&counts).map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN }).collect();
    Ok((means, counts))
}

/// `(v1 - v2, v1 - v3, ..., v1 - vM, v2 - v3, ..., v(M-1) - vM)`.
pub fn pairwise_differences(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() * v.len().saturating_sub(1) / 2);
    for i in 0..v.len() {
        for j in (i + 1)..v.len() {
            out.push(v[i] - v[j]);
        }
    }
    out
}

/// Pairwise differences of per-level mean covariate values.
pub fn multitype_mean_diffs(pattern: &MarkedPointPattern, field: &CovariateField) -> Result<Vec<f64>> {
    let (means, counts) = level_means(pattern, field)?;
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        let name = match pattern.marks() {
            Marks::Categorical { names, .. } => names[k].clone(),
            _ => unreachable!(),
        };
        return Err(Error::InsufficientPoints(format!("level {} ({name}) has no points", k + 1)));
    }
    Ok(pairwise_differences(&means))
}

/// Mean at points against each field in turn.
pub fn multicovariate_means(pattern: &MarkedPointPattern, fields: &[&CovariateField]) -> Result<Vec<f64>> {
    fields.iter().map(|f| stat_mean_at_points(pattern, f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Window;
    use crate::randfield::GridGeometry;
    use proptest::prelude::*;

    fn grid_field(values: Vec<f64>, n: usize) -> CovariateField {
        let g = GridGeometry::covering(&Window::unit_square().bounding_box(), n).unwrap();
        CovariateField::new(g, values, Window::unit_square()).unwrap()
    }

    fn pattern(points: &[(f64, f64)]) -> MarkedPointPattern {
        MarkedPointPattern::unmarked(points.iter().map(|&p| p.into()).collect(), Window::unit_square()).unwrap()
    }

    #[test]
    fn mean_at_points_examples() {
        // 3 x 1 strip of cells with values 1, 2, 3 read at the cell centres
        let g = GridGeometry::new(0.0, 0.0, 1.0 / 3.0, 3, 3).unwrap();
        let f = CovariateField::new(g, vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0, 3.0], Window::unit_square()).unwrap();
        let pts: Vec<(f64, f64)> = (0..3).map(|c| (g.cell_center(1, c).x, 0.5)).collect();
        assert!((stat_mean_at_points(&pattern(&pts), &f).unwrap() - 2.0).abs() < 1e-12);
        let c = grid_field(vec![4.5; 16], 4);
        assert_eq!(stat_mean_at_points(&pattern(&[(0.1, 0.9), (0.7, 0.2)]), &c).unwrap(), 4.5);
        assert_eq!(stat_mean_at_points(&pattern(&[(0.3, 0.3)]), &f).unwrap(), f.eval(Point::new(0.3, 0.3)).unwrap());
        assert!(matches!(stat_mean_at_points(&pattern(&[]), &c), Err(Error::InsufficientPoints(_))));
    }

    #[test]
    fn covariance_examples() {
        assert!((stat_sample_cov(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(stat_sample_cov(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).unwrap(), 0.0);
        assert!((stat_sample_cov(&[1.0, 2.0], &[2.0, 1.0]).unwrap() + 0.5).abs() < 1e-15);
        assert!(stat_sample_cov(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn pearson_examples() {
        assert!((stat_pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((stat_pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((stat_pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(stat_pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn kendall_examples() {
        for f in [stat_kendall_reference, stat_kendall_fast, stat_kendall] {
            assert_eq!(f(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
            assert_eq!(f(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
            assert!((f(&[1.0, 2.0, 3.0], &[2.0, 1.0, 3.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
            assert_eq!(f(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]).unwrap(), 1.0 / 3.0);
            assert!(f(&[1.0], &[1.0]).is_err());
        }
    }

    #[test]
    fn normal_score_examples() {
        let s = normal_scores(&[7.0, 9.0]).unwrap();
        assert!((s[0] + 0.674_489_750_196_081_7).abs() < 1e-9);
        assert!((s[1] - 0.674_489_750_196_081_7).abs() < 1e-9);
        let a = normal_scores(&[0.3, -1.0, 8.0, 2.0, 5.5]).unwrap();
        let b = normal_scores(&[0.3f64.exp(), (-1.0f64).exp(), 8.0f64.exp(), 2.0f64.exp(), 5.5f64.exp()]).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().sum::<f64>().abs() < 1e-12);
        let tied = normal_scores(&[1.0, 1.0, 2.0]).unwrap();
        assert_eq!(tied[0], tied[1]);
        assert!(normal_scores(&[1.0]).is_err());
    }

    #[test]
    fn variogram_refuses_small_or_flat_samples() {
        let pts: Vec<Point> = (0..10).map(|i| Point::new(0.1 * i as f64, 0.05)).collect();
        assert!(matches!(
            fit_exponential_variogram(&pts, &[1.0; 10], 0.25, 15),
            Err(Error::InsufficientPoints(_))
        ));
        let pts: Vec<Point> = (0..400).map(|i| Point::new((i % 20) as f64 / 20.0, (i / 20) as f64 / 20.0)).collect();
        assert!(matches!(fit_exponential_variogram(&pts, &[2.0; 400], 0.25, 15), Err(Error::FitFailure(_))));
    }

    #[test]
    fn variogram_fit_stays_in_search_range() {
        let pts: Vec<Point> = (0..900).map(|i| Point::new((i % 30) as f64 / 29.0, (i / 30) as f64 / 29.0)).collect();
        let values: Vec<f64> = pts.iter().map(|p| (7.0 * p.x).sin() + (5.0 * p.y).cos()).collect();
        // smooth deterministic surface: fit must succeed and give a positive scale within bounds
        let fit = fit_exponential_variogram(&pts, &values, 0.25, 15).unwrap();
        assert!(fit.scale >= 0.25 / 100.0 - 1e-12 && fit.scale <= 0.5 + 1e-12);
        assert!(fit.sill > 0.0);
    }

    #[test]
    fn e_examples() {
        let pts = vec![Point::new(0.2, 0.2), Point::new(0.3, 0.2), Point::new(0.6, 0.7), Point::new(0.1, 0.9)];
        let grid: Vec<f64> = (1..=50).map(|j| 0.25 * j as f64 / 50.0).collect();
        let e = estimate_e(&pts, &[3.0; 4], &grid, 0.025).unwrap();
        assert!(e.iter().flatten().all(|&v| (v - 3.0).abs() < 1e-12));

        let two = vec![Point::new(0.2, 0.2), Point::new(0.3, 0.2)];
        let e = estimate_e(&two, &[1.0, 4.0], &[0.05, 0.1, 0.2], 0.02).unwrap();
        assert_eq!(e[0], None);
        assert_eq!(e[1], Some(2.5));
        assert_eq!(e[2], None);

        let far = vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0)];
        assert!(matches!(estimate_e(&far, &[1.0, 2.0], &grid, 0.025), Err(Error::Estimation(_))));
        assert!(estimate_e(&two, &[1.0, 4.0], &[0.1, 0.05], 0.02).is_err());
    }

    #[test]
    fn schlather_statistic_examples() {
        let grid: Vec<f64> = (1..=10).map(|j| 0.1 * j as f64).collect();
        assert_eq!(schlather_statistic(&[Some(2.0); 10], 2.0, &grid).unwrap(), 0.0);
        let s = schlather_statistic(&[Some(3.0); 10], 2.0, &grid).unwrap();
        assert!((s - (10.0f64 * 0.1).sqrt()).abs() < 1e-12);
        let mut one = vec![None; 10];
        one[4] = Some(-1.5);
        let s = schlather_statistic(&one, 0.5, &grid).unwrap();
        assert!((s - 0.1f64.sqrt() * 2.0).abs() < 1e-12);
        assert!(schlather_statistic(&[None; 10], 0.0, &grid).is_err());
    }

    #[test]
    fn multitype_examples() {
        assert_eq!(pairwise_differences(&[3.0, 1.0]), vec![2.0]);
        assert_eq!(pairwise_differences(&[1.0, 2.0, 4.0]), vec![-1.0, -3.0, -2.0]);
        assert_eq!(pairwise_differences(&[5.0; 4]), vec![0.0; 6]);

        let g = GridGeometry::new(0.0, 0.0, 0.5, 2, 2).unwrap();
        let f = CovariateField::new(g, vec![1.0, 3.0, 1.0, 3.0], Window::unit_square()).unwrap();
        let pts = vec![Point::new(0.75, 0.25), Point::new(0.25, 0.75), Point::new(0.75, 0.75)];
        let p = MarkedPointPattern::categorical(pts.clone(), &["a", "b", "a"], Window::unit_square()).unwrap();
        assert_eq!(multitype_mean_diffs(&p, &f).unwrap(), vec![2.0]);

        let p3 = MarkedPointPattern::new(
            pts,
            Marks::Categorical { levels: vec![1, 1, 3], names: vec!["x".into(), "y".into(), "z".into()] },
            Window::unit_square(),
        )
        .unwrap();
        match multitype_mean_diffs(&p3, &f) {
            Err(Error::InsufficientPoints(msg)) => assert!(msg.contains("level 2") && msg.contains("y")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn multicovariate_examples() {
        let p = pattern(&[(0.1, 0.2), (0.8, 0.4), (0.5, 0.5)]);
        let values: Vec<f64> = (0..64).map(|i| (i as f64 * 0.7).cos()).collect();
        let z = grid_field(values.clone(), 8);
        let neg = grid_field(values.iter().map(|v| -v).collect(), 8);
        let single = multicovariate_means(&p, &[&z]).unwrap();
        assert_eq!(single, vec![stat_mean_at_points(&p, &z).unwrap()]);
        let both = multicovariate_means(&p, &[&z, &neg]).unwrap();
        assert_eq!(both[0], -both[1]);
        let c = grid_field(vec![1.5; 64], 8);
        assert_eq!(multicovariate_means(&p, &[&c, &c, &c]).unwrap(), vec![1.5; 3]);
    }

    fn tie_free(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (Just(n), any::<u64>()).prop_map(|(n, seed)| {
            use rand::seq::SliceRandom;
            let mut rng = crate::seeds::rng(seed, &[]);
            let mut a: Vec<f64> = (0..n).map(|i| i as f64 * 0.5 - 3.0).collect();
            let mut b: Vec<f64> = (0..n).map(|i| (i as f64).sqrt()).collect();
            a.shuffle(&mut rng);
            b.shuffle(&mut rng);
            (a, b)
        })
    }

    proptest! {
        #[test]
        fn kendall_monotone_invariance((m, z) in (3usize..60).prop_flat_map(tie_free)) {
            let t = stat_kendall(&m, &z).unwrap();
            let m2: Vec<f64> = m.iter().map(|v| v.powi(3) + 2.0 * v).collect();
            let z2: Vec<f64> = z.iter().map(|v| (v + 1.0).ln()).collect();
            prop_assert_eq!(stat_kendall(&m2, &z2).unwrap(), t);
            prop_assert_eq!(stat_kendall(&z, &m).unwrap(), t);
        }

        #[test]
        fn pearson_affine_invariance((m, z) in (3usize..60).prop_flat_map(tie_free), a in 0.1..10.0f64, b in -5.0..5.0f64) {
            let r = stat_pearson(&m, &z).unwrap();
            let m2: Vec<f64> = m.iter().map(|v| a * v + b).collect();
            prop_assert!((stat_pearson(&m2, &z).unwrap() - r).abs() < 1e-12);
            prop_assert!((stat_sample_cov(&m, &z).unwrap() - stat_sample_cov(&z, &m).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn kendall_paths_agree_with_ties(v in prop::collection::vec((0i32..6, 0i32..6), 2..80)) {
            let m: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
            let z: Vec<f64> = v.iter().map(|p| p.1 as f64).collect();
            prop_assert_eq!(stat_kendall_fast(&m, &z).unwrap(), stat_kendall_reference(&m, &z).unwrap());
        }

        #[test]
        fn normal_scores_preserve_order((m, _z) in (2usize..50).prop_flat_map(tie_free)) {
            let s = normal_scores(&m).unwrap();
            for i in 0..m.len() {
                for j in 0..m.len() {
                    if m[i] < m[j] { prop_assert!(s[i] < s[j]); }
                }
            }
        }

        #[test]
        fn schlather_statistic_nonnegative(e in prop::collection::vec(prop::option::of(-3.0..3.0f64), 1..30), mbar in -1.0..1.0f64) {
            prop_assume!(e.iter().any(Option::is_some));
            let grid: Vec<f64> = (1..=e.len()).map(|j| j as f64 * 0.01).collect();
            let s = schlather_statistic(&e, mbar, &grid).unwrap();
            prop_assert!(s >= 0.0);
            let all_equal = e.iter().flatten().all(|&v| v == mbar);
            prop_assert_eq!(s == 0.0, all_equal);
        }
    }
}
