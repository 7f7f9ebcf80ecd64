//! Stationary Gaussian random fields on regular grids.
//!
//! Fields are simulated exactly at cell centres by circulant embedding: the
//! grid is embedded in a torus twice its size (four times if that fails), the
//! eigenvalues of the periodic covariance are obtained with one 2-D FFT, and
//! each realisation costs one more FFT of complex white noise. Spherical
//! correlations vanish beyond their range, so for them a torus padded by one
//! range is tried first. The real and
//! imaginary parts of that FFT are independent realisations, which
//! [`simulate_grf_pair`] hands out together.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Point, Window};
use crate::seeds;

/// Cells per side of the default simulation grid.
pub const DEFAULT_GRID_CELLS: usize = 128;

const EMBEDDING_FACTORS: [usize; 2] = [2, 4];
const EIGEN_CLIP_TOL: f64 = 1e-8;
const SNAP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationFamily {
    Exponential,
    Spherical,
}

/// Isotropic correlation function with a scale parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationModel {
    pub family: CorrelationFamily,
    pub scale: f64,
}

impl CorrelationModel {
    pub fn new(family: CorrelationFamily, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!("correlation scale must be positive, got {scale}")));
        }
        Ok(CorrelationModel { family, scale })
    }

    pub fn exponential(scale: f64) -> Result<Self> {
        Self::new(CorrelationFamily::Exponential, scale)
    }

    pub fn spherical(scale: f64) -> Result<Self> {
        Self::new(CorrelationFamily::Spherical, scale)
    }

    /// Correlation at distance `r`.
    ///
    /// Exponential: `exp(-r/scale)`. Spherical: `1 - 1.5 s + 0.5 s^3` with
    /// `s = r/scale` for `r < scale`, zero beyond.
    pub fn correlation(&self, r: f64) -> Result<f64> {
        if r < 0.0 || r.is_nan() {
            return Err(Error::Domain(format!("distance must be non-negative, got {r}")));
        }
        Ok(self.eval(r))
    }

    pub(crate) fn eval(&self, r: f64) -> f64 {
        let s = r / self.scale;
        match self.family {
            CorrelationFamily::Exponential => (-s).exp(),
            CorrelationFamily::Spherical => {
                if s < 1.0 {
                    1.0 - 1.5 * s + 0.5 * s * s * s
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub mean: f64,
    pub variance: f64,
    pub correlation: CorrelationModel,
}

impl FieldSpec {
    /// Centred unit-variance field.
    pub fn standard(correlation: CorrelationModel) -> Self {
        FieldSpec { mean: 0.0, variance: 1.0, correlation }
    }
}

/// Regular grid of square cells. `(x0, y0)` is the south-west corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub x0: f64,
    pub y0: f64,
    pub cell: f64,
    pub ncols: usize,
    pub nrows: usize,
}

impl GridGeometry {
    pub fn new(x0: f64, y0: f64, cell: f64, ncols: usize, nrows: usize) -> Result<Self> {
        if !(cell > 0.0 && cell.is_finite()) || ncols == 0 || nrows == 0 {
            return Err(Error::Geometry(format!("invalid grid: cell {cell}, {ncols} x {nrows}")));
        }
        Ok(GridGeometry { x0, y0, cell, ncols, nrows })
    }

    /// Square cells with `cells` cells along the longer side of `bbox`.
    pub fn covering(bbox: &BoundingBox, cells: usize) -> Result<Self> {
        let cell = bbox.width().max(bbox.height()) / cells as f64;
        Self::with_cell_size(bbox, cell)
    }

    /// Smallest grid of `cell`-sized squares anchored at the south-west
    /// corner of `bbox` that covers it.
    pub fn with_cell_size(bbox: &BoundingBox, cell: f64) -> Result<Self> {
        let ncols = ((bbox.width() / cell) - 1e-9).ceil().max(1.0) as usize;
        let nrows = ((bbox.height() / cell) - 1e-9).ceil().max(1.0) as usize;
        Self::new(bbox.x0, bbox.y0, cell, ncols, nrows)
    }

    pub fn x1(&self) -> f64 {
        self.x0 + self.ncols as f64 * self.cell
    }

    pub fn y1(&self) -> f64 {
        self.y0 + self.nrows as f64 * self.cell
    }

    /// Centre of the cell at `row` (0 = northmost) and `col`.
    pub fn cell_center(&self, row: usize, col: usize) -> Point {
        Point::new(
            self.x0 + (col as f64 + 0.5) * self.cell,
            self.y0 + ((self.nrows - 1 - row) as f64 + 0.5) * self.cell,
        )
    }

    pub fn len(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn covers(&self, b: &BoundingBox) -> bool {
        let tol = 1e-9 * self.cell;
        b.x0 >= self.x0 - tol && b.y0 >= self.y0 - tol && b.x1 <= self.x1() + tol && b.y1 <= self.y1() + tol
    }

    fn same_as(&self, other: &GridGeometry) -> bool {
        self == other
    }
}

/// Gridded field with continuous evaluation by bilinear interpolation
/// between cell centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateField {
    geometry: GridGeometry,
    /// Row-major, row 0 northmost. Cells flagged missing hold NaN.
    values: Vec<f64>,
    window: Window,
}

impl CovariateField {
    pub fn new(geometry: GridGeometry, values: Vec<f64>, window: Window) -> Result<Self> {
        if values.len() != geometry.len() {
            return Err(Error::LengthMismatch { expected: geometry.len(), got: values.len() });
        }
        if !geometry.covers(&window.bounding_box()) {
            return Err(Error::Geometry("grid does not cover the window".into()));
        }
        Ok(CovariateField { geometry, values, window })
    }

    /// Field holding `value` everywhere.
    pub fn constant(geometry: GridGeometry, value: f64, window: Window) -> Result<Self> {
        Self::new(geometry, vec![value; geometry.len()], window)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.geometry.ncols + col]
    }

    /// Same values over a different window (which the grid must still cover).
    pub fn with_window(self, window: Window) -> Result<Self> {
        Self::new(self.geometry, self.values, window)
    }

    /// Value at `u`, interpolated bilinearly among the four surrounding cell
    /// centres. Inside the outer half cell the nearest centres are used.
    /// Missing (NaN) corners are left out and the remaining weights renormalised.
    pub fn eval(&self, u: Point) -> Result<f64> {
        let g = &self.geometry;
        let tol = 1e-9 * g.cell;
        if !(u.x >= g.x0 - tol && u.x <= g.x1() + tol && u.y >= g.y0 - tol && u.y <= g.y1() + tol) {
            return Err(Error::OutOfRange { x: u.x, y: u.y });
        }
        let (c0, c1, tx) = axis_weights((u.x - g.x0) / g.cell - 0.5, g.ncols);
        // rows counted from the south here; flipped when indexing
        let (s0, s1, ty) = axis_weights((u.y - g.y0) / g.cell - 0.5, g.nrows);
        let r0 = g.nrows - 1 - s0;
        let r1 = g.nrows - 1 - s1;
        let corners = [
            (self.get(r0, c0), (1.0 - tx) * (1.0 - ty)),
            (self.get(r0, c1), tx * (1.0 - ty)),
            (self.get(r1, c0), (1.0 - tx) * ty),
            (self.get(r1, c1), tx * ty),
        ];
        let mut acc = 0.0;
        let mut wsum = 0.0;
        let mut missing = false;
        for (v, w) in corners {
            if w == 0.0 {
                continue;
            }
            if v.is_nan() {
                missing = true;
                continue;
            }
            acc += v * w;
            wsum += w;
        }
        if wsum == 0.0 {
            return Err(Error::OutOfRange { x: u.x, y: u.y });
        }
        Ok(if missing { acc / wsum } else { acc })
    }
}

/// Lower index, upper index and interpolation weight along one axis.
fn axis_weights(f: f64, n: usize) -> (usize, usize, f64) {
    if n == 1 || f <= 0.0 {
        return (0, 0, 0.0);
    }
    let max = (n - 1) as f64;
    if f >= max {
        return (n - 1, n - 1, 0.0);
    }
    let i0 = f.floor();
    let mut t = f - i0;
    let mut i0 = i0 as usize;
    if t < SNAP_TOL {
        t = 0.0;
    } else if 1.0 - t < SNAP_TOL {
        i0 += 1;
        t = 0.0;
    }
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, t)
}

/// Pointwise combination applied by [`transform_fields`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldTransform {
    /// `offset + sum_k weights[k] * Z_k(u)`.
    Linear { weights: Vec<f64>, offset: f64 },
    /// `Z(u)^2`.
    Square,
    /// `shift - scale * Z(u)^2`.
    NegatedSquareShift { scale: f64, shift: f64 },
}

impl FieldTransform {
    pub fn linear(weights: &[f64]) -> Self {
        FieldTransform::Linear { weights: weights.to_vec(), offset: 0.0 }
    }
}

/// Applies `t` cell by cell to fields sharing one grid geometry.
pub fn transform_fields(inputs: &[&CovariateField], t: &FieldTransform) -> Result<CovariateField> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::Config("field transform needs at least one input".into()))?;
    if let Some(bad) = inputs.iter().find(|f| !f.geometry.same_as(&first.geometry)) {
        return Err(Error::Geometry(format!(
            "grid {:?} differs from {:?}",
            bad.geometry, first.geometry
        )));
    }
    let n = first.values.len();
    let values: Vec<f64> = match t {
        FieldTransform::Linear { weights, offset } => {
            if weights.len() != inputs.len() {
                return Err(Error::LengthMismatch { expected: inputs.len(), got: weights.len() });
            }
            if weights.iter().chain(std::iter::once(offset)).any(|w| !w.is_finite()) {
                return Err(Error::Config("non-finite transform weight".into()));
            }
            (0..n)
                .map(|i| {
                    inputs
                        .iter()
                        .zip(weights)
                        .fold(*offset, |acc, (f, w)| acc + w * f.values[i])
                })
                .collect()
        }
        FieldTransform::Square => {
            single(inputs)?;
            first.values.iter().map(|v| v * v).collect()
        }
        FieldTransform::NegatedSquareShift { scale, shift } => {
            single(inputs)?;
            if !scale.is_finite() || !shift.is_finite() {
                return Err(Error::Config("non-finite transform parameter".into()));
            }
            first.values.iter().map(|v| shift - scale * v * v).collect()
        }
    };
    Ok(CovariateField { geometry: first.geometry, values, window: first.window.clone() })
}

fn single(inputs: &[&CovariateField]) -> Result<()> {
    if inputs.len() != 1 {
        return Err(Error::Config(format!("transform takes one field, got {}", inputs.len())));
    }
    Ok(())
}

/// Square roots of the circulant eigenvalues, pre-divided by the square
/// root of the torus size.
struct Embedding {
    mx: usize,
    my: usize,
    sqrt_eigen: Vec<f64>,
}

type EmbeddingKey = (CorrelationFamily, u64, u64, usize, usize);

fn embedding_cache() -> &'static Mutex<HashMap<EmbeddingKey, Arc<Embedding>>> {
    static CACHE: OnceLock<Mutex<HashMap<EmbeddingKey, Arc<Embedding>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

const EMBEDDING_CACHE_LIMIT: usize = 64;

fn embedding(model: &CorrelationModel, g: &GridGeometry) -> Result<Arc<Embedding>> {
    let key = (model.family, model.scale.to_bits(), g.cell.to_bits(), g.ncols, g.nrows);
    if let Some(e) = embedding_cache().lock().unwrap().get(&key) {
        return Ok(e.clone());
    }
    let built = Arc::new(build_embedding(model, g)?);
    let mut cache = embedding_cache().lock().unwrap();
    if cache.len() >= EMBEDDING_CACHE_LIMIT {
        cache.clear();
    }
    cache.insert(key, built.clone());
    Ok(built)
}

/// Smallest integer >= `n` without prime factors above 7.
fn smooth_size(n: usize) -> usize {
    (n..)
        .find(|&m| {
            let mut k = m;
            for p in [2, 3, 5, 7] {
                while k % p == 0 {
                    k /= p;
                }
            }
            k == 1
        })
        .expect("smooth numbers are unbounded")
}

/// Torus sizes to try, smallest first.
fn embedding_sizes(model: &CorrelationModel, g: &GridGeometry) -> Vec<(usize, usize)> {
    let mut sizes = Vec::new();
    if model.family == CorrelationFamily::Spherical {
        // lags that wrap are at least one range apart on the torus, where the
        // correlation is already zero
        let range = (model.scale / g.cell).ceil() as usize;
        let pad = |n: usize| smooth_size((n - 1 + range).max(2 * range + 1));
        let (mx, my) = (pad(g.ncols), pad(g.nrows));
        if mx < 2 * g.ncols || my < 2 * g.nrows {
            sizes.push((mx, my));
        }
    }
    sizes.extend(EMBEDDING_FACTORS.iter().map(|f| (f * g.ncols, f * g.nrows)));
    sizes
}

fn build_embedding(model: &CorrelationModel, g: &GridGeometry) -> Result<Embedding> {
    let mut worst = 0.0;
    for (mx, my) in embedding_sizes(model, g) {
        let mut buf: Vec<Complex<f64>> = Vec::with_capacity(mx * my);
        for k in 0..my {
            let dy = k.min(my - k) as f64 * g.cell;
            for j in 0..mx {
                let dx = j.min(mx - j) as f64 * g.cell;
                buf.push(Complex::new(model.eval(dx.hypot(dy)), 0.0));
            }
        }
        fft2(&mut buf, mx, my, my);
        let max = buf.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
        let min = buf.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
        if min >= -EIGEN_CLIP_TOL * max {
            let n = (mx * my) as f64;
            let sqrt_eigen = buf.iter().map(|c| (c.re.max(0.0) / n).sqrt()).collect();
            return Ok(Embedding { mx, my, sqrt_eigen });
        }
        worst = min / max;
    }
    Err(Error::Simulation(format!(
        "circulant embedding not positive semidefinite (relative eigenvalue {worst:.3e})"
    )))
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalised 2-D DFT of a row-major `my x mx` buffer, computed in place
/// for the first `rows` output rows; later rows are left unspecified.
fn fft2(buf: &mut [Complex<f64>], mx: usize, my: usize, rows: usize) {
    let (fx, fy) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(mx), p.plan_fft_forward(my))
    });
    let mut t = vec![Complex::new(0.0, 0.0); mx * my];
    transpose(buf, &mut t, mx, my);
    fy.process(&mut t);
    transpose(&t, buf, my, mx);
    fx.process(&mut buf[..rows * mx]);
}

/// `src` is `rows x cols` row-major; `dst` receives its `cols x rows` transpose.
fn transpose(src: &[Complex<f64>], dst: &mut [Complex<f64>], cols: usize, rows: usize) {
    const B: usize = 32;
    for rb in (0..rows).step_by(B) {
        for cb in (0..cols).step_by(B) {
            for r in rb..(rb + B).min(rows) {
                for c in cb..(cb + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Two independent realisations of `spec` at the cell centres of `grid`.
pub fn simulate_grf_pair(
    spec: &FieldSpec,
    grid: &GridGeometry,
    window: &Window,
    seed: u64,
) -> Result<(CovariateField, CovariateField)> {
    if grid.ncols < 2 || grid.nrows < 2 {
        return Err(Error::Geometry("simulation grid must be at least 2 x 2".into()));
    }
    if !(spec.variance >= 0.0) || !spec.variance.is_finite() || !spec.mean.is_finite() {
        return Err(Error::Domain(format!("invalid field variance {}", spec.variance)));
    }
    if spec.variance == 0.0 {
        let a = CovariateField::constant(*grid, spec.mean, window.clone())?;
        return Ok((a.clone(), a));
    }
    let emb = embedding(&spec.correlation, grid)?;
    let mut rng = seeds::rng(seed, &[]);
    let mut buf: Vec<Complex<f64>> = emb
        .sqrt_eigen
        .iter()
        .map(|&s| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex::new(s * re, s * im)
        })
        .collect();
    fft2(&mut buf, emb.mx, emb.my, grid.nrows);
    let sd = spec.variance.sqrt();
    let mut a = Vec::with_capacity(grid.len());
    let mut b = Vec::with_capacity(grid.len());
    for r in 0..grid.nrows {
        let row = &buf[r * emb.mx..r * emb.mx + grid.ncols];
        a.extend(row.iter().map(|c| spec.mean + sd * c.re));
        b.extend(row.iter().map(|c| spec.mean + sd * c.im));
    }
    Ok((
        CovariateField::new(*grid, a, window.clone())?,
        CovariateField::new(*grid, b, window.clone())?,
    ))
}

/// One realisation of `spec` at the cell centres of `grid`.
pub fn simulate_grf(spec: &FieldSpec, grid: &GridGeometry, window: &Window, seed: u64) -> Result<CovariateField> {
    simulate_grf_pair(spec, grid, window, seed).map(|(a, _)| a)
}
