//! Point-process simulation and the generative models M1 to M12.
//!
//! All models share four independent standard Gaussian fields `Z1..Z4` with
//! exponential correlation of scale 0.2. The unmarked pattern is a
//! log-Gaussian Cox process whose log-intensity, marks and covariate are
//! linear (or squared) combinations of these fields, so that each model
//! switches on a different subset of the three dependencies
//! points-marks, points-covariate and marks-covariate.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MarkedPointPattern, Marks, Point, Window};
use crate::randfield::{
    simulate_grf_pair, transform_fields, CorrelationModel, CovariateField, FieldSpec, FieldTransform, GridGeometry,
    DEFAULT_GRID_CELLS,
};
use crate::seeds;

/// Correlation scale of the base fields.
pub const BASE_FIELD_SCALE: f64 = 0.2;
/// Log of the common mean intensity minus the lognormal correction.
pub const BASE_LOG_INTENSITY: f64 = 4.5;

const TAG_FIELDS_12: u64 = 1;
const TAG_FIELDS_34: u64 = 2;
const TAG_POINTS: u64 = 3;

fn poisson_count(rng: &mut ChaCha8Rng, mean: f64) -> Result<u64> {
    if mean == 0.0 {
        return Ok(0);
    }
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::Model(format!("invalid Poisson mean {mean}")));
    }
    let d = Poisson::new(mean).map_err(|e| Error::Model(e.to_string()))?;
    Ok(d.sample(rng) as u64)
}

/// Homogeneous Poisson process of intensity `intensity` on `window`.
pub fn simulate_poisson(intensity: f64, window: &Window, seed: u64) -> Result<MarkedPointPattern> {
    if !(intensity > 0.0) || !intensity.is_finite() {
        return Err(Error::Model(format!("intensity must be positive, got {intensity}")));
    }
    let mut rng = seeds::rng(seed, &[]);
    let n = poisson_count(&mut rng, intensity * window.area())?;
    let bb = window.bounding_box();
    let mut points = Vec::with_capacity(n as usize);
    while (points.len() as u64) < n {
        let u = Point::new(rng.random_range(bb.x0..=bb.x1), rng.random_range(bb.y0..=bb.y1));
        if window.contains(u) {
            points.push(u);
        }
    }
    MarkedPointPattern::unmarked(points, window.clone())
}

/// Cox process driven by a gridded log-intensity.
///
/// Each grid cell receives a Poisson number of points with mean
/// `exp(log_intensity) * cell area`, placed uniformly in the cell; points
/// falling outside `window` are discarded.
pub fn simulate_cox(log_intensity: &CovariateField, window: &Window, seed: u64) -> Result<MarkedPointPattern> {
    let g = log_intensity.geometry();
    let bb = window.bounding_box();
    let area = g.cell * g.cell;
    let mut rng = seeds::rng(seed, &[]);
    let mut points = Vec::new();
    for row in 0..g.nrows {
        let y1 = g.y1() - row as f64 * g.cell;
        let y0 = y1 - g.cell;
        if y0 >= bb.y1 || y1 <= bb.y0 {
            continue;
        }
        for col in 0..g.ncols {
            let x0 = g.x0 + col as f64 * g.cell;
            let x1 = x0 + g.cell;
            if x0 >= bb.x1 || x1 <= bb.x0 {
                continue;
            }
            let v = log_intensity.get(row, col);
            if !v.is_finite() {
                return Err(Error::Model(format!("non-finite log-intensity {v} in cell ({row}, {col})")));
            }
            let k = poisson_count(&mut rng, v.exp() * area)?;
            for _ in 0..k {
                let u = Point::new(rng.random_range(x0..x1), rng.random_range(y0..y1));
                if window.contains(u) {
                    points.push(u);
                }
            }
        }
    }
    MarkedPointPattern::unmarked(points, window.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelId {
    M1,
    M2,
    M3,
    M4,
    M5,
    M6,
    M7,
    M8,
    M9,
    M10,
    M11,
    M12,
}

impl ModelId {
    pub const ALL: [ModelId; 12] = [
        ModelId::M1,
        ModelId::M2,
        ModelId::M3,
        ModelId::M4,
        ModelId::M5,
        ModelId::M6,
        ModelId::M7,
        ModelId::M8,
        ModelId::M9,
        ModelId::M10,
        ModelId::M11,
        ModelId::M12,
    ];

    /// 1-based model number.
    pub fn number(&self) -> u64 {
        *self as u64 + 1
    }

    /// Whether the model has a preferential-sampling parameter.
    pub fn uses_alpha(&self) -> bool {
        matches!(self, ModelId::M9 | ModelId::M10 | ModelId::M11 | ModelId::M12)
    }

    /// Dependence structure at the given alpha. For M9 to M12 the
    /// alpha-controlled dependence vanishes at alpha = 0.
    pub fn truth(&self, alpha: f64) -> DependenceTruth {
        let on = alpha > 0.0;
        let (pm, pc, mc) = match self {
            ModelId::M1 => (false, false, false),
            ModelId::M2 => (false, false, true),
            ModelId::M3 => (false, true, false),
            ModelId::M4 => (true, false, false),
            ModelId::M5 => (true, true, false),
            ModelId::M6 => (true, false, true),
            ModelId::M7 => (false, true, true),
            ModelId::M8 => (true, true, true),
            ModelId::M9 | ModelId::M10 => (false, on, false),
            ModelId::M11 | ModelId::M12 => (on, false, false),
        };
        DependenceTruth { points_marks: pm, points_covariate: pc, marks_covariate: mc }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M{}", self.number())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let n: usize = s
            .strip_prefix(['M', 'm'])
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| Error::Model(format!("unknown model id {s:?}")))?;
        ModelId::ALL
            .get(n.wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::Model(format!("unknown model id {s:?}")))
    }
}

/// Which of the three dependencies a model has.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependenceTruth {
    pub points_marks: bool,
    pub points_covariate: bool,
    pub marks_covariate: bool,
}

impl fmt::Display for DependenceTruth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = |b: bool| if b { "+" } else { "–" };
        write!(
            f,
            "P{}M{}C{}P",
            s(self.points_marks),
            s(self.marks_covariate),
            s(self.points_covariate)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: ModelId,
    pub alpha: f64,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(id: ModelId, alpha: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Model(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        Ok(ModelSpec { id, alpha, seed })
    }
}

/// Observation window and simulation grid for generated scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneOptions {
    pub window: Window,
    /// Grid cells along the longer side of the window's bounding box.
    pub grid_cells: usize,
}

impl Default for SceneOptions {
    fn default() -> Self {
        SceneOptions { window: Window::unit_square(), grid_cells: DEFAULT_GRID_CELLS }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedScene {
    pub spec: ModelSpec,
    pub pattern: MarkedPointPattern,
    pub covariate: CovariateField,
    pub truth: DependenceTruth,
}

/// Generates a scene on the unit square with a 128 x 128 grid.
pub fn generate_model(spec: &ModelSpec) -> Result<GeneratedScene> {
    generate_model_with(spec, &SceneOptions::default())
}

pub fn generate_model_with(spec: &ModelSpec, opts: &SceneOptions) -> Result<GeneratedScene> {
    let spec = ModelSpec::new(spec.id, spec.alpha, spec.seed)?;
    let window = &opts.window;
    let grid = GridGeometry::covering(&window.bounding_box(), opts.grid_cells)?;
    let base = FieldSpec::standard(CorrelationModel::exponential(BASE_FIELD_SCALE)?);
    let (z1, z2) = simulate_grf_pair(&base, &grid, window, seeds::derive(spec.seed, &[TAG_FIELDS_12]))?;
    let (z3, z4) = simulate_grf_pair(&base, &grid, window, seeds::derive(spec.seed, &[TAG_FIELDS_34]))?;
    let z = [&z1, &z2, &z3, &z4];

    let a = std::f64::consts::FRAC_1_SQRT_2;
    let al = spec.alpha;
    let comp = (1.0 - al * al).max(0.0).sqrt();
    let lin = |w: [f64; 4], offset: f64| transform_fields(&z, &FieldTransform::Linear { weights: w.to_vec(), offset });
    let square = |k: usize| transform_fields(&[z[k]], &FieldTransform::Square);
    // exp{-alpha Z_k^2 + 4.5 + Z1 + log(1 + 2 alpha) / 2}
    let standardized = |k: usize| -> Result<CovariateField> {
        let pen = transform_fields(&[z[k]], &FieldTransform::NegatedSquareShift { scale: al, shift: 0.0 })?;
        let rest = lin([1.0, 0.0, 0.0, 0.0], BASE_LOG_INTENSITY + (1.0 + 2.0 * al).ln() / 2.0)?;
        transform_fields(&[&pen, &rest], &FieldTransform::linear(&[1.0, 1.0]))
    };
    let b = BASE_LOG_INTENSITY;

    let (log_int, marks, covariate) = match spec.id {
        ModelId::M1 => (lin([1.0, 0.0, 0.0, 0.0], b)?, z2.clone(), z3.clone()),
        ModelId::M2 => (lin([1.0, 0.0, 0.0, 0.0], b)?, lin([0.0, a, a, 0.0], 0.0)?, lin([0.0, a, 0.0, a], 0.0)?),
        ModelId::M3 => (lin([a, 0.0, a, 0.0], b)?, z2.clone(), z3.clone()),
        ModelId::M4 => (lin([a, a, 0.0, 0.0], b)?, z2.clone(), z3.clone()),
        ModelId::M5 => (lin([0.0, a, a, 0.0], b)?, z2.clone(), z3.clone()),
        ModelId::M6 => (lin([a, a, 0.0, 0.0], b)?, lin([0.0, a, 0.0, a], 0.0)?, lin([0.0, 0.0, a, a], 0.0)?),
        ModelId::M7 => (lin([a, 0.0, a, 0.0], b)?, lin([0.0, a, 0.0, a], 0.0)?, lin([0.0, 0.0, a, a], 0.0)?),
        ModelId::M8 => (lin([a, a, 0.0, 0.0], b)?, lin([a, 0.0, a, 0.0], 0.0)?, lin([0.0, a, a, 0.0], 0.0)?),
        ModelId::M9 => (lin([comp, 0.0, al, 0.0], b)?, z2.clone(), z3.clone()),
        ModelId::M10 => (standardized(2)?, square(1)?, square(2)?),
        ModelId::M11 => (lin([comp, al, 0.0, 0.0], b)?, z2.clone(), z3.clone()),
        ModelId::M12 => (standardized(1)?, square(1)?, square(2)?),
    };

    let unmarked = simulate_cox(&log_int, window, seeds::derive(spec.seed, &[TAG_POINTS]))?;
    let values = unmarked.points().iter().map(|p| marks.eval(*p)).collect::<Result<Vec<f64>>>()?;
    let pattern = unmarked.with_marks(Marks::Numeric { values })?;
    Ok(GeneratedScene { spec, pattern, covariate, truth: spec.id.truth(spec.alpha) })
}
