//! Observation windows, marked point patterns and the two shift mechanics.
//!
//! Windows are closed: boundary points are inside. Two ways of moving a
//! pattern are provided, a toroidal wrap on rectangles ([`MarkedPointPattern::torus_shift`])
//! and a plain translation that drops whatever leaves the window
//! ([`MarkedPointPattern::crop_shift`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance below which a point is treated as lying on a polygon edge.
const EDGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

/// Axis-aligned bounding box `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl BoundingBox {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
}

/// Observation window: a rectangle or a simple polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Window {
    Rectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
    Polygon { vertices: Vec<Point> },
}

impl Window {
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        if ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidWindow("non-finite rectangle bound".into()));
        }
        if !(x0 < x1 && y0 < y1) {
            return Err(Error::InvalidWindow(format!(
                "rectangle needs x0 < x1 and y0 < y1, got [{x0}, {x1}] x [{y0}, {y1}]"
            )));
        }
        Ok(Window::Rectangle { x0, x1, y0, y1 })
    }

    pub fn unit_square() -> Self {
        Window::Rectangle { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 }
    }

    /// Square `[0, side]^2`.
    pub fn square(side: f64) -> Result<Self> {
        Window::rectangle(0.0, side, 0.0, side)
    }

    /// Builds a polygon from its vertices in order. A repeated closing vertex
    /// is dropped. The outline must be simple and enclose positive area.
    pub fn polygon(mut vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(Error::InvalidWindow("polygon needs at least 3 vertices".into()));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidWindow("non-finite polygon vertex".into()));
        }
        if shoelace(&vertices).abs() <= 0.0 {
            return Err(Error::InvalidWindow("polygon has zero area".into()));
        }
        if self_intersects(&vertices) {
            return Err(Error::InvalidWindow("polygon outline intersects itself".into()));
        }
        Ok(Window::Polygon { vertices })
    }

    pub fn area(&self) -> f64 {
        match self {
            Window::Rectangle { x0, x1, y0, y1 } => (x1 - x0) * (y1 - y0),
            Window::Polygon { vertices } => shoelace(vertices).abs(),
        }
    }

    pub fn contains(&self, u: Point) -> bool {
        match self {
            Window::Rectangle { x0, x1, y0, y1 } => {
                u.x >= *x0 && u.x <= *x1 && u.y >= *y0 && u.y <= *y1
            }
            Window::Polygon { vertices } => polygon_contains(vertices, u),
        }
    }

    pub fn bounding_box(&self) -> BoundingBox {
        match self {
            Window::Rectangle { x0, x1, y0, y1 } => BoundingBox { x0: *x0, x1: *x1, y0: *y0, y1: *y1 },
            Window::Polygon { vertices } => {
                let mut b = BoundingBox {
                    x0: f64::INFINITY,
                    x1: f64::NEG_INFINITY,
                    y0: f64::INFINITY,
                    y1: f64::NEG_INFINITY,
                };
                for v in vertices {
                    b.x0 = b.x0.min(v.x);
                    b.x1 = b.x1.max(v.x);
                    b.y0 = b.y0.min(v.y);
                    b.y1 = b.y1.max(v.y);
                }
                b
            }
        }
    }

    pub fn is_rectangle(&self) -> bool {
        matches!(self, Window::Rectangle { .. })
    }

    /// Length of the shorter side of the bounding box.
    pub fn shorter_side(&self) -> f64 {
        let b = self.bounding_box();
        b.width().min(b.height())
    }
}

/// Signed shoelace area (positive for counter-clockwise outlines).
fn shoelace(v: &[Point]) -> f64 {
    let n = v.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum();
    0.5 * twice
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(&a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(&Point::new(a.x + t * dx, a.y + t * dy))
}

fn polygon_contains(v: &[Point], u: Point) -> bool {
    let n = v.len();
    if (0..n).any(|i| segment_distance(u, v[i], v[(i + 1) % n]) <= EDGE_TOL) {
        return true;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (v[i], v[j]);
        if (a.y > u.y) != (b.y > u.y) {
            let x_cross = a.x + (u.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if u.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_cross(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: Point, b: Point, c: Point, d: f64| {
        d == 0.0
            && c.x >= a.x.min(b.x)
            && c.x <= a.x.max(b.x)
            && c.y >= a.y.min(b.y)
            && c.y <= a.y.max(b.y)
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

fn self_intersects(v: &[Point]) -> bool {
    let n = v.len();
    for i in 0..n {
        for j in (i + 1)..n {
            // adjacent edges share a vertex by construction
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}

/// Marks attached to the points of a pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Marks {
    None,
    Numeric { values: Vec<f64> },
    /// Levels are `1..=names.len()`; `names[k - 1]` labels level `k`.
    Categorical { levels: Vec<u32>, names: Vec<String> },
}

impl Marks {
    fn len(&self) -> Option<usize> {
        match self {
            Marks::None => None,
            Marks::Numeric { values } => Some(values.len()),
            Marks::Categorical { levels, .. } => Some(levels.len()),
        }
    }

    fn select(&self, keep: &[usize]) -> Marks {
        match self {
            Marks::None => Marks::None,
            Marks::Numeric { values } => Marks::Numeric { values: keep.iter().map(|&i| values[i]).collect() },
            Marks::Categorical { levels, names } => Marks::Categorical {
                levels: keep.iter().map(|&i| levels[i]).collect(),
                names: names.clone(),
            },
        }
    }
}

/// Translation applied to a pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftVector {
    pub dx: f64,
    pub dy: f64,
}

impl ShiftVector {
    pub const ZERO: ShiftVector = ShiftVector { dx: 0.0, dy: 0.0 };

    pub fn new(dx: f64, dy: f64) -> Self {
        ShiftVector { dx, dy }
    }

    pub fn inverse(&self) -> Self {
        ShiftVector { dx: -self.dx, dy: -self.dy }
    }

    pub fn norm(&self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

/// Point locations inside a window, optionally carrying marks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedPointPattern {
    points: Vec<Point>,
    marks: Marks,
    window: Window,
}

impl MarkedPointPattern {
    pub fn new(points: Vec<Point>, marks: Marks, window: Window) -> Result<Self> {
        if let Some(n) = marks.len() {
            if n != points.len() {
                return Err(Error::LengthMismatch { expected: points.len(), got: n });
            }
        }
        if let Marks::Categorical { levels, names } = &marks {
            let m = names.len() as u32;
            if m == 0 || levels.iter().any(|&l| l == 0 || l > m) {
                return Err(Error::Validation(format!("categorical levels must lie in 1..={m}")));
            }
        }
        if let Marks::Numeric { values } = &marks {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation("non-finite numeric mark".into()));
            }
        }
        if let Some(p) = points.iter().find(|p| !window.contains(**p)) {
            return Err(Error::Validation(format!("point ({}, {}) lies outside the window", p.x, p.y)));
        }
        Ok(MarkedPointPattern { points, marks, window })
    }

    pub fn unmarked(points: Vec<Point>, window: Window) -> Result<Self> {
        Self::new(points, Marks::None, window)
    }

    /// Categorical pattern from level labels. Distinct labels are sorted and
    /// numbered `1..=M`.
    pub fn categorical<S: AsRef<str>>(points: Vec<Point>, labels: &[S], window: Window) -> Result<Self> {
        let mut names: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
        names.sort();
        names.dedup();
        let levels = labels
            .iter()
            .map(|s| names.binary_search_by(|n| n.as_str().cmp(s.as_ref())).unwrap() as u32 + 1)
            .collect();
        Self::new(points, Marks::Categorical { levels, names }, window)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn marks(&self) -> &Marks {
        &self.marks
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn numeric_marks(&self) -> Option<&[f64]> {
        match &self.marks {
            Marks::Numeric { values } => Some(values),
            _ => None,
        }
    }

    /// Number of categorical levels, if marks are categorical.
    pub fn n_levels(&self) -> Option<usize> {
        match &self.marks {
            Marks::Categorical { names, .. } => Some(names.len()),
            _ => None,
        }
    }

    /// Replaces the marks, keeping points and window.
    pub fn with_marks(self, marks: Marks) -> Result<Self> {
        Self::new(self.points, marks, self.window)
    }

    /// Wraps every point around the rectangle after translating by `v`.
    /// Points already inside stay put under a zero shift, including those
    /// on the upper boundary.
    pub fn torus_shift(&self, v: ShiftVector) -> Result<Self> {
        let Window::Rectangle { x0, x1, y0, y1 } = self.window else {
            return Err(Error::TorusUnsupported);
        };
        let wrap = |c: f64, lo: f64, hi: f64, d: f64| {
            let period = hi - lo;
            let t = c - lo + d;
            if (0.0..=period).contains(&t) {
                lo + t
            } else {
                lo + t.rem_euclid(period)
            }
        };
        let points = self
            .points
            .iter()
            .map(|p| Point::new(wrap(p.x, x0, x1, v.dx), wrap(p.y, y0, y1, v.dy)))
            .collect();
        Ok(MarkedPointPattern { points, marks: self.marks.clone(), window: self.window.clone() })
    }

    /// Translates by `v` and discards points (with their marks) that leave the window.
    pub fn crop_shift(&self, v: ShiftVector) -> Self {
        let mut points = Vec::with_capacity(self.points.len());
        let mut keep = Vec::with_capacity(self.points.len());
        for (i, p) in self.points.iter().enumerate() {
            let q = Point::new(p.x + v.dx, p.y + v.dy);
            if self.window.contains(q) {
                points.push(q);
                keep.push(i);
            }
        }
        let marks = self.marks.select(&keep);
        MarkedPointPattern { points, marks, window: self.window.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(points: &[(f64, f64)]) -> MarkedPointPattern {
        let pts = points.iter().map(|&p| p.into()).collect();
        MarkedPointPattern::unmarked(pts, Window::unit_square()).unwrap()
    }

    #[test]
    fn areas() {
        assert_eq!(Window::unit_square().area(), 1.0);
        assert_eq!(Window::rectangle(0.0, 2.0, 0.0, 3.0).unwrap().area(), 6.0);
        let tri = Window::polygon(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)]).unwrap();
        assert_eq!(tri.area(), 0.5);
    }

    #[test]
    fn degenerate_polygons_rejected() {
        let line = vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(2.0, 2.0)];
        assert!(matches!(Window::polygon(line), Err(Error::InvalidWindow(_))));
        let bowtie = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        assert!(matches!(Window::polygon(bowtie), Err(Error::InvalidWindow(_))));
        assert!(Window::rectangle(1.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn containment() {
        let w = Window::unit_square();
        assert!(w.contains(Point::new(0.5, 0.5)));
        assert!(!w.contains(Point::new(1.5, 0.5)));
        assert!(w.contains(Point::new(1.0, 0.5)));

        let l_shape = Window::polygon(vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 2.0),
            Point::new(0.0, 2.0),
        ])
        .unwrap();
        assert_eq!(l_shape.area(), 3.0);
        assert!(l_shape.contains(Point::new(0.5, 1.5)));
        assert!(!l_shape.contains(Point::new(1.5, 1.5)));
        assert!(l_shape.contains(Point::new(1.0, 1.5)));
        assert!(l_shape.contains(Point::new(1.5, 1.0 + 5e-13)));
        assert!(l_shape.contains(Point::new(2.0, 0.0)));
    }

    #[test]
    fn torus_examples() {
        let p = unit(&[(0.9, 0.9)]).torus_shift(ShiftVector::new(0.2, 0.2)).unwrap();
        assert!((p.points()[0].x - 0.1).abs() < 1e-12 && (p.points()[0].y - 0.1).abs() < 1e-12);

        let base = unit(&[(0.3, 0.3), (1.0, 0.0), (0.0, 1.0)]);
        assert_eq!(base.torus_shift(ShiftVector::ZERO).unwrap(), base);

        let p = unit(&[(0.3, 0.3)]).torus_shift(ShiftVector::new(1.0, 1.0)).unwrap();
        assert!((p.points()[0].x - 0.3).abs() < 1e-12 && (p.points()[0].y - 0.3).abs() < 1e-12);

        let p = unit(&[(0.1, 0.1)]).torus_shift(ShiftVector::new(-0.3, -2.25)).unwrap();
        assert!((p.points()[0].x - 0.8).abs() < 1e-12 && (p.points()[0].y - 0.85).abs() < 1e-12);
    }

    #[test]
    fn torus_on_polygon_is_unsupported() {
        let tri = Window::polygon(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)]).unwrap();
        let p = MarkedPointPattern::unmarked(vec![Point::new(0.2, 0.2)], tri).unwrap();
        assert!(matches!(p.torus_shift(ShiftVector::new(0.1, 0.1)), Err(Error::TorusUnsupported)));
    }

    #[test]
    fn crop_examples() {
        let base = MarkedPointPattern::new(
            vec![Point::new(0.1, 0.1), Point::new(0.9, 0.9)],
            Marks::Numeric { values: vec![1.0, 2.0] },
            Window::unit_square(),
        )
        .unwrap();
        let s = base.crop_shift(ShiftVector::new(0.2, 0.2));
        assert_eq!(s.len(), 1);
        assert!((s.points()[0].x - 0.3).abs() < 1e-12);
        assert_eq!(s.numeric_marks().unwrap(), &[1.0]);
        assert_eq!(base.crop_shift(ShiftVector::ZERO), base);
        assert!(base.crop_shift(ShiftVector::new(2.0, 2.0)).is_empty());
    }

    #[test]
    fn pattern_validation() {
        assert!(MarkedPointPattern::unmarked(vec![Point::new(2.0, 0.0)], Window::unit_square()).is_err());
        let bad = MarkedPointPattern::new(
            vec![Point::new(0.5, 0.5)],
            Marks::Numeric { values: vec![1.0, 2.0] },
            Window::unit_square(),
        );
        assert!(matches!(bad, Err(Error::LengthMismatch { .. })));
        let cat = MarkedPointPattern::categorical(
            vec![Point::new(0.1, 0.1), Point::new(0.2, 0.2), Point::new(0.3, 0.3)],
            &["theft", "arson", "theft"],
            Window::unit_square(),
        )
        .unwrap();
        match cat.marks() {
            Marks::Categorical { levels, names } => {
                assert_eq!(levels, &[2, 1, 2]);
                assert_eq!(names, &["arson", "theft"]);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn rectangle_as_polygon_has_same_area() {
        let r = Window::rectangle(0.3, 2.7, -1.1, 0.4).unwrap();
        let p = Window::polygon(vec![
            Point::new(0.3, -1.1),
            Point::new(2.7, -1.1),
            Point::new(2.7, 0.4),
            Point::new(0.3, 0.4),
        ])
        .unwrap();
        assert!((r.area() - p.area()).abs() <= 1e-12);
    }

    fn pattern_strategy() -> impl Strategy<Value = MarkedPointPattern> {
        prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64, -5.0..5.0f64), 0..40).prop_map(|v| {
            let pts = v.iter().map(|&(x, y, _)| Point::new(x, y)).collect();
            let marks = Marks::Numeric { values: v.iter().map(|t| t.2).collect() };
            MarkedPointPattern::new(pts, marks, Window::unit_square()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn torus_inverse_is_identity(p in pattern_strategy(), dx in -3.0..3.0f64, dy in -3.0..3.0f64) {
            let v = ShiftVector::new(dx, dy);
            let back = p.torus_shift(v).unwrap().torus_shift(v.inverse()).unwrap();
            prop_assert_eq!(back.len(), p.len());
            for (a, b) in back.points().iter().zip(p.points()) {
                // coordinates live on a circle of circumference 1
                let ddx = (a.x - b.x).abs();
                let ddy = (a.y - b.y).abs();
                prop_assert!(ddx.min(1.0 - ddx) <= 1e-12 && ddy.min(1.0 - ddy) <= 1e-12);
            }
            prop_assert_eq!(back.marks(), p.marks());
        }

        #[test]
        fn torus_keeps_count_and_marks(p in pattern_strategy(), dx in -3.0..3.0f64, dy in -3.0..3.0f64) {
            let s = p.torus_shift(ShiftVector::new(dx, dy)).unwrap();
            prop_assert_eq!(s.len(), p.len());
            prop_assert_eq!(s.marks(), p.marks());
            prop_assert!(s.points().iter().all(|q| s.window().contains(*q)));
        }

        #[test]
        fn crop_keeps_marks_aligned(p in pattern_strategy(), dx in -1.5..1.5f64, dy in -1.5..1.5f64) {
            let v = ShiftVector::new(dx, dy);
            let s = p.crop_shift(v);
            prop_assert!(s.len() <= p.len());
            prop_assert!(s.points().iter().all(|q| s.window().contains(*q)));
            let src = p.numeric_marks().unwrap();
            let got = s.numeric_marks().unwrap();
            // each retained point maps back to an original point with the same mark
            for (q, m) in s.points().iter().zip(got) {
                let found = p.points().iter().zip(src).any(|(o, om)| {
                    (o.x + dx - q.x).abs() < 1e-15 && (o.y + dy - q.y).abs() < 1e-15 && om == m
                });
                prop_assert!(found);
            }
        }
    }
}
