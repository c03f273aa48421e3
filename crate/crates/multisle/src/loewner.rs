//! Discrete chordal Loewner evolution built from exact vertical-slit
//! elementary maps.
//!
//! A chart is a finite composition of slit steps. Step `k` (1-based) with
//! parameters `(w_k, dt_k)` applies the exact solution of the Loewner
//! equation with constant driving `w_k` over capacity `dt_k`. Charts come
//! from two sources: sampled driving paths on a uniform capacity grid
//! (`from_driving`, where step `k` carries the grid value at the right
//! endpoint `t_k`), and welded polylines (`weld_polyline`, where each
//! vertex contributes one step that maps it exactly to the real axis).

use num_complex::Complex64;
use rayon::prelude::*;

use crate::maps::{slit_forward, slit_forward_boundary, slit_inverse};
use crate::{Error, Result};

/// Relative half-width of the absorption window around the driving value,
/// in units of the step scale `sqrt(dt)`.
pub const SWALLOW_EPS_FACTOR: f64 = 1e-6;

/// Driving function sampled on a uniform capacity grid: `values[k]` is
/// `W(k * dt)`, so a path with `n` steps stores `n + 1` values.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingPath {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl DrivingPath {
    pub fn new(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        if values.is_empty() {
            return Err(Error::InvalidInput(
                "driving path needs at least the value at t = 0".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("driving values must be finite".into()));
        }
        Ok(Self { dt, values })
    }

    pub fn n_steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn total_time(&self) -> f64 {
        self.dt * self.n_steps() as f64
    }
}

/// One elementary vertical-slit step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlitStep {
    pub w: f64,
    pub dt: f64,
}

/// Outcome of flowing a boundary point through a chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowOutcome {
    /// The point stayed on the boundary; `log_derivative` is the sum of
    /// the logs of the per-step derivative factors (each in (0, 1]).
    Survived { position: f64, log_derivative: f64 },
    /// The point was absorbed during the given 1-based step.
    Swallowed { step: usize },
}

impl FlowOutcome {
    pub fn survived(&self) -> Option<(f64, f64)> {
        match *self {
            FlowOutcome::Survived { position, log_derivative } => Some((position, log_derivative)),
            FlowOutcome::Swallowed { .. } => None,
        }
    }

    pub fn swallowed_step(&self) -> Option<usize> {
        match *self {
            FlowOutcome::Swallowed { step } => Some(step),
            FlowOutcome::Survived { .. } => None,
        }
    }
}

/// A point of the extracted trace, tagged with its capacity time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub z: Complex64,
}

/// Incremental boundary-point flow: one slit step at a time, with the
/// same absorption rule as [`LoewnerChart::flow_boundary`]. Lets samplers
/// that generate driving values on the fly share the chart's semantics
/// exactly.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryFlow {
    pub x: f64,
    pub log_der: f64,
    side: f64,
}

impl BoundaryFlow {
    pub fn new(u: f64) -> Self {
        Self { x: u, log_der: 0.0, side: 0.0 }
    }

    /// Advances through one slit step; returns false if the point is
    /// absorbed by it (position then stays at its pre-step value).
    pub fn step(&mut self, w: f64, dt: f64) -> bool {
        if self.x.is_infinite() {
            return true;
        }
        let gap = self.x - w;
        let eps = SWALLOW_EPS_FACTOR * dt.sqrt();
        if gap.abs() <= eps || (self.side != 0.0 && gap.signum() != self.side) {
            return false;
        }
        self.side = gap.signum();
        let (next, der) = slit_forward_boundary(self.x, w, dt);
        self.x = next;
        self.log_der += der.ln();
        true
    }
}

/// Composition of slit steps normalizing a growing hull.
#[derive(Debug, Clone, PartialEq)]
pub struct LoewnerChart {
    pub steps: Vec<SlitStep>,
}

impl LoewnerChart {
    pub fn from_steps(steps: Vec<SlitStep>) -> Self {
        Self { steps }
    }

    pub fn from_driving(path: &DrivingPath) -> Self {
        let steps = path.values[1..]
            .iter()
            .map(|&w| SlitStep { w, dt: path.dt })
            .collect();
        Self { steps }
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// Half-plane capacity of the hull the chart removes.
    pub fn total_capacity(&self) -> f64 {
        self.steps.iter().map(|s| s.dt).sum()
    }

    /// Capacity accumulated by the first `step` steps.
    pub fn capacity_at(&self, step: usize) -> f64 {
        self.steps[..step].iter().map(|s| s.dt).sum()
    }

    /// Forward map for a point of the half-plane outside the hull.
    pub fn apply(&self, z: Complex64) -> Complex64 {
        let mut z = z;
        for s in &self.steps {
            z = slit_forward(z, s.w, s.dt);
        }
        z
    }

    /// Forward map restricted to the steps in `range` (0-based).
    pub fn apply_partial(&self, z: Complex64, range: std::ops::Range<usize>) -> Complex64 {
        let mut z = z;
        for s in &self.steps[range] {
            z = slit_forward(z, s.w, s.dt);
        }
        z
    }

    /// Inverse map: carries the half-plane onto the complement of the hull.
    pub fn apply_inverse(&self, z: Complex64) -> Complex64 {
        let mut z = z;
        for s in self.steps.iter().rev() {
            z = slit_inverse(z, s.w, s.dt);
        }
        z
    }

    /// Flows a boundary point forward, reporting either its final position
    /// together with the accumulated log-derivative, or the step at which
    /// it was absorbed.
    ///
    /// Absorption combines two triggers. A point within
    /// `SWALLOW_EPS_FACTOR * sqrt(dt)` of the driving value sits at the
    /// slit base and is absorbed outright. A point whose side relative to
    /// the driving value flips between consecutive steps was overrun by
    /// the hull in between, which is absorption as well; the side test
    /// keeps absorption times monotone in the starting position exactly.
    pub fn flow_boundary(&self, u: f64) -> FlowOutcome {
        self.flow_boundary_from(u, 0)
    }

    /// Same as [`flow_boundary`](Self::flow_boundary) but starting at a
    /// 0-based step offset; reported absorption steps stay 1-based
    /// relative to the whole chart.
    pub fn flow_boundary_from(&self, u: f64, start: usize) -> FlowOutcome {
        if u.is_infinite() {
            return FlowOutcome::Survived { position: u, log_derivative: 0.0 };
        }
        let mut point = BoundaryFlow::new(u);
        for (j, s) in self.steps[start..].iter().enumerate() {
            if !point.step(s.w, s.dt) {
                return FlowOutcome::Swallowed { step: start + j + 1 };
            }
        }
        FlowOutcome::Survived { position: point.x, log_derivative: point.log_der }
    }

    /// Tip of the curve after `step` steps (1-based): the pullback of the
    /// step's driving value through the earlier steps. Cost is linear in
    /// `step`.
    pub fn tip_at(&self, step: usize) -> Complex64 {
        let s = self.steps[step - 1];
        let mut z = Complex64::new(s.w, 2.0 * s.dt.sqrt());
        for s in self.steps[..step - 1].iter().rev() {
            z = slit_inverse(z, s.w, s.dt);
        }
        z
    }

    /// Trace polyline at every `stride`-th step plus the final one.
    /// Total cost is quadratic in the step count divided by the stride;
    /// tips are computed in parallel.
    pub fn trace(&self, stride: usize) -> Vec<TracePoint> {
        let stride = stride.max(1);
        let n = self.n_steps();
        if n == 0 {
            return Vec::new();
        }
        let mut steps: Vec<usize> = (1..=n).filter(|k| k % stride == 0).collect();
        if steps.last() != Some(&n) {
            steps.push(n);
        }
        steps
            .into_par_iter()
            .map(|k| TracePoint { t: self.capacity_at(k), z: self.tip_at(k) })
            .collect()
    }
}

/// Recovers a chart from a curve given as an interior polyline: each
/// vertex in order contributes the unique slit step that maps its image
/// under the partial chart exactly onto the real axis. Vertices must lie
/// strictly in the upper half-plane.
pub fn weld_polyline(points: &[Complex64]) -> Result<LoewnerChart> {
    let mut steps: Vec<SlitStep> = Vec::with_capacity(points.len());
    for (i, &p) in points.iter().enumerate() {
        if !(p.im > 0.0) {
            return Err(Error::InvalidInput(format!(
                "polyline vertex {i} must lie in the open half-plane, got {p}"
            )));
        }
        let mut z = p;
        for s in &steps {
            z = slit_forward(z, s.w, s.dt);
        }
        if !(z.im > 0.0) {
            return Err(Error::ChartFailed(format!(
                "polyline vertex {i} was absorbed by the partial hull while welding"
            )));
        }
        steps.push(SlitStep { w: z.re, dt: z.im * z.im / 4.0 });
    }
    Ok(LoewnerChart::from_steps(steps))
}

/// Welding accuracy report: forward-maps the midpoints of consecutive
/// polyline segments through the recovered chart, including the step that
/// absorbs the segment, and returns the largest remaining distance from
/// the real axis relative to the capacity scale. Exact welds give zero;
/// the value grows with the gap between the polyline chords and the arcs
/// the slit steps actually remove.
pub fn weld_defect(chart: &LoewnerChart, points: &[Complex64]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let scale = chart.total_capacity().sqrt().max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for (i, pair) in points.windows(2).enumerate() {
        let mid = 0.5 * (pair[0] + pair[1]);
        // Segment i runs from vertex i to vertex i + 1, so its interior
        // is removed during welding step i + 2 (1-based).
        let img = chart.apply_partial(mid, 0..(i + 2).min(chart.n_steps()));
        worst = worst.max(img.im.abs());
    }
    worst / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn zero_driving(n: usize, dt: f64) -> DrivingPath {
        DrivingPath::new(dt, vec![0.0; n + 1]).unwrap()
    }

    #[test]
    fn zero_driving_composes_to_closed_form_interior() {
        // With W = 0 the composition telescopes to sqrt(z^2 + 4t) exactly.
        let path = zero_driving(1000, 1e-3);
        let chart = LoewnerChart::from_driving(&path);
        let t = chart.total_capacity();
        assert_relative_eq!(t, 1.0, epsilon = 1e-12);
        for &(re, im) in &[(1.0, 1.0), (-2.0, 0.5), (0.0, 3.0), (5.0, 0.01)] {
            let z = Complex64::new(re, im);
            let expected = crate::maps::sqrt_upper(z * z + Complex64::new(4.0 * t, 0.0));
            let got = chart.apply(z);
            assert_relative_eq!(got.re, expected.re, max_relative = 1e-10, epsilon = 1e-12);
            assert_relative_eq!(got.im, expected.im, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_driving_boundary_flow_matches_closed_form() {
        let path = zero_driving(500, 2e-3);
        let chart = LoewnerChart::from_driving(&path);
        let t = chart.total_capacity();
        for &u in &[0.5, 3.0, -1.25, -10.0] {
            let (pos, logd) = chart.flow_boundary(u).survived().expect("point must survive");
            let expected = u.signum() * (u * u + 4.0 * t).sqrt();
            assert_relative_eq!(pos, expected, max_relative = 1e-10);
            let der_expected = u.abs() / (u * u + 4.0 * t).sqrt();
            assert_relative_eq!(logd.exp(), der_expected, max_relative = 1e-9);
        }
        let inf = chart.flow_boundary(f64::INFINITY).survived().unwrap();
        assert_eq!(inf, (f64::INFINITY, 0.0));
    }

    #[test]
    fn forward_and_inverse_round_trip() {
        let values: Vec<f64> =
            (0..=400).map(|k| 0.3 * (k as f64 * 0.05).sin() + 0.1 * (k as f64 * 0.013).cos()).collect();
        let chart = LoewnerChart::from_driving(&DrivingPath::new(5e-4, values).unwrap());
        for &(re, im) in &[(0.4, 1.2), (-1.0, 0.3), (2.0, 2.0)] {
            let z = Complex64::new(re, im);
            let pulled = chart.apply_inverse(z);
            assert!(pulled.im > 0.0);
            let back = chart.apply(pulled);
            assert_relative_eq!(back.re, z.re, max_relative = 1e-9, epsilon = 1e-10);
            assert_relative_eq!(back.im, z.im, max_relative = 1e-9, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_driving_trace_is_vertical_segment() {
        let path = zero_driving(400, 1e-3);
        let chart = LoewnerChart::from_driving(&path);
        let trace = chart.trace(40);
        assert_eq!(trace.len(), 10);
        for p in &trace {
            assert_relative_eq!(p.z.re, 0.0, epsilon = 1e-10);
            assert_relative_eq!(p.z.im, 2.0 * p.t.sqrt(), max_relative = 1e-9);
        }
        assert_relative_eq!(trace.last().unwrap().t, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn trace_always_includes_final_step() {
        let path = zero_driving(103, 1e-3);
        let chart = LoewnerChart::from_driving(&path);
        let trace = chart.trace(10);
        assert_eq!(trace.len(), 11);
        assert_relative_eq!(trace.last().unwrap().t, 0.103, epsilon = 1e-12);
    }

    #[test]
    fn driving_jump_across_point_swallows_it() {
        // Driving sits at 0 for two steps, then jumps to 3. Points between
        // get overrun; far points survive.
        let values = vec![0.0, 0.0, 0.0, 3.0, 3.0, 3.0];
        let chart = LoewnerChart::from_driving(&DrivingPath::new(1e-2, values).unwrap());
        assert_eq!(chart.flow_boundary(1.5), FlowOutcome::Swallowed { step: 3 });
        assert_eq!(chart.flow_boundary(2.9), FlowOutcome::Swallowed { step: 3 });
        assert!(chart.flow_boundary(100.0).survived().is_some());
        assert!(chart.flow_boundary(-0.5).survived().is_some());
        // Absorption is monotone: a point between two absorbed points is
        // absorbed no later than the outer one.
        let inner = chart.flow_boundary(2.0).swallowed_step().unwrap();
        let outer = chart.flow_boundary(2.9).swallowed_step().unwrap();
        assert!(inner <= outer);
    }

    #[test]
    fn base_point_is_absorbed_immediately() {
        let values = vec![0.0, 0.0, 0.0];
        let chart = LoewnerChart::from_driving(&DrivingPath::new(1e-2, values).unwrap());
        assert_eq!(chart.flow_boundary(0.0), FlowOutcome::Swallowed { step: 1 });
    }

    #[test]
    fn welding_a_trace_recovers_the_driving() {
        // Build a chart with smooth nonzero driving, extract a dense
        // trace, weld it back, and compare driving values and capacity.
        let dt = 2.5e-4;
        let values: Vec<f64> = (0..=800).map(|k| (k as f64 * dt).sqrt() * 0.8).collect();
        let chart = LoewnerChart::from_driving(&DrivingPath::new(dt, values.clone()).unwrap());
        let trace = chart.trace(8);
        let points: Vec<Complex64> = trace.iter().map(|p| p.z).collect();
        let welded = weld_polyline(&points).unwrap();
        assert_relative_eq!(
            welded.total_capacity(),
            chart.total_capacity(),
            max_relative = 0.02
        );
        // Capacity-time pairing: compare recovered driving against the
        // original at the recovered capacity times.
        let mut t = 0.0;
        for s in &welded.steps {
            t += s.dt;
            let w_orig = 0.8 * t.min(chart.total_capacity()).sqrt();
            assert!(
                (s.w - w_orig).abs() < 0.05,
                "recovered driving {} far from {} at t = {}",
                s.w,
                w_orig,
                t
            );
        }
        let defect = weld_defect(&welded, &points);
        assert!(defect < 0.05, "weld defect too large: {defect}");
    }

    #[test]
    fn welded_chart_tips_reproduce_the_polyline() {
        let points = vec![
            Complex64::new(0.05, 0.1),
            Complex64::new(0.1, 0.22),
            Complex64::new(0.12, 0.35),
            Complex64::new(0.05, 0.45),
            Complex64::new(-0.05, 0.5),
        ];
        let chart = weld_polyline(&points).unwrap();
        assert_eq!(chart.n_steps(), points.len());
        for (k, &p) in points.iter().enumerate() {
            let tip = chart.tip_at(k + 1);
            assert_relative_eq!(tip.re, p.re, max_relative = 1e-9, epsilon = 1e-12);
            assert_relative_eq!(tip.im, p.im, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn driving_path_validation() {
        assert!(DrivingPath::new(0.0, vec![0.0]).is_err());
        assert!(DrivingPath::new(1e-3, vec![]).is_err());
        assert!(DrivingPath::new(1e-3, vec![0.0, f64::NAN]).is_err());
    }
}
