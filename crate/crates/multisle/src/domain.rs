//! Boundary link patterns and the decomposition of the half-plane as
//! sampled curves are removed from it.
//!
//! A link pattern pairs up marked boundary points; it is realizable when
//! the pairing is noncrossing on the circle that closes the real line
//! through infinity. Removing a curve splits its component: marked points
//! that survive the curve's Loewner flow stay in outer components, while
//! points overrun by the hull are grouped into sealed pockets by the
//! capacity at which the flow absorbs them. Every occupied component gets
//! a composable conformal chart onto the half-plane — slit steps, Möbius
//! factors, and pocket uniformizers — reporting boundary images together
//! with the derivative factors needed to transport boundary weights.
//!
//! Two classification routes coexist, by the nature of the removed curve:
//!
//! * A curve given by a sampled driving path classifies marked points by
//!   the exact boundary flow — absorption when the driver crosses the
//!   point's image — and groups absorbed points into pockets by their
//!   absorption capacities, refined with in-between probes.
//! * A curve welded from a polyline classifies geometrically, by the
//!   polyline's touchdowns: runs of vertices dipping below the trace's
//!   own resolution mark where the curve meets the boundary, and each
//!   touchdown seals the interval between it and the attached earlier
//!   footprint. The flow alone cannot see these seals — a welded chart
//!   squeezes a sealed region without ever driving across it.
//!
//! Pocket boundaries come from the same source in both routes: the
//! sub-polyline of the trace between the sealing touchdown and the
//! previous one is the pocket's ceiling, handed to the welding
//! uniformizer over the pocket's real cut.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::loewner::{BoundaryFlow, LoewnerChart, TracePoint};
use crate::maps::{mobius_to_chord, MobiusMap};
use crate::zipper::ZipperChart;
use crate::{Error, Result};

/// Geometric tolerance, relative to the configuration diameter: marked
/// points closer than this to a removed curve are flagged consumed, and
/// pocket cuts are resolved to this precision.
pub const TOL_GEOM: f64 = 1e-3;

/// Capacity tolerance for grouping absorption times into pockets.
pub fn tol_swallow(dt: f64) -> f64 {
    5.0 * dt
}

// ---------------------------------------------------------------------------
// Link patterns
// ---------------------------------------------------------------------------

/// Whether a pairing of boundary points can be realized by disjoint
/// curves in the half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Realizability {
    /// Noncrossing pairing: disjoint chords exist.
    Realizable,
    /// Well-formed but crossing pairing: no disjoint realization.
    Crossing,
}

/// A sequence of links `(a_j, b_j)`: pairs of distinct boundary points of
/// the half-plane, reals or `+∞` (at most one point at infinity).
#[derive(Debug, Clone, PartialEq)]
pub struct LinkPattern {
    links: Vec<(f64, f64)>,
}

impl LinkPattern {
    pub fn new(links: Vec<(f64, f64)>) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::InvalidPattern("pattern has no links".into()));
        }
        let mut flat: Vec<(f64, usize, usize)> = Vec::with_capacity(2 * links.len());
        for (j, &(a, b)) in links.iter().enumerate() {
            for (side, v) in [(0usize, a), (1usize, b)] {
                if v.is_nan() {
                    return Err(Error::InvalidPattern(format!(
                        "link {} endpoint {} is not a number",
                        j + 1,
                        side + 1
                    )));
                }
                if v == f64::NEG_INFINITY {
                    return Err(Error::InvalidPattern(format!(
                        "link {} endpoint {}: the boundary point at infinity is written +inf",
                        j + 1,
                        side + 1
                    )));
                }
                flat.push((v, j, side));
            }
            if a == b {
                return Err(Error::InvalidPattern(format!(
                    "link {} has coincident endpoints ({a}, {b})",
                    j + 1
                )));
            }
        }
        flat.sort_by(|l, r| l.0.partial_cmp(&r.0).expect("endpoints are ordered"));
        for w in flat.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidPattern(format!(
                    "links {} and {} share the endpoint {} (endpoints must be distinct)",
                    w[0].1 + 1,
                    w[1].1 + 1,
                    w[0].0
                )));
            }
        }
        Ok(Self { links })
    }

    pub fn n(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[(f64, f64)] {
        &self.links
    }

    /// The `j`-th link, 1-based.
    pub fn link(&self, j: usize) -> Result<(f64, f64)> {
        self.check_index(j)?;
        Ok(self.links[j - 1])
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.links.len() {
            return Err(Error::OutOfRange(format!(
                "link index {j} outside 1..={}",
                self.links.len()
            )));
        }
        Ok(())
    }

    /// Removes the `j`-th link (1-based), keeping the order of the rest.
    pub fn remove_link(&self, j: usize) -> Result<LinkPattern> {
        self.check_index(j)?;
        if self.links.len() == 1 {
            return Err(Error::InvalidPattern(
                "removing the only link leaves an empty pattern".into(),
            ));
        }
        let mut links = self.links.clone();
        links.remove(j - 1);
        LinkPattern::new(links)
    }

    /// Relabels links by a permutation given as the 1-based image list
    /// `sigma[i-1] = σ(i)`: link `i` of the result is the link that σ
    /// sends to `i`, so the result `q` satisfies `q_i = p_{σ⁻¹(i)}` and
    /// composes as a left action.
    pub fn permute(&self, sigma: &[usize]) -> Result<LinkPattern> {
        let n = self.links.len();
        if sigma.len() != n {
            return Err(Error::InvalidInput(format!(
                "permutation length {} does not match {} links",
                sigma.len(),
                n
            )));
        }
        let mut inverse = vec![0usize; n];
        for (i, &s) in sigma.iter().enumerate() {
            if s == 0 || s > n {
                return Err(Error::InvalidInput(format!(
                    "permutation value {s} outside 1..={n}"
                )));
            }
            if inverse[s - 1] != 0 {
                return Err(Error::InvalidInput(format!(
                    "permutation repeats the value {s}"
                )));
            }
            inverse[s - 1] = i + 1;
        }
        let links = (0..n).map(|i| self.links[inverse[i] - 1]).collect();
        LinkPattern::new(links)
    }

    /// Noncrossing test on the circle closing the real line through
    /// infinity. Crossings are invariant under moving the cut point, so a
    /// single linear scan with the infinite point placed last suffices.
    pub fn realizability(&self) -> Realizability {
        let mut order: Vec<(f64, usize)> = Vec::with_capacity(2 * self.links.len());
        for (j, &(a, b)) in self.links.iter().enumerate() {
            order.push((a, j));
            order.push((b, j));
        }
        order.sort_by(|l, r| l.0.partial_cmp(&r.0).expect("endpoints are ordered"));
        let mut stack: Vec<usize> = Vec::new();
        for &(_, j) in &order {
            if stack.last() == Some(&j) {
                stack.pop();
            } else {
                stack.push(j);
            }
        }
        if stack.is_empty() {
            Realizability::Realizable
        } else {
            Realizability::Crossing
        }
    }
}

/// Realizability of a well-formed pattern.
pub fn is_link_pattern(pattern: &LinkPattern) -> Realizability {
    pattern.realizability()
}

/// Removes link `j` (1-based) from the pattern.
pub fn remove_link(pattern: &LinkPattern, j: usize) -> Result<LinkPattern> {
    pattern.remove_link(j)
}

/// Relabels the pattern by σ (1-based image list).
pub fn permute(pattern: &LinkPattern, sigma: &[usize]) -> Result<LinkPattern> {
    pattern.permute(sigma)
}

/// The cycle that shifts the tail block: `σ(k) = k+1` for `j ≤ k < n` and
/// `σ(n) = j`, identity below `j`. Permuting with it moves the last link
/// into slot `j`, so removing slot `j` afterwards equals removing the
/// last link of the original pattern.
pub fn tail_cycle(j: usize, n: usize) -> Vec<usize> {
    (1..=n)
        .map(|k| if k < j { k } else if k < n { k + 1 } else { j })
        .collect()
}

/// Cross-ratio of a second link against a reference link, after a Möbius
/// normalization carrying the reference to `(0, ∞)`. Returns the ratio in
/// `(0, 1)` after relabeling the endpoints; crossing configurations have
/// no such normalization and are rejected.
pub fn cross_ratio(reference: (f64, f64), link: (f64, f64)) -> Result<f64> {
    let normalize = mobius_to_chord(reference.0, reference.1)?.inverse();
    let x = normalize.apply_boundary(link.0);
    let y = normalize.apply_boundary(link.1);
    if !x.is_finite() || !y.is_finite() || x == 0.0 || y == 0.0 {
        return Err(Error::InvalidPattern(format!(
            "link endpoints ({}, {}) collide with the reference link",
            link.0, link.1
        )));
    }
    if x.signum() != y.signum() {
        return Err(Error::InvalidPattern(
            "links cross: endpoints straddle the normalized chord".into(),
        ));
    }
    let r = x / y;
    Ok(if r > 1.0 { 1.0 / r } else { r })
}

// ---------------------------------------------------------------------------
// Component charts
// ---------------------------------------------------------------------------

/// One stage of a component chart.
#[derive(Debug, Clone)]
pub enum ChartStage {
    Mobius(MobiusMap),
    Curve(LoewnerChart),
    Pocket(ZipperChart),
}

/// Composable conformal chart from a component of the (possibly cut)
/// half-plane onto the half-plane. Stages apply in order. Boundary
/// transport reports the image together with the accumulated logarithmic
/// derivative; the derivative at a point mapped from or to infinity uses
/// the determinant-normalized Möbius convention under which the product
/// `|φ(u) − φ(v)|² / (λ(u) λ(v))` is preserved exactly with the distance
/// to the infinite boundary point read as one.
#[derive(Debug, Clone, Default)]
pub struct ComponentChart {
    pub stages: Vec<ChartStage>,
    /// Sum of the accuracy reports of the inexact (pocket) stages; exact
    /// stages contribute zero.
    pub accuracy: f64,
}

impl ComponentChart {
    pub fn identity() -> Self {
        Self { stages: Vec::new(), accuracy: 0.0 }
    }

    pub fn apply(&self, z: Complex64) -> Complex64 {
        let mut z = z;
        for stage in &self.stages {
            z = match stage {
                ChartStage::Mobius(m) => m.apply(z),
                ChartStage::Curve(c) => c.apply(z),
                ChartStage::Pocket(p) => p.apply(z),
            };
        }
        z
    }

    pub fn apply_inverse(&self, z: Complex64) -> Complex64 {
        let mut z = z;
        for stage in self.stages.iter().rev() {
            z = match stage {
                ChartStage::Mobius(m) => m.inverse().apply(z),
                ChartStage::Curve(c) => c.apply_inverse(z),
                ChartStage::Pocket(p) => p.apply_inverse(z),
            };
        }
        z
    }

    /// Boundary image and accumulated log-derivative of a marked point.
    /// Fails if any stage consumes the point (absorbed by a hull, outside
    /// a pocket cut, or at a Möbius pole).
    pub fn boundary(&self, u: f64) -> Result<(f64, f64)> {
        let mut x = u;
        let mut log_lambda = 0.0;
        for stage in &self.stages {
            match stage {
                ChartStage::Mobius(m) => {
                    let det = m.det();
                    if x.is_infinite() {
                        if m.c == 0.0 {
                            // Affine map fixing infinity: pair-normalized
                            // derivative is the reciprocal of the finite one.
                            log_lambda += (m.d * m.d / det).ln();
                        } else {
                            log_lambda += (det / (m.c * m.c)).ln();
                            x = m.a / m.c;
                        }
                    } else {
                        let den = m.c * x + m.d;
                        if den == 0.0 {
                            return Err(Error::InvalidInput(format!(
                                "boundary point {u} hits the pole of a Möbius stage"
                            )));
                        }
                        log_lambda += (det / (den * den)).ln();
                        x = m.apply_boundary(x);
                    }
                }
                ChartStage::Curve(c) => {
                    if x.is_infinite() {
                        continue;
                    }
                    match c.flow_boundary(x) {
                        crate::loewner::FlowOutcome::Survived { position, log_derivative } => {
                            x = position;
                            log_lambda += log_derivative;
                        }
                        crate::loewner::FlowOutcome::Swallowed { step } => {
                            return Err(Error::InvalidInput(format!(
                                "boundary point {u} was absorbed at step {step} of a curve stage"
                            )));
                        }
                    }
                }
                ChartStage::Pocket(p) => {
                    if x.is_infinite() {
                        return Err(Error::InvalidInput(
                            "the point at infinity does not lie on a pocket boundary".into(),
                        ));
                    }
                    let (img, log_der) = p.apply_boundary(x)?;
                    x = img;
                    log_lambda += log_der;
                }
            }
        }
        Ok((x, log_lambda))
    }

    fn then(&self, stage: ChartStage, extra_accuracy: f64) -> Self {
        let mut stages = self.stages.clone();
        stages.push(stage);
        Self { stages, accuracy: self.accuracy + extra_accuracy }
    }
}

// ---------------------------------------------------------------------------
// Flow helpers
// ---------------------------------------------------------------------------

/// Absorption step (1-based) of a boundary point under the first
/// `k_limit` slit steps, or None if it outlives them. Early exit keeps
/// footprint bisection and probe refinement cheap.
fn flow_die_step(chart: &LoewnerChart, u: f64, k_limit: usize) -> Option<usize> {
    if u.is_infinite() {
        return None;
    }
    let mut point = BoundaryFlow::new(u);
    for (k, s) in chart.steps[..k_limit.min(chart.steps.len())].iter().enumerate() {
        if !point.step(s.w, s.dt) {
            return Some(k + 1);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Domain state
// ---------------------------------------------------------------------------

/// Side of a curve's final driving value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Left,
    Right,
}

/// What a component is, and what is known about its closure.
#[derive(Debug, Clone)]
pub enum ComponentKind {
    /// The full half-plane before any removal.
    Root,
    /// Points still flowing after the last removed curve. `side` is set
    /// when the curve runs to the chart's boundary point at infinity and
    /// therefore splits its component in the limit; `driver` is the final
    /// driving value in the component's own chart coordinates.
    Survivor { side: Option<Side>, driver: f64 },
    /// A region sealed off by the curve at the given capacity.
    Pocket { capacity: f64, ambiguous_pairs: usize, diag: Option<PocketDiag> },
}

/// Assembly diagnostics of a pocket boundary.
#[derive(Debug, Clone, Serialize)]
pub struct PocketDiag {
    /// Real cut of the pocket in the coordinates of the removing curve.
    pub cut: (f64, f64),
    /// Largest height of the assembled ceiling polyline.
    pub height: f64,
    /// Vertices kept for the uniformizer.
    pub vertices: usize,
    /// Height below which trace vertices count as touching the boundary.
    pub touch_resolution: f64,
    /// Largest gap closed between the ceiling ends and the cut ends.
    pub max_jump: f64,
    /// Closest physical approach of the trace to the boundary around the
    /// sealing step. Large values relative to the cut mean the seal rests
    /// on flow events the trace resolution cannot confirm.
    pub seal_clearance: f64,
}

/// Chart availability for a component.
#[derive(Debug, Clone)]
pub enum ChartStatus {
    Ready(ComponentChart),
    /// Not built: the component cannot carry a whole link (fewer than two
    /// marked points), so no weight is ever transported through it.
    Skipped,
    /// Construction failed; samples needing this chart count as rejected.
    Failed(String),
}

/// One connected piece of the cut domain, with the marked points it holds.
#[derive(Debug, Clone)]
pub struct Component {
    pub members: Vec<usize>,
    pub kind: ComponentKind,
    pub chart: ChartStatus,
}

/// Classification of a marked point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointClass {
    Active { component: usize },
    /// Used up as an endpoint of the `curve`-th removed curve (1-based).
    Endpoint { curve: usize },
    /// Came within the geometric tolerance of the `curve`-th removed
    /// curve near the given capacity: weight zero downstream.
    Consumed { curve: usize, capacity: f64 },
}

/// Marked boundary points of the half-plane and the partition induced by
/// the curves removed so far. A value type: splitting returns a new state.
#[derive(Debug, Clone)]
pub struct DomainState {
    pub marked: Vec<f64>,
    pub diameter: f64,
    pub assignment: Vec<PointClass>,
    pub components: Vec<Component>,
    pub curves_removed: usize,
}

impl DomainState {
    pub fn new(marked: Vec<f64>) -> Result<Self> {
        if marked.is_empty() {
            return Err(Error::InvalidInput("no marked points".into()));
        }
        let mut finite: Vec<f64> = Vec::new();
        let mut infinite = 0usize;
        for (i, &u) in marked.iter().enumerate() {
            if u.is_nan() || u == f64::NEG_INFINITY {
                return Err(Error::InvalidInput(format!(
                    "marked point {i} must be real or +inf, got {u}"
                )));
            }
            if u.is_infinite() {
                infinite += 1;
            } else {
                finite.push(u);
            }
        }
        if infinite > 1 {
            return Err(Error::InvalidInput(
                "at most one marked point may sit at infinity".into(),
            ));
        }
        let mut sorted = finite.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite reals"));
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidInput(format!(
                    "marked points must be distinct, {} repeats",
                    w[0]
                )));
            }
        }
        let diameter = match (sorted.first(), sorted.last()) {
            (Some(lo), Some(hi)) if hi > lo => hi - lo,
            (Some(lo), _) => lo.abs().max(1.0),
            _ => 1.0,
        };
        let n = marked.len();
        Ok(Self {
            marked,
            diameter,
            assignment: vec![PointClass::Active { component: 0 }; n],
            components: vec![Component {
                members: (0..n).collect(),
                kind: ComponentKind::Root,
                chart: ChartStatus::Ready(ComponentChart::identity()),
            }],
            curves_removed: 0,
        })
    }

    /// Chart of an occupied component, if it was built successfully.
    pub fn chart_for(&self, component: usize) -> Result<&ComponentChart> {
        let comp = self.components.get(component).ok_or_else(|| {
            Error::OutOfRange(format!(
                "component {component} outside 0..{}",
                self.components.len()
            ))
        })?;
        match &comp.chart {
            ChartStatus::Ready(chart) => Ok(chart),
            ChartStatus::Skipped => Err(Error::ChartFailed(format!(
                "component {component} holds fewer than two marked points; no chart was built"
            ))),
            ChartStatus::Failed(msg) => {
                Err(Error::ChartFailed(format!("component {component}: {msg}")))
            }
        }
    }

    /// Component holding the given marked point, if it is still active.
    pub fn component_of(&self, marked_index: usize) -> Option<usize> {
        match self.assignment.get(marked_index) {
            Some(PointClass::Active { component }) => Some(*component),
            _ => None,
        }
    }

    /// Export of the partition: marked-point classes, component kinds,
    /// sealing capacities, chart accuracies.
    pub fn report(&self) -> PartitionReport {
        let marked = self
            .marked
            .iter()
            .zip(&self.assignment)
            .enumerate()
            .map(|(index, (&position, class))| {
                let (class_name, component, curve, capacity) = match class {
                    PointClass::Active { component } => {
                        ("active", Some(*component), None, None)
                    }
                    PointClass::Endpoint { curve } => ("endpoint", None, Some(*curve), None),
                    PointClass::Consumed { curve, capacity } => {
                        ("consumed", None, Some(*curve), Some(*capacity))
                    }
                };
                MarkedEntry {
                    index,
                    position,
                    class: class_name.into(),
                    component,
                    curve,
                    capacity,
                }
            })
            .collect();
        let components = self
            .components
            .iter()
            .enumerate()
            .map(|(id, comp)| {
                let (kind, capacity, ambiguous_pairs, diag) = match &comp.kind {
                    ComponentKind::Root => ("root".to_string(), None, None, None),
                    ComponentKind::Survivor { side, .. } => (
                        match side {
                            Some(Side::Left) => "survivor-left".to_string(),
                            Some(Side::Right) => "survivor-right".to_string(),
                            None => "survivor".to_string(),
                        },
                        None,
                        None,
                        None,
                    ),
                    ComponentKind::Pocket { capacity, ambiguous_pairs, diag } => (
                        "pocket".to_string(),
                        Some(*capacity),
                        Some(*ambiguous_pairs),
                        diag.clone(),
                    ),
                };
                let (chart, accuracy) = match &comp.chart {
                    ChartStatus::Ready(c) => ("ready".to_string(), Some(c.accuracy)),
                    ChartStatus::Skipped => ("skipped".to_string(), None),
                    ChartStatus::Failed(msg) => (format!("failed: {msg}"), None),
                };
                ComponentEntry {
                    id,
                    kind,
                    members: comp.members.clone(),
                    capacity,
                    ambiguous_pairs,
                    chart,
                    accuracy,
                    pocket: diag,
                }
            })
            .collect();
        PartitionReport {
            curves_removed: self.curves_removed,
            diameter: self.diameter,
            marked,
            components,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionReport {
    pub curves_removed: usize,
    pub diameter: f64,
    pub marked: Vec<MarkedEntry>,
    pub components: Vec<ComponentEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MarkedEntry {
    pub index: usize,
    pub position: f64,
    pub class: String,
    pub component: Option<usize>,
    pub curve: Option<usize>,
    pub capacity: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentEntry {
    pub id: usize,
    pub kind: String,
    pub members: Vec<usize>,
    pub capacity: Option<f64>,
    pub ambiguous_pairs: Option<usize>,
    pub chart: String,
    pub accuracy: Option<f64>,
    pub pocket: Option<PocketDiag>,
}

// ---------------------------------------------------------------------------
// Splitting a component by a removed curve
// ---------------------------------------------------------------------------

/// A curve to remove, given in the coordinates it was sampled in: a
/// `0 → ∞` rooted driving chart, reached from the component's chart by a
/// Möbius change of variables.
#[derive(Debug, Clone)]
pub struct SampledCurve {
    /// Component the curve was sampled in.
    pub component: usize,
    /// Marked indices consumed as the curve's endpoints, if any.
    pub endpoints: Option<(usize, usize)>,
    /// Change of variables from the component's chart coordinates to the
    /// curve's own coordinates (identity when the curve was sampled
    /// directly in the chart).
    pub to_source: MobiusMap,
    /// The curve's driving chart in its own coordinates.
    pub chart: LoewnerChart,
    /// Whether the curve runs to the boundary point at infinity of its
    /// own coordinates. Such a curve splits survivors by the side of its
    /// final driving value — the split its completion will enforce. A
    /// bare hull (a diagnostic slit, or a welded closed chord) keeps all
    /// survivors in one component.
    pub targets_infinity: bool,
    /// For a chart welded from a polyline: the polyline in the curve's
    /// own coordinates, one vertex per slit step. When present, pockets
    /// are classified from its touchdown geometry rather than from the
    /// boundary flow (see the module notes).
    pub polyline: Option<Vec<Complex64>>,
}

/// Removes a curve from its component: classifies that component's marked
/// points by the sealed flow, groups absorbed points into pockets by
/// capacity, assembles pocket boundaries from the curve's own trace data,
/// and attaches a chart to every occupied new component. Other components
/// carry over unchanged (their indices may shift; assignments follow).
pub fn component_split(state: &DomainState, curve: &SampledCurve) -> Result<DomainState> {
    let comp = state.components.get(curve.component).ok_or_else(|| {
        Error::OutOfRange(format!(
            "component {} outside 0..{}",
            curve.component,
            state.components.len()
        ))
    })?;
    let base_chart = match &comp.chart {
        ChartStatus::Ready(chart) => chart,
        _ => {
            return Err(Error::ChartFailed(format!(
                "component {} has no usable chart to sample in",
                curve.component
            )))
        }
    };
    if curve.chart.n_steps() == 0 {
        return Err(Error::InvalidInput("curve has no slit steps".into()));
    }
    if let Some((ea, eb)) = curve.endpoints {
        for idx in [ea, eb] {
            if state.component_of(idx) != Some(curve.component) {
                return Err(Error::InvalidInput(format!(
                    "endpoint marked index {idx} is not active in component {}",
                    curve.component
                )));
            }
        }
    }

    // Chart chain from physical coordinates to the curve's own.
    let base = ComponentChart {
        stages: {
            let mut stages = base_chart.stages.clone();
            stages.push(ChartStage::Mobius(curve.to_source));
            stages
        },
        accuracy: base_chart.accuracy,
    };

    let curve_index = state.curves_removed + 1;
    let steps = &curve.chart.steps;
    let n_steps = steps.len();
    let mut cumcap = Vec::with_capacity(n_steps + 1);
    cumcap.push(0.0);
    for s in steps {
        cumcap.push(cumcap.last().unwrap() + s.dt);
    }
    let total_capacity = *cumcap.last().unwrap();
    let dt_eff = total_capacity / n_steps as f64;
    let tol_cap = tol_swallow(dt_eff);
    let driver_final = steps[n_steps - 1].w;
    let consumed_dist = TOL_GEOM * state.diameter;

    let mut survivors: Vec<(usize, f64, f64)> = Vec::new(); // member, position, coord
    let mut doomed: Vec<Doomed> = Vec::new();
    let mut consumed: Vec<(usize, f64)> = Vec::new(); // member, capacity

    // Touchdown geometry of the polyline, for welded charts.
    let geometry = match &curve.polyline {
        Some(poly) => {
            if poly.len() != n_steps {
                return Err(Error::InvalidInput(format!(
                    "polyline has {} vertices but the welded chart has {} steps",
                    poly.len(),
                    n_steps
                )));
            }
            let points: Vec<TracePoint> = poly
                .iter()
                .enumerate()
                .map(|(i, &z)| TracePoint { t: cumcap[i + 1], z })
                .collect();
            Some(touch_geometry(points)?)
        }
        None => None,
    };

    let skip: Vec<usize> = curve.endpoints.map(|(a, b)| vec![a, b]).unwrap_or_default();
    for &m in &comp.members {
        if skip.contains(&m) {
            continue;
        }
        let (coord, base_log) = base.boundary(state.marked[m]).map_err(|e| {
            Error::InvalidInput(format!(
                "marked point {m} has no coordinate in the sampling chart: {e}"
            ))
        })?;
        if coord.is_infinite() {
            // Only reachable through an infinity-fixing chain, which never
            // coexists with a curve targeting infinity (the pattern would
            // need two points at infinity).
            survivors.push((m, f64::INFINITY, coord));
            continue;
        }
        // Exact boundary flow, tracking the closest physical approach to
        // the growing curve for the consumed test.
        let mut point = BoundaryFlow::new(coord);
        let mut closest = f64::INFINITY;
        let mut closest_cap = 0.0;
        let mut outcome: Option<(usize, f64)> = None; // step, tau
        for (k, s) in steps.iter().enumerate() {
            let gap = (point.x - s.w).abs();
            let dist = gap * (-(base_log + point.log_der)).exp();
            if dist < closest {
                closest = dist;
                closest_cap = cumcap[k + 1];
            }
            if !point.step(s.w, s.dt) {
                outcome = Some((k + 1, cumcap[k + 1]));
                break;
            }
        }
        if closest < consumed_dist {
            consumed.push((m, closest_cap));
            continue;
        }
        match &geometry {
            None => match outcome {
                Some((step, tau)) => {
                    doomed.push(Doomed { member: m, coord, step, tau, event: None })
                }
                None => survivors.push((m, point.x, coord)),
            },
            Some(geom) => {
                // The polyline's touchdown geometry decides membership; the
                // flow only provides survivor positions.
                if geom.runs.iter().any(|r| (coord - r.x).abs() <= geom.h_res) {
                    // Within the trace resolution of a touchdown.
                    consumed.push((m, outcome.map(|(_, tau)| tau).unwrap_or(total_capacity)));
                } else if let Some((idx, ev)) = geom
                    .events
                    .iter()
                    .enumerate()
                    .find(|(_, e)| coord > e.interval.0 && coord < e.interval.1)
                {
                    doomed.push(Doomed {
                        member: m,
                        coord,
                        step: ev.step,
                        tau: ev.capacity,
                        event: Some(idx),
                    });
                } else if let Some((_, tau)) = outcome {
                    // Absorbed by the flow yet in no geometric pocket: the
                    // trace does not resolve this point's fate.
                    consumed.push((m, tau));
                } else {
                    survivors.push((m, point.x, coord));
                }
            }
        }
    }

    // Group absorbed points into pockets.
    let mut pockets: Vec<Vec<Doomed>> = Vec::new();
    let mut ambiguous_pairs = 0usize;
    if geometry.is_some() {
        // Welded route: one pocket per occupied seal event. Two occupied
        // events within twice the capacity tolerance are flagged as
        // ambiguous, matching the sampled route's resolution bound.
        let mut by_event: BTreeMap<usize, Vec<Doomed>> = BTreeMap::new();
        for d in doomed {
            by_event
                .entry(d.event.expect("welded absorption carries its event"))
                .or_default()
                .push(d);
        }
        let mut caps: Vec<f64> = by_event
            .values()
            .map(|g| g.first().unwrap().tau)
            .collect();
        caps.sort_by(|l, r| l.partial_cmp(r).expect("capacities are ordered"));
        for pair in caps.windows(2) {
            if pair[1] - pair[0] <= 2.0 * tol_cap {
                ambiguous_pairs += 1;
            }
        }
        pockets.extend(by_event.into_values());
    } else {
        // Sampled route: chain absorption capacities, then refine with
        // in-between probes. A probe that survives past the group's last
        // seal separates two pockets that happened to close at nearby
        // capacities; a probe absorbed earlier lies in a nested sub-pocket
        // and does not split.
        doomed.sort_by(|l, r| l.tau.partial_cmp(&r.tau).expect("capacities are ordered"));
        let mut groups: Vec<Vec<Doomed>> = Vec::new();
        for d in doomed {
            match groups.last_mut() {
                Some(g) if d.tau - g.first().unwrap().tau <= tol_cap => g.push(d),
                _ => {
                    if let Some(g) = groups.last() {
                        let gap = d.tau - g.last().unwrap().tau;
                        if gap <= 2.0 * tol_cap {
                            ambiguous_pairs += 1;
                        }
                    }
                    groups.push(vec![d]);
                }
            }
        }
        for mut g in groups {
            g.sort_by(|l, r| l.coord.partial_cmp(&r.coord).expect("coordinates are ordered"));
            let tau_max = g.iter().map(|d| d.tau).fold(0.0f64, f64::max);
            let k_limit = cumcap.partition_point(|&c| c <= tau_max + tol_cap);
            let mut current: Vec<Doomed> = Vec::new();
            for d in g {
                let split = match current.last() {
                    None => false,
                    Some(prev) => (1..=8).any(|i| {
                        let u = prev.coord + (d.coord - prev.coord) * i as f64 / 9.0;
                        flow_die_step(&curve.chart, u, k_limit).is_none()
                    }),
                };
                if split {
                    pockets.push(std::mem::take(&mut current));
                }
                current.push(d);
            }
            if !current.is_empty() {
                pockets.push(current);
            }
        }
    }

    // Assemble the new components.
    let mut new_components: Vec<Component> = Vec::new();
    let mut new_assignment: Vec<(usize, usize)> = Vec::new(); // member -> local id

    let survivor_groups: Vec<(Option<Side>, Vec<(usize, f64)>)> = if curve.targets_infinity {
        let mut left = Vec::new();
        let mut right = Vec::new();
        for &(m, pos, _) in &survivors {
            if pos < driver_final {
                left.push((m, pos));
            } else {
                right.push((m, pos));
            }
        }
        vec![(Some(Side::Left), left), (Some(Side::Right), right)]
    } else {
        vec![(None, survivors.iter().map(|&(m, pos, _)| (m, pos)).collect())]
    };
    for (side, group) in survivor_groups {
        if group.is_empty() {
            continue;
        }
        let id = new_components.len();
        for &(m, _) in &group {
            new_assignment.push((m, id));
        }
        new_components.push(Component {
            members: group.iter().map(|&(m, _)| m).collect(),
            kind: ComponentKind::Survivor { side, driver: driver_final },
            chart: ChartStatus::Ready(
                base.then(ChartStage::Curve(curve.chart.clone()), 0.0),
            ),
        });
    }

    for pocket in pockets {
        let capacity = pocket.iter().map(|d| d.tau).fold(0.0f64, f64::max);
        let id = new_components.len();
        let members: Vec<usize> = pocket.iter().map(|d| d.member).collect();
        let mut extra_consumed: Vec<(usize, f64)> = Vec::new();
        let chart;
        let diag;
        if members.len() < 2 {
            chart = ChartStatus::Skipped;
            diag = None;
        } else {
            let parts = match &geometry {
                Some(geom) => welded_pocket_parts(
                    geom,
                    pocket[0].event.expect("welded pocket carries its event"),
                ),
                None => sampled_pocket_parts(&curve.chart, &cumcap, &pocket, tol_cap),
            };
            match parts
                .and_then(|(cut, arc, h_res, clr)| build_pocket_chart(cut, arc, h_res, clr))
            {
                Ok((zipper, d)) => {
                    // Points within the cut-resolution margin of the pocket
                    // ends sit too close to the curve to classify.
                    let width = d.cut.1 - d.cut.0;
                    for p in &pocket {
                        let margin = (p.coord - d.cut.0).min(d.cut.1 - p.coord);
                        if margin < TOL_GEOM * width {
                            extra_consumed.push((p.member, p.tau));
                        }
                    }
                    if d.height < TOL_GEOM * width {
                        for p in &pocket {
                            extra_consumed.push((p.member, p.tau));
                        }
                        chart = ChartStatus::Failed(format!(
                            "pocket of height {} is thinner than the tolerance over its cut {}",
                            d.height, width
                        ));
                    } else {
                        let accuracy = zipper.accuracy;
                        chart = ChartStatus::Ready(
                            base.then(ChartStage::Pocket(zipper), accuracy),
                        );
                    }
                    diag = Some(d);
                }
                Err(e) => {
                    chart = ChartStatus::Failed(e.to_string());
                    diag = None;
                }
            }
        }
        let mut kept_members = Vec::new();
        for d in &pocket {
            if extra_consumed.iter().any(|&(m, _)| m == d.member) {
                continue;
            }
            kept_members.push(d.member);
            new_assignment.push((d.member, id));
        }
        consumed.extend(extra_consumed);
        new_components.push(Component {
            members: kept_members,
            kind: ComponentKind::Pocket { capacity, ambiguous_pairs, diag },
            chart,
        });
    }

    // Rebuild the state: retained components first, then the new ones.
    let mut next = DomainState {
        marked: state.marked.clone(),
        diameter: state.diameter,
        assignment: state.assignment.clone(),
        components: Vec::new(),
        curves_removed: curve_index,
    };
    let mut remap: Vec<Option<usize>> = vec![None; state.components.len()];
    for (old_id, old_comp) in state.components.iter().enumerate() {
        if old_id == curve.component {
            continue;
        }
        remap[old_id] = Some(next.components.len());
        next.components.push(old_comp.clone());
    }
    let offset = next.components.len();
    next.components.extend(new_components);

    for class in next.assignment.iter_mut() {
        if let PointClass::Active { component } = class {
            if let Some(new_id) = remap[*component] {
                *component = new_id;
            }
        }
    }
    if let Some((ea, eb)) = curve.endpoints {
        next.assignment[ea] = PointClass::Endpoint { curve: curve_index };
        next.assignment[eb] = PointClass::Endpoint { curve: curve_index };
    }
    for &(m, capacity) in &consumed {
        next.assignment[m] = PointClass::Consumed { curve: curve_index, capacity };
    }
    for (m, local_id) in new_assignment {
        if matches!(next.assignment[m], PointClass::Consumed { .. }) {
            continue;
        }
        next.assignment[m] = PointClass::Active { component: offset + local_id };
    }
    // Membership lists mirror the assignment.
    for comp in next.components.iter_mut() {
        comp.members.clear();
    }
    for (m, class) in next.assignment.iter().enumerate() {
        if let PointClass::Active { component } = class {
            next.components[*component].members.push(m);
        }
    }
    Ok(next)
}

/// Maps a physical polyline into a component's chart, welds it there, and
/// splits the component by the welded curve. The polyline must lie inside
/// the component; `endpoints` and `targets_infinity` as in [`SampledCurve`].
pub fn split_by_polyline(
    state: &DomainState,
    component: usize,
    polyline: &[Complex64],
    targets_infinity: bool,
    endpoints: Option<(usize, usize)>,
) -> Result<DomainState> {
    let chart = state.chart_for(component)?;
    let image: Vec<Complex64> = polyline.iter().map(|&z| chart.apply(z)).collect();
    let welded = crate::loewner::weld_polyline(&image)?;
    component_split(
        state,
        &SampledCurve {
            component,
            endpoints,
            to_source: MobiusMap::identity(),
            chart: welded,
            targets_infinity,
            polyline: Some(image),
        },
    )
}

// ---------------------------------------------------------------------------
// Pocket boundary assembly
// ---------------------------------------------------------------------------

/// Bookkeeping for a marked point absorbed by the curve.
struct Doomed {
    member: usize,
    /// Coordinate in the curve's own chart before the flow.
    coord: f64,
    /// Absorption step, 1-based.
    step: usize,
    /// Absorption capacity.
    tau: f64,
    /// Index of the seal event, for welded charts.
    event: Option<usize>,
}

/// A maximal run of consecutive trace vertices within the touchdown
/// resolution of the real line, standing for one touch of the curve.
struct TouchRun {
    first: usize,
    last: usize,
    /// Real coordinate of the run's lowest vertex.
    x: f64,
    /// Capacity at that vertex.
    capacity: f64,
    /// 1-based chart step of that vertex.
    step: usize,
    min_im: f64,
}

/// A touchdown after the first seals a pocket: the boundary interval it
/// closes, the capacity at the seal, and the vertex range of the arc flown
/// since the previous touchdown, which is the pocket's ceiling.
struct SealEvent {
    interval: (f64, f64),
    capacity: f64,
    step: usize,
    arc: (usize, usize),
    /// The seal closed over hull grown before the previous touchdown, so
    /// the enclosed region's boundary is not a single trace arc.
    over_earlier: bool,
    /// Height of the sealing touchdown's lowest vertex.
    clearance: f64,
}

/// Touchdown geometry of a trace polyline: where the curve returns to the
/// boundary and which boundary intervals each return seals.
struct TouchGeometry {
    points: Vec<TracePoint>,
    runs: Vec<TouchRun>,
    events: Vec<SealEvent>,
    /// Touchdown resolution: three times the median segment length.
    h_res: f64,
}

fn touch_geometry(points: Vec<TracePoint>) -> Result<TouchGeometry> {
    if points.len() < 2 {
        return Err(Error::InvalidInput(
            "touchdown geometry needs at least two trace vertices".into(),
        ));
    }
    let mut gaps: Vec<f64> = points.windows(2).map(|w| (w[1].z - w[0].z).norm()).collect();
    gaps.sort_by(|l, r| l.partial_cmp(r).expect("segment lengths are ordered"));
    let h_res = 3.0 * gaps[gaps.len() / 2];

    // Touch runs. The first vertex always opens one: the hull is rooted at
    // the base of its slit even when the vertex itself sits higher.
    let mut runs: Vec<TouchRun> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if i > 0 && p.z.im > h_res {
            continue;
        }
        match runs.last_mut() {
            Some(r) if r.last + 1 == i => {
                r.last = i;
                if p.z.im < r.min_im {
                    r.x = p.z.re;
                    r.capacity = p.t;
                    r.step = i + 1;
                    r.min_im = p.z.im;
                }
            }
            _ => runs.push(TouchRun {
                first: i,
                last: i,
                x: p.z.re,
                capacity: p.t,
                step: i + 1,
                min_im: p.z.im,
            }),
        }
    }

    // Each later touchdown seals the interval between itself and the
    // footprint component holding the previous touchdown. Components of
    // the growing footprint merge as seals span them; a seal that absorbs
    // more than the attached component closes over earlier hull.
    let mut footprint: Vec<(f64, f64)> = vec![(runs[0].x, runs[0].x)];
    let mut events: Vec<SealEvent> = Vec::new();
    for j in 1..runs.len() {
        let prev = &runs[j - 1];
        let run = &runs[j];
        let (a, b) = *footprint
            .iter()
            .find(|&&(a, b)| prev.x >= a && prev.x <= b)
            .expect("previous touchdown lies in the footprint");
        let lo = run.x.min(a);
        let hi = run.x.max(b);
        let mut merged = (lo, hi);
        let mut absorbed = 0usize;
        footprint.retain(|&(c, d)| {
            if d >= lo && c <= hi {
                merged.0 = merged.0.min(c);
                merged.1 = merged.1.max(d);
                absorbed += 1;
                false
            } else {
                true
            }
        });
        footprint.push(merged);
        events.push(SealEvent {
            interval: (lo, hi),
            capacity: run.capacity,
            step: run.step,
            arc: (prev.last, run.first),
            over_earlier: absorbed > 1,
            clearance: run.min_im,
        });
    }
    Ok(TouchGeometry { points, runs, events, h_res })
}

/// Cut, ceiling arc, and touchdown resolution of a welded pocket, read
/// directly off its seal event.
fn welded_pocket_parts(
    geom: &TouchGeometry,
    event: usize,
) -> Result<((f64, f64), Vec<Complex64>, f64, f64)> {
    let ev = &geom.events[event];
    if ev.over_earlier {
        return Err(Error::ChartFailed(
            "pocket seals over hull grown before the previous touchdown; \
             its boundary is not a single trace arc"
                .into(),
        ));
    }
    let arc: Vec<Complex64> = geom.points[ev.arc.0..=ev.arc.1].iter().map(|p| p.z).collect();
    Ok((ev.interval, arc, geom.h_res, ev.clearance))
}

/// Cut, ceiling arc, and touchdown resolution of a sampled pocket. The
/// cut comes from bisecting the absorption predicate outward from the
/// members' hull, the ceiling from a backward scan of trace tips.
fn sampled_pocket_parts(
    chart: &LoewnerChart,
    cumcap: &[f64],
    pocket: &[Doomed],
    tol_cap: f64,
) -> Result<((f64, f64), Vec<Complex64>, f64, f64)> {
    let tau_max = pocket.iter().map(|d| d.tau).fold(0.0f64, f64::max);
    let k_seal = pocket.iter().map(|d| d.step).max().unwrap();
    let k_limit = cumcap.partition_point(|&c| c <= tau_max + tol_cap);
    let lo = pocket.iter().map(|d| d.coord).fold(f64::INFINITY, f64::min);
    let hi = pocket.iter().map(|d| d.coord).fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let res = TOL_GEOM * span;

    let in_footprint = |u: f64| flow_die_step(chart, u, k_limit).is_some();
    let bisect_edge = |inside: f64, direction: f64| -> Result<f64> {
        let mut step_out = res.max(0.05 * span);
        let mut outside = None;
        for _ in 0..60 {
            let u = inside + direction * step_out;
            if !in_footprint(u) {
                outside = Some(u);
                break;
            }
            step_out *= 2.0;
        }
        let mut far = outside.ok_or_else(|| {
            Error::ChartFailed("pocket footprint has no boundary in reach".into())
        })?;
        let mut near = inside;
        while (far - near).abs() > res {
            let mid = 0.5 * (far + near);
            if in_footprint(mid) {
                near = mid;
            } else {
                far = mid;
            }
        }
        Ok(0.5 * (far + near))
    };
    let cut_left = bisect_edge(lo, -1.0)?;
    let cut_right = bisect_edge(hi, 1.0)?;
    let (arc, h_res) = sampled_ceiling(chart, k_seal)?;
    let clearance = (k_seal.saturating_sub(25).max(1)..=(k_seal + 25).min(chart.n_steps()))
        .map(|k| chart.tip_at(k).im)
        .fold(f64::INFINITY, f64::min);
    Ok(((cut_left, cut_right), arc, h_res, clearance))
}

/// Ceiling arc of a sampled pocket: the stretch of trace between the
/// curve's previous touchdown and the sealing step. A coarse backward
/// scan of trace tips locates the previous run of tips within the
/// touchdown resolution (three times the median scanned segment length),
/// a finer scan refines both boundaries of the flight in between, and the
/// arc is the tips across it.
fn sampled_ceiling(chart: &LoewnerChart, k_seal: usize) -> Result<(Vec<Complex64>, f64)> {
    let coarse = (k_seal / 400).max(1);
    let mut grid: Vec<(usize, Complex64)> = Vec::new();
    let mut k = k_seal;
    loop {
        grid.push((k, chart.tip_at(k)));
        if k == 1 {
            break;
        }
        k = k.saturating_sub(coarse).max(1);
    }
    if grid.len() < 2 {
        return Err(Error::ChartFailed(
            "pocket seals at the first step; no ceiling arc exists".into(),
        ));
    }
    let mut hops: Vec<f64> = grid.windows(2).map(|w| (w[0].1 - w[1].1).norm()).collect();
    hops.sort_by(|l, r| l.partial_cmp(r).expect("tip gaps are ordered"));
    let h_res = 3.0 * hops[hops.len() / 2];
    let touching = |k: usize| chart.tip_at(k).im <= h_res;

    // Walk back out of the sealing run, then across the flight.
    let mut i = 1;
    while i < grid.len() && grid[i].1.im <= h_res {
        i += 1;
    }
    let run_end = i;
    while i < grid.len() && grid[i].1.im > h_res {
        i += 1;
    }
    if run_end == grid.len() {
        return Err(Error::ChartFailed(
            "the trace before the seal never leaves the touchdown resolution; \
             no ceiling arc exists"
                .into(),
        ));
    }
    let fine = (coarse / 16).max(1);

    // Step where the flight leaves the previous touchdown. The root
    // counts as one when the flight reaches the start of the curve.
    let a = if i == grid.len() {
        1
    } else {
        let mut a = grid[i].0;
        let mut k = grid[i - 1].0;
        while k > grid[i].0 + fine {
            k -= fine;
            if touching(k) {
                a = k;
                break;
            }
        }
        a
    };

    // Step where the flight meets the sealing touchdown.
    let b = {
        let mut b = grid[run_end - 1].0;
        let mut k = grid[run_end].0;
        while k + fine < grid[run_end - 1].0 {
            k += fine;
            if touching(k) {
                b = k;
                break;
            }
        }
        b
    };
    if b <= a {
        return Err(Error::ChartFailed(
            "no trace flight separates the pocket's touchdowns".into(),
        ));
    }

    let stride = ((b - a) / 600).max(1);
    let mut arc: Vec<Complex64> = Vec::new();
    let mut k = a;
    loop {
        arc.push(chart.tip_at(k));
        if k == b {
            break;
        }
        k = (k + stride).min(b);
    }
    Ok((arc, h_res))
}

/// Builds the uniformizing chart of one pocket from its boundary: the cut
/// on the real line and the ceiling arc above it. The arc may arrive in
/// either orientation; welding wants it from the right cut end to the
/// left. Fails when the arc's ends miss the cut's by more than a third of
/// its width, or when no interior probe converges.
fn build_pocket_chart(
    cut: (f64, f64),
    mut arc: Vec<Complex64>,
    h_res: f64,
    seal_clearance: f64,
) -> Result<(ZipperChart, PocketDiag)> {
    let (cut_left, cut_right) = cut;
    let width = cut_right - cut_left;
    if !(width > 0.0) {
        return Err(Error::ChartFailed(format!(
            "pocket cut is degenerate: [{cut_left}, {cut_right}]"
        )));
    }
    // Vertices at sub-resolution heights weld onto the cut's corners and
    // destabilize the chart without carrying any geometry.
    let floor = 1e-6 * width;
    arc.retain(|z| z.im > floor);
    if arc.len() < 2 {
        return Err(Error::ChartFailed(
            "pocket ceiling has fewer than two vertices above the cut".into(),
        ));
    }
    let first = arc[0];
    let last = arc[arc.len() - 1];
    let p = Complex64::new(cut_left, 0.0);
    let q = Complex64::new(cut_right, 0.0);
    let d_fwd = (first - q).norm().max((last - p).norm());
    let d_rev = (first - p).norm().max((last - q).norm());
    if d_rev < d_fwd {
        arc.reverse();
    }
    let max_jump = d_fwd.min(d_rev);
    if max_jump > 0.35 * width {
        return Err(Error::ChartFailed(format!(
            "pocket ceiling does not close onto the cut: gap {max_jump} over width {width}"
        )));
    }
    if arc.len() > 600 {
        let keep = arc.len().div_ceil(600);
        let mut thin: Vec<Complex64> = arc.iter().copied().step_by(keep).collect();
        if thin.last() != arc.last() {
            thin.push(*arc.last().unwrap());
        }
        arc = thin;
    }
    let height = arc.iter().map(|z| z.im).fold(0.0f64, f64::max);

    let mid = 0.5 * (cut_left + cut_right);
    let local_height = arc
        .iter()
        .filter(|z| (z.re - mid).abs() < 0.25 * width)
        .map(|z| z.im)
        .fold(0.0f64, f64::max);
    let mut candidates = Vec::new();
    if local_height > 0.0 {
        candidates.push(Complex64::new(mid, 0.3 * local_height));
    }
    candidates.push(Complex64::new(mid, 0.25 * height));
    let centroid = arc.iter().sum::<Complex64>() / arc.len() as f64;
    candidates.push(Complex64::new(centroid.re, 0.5 * centroid.im));

    let mut last_err = Error::ChartFailed("no probe candidate".into());
    for probe in candidates {
        match ZipperChart::build(cut_left, cut_right, &arc, probe) {
            Ok(zipper) => {
                let diag = PocketDiag {
                    cut,
                    height,
                    vertices: arc.len(),
                    touch_resolution: h_res,
                    max_jump,
                    seal_clearance,
                };
                return Ok((zipper, diag));
            }
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

// ---------------------------------------------------------------------------
// Interior points
// ---------------------------------------------------------------------------

/// Fate of an interior point under a curve's flow: absorbed when it comes
/// within the span of an incoming slit, the same trigger the boundary
/// classification uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InteriorOutcome {
    Survived { position: Complex64 },
    Swallowed { step: usize },
}

pub fn classify_interior(chart: &LoewnerChart, z: Complex64) -> Result<InteriorOutcome> {
    if !(z.im > 0.0) {
        return Err(Error::InvalidInput(format!(
            "interior point must lie in the open half-plane, got {z}"
        )));
    }
    let mut z = z;
    for (k, s) in chart.steps.iter().enumerate() {
        if (z - Complex64::new(s.w, 0.0)).norm() <= 2.0 * s.dt.sqrt() {
            return Ok(InteriorOutcome::Swallowed { step: k + 1 });
        }
        z = crate::maps::slit_forward(z, s.w, s.dt);
        if !(z.im > 0.0) {
            return Ok(InteriorOutcome::Swallowed { step: k + 1 });
        }
    }
    Ok(InteriorOutcome::Survived { position: z })
}
