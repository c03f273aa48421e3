//! Random driving-function generation: plain chordal driving, the
//! two-point driver with a moving force point, and chord samples that
//! run from one boundary point to another.
//!
//! All randomness flows through [`RngStream`], a seeded counter-based
//! generator with explicit stream splitting, so every sample is
//! replayable bit-for-bit and parallel workers can use disjoint streams.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::loewner::{BoundaryFlow, DrivingPath, FlowOutcome, LoewnerChart, TracePoint};
pub use crate::maps::mobius_to_chord;
use crate::special::KappaParams;
use crate::{Error, Result};

/// Discretization of a sampled curve: the capacity step of the driving
/// grid and the capacity budget. A curve aimed at infinity runs to
/// `t_max` exactly; a chord between finite boundary points runs on a
/// grid rescaled by the squared chord length (capacity is quadratic in
/// size) with a budget of `4 t_max` at that scale, stopping on arrival.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Numerics {
    pub dt: f64,
    pub t_max: f64,
}

impl Numerics {
    pub fn new(dt: f64, t_max: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("step size must be positive, got {dt}")));
        }
        if !(t_max > 0.0) || !t_max.is_finite() {
            return Err(Error::InvalidInput(format!(
                "capacity budget must be positive, got {t_max}"
            )));
        }
        if t_max < dt {
            return Err(Error::InvalidInput(format!(
                "capacity budget {t_max} is below a single step {dt}"
            )));
        }
        Ok(Self { dt, t_max })
    }
}

impl Default for Numerics {
    fn default() -> Self {
        Self { dt: 1e-3, t_max: 20.0 }
    }
}

/// Replayable randomness source: a fixed seed plus a stream index.
/// Identical `(seed, stream_index)` pairs reproduce identical samples on
/// the same build; concurrent workers take disjoint stream indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        Self { seed, stream_index }
    }

    /// The stream for the `k`-th independent sub-task of this stream's
    /// owner. Callers hand out consecutive `k` to parallel workers.
    pub fn substream(&self, k: u64) -> Self {
        Self { seed: self.seed, stream_index: self.stream_index.wrapping_add(k) }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// Why a two-point driver run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Ran the full requested capacity.
    TimeLimit,
    /// The force point was absorbed during the given 1-based step (for a
    /// chord sample this is arrival at the target endpoint).
    ForceAbsorbed { step: usize },
    /// A tracked point was absorbed during the given 1-based step.
    TrackedAbsorbed { index: usize, step: usize },
}

/// Result of a two-point driver run. The flows are exactly what
/// [`LoewnerChart::flow_boundary`] recomputes from `driving`, so callers
/// may re-derive intermediate states from the driving path alone.
#[derive(Debug, Clone)]
pub struct TwoPointDriving {
    pub driving: DrivingPath,
    /// Force-point state at the stop time.
    pub force: FlowOutcome,
    /// Tracked-point states at the stop time, in input order.
    pub tracked: Vec<FlowOutcome>,
    pub stop: StopReason,
}

fn validate_grid(t_max: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("step size must be positive, got {dt}")));
    }
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidInput(format!("capacity horizon must be positive, got {t_max}")));
    }
    let m = (t_max / dt).round().max(1.0);
    if m > 5e7 {
        return Err(Error::InvalidInput(format!("grid of {m} steps is beyond desk scale")));
    }
    Ok(m as usize)
}

/// Advances the driver across one grid step. The attraction or repulsion
/// toward a finite force point is stiff near contact, so its flow is
/// integrated in closed form — the squared gap `(w - v)^2` moves linearly
/// at rate `2 (kappa - 6)` — after which the Gaussian increment enters at
/// the grid scale. Returns false on collision with the force point: drift
/// contact inside the step, a sign change, or near-contact after the
/// noise.
fn advance_driver(
    w: &mut f64,
    v: f64,
    kappa: f64,
    noise_scale: f64,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> bool {
    let g: f64 = rng.sample(StandardNormal);
    let noise = noise_scale * dt.sqrt() * g;
    if !v.is_finite() {
        *w += noise;
        return true;
    }
    let side = (*w - v).signum();
    let gap_sq = (*w - v) * (*w - v) + 2.0 * (kappa - 6.0) * dt;
    if gap_sq <= 0.0 {
        // The attracting flow reaches the force point inside this step.
        *w = v;
        return false;
    }
    *w = v + side * gap_sq.sqrt() + noise;
    let gap = *w - v;
    if gap.abs() <= crate::loewner::SWALLOW_EPS_FACTOR * dt.sqrt() || gap.signum() != side {
        return false;
    }
    true
}

fn run_two_point(
    params: &KappaParams,
    u_a: f64,
    u_b: f64,
    tracked: &[f64],
    t_max: f64,
    dt: f64,
    noise_scale: f64,
    stream: &RngStream,
) -> Result<TwoPointDriving> {
    if !u_a.is_finite() {
        return Err(Error::InvalidInput("driver start must be finite".into()));
    }
    if u_a == u_b {
        return Err(Error::InvalidInput("driver start and force point coincide".into()));
    }
    if tracked.iter().any(|&u| u == u_a) {
        return Err(Error::InvalidInput("tracked point coincides with the driver start".into()));
    }
    let m = validate_grid(t_max, dt)?;
    let mut rng = stream.rng();

    let mut w = u_a;
    let mut values = Vec::with_capacity(m + 1);
    values.push(w);
    let mut force = BoundaryFlow::new(u_b);
    let mut flows: Vec<BoundaryFlow> = tracked.iter().map(|&u| BoundaryFlow::new(u)).collect();
    let mut force_outcome: Option<FlowOutcome> = None;
    let mut tracked_outcomes: Vec<Option<FlowOutcome>> = vec![None; tracked.len()];
    let mut stop = StopReason::TimeLimit;

    for k in 0..m {
        let v = if force_outcome.is_none() { force.x } else { f64::INFINITY };
        if !advance_driver(&mut w, v, params.kappa, noise_scale, dt, &mut rng) {
            // Collision inside the step. Complete the step degenerately at
            // the crossing location: every point pinched together with the
            // force point then registers its own absorption, and replaying
            // the driving through a chart reproduces all outcomes.
            let step = k + 1;
            values.push(w);
            force_outcome = Some(FlowOutcome::Swallowed { step });
            stop = StopReason::ForceAbsorbed { step };
            for (i, flow) in flows.iter_mut().enumerate() {
                if tracked_outcomes[i].is_none() && !flow.step(w, dt) {
                    tracked_outcomes[i] = Some(FlowOutcome::Swallowed { step });
                }
            }
            break;
        }
        values.push(w);
        let mut stopped = None;
        if force_outcome.is_none() && !force.step(w, dt) {
            force_outcome = Some(FlowOutcome::Swallowed { step: k + 1 });
            stopped = Some(StopReason::ForceAbsorbed { step: k + 1 });
        }
        for (i, flow) in flows.iter_mut().enumerate() {
            if tracked_outcomes[i].is_none() && !flow.step(w, dt) {
                tracked_outcomes[i] = Some(FlowOutcome::Swallowed { step: k + 1 });
                if stopped.is_none() {
                    stopped = Some(StopReason::TrackedAbsorbed { index: i, step: k + 1 });
                }
            }
        }
        if let Some(reason) = stopped {
            stop = reason;
            break;
        }
    }

    let force = force_outcome.unwrap_or(FlowOutcome::Survived {
        position: force.x,
        log_derivative: force.log_der,
    });
    let tracked = tracked_outcomes
        .into_iter()
        .zip(flows)
        .map(|(outcome, flow)| {
            outcome.unwrap_or(FlowOutcome::Survived {
                position: flow.x,
                log_derivative: flow.log_der,
            })
        })
        .collect();
    Ok(TwoPointDriving { driving: DrivingPath::new(dt, values)?, force, tracked, stop })
}

/// Driving of a chordal curve rooted at 0 aiming at infinity: a scaled
/// Gaussian random walk with increment variance `kappa * dt`.
pub fn sample_chordal_driving(
    params: &KappaParams,
    t_max: f64,
    dt: f64,
    stream: &RngStream,
) -> Result<DrivingPath> {
    let out = run_two_point(params, 0.0, f64::INFINITY, &[], t_max, dt, params.kappa.sqrt(), stream)?;
    Ok(out.driving)
}

/// Driving of a chordal curve rooted at `u_a` aiming at `u_b` (finite or
/// infinite): the driver follows a walk with drift
/// `(kappa - 6) / (W - V)` — integrated in closed form within each step,
/// since it is stiff near contact — while the force point `V` and every
/// tracked point ride the elementary-map flow on the grid. Stops at
/// `t_max` or when the force point or a tracked point is absorbed,
/// whichever is first. With `u_b` infinite the drift vanishes and the
/// driver consumes the stream exactly like [`sample_chordal_driving`].
pub fn sample_two_point_driving(
    params: &KappaParams,
    u_a: f64,
    u_b: f64,
    tracked: &[f64],
    t_max: f64,
    dt: f64,
    stream: &RngStream,
) -> Result<TwoPointDriving> {
    run_two_point(params, u_a, u_b, tracked, t_max, dt, params.kappa.sqrt(), stream)
}

#[cfg(test)]
pub(crate) fn sample_two_point_noiseless(
    params: &KappaParams,
    u_a: f64,
    u_b: f64,
    t_max: f64,
    dt: f64,
    stream: &RngStream,
) -> Result<TwoPointDriving> {
    run_two_point(params, u_a, u_b, &[], t_max, dt, 0.0, stream)
}

/// A sampled chord in the upper half-plane with its extracted polyline.
#[derive(Debug, Clone)]
pub struct ChordSample {
    pub driving: DrivingPath,
    /// Polyline of the curve, rooted at `(a, 0)`; subsequent points are
    /// tips at every `stride`-th grid step plus the final one. On arrival
    /// the exact landing point `(b, 0)` is appended: absorption of the
    /// target endpoint means the curve terminates there, while the lifted
    /// tips just before the pinch are the least-resolved points of the
    /// polyline.
    pub trace: Vec<TracePoint>,
    /// Tracked-point states at the stop time (same order as the input).
    pub tracked: Vec<FlowOutcome>,
    pub stop: StopReason,
    /// True when the curve arrived: the target endpoint was absorbed.
    /// Always false for an infinite target, which is never "reached" at
    /// finite capacity.
    pub reached: bool,
    /// Distance from the end of the polyline to a finite target endpoint:
    /// exactly zero on arrival, and the gap still to cover when the run
    /// stopped at its capacity budget or at a tracked-point absorption.
    pub tip_distance: Option<f64>,
}

/// Samples a chord from `a` to `b` in the upper half-plane. A finite
/// target is given an extended budget of `4 * t_max` and the run stops
/// at arrival; an infinite target runs exactly `t_max`. The returned
/// diagnostics report whether and how closely the target was met;
/// weights computed from tracked flows are valid at any truncation.
pub fn sample_chord_trace(
    params: &KappaParams,
    a: f64,
    b: f64,
    tracked: &[f64],
    t_max: f64,
    dt: f64,
    stride: usize,
    stream: &RngStream,
) -> Result<ChordSample> {
    let budget = if b.is_finite() { 4.0 * t_max } else { t_max };
    let out = sample_two_point_driving(params, a, b, tracked, budget, dt, stream)?;
    let chart = LoewnerChart::from_driving(&out.driving);
    let mut trace = vec![TracePoint { t: 0.0, z: Complex64::new(a, 0.0) }];
    trace.extend(chart.trace(stride));
    let reached = matches!(out.stop, StopReason::ForceAbsorbed { .. });
    if reached {
        trace.push(TracePoint { t: chart.total_capacity(), z: Complex64::new(b, 0.0) });
    }
    let tip_distance = if b.is_finite() {
        let tip = trace.last().expect("trace holds at least the root").z;
        Some((tip - Complex64::new(b, 0.0)).norm())
    } else {
        None
    };
    Ok(ChordSample {
        driving: out.driving,
        trace,
        tracked: out.tracked,
        stop: out.stop,
        reached,
        tip_distance,
    })
}
