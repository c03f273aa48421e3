//! Uniformization of pockets: bounded Jordan subdomains of the half-plane
//! whose boundary is a real segment `[p, q]` plus an interior arc from `q`
//! back to `p`.
//!
//! The map to the half-plane is assembled from four kinds of stages:
//!
//! 1. an opening square root that sends `q ↦ 0`, `p ↦ ∞` and flattens the
//!    cut segment onto the real axis,
//! 2. one geodesic absorption per arc vertex: a Möbius map takes the
//!    vertex image to the imaginary axis, then a centered slit map welds
//!    the circular arc joining it to the current weld tip,
//! 3. a Joukowski closing map that welds the residual defect joining the
//!    weld tip to the image of `p`,
//! 4. if the image of `p` is still at infinity when the arc is exhausted,
//!    a square map closes along the imaginary axis instead.
//!
//! Marked boundary points on the open cut `(p, q)` flow through every
//! stage in real arithmetic, accumulating the log of the boundary
//! derivative. The construction is approximate between arc vertices; the
//! `accuracy` field reports the worst flatness defect of remapped
//! boundary samples relative to the welded spread.

use num_complex::Complex64;

use crate::maps::sqrt_upper;
use crate::{Error, Result};

/// Guard for pole and slit-base coincidences in boundary flows.
const DEGENERACY_EPS: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZipStage {
    /// `z ↦ sigma i sqrt((z - q)/(z - p))`.
    Opening { p: f64, q: f64, sigma: f64 },
    /// Möbius `z ↦ d z/(d - z)` (identity when `d` is `None`) followed by
    /// the centered slit map `z ↦ sqrt(z² + h²)`.
    Absorb { d: Option<f64>, h: f64 },
    /// Joukowski weld `z ↦ (z - c) + c²/(z - c)` of the defect joining
    /// the weld tip `0` to the finite image `2c` of `p`.
    CloseFinite { c: f64 },
    /// `z ↦ sigma z²`, closing along the imaginary axis when the image
    /// of `p` remained at infinity.
    CloseUnbounded { sigma: f64 },
}

/// Conformal chart for a pocket, mapping it onto the upper half-plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ZipperChart {
    pub stages: Vec<ZipStage>,
    /// Discretization self-report: root-mean-square over boundary
    /// segments of the residual height of the segment midpoint right
    /// after the stage that welds it, relative to that stage's slit
    /// height. Shrinks as the arc is refined. Segments meeting a corner
    /// keep a fixed local defect at any resolution, so the mean is the
    /// meaningful summary; mapped-point error away from the seam is far
    /// smaller than this figure.
    pub accuracy: f64,
}

fn ensure_interior(z: Complex64, context: &str) -> Result<()> {
    if !(z.im > 0.0) || !z.re.is_finite() {
        return Err(Error::ChartFailed(format!(
            "{context}: point {z} is not strictly inside the half-plane"
        )));
    }
    Ok(())
}

fn stage_apply(stage: &ZipStage, z: Complex64) -> Complex64 {
    match *stage {
        ZipStage::Opening { p, q, sigma } => {
            let ratio = (z - q) / (z - p);
            Complex64::new(0.0, sigma) * ratio.sqrt()
        }
        ZipStage::Absorb { d, h } => {
            let m = match d {
                Some(d) => d * z / (d - z),
                None => z,
            };
            sqrt_upper(m * m + h * h)
        }
        ZipStage::CloseFinite { c } => {
            let s = z - c;
            s + c * c / s
        }
        ZipStage::CloseUnbounded { sigma } => sigma * z * z,
    }
}

fn stage_apply_inverse(stage: &ZipStage, w: Complex64) -> Complex64 {
    match *stage {
        ZipStage::Opening { p, q, .. } => {
            // Both opening sheets invert to the same rational expression.
            let w2 = w * w;
            (q + w2 * p) / (1.0 + w2)
        }
        ZipStage::Absorb { d, h } => {
            let m = sqrt_upper(w * w - h * h);
            match d {
                Some(d) => d * m / (d + m),
                None => m,
            }
        }
        ZipStage::CloseFinite { c } => {
            // Root of s² - w s + c² = 0 outside the welded semicircle.
            let disc = (w * w - 4.0 * c * c).sqrt();
            let s1 = 0.5 * (w + disc);
            let s2 = 0.5 * (w - disc);
            let s = if s1.norm_sqr() >= s2.norm_sqr() { s1 } else { s2 };
            s + c
        }
        ZipStage::CloseUnbounded { sigma } => {
            if sigma >= 0.0 {
                w.sqrt()
            } else {
                -((-w).sqrt())
            }
        }
    }
}

/// Flows a real point on the current boundary through a stage, returning
/// the new position and the log of the absolute derivative.
fn stage_apply_boundary(stage: &ZipStage, x: f64) -> Result<(f64, f64)> {
    match *stage {
        ZipStage::Opening { p, q, sigma } => {
            if !(x > p && x < q) {
                return Err(Error::OutOfRange(format!(
                    "boundary point {x} is outside the open cut ({p}, {q})"
                )));
            }
            let rho = (q - x) / (x - p);
            let img = -sigma * rho.sqrt();
            let log_der = (q - p).ln() - 2.0_f64.ln() - 0.5 * rho.ln() - 2.0 * (x - p).ln();
            Ok((img, log_der))
        }
        ZipStage::Absorb { d, h } => {
            let (m, log_m) = match d {
                Some(d) => {
                    let gap = d - x;
                    if gap.abs() <= DEGENERACY_EPS * (d.abs() + x.abs()).max(1.0) {
                        return Err(Error::ChartFailed(format!(
                            "tracked point {x} collided with the absorption pole {d}"
                        )));
                    }
                    (d * x / gap, 2.0 * (d.abs().ln() - gap.abs().ln()))
                }
                None => (x, 0.0),
            };
            if m.abs() <= DEGENERACY_EPS * h {
                return Err(Error::ChartFailed(format!(
                    "tracked point {x} landed at the base of an absorption slit"
                )));
            }
            let root = (m * m + h * h).sqrt();
            Ok((m.signum() * root, log_m + m.abs().ln() - root.ln()))
        }
        ZipStage::CloseFinite { c } => {
            let s = x - c;
            if s.abs() <= c.abs() * (1.0 + DEGENERACY_EPS) && s.abs() >= c.abs() * (1.0 - DEGENERACY_EPS)
            {
                return Err(Error::ChartFailed(format!(
                    "tracked point {x} sits at a corner of the closing weld"
                )));
            }
            if s.abs() <= DEGENERACY_EPS * c.abs() {
                return Err(Error::ChartFailed(format!(
                    "tracked point {x} collided with the closing pole"
                )));
            }
            let der = 1.0 - c * c / (s * s);
            Ok((s + c * c / s, der.abs().ln()))
        }
        ZipStage::CloseUnbounded { sigma } => {
            if x.abs() <= DEGENERACY_EPS {
                return Err(Error::ChartFailed(
                    "tracked point sits at the corner of the unbounded closing weld".into(),
                ));
            }
            Ok((sigma * x * x, 2.0_f64.ln() + x.abs().ln()))
        }
    }
}

/// Projective tracking of the image of the corner `p` during the build.
/// Only its position matters (it seeds the closing stage), so infinity is
/// represented explicitly and derivative bookkeeping is skipped.
#[derive(Debug, Clone, Copy)]
enum CornerImage {
    Finite(f64),
    Infinite,
}

impl CornerImage {
    /// `None` when the pending slit stands exactly on the corner: the
    /// welded boundary has rejoined the corner, so the pocket is closed
    /// and any remaining arc vertices sit inside the final fold.
    fn absorb(self, d: Option<f64>, h: f64) -> Option<CornerImage> {
        let after_mobius = match (self, d) {
            (CornerImage::Infinite, Some(d)) => CornerImage::Finite(-d),
            (CornerImage::Infinite, None) => CornerImage::Infinite,
            (CornerImage::Finite(x), Some(d)) => {
                if (d - x).abs() <= DEGENERACY_EPS * (d.abs() + x.abs()).max(1.0) {
                    CornerImage::Infinite
                } else {
                    CornerImage::Finite(d * x / (d - x))
                }
            }
            (CornerImage::Finite(x), None) => CornerImage::Finite(x),
        };
        match after_mobius {
            CornerImage::Infinite => Some(CornerImage::Infinite),
            CornerImage::Finite(x) => {
                if x.abs() <= DEGENERACY_EPS * h {
                    return None;
                }
                Some(CornerImage::Finite(x.signum() * (x * x + h * h).sqrt()))
            }
        }
    }
}

impl ZipperChart {
    /// Builds the chart for the pocket with cut segment `[p, q]` (`p < q`)
    /// and boundary arc `arc` running from the `q` end to the `p` end,
    /// every vertex strictly inside the half-plane. `probe` is any point
    /// in the pocket interior; it selects branch orientations.
    pub fn build(p: f64, q: f64, arc: &[Complex64], probe: Complex64) -> Result<Self> {
        if !(p < q) || !p.is_finite() || !q.is_finite() {
            return Err(Error::InvalidInput(format!(
                "pocket cut must be a finite segment with p < q, got [{p}, {q}]"
            )));
        }
        if arc.is_empty() {
            return Err(Error::InvalidInput("pocket arc needs at least one vertex".into()));
        }
        ensure_interior(probe, "pocket probe")?;

        // Opening orientation: the probe must land inside the half-plane.
        let trial = ZipStage::Opening { p, q, sigma: 1.0 };
        let probe_img = stage_apply(&trial, probe);
        if probe_img.im.abs() <= DEGENERACY_EPS * probe_img.re.abs().max(1.0) {
            return Err(Error::InvalidInput(
                "pocket probe is too close to the boundary to orient the chart".into(),
            ));
        }
        let sigma = if probe_img.im > 0.0 { 1.0 } else { -1.0 };
        let mut stages = vec![ZipStage::Opening { p, q, sigma }];
        let mut corner = CornerImage::Infinite;
        // Seam-flatness self-report: mean-square relative residual height
        // of boundary-segment midpoints right after their welding stage.
        let mut residual_sq_sum: f64 = 0.0;
        let mut prev = Complex64::new(q, 0.0);
        let mut welded = 0usize;

        for (j, &v) in arc.iter().enumerate() {
            ensure_interior(v, "pocket arc vertex")?;
            let mut zeta = v;
            for s in &stages {
                zeta = stage_apply(s, zeta);
            }
            if !(zeta.im > 0.0) || !zeta.is_finite() {
                return Err(Error::ChartFailed(format!(
                    "arc vertex {j} was overrun while welding the pocket"
                )));
            }
            let d = if zeta.re.abs() <= DEGENERACY_EPS * zeta.norm() {
                None
            } else {
                Some(zeta.norm_sqr() / zeta.re)
            };
            let h = zeta.norm_sqr() / zeta.im;
            let Some(next) = corner.absorb(d, h) else {
                // The pending slit stands on the corner: the arc has
                // conformally rejoined it, the boundary is closed, and the
                // remaining vertices lie inside the closing fold. Leave
                // them to the closing stage.
                break;
            };
            corner = next;
            stages.push(ZipStage::Absorb { d, h });

            let mut mid = 0.5 * (prev + v);
            for s in &stages {
                mid = stage_apply(s, mid);
            }
            if mid.is_finite() {
                let r = mid.im / h;
                residual_sq_sum += r * r;
            }
            prev = v;
            welded = j + 1;
        }
        let accuracy =
            if welded == 0 { 0.0 } else { (residual_sq_sum / welded as f64).sqrt() };

        match corner {
            CornerImage::Finite(pp) => {
                stages.push(ZipStage::CloseFinite { c: 0.5 * pp });
            }
            CornerImage::Infinite => {
                let mut z = probe;
                for s in &stages {
                    z = stage_apply(s, z);
                }
                let sigma2 = if z.re >= 0.0 { 1.0 } else { -1.0 };
                stages.push(ZipStage::CloseUnbounded { sigma: sigma2 });
            }
        }
        Ok(ZipperChart { stages, accuracy })
    }

    /// Image of an interior point of the pocket.
    pub fn apply(&self, z: Complex64) -> Complex64 {
        let mut z = z;
        for s in &self.stages {
            z = stage_apply(s, z);
        }
        z
    }

    /// Preimage in the pocket of an interior point of the half-plane.
    pub fn apply_inverse(&self, w: Complex64) -> Complex64 {
        let mut w = w;
        for s in self.stages.iter().rev() {
            w = stage_apply_inverse(s, w);
        }
        w
    }

    /// Image and log-derivative of a boundary point on the open cut.
    pub fn apply_boundary(&self, u: f64) -> Result<(f64, f64)> {
        let mut x = u;
        let mut log_der = 0.0;
        for s in &self.stages {
            let (nx, ld) = stage_apply_boundary(s, x)?;
            x = nx;
            log_der += ld;
        }
        Ok((x, log_der))
    }
}
