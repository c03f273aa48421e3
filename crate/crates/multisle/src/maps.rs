//! Elementary conformal maps shared by the Loewner and zipper machinery.
//!
//! Everything here acts on the closed upper half-plane. Interior points
//! are `Complex64`; boundary points are `f64` with `f64::INFINITY` /
//! `f64::NEG_INFINITY` standing for the boundary point at infinity.

use num_complex::Complex64;

/// Square root with image in the closed upper half-plane: the root of
/// `w * w == z` with `Im w >= 0`. For `z` on the nonnegative real axis
/// both roots are real and the nonnegative one is returned; boundary
/// flows use the real formulas instead of relying on that case.
#[inline]
pub fn sqrt_upper(z: Complex64) -> Complex64 {
    let p = z.sqrt();
    if p.im < 0.0 {
        -p
    } else {
        p
    }
}

/// One vertical-slit step of the forward Loewner flow: the exact solution
/// of the chordal Loewner equation over capacity `dt` with constant
/// driving `w`, mapping the half-plane minus the slit onto the half-plane.
#[inline]
pub fn slit_forward(z: Complex64, w: f64, dt: f64) -> Complex64 {
    let s = z - w;
    w + sqrt_upper(s * s + 4.0 * dt)
}

/// Inverse of [`slit_forward`]: maps the half-plane onto the half-plane
/// minus the slit of capacity `dt` rooted at `w`.
#[inline]
pub fn slit_inverse(z: Complex64, w: f64, dt: f64) -> Complex64 {
    let s = z - w;
    w + sqrt_upper(s * s - 4.0 * dt)
}

/// Forward slit step for a boundary point, with the multiplicative
/// derivative factor. The caller guarantees `u != w`; points at the slit
/// base are handled by the swallowing logic upstream.
#[inline]
pub fn slit_forward_boundary(u: f64, w: f64, dt: f64) -> (f64, f64) {
    if u.is_infinite() {
        return (u, 1.0);
    }
    let s = u - w;
    let root = (s * s + 4.0 * dt).sqrt();
    (w + s.signum() * root, s.abs() / root)
}

/// Orientation-preserving Möbius automorphism of the upper half-plane,
/// `z ↦ (a z + b) / (c z + d)` with real coefficients and `ad − bc > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobiusMap {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl MobiusMap {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> crate::Result<Self> {
        let det = a * d - b * c;
        if !(det > 0.0) || !det.is_finite() {
            return Err(crate::Error::InvalidInput(format!(
                "Mobius coefficients must have positive determinant, got {det}"
            )));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn identity() -> Self {
        Self { a: 1.0, b: 0.0, c: 0.0, d: 1.0 }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn apply(&self, z: Complex64) -> Complex64 {
        (self.a * z + self.b) / (self.c * z + self.d)
    }

    /// Image of a boundary point; infinity is mapped through the limit.
    pub fn apply_boundary(&self, u: f64) -> f64 {
        if u.is_infinite() {
            if self.c == 0.0 {
                return u.signum() * self.a.signum() * f64::INFINITY;
            }
            return self.a / self.c;
        }
        let den = self.c * u + self.d;
        if den == 0.0 {
            // The pole maps to the boundary point at infinity; the sign
            // encodes the prime end approached from u^+.
            return if self.c > 0.0 { f64::NEG_INFINITY } else { f64::INFINITY };
        }
        (self.a * u + self.b) / den
    }

    /// Derivative at a finite boundary point off the pole.
    pub fn derivative_boundary(&self, u: f64) -> f64 {
        let den = self.c * u + self.d;
        self.det() / (den * den)
    }

    pub fn inverse(&self) -> Self {
        // Determinant stays positive; no rescaling needed.
        Self { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
        }
    }
}

/// Half-plane automorphism sending `0 ↦ a` and `∞ ↦ b`, used to carry a
/// canonical `0 → ∞` sample onto the chord from `a` to `b`. Both
/// endpoints may be infinite (the identity); for finite endpoints the
/// pole is placed at distance one so the map is scale-covariant in
/// `(a, b)` jointly.
pub fn mobius_to_chord(a: f64, b: f64) -> crate::Result<MobiusMap> {
    if a == b {
        return Err(crate::Error::InvalidInput(format!(
            "chord endpoints must be distinct, got ({a}, {b})"
        )));
    }
    match (a.is_infinite(), b.is_infinite()) {
        (true, true) => MobiusMap::new(1.0, 0.0, 0.0, 1.0),
        (false, true) => MobiusMap::new(1.0, a, 0.0, 1.0),
        (true, false) => MobiusMap::new(b, -1.0, 1.0, 0.0),
        (false, false) => {
            // z ↦ (b z + a d) / (z + d), determinant d (b − a) > 0.
            let d = if b > a { 1.0 } else { -1.0 };
            MobiusMap::new(b, a * d, 1.0, d)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sqrt_upper_branch_lands_in_closed_half_plane() {
        for &(re, im) in &[(2.0, 3.0), (-2.0, 3.0), (-1.0, -1.0), (4.0, -0.1), (-5.0, 0.0)] {
            let z = Complex64::new(re, im);
            let r = sqrt_upper(z);
            assert!(r.im >= 0.0, "sqrt_upper({z}) = {r} left the half-plane");
            assert_relative_eq!((r * r).re, z.re, max_relative = 1e-12);
            assert_relative_eq!((r * r).im, z.im, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn slit_maps_are_mutually_inverse_in_the_interior() {
        let w = 0.7;
        let dt = 0.03;
        for &(re, im) in &[(1.5, 0.8), (-2.0, 0.1), (0.7, 3.0), (0.9, 0.01)] {
            let z = Complex64::new(re, im);
            let back = slit_inverse(slit_forward(z, w, dt), w, dt);
            assert_relative_eq!(back.re, z.re, max_relative = 1e-10, epsilon = 1e-12);
            assert_relative_eq!(back.im, z.im, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn slit_forward_maps_tip_preimage_to_driving_point() {
        // The slit tip w + 2i√dt is the preimage of w. dt is chosen so
        // that √dt is exactly representable and the cancellation
        // (2i√dt)² + 4dt is exact.
        let w = -1.2;
        let dt = 0.0625_f64;
        let tip = Complex64::new(w, 2.0 * dt.sqrt());
        let img = slit_forward(tip, w, dt);
        assert_relative_eq!(img.re, w, epsilon = 1e-12);
        assert!(img.im.abs() < 1e-12);
    }

    #[test]
    fn boundary_step_matches_interior_limit() {
        let (g, dg) = slit_forward_boundary(2.0, 0.5, 0.01);
        let z = Complex64::new(2.0, 1e-9);
        let gi = slit_forward(z, 0.5, 0.01);
        assert_relative_eq!(g, gi.re, max_relative = 1e-9);
        // Central finite difference for the derivative.
        let h = 1e-6;
        let (gp, _) = slit_forward_boundary(2.0 + h, 0.5, 0.01);
        let (gm, _) = slit_forward_boundary(2.0 - h, 0.5, 0.01);
        assert_relative_eq!(dg, (gp - gm) / (2.0 * h), max_relative = 1e-7);
    }

    #[test]
    fn mobius_to_chord_hits_prescribed_endpoints() {
        let cases = [(0.0, f64::INFINITY), (1.0, -1.0), (-3.0, 2.0), (f64::INFINITY, 4.0)];
        for &(a, b) in &cases {
            let m = mobius_to_chord(a, b).unwrap();
            assert!(m.det() > 0.0);
            let at0 = m.apply_boundary(0.0);
            let atinf = m.apply_boundary(f64::INFINITY);
            if a.is_infinite() {
                assert!(at0.is_infinite());
            } else {
                assert_relative_eq!(at0, a, epsilon = 1e-12);
            }
            if b.is_infinite() {
                assert!(atinf.is_infinite());
            } else {
                assert_relative_eq!(atinf, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn mobius_zero_to_infinity_is_identity() {
        let m = mobius_to_chord(0.0, f64::INFINITY).unwrap();
        assert_eq!(m, MobiusMap::identity());
    }

    #[test]
    fn mobius_inverse_and_compose_round_trip() {
        let m = mobius_to_chord(1.0, -1.0).unwrap();
        let id = m.compose(&m.inverse());
        let z = Complex64::new(0.3, 1.7);
        assert_relative_eq!(id.apply(z).re, z.re, epsilon = 1e-12);
        assert_relative_eq!(id.apply(z).im, z.im, epsilon = 1e-12);
        let u = 0.45;
        assert_relative_eq!(m.inverse().apply_boundary(m.apply_boundary(u)), u, epsilon = 1e-9);
    }

    #[test]
    fn mobius_to_chord_is_scale_covariant_for_finite_endpoints() {
        let lambda = 2.0;
        let m = mobius_to_chord(1.0, 2.0).unwrap();
        let ms = mobius_to_chord(lambda, 2.0 * lambda).unwrap();
        for &u in &[0.1, 0.9, 5.0, -3.0] {
            assert_relative_eq!(ms.apply_boundary(u), lambda * m.apply_boundary(u), max_relative = 1e-12);
        }
    }
}
