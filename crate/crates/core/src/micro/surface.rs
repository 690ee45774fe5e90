//! Unit tangent bundle of the Bolza surface as `Γ \ SL(2, ℝ)`.
//!
//! A frame `g = [[a, b], [c, d]]` represents the unit vector at `g·i` in the
//! upper half plane pointing along `t ↦ g·(e^t i)`. The geodesic flow is
//! `g ↦ g·D(t)` with `D(t) = diag(e^{t/2}, e^{-t/2})`, and `g ↦ g·R(φ)` turns
//! the vector by `2φ`, where `R(φ) = [[cos φ, sin φ], [-sin φ, cos φ]]`.
//!
//! The surface group is generated by the eight side pairings of the regular
//! octagon centred at `i` with interior angles `π/4`. Its Dirichlet domain
//! at `i` is that octagon: inradius `r` with `cosh r = 1 + √2`, circumradius
//! `R` with `cosh R = 3 + 2√2`, area `4π`.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_REDUCTION_STEPS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Frame {
    pub const IDENTITY: Frame = Frame {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    pub fn rotation(phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Self::new(c, s, -s, c)
    }

    pub fn diagonal(t: f64) -> Self {
        let e = (0.5 * t).exp();
        Self::new(e, 0.0, 0.0, 1.0 / e)
    }

    #[inline]
    pub fn mul(&self, o: &Frame) -> Frame {
        Frame {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }

    #[inline]
    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    /// Inverse, assuming `det = 1`.
    #[inline]
    pub fn inverse(&self) -> Frame {
        Frame::new(self.d, -self.b, -self.c, self.a)
    }

    /// Rescales to determinant one.
    #[inline]
    pub fn renormalize(&mut self) {
        let s = 1.0 / self.det().sqrt();
        self.a *= s;
        self.b *= s;
        self.c *= s;
        self.d *= s;
    }

    /// Base point `g·i = (x, y)`.
    #[inline]
    pub fn point(&self) -> (f64, f64) {
        let n = self.c * self.c + self.d * self.d;
        ((self.a * self.c + self.b * self.d) / n, self.det() / n)
    }

    /// Unit tangent `d/dt g·(e^t i)` at `t = 0`, as `(ẋ, ẏ)`.
    #[inline]
    pub fn tangent(&self) -> (f64, f64) {
        let n = self.c * self.c + self.d * self.d;
        let n2 = n * n;
        (2.0 * self.c * self.d / n2, (self.d * self.d - self.c * self.c) / n2)
    }

    /// The tangent turned by `+π/2`; the tangent of `g·R(π/4)`.
    #[inline]
    pub fn normal(&self) -> (f64, f64) {
        let (vx, vy) = self.tangent();
        (-vy, vx)
    }

    /// Geodesic flow for time `t` at unit speed.
    #[inline]
    pub fn flow(&self, t: f64) -> Frame {
        let e = (0.5 * t).exp();
        Frame::new(self.a * e, self.b / e, self.c * e, self.d / e)
    }

    /// Velocity reversal `Θ: g ↦ g·R(π/2)`.
    #[inline]
    pub fn reversed(&self) -> Frame {
        Frame::new(-self.b, self.a, -self.d, self.c)
    }

    pub fn max_abs_diff(&self, o: &Frame) -> f64 {
        (self.a - o.a)
            .abs()
            .max((self.b - o.b).abs())
            .max((self.c - o.c).abs())
            .max((self.d - o.d).abs())
    }
}

/// `cosh` of the hyperbolic distance between two points of the upper half plane.
#[inline]
pub fn cosh_distance(p: (f64, f64), q: (f64, f64)) -> f64 {
    let dx = p.0 - q.0;
    let dy = p.1 - q.1;
    1.0 + (dx * dx + dy * dy) / (2.0 * p.1 * q.1)
}

#[derive(Debug)]
pub struct BolzaSurface {
    generators: [Frame; 8],
    inverses: [Frame; 8],
    /// `g_k · i`.
    centers: [(f64, f64); 8],
    cosh_inradius: f64,
    cosh_circumradius: f64,
}

impl BolzaSurface {
    pub fn get() -> &'static BolzaSurface {
        static SURFACE: OnceLock<BolzaSurface> = OnceLock::new();
        SURFACE.get_or_init(BolzaSurface::build)
    }

    fn build() -> Self {
        let cosh_r = 1.0 + std::f64::consts::SQRT_2;
        let r = cosh_r.acosh();
        let mut generators = [Frame::IDENTITY; 8];
        let mut inverses = [Frame::IDENTITY; 8];
        let mut centers = [(0.0, 0.0); 8];
        for k in 0..8 {
            let rot = Frame::rotation(k as f64 * std::f64::consts::PI / 8.0);
            let g = rot.mul(&Frame::diagonal(2.0 * r)).mul(&rot.inverse());
            generators[k] = g;
            inverses[k] = g.inverse();
            centers[k] = g.point();
        }
        Self {
            generators,
            inverses,
            centers,
            cosh_inradius: cosh_r,
            cosh_circumradius: cosh_r * cosh_r,
        }
    }

    pub fn generators(&self) -> &[Frame; 8] {
        &self.generators
    }

    pub fn cosh_inradius(&self) -> f64 {
        self.cosh_inradius
    }

    pub fn cosh_circumradius(&self) -> f64 {
        self.cosh_circumradius
    }

    pub fn area(&self) -> f64 {
        4.0 * std::f64::consts::PI
    }

    /// Index of the translate `g_k·i` strictly closer to `p` than `i`, if any
    /// (the closest such translate).
    #[inline]
    fn closer_translate(&self, p: (f64, f64)) -> Option<usize> {
        // Compare |p - w|²/Im w, the common factor 1/(2 Im p) dropped.
        let base = p.0 * p.0 + (p.1 - 1.0) * (p.1 - 1.0);
        let mut best = base * (1.0 - 1e-13);
        let mut arg = None;
        for (k, w) in self.centers.iter().enumerate() {
            let dx = p.0 - w.0;
            let dy = p.1 - w.1;
            let v = (dx * dx + dy * dy) / w.1;
            if v < best {
                best = v;
                arg = Some(k);
            }
        }
        arg
    }

    pub fn contains(&self, p: (f64, f64)) -> bool {
        self.closer_translate(p).is_none()
    }

    /// Replaces `g` by `γ g` with `γ` in the group such that `γ g · i` lies in
    /// the octagon. Returns the number of generator applications.
    pub fn reduce(&self, g: &mut Frame) -> Result<usize> {
        for steps in 0..MAX_REDUCTION_STEPS {
            match self.closer_translate(g.point()) {
                None => return Ok(steps),
                Some(k) => *g = self.inverses[k].mul(g),
            }
        }
        Err(Error::DomainReduction(MAX_REDUCTION_STEPS))
    }

    /// Frame distributed according to the Liouville measure.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Frame {
        loop {
            let u: f64 = rng.random();
            let s = (1.0 + u * (self.cosh_circumradius - 1.0)).acosh();
            let theta = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
            let psi = rng.random::<f64>() * std::f64::consts::PI;
            let g = Frame::rotation(0.5 * theta)
                .mul(&Frame::diagonal(s))
                .mul(&Frame::rotation(psi));
            if self.contains(g.point()) {
                return g;
            }
        }
    }

    /// Geodesic flow for time `t` followed by reduction into the octagon.
    pub fn flow(&self, g: &Frame, t: f64) -> Result<Frame> {
        let mut h = g.flow(t);
        h.renormalize();
        self.reduce(&mut h)?;
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn generator_geometry() {
        let s = BolzaSurface::get();
        let r = s.cosh_inradius().acosh();
        for k in 0..8 {
            let g = s.generators()[k];
            assert!((g.det() - 1.0).abs() < 1e-12);
            // Translation length 2r.
            let c = cosh_distance(g.point(), (0.0, 1.0));
            assert!((c - (2.0 * r).cosh()).abs() < 1e-10);
            // g_{k+4} = g_k^{-1}.
            let prod = g.mul(&s.generators()[(k + 4) % 8]);
            assert!(prod.max_abs_diff(&Frame::IDENTITY) < 1e-10);
        }
        // A vertex sits between two side normals, at the circumradius, and
        // is equidistant from i and the two adjacent translates.
        let vertex = Frame::rotation(std::f64::consts::PI / 16.0)
            .mul(&Frame::diagonal(s.cosh_circumradius().acosh()))
            .point();
        let cr = cosh_distance(vertex, (0.0, 1.0));
        assert!((cr - (3.0 + 2.0 * std::f64::consts::SQRT_2)).abs() < 1e-10);
        for k in [0, 1] {
            let ck = cosh_distance(vertex, s.generators()[k].point());
            assert!((ck - cr).abs() < 1e-9, "{ck} vs {cr}");
        }
    }

    #[test]
    fn reduction_lands_in_domain_and_preserves_orbit() {
        let s = BolzaSurface::get();
        let mut rng = stream(1, "surface-test", 0);
        for _ in 0..200 {
            let g = s.sample_uniform(&mut rng);
            assert!(s.contains(g.point()));
            let t = rng.random::<f64>() * 20.0;
            let h = s.flow(&g, t).unwrap();
            assert!(s.contains(h.point()));
            assert!((h.det() - 1.0).abs() < 1e-12);
            let far = g.flow(t);
            // h = γ·far for some γ in the group: cosh d(h·i, i) ≤ cosh R.
            assert!(cosh_distance(h.point(), (0.0, 1.0)) <= s.cosh_circumradius() * (1.0 + 1e-9));
            assert!(cosh_distance(far.point(), (0.0, 1.0)) >= cosh_distance(h.point(), (0.0, 1.0)) - 1e-9);
        }
    }

    #[test]
    fn flow_identity_and_determinant() {
        let s = BolzaSurface::get();
        let mut rng = stream(2, "surface-test", 0);
        let g = s.sample_uniform(&mut rng);
        assert_eq!(s.flow(&g, 0.0).unwrap().max_abs_diff(&g), 0.0);
        let mut h = g;
        for _ in 0..1_000_000 {
            h = s.flow(&h, 0.01).unwrap();
        }
        assert!((h.det() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tangent_is_unit_and_matches_flow() {
        let mut rng = stream(3, "surface-test", 0);
        let s = BolzaSurface::get();
        for _ in 0..20 {
            let g = s.sample_uniform(&mut rng);
            let (x, y) = g.point();
            let (vx, vy) = g.tangent();
            assert!(((vx * vx + vy * vy).sqrt() / y - 1.0).abs() < 1e-12);
            let h = 1e-6;
            let (xp, yp) = g.flow(h).point();
            let (xm, ym) = g.flow(-h).point();
            assert!(((xp - xm) / (2.0 * h) - vx).abs() < 1e-6);
            assert!(((yp - ym) / (2.0 * h) - vy).abs() < 1e-6);
            let (nx, ny) = g.normal();
            let (px, py) = g.mul(&Frame::rotation(std::f64::consts::FRAC_PI_4)).tangent();
            assert!((nx - px).abs() < 1e-12 && (ny - py).abs() < 1e-12);
            let (rx, ry) = g.reversed().tangent();
            assert!((rx + vx).abs() < 1e-12 && (ry + vy).abs() < 1e-12);
            assert_eq!(g.reversed().point().0, x);
        }
    }

    #[test]
    fn uniform_sampling_matches_area_law() {
        // P(cosh d(q, i) ≤ c) = 2π (c - 1) / 4π for c ≤ cosh r.
        let s = BolzaSurface::get();
        let mut rng = stream(4, "surface-test", 0);
        let n = 40_000;
        let c = 2.0;
        let hits = (0..n)
            .filter(|_| cosh_distance(s.sample_uniform(&mut rng).point(), (0.0, 1.0)) <= c)
            .count();
        let p = hits as f64 / n as f64;
        let expect = (c - 1.0) / 2.0;
        assert!((p - expect).abs() < 4.0 * (expect * (1.0 - expect) / n as f64).sqrt(), "{p}");
    }
}
