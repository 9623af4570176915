//! Triangle moduli, the cubic normalization family `B_α`, and the
//! coefficient fields of the pulled-back Dirichlet form.

use std::f64::consts::FRAC_PI_2;

use crate::error::GeometryError;

/// Boundary component of the closed moduli space a point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModuliBoundary {
    Interior,
    /// `w = 2c`: the two finite angles coincide.
    Isosceles,
    /// `w = c + 1`: the smaller angle has collapsed.
    Degenerate,
}

/// A point `(c, w)` of the moduli space of one-cusped triangles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleParams {
    pub c: f64,
    pub w: f64,
    /// Angles as supplied (or derived when constructed from `(c, w)`).
    pub theta1: f64,
    pub theta2: f64,
    pub boundary: ModuliBoundary,
}

const BOUNDARY_TOL: f64 = 1e-12;

impl TriangleParams {
    /// From moduli coordinates. Rejects points outside the closure of M.
    pub fn new(c: f64, w: f64) -> Result<Self, GeometryError> {
        let boundary = classify(c, w)?;
        Ok(TriangleParams {
            c,
            w,
            theta1: c.acos(),
            theta2: (w - c).clamp(-1.0, 1.0).acos(),
            boundary,
        })
    }

    /// The angles at the vertices `x = 0` (larger) and `x = w` (smaller).
    pub fn canonical_angles(&self) -> (f64, f64) {
        (self.c.acos(), (self.w - self.c).clamp(-1.0, 1.0).acos())
    }

    pub fn is_interior(&self) -> bool {
        self.boundary == ModuliBoundary::Interior
    }
}

fn classify(c: f64, w: f64) -> Result<ModuliBoundary, GeometryError> {
    if !(c.is_finite() && w.is_finite()) || !(-BOUNDARY_TOL..1.0).contains(&c) {
        return Err(GeometryError::OutOfModuli { c, w });
    }
    if w < 2.0 * c - BOUNDARY_TOL || w > c + 1.0 + BOUNDARY_TOL {
        return Err(GeometryError::OutOfModuli { c, w });
    }
    Ok(if (w - 2.0 * c).abs() <= BOUNDARY_TOL {
        ModuliBoundary::Isosceles
    } else if (w - c - 1.0).abs() <= BOUNDARY_TOL {
        ModuliBoundary::Degenerate
    } else {
        ModuliBoundary::Interior
    })
}

/// Moduli point of the triangle with the two given finite angles.
///
/// The vertex at `x = 0` carries the larger angle, so `c` is the cosine of
/// the larger angle and `w = cos θ1 + cos θ2`. The input order is kept in
/// `theta1`, `theta2`.
pub fn triangle_from_angles(theta1: f64, theta2: f64) -> Result<TriangleParams, GeometryError> {
    let ok = |t: f64| t.is_finite() && t > 0.0 && t <= FRAC_PI_2;
    if !ok(theta1) || !ok(theta2) {
        return Err(GeometryError::OutOfModuli {
            c: theta1.cos(),
            w: theta1.cos() + theta2.cos(),
        });
    }
    let big = theta1.max(theta2);
    let c = big.cos().max(0.0);
    let w = theta1.cos().max(0.0) + theta2.cos().max(0.0);
    let boundary = classify(c, w)?;
    Ok(TriangleParams {
        c,
        w,
        theta1,
        theta2,
        boundary,
    })
}

/// Forward-mode dual number for exact α-derivatives of closed forms.
#[derive(Debug, Clone, Copy)]
struct Dual(f64, f64);

impl std::ops::Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual(self.0 + o.0, self.1 + o.1)
    }
}
impl std::ops::Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual(self.0 - o.0, self.1 - o.1)
    }
}
impl std::ops::Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual(self.0 * o.0, self.0 * o.1 + self.1 * o.0)
    }
}
impl std::ops::Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual(self.0 / o.0, (self.1 * o.0 - self.0 * o.1) / (o.0 * o.0))
    }
}
fn k(x: f64) -> Dual {
    Dual(x, 0.0)
}

/// The cubic `B_α(y) = Σ c_j y^j` with `B(α)=1, B′(0)=α, B(ᾱ)=ᾱ, B′(ᾱ)=1`,
/// together with the α-derivatives of its coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicB {
    pub alpha: f64,
    pub alpha_bar: f64,
    pub coeffs: [f64; 4],
    pub d_alpha_coeffs: [f64; 4],
}

/// Build `B_α` from the closed forms of `A(α)` and `C(α)`.
pub fn build_cubic(alpha: f64, alpha_bar: f64) -> Result<CubicB, GeometryError> {
    if !(alpha > 0.0 && alpha < alpha_bar) || alpha_bar <= 0.0 {
        return Err(GeometryError::DegenerateAlpha { alpha, alpha_bar });
    }
    let a = Dual(alpha, 1.0);
    let ab = k(alpha_bar);
    let two = k(2.0);
    let three = k(3.0);
    let c_const = k(1.0) - a * a / (two * ab) + a * (ab - a) * (ab - a) / (two * ab);
    let q_ab = ab * (ab * ab - a * a) / two - (ab * ab * ab - a * a * a) / three;
    if q_ab.0.abs() < 1e-300 {
        return Err(GeometryError::DegenerateAlpha { alpha, alpha_bar });
    }
    let big_a = (ab / two - c_const) / q_ab;
    let c3 = k(0.0) - big_a / three;
    let c2 = big_a * ab / two + k(1.0) / (two * ab) - a / (two * ab);
    let c1 = a;
    let c0 = k(0.0) - big_a * (ab * a * a / two - a * a * a / three) - a * ab / two + c_const;
    Ok(CubicB {
        alpha,
        alpha_bar,
        coeffs: [c0.0, c1.0, c2.0, c3.0],
        d_alpha_coeffs: [c0.1, c1.1, c2.1, c3.1],
    })
}

impl CubicB {
    #[inline]
    pub fn value(&self, y: f64) -> f64 {
        let c = &self.coeffs;
        c[0] + y * (c[1] + y * (c[2] + y * c[3]))
    }
    #[inline]
    pub fn deriv(&self, y: f64) -> f64 {
        let c = &self.coeffs;
        c[1] + y * (2.0 * c[2] + 3.0 * y * c[3])
    }
    #[inline]
    pub fn deriv2(&self, y: f64) -> f64 {
        2.0 * self.coeffs[2] + 6.0 * y * self.coeffs[3]
    }
    /// `∂_α B_α(y)`.
    #[inline]
    pub fn d_alpha(&self, y: f64) -> f64 {
        let c = &self.d_alpha_coeffs;
        c[0] + y * (c[1] + y * (c[2] + y * c[3]))
    }
    /// `∂_α ∂_y B_α(y)`.
    #[inline]
    pub fn d_alpha_deriv(&self, y: f64) -> f64 {
        let c = &self.d_alpha_coeffs;
        c[1] + y * (2.0 * c[2] + 3.0 * y * c[3])
    }

    /// Solve `B_α(y) = b` on `[α, ᾱ]` by safeguarded Newton.
    pub fn invert(&self, b: f64) -> Result<f64, GeometryError> {
        let (mut lo, mut hi) = (self.alpha, self.alpha_bar);
        if b <= 1.0 {
            return Ok(lo);
        }
        if b >= self.alpha_bar {
            return Ok(hi);
        }
        let not_mono = || GeometryError::NotMonotone {
            alpha: self.alpha,
            b,
        };
        // Linear interpolation start.
        let mut y = lo + (b - 1.0) / (self.alpha_bar - 1.0) * (hi - lo);
        for _ in 0..200 {
            let f = self.value(y) - b;
            if f == 0.0 {
                return Ok(y);
            }
            if f < 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            let d = self.deriv(y);
            if d <= 0.0 {
                return Err(not_mono());
            }
            let mut yn = y - f / d;
            if !(yn > lo && yn < hi) {
                yn = 0.5 * (lo + hi);
            }
            if (yn - y).abs() <= 1e-15 * y.abs().max(1.0) || hi - lo <= 4.0 * f64::EPSILON * hi {
                return Ok(yn);
            }
            y = yn;
        }
        Err(not_mono())
    }
}

/// The polynomial `p(b) = −∂_α B_α(b)` at `α = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PPoly {
    pub coeffs: [f64; 4],
}

pub fn p_poly(alpha_bar: f64) -> PPoly {
    let b = build_cubic(1.0, alpha_bar).expect("alpha_bar > 1");
    PPoly {
        coeffs: b.d_alpha_coeffs.map(|c| -c),
    }
}

impl PPoly {
    pub fn eval(&self, y: f64) -> f64 {
        let c = &self.coeffs;
        c[0] + y * (c[1] + y * (c[2] + y * c[3]))
    }
    pub fn deriv(&self, y: f64) -> f64 {
        let c = &self.coeffs;
        c[1] + y * (2.0 * c[2] + 3.0 * y * c[3])
    }
}

/// Which family a coefficient field belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldKind {
    /// `q_{c,w}` on a fixed triangle.
    Moduli,
    /// The renormalized family `q_t` (`c = 0`, `w = t`).
    Degenerating { t: f64 },
}

/// Pointwise data needed for assembly at `(a, b)` in the strip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coeff {
    /// `ρ̂ = (Y/b)·(∂_yB)^{1/2}`.
    pub rho: f64,
    pub grad_rho: [f64; 2],
    /// Symmetric 2×2 matrix `[p11, p12, p22]` acting on `(∂_a, ∂_b)`.
    pub p: [f64; 3],
}

/// Evaluators for the normalization diffeomorphism and its pulled-back
/// coefficient fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffeoFields {
    pub c: f64,
    pub w: f64,
    pub alpha_bar: f64,
    pub kind: FieldKind,
    /// Diagonal scaling `D` in `P = B_y^{-1}·D·K·D`.
    pub d: [f64; 2],
}

/// Side length of the validation grid.
pub const MONO_GRID: usize = 64;

/// Fields of `q_{c,w}`. Validates `∂_yB(f_c(x), y) > 0` on a grid.
pub fn phi_fields(params: &TriangleParams, alpha_bar: f64) -> Result<DiffeoFields, GeometryError> {
    let f = DiffeoFields {
        c: params.c,
        w: params.w,
        alpha_bar,
        kind: FieldKind::Moduli,
        d: [1.0 / params.w, 1.0],
    };
    f.validate(0.0)?;
    Ok(f)
}

/// Fields of the renormalized family at `t`; requires `∂_yB ≥ 1/2` on a grid.
pub fn degenerating_fields(t: f64, _beta: f64, alpha_bar: f64) -> Result<DiffeoFields, GeometryError> {
    let f = DiffeoFields {
        c: 0.0,
        w: t,
        alpha_bar,
        kind: FieldKind::Degenerating { t },
        d: [1.0, t],
    };
    if !(t > 0.0 && t < 1.0) {
        return Err(GeometryError::MonotonicityFailure {
            x: t,
            y: 1.0,
            value: f64::NAN,
        });
    }
    f.validate(0.5)?;
    Ok(f)
}

impl DiffeoFields {
    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        (1.0 - (x - self.c).powi(2)).max(0.0).sqrt()
    }
    #[inline]
    pub fn f_prime(&self, x: f64) -> f64 {
        -(x - self.c) / self.f(x)
    }

    /// Cubic in force along the vertical line at strip coordinate `a`.
    pub fn cubic_at(&self, a: f64) -> Result<CubicB, GeometryError> {
        build_cubic(self.f(self.w * a), self.alpha_bar)
    }

    fn validate(&self, threshold: f64) -> Result<(), GeometryError> {
        let n = MONO_GRID;
        for i in 0..n {
            let x = self.w * i as f64 / (n - 1) as f64;
            let b = build_cubic(self.f(x), self.alpha_bar)?;
            for j in 0..n {
                let y = b.alpha + (self.alpha_bar - b.alpha) * j as f64 / (n - 1) as f64;
                let v = b.deriv(y);
                if !(v > threshold) {
                    return Err(GeometryError::MonotonicityFailure { x, y, value: v });
                }
            }
        }
        Ok(())
    }

    /// `φ(x, y) = (x/w, F(x, y))`.
    pub fn phi(&self, x: f64, y: f64) -> Result<(f64, f64), GeometryError> {
        let a = x / self.w;
        if y >= self.alpha_bar {
            return Ok((a, y));
        }
        Ok((a, build_cubic(self.f(x), self.alpha_bar)?.value(y)))
    }

    pub fn phi_inv(&self, a: f64, b: f64) -> Result<(f64, f64), GeometryError> {
        let x = self.w * a;
        if b >= self.alpha_bar {
            return Ok((x, b));
        }
        Ok((x, build_cubic(self.f(x), self.alpha_bar)?.invert(b)?))
    }

    /// Jacobian `∂(a, b)/∂(x, y)` at a point of the triangle.
    pub fn jacobian(&self, x: f64, y: f64) -> Result<[[f64; 2]; 2], GeometryError> {
        if y >= self.alpha_bar {
            return Ok([[1.0 / self.w, 0.0], [0.0, 1.0]]);
        }
        let cb = build_cubic(self.f(x), self.alpha_bar)?;
        Ok([
            [1.0 / self.w, 0.0],
            [cb.d_alpha(y) * self.f_prime(x), cb.deriv(y)],
        ])
    }

    /// Assembly coefficients at `(a, b)` using a precomputed cubic for `a`.
    pub fn coeff_with(&self, cb: &CubicB, a: f64, b: f64) -> Result<Coeff, GeometryError> {
        let [d1, d2] = self.d;
        if b >= self.alpha_bar {
            return Ok(Coeff {
                rho: 1.0,
                grad_rho: [0.0, 0.0],
                p: [d1 * d1, 0.0, d2 * d2],
            });
        }
        let x = self.w * a;
        let y = cb.invert(b)?;
        let by = cb.deriv(y);
        let byy = cb.deriv2(y);
        let bal = cb.d_alpha(y);
        let byal = cb.d_alpha_deriv(y);
        let fp = self.f_prime(x);
        let alpha_a = self.w * fp;
        let m = bal * fp;
        let sq = by.sqrt();
        let rho = y / b * sq;
        let y_b = 1.0 / by;
        let y_a = -bal * alpha_a / by;
        let drho_b = (y_b / b - y / (b * b)) * sq + y / b * byy * y_b / (2.0 * sq);
        let drho_a = y_a / b * sq + y / b * (byal * alpha_a + byy * y_a) / (2.0 * sq);
        Ok(Coeff {
            rho,
            grad_rho: [drho_a, drho_b],
            p: [d1 * d1 / by, d1 * d2 * m / by, d2 * d2 * (m * m + by * by) / by],
        })
    }

    pub fn coeff(&self, a: f64, b: f64) -> Result<Coeff, GeometryError> {
        self.coeff_with(&self.cubic_at(a)?, a, b)
    }

    /// The weight `ρ` in the family's own normalization: `ρ̃_t` for the
    /// degenerating family, `ρ_{c,w} = w^{-1/2}ρ̂` for a fixed triangle.
    pub fn rho(&self, a: f64, b: f64) -> Result<f64, GeometryError> {
        let r = self.coeff(a, b)?.rho;
        Ok(match self.kind {
            FieldKind::Degenerating { .. } => r,
            FieldKind::Moduli => r / self.w.sqrt(),
        })
    }

    /// The unimodular matrix field: `Q̃_t` (degenerating) or `Q_{c,w}`.
    pub fn q_matrix(&self, a: f64, b: f64) -> Result<[[f64; 2]; 2], GeometryError> {
        let p = self.coeff(a, b)?.p;
        let [d1, d2] = self.d;
        // Q̃_t = D^{-1} P D^{-1}; Q_{c,w} = w·P, so that ρ²Q = ρ̂²P in both.
        let (s0, s1, s2) = match self.kind {
            FieldKind::Degenerating { .. } => (1.0 / (d1 * d1), 1.0 / (d1 * d2), 1.0 / (d2 * d2)),
            FieldKind::Moduli => (self.w, self.w, self.w),
        };
        Ok([
            [s0 * p[0], s1 * p[1]],
            [s1 * p[1], s2 * p[2]],
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, Vector4};

    fn oracle(alpha: f64, ab: f64) -> [f64; 4] {
        // Rows: B(α)=1, B′(0)=α, B(ᾱ)=ᾱ, B′(ᾱ)=1.
        let m = Matrix4::new(
            1.0, alpha, alpha * alpha, alpha.powi(3),
            0.0, 1.0, 0.0, 0.0,
            1.0, ab, ab * ab, ab.powi(3),
            0.0, 1.0, 2.0 * ab, 3.0 * ab * ab,
        );
        let s = m.lu().solve(&Vector4::new(1.0, alpha, ab, 1.0)).unwrap();
        [s[0], s[1], s[2], s[3]]
    }

    #[test]
    fn cubic_matches_linear_system() {
        let b = build_cubic(0.5, 4.0).unwrap();
        let o = oracle(0.5, 4.0);
        for j in 0..4 {
            assert!((b.coeffs[j] - o[j]).abs() < 1e-10, "{j}: {} vs {}", b.coeffs[j], o[j]);
        }
    }

    #[test]
    fn identity_at_alpha_one() {
        let b = build_cubic(1.0, 1.7).unwrap();
        assert!(b.coeffs[0].abs() < 1e-12);
        assert!((b.coeffs[1] - 1.0).abs() < 1e-12);
        assert!(b.coeffs[2].abs() < 1e-12 && b.coeffs[3].abs() < 1e-12);
    }

    #[test]
    fn degenerate_alpha() {
        assert!(matches!(build_cubic(4.0, 4.0), Err(GeometryError::DegenerateAlpha { .. })));
    }

    #[test]
    fn d_alpha_matches_difference() {
        let (al, ab) = (0.7, 3.0);
        let h = 1e-6;
        let p = build_cubic(al + h, ab).unwrap();
        let m = build_cubic(al - h, ab).unwrap();
        let b = build_cubic(al, ab).unwrap();
        for j in 0..4 {
            let fd = (p.coeffs[j] - m.coeffs[j]) / (2.0 * h);
            assert!((fd - b.d_alpha_coeffs[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn p_boundary_values() {
        for &ab in &[1.25, 2.0, 3.9] {
            let p = p_poly(ab);
            assert!((p.eval(1.0) - 1.0).abs() < 1e-10);
            assert!(p.eval(ab).abs() < 1e-10);
            assert!(p.deriv(ab).abs() < 1e-10);
        }
    }

    #[test]
    fn inverse_half_alpha() {
        let b = build_cubic(0.5, 4.0).unwrap();
        assert!((b.invert(1.0).unwrap() - 0.5).abs() < 1e-12);
        let y = b.invert(2.3).unwrap();
        assert!((b.value(y) - 2.3).abs() < 1e-12);
    }

    #[test]
    fn modular_triangle() {
        let t = triangle_from_angles(std::f64::consts::FRAC_PI_2 - 3e-8, std::f64::consts::PI / 3.0).unwrap();
        assert!(t.c.abs() < 1e-6 && (t.w - 0.5).abs() < 1e-6);
    }

    #[test]
    fn isosceles_flag() {
        let t = triangle_from_angles(1.1, 1.1).unwrap();
        assert_eq!(t.boundary, ModuliBoundary::Isosceles);
        assert!((t.w - 2.0 * t.c).abs() < 1e-15);
    }

    #[test]
    fn out_of_moduli() {
        assert!(TriangleParams::new(0.5, 0.9).is_err());
        assert!(TriangleParams::new(0.2, 1.3).is_err());
        assert!(triangle_from_angles(0.0, 1.0).is_err());
        assert!(triangle_from_angles(2.0, 1.0).is_err());
    }

    #[test]
    fn q_tilde_limit_identity() {
        let f = degenerating_fields(1e-4, 1.5, 1.25).unwrap();
        for &(a, b) in &[(0.1, 1.0), (0.5, 1.1), (0.9, 1.24)] {
            let q = f.q_matrix(a, b).unwrap();
            assert!((q[0][0] - 1.0).abs() < 1e-6 && (q[1][1] - 1.0).abs() < 1e-6);
            assert!(q[0][1].abs() < 1e-3);
            assert!((f.rho(a, b).unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rho_gradient_matches_difference() {
        let f = degenerating_fields(0.3, 1.5, 1.25).unwrap();
        let (a, b) = (0.6, 1.1);
        let h = 1e-6;
        let g = f.coeff(a, b).unwrap().grad_rho;
        let da = (f.coeff(a + h, b).unwrap().rho - f.coeff(a - h, b).unwrap().rho) / (2.0 * h);
        let db = (f.coeff(a, b + h).unwrap().rho - f.coeff(a, b - h).unwrap().rho) / (2.0 * h);
        assert!((g[0] - da).abs() < 1e-8, "{} {}", g[0], da);
        assert!((g[1] - db).abs() < 1e-8, "{} {}", g[1], db);
    }
}
