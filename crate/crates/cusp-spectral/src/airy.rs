//! Airy solutions normalized by their envelopes.
//!
//! `A_-` decays as `x^{-1/4} exp(−(2/3)x^{3/2})` (so `A_- = 2√π·Ai`) and
//! `A_+ = √π·Bi`; their Wronskian `A_+′A_- − A_+A_-′` is 2. Values come from a
//! Taylor-stepped table on `[X_MIN, X_ASYM]` and the large-argument series
//! beyond it.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Left end of the tabulated range.
pub const X_MIN: f64 = -100.0;
/// Where the asymptotic series takes over.
pub const X_ASYM: f64 = 16.0;
const STEP: f64 = 1.0 / 64.0;

struct Table {
    minus: Vec<[f64; 2]>,
    plus: Vec<[f64; 2]>,
}

fn table() -> &'static Table {
    static T: OnceLock<Table> = OnceLock::new();
    T.get_or_init(build_table)
}

fn node(j: usize) -> f64 {
    X_MIN + j as f64 * STEP
}

fn build_table() -> Table {
    let n = ((X_ASYM - X_MIN) / STEP).round() as usize;
    let mut minus = vec![[0.0; 2]; n + 1];
    minus[n] = asym_minus(X_ASYM);
    for j in (0..n).rev() {
        minus[j] = taylor(node(j + 1), minus[j + 1], -STEP);
    }
    let j0 = (-X_MIN / STEP).round() as usize;
    let s3 = 3f64.sqrt() / 2.0;
    let mut plus = vec![[0.0; 2]; n + 1];
    plus[j0] = [s3 * minus[j0][0], -s3 * minus[j0][1]];
    for j in j0 + 1..=n {
        plus[j] = taylor(node(j - 1), plus[j - 1], STEP);
    }
    for j in (0..j0).rev() {
        plus[j] = taylor(node(j + 1), plus[j + 1], -STEP);
    }
    Table { minus, plus }
}

/// Taylor expansion of a solution of `w'' = x w` about `x0`, evaluated at
/// `x0 + d`; returns `(w, w')`.
fn taylor(x0: f64, y: [f64; 2], d: f64) -> [f64; 2] {
    // W_n = w^{(n)}(x0) with W_{n} = x0 W_{n-2} + (n-2) W_{n-3}.
    let (mut w3, mut w2, mut w1) = (0.0, y[0], y[1]);
    let mut sum_w = y[0] + y[1] * d;
    let mut sum_p = y[1];
    let mut fact = d; // d^{n-1}/(n-1)!
    let scale = y[0].abs() + y[1].abs();
    for n in 2..400 {
        let wn = x0 * w2 + (n as f64 - 2.0) * w3;
        sum_p += wn * fact;
        fact *= d / n as f64;
        sum_w += wn * fact;
        (w3, w2, w1) = (w2, w1, wn);
        if n > 8 && (wn * fact).abs() * (1.0 + n as f64 / d.abs().max(1e-300)) < 1e-18 * scale.max(sum_w.abs()) {
            break;
        }
    }
    [sum_w, sum_p]
}

/// Large-x series for `(A_-, A_-′)`.
fn asym_minus(x: f64) -> [f64; 2] {
    let (s_u, s_v) = asym_sums(x, -1.0);
    let z = 2.0 / 3.0 * x.powf(1.5);
    let e = (-z).exp();
    [x.powf(-0.25) * e * s_u, -x.powf(0.25) * e * s_v]
}

/// Large-x series for `(A_+, A_+′)`.
fn asym_plus(x: f64) -> [f64; 2] {
    let (s_u, s_v) = asym_sums(x, 1.0);
    let z = 2.0 / 3.0 * x.powf(1.5);
    let e = z.exp();
    [x.powf(-0.25) * e * s_u, x.powf(0.25) * e * s_v]
}

fn asym_sums(x: f64, sign: f64) -> (f64, f64) {
    let z = 2.0 / 3.0 * x.powf(1.5);
    let (mut su, mut sv) = (1.0, 1.0);
    let mut u = 1.0;
    let mut zk = 1.0;
    let mut s = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let kf = k as f64;
        u *= (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0) / ((2.0 * kf - 1.0) * 216.0 * kf);
        let v = -(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * u;
        zk /= z;
        s *= sign;
        let tu = s * u * zk;
        if tu.abs() > prev {
            break;
        }
        prev = tu.abs();
        su += tu;
        sv += s * v * zk;
        if tu.abs() < 1e-17 {
            break;
        }
    }
    (su, sv)
}

fn lookup(x: f64, minus: bool) -> [f64; 2] {
    assert!(x >= X_MIN, "Airy argument {x} below tabulated range");
    if x > X_ASYM {
        return if minus { asym_minus(x) } else { asym_plus(x) };
    }
    let t = table();
    let j = ((x - X_MIN) / STEP).round() as usize;
    let tab = if minus { &t.minus } else { &t.plus };
    taylor(node(j), tab[j], x - node(j))
}

/// `(A_-(x), A_-′(x))`.
pub fn a_minus(x: f64) -> [f64; 2] {
    lookup(x, true)
}

/// `(A_+(x), A_+′(x))`.
pub fn a_plus(x: f64) -> [f64; 2] {
    lookup(x, false)
}

/// The first `count` zeros of `A_-′`, all negative, in decreasing order.
pub fn a_minus_prime_zeros(count: usize) -> Vec<f64> {
    let mut zeros = Vec::with_capacity(count);
    let mut x = 0.0;
    let mut prev = a_minus(x)[1];
    while zeros.len() < count {
        let xn = x - STEP;
        let cur = a_minus(xn)[1];
        if prev == 0.0 || prev.signum() != cur.signum() {
            // Newton on A_-′ with (A_-′)′ = x A_-, safeguarded in [xn, x].
            let (mut lo, mut hi) = (xn, x);
            let mut r = 0.5 * (lo + hi);
            for _ in 0..60 {
                let [w, wp] = a_minus(r);
                let mut rn = r - wp / (r * w);
                let wlo = a_minus(lo)[1];
                if wlo.signum() == wp.signum() {
                    lo = r;
                } else {
                    hi = r;
                }
                if !(rn > lo && rn < hi) {
                    rn = 0.5 * (lo + hi);
                }
                if (rn - r).abs() < 1e-15 {
                    r = rn;
                    break;
                }
                r = rn;
            }
            zeros.push(r);
        }
        x = xn;
        prev = cur;
        assert!(x > X_MIN, "ran out of table");
    }
    zeros
}

/// Airy coefficient `a_i = (2(πℓ)²)^{2/3}·(−ζ_i)` of the `i`-th branch (1-based).
pub fn airy_coefficient(ell: usize, i: usize) -> f64 {
    let z = a_minus_prime_zeros(i)[i - 1];
    (2.0 * (PI * ell as f64).powi(2)).powf(2.0 / 3.0) * (-z)
}

/// The rescaled Airy basis `W_±(x) = A_±(s^{-2/3}(x − z))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AiryBasis {
    pub s: f64,
    pub z: f64,
}

impl AiryBasis {
    pub fn new(s: f64, z: f64) -> Self {
        assert!(s > 0.0);
        AiryBasis { s, z }
    }

    fn arg(&self, x: f64) -> (f64, f64) {
        let k = self.s.powf(-2.0 / 3.0);
        (k * (x - self.z), k)
    }

    /// `(W_+, W_+′)` at `x`.
    pub fn plus(&self, x: f64) -> [f64; 2] {
        let (u, k) = self.arg(x);
        let [w, wp] = a_plus(u);
        [w, k * wp]
    }

    /// `(W_-, W_-′)` at `x`.
    pub fn minus(&self, x: f64) -> [f64; 2] {
        let (u, k) = self.arg(x);
        let [w, wp] = a_minus(u);
        [w, k * wp]
    }

    /// Wronskian `W_+′W_- − W_+W_-′ = 2 s^{-2/3}`.
    pub fn wronskian(&self) -> f64 {
        2.0 * self.s.powf(-2.0 / 3.0)
    }

    /// Values `(W, W′)` at the points `xs` (ascending, within `[0, x̄]`) of
    /// `W_x̄ = ½ s^{-4/3}(W_+ ∫_x^{x̄} R W_- + W_- ∫_0^x R W_+)`, the solution
    /// of `−s²W″ + (x − z)W = R`.
    pub fn particular<R: Fn(f64) -> f64>(&self, r: R, x_bar: f64, xs: &[f64]) -> Vec<[f64; 2]> {
        let g = crate::quad::GaussRule::new(8);
        let pieces = 64usize;
        // Cumulative integrals on a partition refined at the output points.
        let mut pts = vec![0.0];
        pts.extend(xs.iter().copied().filter(|&x| x > 0.0 && x < x_bar));
        pts.push(x_bar);
        let mut i_plus = vec![0.0; pts.len()];
        let mut i_minus = vec![0.0; pts.len()];
        for j in 1..pts.len() {
            let (a, b) = (pts[j - 1], pts[j]);
            let mut sp = 0.0;
            let mut sm = 0.0;
            if b > a {
                for (x, w) in g.composite(a, b, pieces) {
                    let rv = r(x);
                    sp += w * rv * self.plus(x)[0];
                    sm += w * rv * self.minus(x)[0];
                }
            }
            i_plus[j] = i_plus[j - 1] + sp;
            i_minus[j] = i_minus[j - 1] + sm;
        }
        let total_minus = *i_minus.last().unwrap();
        let c = 0.5 * self.s.powf(-4.0 / 3.0);
        xs.iter()
            .map(|&x| {
                let j = pts.iter().position(|&p| p == x).unwrap_or(if x <= 0.0 { 0 } else { pts.len() - 1 });
                let (ip, im) = (i_plus[j], total_minus - i_minus[j]);
                let [wp, wpp] = self.plus(x);
                let [wm, wmp] = self.minus(x);
                [c * (wp * im + wm * ip), c * (wpp * im + wmp * ip)]
            })
            .collect()
    }
}
