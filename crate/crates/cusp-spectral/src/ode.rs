//! Fixed-step integrators for linear second-order ODEs `w'' = q(x) w + r(x)`.

use nalgebra::{Matrix6, Vector6};

/// One classical RK4 step for `(w, w')`.
#[inline]
pub fn rk4_step<F: Fn(f64) -> f64>(q: &F, x: f64, y: [f64; 2], h: f64) -> [f64; 2] {
    let f = |x: f64, y: [f64; 2]| [y[1], q(x) * y[0]];
    let k1 = f(x, y);
    let k2 = f(x + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
    let k3 = f(x + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
    let k4 = f(x + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

const S15: f64 = 3.872_983_346_207_417; // √15

/// One step of the 3-stage Gauss–Legendre collocation method (order 6) for
/// `w'' = q(x) w + r(x)`. The linear stage system is solved directly; the
/// method preserves the Wronskian of the homogeneous problem.
pub fn gl6_step<Q: Fn(f64) -> f64, R: Fn(f64) -> f64>(
    q: &Q,
    r: &R,
    x: f64,
    y: [f64; 2],
    h: f64,
) -> [f64; 2] {
    let c = [0.5 - S15 / 10.0, 0.5, 0.5 + S15 / 10.0];
    let a = [
        [5.0 / 36.0, 2.0 / 9.0 - S15 / 15.0, 5.0 / 36.0 - S15 / 30.0],
        [5.0 / 36.0 + S15 / 24.0, 2.0 / 9.0, 5.0 / 36.0 - S15 / 24.0],
        [5.0 / 36.0 + S15 / 30.0, 2.0 / 9.0 + S15 / 15.0, 5.0 / 36.0],
    ];
    let b = [5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0];
    // Unknowns K_i = (k_i^w, k_i^v); K_i = F(x_i, y + h Σ a_ij K_j).
    let mut m = Matrix6::<f64>::identity();
    let mut rhs = Vector6::<f64>::zeros();
    for i in 0..3 {
        let qi = q(x + c[i] * h);
        let ri = r(x + c[i] * h);
        // k_i^w − h Σ a_ij k_j^v = y1
        for j in 0..3 {
            m[(2 * i, 2 * j + 1)] -= h * a[i][j];
        }
        rhs[2 * i] = y[1];
        // k_i^v − q_i h Σ a_ij k_j^w = q_i y0 + r_i
        for j in 0..3 {
            m[(2 * i + 1, 2 * j)] -= qi * h * a[i][j];
        }
        rhs[2 * i + 1] = qi * y[0] + ri;
    }
    let k = m.lu().solve(&rhs).expect("stage system");
    [
        y[0] + h * (b[0] * k[0] + b[1] * k[2] + b[2] * k[4]),
        y[1] + h * (b[0] * k[1] + b[1] * k[3] + b[2] * k[5]),
    ]
}

/// Integrates from `x0` to `x1` in `n` GL6 steps; returns the states at all
/// `n + 1` grid points.
pub fn gl6_path<Q: Fn(f64) -> f64, R: Fn(f64) -> f64>(
    q: &Q,
    r: &R,
    x0: f64,
    y0: [f64; 2],
    x1: f64,
    n: usize,
) -> Vec<(f64, [f64; 2])> {
    let h = (x1 - x0) / n as f64;
    let mut out = Vec::with_capacity(n + 1);
    let mut y = y0;
    out.push((x0, y));
    for i in 0..n {
        let x = x0 + i as f64 * h;
        y = gl6_step(q, r, x, y, h);
        out.push((x0 + (i + 1) as f64 * h, y));
    }
    out
}
