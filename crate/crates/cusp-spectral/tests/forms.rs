use std::sync::Arc;

use cusp_spectral::eigen::EigOptions;
use cusp_spectral::forms::*;
use cusp_spectral::geometry::{degenerating_fields, p_poly};
use cusp_spectral::modespace::{e_k, e_k_prime, hats, CuspGrid, DofMap, MeshParams, ModeFunction};
use cusp_spectral::quad::GaussRule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BETA: f64 = 1.5;
const AB: f64 = 1.25;

fn dofs(k_max: usize, t_min: f64) -> Arc<DofMap> {
    let g = CuspGrid::graded(MeshParams::new(t_min, 15.0), BETA, Some(AB), 3.5).unwrap();
    Arc::new(DofMap::new(Arc::new(g), k_max))
}

/// Smooth random function in the constrained space.
fn smooth(d: &DofMap, rng: &mut ChaCha8Rng) -> ModeFunction {
    let g = d.grid.clone();
    let ymax = g.y_max();
    let mut u = ModeFunction::zeros(g.clone(), d.k_max);
    for k in 0..=d.k_max.min(3) {
        let (c0, c1, c2) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        for (i, &y) in g.y.iter().enumerate() {
            let end = if k == 0 { BETA } else { ymax };
            let cut = (end - y).max(0.0);
            u.profiles[k][i] = cut * (c0 + c1 * y + c2 * (2.0 * y).sin());
        }
    }
    let x = d.to_dofs(&u).unwrap();
    d.to_function(&x)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn symmetric_and_cusp_identity() {
    let d = dofs(3, 0.05);
    let q = assemble_q_t(0.1, BETA, AB, &d, &AssemblyOptions::default()).unwrap();
    let a = assemble_a(0.1, &d);
    let dense = q.a.to_dense();
    assert!((&dense - dense.transpose()).amax() <= 1e-12 * dense.amax());
    assert!(q.m.ldlt().is_positive_definite());
    // Supported strictly above alpha_bar: forms coincide.
    let g = d.grid.clone();
    let ia = g.alpha_bar_index.unwrap();
    let mut u = ModeFunction::zeros(g.clone(), 3);
    for i in ia + 1..g.n_nodes() - 1 {
        u.profiles[2][i] = (g.y[i] - g.y[ia]).powi(2);
        u.profiles[0][i] = if i < g.beta_index { (g.y[i] - g.y[ia]) * (BETA - g.y[i]) } else { 0.0 };
    }
    assert_eq!(q.eval(&u, &u), a.eval(&u, &u));
}

#[test]
fn a_mode_formula_and_block_diagonal() {
    let d = dofs(3, 0.05);
    let t = 0.2;
    let a = assemble_a(t, &d);
    let g = d.grid.clone();
    let prof: Vec<f64> = g.y.iter().map(|&y| (3.5 - y) * y).collect();
    let u = ModeFunction::single_mode(g.clone(), 3, 2, prof.clone());
    let mut want = 0.0;
    let kp2 = (2.0 * std::f64::consts::PI).powi(2);
    for c in 0..g.n_cells() {
        let h = g.y[c + 1] - g.y[c];
        let s = (prof[c + 1] - prof[c]) / h;
        want += t * t * s * s * h + kp2 * h * (prof[c].powi(2) + prof[c] * prof[c + 1] + prof[c + 1].powi(2)) / 3.0;
    }
    assert!(rel(a.eval(&u, &u), want) < 1e-12);
    for i in 0..d.n_dofs {
        for j in 0..i {
            let v = a.a.get(i, j);
            if v != 0.0 {
                // Same mode only.
                let mode = |dof: usize| (0..g.n_nodes()).flat_map(|n| (0..=3).map(move |k| (n, k))).find(|&(n, k)| d.dof(n, k) == Some(dof)).unwrap().1;
                assert_eq!(mode(i), mode(j));
            }
        }
        if i > 200 {
            break;
        }
    }
}

#[test]
fn a_dot_identity() {
    let d = dofs(2, 0.05);
    let t = 0.3;
    let (adot, _) = assemble_dots(t, BETA, AB, &d, &AssemblyOptions::default(), None).unwrap();
    let a = assemble_a(t, &d);
    let a0 = assemble_a(0.0, &d);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = smooth(&d, &mut rng);
    let lhs = adot.eval(&u, &u);
    let rhs = 2.0 / t * (a.eval(&u, &u) - a0.eval(&u, &u));
    assert!(rel(lhs, rhs) < 1e-12);
    assert!(matches!(
        assemble_dots(1e-3, BETA, AB, &d, &AssemblyOptions::default(), Some(6e-4)),
        Err(cusp_spectral::error::FormError::StepTooSmall { .. })
    ));
}

/// Independent 2-D quadrature of the pulled-back Dirichlet integrand with a
/// finite-difference Jacobian of the inverse normalization map.
#[test]
fn q_matches_dense_quadrature_oracle() {
    let d = dofs(3, 0.05);
    let t = 0.15;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let u = smooth(&d, &mut rng);
    let q = assemble_q_t(t, BETA, AB, &d, &AssemblyOptions::default()).unwrap();
    let got = q.eval(&u, &u);

    let f = degenerating_fields(t, BETA, AB).unwrap();
    let g = d.grid.clone();
    let h = 1e-5;
    let inv = |a: f64, b: f64| f.phi_inv(a, b).unwrap();
    let rho_hat = |a: f64, b: f64| {
        let (xp, yp) = (inv(a + h, b), inv(a - h, b));
        let (xq, yq) = (inv(a, b + h), inv(a, b - h));
        let j = [
            [(xp.0 - yp.0) / (2.0 * h), (xq.0 - yq.0) / (2.0 * h)],
            [(xp.1 - yp.1) / (2.0 * h), (xq.1 - yq.1) / (2.0 * h)],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let y = inv(a, b).1;
        (y / b * (t / det).sqrt(), j, det)
    };
    let xr = GaussRule::new(40).on(0.0, 1.0);
    let yr = GaussRule::new(8);
    let ia = g.alpha_bar_index.unwrap();
    let mut total = 0.0;
    for c in 0..g.n_cells() {
        for (b, wb) in yr.on(g.y[c], g.y[c + 1]) {
            let (n, dn) = hats(g.y[c], g.y[c + 1], b);
            for &(a, wa) in &xr {
                let (mut uv, mut ua, mut ub) = (0.0, 0.0, 0.0);
                for k in 0..=3 {
                    let p = n[0] * u.profiles[k][c] + n[1] * u.profiles[k][c + 1];
                    let dp = dn[0] * u.profiles[k][c] + dn[1] * u.profiles[k][c + 1];
                    uv += e_k(k, a) * p;
                    ua += e_k_prime(k, a) * p;
                    ub += e_k(k, a) * dp;
                }
                if c >= ia {
                    total += wa * wb * (ua * ua + t * t * ub * ub);
                    continue;
                }
                let (r, j, det) = rho_hat(a, b);
                let ra = (rho_hat(a + h, b).0 - rho_hat(a - h, b).0) / (2.0 * h);
                let rb = (rho_hat(a, b + h).0 - rho_hat(a, b - h).0) / (2.0 * h);
                let gx = r * ua + uv * ra;
                let gy = r * ub + uv * rb;
                // P = t·|det J|·J^{-1}J^{-T}, J = ∂(x,y)/∂(a,b)
                let ji = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
                let p11 = ji[0][0] * ji[0][0] + ji[0][1] * ji[0][1];
                let p12 = ji[0][0] * ji[1][0] + ji[0][1] * ji[1][1];
                let p22 = ji[1][0] * ji[1][0] + ji[1][1] * ji[1][1];
                let s = t * det.abs();
                total += wa * wb * s * (p11 * gx * gx + 2.0 * p12 * gx * gy + p22 * gy * gy);
            }
        }
    }
    assert!(rel(got, total) < 1e-8, "assembled {got} oracle {total}");
}

#[test]
fn b_matches_one_dimensional_reduction() {
    let d = dofs(3, 0.05);
    let t = 0.1;
    let p = p_poly(AB);
    let b = assemble_b(t, &d, &p);
    let g = d.grid.clone();
    let v: Vec<f64> = g.y.iter().map(|&y| (3.5 - y) * (1.0 + (3.0 * y).cos())).collect();
    let psi: Vec<f64> = g.y.iter().map(|&y| if y < BETA { (BETA - y) * y } else { 0.0 }).collect();
    for k in 1..=3usize {
        let w = ModeFunction::single_mode(g.clone(), 3, k, v.clone());
        let z = ModeFunction::single_mode(g.clone(), 3, 0, psi.clone());
        let kp = k as f64 * std::f64::consts::PI;
        let xfac = -std::f64::consts::SQRT_2 * kp * GaussRule::new(60).integrate(0.0, 1.0, |x| x * (kp * x).sin());
        let mut yint = 0.0;
        for c in 0..g.alpha_bar_index.unwrap() {
            let dpsi = (psi[c + 1] - psi[c]) / (g.y[c + 1] - g.y[c]);
            for (y, wy) in GaussRule::new(6).on(g.y[c], g.y[c + 1]) {
                let (n, _) = hats(g.y[c], g.y[c + 1], y);
                yint += wy * p.eval(y) * (n[0] * v[c] + n[1] * v[c + 1]) * t * dpsi;
            }
        }
        assert!(rel(b.eval(&w, &z), xfac * yint) < 1e-8);
        // Same single zero mode: x-factor vanishes.
        assert_eq!(b.eval(&z, &z), 0.0);
    }
}

#[test]
fn q_dot_richardson_and_first_order_bound() {
    let d = dofs(3, 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u = smooth(&d, &mut rng);
    let t = 0.2;
    let opts = AssemblyOptions::default();
    let (_, q1) = assemble_dots(t, BETA, AB, &d, &opts, Some(0.05 * t)).unwrap();
    let (_, q2) = assemble_dots(t, BETA, AB, &d, &opts, Some(0.025 * t)).unwrap();
    let (_, q3) = assemble_dots(t, BETA, AB, &d, &opts, Some(0.0125 * t)).unwrap();
    let (e1, e2) = (q1.eval(&u, &u) - q2.eval(&u, &u), q2.eval(&u, &u) - q3.eval(&u, &u));
    let ratio = e1 / e2;
    assert!((ratio - 4.0).abs() < 0.2, "Richardson ratio {ratio}");

    let mut worst: f64 = 0.0;
    for &t in &[1e-3, 1e-2, 0.1, 0.3] {
        let (adot, qdot) = assemble_dots(t, BETA, AB, &d, &opts, None).unwrap();
        let a = assemble_a(t, &d);
        let c = (qdot.eval(&u, &u) - adot.eval(&u, &u)).abs() / a.eval(&u, &u);
        worst = worst.max(c);
    }
    assert!(worst < 10.0, "C = {worst}");
}

#[test]
fn scaling_congruence_and_diagonal() {
    use cusp_spectral::banded::SymBand;
    use cusp_spectral::eigen::{solve, Target};
    let mut a = SymBand::zeros(5, 1);
    let mut m = SymBand::zeros(5, 1);
    for (i, v) in [3.0, 1.0, 4.0, 1.5, 9.0].iter().enumerate() {
        a.add(i, i, *v);
        m.add(i, i, 1.0);
    }
    let r = solve(&a, &m, 5, Target::Lowest { lower_bound: 0.0 }, &EigOptions::default()).unwrap();
    assert_eq!(r.values, vec![1.0, 1.5, 3.0, 4.0, 9.0]);
    let r2 = solve(&a.scaled(7.0), &m.scaled(7.0), 5, Target::Lowest { lower_bound: 0.0 }, &EigOptions::default()).unwrap();
    for (x, y) in r.values.iter().zip(&r2.values) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn poincare_bound() {
    for &t in &[0.01f64, 0.1, 1.0] {
        let d = dofs(2, t.min(0.5));
        let a = assemble_a(t, &d);
        let r = solve_lowest(&a, 1, None, &EigOptions::default()).unwrap();
        assert!(r.eigenvalues[0] >= t * t / 4.0 * (1.0 - 1e-6));
    }
}

#[test]
fn expansion_slopes_on_random_functions() {
    let d = dofs(3, 0.05);
    let p = p_poly(AB);
    let ts: Vec<f64> = (0..9).map(|i| 1e-3 * 10f64.powf(i as f64 * 0.25)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..10 {
        let u = smooth(&d, &mut rng);
        let v = smooth(&d, &mut rng);
        let fit = check_expansion(&ts, &u, &v, BETA, AB, &d, &p, &AssemblyOptions::default()).unwrap();
        assert!(fit.slope_second >= 1.9, "second-order slope {}", fit.slope_second);
        assert!(fit.slope_first >= 0.9, "first-order slope {}", fit.slope_first);
    }
}
