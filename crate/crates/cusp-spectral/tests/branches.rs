use std::f64::consts::PI;
use std::sync::Arc;

use cusp_spectral::branches::*;
use cusp_spectral::eigen::{self, EigOptions, Target};
use cusp_spectral::error::{BranchError, Error};
use cusp_spectral::forms::{self, AssemblyOptions};
use cusp_spectral::geometry::p_poly;
use cusp_spectral::model::{self, mode_block, zero_mode_spectrum};
use cusp_spectral::modespace::{CuspGrid, DofMap, MeshParams, ModeFunction};
use proptest::prelude::*;

const BETA: f64 = 1.5;
const AB: f64 = 1.25;

fn small_dofs(k_max: usize) -> Arc<DofMap> {
    let g = CuspGrid::graded(MeshParams::new(0.1, 15.0), BETA, Some(AB), 3.0).unwrap();
    Arc::new(DofMap::new(Arc::new(g), k_max))
}

fn lowest_in_mode(form: &forms::FormPair, ell: usize) -> (f64, Vec<f64>) {
    let (a, m, idx) = mode_sub_block(form, ell);
    let lb = (ell as f64 * PI).powi(2);
    let p = eigen::solve(&a, &m, 1, Target::Lowest { lower_bound: lb }, &EigOptions::default()).unwrap();
    let mut x = vec![0.0; form.dofs.n_dofs];
    for (k, &i) in idx.iter().enumerate() {
        x[i] = p.vectors[0][k];
    }
    (p.values[0], x)
}

#[test]
fn constant_family() {
    let d = small_dofs(2);
    let form = forms::assemble_a(0.2, &d);
    let seed = lowest_in_mode(&form, 1);
    let e0 = seed.0;
    let br = continue_branch(|_| Ok(form.clone()), 0.2, 0.1, seed, &ContinuationOptions::default()).unwrap();
    assert!(br.len() > 3);
    assert!(br.lost.is_none());
    for i in 0..br.len() {
        assert!((br.e[i] - e0).abs() <= 1e-9 * e0);
        assert!((br.overlaps[i] - 1.0).abs() < 1e-9);
    }
    assert_eq!(*br.t.last().unwrap(), 0.1);
}

#[test]
fn model_family_reproduces_mode_blocks() {
    let d = small_dofs(2);
    let g = d.grid.clone();
    for ell in [0usize, 1] {
        let t0 = 0.2;
        let seed = lowest_in_mode(&forms::assemble_a(t0, &d), ell);
        let br = continue_branch(|t| Ok(forms::assemble_a(t, &d)), t0, 0.1, seed, &ContinuationOptions::default()).unwrap();
        assert!(br.lost.is_none());
        for i in 0..br.len() {
            let want = mode_block(ell, br.t[i], &g).solve(1, &EigOptions::default()).unwrap().values[0];
            assert!((br.e[i] - want).abs() <= 1e-8 * want, "ell {ell} t {}: {} vs {want}", br.t[i], br.e[i]);
            assert!(mode_mass_fraction(&d, &br.vectors[i], ell) > 1.0 - 1e-10);
        }
        if ell == 0 {
            // Zero mode: c_1 t² up to discretization error.
            let z = zero_mode_spectrum(br.t[0], BETA, 1).unwrap();
            assert!((br.e[0] - z.eigenvalues[0]).abs() <= 1e-3 * z.eigenvalues[0]);
        }
    }
}

#[test]
fn tie_breaks_toward_prediction() {
    let n = 4;
    let unit = |i: usize| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    let prev = vec![0.5f64.sqrt(), 0.5f64.sqrt(), 0.0, 0.0];
    let m = identity(n);
    let (j, ov) = pick_by_overlap(&m, &prev, &[5.0, 1.0], &[unit(0), unit(1)], 1.2, 0.02);
    assert_eq!(j, 1);
    assert!((ov - 0.5f64.sqrt()).abs() < 1e-15);
    let (j, _) = pick_by_overlap(&m, &prev, &[5.0, 1.0], &[unit(0), unit(2)], 1.2, 0.02);
    assert_eq!(j, 0);
}

fn identity(n: usize) -> cusp_spectral::banded::SymBand {
    let mut m = cusp_spectral::banded::SymBand::zeros(n, 0);
    for i in 0..n {
        m.set(i, i, 1.0);
    }
    m
}

#[test]
fn extrapolation_and_classification() {
    let d = small_dofs(1);
    let ts: Vec<f64> = (0..12).map(|i| 0.3 * 0.8f64.powi(i)).collect();
    let es: Vec<f64> = ts.iter().map(|t| 4.0 * PI * PI + 3.0 * t.powf(2.0 / 3.0) - 2.0 * t.powf(4.0 / 3.0)).collect();
    let n = ts.len();
    let mut br = Eigenbranch {
        t: ts,
        e: es,
        vectors: vec![vec![]; n],
        overlaps: vec![1.0; n],
        mixed: vec![false; n],
        residuals: vec![0.0; n],
        dofs: d,
        lost: None,
        limit: None,
    };
    assert!((extrapolate_limit(&br) - 4.0 * PI * PI).abs() < 1e-10);
    assert_eq!(classify(&mut br, 0.1), Some(2));
    br.e.iter_mut().for_each(|e| *e += 1.0);
    assert_eq!(classify(&mut br, 0.1), None);
}

#[test]
fn projection_properties() {
    let d = small_dofs(3);
    let t = 0.1;
    let a = forms::assemble_a(t, &d);
    let window = (0.5 * PI * PI, 1.5 * PI * PI);
    let opts = EigOptions::default();
    // An eigenvector inside the window is returned unchanged.
    let (_, x) = lowest_in_mode(&a, 1);
    let u = d.to_function(&x);
    let p = spectral_projection(&u, &a, window, &opts).unwrap();
    assert!(p.w.axpy(-1.0, &u).unwrap().norm() <= 1e-10 * u.norm());
    // Idempotence and commuting with Π_ℓ on a generic function.
    let g = d.grid.clone();
    let mut v = ModeFunction::zeros(g.clone(), 3);
    for k in 0..=3 {
        for (i, &y) in g.y.iter().enumerate() {
            let end = if k == 0 { BETA } else { g.y_max() };
            v.profiles[k][i] = (end - y).max(0.0) * (1.0 + k as f64 * y).sin();
        }
    }
    let w = spectral_projection(&v, &a, window, &opts).unwrap().w;
    let ww = spectral_projection(&w, &a, window, &opts).unwrap().w;
    assert!(ww.axpy(-1.0, &w).unwrap().norm() <= 1e-10 * w.norm());
    for ell in 0..=3 {
        let lhs = w.project_mode(ell).unwrap();
        let rhs = spectral_projection(&v.project_mode(ell).unwrap(), &a, window, &opts).unwrap().w;
        assert!(lhs.axpy(-1.0, &rhs).unwrap().norm() <= 1e-12 * v.norm().max(1.0));
    }
    // Modes with (ℓπ)² above the window contribute nothing.
    assert!(w.mode_norm(2) == 0.0 && w.mode_norm(3) == 0.0);
    let empty = spectral_projection(&v, &a, (1e5, 1e5 + 1.0), &opts).unwrap();
    assert!(empty.empty);
    assert!(matches!(
        empty.require_nonempty(1e5, 1e5 + 1.0),
        Err(Error::Branch(BranchError::WindowEmpty { .. }))
    ));
}

#[test]
fn quasimode_residual_zero_and_homogeneous() {
    let d = small_dofs(2);
    let a = forms::assemble_a(0.15, &d);
    let at = forms::a_tilde(&a);
    let (e, x) = lowest_in_mode(&a, 1);
    let u = d.to_function(&x);
    let n0 = quasimode_residual(&u, e, &a, &at).unwrap();
    assert!(n0 <= 1e-7 * u.norm(), "{n0}");
    let n1 = quasimode_residual(&u, e * 1.1, &a, &at).unwrap();
    let n3 = quasimode_residual(&u.scaled(-3.0), e * 1.1, &a, &at).unwrap();
    assert!((n3 - 3.0 * n1).abs() <= 1e-12 * n3);
}

#[test]
fn cusp_form_functional_examples() {
    let g = Arc::new(CuspGrid::graded(MeshParams::new(0.1, 15.0), BETA, Some(AB), 3.0).unwrap());
    let b = g.beta_index;
    let mut u = ModeFunction::zeros(g.clone(), 1);
    for i in 0..b {
        u.profiles[0][i] = g.y[i] - BETA;
    }
    let l = cusp_form_functional(&u, 5.0, 0.1, AB).unwrap();
    assert!((l.difference_quotient - 1.0).abs() < 1e-12);
    let z = ModeFunction::zeros(g, 1);
    let l0 = cusp_form_functional(&z, 5.0, 0.1, AB).unwrap();
    assert_eq!((l0.difference_quotient, l0.green), (0.0, 0.0));
}

#[test]
fn cusp_form_functional_two_methods_agree() {
    let d = small_dofs(2);
    let t = 0.2;
    let fam = DegenerateFamily::new(BETA, AB, d.clone(), AssemblyOptions::default());
    let q = fam.q(t).unwrap();
    let p = eigen::solve(&q.a, &q.m, 4, Target::Nearest(12.0), &EigOptions::default()).unwrap();
    for (e, v) in p.values.iter().zip(&p.vectors) {
        let l = cusp_form_functional(&d.to_function(v), *e, t, AB).unwrap();
        assert!(l.discrepancy <= 3.0 * l.error_estimate.max(1e-6 * l.green.abs()), "{l:?}");
    }
}

#[test]
fn nonconcentration_examples() {
    let g = CuspGrid::graded(MeshParams::new(0.05, 15.0), BETA, Some(AB), 3.0).unwrap();
    let v: Vec<f64> = g.y.iter().map(|&y| (3.0 - y) * (1.0 + y * y)).collect();
    assert!((nonconcentration(&g, &v, 0, 7.5) - 7.5).abs() < 1e-12 * 7.5);
    // A narrowing bump at the turning point.
    let e = 2.0 * PI * PI;
    let ytp = e.sqrt() / PI;
    let vals: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&w| {
            let b: Vec<f64> = g.y.iter().map(|&y| (-((y - ytp) / w).powi(2)).exp()).collect();
            nonconcentration(&g, &b, 1, e).abs()
        })
        .collect();
    assert!(vals[0] > vals[1] && vals[1] > vals[2]);
}

#[test]
fn mode_mass_pythagoras() {
    let d = small_dofs(3);
    let g = d.grid.clone();
    let mut w = ModeFunction::zeros(g.clone(), 3);
    for k in 0..=3 {
        for (i, &y) in g.y.iter().enumerate() {
            let end = if k == 0 { BETA } else { g.y_max() };
            w.profiles[k][i] = (end - y).max(0.0) * (k as f64 + y).cos();
        }
    }
    let n = w.norm();
    let m = mode_mass(&w, n, 2, 0.1, 0.5);
    let s = m.low_mass.powi(2) + m.k_mass.powi(2) + m.rest_mass.powi(2);
    assert!((s - 1.0).abs() < 1e-12);
    let pure = w.project_mode(1).unwrap();
    assert!((mode_mass(&pure, pure.norm(), 1, 0.1, 0.5).k_mass - 1.0).abs() < 1e-14);
}

#[test]
fn coupling_of_zero_mode_with_itself_vanishes() {
    let d = small_dofs(2);
    let z = zero_mode_spectrum(0.1, BETA, 3).unwrap();
    let psi = zero_mode_function(&z, 2, &d.grid, 2);
    let b = forms::assemble_b(0.1, &d, &p_poly(AB));
    assert_eq!(b.eval(&psi, &psi), 0.0);
}

#[test]
fn coupling_probe_window() {
    let d = small_dofs(2);
    let z = zero_mode_spectrum(0.1, BETA, 5).unwrap();
    let psi = zero_mode_function(&z, 3, &d.grid, 2);
    let b = forms::assemble_b(0.1, &d, &p_poly(AB));
    let r = coupling_probe(&psi, 20.0, 0.1, 1, &z, 3, &b, 0.5, 1.0);
    assert!(matches!(r, Err(Error::Branch(BranchError::NotNearCrossing { .. }))));
}

#[test]
fn predictor_crossing_law() {
    let z = zero_mode_spectrum(1.0, BETA, 31).unwrap();
    let a1 = model::airy_predict(1, 1).a;
    let recs = predictor_crossings(1, a1, &z);
    assert!(recs.windows(2).skip(1).all(|w| w[1].t_n < w[0].t_n));
    assert!(recs.iter().all(|r| r.residual < 1e-8));
    let last = recs.last().unwrap();
    assert_eq!(last.n, 30);
    assert!((last.n_t_n - BETA.ln()).abs() / BETA.ln() <= 0.05);
    let tail: Vec<CrossingRecord> = recs.iter().copied().filter(|r| r.n >= 10).collect();
    let tau = fit_tau(&tail, &z, 1);
    let want = tau_expected(a1, 1);
    assert!((tau - want).abs() <= 0.1 * want, "{tau} vs {want}");
}

#[test]
fn crossing_scan_on_sampled_predictor() {
    let z = zero_mode_spectrum(1.0, BETA, 12).unwrap();
    let a1 = model::airy_predict(1, 1).a;
    let ts: Vec<f64> = (0..400).map(|i| 0.3 * (0.04f64 / 0.3).powf(i as f64 / 399.0)).collect();
    let es: Vec<f64> = ts.iter().map(|t| PI * PI + a1 * t.powf(2.0 / 3.0)).collect();
    let (recs, err) = crossing_scan(&ts, &es, &z, None);
    let exact = predictor_crossings(1, a1, &z);
    assert!(!recs.is_empty());
    assert!(matches!(err, Some(BranchError::NoSignChange { .. })));
    for r in &recs {
        let e = exact[r.n];
        assert!((r.t_n - e.t_n).abs() < 1e-5 * e.t_n);
        assert!(r.residual < 1e-8);
    }
}

#[test]
fn tracking_model_branch_has_zero_gap() {
    let g = small_dofs(1).grid.clone();
    let ts = [0.2, 0.1, 0.05];
    let br = model::mode_branch(1, &ts, 1, &g, &EigOptions::default()).unwrap();
    let es: Vec<f64> = br[0].lambda.clone();
    let rep = tracking_report(&ts, &es, 1, &g, Some(5.0), &EigOptions::default()).unwrap();
    for r in &rep.rows {
        assert!(r.gap.abs() <= 1e-9 * r.e);
        assert!(r.unique);
    }
}

#[test]
fn q_branch_limits_to_first_mode() {
    let g = Arc::new(CuspGrid::graded(MeshParams::new(0.02, 15.0), BETA, Some(AB), 3.0).unwrap());
    let d = Arc::new(DofMap::new(g, 6));
    let fam = DegenerateFamily::new(BETA, AB, d, AssemblyOptions::default());
    let opts = ContinuationOptions::default();
    let pred = PI * PI + model::airy_predict(1, 1).a * 0.3f64.powf(2.0 / 3.0);
    let seed = seed_by_mode(&fam.q(0.3).unwrap(), 1, pred, opts.count, &opts.eig).unwrap();
    let mut br = continue_branch(|t| fam.q(t), 0.3, 0.02, seed, &opts).unwrap();
    assert!(br.lost.is_none());
    assert!(br.e.iter().all(|&e| e > 0.0));
    assert_eq!(classify(&mut br, 0.1), Some(1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn prop_residual_homogeneous(c in -5.0f64..5.0, shift in 0.5f64..2.0) {
        let d = small_dofs(1);
        let a = forms::assemble_a(0.2, &d);
        let at = forms::a_tilde(&a);
        let (e, x) = lowest_in_mode(&a, 1);
        let u = d.to_function(&x);
        let n1 = quasimode_residual(&u, e * shift, &a, &at).unwrap();
        let nc = quasimode_residual(&u.scaled(c), e * shift, &a, &at).unwrap();
        prop_assert!((nc - c.abs() * n1).abs() <= 1e-12 * (1.0 + nc));
    }
}
