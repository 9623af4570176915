//! Eigenbranch continuation in `t`, spectral projections onto model windows,
//! the cusp-form functional, quasimode residuals and crossing diagnostics.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::airy;
use crate::banded::{dot, SymBand};
use crate::eigen::{self, EigOptions, Target};
use crate::error::{BranchError, Result};
use crate::fit::{self, LineFit};
use crate::forms::{self, AssemblyOptions, FormPair};
use crate::geometry::{p_poly, PPoly};
use crate::model::{self, ZeroModeSpectrum};
use crate::modespace::{hats, profile_at, profile_inner, CuspGrid, DofMap, ModeFunction};
use crate::ode;
use crate::par;
use crate::quad::GaussRule;

/// Knobs of the adaptive continuation.
#[derive(Debug, Clone, Copy)]
pub struct ContinuationOptions {
    /// Eigenpairs requested around the prediction.
    pub count: usize,
    /// Initial and maximal step, relative to `t`.
    pub initial_step: f64,
    pub max_step: f64,
    /// Smallest step, relative to `t`.
    pub min_step: f64,
    /// Halve the step below this overlap.
    pub refine_overlap: f64,
    /// Give up below this overlap at the minimal step.
    pub lost_overlap: f64,
    /// Overlaps closer than this are tied; ties go to the nearest eigenvalue.
    pub tie: f64,
    /// A sample whose reference overlap is below `refine_overlap` counts as
    /// mixed when another candidate overlaps the reference by at least this.
    pub mix_overlap: f64,
    pub growth: f64,
    pub eig: EigOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            count: 6,
            initial_step: 0.05,
            max_step: 0.08,
            min_step: 0.05,
            refine_overlap: 0.9,
            lost_overlap: 0.5,
            tie: 0.02,
            mix_overlap: 0.3,
            growth: 1.25,
            eig: EigOptions::default(),
        }
    }
}

/// A numerically continued eigenbranch.
#[derive(Debug, Clone)]
pub struct Eigenbranch {
    pub t: Vec<f64>,
    pub e: Vec<f64>,
    /// M-normalized DOF vectors.
    pub vectors: Vec<Vec<f64>>,
    /// `|⟨u_r, u_i⟩_M|` against the reference sample `r`, the last unmixed
    /// sample before `i`; the first entry is 1.
    pub overlaps: Vec<f64>,
    /// Samples that landed inside an avoided crossing.
    pub mixed: Vec<bool>,
    pub residuals: Vec<f64>,
    pub dofs: Arc<DofMap>,
    /// Set when continuation stopped at a near-degenerate crossing.
    pub lost: Option<BranchError>,
    /// Limit mode `k` once classified.
    pub limit: Option<usize>,
}

impl Eigenbranch {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn u(&self, i: usize) -> ModeFunction {
        self.dofs.to_function(&self.vectors[i])
    }

    /// Index of the sample nearest `t`.
    pub fn nearest(&self, t: f64) -> usize {
        (0..self.len())
            .min_by(|&a, &b| (self.t[a] - t).abs().total_cmp(&(self.t[b] - t).abs()))
            .expect("non-empty branch")
    }
}

fn m_normalize(m: &SymBand, v: &mut [f64]) {
    let n = m.form(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

/// Among `pairs`, the one continuing `prev`: largest `|⟨prev, v⟩_M|`, ties
/// broken toward the prediction. Returns `(index, overlap)`.
pub fn pick_by_overlap(
    m: &SymBand,
    prev: &[f64],
    values: &[f64],
    vectors: &[Vec<f64>],
    prediction: f64,
    tie: f64,
) -> (usize, f64) {
    let mp = m.matvec(prev);
    let ov: Vec<f64> = vectors.iter().map(|v| dot(&mp, v).abs()).collect();
    let best = ov.iter().cloned().fold(0.0, f64::max);
    let i = (0..ov.len())
        .filter(|&i| ov[i] >= best - tie)
        .min_by(|&a, &b| {
            (values[a] - prediction)
                .abs()
                .total_cmp(&(values[b] - prediction).abs())
        })
        .expect("at least one candidate");
    (i, ov[i])
}

/// Adaptive continuation of a seeded eigenpair from `t_start` to `t_end`.
pub fn continue_branch<F>(
    family: F,
    t_start: f64,
    t_end: f64,
    seed: (f64, Vec<f64>),
    opts: &ContinuationOptions,
) -> Result<Eigenbranch>
where
    F: Fn(f64) -> Result<FormPair>,
{
    let form0 = family(t_start)?;
    let dofs = form0.dofs.clone();
    let mut v0 = seed.1;
    m_normalize(&form0.m, &mut v0);
    let r0 = residual(&form0, seed.0, &v0);
    let mut br = Eigenbranch {
        t: vec![t_start],
        e: vec![seed.0],
        vectors: vec![v0],
        overlaps: vec![1.0],
        mixed: vec![false],
        residuals: vec![r0],
        dofs,
        lost: None,
        limit: None,
    };
    let dir = (t_end - t_start).signum();
    let mut t = t_start;
    let mut dt = opts.initial_step * t_start.abs();
    // Overlap reference: the last sample accepted without mixing, so a
    // sample landing inside a narrow avoided crossing does not redirect
    // the branch onto the other level.
    let mut anchor = 0usize;
    while (t_end - t) * dir > 1e-15 * t_start.abs() {
        let step = dt.min((t_end - t).abs());
        let tn = if (t_end - (t + dir * step)) * dir < 1e-12 * t.abs() {
            t_end
        } else {
            t + dir * step
        };
        let k = br.len();
        let pred = if k >= 2 {
            let (t1, t2) = (br.t[k - 2], br.t[k - 1]);
            let (e1, e2) = (br.e[k - 2], br.e[k - 1]);
            e2 + (e2 - e1) / (t2 - t1) * (tn - t2)
        } else {
            br.e[k - 1]
        };
        let form = family(tn)?;
        let pairs = eigen::solve(&form.a, &form.m, opts.count, Target::Nearest(pred), &opts.eig)?;
        let (j, ov) = pick_by_overlap(
            &form.m,
            &br.vectors[anchor],
            &pairs.values,
            &pairs.vectors,
            pred,
            opts.tie,
        );
        let min_step = opts.min_step * t.abs();
        if ov < opts.refine_overlap && step > min_step {
            dt = (step / 2.0).max(min_step);
            continue;
        }
        if ov < opts.lost_overlap {
            br.lost = Some(BranchError::BranchLost { t: tn, overlap: ov });
            break;
        }
        let mp = form.m.matvec(&br.vectors[anchor]);
        let mut v = pairs.vectors[j].clone();
        if dot(&mp, &v) < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        br.t.push(tn);
        br.e.push(pairs.values[j]);
        br.vectors.push(v);
        br.overlaps.push(ov);
        br.residuals.push(pairs.residuals[j]);
        let second = (0..pairs.vectors.len())
            .filter(|&i| i != j)
            .map(|i| dot(&mp, &pairs.vectors[i]).abs())
            .fold(0.0, f64::max);
        let mixed = ov < opts.refine_overlap && second >= opts.mix_overlap;
        br.mixed.push(mixed);
        if !mixed {
            anchor = k;
        }
        t = tn;
        dt = if ov > 0.98 {
            (step * opts.growth).min(opts.max_step * t.abs())
        } else {
            step
        };
    }
    Ok(br)
}

fn residual(form: &FormPair, e: f64, v: &[f64]) -> f64 {
    let r = form.a.combine(1.0, &form.m, -e).matvec(v);
    let z = form.m.ldlt().solve(&r);
    dot(&r, &z).max(0.0).sqrt()
}

/// Mode-`k` mass fraction `‖u^k‖²/‖u‖²` of a DOF vector.
pub fn mode_mass_fraction(dofs: &DofMap, x: &[f64], k: usize) -> f64 {
    let u = dofs.to_function(x);
    let n2 = u.norm().powi(2);
    u.mode_norm(k).powi(2) / n2
}

/// Seed for a branch with limit `(kπ)²`: among the eigenpairs nearest
/// `target` carrying at least half their mass in mode `k`, the one closest
/// to `target`; the largest mode-`k` mass if none qualifies.
pub fn seed_by_mode(
    form: &FormPair,
    k: usize,
    target: f64,
    count: usize,
    opts: &EigOptions,
) -> Result<(f64, Vec<f64>)> {
    let pairs = eigen::solve(&form.a, &form.m, count, Target::Nearest(target), opts)?;
    let mass: Vec<f64> = pairs
        .vectors
        .iter()
        .map(|v| mode_mass_fraction(&form.dofs, v, k))
        .collect();
    let near = (0..mass.len())
        .filter(|&i| mass[i] >= 0.5)
        .min_by(|&a, &b| {
            (pairs.values[a] - target)
                .abs()
                .total_cmp(&(pairs.values[b] - target).abs())
        });
    let j = near
        .or_else(|| (0..mass.len()).max_by(|&a, &b| mass[a].total_cmp(&mass[b])))
        .expect("non-empty");
    Ok((pairs.values[j], pairs.vectors[j].clone()))
}

/// Extrapolated `E_0`, quadratic in `t^{2/3}`, from three unmixed samples:
/// the smallest `t` and those nearest `2t` and `4t` on a log scale.
pub fn extrapolate_limit(branch: &Eigenbranch) -> f64 {
    let mut idx: Vec<usize> = (0..branch.len()).filter(|&i| !branch.mixed[i]).collect();
    if idx.is_empty() {
        idx = (0..branch.len()).collect();
    }
    idx.sort_by(|&a, &b| branch.t[a].total_cmp(&branch.t[b]));
    let t0 = branch.t[idx[0]];
    let mut chosen = vec![idx[0]];
    for f in [2.0, 4.0] {
        let best = idx
            .iter()
            .copied()
            .filter(|i| !chosen.contains(i))
            .min_by(|&a, &b| {
                (branch.t[a] / (f * t0)).ln().abs().total_cmp(&(branch.t[b] / (f * t0)).ln().abs())
            });
        if let Some(i) = best {
            chosen.push(i);
        }
    }
    let pts: Vec<(f64, f64)> = chosen
        .iter()
        .map(|&i| (branch.t[i].powf(2.0 / 3.0), branch.e[i]))
        .collect();
    if pts.len() < 3 {
        return pts[0].1;
    }
    // Lagrange interpolation evaluated at 0.
    let mut s = 0.0;
    for i in 0..3 {
        let mut l = 1.0;
        for j in 0..3 {
            if i != j {
                l *= pts[j].0 / (pts[j].0 - pts[i].0);
            }
        }
        s += l * pts[i].1;
    }
    s
}

/// Classifies the limit against the grid `{(kπ)²}` and stores it.
pub fn classify(branch: &mut Eigenbranch, tol: f64) -> Option<usize> {
    let e0 = extrapolate_limit(branch);
    let k = (e0.max(0.0).sqrt() / PI).round() as usize;
    let hit = (e0 - (k as f64 * PI).powi(2)).abs() <= tol;
    branch.limit = hit.then_some(k);
    branch.limit
}

/// The mode-`ell` diagonal block of a mode-decoupled pencil, with the DOF
/// indices of its rows.
pub fn mode_sub_block(form: &FormPair, ell: usize) -> (SymBand, SymBand, Vec<usize>) {
    let d = &form.dofs;
    let idx: Vec<usize> = (0..d.grid.n_nodes()).filter_map(|i| d.dof(i, ell)).collect();
    let n = idx.len();
    let mut a = SymBand::zeros(n, 1);
    let mut m = SymBand::zeros(n, 1);
    for i in 0..n {
        a.set(i, i, form.a.get(idx[i], idx[i]));
        m.set(i, i, form.m.get(idx[i], idx[i]));
        if i > 0 {
            a.set(i, i - 1, form.a.get(idx[i], idx[i - 1]));
            m.set(i, i - 1, form.m.get(idx[i], idx[i - 1]));
        }
    }
    (a, m, idx)
}

/// Spectral projection onto an `a_t`-window.
#[derive(Debug, Clone)]
pub struct Projection {
    pub w: ModeFunction,
    /// Eigenvalues of `a_t` inside the window, per mode.
    pub per_mode: Vec<Vec<f64>>,
    /// No eigenvalue in the window; `w` is zero.
    pub empty: bool,
}

impl Projection {
    pub fn require_nonempty(self, lo: f64, hi: f64) -> Result<Self> {
        if self.empty {
            Err(BranchError::WindowEmpty { lo, hi }.into())
        } else {
            Ok(self)
        }
    }
}

/// Per-mode projected profile and its `(index, λ)` pairs.
type BlockPart = (Vec<f64>, Vec<(usize, f64)>);

/// `w = Σ_{λ ∈ I} P^λ u`, computed per Fourier mode.
pub fn spectral_projection(
    u: &ModeFunction,
    a_form: &FormPair,
    window: (f64, f64),
    opts: &EigOptions,
) -> Result<Projection> {
    let (lo, hi) = window;
    let x = a_form.dofs.to_dofs(u)?;
    let k_max = a_form.dofs.k_max;
    let blocks = par::map_range(k_max + 1, |ell| -> Result<BlockPart> {
        if (ell as f64 * PI).powi(2) > hi {
            return Ok((vec![], vec![]));
        }
        let (a, m, idx) = mode_sub_block(a_form, ell);
        let pairs = eigen::solve_interval(&a, &m, lo, hi, opts)?;
        let xl: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let mx = m.matvec(&xl);
        let mut out = vec![0.0; idx.len()];
        for v in &pairs.vectors {
            let c = dot(&mx, v);
            for (o, vi) in out.iter_mut().zip(v) {
                *o += c * vi;
            }
        }
        Ok((pairs.values, idx.into_iter().zip(out).collect()))
    });
    let mut y = vec![0.0; x.len()];
    let mut per_mode = vec![];
    for b in blocks {
        let (vals, entries) = b?;
        per_mode.push(vals);
        for (i, v) in entries {
            y[i] = v;
        }
    }
    let empty = per_mode.iter().all(|v| v.is_empty());
    Ok(Projection {
        w: a_form.dofs.to_function(&y),
        per_mode,
        empty,
    })
}

/// `N(w, E)`: the `ã`-dual norm of `(A − E M) w`.
pub fn quasimode_residual(
    w: &ModeFunction,
    e: f64,
    a_form: &FormPair,
    a_tilde_form: &FormPair,
) -> Result<f64> {
    let x = a_form.dofs.to_dofs(w)?;
    let r = a_form.a.combine(1.0, &a_form.m, -e).matvec(&x);
    let f = a_tilde_form.a.ldlt();
    if !f.is_positive_definite() {
        return Err(BranchError::SingularAtilde.into());
    }
    let z = f.solve(&r);
    Ok(dot(&z, &r).max(0.0).sqrt())
}

/// Both estimates of `L(u) = lim_{y→β⁻} u⁰(y)/(y − β)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LEstimate {
    /// Richardson-extrapolated one-sided difference quotient.
    pub difference_quotient: f64,
    /// `(∫G)^{-1} ∫u⁰` over `[α_K, β]`.
    pub green: f64,
    pub discrepancy: f64,
    /// Error bar of the difference quotient.
    pub error_estimate: f64,
    pub alpha_k: f64,
}

/// `L(u)`. The zeroth profile solves `−d₂² u″ = (E/y²) u` on `[ᾱ, β]`,
/// where `d₂` is the `y`-scale of the cusp metric (`t` for the degenerating
/// family, 1 for the moduli family).
pub fn cusp_form_functional(u: &ModeFunction, e: f64, d2: f64, alpha_bar: f64) -> Result<LEstimate> {
    let g = &u.grid;
    let b = g.beta_index;
    let beta = g.beta;
    let p = &u.profiles[0];
    // One-sided quotients over one and two cells; u⁰″(β) = 0 leaves an h²
    // leading error.
    let (h1, hh) = (beta - g.y[b - 1], beta - g.y[b.saturating_sub(2)]);
    let d1 = -p[b - 1] / h1;
    let dq = if b >= 2 {
        let dh = -p[b - 2] / hh;
        (hh * hh * d1 - h1 * h1 * dh) / (hh * hh - h1 * h1)
    } else {
        d1
    };
    let err = (d1 - dq).abs();
    let lam = e / (d2 * d2);
    let omega = lam.sqrt() / beta;
    let mut alpha_k = alpha_bar.max(beta - PI / (2.0 * omega));
    let zero = |y: f64| 0.0 * y;
    let q = |y: f64| -lam / (y * y);
    loop {
        let n = ((beta - alpha_k) * omega * 20.0).ceil().max(40.0) as usize;
        let path = ode::gl6_path(&q, &zero, beta, [0.0, 1.0], alpha_k, n);
        // Trapezoid on the fine GL6 path is second order; refine with a cubic
        // Hermite correction using the derivative.
        let mut ig = 0.0;
        for w in path.windows(2) {
            let (ya, [ga, gpa]) = w[0];
            let (yb, [gb, gpb]) = w[1];
            let h = yb - ya;
            ig += h * (ga + gb) / 2.0 + h * h * (gpa - gpb) / 12.0;
        }
        let ig = -ig;
        if ig.abs() >= 1e-8 || beta - alpha_k < 1e-6 {
            if ig.abs() < 1e-8 {
                return Err(BranchError::GreenNormalizationSmall { value: ig }.into());
            }
            let iu = integrate_profile(g, p, alpha_k, beta);
            let green = iu / ig;
            return Ok(LEstimate {
                difference_quotient: dq,
                green,
                discrepancy: (green - dq).abs(),
                error_estimate: err,
                alpha_k,
            });
        }
        alpha_k = 0.5 * (alpha_k + beta);
    }
}

/// `∫_a^b p(y) dy` for a P1 profile.
fn integrate_profile(g: &CuspGrid, p: &[f64], a: f64, b: f64) -> f64 {
    let mut s = 0.0;
    for c in 0..g.n_cells() {
        let (y0, y1) = (g.y[c].max(a), g.y[c + 1].min(b));
        if y1 <= y0 {
            continue;
        }
        let (v0, v1) = (
            profile_at(&g.y, p, y0),
            profile_at(&g.y, p, y1),
        );
        s += 0.5 * (y1 - y0) * (v0 + v1);
    }
    s
}

/// `∫(E/y² − (ℓπ)²)|v|² dy / ∫|v|² y^{-2} dy`.
pub fn nonconcentration(grid: &CuspGrid, v: &[f64], ell: usize, e: f64) -> f64 {
    let rule = GaussRule::new(4);
    let c2 = (ell as f64 * PI).powi(2);
    let mut num = 0.0;
    for c in 0..grid.n_cells() {
        for (y, w) in rule.on(grid.y[c], grid.y[c + 1]) {
            let (h, _) = hats(grid.y[c], grid.y[c + 1], y);
            let val = h[0] * v[c] + h[1] * v[c + 1];
            num += w * (e / (y * y) - c2) * val * val;
        }
    }
    num / profile_inner(grid, v, v)
}

/// A crossing of the branch with the zero-mode eigenvalue `c_n t²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingRecord {
    /// Zero-mode index, counted from 0 (`r_0` is the smallest root).
    pub n: usize,
    pub t_n: f64,
    pub residual: f64,
    pub n_t_n: f64,
}

/// Roots of `E(t) = c t²` on the piecewise-linear interpolant of `(ts, es)`.
fn crossings_of_samples(ts: &[f64], es: &[f64], c: f64) -> Vec<f64> {
    let f = |i: usize| es[i] - c * ts[i] * ts[i];
    let mut out = vec![];
    for i in 1..ts.len() {
        if f(i - 1).signum() != f(i).signum() {
            let (mut a, mut b) = (ts[i - 1], ts[i]);
            let g = |t: f64| {
                let e = es[i - 1] + (es[i] - es[i - 1]) * (t - ts[i - 1]) / (ts[i] - ts[i - 1]);
                e - c * t * t
            };
            let sa = g(a).signum();
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m == a || m == b {
                    break;
                }
                if g(m).signum() == sa {
                    a = m;
                } else {
                    b = m;
                }
            }
            out.push(0.5 * (a + b));
        }
    }
    out
}

/// Crossing times of `E_t` with `c_n t²`. `resolve(t)` optionally re-solves the
/// branch energy near `t`; the crossing is then refined on the two local
/// samples `t(1 ± 0.005)`, which lie outside the avoided-crossing window.
/// Stops at the first `n` without a sign change on the sampled range.
pub fn crossing_scan(
    ts: &[f64],
    es: &[f64],
    zero: &ZeroModeSpectrum,
    resolve: Option<&(dyn Fn(f64) -> Result<f64> + Sync)>,
) -> (Vec<CrossingRecord>, Option<BranchError>) {
    let mut out: Vec<CrossingRecord> = vec![];
    for n in 0..zero.roots.len() {
        let c = zero.c(n + 1);
        let Some(&t0) = crossings_of_samples(ts, es, c).first() else {
            let err = if out.is_empty() && n == 0 {
                None
            } else {
                Some(BranchError::NoSignChange { n })
            };
            if out.is_empty() {
                continue;
            }
            return (out, err);
        };
        let mut tn = t0;
        let mut local = None;
        if let Some(r) = resolve {
            let (ta, tb) = (t0 * 0.995, t0 * 1.005);
            if let (Ok(ea), Ok(eb)) = (r(ta), r(tb)) {
                let roots = crossings_of_samples(&[ta, tb], &[ea, eb], c);
                if let Some(&t1) = roots.first() {
                    tn = t1;
                    local = Some(([ta, tb], [ea, eb]));
                }
            }
        }
        let e_at = |t: f64| match local {
            Some((tt, ee)) => ee[0] + (ee[1] - ee[0]) * (t - tt[0]) / (tt[1] - tt[0]),
            None => interp(ts, es, t),
        };
        out.push(CrossingRecord {
            n,
            t_n: tn,
            residual: (e_at(tn) - c * tn * tn).abs(),
            n_t_n: n as f64 * tn,
        });
    }
    (out, None)
}

fn interp(ts: &[f64], es: &[f64], t: f64) -> f64 {
    for i in 1..ts.len() {
        let (a, b) = (ts[i - 1].min(ts[i]), ts[i - 1].max(ts[i]));
        if t >= a && t <= b {
            return es[i - 1] + (es[i] - es[i - 1]) * (t - ts[i - 1]) / (ts[i] - ts[i - 1]);
        }
    }
    f64::NAN
}

/// Crossing times of the Airy predictor `(kπ)² + ν t^{2/3}` with `c_n t²`
/// for zero-mode indices `0..zero.roots.len()`.
pub fn predictor_crossings(k: usize, nu: f64, zero: &ZeroModeSpectrum) -> Vec<CrossingRecord> {
    let e0 = (k as f64 * PI).powi(2);
    (0..zero.roots.len())
        .map(|n| {
            let c = zero.c(n + 1);
            let f = |t: f64| e0 + nu * t.powf(2.0 / 3.0) - c * t * t;
            let (mut a, mut b) = (1e-12, 1.0);
            while f(b) > 0.0 {
                b *= 2.0;
            }
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if f(m) > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            let t = 0.5 * (a + b);
            CrossingRecord {
                n,
                t_n: t,
                residual: f(t).abs(),
                n_t_n: n as f64 * t,
            }
        })
        .collect()
}

/// Least-squares `τ` in `t_n ≈ (πk) c_n^{-1/2} + τ c_n^{-5/6}`.
pub fn fit_tau(records: &[CrossingRecord], zero: &ZeroModeSpectrum, k: usize) -> f64 {
    let pk = PI * k as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for r in records {
        let c = zero.c(r.n + 1);
        let x = c.powf(-5.0 / 6.0);
        num += x * (r.t_n - pk * c.powf(-0.5));
        den += x * x;
    }
    num / den
}

/// Two-term crossing coefficient from expanding `Y³`: `ν (πk)^{-1/3}/2`.
pub fn tau_expected(nu: f64, k: usize) -> f64 {
    nu * (PI * k as f64).powf(-1.0 / 3.0) / 2.0
}

/// The coefficient as printed in the source, `ν (πk)^{1/3}/2`.
pub fn tau_literal(nu: f64, k: usize) -> f64 {
    nu * (PI * k as f64).powf(1.0 / 3.0) / 2.0
}

/// One row of the tracking table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingRow {
    pub t: f64,
    pub e: f64,
    pub lambda_star: f64,
    pub gap: f64,
    pub gap_over_t: f64,
    pub gap_over_t23: f64,
    /// Exactly one model eigenvalue inside `[E − Ct, E + Ct]`.
    pub unique: bool,
}

#[derive(Debug, Clone)]
pub struct TrackingReport {
    pub rows: Vec<TrackingRow>,
    /// Window constant `C`.
    pub c: f64,
    /// Log-log fit of `|E − λ*|` against `t`.
    pub exponent: Option<LineFit>,
}

/// Nearest `a_t^k` eigenvalue at each sample.
pub fn tracking_report(
    ts: &[f64],
    es: &[f64],
    k: usize,
    grid: &Arc<CuspGrid>,
    c_window: Option<f64>,
    opts: &EigOptions,
) -> Result<TrackingReport> {
    let models = par::map_range(ts.len(), |i| -> Result<Vec<f64>> {
        let b = model::mode_block(k, ts[i], grid);
        let p = eigen::solve(&b.a, &b.m, 4, Target::Nearest(es[i]), opts)?;
        Ok(p.values)
    });
    let models = models.into_iter().collect::<Result<Vec<_>>>()?;
    let tol = 10.0 * opts.tol;
    let mut gaps = vec![];
    for (i, vals) in models.iter().enumerate() {
        let mut d: Vec<f64> = vals.iter().map(|v| (v - es[i]).abs()).collect();
        d.sort_by(f64::total_cmp);
        if d.len() >= 2 && d[1] <= tol * es[i].abs() {
            return Err(BranchError::AmbiguousTracking { t: ts[i], e: es[i] }.into());
        }
        let ls = vals
            .iter()
            .cloned()
            .min_by(|a, b| (a - es[i]).abs().total_cmp(&(b - es[i]).abs()))
            .unwrap();
        gaps.push(ls);
    }
    let c = c_window.unwrap_or_else(|| {
        let tmax = ts.iter().cloned().fold(0.0, f64::max);
        let first: Vec<f64> = (0..ts.len())
            .filter(|&i| ts[i] >= tmax / 10.0)
            .map(|i| (es[i] - gaps[i]).abs() / ts[i])
            .collect();
        2.0 * first.iter().cloned().fold(0.0, f64::max)
    });
    let rows: Vec<TrackingRow> = (0..ts.len())
        .map(|i| {
            let gap = es[i] - gaps[i];
            let inside = models[i]
                .iter()
                .filter(|v| (*v - es[i]).abs() <= c * ts[i])
                .count();
            TrackingRow {
                t: ts[i],
                e: es[i],
                lambda_star: gaps[i],
                gap,
                gap_over_t: gap.abs() / ts[i],
                gap_over_t23: gap / ts[i].powf(2.0 / 3.0),
                unique: inside == 1,
            }
        })
        .collect();
    let nz: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].gap != 0.0).collect();
    let exponent = (nz.len() >= 3).then(|| {
        let x: Vec<f64> = nz.iter().map(|&i| rows[i].t).collect();
        let y: Vec<f64> = nz.iter().map(|&i| rows[i].gap.abs()).collect();
        fit::loglog(&x, &y)
    });
    Ok(TrackingReport { rows, c, exponent })
}

/// Mass split of a projected sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeMass {
    pub t: f64,
    /// `‖w^k‖/‖u‖`.
    pub k_mass: f64,
    /// `‖Π_{ℓ<k} w‖/‖u‖`.
    pub low_mass: f64,
    /// `‖w − Π_{ℓ≤k} w‖/‖u‖`.
    pub rest_mass: f64,
    /// `k_mass ≤ ρ`.
    pub flagged: bool,
}

pub fn mode_mass(w: &ModeFunction, u_norm: f64, k: usize, t: f64, rho: f64) -> ModeMass {
    let kk = w.mode_norm(k);
    let low: f64 = (0..k).map(|l| w.mode_norm(l).powi(2)).sum::<f64>().sqrt();
    let rest: f64 = (k + 1..=w.k_max())
        .map(|l| w.mode_norm(l).powi(2))
        .sum::<f64>()
        .sqrt();
    ModeMass {
        t,
        k_mass: kk / u_norm,
        low_mass: low / u_norm,
        rest_mass: rest / u_norm,
        flagged: kk <= rho * u_norm,
    }
}

/// Leading-order comparison of `b_t(u_t, ψ⁰⊗1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingProbe {
    pub t: f64,
    pub b_value: f64,
    /// Least-squares amplitude of `u^k` against `W_-`.
    pub a_minus: f64,
    /// `b / (X_{k0} a_-)`: the layer integral per unit `W_-` amplitude.
    pub computed: f64,
    /// `(πk)·t·g(1)·A_-(−s^{-2/3} z_s)`.
    pub predicted_literal: f64,
    /// `−t·g(1)·A_-(−s^{-2/3} z_s)`, the boundary term of the integration by
    /// parts.
    pub predicted: f64,
    pub ratio_literal: f64,
    pub ratio: f64,
    /// `|b| / (t^{2/3}‖w^k‖‖ψ⁰‖)`.
    pub lower_bound_ratio: f64,
}

/// The zero-mode eigenfunction `ψ_n⊗1`, truncated at `β`.
pub fn zero_mode_function(zero: &ZeroModeSpectrum, n: usize, grid: &Arc<CuspGrid>, k_max: usize) -> ModeFunction {
    let prof = grid
        .y
        .iter()
        .enumerate()
        .map(|(i, &y)| if i < grid.beta_index { zero.psi(n, y) } else { 0.0 })
        .collect();
    ModeFunction::single_mode(grid.clone(), k_max, 0, prof)
}

#[allow(clippy::too_many_arguments)]
pub fn coupling_probe(
    u: &ModeFunction,
    e: f64,
    t: f64,
    k: usize,
    zero: &ZeroModeSpectrum,
    n: usize,
    b_form: &FormPair,
    eta: f64,
    wk_norm: f64,
) -> Result<CouplingProbe> {
    let lam0 = zero.eigenvalues[n - 1];
    let window = eta * t.powf(5.0 / 3.0);
    if (e - lam0).abs() > window {
        return Err(BranchError::NotNearCrossing {
            t,
            distance: (e - lam0).abs(),
            window,
        }
        .into());
    }
    let g = &u.grid;
    let psi = zero_mode_function(zero, n, g, u.k_max());
    let b_value = b_form.eval(u, &psi);
    let s = t / (2.0 * e).sqrt();
    let zs = 0.5 * (1.0 - (PI * k as f64).powi(2) / e);
    let s23 = s.powf(-2.0 / 3.0);
    let wm = |x: f64| airy::a_minus(s23 * (x - zs))[0];
    let top = 1.0 + 2.0 * t.powf(0.3);
    let rule = GaussRule::new(6);
    let (mut uw, mut ww) = (0.0, 0.0);
    for c in 0..g.n_cells() {
        if g.y[c] >= top {
            break;
        }
        for (y, w) in rule.on(g.y[c], g.y[c + 1].min(top)) {
            let (wv, uv) = (wm(y - 1.0), profile_at(&g.y, &u.profiles[k], y));
            uw += w * uv * wv;
            ww += w * wv * wv;
        }
    }
    let a_minus = uw / ww;
    let xk0 = forms::x_moment(k, 0);
    let computed = b_value / (xk0 * a_minus);
    let g1 = 1.0;
    let am = airy::a_minus(-s23 * zs)[0];
    let predicted_literal = PI * k as f64 * t * g1 * am;
    let predicted = -t * g1 * am;
    Ok(CouplingProbe {
        t,
        b_value,
        a_minus,
        computed,
        predicted_literal,
        predicted,
        ratio_literal: computed / predicted_literal,
        ratio: computed / predicted,
        lower_bound_ratio: b_value.abs() / (t.powf(2.0 / 3.0) * wk_norm * psi.norm()),
    })
}

/// The degenerating family `q_t` with its companion forms on one DOF map.
#[derive(Debug, Clone)]
pub struct DegenerateFamily {
    pub beta: f64,
    pub alpha_bar: f64,
    pub dofs: Arc<DofMap>,
    pub assembly: AssemblyOptions,
    pub p: PPoly,
}

impl DegenerateFamily {
    pub fn new(beta: f64, alpha_bar: f64, dofs: Arc<DofMap>, assembly: AssemblyOptions) -> Self {
        DegenerateFamily {
            beta,
            alpha_bar,
            dofs,
            assembly,
            p: p_poly(alpha_bar),
        }
    }

    pub fn q(&self, t: f64) -> Result<FormPair> {
        Ok(forms::assemble_q_t(t, self.beta, self.alpha_bar, &self.dofs, &self.assembly)?)
    }

    pub fn a(&self, t: f64) -> FormPair {
        forms::assemble_a(t, &self.dofs)
    }

    pub fn b(&self, t: f64) -> FormPair {
        forms::assemble_b(t, &self.dofs, &self.p)
    }

    pub fn q_dot(&self, t: f64) -> Result<FormPair> {
        Ok(forms::assemble_dots(t, self.beta, self.alpha_bar, &self.dofs, &self.assembly, None)?.1)
    }

    /// Energy of the eigenpair at `t` continuing `reference`.
    pub fn resolve(&self, t: f64, reference: &[f64], prediction: f64, opts: &EigOptions) -> Result<(f64, Vec<f64>)> {
        let q = self.q(t)?;
        let pairs = eigen::solve(&q.a, &q.m, 4, Target::Nearest(prediction), opts)?;
        let (j, _) = pick_by_overlap(&q.m, reference, &pairs.values, &pairs.vectors, prediction, 0.02);
        Ok((pairs.values[j], pairs.vectors[j].clone()))
    }
}

/// Per-sample diagnostics of a continued `q_t` branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleDiagnostics {
    pub t: f64,
    pub e: f64,
    /// Hellmann–Feynman `q̇(u)/‖u‖²`.
    pub edot_hf: f64,
    /// Centered difference of local re-solves at `t ± h`.
    pub edot_fd: f64,
    /// `Ė/E − 2/t`.
    pub margin: f64,
    /// `N(w^I, E)`.
    pub n_residual: f64,
    /// `‖u − w^I‖/‖u‖`.
    pub projection_defect: f64,
    pub w_norm: f64,
    pub mass: ModeMass,
    pub l: LEstimate,
    /// Distance to the nearest zero-mode eigenvalue `c_n t²`.
    pub zero_distance: f64,
}

/// Diagnostic constants.
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticParams {
    pub k: usize,
    pub window: (f64, f64),
    pub rho: f64,
    /// Relative FD step for `Ė`.
    pub fd_step: f64,
    pub eig: EigOptions,
}

/// Runs the per-sample diagnostics in parallel over samples.
pub fn diagnose(
    branch: &Eigenbranch,
    family: &DegenerateFamily,
    zero: &ZeroModeSpectrum,
    params: &DiagnosticParams,
) -> Result<Vec<SampleDiagnostics>> {
    let rows = par::map_range(branch.len(), |i| -> Result<SampleDiagnostics> {
        let t = branch.t[i];
        let e = branch.e[i];
        let v = &branch.vectors[i];
        let u = branch.u(i);
        let qd = family.q_dot(t)?;
        let edot_hf = qd.a.form(v, v) / qd.m.form(v, v);
        let h = params.fd_step * t;
        let (ep, _) = family.resolve(t + h, v, e + edot_hf * h, &params.eig)?;
        let (em, _) = family.resolve(t - h, v, e - edot_hf * h, &params.eig)?;
        let edot_fd = (ep - em) / (2.0 * h);
        let a = family.a(t);
        let at = forms::a_tilde(&a);
        let proj = spectral_projection(&u, &a, params.window, &params.eig)?;
        let n_residual = quasimode_residual(&proj.w, e, &a, &at)?;
        let un = u.norm();
        let defect = u.axpy(-1.0, &proj.w)?.norm() / un;
        let mass = mode_mass(&proj.w, un, params.k, t, params.rho);
        let l = cusp_form_functional(&u, e, t, family.alpha_bar)?;
        Ok(SampleDiagnostics {
            t,
            e,
            edot_hf,
            edot_fd,
            margin: edot_hf / e - 2.0 / t,
            n_residual,
            projection_defect: defect,
            w_norm: proj.w.norm(),
            mass,
            l,
            zero_distance: zero_distance(zero, t, e),
        })
    });
    rows.into_iter().collect()
}

/// Distance from `e` to the nearest `c_n t²`.
pub fn zero_distance(zero: &ZeroModeSpectrum, t: f64, e: f64) -> f64 {
    (1..=zero.roots.len())
        .map(|n| (zero.c(n) * t * t - e).abs())
        .fold(f64::INFINITY, f64::min)
}
