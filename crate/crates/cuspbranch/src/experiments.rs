//! The five experiment runners. Each returns a typed report; [`Report::render`]
//! turns it into CSV and `.dat` artifacts plus a JSON summary.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use cusp_spectral::branches::{
    self, classify, continue_branch, coupling_probe, crossing_scan, diagnose, extrapolate_limit,
    predictor_crossings, seed_by_mode, tracking_report, ContinuationOptions, CouplingProbe, CrossingRecord,
    DegenerateFamily, DiagnosticParams, Eigenbranch, SampleDiagnostics, TrackingReport,
};
use cusp_spectral::eigen::EigOptions;
use cusp_spectral::error::{Error, Result};
use cusp_spectral::fit;
use cusp_spectral::forms::{self, assemble_a, check_expansion, solve_lowest, AssemblyOptions};
use cusp_spectral::geometry::{p_poly, phi_fields, TriangleParams};
use cusp_spectral::model::{airy_predict, mode_block, mode_branch, zero_mode_spectrum, ModelBranch};
use cusp_spectral::modespace::{CuspGrid, DofMap, MeshParams, ModeFunction};
use cusp_spectral::par;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::config::{lin_grid, Experiment, RunConfig};

/// One output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub content: String,
}

/// Wall-clock seconds per named phase.
#[derive(Debug, Clone, Default)]
pub struct Timings(pub Vec<(String, f64)>);

impl Timings {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.push((name.into(), start.elapsed().as_secs_f64()));
        out
    }
}

pub fn mesh_params(cfg: &RunConfig) -> MeshParams {
    let mut m = MeshParams::new(cfg.mesh.t_min, cfg.mesh.e_max);
    m.n_layer = cfg.mesh.n_layer;
    m.growth = cfg.mesh.growth;
    m.h_max = cfg.mesh.h_max;
    m.ppw = cfg.mesh.ppw;
    m
}

fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn dat(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = format!("# {}\n", header.join(" "));
    for r in rows {
        s.push_str(&r.join(" "));
        s.push('\n');
    }
    s
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn artifact(name: &str, content: String) -> Artifact {
    Artifact {
        name: name.into(),
        content,
    }
}

/// Airy-law fit of one model branch.
#[derive(Debug, Clone)]
pub struct AiryFit {
    pub ell: usize,
    pub branch: usize,
    pub predicted: f64,
    /// Intercept of `(λ − (ℓπ)²)/t^{2/3}` against `t^{2/3}`.
    pub fitted: f64,
    /// Per-sample `(λ − (ℓπ)²)/(a t^{2/3})`.
    pub ratios: Vec<f64>,
    /// Per-sample `t^{1/3} λ̇ / ((2/3) a)` from Hellmann–Feynman.
    pub derivative_ratios: Vec<f64>,
    /// Log-log slope of `|λ − (ℓπ)² − a t^{2/3}|`.
    pub remainder_slope: f64,
}

#[derive(Debug, Clone)]
pub struct ModelReport {
    pub branches: Vec<ModelBranch>,
    pub predictions: Vec<Vec<f64>>,
    pub fits: Vec<AiryFit>,
}

pub fn model_asymptotics(cfg: &RunConfig, timings: &mut Timings) -> Result<ModelReport> {
    let eig = EigOptions::default();
    let grid = Arc::new(CuspGrid::graded(mesh_params(cfg), cfg.beta, None, cfg.mesh.y_max)?);
    let ts = cfg.t_grid();
    let branches = timings.time("solve", || mode_branch(cfg.ell, &ts, cfg.branches, &grid, &eig))?;
    let e0 = (cfg.ell as f64 * PI).powi(2);
    let mut predictions = vec![];
    for b in &branches {
        let p = if cfg.ell == 0 {
            b.t.iter()
                .map(|&t| zero_mode_spectrum(t, cfg.beta, b.index).map(|z| z.eigenvalues[b.index - 1]))
                .collect::<std::result::Result<Vec<_>, _>>()?
        } else {
            b.t.iter().map(|&t| e0 + b.airy_coefficient * t.powf(2.0 / 3.0)).collect()
        };
        predictions.push(p);
    }
    let mut fits = vec![];
    if cfg.ell > 0 {
        timings.time("fit", || {
            for b in &branches {
                let a = b.airy_coefficient;
                let x: Vec<f64> = b.t.iter().map(|t| t.powf(2.0 / 3.0)).collect();
                let r: Vec<f64> = b.lambda.iter().zip(&x).map(|(l, x)| (l - e0) / x).collect();
                let rem: Vec<f64> = b.lambda.iter().zip(&x).map(|(l, x)| (l - e0 - a * x).abs()).collect();
                let derivative_ratios = par::map_range(b.t.len(), |i| {
                    let blk = mode_block(cfg.ell, b.t[i], &grid);
                    let v = &b.profiles[i][..blk.n_active];
                    b.t[i].powf(1.0 / 3.0) * blk.hf_derivative(v) / (2.0 / 3.0 * a)
                });
                fits.push(AiryFit {
                    ell: b.ell,
                    branch: b.index,
                    predicted: a,
                    fitted: fit::line(&x, &r).intercept,
                    ratios: r.iter().map(|v| v / a).collect(),
                    derivative_ratios,
                    remainder_slope: fit::loglog(&b.t, &rem).slope,
                });
            }
        });
    }
    Ok(ModelReport {
        branches,
        predictions,
        fits,
    })
}

/// Continued `q_t` branch with its diagnostics.
#[derive(Debug, Clone)]
pub struct DegenerateReport {
    pub branch: Eigenbranch,
    pub limit: f64,
    pub classified: Option<usize>,
    pub diagnostics: Vec<SampleDiagnostics>,
    pub tracking: TrackingReport,
    pub crossings: Vec<CrossingRecord>,
    pub crossing_error: Option<String>,
    /// Samples inside some crossing window `[t_n, t_n + δ t_n^{8/3}]`.
    pub in_window: Vec<bool>,
    /// `(n, probe)` for crossings whose probe succeeded.
    pub couplings: Vec<(usize, CouplingProbe)>,
    pub coupling_errors: Vec<(usize, String)>,
}

/// Zero-mode indices probed for the coupling law.
pub const COUPLING_WINDOW: std::ops::RangeInclusive<usize> = 5..=15;

pub fn degenerate(cfg: &RunConfig, timings: &mut Timings) -> Result<DegenerateReport> {
    let eig = EigOptions::default();
    let k = cfg.k;
    let grid = Arc::new(CuspGrid::graded(
        mesh_params(cfg),
        cfg.beta,
        Some(cfg.alpha_bar),
        cfg.mesh.y_max,
    )?);
    let dofs = Arc::new(DofMap::new(grid.clone(), cfg.k_max));
    let fam = DegenerateFamily::new(cfg.beta, cfg.alpha_bar, dofs.clone(), AssemblyOptions::default());
    let opts = ContinuationOptions::default();
    let mut branch = timings.time("continuation", || -> Result<Eigenbranch> {
        let q0 = fam.q(cfg.t_max)?;
        let pred = airy_predict(k, 1).predict(cfg.t_max);
        let seed = seed_by_mode(&q0, k, pred, opts.count, &opts.eig)?;
        continue_branch(|t| fam.q(t), cfg.t_max, cfg.t_min, seed, &opts)
    })?;
    let limit = extrapolate_limit(&branch);
    let classified = classify(&mut branch, 0.1);
    let zero = zero_mode_spectrum(1.0, cfg.beta, cfg.n_max)?;
    let kp2 = (k as f64 * PI).powi(2);
    let params = DiagnosticParams {
        k,
        window: (0.5 * kp2, 1.5 * kp2),
        rho: cfg.rho,
        fd_step: 1e-3,
        eig,
    };
    let diagnostics = timings.time("diagnostics", || diagnose(&branch, &fam, &zero, &params))?;
    let tracking = timings.time("tracking", || tracking_report(&branch.t, &branch.e, k, &grid, None, &eig))?;

    // Local re-solve seeded from the nearest sample and its secant slope.
    let local = |t: f64| -> Result<(f64, Vec<f64>)> {
        let i = branch.nearest(t);
        let j = if i + 1 < branch.len() { i + 1 } else { i.saturating_sub(1) };
        let slope = if i == j {
            0.0
        } else {
            (branch.e[j] - branch.e[i]) / (branch.t[j] - branch.t[i])
        };
        fam.resolve(t, &branch.vectors[i], branch.e[i] + slope * (t - branch.t[i]), &eig)
    };
    let resolve = |t: f64| -> Result<f64> { local(t).map(|r| r.0) };
    let (crossings, crossing_error) =
        timings.time("crossings", || crossing_scan(&branch.t, &branch.e, &zero, Some(&resolve)));

    let in_window = branch
        .t
        .iter()
        .map(|&t| {
            crossings
                .iter()
                .any(|r| t >= r.t_n && t <= r.t_n + cfg.delta * r.t_n.powf(8.0 / 3.0))
        })
        .collect();
    let probed: Vec<CrossingRecord> = crossings
        .iter()
        .filter(|r| COUPLING_WINDOW.contains(&r.n))
        .copied()
        .collect();
    let results = timings.time("coupling", || {
        par::map_slice(&probed, |r| -> Result<CouplingProbe> {
            let (e, v) = local(r.t_n)?;
            let u = dofs.to_function(&v);
            let zt = zero_mode_spectrum(r.t_n, cfg.beta, cfg.n_max)?;
            let b = fam.b(r.t_n);
            coupling_probe(&u, e, r.t_n, k, &zt, r.n + 1, &b, cfg.eta, u.mode_norm(k))
        })
    });
    let mut couplings = vec![];
    let mut coupling_errors = vec![];
    for (r, res) in probed.iter().zip(results) {
        match res {
            Ok(p) => couplings.push((r.n, p)),
            Err(e) => coupling_errors.push((r.n, e.to_string())),
        }
    }
    Ok(DegenerateReport {
        branch,
        limit,
        classified,
        diagnostics,
        tracking,
        crossings,
        crossing_error: crossing_error.map(|e| e.to_string()),
        in_window,
        couplings,
        coupling_errors,
    })
}

impl DegenerateReport {
    /// `N(w^I, E)/(t‖w^I‖)` per sample.
    pub fn residual_ratios(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.n_residual / (d.t * d.w_norm)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct CrossingsReport {
    pub k: usize,
    pub beta: f64,
    pub nu: f64,
    pub records: Vec<CrossingRecord>,
    pub tau_fitted: f64,
    pub tau_expected: f64,
    pub tau_literal: f64,
}

impl CrossingsReport {
    /// `|n t_n − k ln β| / (k ln β)` of the last record.
    pub fn final_relative_error(&self) -> f64 {
        let target = self.k as f64 * self.beta.ln();
        self.records.last().map_or(f64::NAN, |r| (r.n_t_n - target).abs() / target)
    }
}

pub fn crossings(cfg: &RunConfig, timings: &mut Timings) -> Result<CrossingsReport> {
    let zero = zero_mode_spectrum(1.0, cfg.beta, cfg.n_max)?;
    let nu = airy_predict(cfg.k, 1).a;
    let records = timings.time("predictor", || predictor_crossings(cfg.k, nu, &zero));
    // The two-term law holds asymptotically; fit on the upper half.
    let tail = &records[records.len() / 2..];
    Ok(CrossingsReport {
        k: cfg.k,
        beta: cfg.beta,
        nu,
        tau_fitted: branches::fit_tau(tail, &zero, cfg.k),
        tau_expected: branches::tau_expected(nu, cfg.k),
        tau_literal: branches::tau_literal(nu, cfg.k),
        records,
    })
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub c: f64,
    pub w: f64,
    pub index: usize,
    pub e: f64,
    pub l_over_norm: f64,
    pub l_error: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// `(c, w, message)` for points that failed.
    pub failures: Vec<(f64, f64, String)>,
}

pub fn sweep(cfg: &RunConfig, timings: &mut Timings) -> Result<SweepReport> {
    let eig = EigOptions::default();
    let grid = Arc::new(CuspGrid::graded(
        mesh_params(cfg),
        cfg.beta,
        Some(cfg.alpha_bar),
        cfg.mesh.y_max,
    )?);
    let dofs = Arc::new(DofMap::new(grid, cfg.k_max));
    let (c0, c1, nc) = cfg.sweep.c;
    let (w0, w1, nw) = cfg.sweep.w;
    let points: Vec<(f64, f64)> = lin_grid(c0, c1, nc)
        .into_iter()
        .flat_map(|c| lin_grid(w0, w1, nw).into_iter().map(move |w| (c, w)))
        .collect();
    let m = cfg.sweep.eigen_count;
    let solved = timings.time("points", || {
        par::map_slice(&points, |&(c, w)| -> Result<Vec<SweepRow>> {
            let tri = TriangleParams::new(c, w)?;
            let fields = phi_fields(&tri, cfg.alpha_bar)?;
            let form = forms::assemble_q(&fields, &dofs, &AssemblyOptions::default())?;
            let res = solve_lowest(&form, m, None, &eig)?;
            res.eigenvalues
                .iter()
                .zip(&res.eigenvectors)
                .enumerate()
                .map(|(i, (&e, u))| {
                    let l = branches::cusp_form_functional(u, e, 1.0, cfg.alpha_bar)?;
                    let un = u.norm();
                    Ok(SweepRow {
                        c,
                        w,
                        index: i + 1,
                        e,
                        l_over_norm: l.difference_quotient.abs() / un,
                        l_error: l.error_estimate / un,
                    })
                })
                .collect()
        })
    });
    let mut rows = vec![];
    let mut failures = vec![];
    for (&(c, w), r) in points.iter().zip(solved) {
        match r {
            Ok(mut v) => rows.append(&mut v),
            Err(e) => failures.push((c, w, e.to_string())),
        }
    }
    Ok(SweepReport { rows, failures })
}

#[derive(Debug, Clone)]
pub struct FormsReport {
    pub t: Vec<f64>,
    /// Per function: `(slope_second, slope_first, second_order, first_order)`.
    pub expansions: Vec<(f64, f64, Vec<f64>, Vec<f64>)>,
    /// `|q − a|` and `|q − a − t b|` for a function supported in `y ≥ ᾱ`.
    pub support: Vec<(f64, f64, f64)>,
    /// `(t, lowest eigenvalue of a_t)`.
    pub poincare: Vec<(f64, f64)>,
}

/// Smooth random function of the constrained space with modes `0..=3`.
pub fn smooth_function(d: &DofMap, beta: f64, rng: &mut ChaCha8Rng) -> ModeFunction {
    let g = d.grid.clone();
    let ymax = g.y_max();
    let mut u = ModeFunction::zeros(g.clone(), d.k_max);
    for k in 0..=d.k_max.min(3) {
        let (c0, c1, c2): (f64, f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let end = if k == 0 { beta } else { ymax };
        for (i, &y) in g.y.iter().enumerate() {
            u.profiles[k][i] = (end - y).max(0.0) * (c0 + c1 * y + c2 * (2.0 * y).sin());
        }
    }
    d.to_function(&d.to_dofs(&u).expect("same grid"))
}

pub fn verify_forms(cfg: &RunConfig, timings: &mut Timings) -> Result<FormsReport> {
    let grid = Arc::new(CuspGrid::graded(
        mesh_params(cfg),
        cfg.beta,
        Some(cfg.alpha_bar),
        cfg.mesh.y_max,
    )?);
    let dofs = Arc::new(DofMap::new(grid.clone(), cfg.k_max));
    let p = p_poly(cfg.alpha_bar);
    let opts = AssemblyOptions::default();
    let ts: Vec<f64> = cfg.t_grid().into_iter().rev().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pairs: Vec<(ModeFunction, ModeFunction)> = (0..cfg.functions)
        .map(|_| {
            let u = smooth_function(&dofs, cfg.beta, &mut rng);
            let v = smooth_function(&dofs, cfg.beta, &mut rng);
            (u, v)
        })
        .collect();
    let expansions = timings.time("expansion", || {
        par::map_slice(&pairs, |(u, v)| {
            check_expansion(&ts, u, v, cfg.beta, cfg.alpha_bar, &dofs, &p, &opts)
                .map(|f| (f.slope_second, f.slope_first, f.second_order, f.first_order))
        })
    });
    let expansions = expansions.into_iter().collect::<std::result::Result<Vec<_>, _>>()?;

    // Nonzero modes only, vanishing below ᾱ.
    let mut w = ModeFunction::zeros(grid.clone(), cfg.k_max);
    let ymax = grid.y_max();
    for k in 1..=cfg.k_max.min(2) {
        for (i, &y) in grid.y.iter().enumerate() {
            w.profiles[k][i] = (y - cfg.alpha_bar).max(0.0) * (ymax - y) * (1.0 + 0.3 * k as f64 * y);
        }
    }
    let x = dofs.to_dofs(&w)?;
    let support = timings.time("support", || -> Result<Vec<(f64, f64, f64)>> {
        ts.iter()
            .map(|&t| {
                let q = forms::assemble_q_t(t, cfg.beta, cfg.alpha_bar, &dofs, &opts)?;
                let a = assemble_a(t, &dofs);
                let b = forms::assemble_b(t, &dofs, &p);
                let qa = q.a.form(&x, &x) - a.a.form(&x, &x);
                Ok((t, qa.abs(), (qa - t * b.a.form(&x, &x)).abs()))
            })
            .collect()
    })?;

    let poincare = timings.time("poincare", || -> Result<Vec<(f64, f64)>> {
        cfg.poincare_t
            .iter()
            .map(|&t| {
                let mut mp = mesh_params(cfg);
                mp.t_min = t.min(0.5);
                let g = CuspGrid::graded(mp, cfg.beta, Some(cfg.alpha_bar), cfg.mesh.y_max)?;
                let d = Arc::new(DofMap::new(Arc::new(g), 2));
                let r = solve_lowest(&assemble_a(t, &d), 1, None, &EigOptions::default())?;
                Ok((t, r.eigenvalues[0]))
            })
            .collect()
    })?;
    Ok(FormsReport {
        t: ts,
        expansions,
        support,
        poincare,
    })
}

/// Any experiment's report.
#[derive(Debug, Clone)]
pub enum Report {
    Model(ModelReport),
    Degenerate(Box<DegenerateReport>),
    Crossings(CrossingsReport),
    Sweep(SweepReport),
    Forms(FormsReport),
}

pub fn run(cfg: &RunConfig, timings: &mut Timings) -> Result<Report, Error> {
    Ok(match cfg.experiment {
        Experiment::ModelAsymptotics => Report::Model(model_asymptotics(cfg, timings)?),
        Experiment::Degenerate => Report::Degenerate(Box::new(degenerate(cfg, timings)?)),
        Experiment::Crossings => Report::Crossings(crossings(cfg, timings)?),
        Experiment::Sweep => Report::Sweep(sweep(cfg, timings)?),
        Experiment::VerifyForms => Report::Forms(verify_forms(cfg, timings)?),
    })
}

impl Report {
    /// Output files and a JSON summary.
    pub fn render(&self, cfg: &RunConfig) -> (Vec<Artifact>, Map<String, Value>) {
        let mut s = Map::new();
        let files = match self {
            Report::Model(r) => render_model(r, &mut s),
            Report::Degenerate(r) => render_degenerate(r, cfg, &mut s),
            Report::Crossings(r) => render_crossings(r, &mut s),
            Report::Sweep(r) => render_sweep(r, &mut s),
            Report::Forms(r) => render_forms(r, &mut s),
        };
        (files, s)
    }
}

fn render_model(r: &ModelReport, s: &mut Map<String, Value>) -> Vec<Artifact> {
    let header = ["ell", "branch", "t", "lambda", "airy_prediction", "relative_gap"];
    let mut rows = vec![];
    for (b, p) in r.branches.iter().zip(&r.predictions) {
        for i in 0..b.t.len() {
            rows.push(vec![
                b.ell.to_string(),
                b.index.to_string(),
                num(b.t[i]),
                num(b.lambda[i]),
                num(p[i]),
                num((b.lambda[i] - p[i]) / b.lambda[i]),
            ]);
        }
    }
    let mut files = vec![
        artifact("model_branches.csv", csv(&header, &rows)),
        artifact("model_branches.dat", dat(&header, &rows)),
    ];
    if !r.fits.is_empty() {
        let header = [
            "ell",
            "branch",
            "a_predicted",
            "a_fitted",
            "relative_error",
            "max_ratio_deviation",
            "max_derivative_deviation",
            "remainder_slope",
        ];
        let dev = |v: &[f64]| v.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
        let rows: Vec<Vec<String>> = r
            .fits
            .iter()
            .map(|f| {
                vec![
                    f.ell.to_string(),
                    f.branch.to_string(),
                    num(f.predicted),
                    num(f.fitted),
                    num((f.fitted - f.predicted).abs() / f.predicted),
                    num(dev(&f.ratios)),
                    num(dev(&f.derivative_ratios)),
                    num(f.remainder_slope),
                ]
            })
            .collect();
        files.push(artifact("airy_fit.csv", csv(&header, &rows)));
        let f = &r.fits[0];
        s.insert("a_predicted".into(), json!(f.predicted));
        s.insert("a_fitted".into(), json!(f.fitted));
        s.insert("remainder_slope".into(), json!(f.remainder_slope));
    }
    files
}

fn render_degenerate(r: &DegenerateReport, cfg: &RunConfig, s: &mut Map<String, Value>) -> Vec<Artifact> {
    let header = [
        "t",
        "E",
        "dE_dt",
        "gap_to_lambda_star",
        "gap_over_t23",
        "N_residual_over_t",
        "k_mass",
        "low_mass",
        "L_value",
        "L_error",
    ];
    let ratios = r.residual_ratios();
    let rows: Vec<Vec<String>> = r
        .diagnostics
        .iter()
        .zip(&r.tracking.rows)
        .zip(&ratios)
        .map(|((d, tr), q)| {
            vec![
                num(d.t),
                num(d.e),
                num(d.edot_hf),
                num(tr.gap),
                num(tr.gap_over_t23),
                num(*q),
                num(d.mass.k_mass),
                num(d.mass.low_mass),
                num(d.l.difference_quotient),
                num(d.l.error_estimate),
            ]
        })
        .collect();
    let name = format!("branch_k{}", cfg.k);
    let target = cfg.k as f64 * cfg.beta.ln();
    let cross: Vec<Vec<String>> = r
        .crossings
        .iter()
        .map(|c| vec![c.n.to_string(), num(c.t_n), num(c.n_t_n), num(target)])
        .collect();
    let cheader = ["n", "t_n", "n_t_n", "target_k_ln_beta"];
    let pheader = [
        "n",
        "t_n",
        "b_value",
        "a_minus",
        "computed",
        "predicted",
        "predicted_literal",
        "ratio",
        "ratio_literal",
        "lower_bound_ratio",
    ];
    let probes: Vec<Vec<String>> = r
        .couplings
        .iter()
        .map(|(n, p)| {
            vec![
                n.to_string(),
                num(p.t),
                num(p.b_value),
                num(p.a_minus),
                num(p.computed),
                num(p.predicted),
                num(p.predicted_literal),
                num(p.ratio),
                num(p.ratio_literal),
                num(p.lower_bound_ratio),
            ]
        })
        .collect();
    let extra = [
        "edot_fd",
        "margin",
        "projection_defect",
        "L_green",
        "zero_distance",
        "mixed",
        "overlap",
        "mass_flagged",
        "in_crossing_window",
    ];
    let diag_rows: Vec<Vec<String>> = r
        .diagnostics
        .iter()
        .enumerate()
        .map(|(i, d)| {
            vec![
                num(d.t),
                num(d.edot_fd),
                num(d.margin),
                num(d.projection_defect),
                num(d.l.green),
                num(d.zero_distance),
                (r.branch.mixed[i] as u8).to_string(),
                num(r.branch.overlaps[i]),
                (d.mass.flagged as u8).to_string(),
                (r.in_window[i] as u8).to_string(),
            ]
        })
        .collect();
    let mut dheader = vec!["t"];
    dheader.extend(extra);
    s.insert("samples".into(), json!(r.branch.len()));
    s.insert("limit".into(), json!(r.limit));
    s.insert("classified_k".into(), json!(r.classified));
    s.insert("lost".into(), json!(r.branch.lost.as_ref().map(|e| e.to_string())));
    s.insert("tracking_c".into(), json!(r.tracking.c));
    s.insert("tracking_exponent".into(), json!(r.tracking.exponent.map(|f| f.slope)));
    s.insert("max_residual_ratio".into(), json!(ratios.iter().cloned().fold(0.0, f64::max)));
    s.insert("crossings".into(), json!(r.crossings.len()));
    s.insert("crossing_error".into(), json!(r.crossing_error));
    s.insert("samples_in_crossing_windows".into(), json!(r.in_window.iter().filter(|&&b| b).count()));
    s.insert(
        "flagged_in_crossing_windows".into(),
        json!(r.diagnostics.iter().zip(&r.in_window).filter(|(d, &w)| w && d.mass.flagged).count()),
    );
    s.insert(
        "coupling_errors".into(),
        json!(r.coupling_errors.iter().map(|(n, e)| format!("n = {n}: {e}")).collect::<Vec<_>>()),
    );
    vec![
        artifact(&format!("{name}.csv"), csv(&header, &rows)),
        artifact(&format!("{name}.dat"), dat(&header, &rows)),
        artifact(&format!("{name}_diagnostics.csv"), csv(&dheader, &diag_rows)),
        artifact("crossings_continued.csv", csv(&cheader, &cross)),
        artifact("crossings_continued.dat", dat(&cheader, &cross)),
        artifact("coupling.csv", csv(&pheader, &probes)),
    ]
}

fn render_crossings(r: &CrossingsReport, s: &mut Map<String, Value>) -> Vec<Artifact> {
    let target = r.k as f64 * r.beta.ln();
    let header = ["n", "t_n", "n_t_n", "target_k_ln_beta"];
    let rows: Vec<Vec<String>> = r
        .records
        .iter()
        .map(|c| vec![c.n.to_string(), num(c.t_n), num(c.n_t_n), num(target)])
        .collect();
    s.insert("nu".into(), json!(r.nu));
    s.insert("final_relative_error".into(), json!(r.final_relative_error()));
    s.insert("tau_fitted".into(), json!(r.tau_fitted));
    s.insert("tau_expected".into(), json!(r.tau_expected));
    s.insert("tau_literal".into(), json!(r.tau_literal));
    vec![
        artifact("crossings_predictor.csv", csv(&header, &rows)),
        artifact("crossings_predictor.dat", dat(&header, &rows)),
    ]
}

fn render_sweep(r: &SweepReport, s: &mut Map<String, Value>) -> Vec<Artifact> {
    let header = ["c", "w", "index", "E", "L_over_norm", "L_error"];
    let rows: Vec<Vec<String>> = r
        .rows
        .iter()
        .map(|p| {
            vec![
                num(p.c),
                num(p.w),
                p.index.to_string(),
                num(p.e),
                num(p.l_over_norm),
                num(p.l_error),
            ]
        })
        .collect();
    s.insert("points_failed".into(), json!(r.failures.len()));
    s.insert(
        "point_errors".into(),
        json!(r
            .failures
            .iter()
            .map(|(c, w, e)| format!("(c, w) = ({c}, {w}): {e}"))
            .collect::<Vec<_>>()),
    );
    vec![
        artifact("sweep.csv", csv(&header, &rows)),
        artifact("sweep.dat", dat(&header, &rows)),
    ]
}

fn render_forms(r: &FormsReport, s: &mut Map<String, Value>) -> Vec<Artifact> {
    let eh = ["function", "slope_second", "slope_first"];
    let erows: Vec<Vec<String>> = r
        .expansions
        .iter()
        .enumerate()
        .map(|(i, e)| vec![i.to_string(), num(e.0), num(e.1)])
        .collect();
    let rh = ["function", "t", "second_order", "first_order"];
    let mut rrows = vec![];
    for (i, e) in r.expansions.iter().enumerate() {
        for (j, &t) in r.t.iter().enumerate() {
            rrows.push(vec![i.to_string(), num(t), num(e.2[j]), num(e.3[j])]);
        }
    }
    let sh = ["t", "q_minus_a", "q_minus_a_minus_tb"];
    let srows: Vec<Vec<String>> = r.support.iter().map(|&(t, a, b)| vec![num(t), num(a), num(b)]).collect();
    let ph = ["t", "lowest", "bound", "ratio"];
    let prows: Vec<Vec<String>> = r
        .poincare
        .iter()
        .map(|&(t, l)| vec![num(t), num(l), num(t * t / 4.0), num(l / (t * t / 4.0))])
        .collect();
    let min = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::INFINITY, f64::min);
    s.insert("min_slope_second".into(), json!(min(&mut r.expansions.iter().map(|e| e.0))));
    s.insert("min_slope_first".into(), json!(min(&mut r.expansions.iter().map(|e| e.1))));
    s.insert(
        "support_max".into(),
        json!(r.support.iter().map(|s| s.1.max(s.2)).fold(0.0, f64::max)),
    );
    s.insert(
        "poincare_min_ratio".into(),
        json!(min(&mut r.poincare.iter().map(|&(t, l)| l / (t * t / 4.0)))),
    );
    vec![
        artifact("forms_expansion.csv", csv(&eh, &erows)),
        artifact("forms_residuals.csv", csv(&rh, &rrows)),
        artifact("forms_residuals.dat", dat(&rh, &rrows)),
        artifact("forms_support.csv", csv(&sh, &srows)),
        artifact("poincare.csv", csv(&ph, &prows)),
    ]
}
