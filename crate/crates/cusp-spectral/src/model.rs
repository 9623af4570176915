//! The separated model operators `a_t^ℓ(v) = ∫ t²|v′|² + (ℓπ)²|v|² dy` with
//! mass `∫ |v|² y^{-2} dy`: exact zero-mode spectrum, 1-D branches, the
//! rescaled Airy problem, WKB and Airy bases, and localization.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::airy::{self, AiryBasis};
use crate::banded::{dot, SymBand};
use crate::eigen::{self, EigOptions, EigPairs, Target};
use crate::error::ModelError;
use crate::modespace::{hats, CuspGrid};
use crate::ode;
use crate::par;

/// Secular function whose roots give the zero-mode spectrum.
#[inline]
pub fn secular(r: f64, beta: f64) -> f64 {
    let l = beta.ln();
    (r * l).sin() - 2.0 * r * (r * l).cos()
}

/// Exact spectrum of `a_t^0` on `[1, β]` (Neumann at 1, Dirichlet at β).
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroModeSpectrum {
    pub beta: f64,
    pub t: f64,
    /// Roots `r_n`, ascending (`roots[0] = r_1`).
    pub roots: Vec<f64>,
    /// `t²(1/4 + r_n²)`.
    pub eigenvalues: Vec<f64>,
}

pub fn zero_mode_spectrum(t: f64, beta: f64, n_max: usize) -> Result<ZeroModeSpectrum, ModelError> {
    let l = beta.ln();
    let mut roots = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let lo = if n == 1 { 1e-9 / l } else { (n as f64 - 1.0) * PI / l };
        let hi = (n as f64 - 0.5) * PI / l;
        let (mut a, mut b) = (lo, hi);
        let (fa, fb) = (secular(a, beta), secular(b, beta));
        if fa.signum() == fb.signum() {
            return Err(ModelError::BracketFailure { lo, hi });
        }
        let sa = fa.signum();
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if secular(m, beta).signum() == sa {
                a = m;
            } else {
                b = m;
            }
        }
        roots.push(0.5 * (a + b));
    }
    let eigenvalues = roots.iter().map(|r| t * t * (0.25 + r * r)).collect();
    Ok(ZeroModeSpectrum {
        beta,
        t,
        roots,
        eigenvalues,
    })
}

impl ZeroModeSpectrum {
    /// `ψ_n(y) = y^{1/2}(cos(r ln y) − sin(r ln y)/(2r))`, `n ≥ 1`.
    pub fn psi(&self, n: usize, y: f64) -> f64 {
        psi(self.roots[n - 1], y)
    }

    pub fn psi_prime(&self, n: usize, y: f64) -> f64 {
        psi_prime(self.roots[n - 1], y)
    }

    /// `c_n = 1/4 + r_n²`, so that `λ_n = c_n t²`.
    pub fn c(&self, n: usize) -> f64 {
        0.25 + self.roots[n - 1].powi(2)
    }
}

pub fn psi(r: f64, y: f64) -> f64 {
    let l = y.ln();
    y.sqrt() * ((r * l).cos() - (r * l).sin() / (2.0 * r))
}

pub fn psi_prime(r: f64, y: f64) -> f64 {
    -(r + 0.25 / r) * (r * y.ln()).sin() / y.sqrt()
}

/// One Fourier mode of the model form, restricted to its active nodes.
#[derive(Debug, Clone)]
pub struct ModeBlock {
    pub ell: usize,
    pub t: f64,
    pub a: SymBand,
    pub m: SymBand,
    /// Nodes `0..n_active` carry DOFs.
    pub n_active: usize,
    pub grid: Arc<CuspGrid>,
}

/// Generic P1 assembly of `∫ κ v′w′ + pot(y) v w` and `∫ mass(y) v w`.
pub fn assemble_1d<P: Fn(f64) -> f64, M: Fn(f64) -> f64>(
    nodes: &[f64],
    n_active: usize,
    kappa: f64,
    pot: P,
    mass: M,
) -> (SymBand, SymBand) {
    let rule = crate::quad::GaussRule::new(crate::modespace::CELL_QUAD);
    let mut a = SymBand::zeros(n_active, 1);
    let mut m = SymBand::zeros(n_active, 1);
    for c in 0..nodes.len() - 1 {
        if c >= n_active {
            break;
        }
        let mut la = [[0.0; 2]; 2];
        let mut lm = [[0.0; 2]; 2];
        for (y, w) in rule.on(nodes[c], nodes[c + 1]) {
            let (n, dn) = hats(nodes[c], nodes[c + 1], y);
            let (pv, mv) = (pot(y), mass(y));
            for r in 0..2 {
                for s in 0..2 {
                    la[r][s] += w * (kappa * dn[r] * dn[s] + pv * n[r] * n[s]);
                    lm[r][s] += w * mv * n[r] * n[s];
                }
            }
        }
        for r in 0..2 {
            for s in 0..=r {
                let (i, j) = (c + r, c + s);
                if i < n_active && j < n_active {
                    a.add(i, j, la[r][s]);
                    m.add(i, j, lm[r][s]);
                }
            }
        }
    }
    (a, m)
}

/// `a_t^ℓ` on the grid: mode 0 lives below `β`, modes ≥ 1 vanish at `y_max`.
pub fn mode_block(ell: usize, t: f64, grid: &Arc<CuspGrid>) -> ModeBlock {
    let n_active = if ell == 0 { grid.beta_index } else { grid.n_nodes() - 1 };
    let kp2 = (ell as f64 * PI).powi(2);
    let (a, m) = assemble_1d(&grid.y, n_active, t * t, |_| kp2, |y| 1.0 / (y * y));
    ModeBlock {
        ell,
        t,
        a,
        m,
        n_active,
        grid: grid.clone(),
    }
}

impl ModeBlock {
    /// Lowest `count` eigenpairs; all eigenvalues exceed `(ℓπ)²`.
    pub fn solve(&self, count: usize, opts: &EigOptions) -> Result<EigPairs, ModelError> {
        let lb = (self.ell as f64 * PI).powi(2);
        Ok(eigen::solve(
            &self.a,
            &self.m,
            count,
            Target::Lowest { lower_bound: lb },
            opts,
        )?)
    }

    /// Full nodal profile (zeros on inactive nodes).
    pub fn profile(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.grid.n_nodes()];
        p[..self.n_active].copy_from_slice(&x[..self.n_active]);
        p
    }

    /// Hellmann–Feynman derivative `ȧ_t(v)/‖v‖² = 2t∫|v′|²/‖v‖²`.
    pub fn hf_derivative(&self, x: &[f64]) -> f64 {
        let (k1, _) = assemble_1d(&self.grid.y, self.n_active, 1.0, |_| 0.0, |_| 0.0);
        2.0 * self.t * k1.form(x, x) / self.m.form(x, x)
    }
}

/// A sampled eigenvalue branch of `a_t^ℓ`.
#[derive(Debug, Clone)]
pub struct ModelBranch {
    pub ell: usize,
    /// 1-based branch index.
    pub index: usize,
    pub t: Vec<f64>,
    pub lambda: Vec<f64>,
    pub profiles: Vec<Vec<f64>>,
    /// Airy coefficient `a_i` (zero for `ℓ = 0`).
    pub airy_coefficient: f64,
}

/// Lowest `branch_count` branches of `a_t^ℓ` over `t_list`, matched across
/// samples by eigenprofile overlap.
pub fn mode_branch(
    ell: usize,
    t_list: &[f64],
    branch_count: usize,
    grid: &Arc<CuspGrid>,
    opts: &EigOptions,
) -> Result<Vec<ModelBranch>, ModelError> {
    let solved = par::map_slice(t_list, |&t| {
        let b = mode_block(ell, t, grid);
        b.solve(branch_count, opts).map(|p| (b, p))
    });
    let solved = solved.into_iter().collect::<Result<Vec<_>, _>>()?;
    let zeros = if ell > 0 {
        airy::a_minus_prime_zeros(branch_count)
    } else {
        vec![]
    };
    let mut branches: Vec<ModelBranch> = (0..branch_count)
        .map(|i| ModelBranch {
            ell,
            index: i + 1,
            t: vec![],
            lambda: vec![],
            profiles: vec![],
            airy_coefficient: if ell > 0 {
                (2.0 * (PI * ell as f64).powi(2)).powf(2.0 / 3.0) * (-zeros[i])
            } else {
                0.0
            },
        })
        .collect();
    let mut prev: Option<Vec<Vec<f64>>> = None;
    for (&t, (block, pairs)) in t_list.iter().zip(&solved) {
        let n = pairs.values.len();
        let order: Vec<usize> = match &prev {
            None => (0..n).collect(),
            Some(pv) => {
                // Greedy assignment by |⟨prev_i, cur_j⟩_M|.
                let mut taken = vec![false; n];
                (0..n)
                    .map(|i| {
                        let mi = block.m.matvec(&pv[i]);
                        let j = (0..n)
                            .filter(|&j| !taken[j])
                            .max_by(|&a, &b| {
                                dot(&mi, &pairs.vectors[a])
                                    .abs()
                                    .total_cmp(&dot(&mi, &pairs.vectors[b]).abs())
                            })
                            .unwrap();
                        taken[j] = true;
                        j
                    })
                    .collect()
            }
        };
        let mut cur = vec![];
        for (i, &j) in order.iter().enumerate() {
            branches[i].t.push(t);
            branches[i].lambda.push(pairs.values[j]);
            branches[i].profiles.push(block.profile(&pairs.vectors[j]));
            cur.push(pairs.vectors[j].clone());
        }
        prev = Some(cur);
    }
    Ok(branches)
}

/// Airy predictor `λ̂(t) = (ℓπ)² + a_i t^{2/3}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AiryPrediction {
    pub ell: usize,
    pub index: usize,
    pub zeta: f64,
    pub a: f64,
}

impl AiryPrediction {
    pub fn predict(&self, t: f64) -> f64 {
        (self.ell as f64 * PI).powi(2) + self.a * t.powf(2.0 / 3.0)
    }
}

pub fn airy_predict(ell: usize, i: usize) -> AiryPrediction {
    let zeta = airy::a_minus_prime_zeros(i)[i - 1];
    AiryPrediction {
        ell,
        index: i,
        zeta,
        a: (2.0 * (PI * ell as f64).powi(2)).powf(2.0 / 3.0) * (-zeta),
    }
}

/// Nodes of the rescaled variable `x = (y − 1)/s²`.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledGrid {
    pub x: Vec<f64>,
}

impl RescaledGrid {
    /// Uniform spacing `h` on `[0, x_core]`, then cells growing by `growth`
    /// up to `x_max`.
    pub fn new(h: f64, x_core: f64, x_max: f64, growth: f64) -> Self {
        let n_core = (x_core.min(x_max) / h).ceil() as usize;
        let hc = x_core.min(x_max) / n_core as f64;
        let mut x: Vec<f64> = (0..=n_core).map(|i| i as f64 * hc).collect();
        let mut step = hc;
        while *x.last().unwrap() < x_max {
            step *= growth;
            let nx = x.last().unwrap() + step;
            x.push(nx.min(x_max));
            if x_max - nx < 0.5 * step {
                *x.last_mut().unwrap() = x_max;
            }
        }
        RescaledGrid { x }
    }

    /// Every cell bisected.
    pub fn refined(&self) -> Self {
        let mut x = Vec::with_capacity(2 * self.x.len());
        for w in self.x.windows(2) {
            x.push(w[0]);
            x.push(0.5 * (w[0] + w[1]));
        }
        x.push(*self.x.last().unwrap());
        RescaledGrid { x }
    }

    /// The y-grid `1 + s²x` with `β` taken as the node nearest `beta_hint`.
    pub fn to_cusp_grid(&self, s: f64, beta_hint: f64) -> CuspGrid {
        let y: Vec<f64> = self.x.iter().map(|&x| 1.0 + s * s * x).collect();
        let bi = y
            .iter()
            .enumerate()
            .skip(1)
            .min_by(|a, b| (a.1 - beta_hint).abs().total_cmp(&(b.1 - beta_hint).abs()))
            .unwrap()
            .0
            .min(y.len() - 2);
        let beta = y[bi];
        CuspGrid::from_nodes(y, beta, None, None).expect("mapped grid")
    }
}

/// Lowest `count` eigenvalues ν of `∫w′² + μ x g(s²x) w²` against
/// `∫ f(s²x) w²`, `f(z) = (1+z)^{-2}`, `g(z) = (z+2)/(z+1)²`, `μ = (ℓπ)²`.
pub fn rescaled_spectrum(
    s: f64,
    ell: usize,
    count: usize,
    grid: &RescaledGrid,
    opts: &EigOptions,
) -> Result<Vec<f64>, ModelError> {
    let mu = (ell as f64 * PI).powi(2);
    let s2 = s * s;
    let n_active = grid.x.len() - 1;
    let (a, m) = assemble_1d(
        &grid.x,
        n_active,
        1.0,
        |x| {
            let z = s2 * x;
            mu * x * (z + 2.0) / ((z + 1.0) * (z + 1.0))
        },
        |x| 1.0 / ((1.0 + s2 * x) * (1.0 + s2 * x)),
    );
    let r = eigen::solve(&a, &m, count, Target::Lowest { lower_bound: 0.0 }, opts)?;
    Ok(r.values)
}

/// Richardson-extrapolated rescaled spectrum from the grid and its bisection.
pub fn rescaled_spectrum_extrapolated(
    s: f64,
    ell: usize,
    count: usize,
    grid: &RescaledGrid,
    opts: &EigOptions,
) -> Result<Vec<f64>, ModelError> {
    let coarse = rescaled_spectrum(s, ell, count, grid, opts)?;
    let fine = rescaled_spectrum(s, ell, count, &grid.refined(), opts)?;
    Ok(coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| (4.0 * f - c) / 3.0)
        .collect())
}

/// WKB solutions `f^{-1/4}·(cos, sin)(Φ/t)` with `f = μ/y² − (ℓπ)²` and
/// `Φ(y) = ∫_1^y √f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WkbBasis {
    pub ell: usize,
    pub mu: f64,
    pub t: f64,
}

pub fn wkb_basis(ell: usize, mu: f64, t: f64, beta: f64) -> Result<WkbBasis, ModelError> {
    let c2 = (ell as f64 * PI).powi(2);
    // f is decreasing in y; its minimum on [1, β] is at β.
    let fb = mu / (beta * beta) - c2;
    if fb <= 0.0 {
        return Err(ModelError::TurningPointInWindow { y: beta, value: fb });
    }
    Ok(WkbBasis { ell, mu, t })
}

impl WkbBasis {
    fn c(&self) -> f64 {
        self.ell as f64 * PI
    }

    pub fn f(&self, y: f64) -> f64 {
        self.mu / (y * y) - self.c().powi(2)
    }

    /// Phase `Φ(y) = ∫_1^y √f`.
    pub fn phase(&self, y: f64) -> f64 {
        if self.ell == 0 {
            return self.mu.sqrt() * y.ln();
        }
        let (mu, c) = (self.mu, self.c());
        let big_f = |z: f64| {
            let u = (mu - c * c * z * z).sqrt();
            u - mu.sqrt() * (u / mu.sqrt()).atanh()
        };
        big_f(y) - big_f(1.0)
    }

    /// `(v, v′)` of the cosine (`which = 0`) or sine (`which = 1`) solution.
    pub fn eval(&self, which: usize, y: f64) -> [f64; 2] {
        let f = self.f(y);
        let fp = -2.0 * self.mu / (y * y * y);
        let amp = f.powf(-0.25);
        let damp = -0.25 * f.powf(-1.25) * fp;
        let ph = self.phase(y) / self.t;
        let dph = f.sqrt() / self.t;
        let (c, s) = (ph.cos(), ph.sin());
        if which == 0 {
            [amp * c, damp * c - amp * dph * s]
        } else {
            [amp * s, damp * s + amp * dph * c]
        }
    }

    /// Integrates `t²v″ = −f v` on `[1, β]` from the WKB data at 1 and reports
    /// the sup deviation relative to the sup of the ansatz, plus the Wronskian
    /// drift of the two exact solutions.
    pub fn verify(&self, beta: f64, steps_per_wavelength: usize) -> WkbReport {
        let fmax = self.f(1.0);
        let wavelength = 2.0 * PI * self.t / fmax.sqrt();
        let n = (((beta - 1.0) / wavelength) * steps_per_wavelength as f64).ceil() as usize;
        let t2 = self.t * self.t;
        let q = |y: f64| -self.f(y) / t2;
        let r = |_y: f64| 0.0;
        let paths: Vec<Vec<(f64, [f64; 2])>> = (0..2)
            .map(|w| ode::gl6_path(&q, &r, 1.0, self.eval(w, 1.0), beta, n.max(10)))
            .collect();
        let mut dev: f64 = 0.0;
        let mut sup: f64 = 0.0;
        for (y, v) in &paths[0] {
            let a = self.eval(0, *y)[0];
            dev = dev.max((v[0] - a).abs());
            sup = sup.max(a.abs());
        }
        let wr = |i: usize| {
            let (a, b) = (paths[0][i].1, paths[1][i].1);
            a[0] * b[1] - a[1] * b[0]
        };
        let w0 = wr(0);
        let drift = (0..paths[0].len())
            .map(|i| (wr(i) - w0).abs())
            .fold(0.0, f64::max)
            / w0.abs();
        WkbReport {
            sup_relative_deviation: dev / sup,
            wronskian_drift: drift,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WkbReport {
    pub sup_relative_deviation: f64,
    pub wronskian_drift: f64,
}

/// The Airy basis of the rescaled layer problem.
pub fn airy_basis(s: f64, z_s: f64) -> AiryBasis {
    AiryBasis::new(s, z_s)
}

/// A nodal profile stored as sign and log-magnitude, so exponentially small
/// tails keep full relative precision.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProfile {
    pub sign: Vec<f64>,
    pub log_abs: Vec<f64>,
}

impl LogProfile {
    pub fn from_values(v: &[f64]) -> Self {
        LogProfile {
            sign: v.iter().map(|x| if *x < 0.0 { -1.0 } else { 1.0 }).collect(),
            log_abs: v.iter().map(|x| x.abs().ln()).collect(),
        }
    }

    /// Values scaled so the largest magnitude is 1.
    pub fn normalized_values(&self) -> Vec<f64> {
        let mx = self.log_abs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        self.sign
            .iter()
            .zip(&self.log_abs)
            .map(|(s, l)| s * (l - mx).exp())
            .collect()
    }
}

/// Eigenvector of a tridiagonal pencil at eigenvalue `lambda`, computed by
/// the three-term recurrence inward from the Dirichlet end (stable for the
/// decaying side), with running rescaling.
pub fn eigenvector_by_recurrence(block: &ModeBlock, lambda: f64) -> LogProfile {
    let n = block.n_active;
    let k = block.a.combine(1.0, &block.m, -lambda);
    let mut vals = vec![0.0; n];
    let mut logs = vec![0.0; n];
    // Working values v_i = vals[i]·exp(logs[i]).
    let mut shift = 0.0;
    let (mut v_next, mut v_cur) = (0.0, 1.0);
    vals[n - 1] = 1.0;
    for i in (1..n).rev() {
        // row i: k(i,i−1) v_{i−1} + k(i,i) v_i + k(i,i+1) v_{i+1} = 0
        let upper = if i + 1 < n { k.get(i, i + 1) * v_next } else { 0.0 };
        let v_prev = -(k.get(i, i) * v_cur + upper) / k.get(i, i - 1);
        v_next = v_cur;
        v_cur = v_prev;
        if v_cur.abs() > 1e100 {
            v_cur *= 1e-100;
            v_next *= 1e-100;
            shift += 100.0 * std::f64::consts::LN_10;
        }
        vals[i - 1] = v_cur;
        logs[i - 1] = shift;
    }
    let mut p = LogProfile {
        sign: vec![1.0; block.grid.n_nodes()],
        log_abs: vec![f64::NEG_INFINITY; block.grid.n_nodes()],
    };
    for i in 0..n {
        p.sign[i] = if vals[i] < 0.0 { -1.0 } else { 1.0 };
        p.log_abs[i] = vals[i].abs().ln() + logs[i];
    }
    p
}

/// Tail mass `∫_{1+2t^α}^{y_max} |v|² y^{-2} / ‖v‖²`, returned as
/// `(ratio, ln ratio)`.
pub fn measure_localization(profile: &LogProfile, grid: &CuspGrid, t: f64, alpha: f64) -> (f64, f64) {
    let cut = 1.0 + 2.0 * t.powf(alpha);
    let mx = profile.log_abs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    // Tail contributions kept as (log-scale, mantissa) per cell.
    let mut tail_terms: Vec<f64> = vec![];
    for c in 0..grid.n_cells() {
        let (l0, l1) = (profile.log_abs[c], profile.log_abs[c + 1]);
        if l0 == f64::NEG_INFINITY && l1 == f64::NEG_INFINITY {
            continue;
        }
        let lc = l0.max(l1);
        let (v0, v1) = (
            profile.sign[c] * (l0 - lc).exp(),
            profile.sign[c + 1] * (l1 - lc).exp(),
        );
        let (y0, y1) = (grid.y[c], grid.y[c + 1]);
        let integrate = |a: f64, b: f64| -> f64 {
            if b <= a {
                return 0.0;
            }
            crate::quad::GaussRule::new(4)
                .on(a, b)
                .iter()
                .map(|&(y, w)| {
                    let (h, _) = hats(y0, y1, y);
                    let v = h[0] * v0 + h[1] * v1;
                    w * v * v / (y * y)
                })
                .sum()
        };
        let all = integrate(y0, y1);
        total += all * (2.0 * (lc - mx)).exp();
        let tail = integrate(cut.max(y0), y1);
        if tail > 0.0 {
            tail_terms.push(tail.ln() + 2.0 * lc);
        }
    }
    if tail_terms.is_empty() {
        return (0.0, f64::NEG_INFINITY);
    }
    let tm = tail_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ln_tail = tm + tail_terms.iter().map(|l| (l - tm).exp()).sum::<f64>().ln();
    let ln_ratio = ln_tail - (total.ln() + 2.0 * mx);
    (ln_ratio.exp(), ln_ratio)
}
