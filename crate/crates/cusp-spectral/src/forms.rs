//! Assembly of the quadratic forms over the mode-function DOFs.
//!
//! Every form is `∫ ∇u·(reference)·∇v` (exactly block-diagonal in modes) plus,
//! for `q`, a correction supported on `S_- = [0,1]×[1,ᾱ]` whose x-integrals
//! against cosine pairs are computed by Gauss–Legendre quadrature.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::banded::SymBand;
use crate::eigen::{self, EigOptions, Target};
use crate::error::{FormError, SolverError};
use crate::geometry::{degenerating_fields, CubicB, DiffeoFields, PPoly};
use crate::modespace::{e_k, e_k_prime, hats, DofMap, ModeFunction};
use crate::par;
use crate::quad::GaussRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    Q,
    AModel,
    BCoupling,
    ADot,
    QDot,
    ATilde,
}

/// Stiffness/mass pair over a DOF map.
#[derive(Debug, Clone)]
pub struct FormPair {
    pub a: SymBand,
    pub m: SymBand,
    pub t: f64,
    pub kind: FormKind,
    pub dofs: Arc<DofMap>,
}

impl FormPair {
    /// `A(u, v)` for mode functions on this DOF map.
    pub fn eval(&self, u: &ModeFunction, v: &ModeFunction) -> f64 {
        let x = self.dofs.to_dofs(u).expect("grid");
        let y = self.dofs.to_dofs(v).expect("grid");
        self.a.form(&x, &y)
    }

    pub fn mass(&self, u: &ModeFunction, v: &ModeFunction) -> f64 {
        let x = self.dofs.to_dofs(u).expect("grid");
        let y = self.dofs.to_dofs(v).expect("grid");
        self.m.form(&x, &y)
    }

    /// Matrix dump as `row col value` lines (lower triangle, nonzeros).
    pub fn dump_coordinates(&self) -> String {
        dump_band(&self.a)
    }
}

pub fn dump_band(a: &SymBand) -> String {
    let mut s = String::new();
    for i in 0..a.n() {
        for j in i.saturating_sub(a.bandwidth())..=i {
            let v = a.get(i, j);
            if v != 0.0 {
                s.push_str(&format!("{i} {j} {v:e}\n"));
            }
        }
    }
    s
}

/// x-quadrature for coefficient–cosine products.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    /// Gauss nodes per panel; `None` means `4(K_max+1)`.
    pub x_nodes: Option<usize>,
    pub x_panels: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions {
            x_nodes: None,
            x_panels: 1,
        }
    }
}

fn x_rule(k_max: usize, opts: &AssemblyOptions) -> Vec<(f64, f64)> {
    let n = opts.x_nodes.unwrap_or(4 * (k_max + 1));
    GaussRule::new(n).composite(0.0, 1.0, opts.x_panels.max(1))
}

/// Per-cell element contributions `(row, col, value)` with `row ≥ col`.
type Triplets = Vec<(usize, usize, f64)>;

fn scatter(n: usize, bw: usize, parts: Vec<Triplets>) -> SymBand {
    let mut a = SymBand::zeros(n, bw);
    for part in parts {
        for (i, j, v) in part {
            a.add(i, j, v);
        }
    }
    a
}

/// Adds `v` for DOFs of (node r, mode k) × (node s, mode l) if both exist,
/// keeping only the lower triangle.
#[inline]
fn push(out: &mut Triplets, dofs: &DofMap, r: usize, k: usize, s: usize, l: usize, v: f64) {
    if let (Some(i), Some(j)) = (dofs.dof(r, k), dofs.dof(s, l)) {
        if i >= j {
            out.push((i, j, v));
        }
    }
}

/// Mass matrix of `⟨u, v⟩ = Σ_k ∫ u^k v^k y^{-2} dy`.
pub fn assemble_mass(dofs: &DofMap) -> SymBand {
    reference(dofs, [0.0, 0.0], 1.0)
}

/// `∫ d1²(kπ)² u^k v^k + d2² u^k′ v^k′ dy + mass_coeff·∫ u^k v^k y^{-2}`.
fn reference(dofs: &DofMap, d: [f64; 2], mass_coeff: f64) -> SymBand {
    let g = &dofs.grid;
    let kk = dofs.k_max + 1;
    let parts = par::map_range(g.n_cells(), |c| {
        let mut out = Triplets::with_capacity(4 * kk);
        let pts = g.cell_points(c);
        for k in 0..kk {
            let kp2 = (k as f64 * PI).powi(2);
            let mut loc = [[0.0; 2]; 2];
            for &(y, w) in &pts {
                let (n, dn) = hats(g.y[c], g.y[c + 1], y);
                for r in 0..2 {
                    for s in 0..2 {
                        loc[r][s] += w
                            * (d[0] * d[0] * kp2 * n[r] * n[s]
                                + d[1] * d[1] * dn[r] * dn[s]
                                + mass_coeff * n[r] * n[s] / (y * y));
                    }
                }
            }
            for r in 0..2 {
                for s in 0..2 {
                    push(&mut out, dofs, c + r, k, c + s, k, loc[r][s]);
                }
            }
        }
        out
    });
    scatter(dofs.n_dofs, dofs.bandwidth, parts)
}

/// `a_t(u,v) = ∫ u_x v_x + t² u_y v_y`.
pub fn assemble_a(t: f64, dofs: &Arc<DofMap>) -> FormPair {
    FormPair {
        a: reference(dofs, [1.0, t], 0.0),
        m: assemble_mass(dofs),
        t,
        kind: FormKind::AModel,
        dofs: dofs.clone(),
    }
}

/// `ã_t = a_t + ‖·‖²`, realized as `(A + M, M)`.
pub fn a_tilde(a: &FormPair) -> FormPair {
    FormPair {
        a: a.a.combine(1.0, &a.m, 1.0),
        m: a.m.clone(),
        t: a.t,
        kind: FormKind::ATilde,
        dofs: a.dofs.clone(),
    }
}

/// `ȧ_t(u,v) = 2t ∫ u_y v_y`.
fn assemble_a_dot(t: f64, dofs: &Arc<DofMap>) -> FormPair {
    FormPair {
        a: reference(dofs, [0.0, (2.0 * t).sqrt()], 0.0),
        m: assemble_mass(dofs),
        t,
        kind: FormKind::ADot,
        dofs: dofs.clone(),
    }
}

/// `∫_0^1 x e_k′(x) e_l(x) dx` in closed form.
pub fn x_moment(k: usize, l: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let sign = |m: i64| if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    if l == 0 {
        return std::f64::consts::SQRT_2 * sign(k as i64);
    }
    let s = |m: i64| {
        if m == 0 {
            0.0
        } else {
            -sign(m) / (m as f64 * PI)
        }
    };
    let (k, l) = (k as i64, l as i64);
    -(k as f64) * PI * (s(k + l) + s(k - l))
}

/// `b_t(u,v) = t ∫_{S_-} x p(y) (u_x v_y + u_y v_x)`.
pub fn assemble_b(t: f64, dofs: &Arc<DofMap>, p: &PPoly) -> FormPair {
    let g = &dofs.grid;
    let kk = dofs.k_max + 1;
    let xm: Vec<Vec<f64>> = (0..kk).map(|k| (0..kk).map(|l| x_moment(k, l)).collect()).collect();
    let n_minus = g.alpha_bar_index.expect("alpha_bar must be a grid node");
    let parts = par::map_range(n_minus, |c| {
        let mut out = Triplets::new();
        let pts = g.cell_points(c);
        for k in 0..kk {
            for l in 0..kk {
                let (xkl, xlk) = (xm[k][l], xm[l][k]);
                if xkl == 0.0 && xlk == 0.0 {
                    continue;
                }
                let mut loc = [[0.0; 2]; 2];
                for &(y, w) in &pts {
                    let (n, dn) = hats(g.y[c], g.y[c + 1], y);
                    let py = t * p.eval(y) * w;
                    for r in 0..2 {
                        for s in 0..2 {
                            loc[r][s] += py * (xkl * n[r] * dn[s] + xlk * dn[r] * n[s]);
                        }
                    }
                }
                for r in 0..2 {
                    for s in 0..2 {
                        push(&mut out, dofs, c + r, k, c + s, l, loc[r][s]);
                    }
                }
            }
        }
        out
    });
    FormPair {
        a: scatter(dofs.n_dofs, dofs.bandwidth, parts),
        m: assemble_mass(dofs),
        t,
        kind: FormKind::BCoupling,
        dofs: dofs.clone(),
    }
}

/// Full form `∫_{S_-} ∇(ρ̂u)·P∇(ρ̂v) + ∫_{S_+} ∇u·D²∇v` for the given fields.
pub fn assemble_q(
    fields: &DiffeoFields,
    dofs: &Arc<DofMap>,
    opts: &AssemblyOptions,
) -> Result<FormPair, FormError> {
    let t = match fields.kind {
        crate::geometry::FieldKind::Degenerating { t } => t,
        crate::geometry::FieldKind::Moduli => 0.0,
    };
    let base = reference(dofs, fields.d, 0.0);
    let corr = correction(fields, dofs, opts)?;
    Ok(FormPair {
        a: base.combine(1.0, &corr, 1.0),
        m: assemble_mass(dofs),
        t,
        kind: FormKind::Q,
        dofs: dofs.clone(),
    })
}

/// `q_t` of the degenerating family.
pub fn assemble_q_t(
    t: f64,
    beta: f64,
    alpha_bar: f64,
    dofs: &Arc<DofMap>,
    opts: &AssemblyOptions,
) -> Result<FormPair, FormError> {
    assemble_q(&degenerating_fields(t, beta, alpha_bar)?, dofs, opts)
}

fn correction(
    fields: &DiffeoFields,
    dofs: &DofMap,
    opts: &AssemblyOptions,
) -> Result<SymBand, FormError> {
    let g = &dofs.grid;
    let kk = dofs.k_max + 1;
    let xr = x_rule(dofs.k_max, opts);
    let cubics: Vec<CubicB> = xr
        .iter()
        .map(|&(a, _)| fields.cubic_at(a))
        .collect::<Result<_, _>>()?;
    let ek: Vec<Vec<f64>> = xr.iter().map(|&(a, _)| (0..kk).map(|k| e_k(k, a)).collect()).collect();
    let ekp: Vec<Vec<f64>> = xr
        .iter()
        .map(|&(a, _)| (0..kk).map(|k| e_k_prime(k, a)).collect())
        .collect();
    let [d1, d2] = fields.d;
    let n_minus = g.alpha_bar_index.expect("alpha_bar must be a grid node");
    let parts = par::map_range(n_minus, |c| -> Result<Triplets, FormError> {
        let mut out = Triplets::new();
        let mut loc = vec![0.0; 4 * kk * kk];
        let at = |r: usize, k: usize, s: usize, l: usize| ((r * kk + k) * 2 + s) * kk + l;
        for (y, wy) in g.cell_points(c) {
            // x-integrals X1..X6 (k, l)
            let mut xs = vec![[0.0f64; 6]; kk * kk];
            for (q, &(a, wx)) in xr.iter().enumerate() {
                let cf = fields.coeff_with(&cubics[q], a, y)?;
                let rho = cf.rho;
                let [p11, p12, p22] = cf.p;
                let [ga, gb] = cf.grad_rho;
                let g1 = p11 * ga + p12 * gb;
                let g2 = p12 * ga + p22 * gb;
                let c = [
                    rho * rho * p11 - d1 * d1,
                    rho * rho * p12,
                    rho * rho * p22 - d2 * d2,
                    rho * g1,
                    rho * g2,
                    ga * g1 + gb * g2,
                ];
                let (e, ep) = (&ek[q], &ekp[q]);
                for k in 0..kk {
                    for l in 0..kk {
                        let x = &mut xs[k * kk + l];
                        x[0] += wx * c[0] * ep[k] * ep[l];
                        x[1] += wx * c[1] * ep[k] * e[l];
                        x[2] += wx * c[2] * e[k] * e[l];
                        x[3] += wx * c[3] * e[k] * ep[l];
                        x[4] += wx * c[4] * e[k] * e[l];
                        x[5] += wx * c[5] * e[k] * e[l];
                    }
                }
            }
            let (n, dn) = hats(g.y[c], g.y[c + 1], y);
            for k in 0..kk {
                for l in 0..kk {
                    let x = xs[k * kk + l];
                    let xt = xs[l * kk + k];
                    for r in 0..2 {
                        for s in 0..2 {
                            let nn = n[r] * n[s];
                            let v = x[0] * nn
                                + x[1] * n[r] * dn[s]
                                + xt[1] * dn[r] * n[s]
                                + x[2] * dn[r] * dn[s]
                                + (x[3] + xt[3]) * nn
                                + x[4] * (n[r] * dn[s] + dn[r] * n[s])
                                + x[5] * nn;
                            loc[at(r, k, s, l)] += wy * v;
                        }
                    }
                }
            }
        }
        for r in 0..2 {
            for k in 0..kk {
                for s in 0..2 {
                    for l in 0..kk {
                        push(&mut out, dofs, c + r, k, c + s, l, loc[at(r, k, s, l)]);
                    }
                }
            }
        }
        Ok(out)
    });
    let parts = parts.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(scatter(dofs.n_dofs, dofs.bandwidth, parts))
}

/// `(ȧ_t, q̇_t)`: exact `ȧ` and a centered difference of `q` with step `h`
/// (default `1e-6·t`).
pub fn assemble_dots(
    t: f64,
    beta: f64,
    alpha_bar: f64,
    dofs: &Arc<DofMap>,
    opts: &AssemblyOptions,
    h: Option<f64>,
) -> Result<(FormPair, FormPair), FormError> {
    let h = h.unwrap_or(1e-6 * t);
    if t <= 2.0 * h {
        return Err(FormError::StepTooSmall { t, h });
    }
    let qp = assemble_q_t(t + h, beta, alpha_bar, dofs, opts)?;
    let qm = assemble_q_t(t - h, beta, alpha_bar, dofs, opts)?;
    let qdot = FormPair {
        a: qp.a.combine(0.5 / h, &qm.a, -0.5 / h),
        m: qp.m,
        t,
        kind: FormKind::QDot,
        dofs: dofs.clone(),
    };
    Ok((assemble_a_dot(t, dofs), qdot))
}

/// Eigenpairs with vectors as mode functions.
#[derive(Debug, Clone)]
pub struct EigSolveResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<ModeFunction>,
    pub residuals: Vec<f64>,
    /// Raw DOF vectors, M-orthonormal.
    pub raw: Vec<Vec<f64>>,
}

/// Smallest `count` eigenpairs, or those nearest `sigma`.
pub fn solve_lowest(
    form: &FormPair,
    count: usize,
    sigma: Option<f64>,
    opts: &EigOptions,
) -> Result<EigSolveResult, SolverError> {
    let target = match sigma {
        Some(s) => Target::Nearest(s),
        None => Target::Lowest { lower_bound: 0.0 },
    };
    let r = eigen::solve(&form.a, &form.m, count, target, opts)?;
    Ok(EigSolveResult {
        eigenvectors: r.vectors.iter().map(|v| form.dofs.to_function(v)).collect(),
        eigenvalues: r.values,
        residuals: r.residuals,
        raw: r.vectors,
    })
}

/// Slopes of the form-expansion residuals for fixed `u, v`.
#[derive(Debug, Clone)]
pub struct ExpansionFit {
    pub t: Vec<f64>,
    /// `|q − a − t·b|`
    pub second_order: Vec<f64>,
    /// `|q − a|`
    pub first_order: Vec<f64>,
    pub slope_second: f64,
    pub slope_first: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn check_expansion(
    t_list: &[f64],
    u: &ModeFunction,
    v: &ModeFunction,
    beta: f64,
    alpha_bar: f64,
    dofs: &Arc<DofMap>,
    p: &PPoly,
    opts: &AssemblyOptions,
) -> Result<ExpansionFit, FormError> {
    let x = dofs.to_dofs(u).expect("grid");
    let y = dofs.to_dofs(v).expect("grid");
    let mut so = vec![];
    let mut fo = vec![];
    for &t in t_list {
        let q = assemble_q_t(t, beta, alpha_bar, dofs, opts)?;
        let a = assemble_a(t, dofs);
        let b = assemble_b(t, dofs, p);
        let diff = q.a.combine(1.0, &a.a, -1.0);
        let qa = diff.form(&x, &y);
        let qab = qa - t * b.a.form(&x, &y);
        so.push(qab.abs());
        fo.push(qa.abs());
    }
    let fit = |v: &[f64]| {
        if v.iter().all(|&x| x == 0.0) {
            f64::INFINITY
        } else {
            crate::fit::loglog(t_list, v).slope
        }
    };
    Ok(ExpansionFit {
        t: t_list.to_vec(),
        slope_second: fit(&so),
        slope_first: fit(&fo),
        second_order: so,
        first_order: fo,
    })
}
