//! Generalized symmetric eigensolvers for banded pencils `A x = λ M x`.
//!
//! The production path is shift-invert Lanczos in the M-inner product with
//! full reorthogonalization, certified by a Sylvester inertia count. A dense
//! Cholesky + symmetric QR path serves as oracle for small problems.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::banded::{dot, SymBand};
use crate::error::SolverError;

/// Which part of the spectrum to compute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// The smallest eigenvalues (all eigenvalues must exceed `lower_bound`).
    Lowest { lower_bound: f64 },
    /// The eigenvalues closest to the shift.
    Nearest(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Copy)]
pub struct EigOptions {
    /// Relative residual tolerance.
    pub tol: f64,
    pub method: Method,
    /// `Auto` uses the dense path up to this size.
    pub dense_max: usize,
    pub max_subspace: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        EigOptions {
            tol: 1e-9,
            method: Method::Auto,
            dense_max: 300,
            max_subspace: 800,
        }
    }
}

/// Eigenpairs in ascending order; vectors are M-orthonormal.
#[derive(Debug, Clone)]
pub struct EigPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// `‖A v − λ M v‖_{M^{-1}}` per pair.
    pub residuals: Vec<f64>,
}

pub fn solve(
    a: &SymBand,
    m: &SymBand,
    count: usize,
    target: Target,
    opts: &EigOptions,
) -> Result<EigPairs, SolverError> {
    let n = a.n();
    assert_eq!(n, m.n());
    let count = count.min(n);
    if count == 0 {
        return Ok(EigPairs {
            values: vec![],
            vectors: vec![],
            residuals: vec![],
        });
    }
    let dense = match opts.method {
        Method::Dense => true,
        Method::Lanczos => false,
        Method::Auto => n <= opts.dense_max,
    };
    let pairs = if dense {
        let (vals, vecs) = dense_generalized(&a.to_dense(), &m.to_dense())?;
        select_dense(vals, vecs, count, target)
    } else {
        lanczos(a, m, count, target, opts)?
    };
    Ok(with_residuals(a, m, pairs))
}

/// All eigenvalues of `A` in `[lo, hi]` with eigenvectors.
pub fn solve_interval(
    a: &SymBand,
    m: &SymBand,
    lo: f64,
    hi: f64,
    opts: &EigOptions,
) -> Result<EigPairs, SolverError> {
    let count = count_below(a, m, hi) - count_below(a, m, lo);
    if count == 0 {
        return Ok(EigPairs {
            values: vec![],
            vectors: vec![],
            residuals: vec![],
        });
    }
    let mid = 0.5 * (lo + hi);
    // Nearest-to-mid may pick values outside [lo, hi] when the window is
    // lopsided; over-request and filter.
    let extra = (count / 2 + 4).min(a.n() - count);
    let res = solve(a, m, count + extra, Target::Nearest(mid), opts)?;
    let keep: Vec<usize> = (0..res.values.len())
        .filter(|&i| res.values[i] >= lo && res.values[i] <= hi)
        .collect();
    if keep.len() != count {
        return Err(SolverError::NoConvergence {
            iterations: 0,
            detail: format!(
                "interval [{lo}, {hi}] should hold {count} eigenvalues, found {}",
                keep.len()
            ),
        });
    }
    Ok(EigPairs {
        values: keep.iter().map(|&i| res.values[i]).collect(),
        vectors: keep.iter().map(|&i| res.vectors[i].clone()).collect(),
        residuals: keep.iter().map(|&i| res.residuals[i]).collect(),
    })
}

/// Number of eigenvalues strictly below `mu` (Sylvester inertia).
pub fn count_below(a: &SymBand, m: &SymBand, mu: f64) -> usize {
    a.combine(1.0, m, -mu).ldlt().negative_count()
}

/// Dense generalized eigendecomposition via Cholesky reduction.
pub fn dense_generalized(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), SolverError> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| SolverError::NoConvergence {
            iterations: 0,
            detail: "mass matrix is not positive definite".into(),
        })?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| SolverError::NoConvergence {
            iterations: 0,
            detail: "singular Cholesky factor".into(),
        })?;
    let mut c = &linv * a * linv.transpose();
    c = 0.5 * (&c + c.transpose());
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lt_inv = linv.transpose();
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = order
        .iter()
        .map(|&i| {
            let y: DVector<f64> = eig.eigenvectors.column(i).into_owned();
            (&lt_inv * y).iter().copied().collect()
        })
        .collect();
    Ok((vals, vecs))
}

fn select_dense(vals: Vec<f64>, vecs: Vec<Vec<f64>>, count: usize, target: Target) -> EigPairs {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    if let Target::Nearest(s) = target {
        idx.sort_by(|&i, &j| (vals[i] - s).abs().total_cmp(&(vals[j] - s).abs()));
    }
    idx.truncate(count);
    idx.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    EigPairs {
        values: idx.iter().map(|&i| vals[i]).collect(),
        vectors: idx.iter().map(|&i| vecs[i].clone()).collect(),
        residuals: vec![],
    }
}

fn with_residuals(a: &SymBand, m: &SymBand, mut p: EigPairs) -> EigPairs {
    let mf = m.ldlt();
    p.residuals = p
        .values
        .iter()
        .zip(&p.vectors)
        .map(|(&lam, v)| {
            let av = a.matvec(v);
            let mv = m.matvec(v);
            let r: Vec<f64> = av.iter().zip(&mv).map(|(x, y)| x - lam * y).collect();
            dot(&r, &mf.solve(&r)).max(0.0).sqrt()
        })
        .collect();
    p
}

fn start_vector(n: usize, salt: u64) -> Vec<f64> {
    let mut s = 0x9E37_79B9_7F4A_7C15u64 ^ salt.wrapping_mul(0xD1B5_4A32_D192_ED03);
    (0..n)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

fn lanczos(
    a: &SymBand,
    m: &SymBand,
    count: usize,
    target: Target,
    opts: &EigOptions,
) -> Result<EigPairs, SolverError> {
    let n = a.n();
    let base = match target {
        Target::Lowest { lower_bound } => lower_bound,
        Target::Nearest(s) => s,
    };
    let (a_norm, m_norm) = (a.norm_inf(), m.norm_inf());
    let mut sub = (3 * count + 30).min(n);
    let mut attempt = 0u64;
    let mut last_detail: String;
    loop {
        // A shift sitting on an eigenvalue swamps its neighbours in rounding;
        // retries move the shift off it (downwards for Lowest, which must stay
        // below the spectrum) and over-fetch so the selection is unaffected.
        let delta = if attempt == 0 { 0.0 } else { 10f64.powi(attempt as i32 - 4) * base.abs().max(1.0) };
        let (sigma, fetch) = match target {
            Target::Lowest { .. } => (base - delta, count),
            Target::Nearest(_) => (base + delta, if attempt == 0 { count } else { (count + 2).min(n) }),
        };
        let k_op = a.combine(1.0, m, -sigma).ldlt();
        let pairs = lanczos_run(&k_op, m, n, sub, fetch, sigma, target, attempt)
            .and_then(|p| rayleigh_ritz(a, m, p).map_err(|e| e.to_string()))
            .map(|p| select_dense(p.values, p.vectors, count, target));
        match pairs {
            Ok(p) => {
                // Backward-error test: ‖Av − λMv‖ ≤ tol (‖A‖ + |λ|‖M‖) ‖v‖.
                let rel_ok = p.values.iter().zip(&p.vectors).all(|(&lam, v)| {
                    let av = a.matvec(v);
                    let mv = m.matvec(v);
                    let r: f64 = av
                        .iter()
                        .zip(&mv)
                        .map(|(x, y)| (x - lam * y).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    r <= opts.tol * (a_norm + lam.abs() * m_norm) * vn
                });
                let certified = rel_ok && certify(a, m, &p.values, target);
                if certified {
                    return Ok(p);
                }
                last_detail = if rel_ok {
                    "inertia count disagrees with the Ritz values".into()
                } else {
                    "residual above tolerance".into()
                };
            }
            Err(d) => last_detail = d,
        }
        if sub >= n || sub >= opts.max_subspace {
            if attempt >= 3 {
                return Err(SolverError::NoConvergence {
                    iterations: sub,
                    detail: last_detail,
                });
            }
        } else {
            sub = (2 * sub).min(n).min(opts.max_subspace);
        }
        attempt += 1;
    }
}

#[allow(clippy::too_many_arguments)]
fn lanczos_run(
    k_op: &crate::banded::Ldlt,
    m: &SymBand,
    n: usize,
    steps: usize,
    count: usize,
    sigma: f64,
    target: Target,
    salt: u64,
) -> Result<EigPairs, String> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut mq: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut alpha = Vec::with_capacity(steps);
    let mut beta: Vec<f64> = Vec::with_capacity(steps);

    let v0 = start_vector(n, salt);
    let mv0 = m.matvec(&v0);
    let nrm = dot(&v0, &mv0).sqrt();
    q.push(v0.iter().map(|x| x / nrm).collect());
    mq.push(mv0.iter().map(|x| x / nrm).collect());

    for j in 0..steps {
        let mut w = k_op.solve(&mq[j]);
        let aj = dot(&w, &mq[j]);
        alpha.push(aj);
        for _ in 0..2 {
            for i in 0..=j {
                let c = dot(&w, &mq[i]);
                w.iter_mut().zip(&q[i]).for_each(|(x, y)| *x -= c * y);
            }
        }
        if j + 1 == steps {
            break;
        }
        let mw = m.matvec(&w);
        let b = dot(&w, &mw).max(0.0).sqrt();
        if b <= 1e-13 * aj.abs().max(1e-300) {
            break;
        }
        beta.push(b);
        q.push(w.iter().map(|x| x / b).collect());
        mq.push(mw.iter().map(|x| x / b).collect());
    }
    let k = alpha.len();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let mut idx: Vec<usize> = (0..k).collect();
    // Lowest: θ = 1/(λ−σ) > 0, largest θ first. Nearest: largest |θ|.
    match target {
        Target::Lowest { .. } => idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i])),
        Target::Nearest(_) => {
            idx.sort_by(|&i, &j| eig.eigenvalues[j].abs().total_cmp(&eig.eigenvalues[i].abs()))
        }
    }
    if idx.len() < count {
        return Err(format!("Krylov space exhausted at dimension {k}"));
    }
    idx.truncate(count);
    let mut pairs: Vec<(f64, Vec<f64>)> = idx
        .iter()
        .map(|&i| {
            let theta = eig.eigenvalues[i];
            let s = eig.eigenvectors.column(i);
            let mut x = vec![0.0; n];
            for (jj, qj) in q.iter().enumerate().take(k) {
                let c = s[jj];
                x.iter_mut().zip(qj).for_each(|(xi, qi)| *xi += c * qi);
            }
            (sigma + 1.0 / theta, x)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    // Re-normalize in M.
    for (_, x) in pairs.iter_mut() {
        let nx = dot(x, &m.matvec(x)).sqrt();
        x.iter_mut().for_each(|v| *v /= nx);
        // Sign convention: largest-magnitude entry positive.
        let imax = (0..n).max_by(|&i, &j| x[i].abs().total_cmp(&x[j].abs())).unwrap();
        if x[imax] < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(EigPairs {
        values: pairs.iter().map(|p| p.0).collect(),
        vectors: pairs.into_iter().map(|p| p.1).collect(),
        residuals: vec![],
    })
}

/// Re-solves `A` and `M` on the span of the Ritz vectors, which removes the
/// rounding a huge shift-invert value leaves in its small neighbours.
fn rayleigh_ritz(a: &SymBand, m: &SymBand, p: EigPairs) -> Result<EigPairs, SolverError> {
    let k = p.vectors.len();
    let av: Vec<Vec<f64>> = p.vectors.iter().map(|v| a.matvec(v)).collect();
    let mv: Vec<Vec<f64>> = p.vectors.iter().map(|v| m.matvec(v)).collect();
    let ha = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&p.vectors[i], &av[j]) + dot(&p.vectors[j], &av[i])));
    let hm = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&p.vectors[i], &mv[j]) + dot(&p.vectors[j], &mv[i])));
    let (vals, coef) = dense_generalized(&ha, &hm)?;
    let n = a.n();
    let vectors = coef
        .iter()
        .map(|c| {
            let mut x = vec![0.0; n];
            for (cj, vj) in c.iter().zip(&p.vectors) {
                x.iter_mut().zip(vj).for_each(|(xi, vi)| *xi += cj * vi);
            }
            let nx = dot(&x, &m.matvec(&x)).sqrt();
            x.iter_mut().for_each(|v| *v /= nx);
            let imax = (0..n).max_by(|&i, &j| x[i].abs().total_cmp(&x[j].abs())).unwrap();
            if x[imax] < 0.0 {
                x.iter_mut().for_each(|v| *v = -*v);
            }
            x
        })
        .collect();
    Ok(EigPairs { values: vals, vectors, residuals: vec![] })
}

fn certify(a: &SymBand, m: &SymBand, vals: &[f64], target: Target) -> bool {
    let lo = vals[0];
    let hi = *vals.last().unwrap();
    let gap = 1e-9 * hi.abs().max(lo.abs()).max(1e-300);
    match target {
        Target::Lowest { .. } => count_below(a, m, hi + gap) == vals.len(),
        Target::Nearest(s) => {
            let r = (s - lo).abs().max((hi - s).abs());
            let below = count_below(a, m, s - r - gap);
            let upto = count_below(a, m, s + r + gap);
            upto - below == vals.len()
        }
    }
}
