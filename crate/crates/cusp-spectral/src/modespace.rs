//! Functions on the truncated strip `[0,1] × [1, y_max]` as cosine modes in
//! `x` times piecewise-linear profiles in `y`.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::ModespaceError;
use crate::quad::GaussRule;

/// Gauss points per cell.
pub const CELL_QUAD: usize = 4;

/// Parameters of the graded y-mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshParams {
    /// Smallest t of the run; sets the boundary-layer width `t^{2/3}`.
    pub t_min: f64,
    /// Cells per layer width near `y = 1`.
    pub n_layer: f64,
    /// Past the layer the spacing grows with slope `growth − 1` in y.
    pub growth: f64,
    pub h_max: f64,
    /// Largest energy to resolve on `[1, osc_until]`.
    pub e_max: f64,
    /// Points per local wavelength.
    pub ppw: f64,
}

impl MeshParams {
    pub fn new(t_min: f64, e_max: f64) -> Self {
        MeshParams {
            t_min,
            n_layer: 16.0,
            growth: 1.1,
            h_max: 0.05,
            e_max,
            ppw: 24.0,
        }
    }
}

/// Ordered y-nodes with `β` (and optionally `ᾱ`) as exact nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CuspGrid {
    pub y: Vec<f64>,
    pub beta: f64,
    pub beta_index: usize,
    pub alpha_bar_index: Option<usize>,
    pub params: Option<MeshParams>,
}

impl CuspGrid {
    /// Graded mesh on `[1, y_max]` with breakpoints at `β`, `ᾱ` (if given).
    pub fn graded(
        params: MeshParams,
        beta: f64,
        alpha_bar: Option<f64>,
        y_max: f64,
    ) -> Result<Self, ModespaceError> {
        if !(beta > 1.0 && y_max > beta) {
            return Err(ModespaceError::InvalidGrid(format!(
                "need 1 < beta < y_max, got beta = {beta}, y_max = {y_max}"
            )));
        }
        let tau = params.t_min.powf(2.0 / 3.0);
        let h0 = tau / params.n_layer;
        let y_layer = 1.0 + 10.0 * tau;
        let osc_until = beta.max(params.e_max.sqrt() / std::f64::consts::PI);
        let spacing = |y: f64| {
            let mut h = (h0 + (params.growth - 1.0) * (y - y_layer).max(0.0)).min(params.h_max);
            if y <= osc_until && params.e_max > 0.0 {
                let osc = 2.0 * std::f64::consts::PI * params.t_min * y
                    / (params.e_max.sqrt() * params.ppw);
                h = h.min(osc);
            }
            h
        };
        let mut breaks = vec![1.0, beta, y_max];
        if let Some(ab) = alpha_bar {
            if ab > 1.0 && ab < y_max && ab != beta {
                breaks.push(ab);
            }
        }
        breaks.sort_by(f64::total_cmp);
        let mut y = vec![1.0];
        for seg in breaks.windows(2) {
            let (s0, s1) = (seg[0], seg[1]);
            let mut pts = vec![];
            let mut cur = s0;
            while cur < s1 {
                cur += spacing(cur);
                pts.push(cur);
            }
            let last = *pts.last().unwrap();
            let scale = (s1 - s0) / (last - s0);
            let n = pts.len();
            for (i, p) in pts.into_iter().enumerate() {
                y.push(if i + 1 == n { s1 } else { s0 + (p - s0) * scale });
            }
        }
        Self::from_nodes(y, beta, alpha_bar, Some(params))
    }

    /// Grid from explicit nodes; `β` (and `ᾱ` if given) must be nodes.
    pub fn from_nodes(
        y: Vec<f64>,
        beta: f64,
        alpha_bar: Option<f64>,
        params: Option<MeshParams>,
    ) -> Result<Self, ModespaceError> {
        if y.len() < 3 || y[0] != 1.0 || !y.windows(2).all(|w| w[0] < w[1]) {
            return Err(ModespaceError::InvalidGrid(
                "nodes must start at 1 and increase strictly".into(),
            ));
        }
        let beta_index = y
            .iter()
            .position(|&v| v == beta)
            .ok_or(ModespaceError::BetaNotOnGrid { beta })?;
        let alpha_bar_index = match alpha_bar {
            Some(ab) if ab < *y.last().unwrap() => Some(
                y.iter()
                    .position(|&v| v == ab)
                    .ok_or_else(|| ModespaceError::InvalidGrid(format!("alpha_bar {ab} not a node")))?,
            ),
            _ => None,
        };
        Ok(CuspGrid {
            y,
            beta,
            beta_index,
            alpha_bar_index,
            params,
        })
    }

    /// Uniform nodes on `[1, β]` followed by uniform nodes on `[β, y_max]`.
    pub fn uniform(beta: f64, y_max: f64, cells_to_beta: usize, cells_after: usize) -> Self {
        let mut y: Vec<f64> = (0..=cells_to_beta)
            .map(|i| 1.0 + (beta - 1.0) * i as f64 / cells_to_beta as f64)
            .collect();
        y[cells_to_beta] = beta;
        for i in 1..=cells_after {
            y.push(beta + (y_max - beta) * i as f64 / cells_after as f64);
        }
        let last = y.len() - 1;
        y[last] = y_max;
        Self::from_nodes(y, beta, None, None).expect("valid uniform grid")
    }

    /// Every cell bisected; breakpoints are kept.
    pub fn refined(&self) -> Self {
        let mut y = Vec::with_capacity(2 * self.y.len());
        for w in self.y.windows(2) {
            y.push(w[0]);
            y.push(0.5 * (w[0] + w[1]));
        }
        y.push(*self.y.last().unwrap());
        let ab = self.alpha_bar_index.map(|i| self.y[i]);
        Self::from_nodes(y, self.beta, ab, self.params).expect("refinement keeps breakpoints")
    }

    /// Nodes uniform in `ln y` on `[1, β]`, then `cells_after` uniform cells.
    pub fn log_uniform(beta: f64, y_max: f64, cells_to_beta: usize, cells_after: usize) -> Self {
        let lb = beta.ln();
        let mut y: Vec<f64> = (0..=cells_to_beta)
            .map(|i| (lb * i as f64 / cells_to_beta as f64).exp())
            .collect();
        y[0] = 1.0;
        y[cells_to_beta] = beta;
        for i in 1..=cells_after {
            y.push(beta + (y_max - beta) * i as f64 / cells_after as f64);
        }
        let last = y.len() - 1;
        y[last] = y_max;
        Self::from_nodes(y, beta, None, None).expect("valid log grid")
    }

    pub fn n_nodes(&self) -> usize {
        self.y.len()
    }

    pub fn y_max(&self) -> f64 {
        *self.y.last().unwrap()
    }

    pub fn n_cells(&self) -> usize {
        self.y.len() - 1
    }

    /// Gauss points `(y, weight)` of cell `i` (between nodes i and i+1).
    pub fn cell_points(&self, i: usize) -> Vec<(f64, f64)> {
        thread_local! {
            static RULE: GaussRule = GaussRule::new(CELL_QUAD);
        }
        RULE.with(|r| r.on(self.y[i], self.y[i + 1]))
    }

    /// Smallest spacing within `[1, 1 + width]`.
    pub fn max_spacing_near_one(&self, width: f64) -> f64 {
        self.y
            .windows(2)
            .take_while(|w| w[0] < 1.0 + width)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// P1 hat functions on a cell: values and slopes of the left/right basis.
#[inline]
pub fn hats(y0: f64, y1: f64, y: f64) -> ([f64; 2], [f64; 2]) {
    let h = y1 - y0;
    ([(y1 - y) / h, (y - y0) / h], [-1.0 / h, 1.0 / h])
}

/// Degrees of freedom of the constrained space, interleaved node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub grid: Arc<CuspGrid>,
    pub k_max: usize,
    /// `index[i * (k_max+1) + k]` is the DOF of mode k at node i.
    index: Vec<Option<usize>>,
    pub n_dofs: usize,
    pub bandwidth: usize,
}

impl DofMap {
    /// Mode 0 lives on nodes below `β`; modes ≥ 1 on all nodes but `y_max`.
    pub fn new(grid: Arc<CuspGrid>, k_max: usize) -> Self {
        let n = grid.n_nodes();
        let stride = k_max + 1;
        let mut index = vec![None; n * stride];
        let mut next = 0;
        for i in 0..n {
            for k in 0..stride {
                let active = if k == 0 { i < grid.beta_index } else { i + 1 < n };
                if active {
                    index[i * stride + k] = Some(next);
                    next += 1;
                }
            }
        }
        let mut bw = 0;
        for i in 0..n.saturating_sub(1) {
            let ids: Vec<usize> = (0..2 * stride)
                .filter_map(|j| index[i * stride + j])
                .collect();
            if let (Some(lo), Some(hi)) = (ids.iter().min(), ids.iter().max()) {
                bw = bw.max(hi - lo);
            }
        }
        DofMap {
            grid,
            k_max,
            index,
            n_dofs: next,
            bandwidth: bw,
        }
    }

    #[inline]
    pub fn dof(&self, node: usize, mode: usize) -> Option<usize> {
        self.index[node * (self.k_max + 1) + mode]
    }

    pub fn to_function(&self, x: &[f64]) -> ModeFunction {
        assert_eq!(x.len(), self.n_dofs);
        let n = self.grid.n_nodes();
        let profiles = (0..=self.k_max)
            .map(|k| (0..n).map(|i| self.dof(i, k).map_or(0.0, |d| x[d])).collect())
            .collect();
        ModeFunction {
            grid: self.grid.clone(),
            profiles,
        }
    }

    /// Restriction to the DOFs (values on eliminated nodes are dropped).
    pub fn to_dofs(&self, u: &ModeFunction) -> Result<Vec<f64>, ModespaceError> {
        if !same_grid(&u.grid, &self.grid) || u.k_max() != self.k_max {
            return Err(ModespaceError::GridMismatch);
        }
        let mut x = vec![0.0; self.n_dofs];
        for (k, prof) in u.profiles.iter().enumerate() {
            for (i, &v) in prof.iter().enumerate() {
                if let Some(d) = self.dof(i, k) {
                    x[d] = v;
                }
            }
        }
        Ok(x)
    }
}

fn same_grid(a: &Arc<CuspGrid>, b: &Arc<CuspGrid>) -> bool {
    Arc::ptr_eq(a, b) || a.y == b.y
}

/// A function `Σ_k e_k(x)·u^k(y)` with nodal profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeFunction {
    pub grid: Arc<CuspGrid>,
    /// `profiles[k][i]` is `u^k(y_i)`.
    pub profiles: Vec<Vec<f64>>,
}

/// The x-basis: `e_0 = 1`, `e_k = √2 cos(kπx)`.
#[inline]
pub fn e_k(k: usize, x: f64) -> f64 {
    if k == 0 {
        1.0
    } else {
        std::f64::consts::SQRT_2 * (k as f64 * std::f64::consts::PI * x).cos()
    }
}

#[inline]
pub fn e_k_prime(k: usize, x: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        let kp = k as f64 * std::f64::consts::PI;
        -std::f64::consts::SQRT_2 * kp * (kp * x).sin()
    }
}

impl ModeFunction {
    pub fn zeros(grid: Arc<CuspGrid>, k_max: usize) -> Self {
        let n = grid.n_nodes();
        ModeFunction {
            grid,
            profiles: vec![vec![0.0; n]; k_max + 1],
        }
    }

    /// Mode-`k` function with the given nodal profile.
    pub fn single_mode(grid: Arc<CuspGrid>, k_max: usize, k: usize, profile: Vec<f64>) -> Self {
        let mut u = Self::zeros(grid, k_max);
        u.profiles[k] = profile;
        u
    }

    pub fn k_max(&self) -> usize {
        self.profiles.len() - 1
    }

    fn check(&self, other: &ModeFunction) -> Result<(), ModespaceError> {
        if !same_grid(&self.grid, &other.grid) || self.k_max() != other.k_max() {
            return Err(ModespaceError::GridMismatch);
        }
        Ok(())
    }

    /// Point value at `(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (0..=self.k_max())
            .map(|k| e_k(k, x) * profile_at(&self.grid.y, &self.profiles[k], y))
            .sum()
    }

    /// `Σ_k ∫ u^k v^k y^{-2} dy` by per-cell Gauss quadrature.
    pub fn inner_product(&self, other: &ModeFunction) -> Result<f64, ModespaceError> {
        self.check(other)?;
        Ok((0..=self.k_max())
            .map(|k| profile_inner(&self.grid, &self.profiles[k], &other.profiles[k]))
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.inner_product(self).expect("same grid").max(0.0).sqrt()
    }

    /// Norm of a single mode profile.
    pub fn mode_norm(&self, k: usize) -> f64 {
        profile_inner(&self.grid, &self.profiles[k], &self.profiles[k]).sqrt()
    }

    pub fn project_mode(&self, ell: usize) -> Result<ModeFunction, ModespaceError> {
        self.keep(ell, |k| k == ell)
    }

    /// Keeps modes `< k`.
    pub fn project_below(&self, k: usize) -> Result<ModeFunction, ModespaceError> {
        self.keep(k.saturating_sub(1), |j| j < k)
    }

    fn keep(&self, check: usize, f: impl Fn(usize) -> bool) -> Result<ModeFunction, ModespaceError> {
        if check > self.k_max() {
            return Err(ModespaceError::ModeOutOfRange {
                ell: check,
                k_max: self.k_max(),
            });
        }
        let mut u = self.clone();
        for (k, p) in u.profiles.iter_mut().enumerate() {
            if !f(k) {
                p.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Ok(u)
    }

    /// Zeroth profile set to 0 at nodes `y ≥ β`.
    pub fn truncate_zero_mode(&self, beta: f64) -> Result<ModeFunction, ModespaceError> {
        let idx = self
            .grid
            .y
            .iter()
            .position(|&v| v == beta)
            .ok_or(ModespaceError::BetaNotOnGrid { beta })?;
        let mut u = self.clone();
        u.profiles[0][idx..].iter_mut().for_each(|v| *v = 0.0);
        Ok(u)
    }

    pub fn scaled(&self, c: f64) -> ModeFunction {
        let mut u = self.clone();
        u.profiles
            .iter_mut()
            .for_each(|p| p.iter_mut().for_each(|v| *v *= c));
        u
    }

    /// `self + c·other`.
    pub fn axpy(&self, c: f64, other: &ModeFunction) -> Result<ModeFunction, ModespaceError> {
        self.check(other)?;
        let mut u = self.clone();
        for (p, q) in u.profiles.iter_mut().zip(&other.profiles) {
            p.iter_mut().zip(q).for_each(|(a, b)| *a += c * b);
        }
        Ok(u)
    }

    /// Columnar CSV: `y,profile_0,…,profile_K`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("y");
        for k in 0..=self.k_max() {
            s.push_str(&format!(",profile_{k}"));
        }
        s.push('\n');
        for (i, y) in self.grid.y.iter().enumerate() {
            s.push_str(&format!("{y:e}"));
            for p in &self.profiles {
                s.push_str(&format!(",{:e}", p[i]));
            }
            s.push('\n');
        }
        s
    }

    /// Parses [`to_csv`](Self::to_csv) output onto an existing grid.
    pub fn from_csv(grid: Arc<CuspGrid>, text: &str) -> Result<ModeFunction, ModespaceError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| ModespaceError::Parse("empty".into()))?;
        let cols = header.split(',').count();
        if cols < 2 {
            return Err(ModespaceError::Parse("no profile columns".into()));
        }
        let mut profiles = vec![Vec::with_capacity(grid.n_nodes()); cols - 1];
        for (i, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| ModespaceError::Parse(e.to_string()))?;
            if vals.len() != cols || i >= grid.n_nodes() || vals[0] != grid.y[i] {
                return Err(ModespaceError::GridMismatch);
            }
            for (k, v) in vals[1..].iter().enumerate() {
                profiles[k].push(*v);
            }
        }
        if profiles[0].len() != grid.n_nodes() {
            return Err(ModespaceError::GridMismatch);
        }
        Ok(ModeFunction { grid, profiles })
    }

    /// Binary dump: magic `CUSPMF01`, `u32` K_max, `u64` node count, then the
    /// nodes and each profile as little-endian `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(self.k_max() as u32).to_le_bytes())?;
        w.write_all(&(self.grid.n_nodes() as u64).to_le_bytes())?;
        for v in self.grid.y.iter().chain(self.profiles.iter().flatten()) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a binary dump; returns the node array and the profiles.
    pub fn read_binary<R: Read>(mut r: R) -> Result<(Vec<f64>, Vec<Vec<f64>>), ModespaceError> {
        let io = |e: std::io::Error| ModespaceError::Parse(e.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != BINARY_MAGIC {
            return Err(ModespaceError::Parse("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(io)?;
        let k_max = u32::from_le_bytes(b4) as usize;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(io)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut read_vec = |len: usize| -> Result<Vec<f64>, ModespaceError> {
            (0..len)
                .map(|_| {
                    r.read_exact(&mut b8).map_err(io)?;
                    Ok(f64::from_le_bytes(b8))
                })
                .collect()
        };
        let y = read_vec(n)?;
        let profiles = (0..=k_max).map(|_| read_vec(n)).collect::<Result<_, _>>()?;
        Ok((y, profiles))
    }
}

pub const BINARY_MAGIC: &[u8; 8] = b"CUSPMF01";

/// Linear interpolation of a nodal profile.
pub fn profile_at(y_nodes: &[f64], p: &[f64], y: f64) -> f64 {
    if y <= y_nodes[0] {
        return p[0];
    }
    let n = y_nodes.len();
    if y >= y_nodes[n - 1] {
        return p[n - 1];
    }
    let i = y_nodes.partition_point(|&v| v <= y) - 1;
    let (h, _) = hats(y_nodes[i], y_nodes[i + 1], y);
    h[0] * p[i] + h[1] * p[i + 1]
}

/// `∫ p q y^{-2} dy` for P1 profiles.
pub fn profile_inner(grid: &CuspGrid, p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..grid.n_cells() {
        if p[i] == 0.0 && p[i + 1] == 0.0 || q[i] == 0.0 && q[i + 1] == 0.0 {
            continue;
        }
        for (y, w) in grid.cell_points(i) {
            let (h, _) = hats(grid.y[i], grid.y[i + 1], y);
            let pv = h[0] * p[i] + h[1] * p[i + 1];
            let qv = h[0] * q[i] + h[1] * q[i + 1];
            s += w * pv * qv / (y * y);
        }
    }
    s
}
