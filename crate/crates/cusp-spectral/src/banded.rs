//! Symmetric banded matrices and their LDLᵀ factorization.

use nalgebra::DMatrix;

/// Symmetric matrix stored by its lower band: `data[i*(bw+1)+d] = A[i][i-d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        SymBand {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let d = r - c;
        (d <= self.bw).then(|| r * (self.bw + 1) + d)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.idx(i, j).map_or(0.0, |k| self.data[k])
    }

    /// Adds `v` to entry (i,j) (and implicitly (j,i)). Panics outside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j).expect("entry outside band");
        self.data[k] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j).expect("entry outside band");
        self.data[k] = v;
    }

    /// `a·self + b·other` (same shape).
    pub fn combine(&self, a: f64, other: &SymBand, b: f64) -> SymBand {
        assert_eq!((self.n, self.bw), (other.n, other.bw));
        SymBand {
            n: self.n,
            bw: self.bw,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    pub fn scaled(&self, a: f64) -> SymBand {
        SymBand {
            n: self.n,
            bw: self.bw,
            data: self.data.iter().map(|x| a * x).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        let mut rows = vec![0.0; self.n];
        for i in 0..self.n {
            for d in 0..=self.bw.min(i) {
                let v = self.data[i * (self.bw + 1) + d].abs();
                rows[i] += v;
                if d > 0 {
                    rows[i - d] += v;
                }
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        y.iter_mut().for_each(|v| *v = 0.0);
        let w = self.bw + 1;
        for i in 0..self.n {
            let row = &self.data[i * w..(i + 1) * w];
            y[i] += row[0] * x[i];
            for d in 1..=self.bw.min(i) {
                let a = row[d];
                if a != 0.0 {
                    y[i] += a * x[i - d];
                    y[i - d] += a * x[i];
                }
            }
        }
    }

    /// Bilinear form `xᵀ A y`.
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// LDLᵀ without pivoting. Exactly-zero pivots are nudged so that
    /// shift-invert at an eigenvalue still yields a usable operator.
    pub fn ldlt(&self) -> Ldlt {
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut l = self.data.clone();
        let mut dg = vec![0.0; n];
        let mut tmp = vec![0.0; w];
        for j in 0..n {
            let k0 = j.saturating_sub(bw);
            // tmp[k-k0] = L_jk * D_k
            let mut djj = l[j * w];
            for k in k0..j {
                let ljk = l[j * w + (j - k)];
                tmp[k - k0] = ljk * dg[k];
                djj -= ljk * tmp[k - k0];
            }
            if djj.abs() < 1e-15 * scale {
                djj = if djj < 0.0 { -1e-15 * scale } else { 1e-15 * scale };
            }
            dg[j] = djj;
            l[j * w] = 1.0;
            for i in j + 1..n.min(j + bw + 1) {
                let ki0 = i.saturating_sub(bw).max(k0);
                let mut s = l[i * w + (i - j)];
                for k in ki0..j {
                    s -= l[i * w + (i - k)] * tmp[k - k0];
                }
                l[i * w + (i - j)] = s / djj;
            }
        }
        Ldlt { n, bw, l, d: dg }
    }
}

/// Factor `A = L D Lᵀ` with unit lower-banded L.
#[derive(Debug, Clone)]
pub struct Ldlt {
    n: usize,
    bw: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl Ldlt {
    /// Number of negative pivots (= eigenvalues below zero, by Sylvester).
    pub fn negative_count(&self) -> usize {
        self.d.iter().filter(|&&x| x < 0.0).count()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.d.iter().all(|&x| x > 0.0)
    }

    pub fn pivots(&self) -> &[f64] {
        &self.d
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let mut s = x[i];
            for d in 1..=self.bw.min(i) {
                s -= self.l[i * w + d] * x[i - d];
            }
            x[i] = s;
        }
        for i in 0..self.n {
            x[i] /= self.d[i];
        }
        for i in (0..self.n).rev() {
            let xi = x[i];
            for d in 1..=self.bw.min(i) {
                x[i - d] -= self.l[i * w + d] * xi;
            }
        }
    }

    /// Solves `L D^{1/2} y = b`; requires positive pivots.
    pub fn half_solve(&self, b: &[f64]) -> Vec<f64> {
        let w = self.bw + 1;
        let mut x = b.to_vec();
        for i in 0..self.n {
            let mut s = x[i];
            for d in 1..=self.bw.min(i) {
                s -= self.l[i * w + d] * x[i - d];
            }
            x[i] = s;
        }
        for i in 0..self.n {
            x[i] /= self.d[i].sqrt();
        }
        x
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, bw: usize) -> SymBand {
        let mut a = SymBand::zeros(n, bw);
        for i in 0..n {
            a.add(i, i, 4.0 + i as f64 * 0.1);
            for d in 1..=bw.min(i) {
                a.add(i, i - d, ((i * 7 + d * 3) % 5) as f64 * 0.1 - 0.2);
            }
        }
        a
    }

    #[test]
    fn solve_matches_dense() {
        let a = sample(30, 3);
        let b: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let x = a.ldlt().solve(&b);
        let r = a.matvec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn inertia_counts_negative_eigenvalues() {
        let a = sample(25, 2);
        let eig = a.to_dense().symmetric_eigenvalues();
        for &shift in &[0.0, 3.9, 4.5, 5.8, 7.0] {
            let mut s = a.clone();
            for i in 0..25 {
                s.add(i, i, -shift);
            }
            let want = eig.iter().filter(|&&e| e < shift).count();
            assert_eq!(s.ldlt().negative_count(), want, "shift {shift}");
        }
    }

    #[test]
    fn matvec_symmetric() {
        let a = sample(12, 4);
        let d = a.to_dense();
        let x: Vec<f64> = (0..12).map(|i| i as f64 - 3.0).collect();
        let y = a.matvec(&x);
        let yd = &d * nalgebra::DVector::from_column_slice(&x);
        for i in 0..12 {
            assert!((y[i] - yd[i]).abs() < 1e-12);
        }
    }
}
