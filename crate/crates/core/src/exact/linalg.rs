//! Sparse CSR matrices, ILU(0) and restarted GMRES; nalgebra LU for small systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub data: Vec<f64>,
}

impl Csr {
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.data[r])
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (c, d) = self.row(i);
            *yi = c.iter().zip(d).map(|(&j, &a)| a * x[j as usize]).sum();
        }
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.n + 1];
        for &j in &self.indices {
            counts[j as usize + 1] += 1;
        }
        for i in 0..self.n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut indices = vec![0u32; self.indices.len()];
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.n {
            let (c, d) = self.row(i);
            for (&j, &a) in c.iter().zip(d) {
                let p = next[j as usize];
                indices[p] = i as u32;
                data[p] = a;
                next[j as usize] += 1;
            }
        }
        Csr { n: self.n, indptr: counts, indices, data }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (c, d) = self.row(i);
            for (&j, &a) in c.iter().zip(d) {
                m[(i, j as usize)] += a;
            }
        }
        m
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Incomplete LU with the sparsity of the matrix itself. Rows must have sorted columns and a diagonal entry.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: Csr,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &Csr) -> Result<Self> {
        let mut lu = a.clone();
        let n = a.n;
        let mut diag = vec![usize::MAX; n];
        for (i, d) in diag.iter_mut().enumerate() {
            for p in lu.indptr[i]..lu.indptr[i + 1] {
                if lu.indices[p] as usize == i {
                    *d = p;
                }
            }
            if *d == usize::MAX {
                return Err(Error::Solver(format!("row {i} has no diagonal entry")));
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.indptr[i], lu.indptr[i + 1]);
            for p in start..end {
                pos[lu.indices[p] as usize] = p;
            }
            for p in start..end {
                let k = lu.indices[p] as usize;
                if k >= i {
                    break;
                }
                let pivot = lu.data[diag[k]];
                if pivot == 0.0 {
                    return Err(Error::Solver(format!("zero pivot at row {k}")));
                }
                let f = lu.data[p] / pivot;
                lu.data[p] = f;
                for q in diag[k] + 1..lu.indptr[k + 1] {
                    let j = lu.indices[q] as usize;
                    let t = pos[j];
                    if t != usize::MAX {
                        lu.data[t] -= f * lu.data[q];
                    }
                }
            }
            for p in start..end {
                pos[lu.indices[p] as usize] = usize::MAX;
            }
        }
        Ok(Self { lu, diag })
    }

    /// Solves (LU) z = r in place.
    pub fn apply(&self, z: &mut [f64]) {
        let lu = &self.lu;
        for i in 0..lu.n {
            let mut s = z[i];
            for p in lu.indptr[i]..self.diag[i] {
                s -= lu.data[p] * z[lu.indices[p] as usize];
            }
            z[i] = s;
        }
        for i in (0..lu.n).rev() {
            let mut s = z[i];
            for p in self.diag[i] + 1..lu.indptr[i + 1] {
                s -= lu.data[p] * z[lu.indices[p] as usize];
            }
            z[i] = s / lu.data[self.diag[i]];
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solved {
    pub x: Vec<f64>,
    /// ||b - A x|| / ||b||
    pub residual: f64,
}

pub const TOLERANCE: f64 = 1e-12;

/// Right-preconditioned GMRES(m) with Givens rotations; stops on the true relative residual.
pub fn gmres(a: &Csr, pc: &Ilu0, b: &[f64], restart: usize, max_restarts: usize) -> Solved {
    let n = a.n;
    let bnorm = norm(b).max(f64::MIN_POSITIVE);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut residual = 1.0;
    for _ in 0..max_restarts {
        let beta = norm(&r);
        residual = beta / bnorm;
        if residual < TOLERANCE {
            break;
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k = 0;
        while k < restart {
            z.copy_from_slice(&v[k]);
            pc.apply(&mut z);
            a.matvec(&z, &mut w);
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&w, vi);
                h[i][k] = hij;
                w.iter_mut().zip(vi).for_each(|(wj, vj)| *wj -= hij * vj);
            }
            let hn = norm(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k += 1;
            if g[k].abs() / bnorm < TOLERANCE * 0.1 || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|x| x / hn).collect());
        }
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        z.iter_mut().for_each(|e| *e = 0.0);
        for (yi, vi) in y.iter().zip(&v) {
            z.iter_mut().zip(vi).for_each(|(zj, vj)| *zj += yi * vj);
        }
        pc.apply(&mut z);
        x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi += zi);
        a.matvec(&x, &mut w);
        r.iter_mut().zip(b.iter().zip(&w)).for_each(|(ri, (bi, wi))| *ri = bi - wi);
        residual = norm(&r) / bnorm;
    }
    Solved { x, residual }
}

pub fn dense_solve(a: &Csr, b: &[f64]) -> Result<Solved> {
    let m = a.to_dense();
    let lu = m.lu();
    let x = lu.solve(&DVector::from_column_slice(b)).ok_or_else(|| Error::Solver("singular system".into()))?;
    let x: Vec<f64> = x.iter().copied().collect();
    Ok(Solved { residual: relative_residual(a, &x, b), x })
}

pub fn relative_residual(a: &Csr, x: &[f64], b: &[f64]) -> f64 {
    let mut w = vec![0.0; a.n];
    a.matvec(x, &mut w);
    let r: Vec<f64> = b.iter().zip(&w).map(|(bi, wi)| bi - wi).collect();
    norm(&r) / norm(b).max(f64::MIN_POSITIVE)
}

/// Systems at or below this many unknowns go straight to dense LU.
pub const DENSE_DIRECT: usize = 256;
/// Dense LU is retried up to this size if GMRES stalls.
pub const DENSE_FALLBACK: usize = 4096;
/// Bytes allotted to the Krylov basis.
const KRYLOV_BUDGET: usize = 1 << 30;

/// A matrix with its preconditioner built on first use.
#[derive(Debug, Clone)]
pub struct System {
    pub a: Csr,
    ilu: Option<Ilu0>,
}

impl System {
    pub fn new(a: Csr) -> Self {
        Self { a, ilu: None }
    }

    pub fn solve(&mut self, b: &[f64]) -> Result<Solved> {
        let n = self.a.n;
        if n == 0 {
            return Ok(Solved { x: Vec::new(), residual: 0.0 });
        }
        if norm(b) == 0.0 {
            return Ok(Solved { x: vec![0.0; n], residual: 0.0 });
        }
        if n <= DENSE_DIRECT {
            return dense_solve(&self.a, b);
        }
        if self.ilu.is_none() {
            self.ilu = Some(Ilu0::new(&self.a)?);
        }
        let restart = (KRYLOV_BUDGET / (8 * n)).clamp(10, 60);
        let s = gmres(&self.a, self.ilu.as_ref().expect("built above"), b, restart, 200);
        if s.residual < TOLERANCE {
            return Ok(s);
        }
        if n <= DENSE_FALLBACK {
            let d = dense_solve(&self.a, b)?;
            if d.residual < s.residual {
                return Ok(d);
            }
        }
        if s.residual < 1e-8 {
            // reported through the residual field rather than failed
            return Ok(s);
        }
        Err(Error::Solver(format!("GMRES stalled at relative residual {:.3e} on {n} unknowns", s.residual)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_like(n: usize) -> Csr {
        // diagonally dominant nonsymmetric band
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for i in 0..n {
            for (j, v) in [(i.wrapping_sub(3), -0.7), (i.wrapping_sub(1), -1.0), (i, 4.0), (i + 1, -0.5), (i + 7, -1.2)] {
                if j < n {
                    indices.push(j as u32);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Csr { n, indptr, indices, data }
    }

    #[test]
    fn gmres_matches_dense() {
        let a = laplacian_like(600);
        let b: Vec<f64> = (0..600).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let ilu = Ilu0::new(&a).unwrap();
        let g = gmres(&a, &ilu, &b, 30, 50);
        let d = dense_solve(&a, &b).unwrap();
        assert!(g.residual < TOLERANCE);
        for (x, y) in g.x.iter().zip(&d.x) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn transpose_round_trip() {
        let a = laplacian_like(40);
        let t = a.transpose();
        assert_eq!(t.to_dense(), a.to_dense().transpose());
        assert_eq!(t.transpose().to_dense(), a.to_dense());
    }

    #[test]
    fn ilu_exact_on_tridiagonal() {
        // ILU(0) has no fill to drop on a tridiagonal matrix, so it is an exact solve
        let n = 50;
        let mut indptr = vec![0];
        let (mut indices, mut data) = (Vec::new(), Vec::new());
        for i in 0..n {
            if i > 0 {
                indices.push(i as u32 - 1);
                data.push(-1.0);
            }
            indices.push(i as u32);
            data.push(3.0);
            if i + 1 < n {
                indices.push(i as u32 + 1);
                data.push(-1.5);
            }
            indptr.push(indices.len());
        }
        let a = Csr { n, indptr, indices, data };
        let b = vec![1.0; n];
        let mut z = b.clone();
        Ilu0::new(&a).unwrap().apply(&mut z);
        assert!(relative_residual(&a, &z, &b) < 1e-13);
    }
}
