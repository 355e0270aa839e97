use super::{CsrMatrix, SolveError};

/// Incomplete LU with zero fill on the pattern of `A`.
///
/// Pivots smaller than `1e-12` times the row scale are replaced by that
/// scale, so saddle-point systems with zero diagonal blocks still yield a
/// usable (if weaker) preconditioner.
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
    values: Vec<f64>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Self {
        let n = a.nrows();
        let mut values = a.values().to_vec();
        let indptr = a.indptr();
        let indices = a.indices();
        // ensure a diagonal slot exists; fall back to a pattern with an added diagonal
        let lu = if (0..n).all(|i| a.get(i, i) != 0.0 || indices[indptr[i]..indptr[i + 1]].contains(&i)) {
            a.clone()
        } else {
            let mut t = a.to_triplets();
            for i in 0..n {
                t.push(i, i, 0.0);
            }
            let c = t.to_csr().expect("finite entries");
            values = c.values().to_vec();
            c
        };
        let indptr = lu.indptr();
        let indices = lu.indices();
        let mut diag = vec![0usize; n];
        for i in 0..n {
            diag[i] = indptr[i] + indices[indptr[i]..indptr[i + 1]].binary_search(&i).expect("diagonal present");
        }
        let scale: Vec<f64> = (0..n)
            .map(|i| values[indptr[i]..indptr[i + 1]].iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300))
            .collect();
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            for p in indptr[i]..indptr[i + 1] {
                pos[indices[p]] = p;
            }
            for p in indptr[i]..diag[i] {
                let k = indices[p];
                let f = values[p] / values[diag[k]];
                values[p] = f;
                for q in diag[k] + 1..indptr[k + 1] {
                    let j = indices[q];
                    if pos[j] != usize::MAX {
                        values[pos[j]] -= f * values[q];
                    }
                }
            }
            if values[diag[i]].abs() < 1e-12 * scale[i] {
                values[diag[i]] = if values[diag[i]] < 0.0 { -scale[i] } else { scale[i] };
            }
            for p in indptr[i]..indptr[i + 1] {
                pos[indices[p]] = usize::MAX;
            }
        }
        Self { lu, diag, values }
    }

    /// Solves `(LU) z = r` in place.
    pub fn apply(&self, z: &mut [f64]) {
        let n = z.len();
        let indptr = self.lu.indptr();
        let indices = self.lu.indices();
        for i in 0..n {
            let mut s = z[i];
            for p in indptr[i]..self.diag[i] {
                s -= self.values[p] * z[indices[p]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for p in self.diag[i] + 1..indptr[i + 1] {
                s -= self.values[p] * z[indices[p]];
            }
            z[i] = s / self.values[self.diag[i]];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Restarted GMRES with ILU(0) right preconditioning.
///
/// Returns the iterate with the smallest true residual seen at a restart
/// boundary, together with the total number of inner iterations.
pub fn gmres(
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<f64>, usize), SolveError> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let m = restart.max(1).min(n.max(1));
    let pre = Ilu0::new(a);
    let mut x = vec![0.0; n];
    let mut best = (x.clone(), 1.0);
    let mut total = 0;
    while total < max_iter {
        let ax = a.spmv(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let beta = norm(&r);
        let rel = beta / bnorm;
        if rel < best.1 {
            best = (x.clone(), rel);
        }
        if rel <= tol {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            total += 1;
            let mut z = basis[k].clone();
            pre.apply(&mut z);
            let mut w = a.spmv(&z);
            for (j, vj) in basis.iter().enumerate() {
                let hj = dot(&w, vj);
                h[j][k] = hj;
                w.iter_mut().zip(vj).for_each(|(wi, vi)| *wi -= hj * vi);
            }
            let wn = norm(&w);
            h[k + 1][k] = wn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            if d == 0.0 {
                return Err(SolveError::Breakdown("zero Hessenberg column".into()));
            }
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() / bnorm <= tol || wn == 0.0 || total >= max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut update = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            update.iter_mut().zip(&basis[j]).for_each(|(u, v)| *u += yj * v);
        }
        pre.apply(&mut update);
        x.iter_mut().zip(&update).for_each(|(xi, ui)| *xi += ui);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SolveError::Breakdown("non-finite iterate".into()));
        }
    }
    let ax = a.spmv(&x);
    let rel = norm(&b.iter().zip(&ax).map(|(p, q)| p - q).collect::<Vec<_>>()) / bnorm;
    if rel < best.1 {
        best = (x, rel);
    }
    Ok((best.0, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::TripletMatrix;

    #[test]
    fn ilu0_is_exact_for_tridiagonal() {
        let n = 20;
        let mut t = TripletMatrix::new(n, n);
        for i in 0..n {
            t.push(i, i, 4.0);
            if i > 0 {
                t.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                t.push(i, i + 1, -2.0);
            }
        }
        let a = t.to_csr().unwrap();
        let b: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut z = b.clone();
        Ilu0::new(&a).apply(&mut z);
        let az = a.spmv(&z);
        for (p, q) in az.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
        let (x, it) = gmres(&a, &b, 1e-12, 10, 100).unwrap();
        assert!(it <= 2);
        assert!(super::super::relative_residual(&a, &x, &b) < 1e-12);
    }

    #[test]
    fn saddle_point_with_zero_block() {
        // [[2, 1], [1, 0]] has a zero diagonal entry
        let mut t = TripletMatrix::new(2, 2);
        t.push(0, 0, 2.0);
        t.push(0, 1, 1.0);
        t.push(1, 0, 1.0);
        let a = t.to_csr().unwrap();
        let (x, _) = gmres(&a, &[3.0, 1.0], 1e-12, 5, 50).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-10 && (x[1] - 1.0).abs() < 1e-10);
    }
}
