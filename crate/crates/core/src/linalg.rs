//! Small dense linear algebra: row-major LU with partial pivoting.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Singular;

#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    a: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    /// Factor an `n`×`n` row-major matrix in place.
    pub fn factor(mut a: Vec<f64>, n: usize) -> Result<Lu, Singular> {
        assert_eq!(a.len(), n * n);
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let tiny = 1e-13 * scale;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) =
                (k..n)
                    .map(|i| (i, a[i * n + k].abs()))
                    .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= tiny {
                return Err(Singular);
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let d = a[k * n + k];
            for i in (k + 1)..n {
                let f = a[i * n + k] / d;
                if f == 0.0 {
                    continue;
                }
                a[i * n + k] = f;
                let (upper, lower) = a.split_at_mut(i * n);
                let row_k = &upper[k * n + k + 1..k * n + n];
                let row_i = &mut lower[k + 1..n];
                for (x, &y) in row_i.iter_mut().zip(row_k) {
                    *x -= f * y;
                }
            }
        }
        Ok(Lu { n, a, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.a[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.a[i * n + i + 1..i * n + n];
            let s: f64 = row.iter().zip(&x[i + 1..]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / self.a[i * n + i];
        }
        x
    }

    /// Solve `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ z = b, Lᵀ w = z, x = Pᵀ w
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.a[k * n + i] * z[k];
            }
            z[i] = s / self.a[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s -= self.a[k * n + i] * z[k];
            }
            z[i] = s;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = z[i];
        }
        x
    }
}

/// Solve a dense system once.
pub fn solve(a: Vec<f64>, n: usize, b: &[f64]) -> Result<Vec<f64>, Singular> {
    Ok(Lu::factor(a, n)?.solve(b))
}
