//! Dense LU factorization with partial pivoting.

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(n: usize) -> Self {
        Dense { n, data: vec![0.0; n * n] }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }

    pub fn identity(n: usize) -> Self {
        let mut d = Self::zeros(n);
        for i in 0..n {
            d.data[i * n + i] = 1.0;
        }
        d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn matmul(&self, other: &Dense) -> Dense {
        let n = self.n;
        let mut out = Dense::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.at(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.at(k, j);
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.data[i * self.n..(i + 1) * self.n].iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Lu {
    lu: Dense,
    perm: Vec<usize>,
}

/// Returned when a pivot vanishes (relative to the matrix scale).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Singular {
    pub column: usize,
    pub pivot: f64,
}

impl Lu {
    pub fn factor(mut a: Dense) -> Result<Self, Singular> {
        let n = a.n;
        let scale = a.data.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (piv, piv_abs) = (k..n)
                .map(|r| (r, a.at(r, k).abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if piv_abs <= scale * 1e-14 {
                return Err(Singular { column: k, pivot: piv_abs });
            }
            if piv != k {
                for c in 0..n {
                    a.data.swap(k * n + c, piv * n + c);
                }
                perm.swap(k, piv);
            }
            let d = a.at(k, k);
            for r in k + 1..n {
                let factor = a.at(r, k) / d;
                if factor == 0.0 {
                    continue;
                }
                *a.at_mut(r, k) = factor;
                for c in k + 1..n {
                    let v = a.at(k, c);
                    *a.at_mut(r, c) -= factor * v;
                }
            }
        }
        Ok(Lu { lu: a, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu.at(i, j) * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu.at(i, j) * x[j];
            }
            x[i] = s / self.lu.at(i, i);
        }
        x
    }
}

/// `max_i |(A x - b)_i|`
pub fn residual(a: &Dense, x: &[f64], b: &[f64]) -> f64 {
    a.mul_vec(x)
        .iter()
        .zip(b)
        .fold(0.0, |m, (ax, bi)| m.max((ax - bi).abs()))
}
