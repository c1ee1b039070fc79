use crate::error::{Error, Result};

/// Square matrix with symmetric bandwidth: `A[i][j] == 0` whenever
/// `|i - j| > half_bandwidth`. Row `i` stores the window
/// `[i - hb, i + hb]` densely.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    hb: usize,
    /// row-major, width `2*hb + 1`; entry `(i, k)` holds `A[i, i - hb + k]`
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn new(n: usize, half_bandwidth: usize) -> Self {
        let w = 2 * half_bandwidth + 1;
        Self {
            n,
            hb: half_bandwidth,
            data: vec![0.0; n * w],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.hb
    }

    fn width(&self) -> usize {
        2 * self.hb + 1
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = (i as isize, j as isize);
        let k = j - i + self.hb as isize;
        if j < 0 || j >= self.n as isize || k < 0 || k >= self.width() as isize {
            None
        } else {
            Some(i as usize * self.width() + k as usize)
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.offset(i, j).map_or(0.0, |o| self.data[o])
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let o = self
            .offset(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside band"));
        self.data[o] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let o = self
            .offset(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside band"));
        self.data[o] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let jlo = i.saturating_sub(self.hb);
            let jhi = (i + self.hb).min(self.n - 1);
            let mut s = 0.0;
            for j in jlo..=jhi {
                s += self.data[i * self.width() + (j + self.hb - i)] * x[j];
            }
            y[i] = s;
        }
        y
    }

    /// u^T A v, the contraction used by the per-dimension system builder.
    pub fn quadratic_form(&self, u: &[f64], v: &[f64]) -> f64 {
        let av = self.matvec(v);
        u.iter().zip(&av).map(|(a, b)| a * b).sum()
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                self.data[i * self.width()..(i + 1) * self.width()]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Scale every entry in place.
    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// self + c * other; bandwidths may differ.
    pub fn add_scaled(&mut self, other: &BandedMatrix, c: f64) {
        assert_eq!(self.n, other.n);
        assert!(other.hb <= self.hb, "operand bandwidth exceeds target");
        for i in 0..self.n {
            let jlo = i.saturating_sub(other.hb);
            let jhi = (i + other.hb).min(self.n - 1);
            for j in jlo..=jhi {
                let v = other.get(i, j);
                if v != 0.0 {
                    self.add(i, j, c * v);
                }
            }
        }
    }

    /// Zero row and column `k` and set the diagonal to 1 (Dirichlet
    /// elimination).
    pub fn eliminate_dof(&mut self, k: usize) {
        let jlo = k.saturating_sub(self.hb);
        let jhi = (k + self.hb).min(self.n - 1);
        for j in jlo..=jhi {
            self.set(k, j, 0.0);
            self.set(j, k, 0.0);
        }
        self.set(k, k, 1.0);
    }
}

/// Banded LU factorization with partial pivoting. The upper factor widens to
/// `2*hb` superdiagonals from pivot fill; the factorization is reusable for
/// repeated solves against the same matrix.
pub struct BandedLu {
    n: usize,
    hb: usize,
    /// upper factor, compact rows of width `2*hb + 1`
    au: Vec<f64>,
    /// multipliers, rows of width `hb`
    al: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &BandedMatrix) -> Result<Self> {
        let n = a.n;
        let m1 = a.hb;
        let mm = 2 * m1 + 1;
        let scale = a.norm_inf();
        let tiny = 1e-14 * scale;

        // compact storage au[i][j] = A[i, i - m1 + j], left-shifted so the
        // active row always starts at column 0
        let mut au = a.data.clone();
        let mut l = m1;
        for i in 0..m1.min(n) {
            for j in (m1 - i)..mm {
                au[i * mm + j - l] = au[i * mm + j];
            }
            for j in (mm - l)..mm {
                au[i * mm + j] = 0.0;
            }
            l = l.saturating_sub(1);
        }

        let mut al = vec![0.0; n * m1.max(1)];
        let mut piv = vec![0usize; n];
        let mut l = m1;
        for k in 0..n {
            if l < n {
                l += 1;
            }
            // pivot search within the band
            let mut dum = au[k * mm].abs();
            let mut ip = k;
            for i in k + 1..l {
                if au[i * mm].abs() > dum {
                    dum = au[i * mm].abs();
                    ip = i;
                }
            }
            piv[k] = ip;
            if dum <= tiny || !dum.is_finite() {
                return Err(Error::SingularMatrix { row: k });
            }
            if ip != k {
                for j in 0..mm {
                    au.swap(k * mm + j, ip * mm + j);
                }
            }
            for i in k + 1..l {
                let f = au[i * mm] / au[k * mm];
                al[k * m1.max(1) + (i - k - 1)] = f;
                for j in 1..mm {
                    au[i * mm + j - 1] = au[i * mm + j] - f * au[k * mm + j];
                }
                au[i * mm + mm - 1] = 0.0;
            }
        }
        Ok(Self {
            n,
            hb: m1,
            au,
            al,
            piv,
        })
    }

    pub fn solve(&self, q: &[f64]) -> Vec<f64> {
        assert_eq!(q.len(), self.n);
        let (n, m1) = (self.n, self.hb);
        let mm = 2 * m1 + 1;
        let mut b = q.to_vec();
        let mut l = m1;
        for k in 0..n {
            let ip = self.piv[k];
            if ip != k {
                b.swap(k, ip);
            }
            if l < n {
                l += 1;
            }
            for i in k + 1..l {
                b[i] -= self.al[k * m1.max(1) + (i - k - 1)] * b[k];
            }
        }
        let mut l = 1;
        for i in (0..n).rev() {
            let mut x = b[i];
            for k in 1..l {
                x -= self.au[i * mm + k] * b[k + i];
            }
            b[i] = x / self.au[i * mm];
            if l < mm {
                l += 1;
            }
        }
        b
    }
}

/// One-shot factor-and-solve.
pub fn banded_lu_solve(a: &BandedMatrix, q: &[f64]) -> Result<Vec<f64>> {
    Ok(BandedLu::factor(a)?.solve(q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_solve() {
        let mut a = BandedMatrix::new(5, 1);
        for i in 0..5 {
            a.set(i, i, 1.0);
        }
        let q = vec![3.0, -1.0, 0.5, 2.0, 7.0];
        let x = banded_lu_solve(&a, &q).unwrap();
        assert_eq!(x, q);
    }

    #[test]
    fn poisson_tridiagonal_nodally_exact() {
        // -u'' = 1 on (0,1), u(0) = u(1) = 0: u = x(1-x)/2, and linear FE is
        // nodally exact for this problem.
        let n_el = 16;
        let h = 1.0 / n_el as f64;
        let n = n_el - 1; // interior nodes
        let mut a = BandedMatrix::new(n, 1);
        for i in 0..n {
            a.set(i, i, 2.0 / h);
            if i > 0 {
                a.set(i, i - 1, -1.0 / h);
            }
            if i + 1 < n {
                a.set(i, i + 1, -1.0 / h);
            }
        }
        let q = vec![h; n];
        let x = banded_lu_solve(&a, &q).unwrap();
        for i in 0..n {
            let xi = (i + 1) as f64 * h;
            assert_abs_diff_eq!(x[i], xi * (1.0 - xi) / 2.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_pivot_row_is_singular() {
        let mut a = BandedMatrix::new(4, 1);
        for i in 0..4 {
            a.set(i, i, 1.0);
        }
        a.set(2, 2, 0.0); // row 2 entirely zero
        match banded_lu_solve(&a, &[1.0; 4]) {
            Err(Error::SingularMatrix { .. }) => {}
            other => panic!("expected singular matrix error, got {other:?}"),
        }
    }

    #[test]
    fn matches_dense_lu_on_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n, hb) in &[(10usize, 1usize), (50, 3), (200, 7), (64, 0)] {
            let mut a = BandedMatrix::new(n, hb);
            for i in 0..n {
                for j in i.saturating_sub(hb)..=(i + hb).min(n - 1) {
                    a.set(i, j, rng.gen_range(-1.0..1.0));
                }
                // diagonal boost keeps the system comfortably nonsingular
                a.add(i, i, 2.0 * (hb as f64 + 1.0));
            }
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();

            let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| a.get(i, j));
            let x_ref = dense
                .lu()
                .solve(&nalgebra::DVector::from_column_slice(&q))
                .unwrap();

            let x = banded_lu_solve(&a, &q).unwrap();
            let num: f64 = x
                .iter()
                .zip(x_ref.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let den: f64 = x_ref.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(num / den < 1e-10, "n={n} hb={hb}: rel err {}", num / den);
        }
    }

    #[test]
    fn pivoting_handles_small_leading_entry() {
        let mut a = BandedMatrix::new(3, 1);
        a.set(0, 0, 1e-30);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(1, 1, 1.0);
        a.set(1, 2, 1.0);
        a.set(2, 1, 1.0);
        a.set(2, 2, 3.0);
        let q = vec![1.0, 2.0, 3.0];
        let x = banded_lu_solve(&a, &q).unwrap();
        let ax = a.matvec(&x);
        let scale = a.norm_inf() * x.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 3.0;
        for i in 0..3 {
            assert!((ax[i] - q[i]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn residual_bound_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, hb) = (120, 5);
        let mut a = BandedMatrix::new(n, hb);
        for i in 0..n {
            for j in i.saturating_sub(hb)..=(i + hb).min(n - 1) {
                a.set(i, j, rng.gen_range(-1.0..1.0));
            }
            a.add(i, i, 12.0);
        }
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = banded_lu_solve(&a, &q).unwrap();
        let ax = a.matvec(&x);
        let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let qmax = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bound = 1e-10 * (a.norm_inf() * xmax + qmax);
        for i in 0..n {
            assert!((ax[i] - q[i]).abs() <= bound);
        }
    }

    #[test]
    fn eliminate_dof_matches_manual_reduction() {
        // constrain first and last node of a tridiagonal system; interior
        // solve must match the manually reduced interior system
        let n = 6;
        let mut a = BandedMatrix::new(n, 1);
        for i in 0..n {
            a.set(i, i, 2.0);
            if i > 0 {
                a.set(i, i - 1, -1.0);
            }
            if i + 1 < n {
                a.set(i, i + 1, -1.0);
            }
        }
        let mut q = vec![1.0; n];
        let mut ac = a.clone();
        ac.eliminate_dof(0);
        ac.eliminate_dof(n - 1);
        q[0] = 0.0;
        q[n - 1] = 0.0;
        let x = banded_lu_solve(&ac, &q).unwrap();
        assert_eq!(x[0], 0.0);
        assert_eq!(x[n - 1], 0.0);

        let m = n - 2;
        let mut ai = BandedMatrix::new(m, 1);
        for i in 0..m {
            ai.set(i, i, 2.0);
            if i > 0 {
                ai.set(i, i - 1, -1.0);
            }
            if i + 1 < m {
                ai.set(i, i + 1, -1.0);
            }
        }
        let xi = banded_lu_solve(&ai, &vec![1.0; m]).unwrap();
        for i in 0..m {
            assert_abs_diff_eq!(x[i + 1], xi[i], epsilon = 1e-12);
        }
    }
}
