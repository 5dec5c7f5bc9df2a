//! Banded LU factorization with partial pivoting.
//!
//! Row `i` keeps columns `i − kl ..= i + kl + ku`; the extra `kl` upper
//! diagonals absorb fill-in from row interchanges.

use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<C64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![ZERO; n * width],
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        if j + self.kl < i || j > i + self.kl + self.ku {
            ZERO
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Sets an entry inside the original band.
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "entry ({i},{j}) outside band");
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    pub fn clear_row(&mut self, i: usize) {
        let start = i * self.width;
        self.data[start..start + self.width].fill(ZERO);
    }

    /// Factorizes in place. Returns `None` when an exactly zero pivot column
    /// is met.
    pub fn factorize(mut self) -> Option<BandLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut piv = vec![0usize; n];
        let mut scratch = vec![ZERO; kl + ku + 1];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).norm();
            for r in k + 1..=last {
                let v = self.get(r, k).norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return None;
            }
            piv[k] = p;
            let hi = (k + kl + ku).min(n - 1);
            if p != k {
                for (off, j) in (k..=hi).enumerate() {
                    scratch[off] = self.get(k, j);
                }
                for j in k..=hi {
                    let v = self.get(p, j);
                    let s = self.slot(k, j);
                    self.data[s] = v;
                }
                for (off, j) in (k..=hi).enumerate() {
                    let s = self.slot(p, j);
                    self.data[s] = scratch[off];
                }
            }
            let inv = self.get(k, k).inv();
            let k_start = self.slot(k, k);
            for r in k + 1..=last {
                let sr = self.slot(r, k);
                let lead = self.data[sr];
                if lead == ZERO {
                    continue;
                }
                let f = lead * inv;
                self.data[sr] = f;
                let r_start = sr;
                let len = hi - k;
                let (head, tail) = self.data.split_at_mut(r_start);
                let pivot_row = &head[k_start + 1..k_start + 1 + len];
                let target = &mut tail[1..1 + len];
                for (t, &u) in target.iter_mut().zip(pivot_row) {
                    *t -= f * u;
                }
            }
        }
        Some(BandLu { m: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [C64]) {
        let a = &self.m;
        let (n, kl, ku) = (a.n, a.kl, a.ku);
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk == ZERO {
                continue;
            }
            for r in k + 1..=(k + kl).min(n - 1) {
                b[r] -= a.get(r, k) * bk;
            }
        }
        for k in (0..n).rev() {
            let hi = (k + kl + ku).min(n - 1);
            let mut acc = b[k];
            let base = a.slot(k, k);
            for (off, j) in (k + 1..=hi).enumerate() {
                acc -= a.data[base + 1 + off] * b[j];
            }
            b[k] = acc / a.data[base];
        }
    }

}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> (BandMatrix, DMatrix<C64>) {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut band = BandMatrix::zeros(n, kl, ku);
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                // weak diagonal forces pivoting
                let v = C64::new(next(), next()) * if i == j { 0.01 } else { 1.0 };
                band.set(i, j, v);
                dense[(i, j)] = v;
            }
        }
        (band, dense)
    }

    #[test]
    fn solves_against_dense() {
        for &(n, kl, ku) in &[(1, 0, 0), (7, 2, 1), (30, 4, 4), (50, 6, 3)] {
            let (band, dense) = random_band(n, kl, ku, 17 + n as u64);
            let x_true: Vec<C64> = (0..n).map(|i| C64::new(i as f64 + 1.0, -(i as f64))).collect();
            let b = &dense * nalgebra::DVector::from_vec(x_true.clone());
            let lu = band.factorize().expect("nonsingular");
            let mut x = b.as_slice().to_vec();
            lu.solve_in_place(&mut x);
            for (u, v) in x.iter().zip(&x_true) {
                assert!((u - v).norm() < 1e-8 * (1.0 + v.norm()), "n={n}: {u} vs {v}");
            }
        }
    }

    #[test]
    fn zero_column_detected() {
        let band = BandMatrix::zeros(4, 1, 1);
        assert!(band.factorize().is_none());
    }
}
