//! Real band matrices with an unpivoted LU, used by the implicit time steps.
//!
//! Step matrices are M-matrices whenever the cell Péclet number stays below
//! one, so elimination without pivoting is stable; a vanishing pivot is
//! reported instead of being repaired.

use std::ops::{Div, Mul, Sub};

#[cfg(test)]
use num_complex::Complex64;

#[derive(Clone, Debug)]
pub(crate) struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix { n, bw, data: vec![0.0; n * (2 * bw + 1)] }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.bw >= i && j <= i + self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let p = self.at(i, j);
        self.data[p] += v;
    }

    #[cfg(test)]
    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw + 1).min(self.n);
                (lo..hi).map(|j| x[j] * self.data[self.at(i, j)]).sum()
            })
            .collect()
    }

    /// In-place LU; on failure returns the offending row and pivot.
    pub fn factor(mut self) -> Result<BandLu, (usize, f64)> {
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let hi = (k + bw + 1).min(n);
            let scale = (k..hi).map(|j| self.data[self.at(k, j)].abs()).fold(0.0, f64::max);
            let pivot = self.data[self.at(k, k)];
            if !(pivot.abs() > 1e-13 * scale.max(1e-300)) || !pivot.is_finite() {
                return Err((k, pivot));
            }
            for i in k + 1..hi {
                let pik = self.at(i, k);
                let l = self.data[pik] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.data[pik] = l;
                for j in k + 1..hi {
                    let pij = self.at(i, j);
                    let pkj = self.at(k, j);
                    self.data[pij] -= l * self.data[pkj];
                }
            }
        }
        Ok(BandLu { m: self })
    }
}

#[derive(Clone, Debug)]
pub(crate) struct BandLu {
    m: BandMatrix,
}

impl BandLu {
    pub fn solve_in_place<T>(&self, x: &mut [T])
    where
        T: Copy + Sub<Output = T> + Mul<f64, Output = T> + Div<f64, Output = T>,
    {
        let (n, bw) = (self.m.n, self.m.bw);
        debug_assert_eq!(x.len(), n);
        let d = &self.m.data;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut acc = x[i];
            for j in lo..i {
                acc = acc - x[j] * d[self.m.at(i, j)];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let hi = (i + bw + 1).min(n);
            let mut acc = x[i];
            for j in i + 1..hi {
                acc = acc - x[j] * d[self.m.at(i, j)];
            }
            x[i] = acc / d[self.m.at(i, i)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solves_diagonally_dominant_band_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (n, bw) = (40, 6);
        let mut a = BandMatrix::zeros(n, bw);
        for i in 0..n {
            let mut row = 0.0;
            for j in i.saturating_sub(bw)..(i + bw + 1).min(n) {
                if i != j {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    a.add(i, j, v);
                    row += v.abs();
                }
            }
            a.add(i, i, row + 1.0);
        }
        let x: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, -(i as f64).sqrt())).collect();
        let mut b = a.mul_vec(&x);
        a.clone().factor().unwrap().solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).norm() < 1e-11);
        }
    }

    #[test]
    fn reports_zero_pivot() {
        let mut a = BandMatrix::zeros(3, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 0.0);
        a.add(2, 2, 1.0);
        assert_eq!(a.factor().unwrap_err().0, 1);
    }
}
