//! Small fitting routines for convergence and stability reports.

use crate::error::{Error, Result};

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Degenerate(format!("slope fit needs >= 2 paired points, got {}/{}", xs.len(), ys.len())));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Degenerate("slope fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("slope fit with identical abscissae".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Smallest `C` with `err_i ≤ C · modulus(δ_i)` for every record.
pub fn fit_modulus_constant(deltas: &[f64], errs: &[f64], modulus: impl Fn(f64) -> f64) -> Result<f64> {
    if deltas.len() != errs.len() || deltas.is_empty() {
        return Err(Error::Degenerate("modulus fit needs paired, non-empty records".into()));
    }
    if deltas.iter().all(|d| *d == deltas[0]) && deltas.len() > 1 {
        return Err(Error::Degenerate("all perturbation levels are equal".into()));
    }
    let mut c = 0.0f64;
    for (&d, &e) in deltas.iter().zip(errs) {
        let m = modulus(d);
        if e > 0.0 {
            if !(m > 0.0) {
                return Err(Error::Degenerate(format!("modulus vanishes at δ = {d} while the error is {e}")));
            }
            c = c.max(e / m);
        }
    }
    Ok(c)
}

/// Non-negative least squares in two unknowns: `min ‖A c − b‖`, `c ≥ 0`.
pub fn nnls2(a: &[[f64; 2]], b: &[f64]) -> [f64; 2] {
    let cost = |c: [f64; 2]| -> f64 { a.iter().zip(b).map(|(r, y)| (r[0] * c[0] + r[1] * c[1] - y).powi(2)).sum() };
    let (mut s00, mut s01, mut s11, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (r, y) in a.iter().zip(b) {
        s00 += r[0] * r[0];
        s01 += r[0] * r[1];
        s11 += r[1] * r[1];
        r0 += r[0] * y;
        r1 += r[1] * y;
    }
    let mut candidates = vec![[0.0, 0.0]];
    let det = s00 * s11 - s01 * s01;
    if det.abs() > 1e-300 {
        let c = [(s11 * r0 - s01 * r1) / det, (s00 * r1 - s01 * r0) / det];
        if c[0] >= 0.0 && c[1] >= 0.0 {
            candidates.push(c);
        }
    }
    if s00 > 0.0 {
        candidates.push([(r0 / s00).max(0.0), 0.0]);
    }
    if s11 > 0.0 {
        candidates.push([0.0, (r1 / s11).max(0.0)]);
    }
    candidates.into_iter().min_by(|x, y| cost(*x).total_cmp(&cost(*y))).expect("non-empty")
}

/// Fits `y ≈ A·ρ^{−1/4} + B·ρ^{−1}⟨ζ⟩²` with `A, B ≥ 0` in relative least squares.
pub fn fit_envelope(rho: &[f64], zeta_sq: &[f64], y: &[f64]) -> Result<[f64; 2]> {
    if rho.len() != y.len() || zeta_sq.len() != y.len() || y.len() < 2 {
        return Err(Error::Degenerate("envelope fit needs >= 2 records".into()));
    }
    if y.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Degenerate("envelope fit needs positive norms".into()));
    }
    let rows: Vec<[f64; 2]> = rho
        .iter()
        .zip(zeta_sq)
        .zip(y)
        .map(|((r, z), v)| [r.powf(-0.25) / v, (1.0 + z) / r / v])
        .collect();
    Ok(nnls2(&rows, &vec![1.0; y.len()]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.7)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() + 0.7).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn modulus_constant_is_tight() {
        let c = fit_modulus_constant(&[0.1, 0.01], &[0.5 * 0.1f64.sqrt(), 0.025], |d| d.sqrt()).unwrap();
        assert!((c - 0.5).abs() < 1e-12);
        assert!(fit_modulus_constant(&[0.1, 0.1], &[0.2, 0.05], |d| d).is_err());
    }

    #[test]
    fn envelope_recovers_exact_mixture() {
        let rho = [8.0, 16.0, 32.0, 64.0, 8.0, 16.0];
        let z = [0.0, 0.0, 0.0, 0.0, 40.0, 40.0];
        let y: Vec<f64> = rho.iter().zip(&z).map(|(r, z): (&f64, &f64)| 0.3 * r.powf(-0.25) + 0.05 * (1.0 + z) / r).collect();
        let [a, b] = fit_envelope(&rho, &z, &y).unwrap();
        assert!((a - 0.3).abs() < 1e-10 && (b - 0.05).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn nnls_is_nonnegative(rows in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), 2..8)) {
            let a: Vec<[f64; 2]> = rows.iter().map(|r| [r.0, r.1]).collect();
            let b: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let c = nnls2(&a, &b);
            prop_assert!(c[0] >= 0.0 && c[1] >= 0.0);
            let cost = |c: [f64; 2]| -> f64 { a.iter().zip(&b).map(|(r, y)| (r[0]*c[0] + r[1]*c[1] - y).powi(2)).sum() };
            prop_assert!(cost(c) <= cost([0.0, 0.0]) + 1e-9);
        }
    }
}
