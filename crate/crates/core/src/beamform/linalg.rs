use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermitianSolveError;

/// Solves `A x = b` for Hermitian positive-definite row-major `A` via
/// `A = L L^H`. Only the lower triangle of `A` is read.
pub fn cholesky_solve(a: &[Complex64], b: &[Complex64]) -> Result<Vec<Complex64>, HermitianSolveError> {
    let m = b.len();
    debug_assert_eq!(a.len(), m * m);
    let mut l = vec![Complex64::new(0.0, 0.0); m * m];
    for j in 0..m {
        let mut d = a[j * m + j].re;
        for k in 0..j {
            d -= l[j * m + k].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(HermitianSolveError);
        }
        let d = d.sqrt();
        l[j * m + j] = Complex64::new(d, 0.0);
        for i in j + 1..m {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k].conj();
            }
            l[i * m + j] = s / d;
        }
    }
    // L y = b
    let mut y = b.to_vec();
    for i in 0..m {
        for k in 0..i {
            y[i] = y[i] - l[i * m + k] * y[k];
        }
        y[i] /= l[i * m + i].re;
    }
    // L^H x = y
    for i in (0..m).rev() {
        for k in i + 1..m {
            y[i] = y[i] - l[k * m + i].conj() * y[k];
        }
        y[i] /= l[i * m + i].re;
    }
    Ok(y)
}
