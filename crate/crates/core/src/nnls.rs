//! Small dense nonnegative least squares (Lawson-Hanson active set), used by
//! the initialization to map binned event rates onto basis coefficients. The
//! systems here are tiny (H <= ~20), so a pivoted Gaussian elimination on the
//! normal equations is plenty.

/// Solves `A x = b` for square `A` (row-major) by Gaussian elimination with
/// partial pivoting. Returns `None` when the matrix is numerically singular.
fn solve_dense(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if m[row * n + col].abs() > m[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if m[pivot * n + col].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                m.swap(col * n + j, pivot * n + j);
            }
            rhs.swap(col, pivot);
        }
        let diag = m[col * n + col];
        for row in col + 1..n {
            let f = m[row * n + col] / diag;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[row * n + j] -= f * m[col * n + j];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = rhs[col];
        for j in col + 1..n {
            acc -= m[col * n + j] * x[j];
        }
        x[col] = acc / m[col * n + col];
    }
    Some(x)
}

/// Least-squares solve restricted to the columns in `active`, via the normal
/// equations with a tiny ridge for conditioning.
fn ls_on_active(a: &[f64], b: &[f64], rows: usize, cols: usize, active: &[usize]) -> Vec<f64> {
    let p = active.len();
    let mut ata = vec![0.0; p * p];
    let mut atb = vec![0.0; p];
    for (i, &ci) in active.iter().enumerate() {
        for (j, &cj) in active.iter().enumerate() {
            let mut acc = 0.0;
            for r in 0..rows {
                acc += a[r * cols + ci] * a[r * cols + cj];
            }
            ata[i * p + j] = acc;
        }
        let mut acc = 0.0;
        for r in 0..rows {
            acc += a[r * cols + ci] * b[r];
        }
        atb[i] = acc;
    }
    for i in 0..p {
        ata[i * p + i] += 1e-10;
    }
    solve_dense(&ata, &atb, p).unwrap_or_else(|| vec![0.0; p])
}

/// Lawson-Hanson NNLS: minimizes `||A x - b||` subject to `x >= 0`.
/// `a` is row-major `rows x cols`.
pub fn nnls(a: &[f64], b: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut x = vec![0.0; cols];
    let mut active: Vec<usize> = Vec::new();
    let tol = 1e-10;
    for _outer in 0..(4 * cols + 8) {
        // gradient of the residual: w = A^T (b - A x)
        let mut residual = b.to_vec();
        for r in 0..rows {
            let mut ax = 0.0;
            for c in 0..cols {
                ax += a[r * cols + c] * x[c];
            }
            residual[r] -= ax;
        }
        let mut best: Option<(usize, f64)> = None;
        for c in 0..cols {
            if active.contains(&c) {
                continue;
            }
            let mut wc = 0.0;
            for r in 0..rows {
                wc += a[r * cols + c] * residual[r];
            }
            if wc > tol && best.map_or(true, |(_, bw)| wc > bw) {
                best = Some((c, wc));
            }
        }
        let Some((enter, _)) = best else { break };
        active.push(enter);

        loop {
            let z = ls_on_active(a, b, rows, cols, &active);
            if z.iter().all(|v| *v > tol) {
                x.iter_mut().for_each(|v| *v = 0.0);
                for (i, &c) in active.iter().enumerate() {
                    x[c] = z[i];
                }
                break;
            }
            // step toward z until the first active coordinate hits zero
            let mut alpha = 1.0f64;
            for (i, &c) in active.iter().enumerate() {
                if z[i] <= tol {
                    let denom = x[c] - z[i];
                    if denom > 0.0 {
                        alpha = alpha.min(x[c] / denom);
                    }
                }
            }
            for (i, &c) in active.iter().enumerate() {
                x[c] += alpha * (z[i] - x[c]);
            }
            let retained: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&c| x[c] > tol)
                .collect();
            for &c in &active {
                if !retained.contains(&c) {
                    x[c] = 0.0;
                }
            }
            if retained.len() == active.len() {
                // numerical stall: accept the clipped point
                break;
            }
            active = retained;
            if active.is_empty() {
                break;
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(xs: &[f64], expect: &[f64], tol: f64) {
        for (x, e) in xs.iter().zip(expect) {
            assert!((x - e).abs() < tol, "{xs:?} vs {expect:?}");
        }
    }

    #[test]
    fn interior_solution_matches_unconstrained() {
        // x = (1, 1) solves exactly.
        let a = [2.0, 1.0, 1.0, 2.0];
        let b = [3.0, 3.0];
        assert_close(&nnls(&a, &b, 2, 2), &[1.0, 1.0], 1e-9);
    }

    #[test]
    fn active_constraints_match_reference() {
        // Reference values from an independent solver run before the build.
        let a = [4.0, 2.0, 1.0, 2.0, 4.0, 2.0, 1.0, 2.0, 4.0];
        let b = [1.0, -2.0, 3.0];
        assert_close(&nnls(&a, &b, 3, 3), &[0.0, 0.0, 0.42857142857], 1e-8);

        let a2 = [1.0, 0.5, 0.5, 1.0, 0.2, 0.8];
        let b2 = [1.0, 0.2, 0.1];
        assert_close(&nnls(&a2, &b2, 3, 2), &[0.868217054263566, 0.0], 1e-8);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = [1.0, 0.0, 0.0, 1.0];
        let b = [0.0, 0.0];
        assert_close(&nnls(&a, &b, 2, 2), &[0.0, 0.0], 1e-12);
    }

    #[test]
    fn result_is_nonnegative_and_descends() {
        let a = [1.0, 2.0, 2.0, 1.0, 0.3, 0.9];
        let b = [1.0, -0.5, 0.25];
        let x = nnls(&a, &b, 3, 2);
        assert!(x.iter().all(|v| *v >= 0.0));
        let res = |x: &[f64]| -> f64 {
            (0..3)
                .map(|r| {
                    let ax = a[r * 2] * x[0] + a[r * 2 + 1] * x[1];
                    (b[r] - ax).powi(2)
                })
                .sum()
        };
        assert!(res(&x) <= res(&[0.0, 0.0]) + 1e-12);
    }
}
