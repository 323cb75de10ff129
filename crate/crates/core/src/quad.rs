//! Small quadrature helpers: Gauss-Legendre nodes and composite rules.

/// Gauss-Legendre nodes and weights on [-1, 1].
///
/// Nodes are found by Newton iteration on the Legendre polynomial starting
/// from the Chebyshev approximation; accurate to machine precision for the
/// orders used here (n <= 64).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev initial guess for the i-th positive root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence: p1 = P_n(x), dp = P_n'(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre integral of `f` over [a, b] with `nodes_per_unit`
/// nodes applied to each unit-length panel (smooth integrands).
pub fn integrate_composite<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, nodes_per_unit: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let panels = (b - a).ceil().max(1.0) as usize;
    let (xs, ws) = gauss_legendre(nodes_per_unit);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        let mut acc = 0.0;
        for (x, w) in xs.iter().zip(&ws) {
            acc += w * f(mid + half * x);
        }
        total += acc * half;
    }
    total
}

/// Trapezoid rule with `panels` uniform panels.
pub fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / panels as f64;
    let mut acc = 0.5 * (f(a) + f(b));
    for i in 1..panels {
        acc += f(a + i as f64 * h);
    }
    acc * h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_integrates_polynomials_exactly() {
        // 2-node GL is exact through degree 3.
        let (xs, ws) = gauss_legendre(2);
        let val: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(3)).sum();
        assert!(val.abs() < 1e-14);
        let val: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x * x)).sum();
        assert!((val - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn composite_matches_known_integral() {
        let v = integrate_composite(|x| x.exp(), 0.0, 2.0, 16);
        assert!((v - (2f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_converges() {
        let v = trapezoid(|x| x.sin(), 0.0, std::f64::consts::PI, 10_000);
        assert!((v - 2.0).abs() < 1e-7);
    }
}
