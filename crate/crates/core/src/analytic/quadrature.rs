//! Gauss-Legendre rules and composite tensor-product integration.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite rule: `panels` equal sub-intervals of `[a, b]`, each with the
/// given reference rule. Returns flattened points and weights.
pub fn composite(a: f64, b: f64, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> (Vec<f64>, Vec<f64>) {
    let width = (b - a) / panels as f64;
    let mut pts = Vec::with_capacity(panels * rule.0.len());
    let mut wts = Vec::with_capacity(panels * rule.0.len());
    for p in 0..panels {
        let lo = a + p as f64 * width;
        for (x, w) in rule.0.iter().zip(&rule.1) {
            pts.push(lo + 0.5 * width * (x + 1.0));
            wts.push(0.5 * width * w);
        }
    }
    (pts, wts)
}

/// Tensor-product integral of `f` over `[a0, b0] x [a1, b1]`.
pub fn integrate_box(
    f: &dyn Fn(f64, f64) -> f64,
    (a0, b0): (f64, f64),
    (a1, b1): (f64, f64),
    panels: usize,
    rule: &(Vec<f64>, Vec<f64>),
) -> f64 {
    let (x0, w0) = composite(a0, b0, panels, rule);
    let (x1, w1) = composite(a1, b1, panels, rule);
    let mut total = 0.0;
    for (p, wp) in x0.iter().zip(&w0) {
        let mut row = 0.0;
        for (q, wq) in x1.iter().zip(&w1) {
            row += wq * f(*p, *q);
        }
        total += wp * row;
    }
    total
}

/// Doubles the number of panels until two successive estimates differ by
/// less than `tol` (absolute). Returns the last estimate, or the final change
/// if `max_levels` refinements were not enough.
pub fn integrate_box_adaptive(
    f: &dyn Fn(f64, f64) -> f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
    tol: f64,
    max_levels: usize,
) -> Result<f64, (usize, f64)> {
    let rule = gauss_legendre(8);
    let mut panels = 4;
    let mut previous = integrate_box(f, x_range, y_range, panels, &rule);
    let mut change = f64::INFINITY;
    for _ in 0..max_levels {
        panels *= 2;
        let current = integrate_box(f, x_range, y_range, panels, &rule);
        change = (current - previous).abs();
        if change < tol {
            return Ok(current);
        }
        previous = current;
    }
    Err((max_levels, change))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 8, 16, 31] {
            let (_, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14, "n={n}");
        }
    }

    #[test]
    fn exact_for_degree_2n_minus_1() {
        let n = 6;
        let (x, w) = gauss_legendre(n);
        for deg in 0..(2 * n) {
            let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((approx - exact).abs() < 1e-14, "deg {deg}");
        }
    }

    #[test]
    fn gaussian_box_integral() {
        let f = |x: f64, y: f64| (-x * x - y * y).exp();
        let got = integrate_box_adaptive(&f, (-8.0, 8.0), (-8.0, 8.0), 1e-12, 8).unwrap();
        assert!((got - PI).abs() < 1e-12);
    }
}
