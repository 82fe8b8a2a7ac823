//! One-dimensional quadrature and spectral differentiation building blocks.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{cos, exp, sinh, cosh, tan};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
///
/// Newton iteration on the three-term recurrence; exact for polynomials of
/// degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess for the i-th largest root.
        let mut x = cos(PI * (i as f64 + 0.75) / (nf + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let (p, pm1) = if n == 0 { (1.0, 0.0) } else { (p1, p0) };
    let d = n as f64 * (x * p - pm1) / (x * x - 1.0);
    (p, d)
}

/// Differentiation matrix of the Lagrange interpolant through `nodes`
/// (row-major, `n x n`). Rows sum to zero exactly by construction of the
/// diagonal, so constants are differentiated to zero.
pub fn lagrange_differentiation(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut bary = vec![1.0; n];
    for j in 0..n {
        for k in 0..n {
            if k != j {
                bary[j] *= nodes[j] - nodes[k];
            }
        }
        bary[j] = 1.0 / bary[j];
    }
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                d[i * n + j] = v;
                diag -= v;
            }
        }
        d[i * n + i] = diag;
    }
    d
}

/// Spectral differentiation matrix for `n` equispaced points on a period of
/// length `2π` (row-major). For even `n` the Nyquist mode is mapped to zero.
pub fn fourier_differentiation(n: usize) -> Vec<f64> {
    let h = 2.0 * PI / n as f64;
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let k = i as isize - j as isize;
            let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let arg = k as f64 * h / 2.0;
            d[i * n + j] = if n.is_multiple_of(2) {
                0.5 * sign / tan(arg)
            } else {
                0.5 * sign / libm::sin(arg)
            };
        }
    }
    d
}

/// Tanh–sinh (double exponential) quadrature of `f` over `[a, b]`.
///
/// Converges to near machine precision for integrands that are analytic in
/// the interior, including algebraic endpoint singularities. The integrand
/// is never evaluated at the endpoints.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mut step = 1.0 / 16.0;
    let t_max = 4.5;
    let mut previous = f64::NAN;
    let mut total = 0.0;
    for level in 0..8 {
        let mut sum = 0.0;
        let mut k: i64 = if level == 0 { 0 } else { 1 };
        let stride: i64 = if level == 0 { 1 } else { 2 };
        loop {
            let t = k as f64 * step;
            if t > t_max {
                break;
            }
            let s = 0.5 * PI * sinh(t);
            let c = cosh(s);
            // 1 - x computed without cancellation.
            let one_minus = 1.0 / (exp(s) * c);
            let w = 0.5 * PI * cosh(t) / (c * c);
            let xr = b - half * one_minus;
            let xl = a + half * one_minus;
            let mut contribution = 0.0;
            if xr < b {
                contribution += f(xr);
            }
            if k != 0 && xl > a {
                contribution += f(xl);
            }
            sum += w * contribution;
            k += stride;
        }
        total = if level == 0 { sum } else { 0.5 * total + sum * step };
        if level == 0 {
            total *= step;
        }
        let estimate = total * half;
        if level >= 3 && (estimate - previous).abs() <= 1e-15 * estimate.abs().max(1e-300) {
            return estimate;
        }
        previous = estimate;
        step *= 0.5;
    }
    previous
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 16, 64] {
            let (x, w) = gauss_legendre(n);
            let deg = 2 * n - 1;
            for p in 0..=deg.min(40) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} p={p} q={q}");
            }
        }
    }

    #[test]
    fn gauss_legendre_nodes_are_sorted_and_interior() {
        let (x, w) = gauss_legendre(33);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
        assert!(x[0] > -1.0 && x[32] < 1.0);
        assert!(w.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn lagrange_derivative_of_polynomial() {
        let (x, _) = gauss_legendre(12);
        let d = lagrange_differentiation(&x);
        let f: Vec<f64> = x.iter().map(|x| x.powi(7) - 3.0 * x * x).collect();
        for i in 0..12 {
            let df: f64 = (0..12).map(|j| d[i * 12 + j] * f[j]).sum();
            let exact = 7.0 * x[i].powi(6) - 6.0 * x[i];
            assert!((df - exact).abs() < 1e-11);
        }
    }

    #[test]
    fn fourier_derivative_of_trig_polynomial() {
        for n in [16usize, 17] {
            let d = fourier_differentiation(n);
            let th: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
            let f: Vec<f64> = th.iter().map(|t| libm::sin(3.0 * t) + cos(*t)).collect();
            for i in 0..n {
                let df: f64 = (0..n).map(|j| d[i * n + j] * f[j]).sum();
                let exact = 3.0 * cos(3.0 * th[i]) - libm::sin(th[i]);
                assert!((df - exact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fourier_derivative_kills_nyquist_for_even_n() {
        let n = 8;
        let d = fourier_differentiation(n);
        for i in 0..n {
            let df: f64 = (0..n).map(|j| d[i * n + j] * if j % 2 == 0 { 1.0 } else { -1.0 }).sum();
            assert!(df.abs() < 1e-13);
        }
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularities() {
        let v = tanh_sinh(|x| libm::pow(1.0 - x, 1.25), 0.0, 1.0);
        assert!((v - 1.0 / 2.25).abs() < 1e-13);
        let v = tanh_sinh(|x| 1.0 / libm::sqrt(x), 0.0, 1.0);
        assert!((v - 2.0).abs() < 1e-10);
    }
}
