//! Closed-form kinetic machinery: FENE spring potentials, Maxwellians, the
//! Rouse matrix, the microscopic cut-off functions and the entropy function
//! together with its cut-off and convex regularizations.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{exp, lgamma, log, pow, sqrt};

use crate::linalg::symmetric_eigen;
use crate::quadrature::tanh_sinh;
use crate::{Error, Result};

/// Bead-spring chain: `springs` FENE springs in `dim` space dimensions with
/// per-spring extensibility `b[i]`. Spring `i` lives in the open ball of
/// radius `√b[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainGeometry {
    springs: usize,
    dim: usize,
    b: Vec<f64>,
}

impl ChainGeometry {
    pub fn new(dim: usize, b: Vec<f64>) -> Result<Self> {
        if b.is_empty() {
            return Err(Error::InvalidParameter("a chain needs at least one spring".into()));
        }
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidParameter(format!("dimension must be 2 or 3, got {dim}")));
        }
        for (i, &bi) in b.iter().enumerate() {
            if !(bi > 2.0) || !bi.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "spring {i}: b = {bi}; γ = b/2 must exceed 1"
                )));
            }
        }
        Ok(Self { springs: b.len(), dim, b })
    }

    /// Single spring (dumbbell).
    pub fn dumbbell(dim: usize, b: f64) -> Result<Self> {
        Self::new(dim, vec![b])
    }

    pub fn springs(&self) -> usize {
        self.springs
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Boundary decay exponents `γᵢ = bᵢ/2` of the Maxwellian.
    pub fn decay_exponents(&self) -> Vec<f64> {
        self.b.iter().map(|b| 0.5 * b).collect()
    }
}

/// FENE potential `U(s) = −(b/2) log(1 − 2s/b)` and its derivative
/// `U'(s) = (1 − 2s/b)⁻¹`, for `s = ½|q|² ∈ [0, b/2)`.
pub fn fene_potential(s: f64, b: f64) -> Result<(f64, f64)> {
    if !(b > 2.0) {
        return Err(Error::InvalidParameter(format!("b = {b}; γ = b/2 must exceed 1")));
    }
    if !(0.0..0.5 * b).contains(&s) {
        return Err(Error::Domain { what: "FENE potential argument s = |q|²/2", value: s });
    }
    let x = 1.0 - 2.0 * s / b;
    Ok((-0.5 * b * log(x), 1.0 / x))
}

/// Second derivative `U''(s) = (2/b)(1 − 2s/b)⁻²`.
pub fn fene_potential_second(s: f64, b: f64) -> Result<f64> {
    let (_, up) = fene_potential(s, b)?;
    Ok(2.0 / b * up * up)
}

fn sphere_area(d: usize) -> f64 {
    match d {
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => f64::NAN,
    }
}

/// `Z = ∫_{|q|<√b} (1 − |q|²/b)^{b/2} dq` by double-exponential radial
/// quadrature, cross-checked against the Beta-function closed form.
pub fn maxwellian_normalizer(b: f64, d: usize) -> Result<f64> {
    if !(b > 2.0) {
        return Err(Error::InvalidParameter(format!("b = {b}; γ = b/2 must exceed 1")));
    }
    if d != 2 && d != 3 {
        return Err(Error::InvalidParameter(format!("dimension must be 2 or 3, got {d}")));
    }
    let rmax = sqrt(b);
    let radial = tanh_sinh(
        |r| pow(r, (d - 1) as f64) * pow(1.0 - r * r / b, 0.5 * b),
        0.0,
        rmax,
    );
    let z = sphere_area(d) * radial;
    let half_d = 0.5 * d as f64;
    let beta = exp(lgamma(half_d) + lgamma(0.5 * b + 1.0) - lgamma(half_d + 0.5 * b + 1.0));
    let closed = sphere_area(d) * pow(b, half_d) * 0.5 * beta;
    if ((z - closed) / closed).abs() > 1e-11 {
        return Err(Error::Consistency(format!(
            "Maxwellian normalizer quadrature {z} disagrees with closed form {closed}"
        )));
    }
    Ok(z)
}

/// Normalized single-spring Maxwellian `M(q) = Z⁻¹ exp(−U(½|q|²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maxwellian {
    b: f64,
    dim: usize,
    z: f64,
}

impl Maxwellian {
    pub fn new(b: f64, dim: usize) -> Result<Self> {
        Ok(Self { b, dim, z: maxwellian_normalizer(b, dim)? })
    }

    pub fn normalizer(&self) -> f64 {
        self.z
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Unnormalized value `exp(−U(s)) = (1 − 2s/b)^{b/2}` at `s = ½|q|²`;
    /// zero on and outside the boundary.
    pub fn unnormalized(&self, s: f64) -> f64 {
        let x = 1.0 - 2.0 * s / self.b;
        if x <= 0.0 {
            0.0
        } else {
            pow(x, 0.5 * self.b)
        }
    }

    pub fn eval(&self, q: &[f64]) -> f64 {
        let s = 0.5 * q.iter().map(|v| v * v).sum::<f64>();
        self.unnormalized(s) / self.z
    }

    /// `∇M(q) = −M(q) U'(½|q|²) q`.
    pub fn gradient(&self, q: &[f64]) -> Result<Vec<f64>> {
        let s = 0.5 * q.iter().map(|v| v * v).sum::<f64>();
        let (_, up) = fene_potential(s, self.b)?;
        let m = self.unnormalized(s) / self.z;
        Ok(q.iter().map(|qi| -m * up * qi).collect())
    }
}

/// Product Maxwellian over all springs of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxwellianField {
    factors: Vec<Maxwellian>,
}

impl MaxwellianField {
    pub fn new(geometry: &ChainGeometry) -> Result<Self> {
        let factors = geometry
            .b()
            .iter()
            .map(|&b| Maxwellian::new(b, geometry.dim()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[Maxwellian] {
        &self.factors
    }

    /// `M(q) = ∏ Mᵢ(qᵢ)` with `q` the concatenation of the spring vectors.
    pub fn eval(&self, q: &[f64]) -> f64 {
        let d = self.factors[0].dim();
        self.factors
            .iter()
            .enumerate()
            .map(|(i, m)| m.eval(&q[i * d..(i + 1) * d]))
            .product()
    }
}

/// Symmetric positive definite spring-coupling matrix and its smallest
/// eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct RouseMatrix {
    k: usize,
    a: Vec<f64>,
    a0: f64,
}

impl RouseMatrix {
    /// Row-major `k x k` matrix.
    pub fn new(a: Vec<f64>, k: usize) -> Result<Self> {
        if a.len() != k * k || k == 0 {
            return Err(Error::InvalidParameter(format!(
                "Rouse matrix needs {} entries, got {}",
                k * k,
                a.len()
            )));
        }
        for i in 0..k {
            for j in 0..i {
                if (a[i * k + j] - a[j * k + i]).abs() > 1e-14 * (1.0 + a[i * k + j].abs()) {
                    return Err(Error::InvalidParameter("Rouse matrix must be symmetric".into()));
                }
            }
        }
        let (values, _) = symmetric_eigen(&a, k)?;
        let a0 = values[0];
        if !(a0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Rouse matrix must be positive definite (smallest eigenvalue {a0})"
            )));
        }
        Ok(Self { k, a, a0 })
    }

    /// `[1]` for a dumbbell, `tridiag[−1, 2, −1]` for longer chains.
    pub fn default_for(k: usize) -> Self {
        if k == 1 {
            return Self { k, a: vec![1.0], a0: 1.0 };
        }
        let mut a = vec![0.0; k * k];
        for i in 0..k {
            a[i * k + i] = 2.0;
            if i + 1 < k {
                a[i * k + i + 1] = -1.0;
                a[(i + 1) * k + i] = -1.0;
            }
        }
        let a0 = 2.0 - 2.0 * libm::cos(PI / (k as f64 + 1.0));
        Self { k, a, a0 }
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.k + j]
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }
}

/// Cut-off levels `0 < δ < 1 < L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffParams {
    pub l: f64,
    pub delta: f64,
}

impl CutoffParams {
    pub fn new(l: f64, delta: f64) -> Result<Self> {
        if !(l > 1.0) || !l.is_finite() {
            return Err(Error::InvalidParameter(format!("cut-off L = {l} must exceed 1")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!("δ = {delta} must lie in (0, 1)")));
        }
        Ok(Self { l, delta })
    }
}

/// `β^L(s) = min(s, L)`.
#[inline]
pub fn cutoff_beta(s: f64, l: f64) -> f64 {
    s.min(l)
}

/// `β^L_δ(s) = max(min(s, L), δ)`.
#[inline]
pub fn cutoff_beta_delta(s: f64, l: f64, delta: f64) -> f64 {
    s.min(l).max(delta)
}

/// Which entropy function to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EntropyKind {
    /// `F(s) = s(log s − 1) + 1`, `s ≥ 0`.
    Plain,
    /// Quadratic continuation of `F` above `L`.
    CutOff { l: f64 },
    /// Quadratic continuation below `δ` and above `L`; defined on all of ℝ.
    Regularized { l: f64, delta: f64 },
}

/// Value and first two derivatives of an entropy function. Derivatives at
/// `s = 0` of the unregularized functions are `−∞` and `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyValue {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// `F(s)` with `F(0) = 1`.
#[inline]
pub fn entropy_f(s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        s * (log(s) - 1.0) + 1.0
    }
}

fn quadratic_branch(s: f64, c: f64) -> EntropyValue {
    EntropyValue {
        value: (s * s - c * c) / (2.0 * c) + s * (log(c) - 1.0) + 1.0,
        d1: s / c + log(c) - 1.0,
        d2: 1.0 / c,
    }
}

fn log_branch(s: f64) -> EntropyValue {
    if s == 0.0 {
        EntropyValue { value: 1.0, d1: f64::NEG_INFINITY, d2: f64::INFINITY }
    } else {
        EntropyValue { value: s * (log(s) - 1.0) + 1.0, d1: log(s), d2: 1.0 / s }
    }
}

pub fn entropy_eval(which: EntropyKind, s: f64) -> Result<EntropyValue> {
    if s.is_nan() {
        return Err(Error::NotFinite("entropy argument"));
    }
    match which {
        EntropyKind::Plain => {
            if s < 0.0 {
                return Err(Error::Domain { what: "entropy F argument", value: s });
            }
            Ok(log_branch(s))
        }
        EntropyKind::CutOff { l } => {
            if s < 0.0 {
                return Err(Error::Domain { what: "cut-off entropy argument", value: s });
            }
            Ok(if s <= l { log_branch(s) } else { quadratic_branch(s, l) })
        }
        EntropyKind::Regularized { l, delta } => Ok(if s <= delta {
            quadratic_branch(s, delta)
        } else if s <= l {
            log_branch(s)
        } else {
            quadratic_branch(s, l)
        }),
    }
}

/// Result of the Bakry–Émery check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BakryEmery {
    /// Analytic curvature bound.
    pub kappa: f64,
    /// Smallest Hessian eigenvalue of `−log M` over the sample.
    pub sampled_min: f64,
    pub samples: usize,
}

/// Curvature bound `κ = 1` of `−log M` for FENE springs, confirmed by
/// sampling the Hessian `U'(s) I + U''(s) q qᵀ` over an interior grid of each
/// spring ball (radii up to `0.99 √b`).
pub fn bakry_emery_kappa(geometry: &ChainGeometry, radial: usize, angular: usize) -> Result<BakryEmery> {
    let kappa = 1.0;
    let d = geometry.dim();
    let mut min = f64::INFINITY;
    let mut samples = 0;
    let mut hess = vec![0.0; d * d];
    let polar_count = if d == 3 { angular.div_ceil(2).max(1) } else { 1 };
    for &b in geometry.b() {
        for ir in 0..radial {
            let r = 0.99 * sqrt(b) * ir as f64 / (radial.max(2) - 1) as f64;
            for ia in 0..angular.max(1) {
                let phi = 2.0 * PI * ia as f64 / angular.max(1) as f64;
                for ip in 0..polar_count {
                    let q: Vec<f64> = if d == 2 {
                        vec![r * libm::cos(phi), r * libm::sin(phi)]
                    } else {
                        let th = PI * (ip as f64 + 0.5) / polar_count as f64;
                        vec![
                            r * libm::sin(th) * libm::cos(phi),
                            r * libm::sin(th) * libm::sin(phi),
                            r * libm::cos(th),
                        ]
                    };
                    let s = 0.5 * r * r;
                    let (_, up) = fene_potential(s, b)?;
                    let upp = fene_potential_second(s, b)?;
                    for i in 0..d {
                        for j in 0..d {
                            hess[i * d + j] = upp * q[i] * q[j] + if i == j { up } else { 0.0 };
                        }
                    }
                    let (values, _) = symmetric_eigen(&hess, d)?;
                    min = min.min(values[0]);
                    samples += 1;
                }
            }
        }
    }
    if min < kappa - 1e-12 {
        return Err(Error::Consistency(format!(
            "sampled Hessian eigenvalue {min} below the Bakry–Émery bound {kappa}"
        )));
    }
    Ok(BakryEmery { kappa, sampled_min: min, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let c = 0.5 * (a + b);
        let whole = (b - a) / 6.0 * (f(a) + 4.0 * f(c) + f(b));
        adaptive(f, a, b, whole, tol, depth)
    }

    fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let c = 0.5 * (a + b);
        let l = (c - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + c)) + f(c));
        let r = (b - c) / 6.0 * (f(c) + 4.0 * f(0.5 * (c + b)) + f(b));
        if depth == 0 || (l + r - whole).abs() <= 15.0 * tol {
            l + r + (l + r - whole) / 15.0
        } else {
            adaptive(f, a, c, l, 0.5 * tol, depth - 1) + adaptive(f, c, b, r, 0.5 * tol, depth - 1)
        }
    }

    #[test]
    fn fene_values() {
        assert_eq!(fene_potential(0.0, 4.0).unwrap(), (0.0, 1.0));
        let (u, up) = fene_potential(1.0, 4.0).unwrap();
        assert!((u - 2.0 * core::f64::consts::LN_2).abs() < 1e-15);
        assert!((up - 2.0).abs() < 1e-15);
        let (u, up) = fene_potential(2.0 * (1.0 - 1e-6), 4.0).unwrap();
        assert!((u - 2.0 * log(1e6)).abs() < 1e-8);
        assert!((up - 1e6).abs() < 1e-3);
    }

    #[test]
    fn fene_domain_error() {
        assert!(matches!(fene_potential(2.0, 4.0), Err(Error::Domain { .. })));
        assert!(matches!(fene_potential(-0.1, 4.0), Err(Error::Domain { .. })));
        assert!(fene_potential(0.5, 2.0).is_err());
    }

    #[test]
    fn normalizer_closed_forms() {
        let z4 = maxwellian_normalizer(4.0, 2).unwrap();
        assert!((z4 - 4.0 * PI / 3.0).abs() < 1e-12);
        let z8 = maxwellian_normalizer(8.0, 2).unwrap();
        assert!((z8 - 16.0 * PI / 10.0).abs() < 1e-12);
        for b in [2.5, 3.3, 7.0, 20.0] {
            let z = maxwellian_normalizer(b, 2).unwrap();
            assert!((z - 2.0 * PI * b / (b + 2.0)).abs() < 1e-11 * z);
        }
    }

    #[test]
    fn normalizer_against_adaptive_simpson() {
        for (b, d) in [(4.0, 2usize), (5.5, 2), (4.0, 3), (9.0, 3)] {
            let f = |r: f64| pow(r, (d - 1) as f64) * pow((1.0 - r * r / b).max(0.0), 0.5 * b);
            let oracle = sphere_area(d) * simpson(&f, 0.0, sqrt(b), 1e-13, 40);
            let z = maxwellian_normalizer(b, d).unwrap();
            assert!((z - oracle).abs() < 1e-9 * z, "b={b} d={d}");
        }
    }

    #[test]
    fn maxwellian_at_origin_and_gradient_identity() {
        let m = Maxwellian::new(4.0, 2).unwrap();
        assert!((m.eval(&[0.0, 0.0]) - 1.0 / m.normalizer()).abs() < 1e-15);
        let q = [0.7, -0.4];
        let g = m.gradient(&q).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut qp = q;
            let mut qm = q;
            qp[i] += h;
            qm[i] -= h;
            let fd = (m.eval(&qp) - m.eval(&qm)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn rouse_defaults() {
        let a = RouseMatrix::default_for(1);
        assert_eq!(a.a0(), 1.0);
        let a3 = RouseMatrix::default_for(3);
        let check = RouseMatrix::new((0..9).map(|k| a3.entry(k / 3, k % 3)).collect(), 3).unwrap();
        assert!((check.a0() - a3.a0()).abs() < 1e-14);
        assert!(RouseMatrix::new(vec![1.0, 2.0, 2.0, 1.0], 2).is_err());
        assert!(RouseMatrix::new(vec![1.0, 0.5, 0.4, 1.0], 2).is_err());
    }

    #[test]
    fn geometry_validation() {
        let e = ChainGeometry::dumbbell(2, 2.0).unwrap_err();
        assert!(format!("{e}").contains("γ = b/2 must exceed 1"));
        assert!(ChainGeometry::dumbbell(4, 5.0).is_err());
        assert!(ChainGeometry::new(3, vec![4.0, 6.0]).is_ok());
    }

    #[test]
    fn cutoffs() {
        assert_eq!(cutoff_beta(3.0, 2.0), 2.0);
        assert_eq!(cutoff_beta(0.5, 2.0), 0.5);
        assert_eq!(cutoff_beta(2.0, 2.0), 2.0);
        assert_eq!(cutoff_beta_delta(-1.0, 2.0, 0.1), 0.1);
        assert_eq!(cutoff_beta_delta(0.05, 2.0, 0.1), 0.1);
        assert_eq!(cutoff_beta_delta(3.0, 2.0, 0.1), 2.0);
        assert!(CutoffParams::new(1.0, 0.1).is_err());
        assert!(CutoffParams::new(2.0, 1.0).is_err());
    }

    #[test]
    fn entropy_examples() {
        let f = |s| entropy_eval(EntropyKind::Plain, s).unwrap();
        assert_eq!(f(1.0).value, 0.0);
        assert_eq!(f(0.0).value, 1.0);
        assert!(entropy_eval(EntropyKind::Plain, -0.1).is_err());
        let fl = entropy_eval(EntropyKind::CutOff { l: 2.0 }, 4.0).unwrap();
        assert!((fl.value - 4.0 * core::f64::consts::LN_2).abs() < 1e-14);
        let reg = EntropyKind::Regularized { l: 2.0, delta: 0.1 };
        assert_eq!(entropy_eval(reg, 0.05).unwrap().d2, 10.0);
        assert_eq!(entropy_eval(reg, 0.5).unwrap().d2, 2.0);
        assert_eq!(entropy_eval(reg, 5.0).unwrap().d2, 0.5);
    }

    #[test]
    fn regularized_entropy_is_c1_at_branch_points() {
        let (l, delta) = (3.0, 0.05);
        let reg = EntropyKind::Regularized { l, delta };
        for p in [delta, l] {
            let below = entropy_eval(reg, p * (1.0 - 1e-12)).unwrap();
            let above = entropy_eval(reg, p * (1.0 + 1e-12)).unwrap();
            assert!((below.value - above.value).abs() < 1e-10);
            assert!((below.d1 - above.d1).abs() < 1e-9);
        }
    }

    #[test]
    fn regularized_second_derivative_matches_finite_differences() {
        let reg = EntropyKind::Regularized { l: 2.0, delta: 0.1 };
        let h = 1e-4;
        for k in 0..200 {
            let s = -1.0 + 4.0 * k as f64 / 199.0;
            if (s - 0.1).abs() < 2.0 * h || (s - 2.0).abs() < 2.0 * h {
                continue;
            }
            let fd = (entropy_eval(reg, s + h).unwrap().value - 2.0 * entropy_eval(reg, s).unwrap().value
                + entropy_eval(reg, s - h).unwrap().value)
                / (h * h);
            let exact = entropy_eval(reg, s).unwrap().d2;
            assert!((fd - exact).abs() < 1e-4 * exact.max(1.0), "s={s}");
        }
    }

    #[test]
    fn bakry_emery_for_fene_dumbbell() {
        let g = ChainGeometry::dumbbell(2, 4.0).unwrap();
        let be = bakry_emery_kappa(&g, 20, 16).unwrap();
        assert_eq!(be.kappa, 1.0);
        assert!((be.sampled_min - 1.0).abs() < 1e-14);
        let g3 = ChainGeometry::new(3, vec![4.0, 10.0]).unwrap();
        assert!(bakry_emery_kappa(&g3, 10, 8).unwrap().sampled_min >= 1.0 - 1e-14);
    }

    #[test]
    fn hessian_at_half_extension() {
        let b = 4.0;
        let q = [sqrt(0.5 * b), 0.0];
        let s = 0.5 * (q[0] * q[0]);
        let (_, up) = fene_potential(s, b).unwrap();
        let upp = fene_potential_second(s, b).unwrap();
        let hess = [up + upp * q[0] * q[0], 0.0, 0.0, up];
        let (values, _) = symmetric_eigen(&hess, 2).unwrap();
        assert!((values[0] - 2.0).abs() < 1e-14);
    }
}
