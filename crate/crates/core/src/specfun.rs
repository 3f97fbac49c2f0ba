//! Special functions: complete elliptic integral of the first kind, Jacobi
//! elliptic functions, Wigner 3j symbols, normalized associated Legendre
//! functions, spherical harmonics and Gauss-Legendre nodes.
//!
//! Everything here is pure and allocation-light so it can be called from any
//! number of threads.

use std::f64::consts::PI;
use std::sync::LazyLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Values of `sn`, `cn` and `dn` at one argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticTriple {
    pub sn: f64,
    pub cn: f64,
    pub dn: f64,
}

/// Arithmetic-geometric mean of two non-negative numbers.
fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        if (a - b).abs() <= f64::EPSILON * a {
            break;
        }
        let next = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = next;
    }
    0.5 * (a + b)
}

/// Complete elliptic integral of the first kind `K(m)`, parameter convention
/// (`m = k^2`). Computed from `K = pi / (2 agm(1, sqrt(1 - m)))`.
pub fn complete_elliptic_k(m: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&m) {
        return Err(Error::domain(format!(
            "K(m) requires 0 <= m < 1, got m = {m}"
        )));
    }
    Ok(PI / (2.0 * agm(1.0, (1.0 - m).sqrt())))
}

/// Jacobi elliptic functions `sn(u|m)`, `cn(u|m)`, `dn(u|m)` for any `m >= 0`.
///
/// `0 < m < 1` uses the descending Landen / AGM scheme. `m > 1` is mapped onto
/// `1/m` with the reciprocal-modulus transformation
/// `sn(u|m) = sn(u sqrt(m)|1/m)/sqrt(m)`, `cn(u|m) = dn(u sqrt(m)|1/m)`,
/// `dn(u|m) = cn(u sqrt(m)|1/m)`.
pub fn jacobi_elliptic(u: f64, m: f64) -> Result<EllipticTriple> {
    if !(m >= 0.0) || !u.is_finite() || !m.is_finite() {
        return Err(Error::domain(format!(
            "jacobi_elliptic requires finite u and m >= 0, got u = {u}, m = {m}"
        )));
    }
    if m > 1.0 {
        let root = m.sqrt();
        let inner = jacobi_unit_interval(u * root, 1.0 / m);
        return Ok(EllipticTriple {
            sn: inner.sn / root,
            cn: inner.dn,
            dn: inner.cn,
        });
    }
    Ok(jacobi_unit_interval(u, m))
}

fn jacobi_unit_interval(u: f64, m: f64) -> EllipticTriple {
    if m < 1e-300 {
        let (s, c) = u.sin_cos();
        return EllipticTriple {
            sn: s,
            cn: c,
            dn: 1.0,
        };
    }
    if m == 1.0 {
        let sech = 1.0 / u.cosh();
        return EllipticTriple {
            sn: u.tanh(),
            cn: sech,
            dn: sech,
        };
    }

    const MAX_LEVELS: usize = 32;
    let mut a = [0.0; MAX_LEVELS + 1];
    let mut c = [0.0; MAX_LEVELS + 1];
    a[0] = 1.0;
    c[0] = m.sqrt();
    let mut b = (1.0 - m).sqrt();
    let mut n = 0;
    while n < MAX_LEVELS && c[n].abs() > f64::EPSILON * a[n] {
        a[n + 1] = 0.5 * (a[n] + b);
        c[n + 1] = 0.5 * (a[n] - b);
        b = (a[n] * b).sqrt();
        n += 1;
    }

    let mut phi = (1u64 << n) as f64 * a[n] * u;
    for level in (1..=n).rev() {
        phi = 0.5 * (phi + (c[level] / a[level] * phi.sin()).asin());
    }
    let (sn, cn) = phi.sin_cos();
    // dn² = (1-m) + m cn² has no cancellation; the usual ratio
    // cos φ_0 / cos(φ_1 - φ_0) is 0/0 at odd multiples of K.
    let dn = ((1.0 - m) + m * cn * cn).sqrt();
    EllipticTriple { sn, cn, dn }
}

const LN_FACTORIAL_LEN: usize = 4096;

static LN_FACTORIAL: LazyLock<Vec<f64>> = LazyLock::new(|| {
    let mut table = Vec::with_capacity(LN_FACTORIAL_LEN);
    table.push(0.0);
    let mut acc = 0.0;
    for k in 1..LN_FACTORIAL_LEN {
        acc += (k as f64).ln();
        table.push(acc);
    }
    table
});

fn ln_factorial(n: i64) -> f64 {
    LN_FACTORIAL[n as usize]
}

/// Wigner 3j symbol for half-integer arguments given as real numbers.
///
/// Out-of-domain combinations (triangle rule, `m1 + m2 + m3 != 0`,
/// `|m_i| > j_i`) evaluate to exactly zero. Arguments that are not multiples
/// of one half are a domain error.
pub fn wigner_3j(j1: f64, j2: f64, j3: f64, m1: f64, m2: f64, m3: f64) -> Result<f64> {
    let mut doubled = [0i64; 6];
    for (slot, value) in doubled.iter_mut().zip([j1, j2, j3, m1, m2, m3]) {
        let twice = 2.0 * value;
        if !twice.is_finite() || (twice - twice.round()).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "3j arguments must be half-integers, got {value}"
            )));
        }
        *slot = twice.round() as i64;
    }
    let [a, b, c, d, e, f] = doubled;
    Ok(wigner_3j_doubled(a, b, c, d, e, f))
}

/// Wigner 3j symbol with doubled quantum numbers (`two_j = 2 j`).
///
/// Racah's closed-form sum, each term assembled in log space.
pub fn wigner_3j_doubled(
    two_j1: i64,
    two_j2: i64,
    two_j3: i64,
    two_m1: i64,
    two_m2: i64,
    two_m3: i64,
) -> f64 {
    if two_j1 < 0 || two_j2 < 0 || two_j3 < 0 {
        return 0.0;
    }
    if two_m1 + two_m2 + two_m3 != 0 {
        return 0.0;
    }
    if two_m1.abs() > two_j1 || two_m2.abs() > two_j2 || two_m3.abs() > two_j3 {
        return 0.0;
    }
    if (two_j1 + two_m1) % 2 != 0 || (two_j2 + two_m2) % 2 != 0 || (two_j3 + two_m3) % 2 != 0 {
        return 0.0;
    }
    if (two_j1 + two_j2 + two_j3) % 2 != 0 {
        return 0.0;
    }
    if two_j3 > two_j1 + two_j2 || two_j3 < (two_j1 - two_j2).abs() {
        return 0.0;
    }
    if (two_j1 + two_j2 + two_j3) / 2 + 1 >= LN_FACTORIAL_LEN as i64 {
        // Far beyond any basis this crate builds; treat as unsupported.
        return f64::NAN;
    }

    // Integer combinations used by the Racah formula.
    let j1_j2_j3 = (two_j1 + two_j2 - two_j3) / 2;
    let j1_mj2_j3 = (two_j1 - two_j2 + two_j3) / 2;
    let mj1_j2_j3 = (-two_j1 + two_j2 + two_j3) / 2;
    let total = (two_j1 + two_j2 + two_j3) / 2;
    let j1_p_m1 = (two_j1 + two_m1) / 2;
    let j1_m_m1 = (two_j1 - two_m1) / 2;
    let j2_p_m2 = (two_j2 + two_m2) / 2;
    let j2_m_m2 = (two_j2 - two_m2) / 2;
    let j3_p_m3 = (two_j3 + two_m3) / 2;
    let j3_m_m3 = (two_j3 - two_m3) / 2;

    let ln_prefactor = 0.5
        * (ln_factorial(j1_j2_j3) + ln_factorial(j1_mj2_j3) + ln_factorial(mj1_j2_j3)
            - ln_factorial(total + 1)
            + ln_factorial(j1_p_m1)
            + ln_factorial(j1_m_m1)
            + ln_factorial(j2_p_m2)
            + ln_factorial(j2_m_m2)
            + ln_factorial(j3_p_m3)
            + ln_factorial(j3_m_m3));

    // Denominator arguments: k, j3-j2+k+m1, j3-j1+k-m2, j1+j2-j3-k, j1-k-m1, j2-k+m2.
    let shift_a = (two_j3 - two_j2 + two_m1) / 2;
    let shift_b = (two_j3 - two_j1 - two_m2) / 2;
    let k_min = 0.max(-shift_a).max(-shift_b);
    let k_max = j1_j2_j3.min(j1_m_m1).min(j2_p_m2);

    let mut sum = 0.0;
    for k in k_min..=k_max {
        let ln_term = ln_prefactor
            - ln_factorial(k)
            - ln_factorial(shift_a + k)
            - ln_factorial(shift_b + k)
            - ln_factorial(j1_j2_j3 - k)
            - ln_factorial(j1_m_m1 - k)
            - ln_factorial(j2_p_m2 - k);
        let term = ln_term.exp();
        sum += if k % 2 == 0 { term } else { -term };
    }

    // Overall phase (-1)^(j1 - j2 - m3).
    let phase_exponent = (two_j1 - two_j2 - two_m3) / 2;
    if phase_exponent.rem_euclid(2) == 0 {
        sum
    } else {
        -sum
    }
}

/// Table of orthonormal associated Legendre functions
/// `P̄_l^m(cos θ) = sqrt((2l+1)/(4π) (l-m)!/(l+m)!) P_l^m(cos θ)` for
/// `0 <= m <= l <= l_max`, Condon-Shortley phase included.
///
/// Built column by column with the standard three-term recurrence, which stays
/// well scaled far beyond the degrees this crate needs.
#[derive(Debug, Clone)]
pub struct LegendreTable {
    l_max: usize,
    values: Vec<f64>,
}

impl LegendreTable {
    pub fn new(l_max: usize, theta: f64) -> Self {
        let (s, x) = theta.sin_cos();
        let mut values = vec![0.0; (l_max + 1) * (l_max + 2) / 2];
        let index = |l: usize, m: usize| l * (l + 1) / 2 + m;

        let mut diagonal = 1.0 / (4.0 * PI).sqrt();
        for m in 0..=l_max {
            if m > 0 {
                diagonal *= -((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
            }
            values[index(m, m)] = diagonal;
            if m < l_max {
                values[index(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * x * diagonal;
            }
            for l in (m + 2)..=l_max {
                let lf = l as f64;
                let mf = m as f64;
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let lp = lf - 1.0;
                let b = ((lp * lp - mf * mf) / (4.0 * lp * lp - 1.0)).sqrt();
                values[index(l, m)] =
                    a * (x * values[index(l - 1, m)] - b * values[index(l - 2, m)]);
            }
        }
        Self { l_max, values }
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// `P̄_l^{|m|}` for `|m| <= l <= l_max`.
    pub fn get(&self, l: usize, m: usize) -> f64 {
        debug_assert!(m <= l && l <= self.l_max);
        self.values[l * (l + 1) / 2 + m]
    }
}

/// Spherical harmonic `Y_sm(θ, φ)` with the Condon-Shortley phase.
pub fn spherical_harmonic(s: u32, m: i32, theta: f64, phi: f64) -> Result<Complex64> {
    if m.unsigned_abs() > s {
        return Err(Error::domain(format!("|m| = {} exceeds s = {s}", m.abs())));
    }
    let table = LegendreTable::new(s as usize, theta);
    Ok(spherical_harmonic_from(&table, s as usize, m, phi))
}

/// `Y_sm` evaluated from a precomputed Legendre table at the same θ.
pub fn spherical_harmonic_from(table: &LegendreTable, s: usize, m: i32, phi: f64) -> Complex64 {
    let abs_m = m.unsigned_abs() as usize;
    let positive = Complex64::from_polar(table.get(s, abs_m), abs_m as f64 * phi);
    if m >= 0 {
        positive
    } else if abs_m.is_multiple_of(2) {
        positive.conj()
    } else {
        -positive.conj()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes in descending order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut derivative = 1.0;
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            derivative = dp;
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                let (_, dp) = legendre_with_derivative(n, x);
                derivative = dp;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * derivative * derivative);
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
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
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Quarter period helper used by the classical solution: `K(m)` for `m < 1`,
/// and the real quarter period `K(1/m)/sqrt(m)` for `m > 1`.
pub(crate) fn real_quarter_period(m: f64) -> Result<f64> {
    if m < 1.0 {
        complete_elliptic_k(m)
    } else if m > 1.0 {
        Ok(complete_elliptic_k(1.0 / m)? / m.sqrt())
    } else {
        Err(Error::domain("quarter period diverges at m = 1"))
    }
}
