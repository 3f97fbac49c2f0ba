//! Classical dynamics of the molecular axis in the field.
//!
//! Units: energies in `ħ²/(2Θ)`, time `τ = t ħ/(2Θ)`, angular momenta in `ħ`.
//! In these units the scaled energy of the axis is
//!
//! ```text
//! e = (θ'² + φ'² sin²θ)/4 - u_d cos θ - u_α cos²θ
//! ```
//!
//! where primes are `d/dτ`. `ε = e/u_α`, and `κ_z = l_z²/u_α` with the
//! conserved `l_z = φ' sin²θ / 2`.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::specfun::{jacobi_elliptic, real_quarter_period};

/// Depths of the permanent-dipole and polarisability potentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalParams {
    pub u_d: f64,
    pub u_alpha: f64,
}

impl ClassicalParams {
    pub fn new(u_d: f64, u_alpha: f64) -> Result<Self> {
        if !(u_d >= 0.0) || !(u_alpha >= 0.0) {
            return Err(Error::domain(format!(
                "potential depths must be non-negative, got u_d = {u_d}, u_alpha = {u_alpha}"
            )));
        }
        Ok(Self { u_d, u_alpha })
    }
}

/// Position and rates of the molecular axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalState {
    pub theta: f64,
    pub phi: f64,
    pub theta_dot: f64,
    pub phi_dot: f64,
}

impl ClassicalState {
    /// Conserved `l_z = φ' sin²θ / 2` in units of ħ.
    pub fn l_z(&self) -> f64 {
        0.5 * self.phi_dot * self.theta.sin().powi(2)
    }

    /// Scaled energy `e`.
    pub fn energy(&self, p: &ClassicalParams) -> f64 {
        let s = self.theta.sin();
        0.25 * (self.theta_dot.powi(2) + (self.phi_dot * s).powi(2))
            + potential_energy(self.theta, p)
    }
}

/// Constants of the elliptic-function solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionConstants {
    pub m_ell: f64,
    pub c_l: f64,
    pub c_u: f64,
    pub omega: f64,
}

/// Which way `cos θ` moves at `τ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `d cos θ/dτ <= 0` at `τ = 0`; the closed form as usually printed.
    CosDecreasing,
    /// `d cos θ/dτ > 0`; evaluated as the mirrored solution `cos θ(-τ)`.
    CosIncreasing,
}

impl Branch {
    pub fn from_state(s: &ClassicalState) -> Self {
        if -s.theta.sin() * s.theta_dot > 0.0 {
            Branch::CosIncreasing
        } else {
            Branch::CosDecreasing
        }
    }
}

/// `V(θ) = -u_d cos θ - u_α cos²θ`.
pub fn potential_energy(theta: f64, p: &ClassicalParams) -> f64 {
    let c = theta.cos();
    -p.u_d * c - p.u_alpha * c * c
}

/// Effective nutation potential `t_z/sin²θ + V(θ)`.
pub fn effective_potential(theta: f64, t_z: f64, p: &ClassicalParams) -> Result<f64> {
    let s2 = theta.sin().powi(2);
    if t_z > 0.0 && s2 < 1e-300 {
        return Err(Error::Singular(format!(
            "centrifugal barrier diverges at theta = {theta} with t_z = {t_z}"
        )));
    }
    let barrier = if t_z == 0.0 { 0.0 } else { t_z / s2 };
    Ok(barrier + potential_energy(theta, p))
}

/// Scaled energy `ε` and `κ_z`, both measured in units of `u_α`.
pub fn conserved_quantities(s: &ClassicalState, p: &ClassicalParams) -> Result<(f64, f64)> {
    if !(p.u_alpha > 0.0) {
        return Err(Error::domain("scaling by u_alpha requires u_alpha > 0"));
    }
    let l_z = s.l_z();
    Ok((s.energy(p) / p.u_alpha, l_z * l_z / p.u_alpha))
}

/// Constants of the closed-form nutation solution (pure polarisability
/// potential, `u_d = 0`).
///
/// The turning points of `cos²θ` are the roots `c_{l,u}` of
/// `c² - (1-ε) c + κ_z - ε = 0`. With them `m = c_u/(c_u - c_l)` and
/// `ω = 2 sqrt(u_α (c_u - c_l))`; for `κ_z = 0` these reduce to
/// `m = 1/(ε+1)` and `ω = 2 sqrt(u_α c_u / m)`.
pub fn solution_constants(epsilon: f64, kappa_z: f64, u_alpha: f64) -> Result<SolutionConstants> {
    if !(u_alpha > 0.0) {
        return Err(Error::domain("solution constants require u_alpha > 0"));
    }
    if !(kappa_z >= 0.0) {
        return Err(Error::domain(format!(
            "kappa_z must be non-negative, got {kappa_z}"
        )));
    }
    if !(epsilon > -1.0) {
        return Err(Error::BelowMinimum(epsilon));
    }
    let discriminant = 0.25 * (1.0 + epsilon).powi(2) - kappa_z;
    if !(discriminant > 0.0) {
        return Err(Error::NoTurningPoint(discriminant));
    }
    let root = discriminant.sqrt();
    let centre = 0.5 * (1.0 - epsilon);
    let c_l = centre - root;
    let c_u = centre + root;
    if !(c_u > 0.0) {
        return Err(Error::NoTurningPoint(discriminant));
    }
    Ok(SolutionConstants {
        m_ell: c_u / (c_u - c_l),
        c_l,
        c_u,
        omega: 2.0 * (u_alpha * (c_u - c_l)).sqrt(),
    })
}

impl SolutionConstants {
    /// Period of `cos θ(τ)`.
    pub fn cos_period(&self) -> f64 {
        let m = self.m_ell;
        let quarter = real_quarter_period(m).unwrap_or(f64::INFINITY);
        if m < 1.0 {
            4.0 * quarter / self.omega
        } else {
            2.0 * quarter / self.omega
        }
    }

    /// Period of the axis motion. When `κ_z = 0` and the motion is bounded
    /// (`m > 1`) the axis swings through the pole and back, which takes two
    /// periods of `cos θ`.
    pub fn nutation_period(&self, kappa_z: f64) -> f64 {
        if kappa_z == 0.0 && self.m_ell > 1.0 {
            2.0 * self.cos_period()
        } else {
            self.cos_period()
        }
    }
}

const BRACKET_TOLERANCE: f64 = 1e-10;

/// Closed-form `cos θ(τ)` on the [`Branch::CosDecreasing`] branch.
pub fn costheta_analytic(t: f64, theta0: f64, sc: &SolutionConstants) -> Result<f64> {
    costheta_analytic_branch(t, theta0, sc, Branch::CosDecreasing)
}

/// Closed-form `cos θ(τ)` on either branch.
pub fn costheta_analytic_branch(
    t: f64,
    theta0: f64,
    sc: &SolutionConstants,
    branch: Branch,
) -> Result<f64> {
    let c0 = theta0.cos();
    let c0_sq = c0 * c0;
    let below = c0_sq - sc.c_l;
    let above = sc.c_u - c0_sq;
    if below < -BRACKET_TOLERANCE || above < -BRACKET_TOLERANCE {
        return Err(Error::domain(format!(
            "cos^2(theta0) = {c0_sq} lies outside the turning points [{}, {}]",
            sc.c_l, sc.c_u
        )));
    }
    let below = below.max(0.0);
    let above = above.max(0.0);
    let t = match branch {
        Branch::CosDecreasing => t,
        Branch::CosIncreasing => -t,
    };
    let f = jacobi_elliptic(sc.omega * t, sc.m_ell)?;
    let ratio = sc.m_ell / sc.c_u;
    let numerator = c0 * f.cn - (below * above * ratio).sqrt() * f.sn * f.dn;
    let denominator = 1.0 - above * f.sn * f.sn * ratio;
    Ok((numerator / denominator).clamp(-1.0, 1.0))
}

/// Angular momentum of the axis in units of ħ:
/// `L = ½ (θ' cos φ - φ' sinθ cosθ sin φ, θ' sin φ + φ' sinθ cosθ cos φ, φ' sin²θ)`.
pub fn lab_angular_momentum(s: &ClassicalState) -> [f64; 3] {
    let (sin_t, cos_t) = s.theta.sin_cos();
    let (sin_p, cos_p) = s.phi.sin_cos();
    let mixed = s.phi_dot * sin_t * cos_t;
    [
        0.5 * (s.theta_dot * cos_p - mixed * sin_p),
        0.5 * (s.theta_dot * sin_p + mixed * cos_p),
        0.5 * s.phi_dot * sin_t * sin_t,
    ]
}

/// Step used by [`integrate_ode`] when none is given: one thousandth of
/// `2π/ω`, with `ω` from the closed-form solution when it applies and from
/// the free-rotation rate `2 sqrt(e + u_d + u_α)` otherwise. Orbits with
/// `l_z != 0` also resolve the precession rate near the barrier.
pub fn default_step(s0: &ClassicalState, p: &ClassicalParams) -> f64 {
    let omega = if p.u_d == 0.0 && p.u_alpha > 0.0 {
        conserved_quantities(s0, p)
            .and_then(|(eps, kappa)| solution_constants(eps, kappa, p.u_alpha))
            .map(|sc| sc.omega)
            .ok()
    } else {
        None
    };
    let scale = s0.energy(p).max(0.0) + p.u_d + p.u_alpha;
    let mut omega = omega.unwrap_or_else(|| 2.0 * scale.sqrt());
    let l_z = s0.l_z().abs();
    if l_z > 0.0 {
        // Fastest precession, reached at the inner turning point of the
        // centrifugal barrier.
        omega = omega.max(2.0 * scale / l_z);
    }
    if omega > 0.0 {
        1e-3 * TAU / omega
    } else {
        1e-3
    }
}

/// Fixed-step RK4 solution sampled on `t_grid` with the default step.
pub fn integrate_ode(
    s0: &ClassicalState,
    p: &ClassicalParams,
    t_grid: &[f64],
) -> Result<Vec<ClassicalState>> {
    integrate_ode_with_step(s0, p, t_grid, default_step(s0, p))
}

/// Fixed-step RK4 solution of the Lagrange equations sampled on `t_grid`;
/// `s0` is the state at `t_grid[0]`. Each grid interval is split into equal
/// substeps no longer than `max_step`.
///
/// With `l_z = 0` the axis moves on a great circle; the polar angle is
/// integrated unfolded and mapped back into `[0, π]` for output, which turns
/// each pass through a pole into `φ -> φ + π` and a sign flip of `θ'`. With
/// `l_z != 0` the centrifugal barrier keeps `θ` inside `(0, π)`; a step that
/// leaves it is reported as singular.
pub fn integrate_ode_with_step(
    s0: &ClassicalState,
    p: &ClassicalParams,
    t_grid: &[f64],
    max_step: f64,
) -> Result<Vec<ClassicalState>> {
    if !(max_step > 0.0) {
        return Err(Error::domain(format!(
            "step must be positive, got {max_step}"
        )));
    }
    if t_grid.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::domain("time grid must be non-decreasing"));
    }
    let l_z = s0.l_z();
    if l_z != 0.0 && !(s0.theta > 0.0 && s0.theta < PI) {
        return Err(Error::Singular(format!(
            "initial theta = {} sits on the centrifugal singularity",
            s0.theta
        )));
    }

    let rhs = |y: [f64; 3]| -> [f64; 3] {
        let (s, c) = y[0].sin_cos();
        let mut accel = -2.0 * (p.u_d * s + 2.0 * p.u_alpha * s * c);
        let mut phi_rate = 0.0;
        if l_z != 0.0 {
            accel += 4.0 * l_z * l_z * c / (s * s * s);
            phi_rate = 2.0 * l_z / (s * s);
        }
        [y[1], accel, phi_rate]
    };

    let mut y = [s0.theta, s0.theta_dot, s0.phi];
    let mut out = Vec::with_capacity(t_grid.len());
    let Some(&first) = t_grid.first() else {
        return Ok(out);
    };
    out.push(*s0);
    let mut t = first;
    for &target in &t_grid[1..] {
        let span = target - t;
        let n = (span / max_step).ceil().max(1.0) as usize;
        let h = span / n as f64;
        for _ in 0..n {
            y = rk4_step(&rhs, y, h);
            if l_z != 0.0 && !(y[0] > 0.0 && y[0] < PI) {
                return Err(Error::Singular(format!(
                    "step crossed a pole near tau = {t}; reduce the step size"
                )));
            }
        }
        t = target;
        out.push(if l_z == 0.0 {
            fold_great_circle(y)
        } else {
            ClassicalState {
                theta: y[0],
                phi: y[2],
                theta_dot: y[1],
                phi_dot: 2.0 * l_z / y[0].sin().powi(2),
            }
        });
    }
    Ok(out)
}

fn fold_great_circle(y: [f64; 3]) -> ClassicalState {
    let wrapped = y[0].rem_euclid(TAU);
    if wrapped <= PI {
        ClassicalState {
            theta: wrapped,
            phi: y[2],
            theta_dot: y[1],
            phi_dot: 0.0,
        }
    } else {
        ClassicalState {
            theta: TAU - wrapped,
            phi: y[2] + PI,
            theta_dot: -y[1],
            phi_dot: 0.0,
        }
    }
}

fn rk4_step(f: &impl Fn([f64; 3]) -> [f64; 3], y: [f64; 3], h: f64) -> [f64; 3] {
    let add =
        |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
    let k1 = f(y);
    let k2 = f(add(y, k1, 0.5 * h));
    let k3 = f(add(y, k2, 0.5 * h));
    let k4 = f(add(y, k3, h));
    let mut next = y;
    for i in 0..3 {
        next[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    next
}
