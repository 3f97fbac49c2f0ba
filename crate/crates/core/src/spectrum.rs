//! Energy levels of the rotor dressed by the `-u cos²θ` potential.
//!
//! Eigenvalues are obtained by diagonalising fixed-`m` blocks of `T + V` in
//! the `|l, m⟩` basis. `V` couples `l` to `l` and `l ± 2` only, so each block
//! splits into two chains of fixed parity of `l`. Each chain is a symmetric
//! tridiagonal matrix with non-vanishing off-diagonal, hence its eigenvalues
//! never cross as `u` varies and the `k`-th lowest one continues the free
//! level `l = |m| + parity + 2k`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// One entry of the level-shift table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelShift {
    pub l: u32,
    pub m_abs: u32,
    pub energy: f64,
    /// `energy - l(l+1)`.
    pub shift: f64,
}

/// Largest eigenvector weight tolerated in the two highest shells.
const EDGE_WEIGHT: f64 = 1e-8;

/// `⟨l+1, m| cos θ |l, m⟩`.
fn cos_element(l: u32, m: i32) -> f64 {
    let (l, m) = (l as f64, m as f64);
    (((l + 1.0).powi(2) - m * m) / ((2.0 * l + 1.0) * (2.0 * l + 3.0))).sqrt()
}

/// Numerical eigenvalues of the fixed-`m` block truncated at `l_max`,
/// indexed by `l - |m|`; levels up to `l = l_max - 4` are returned.
///
/// The potential uses the exact `cos²θ` matrix elements (the product of
/// `cos θ` matrices is formed with one extra shell), so the only truncation
/// is the size of the basis, which is checked through the eigenvector weight
/// in shells `l_max - 1` and `l_max`.
pub fn eigenenergies_numeric(m: i32, u: f64, l_max: u32) -> Result<Vec<f64>> {
    levels_up_to(m, u, l_max, l_max.saturating_sub(4))
}

/// Levels `|m| <= l <= top` from a basis truncated at `l_max`.
fn levels_up_to(m: i32, u: f64, l_max: u32, top: u32) -> Result<Vec<f64>> {
    if !(u >= 0.0) || !u.is_finite() {
        return Err(Error::domain(format!(
            "coupling u must be non-negative, got {u}"
        )));
    }
    let m_abs = m.unsigned_abs();
    if l_max < m_abs + 4 {
        return Err(Error::domain(format!(
            "l_max = {l_max} leaves no converged levels for |m| = {m_abs}; need at least |m| + 4"
        )));
    }
    let mut levels = vec![f64::NAN; (top - m_abs + 1) as usize];
    for parity in 0..2u32 {
        let ls: Vec<u32> = (m_abs + parity..=l_max).step_by(2).collect();
        if ls.is_empty() {
            continue;
        }
        let n = ls.len();
        let mut block = DMatrix::<f64>::zeros(n, n);
        for (i, &l) in ls.iter().enumerate() {
            // ⟨l|cos²|l⟩ = c(l-1)² + c(l)², with c(l) = ⟨l+1|cos|l⟩.
            let below = if l > m_abs {
                cos_element(l - 1, m).powi(2)
            } else {
                0.0
            };
            let above = cos_element(l, m).powi(2);
            block[(i, i)] = (l * (l + 1)) as f64 - u * (below + above);
            if i + 1 < n {
                let coupling = -u * cos_element(l, m) * cos_element(l + 1, m);
                block[(i, i + 1)] = coupling;
                block[(i + 1, i)] = coupling;
            }
        }
        let eig = block.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        for (k, &col) in order.iter().enumerate() {
            let l = ls[k];
            if l > top {
                break;
            }
            let edge: f64 = ls
                .iter()
                .enumerate()
                .filter(|(_, &shell)| shell + 1 >= l_max)
                .map(|(row, _)| eig.eigenvectors[(row, col)].powi(2))
                .sum();
            if edge > EDGE_WEIGHT {
                return Err(Error::Convergence(format!(
                    "level l = {l}, m = {m} has weight {edge:.2e} in the top shells of l_max = {l_max}"
                )));
            }
            levels[(l - m_abs) as usize] = eig.eigenvalues[col];
        }
    }
    Ok(levels)
}

/// First-order expansion
/// `E = l(l+1) - (u/2) [1 + (1 - 4m²)/((2l-1)(2l+3))]`.
pub fn eigenenergies_perturbative(l: u32, m: i32, u: f64) -> f64 {
    let lf = l as f64;
    let m2 = (m as f64).powi(2);
    lf * (lf + 1.0) - 0.5 * u * (1.0 + (1.0 - 4.0 * m2) / ((2.0 * lf - 1.0) * (2.0 * lf + 3.0)))
}

const MAX_BASIS: u32 = 400;

/// Shifts `E(l, |m|) - l(l+1)` for all `l <= l_max`, `|m| <= l`. The basis is
/// enlarged until every requested level is converged.
pub fn level_shift_table(u: f64, l_max: u32) -> Result<Vec<LevelShift>> {
    let mut table = Vec::new();
    for m_abs in 0..=l_max {
        let levels = converged_levels(m_abs as i32, u, l_max)?;
        let mirror = converged_levels(-(m_abs as i32), u, l_max)?;
        debug_assert_eq!(levels.len(), (l_max - m_abs + 1) as usize);
        for (k, (e, e_mirror)) in levels.iter().zip(&mirror).enumerate() {
            if (e - e_mirror).abs() > 1e-10 {
                return Err(Error::Numerical(format!(
                    "levels for m = ±{m_abs} differ: {e} vs {e_mirror}"
                )));
            }
            let l = m_abs + k as u32;
            if l > l_max {
                break;
            }
            let free = (l * (l + 1)) as f64;
            table.push(LevelShift {
                l,
                m_abs,
                energy: *e,
                shift: e - free,
            });
        }
    }
    table.sort_by_key(|s| (s.l, s.m_abs));
    Ok(table)
}

fn converged_levels(m: i32, u: f64, l_top: u32) -> Result<Vec<f64>> {
    let mut basis = l_top + 4;
    loop {
        match levels_up_to(m, u, basis, l_top) {
            Ok(levels) => return Ok(levels),
            Err(Error::Convergence(msg)) if basis + 2 > MAX_BASIS => {
                return Err(Error::Convergence(msg))
            }
            Err(Error::Convergence(_)) => basis += 2,
            Err(e) => return Err(e),
        }
    }
}
