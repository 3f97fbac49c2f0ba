//! Spherical Wigner functions of the rotor state.
//!
//! For each manifold `j` the block `σ_j` is expanded in the multipole
//! operators `T_{j,sm}`, and
//! `W_j(θ,φ) = sqrt((2j+1)/4π) Σ_{s,m} Y_sm(θ,φ) Tr(T_{j,sm}† σ_j)`.
//! The total distribution is `Σ_j W_j`; coherences between different `j` do
//! not enter, so `W` is not a complete description of the state.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::basis::{block_range, DensityMatrix};
use crate::error::{Error, Result};
use crate::specfun::{gauss_legendre, wigner_3j_doubled, LegendreTable};

/// Product grid: Gauss-Legendre nodes in `cos θ` times uniform `φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereGrid {
    /// Polar nodes in ascending order.
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    /// Gauss-Legendre weight of each polar node.
    pub theta_weights: Vec<f64>,
}

impl SphereGrid {
    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta == 0 || n_phi == 0 {
            return Err(Error::domain(
                "grid needs at least one node in each direction",
            ));
        }
        // Descending cos θ means ascending θ.
        let (x, w) = gauss_legendre(n_theta);
        Ok(Self {
            thetas: x.iter().map(|c| c.acos()).collect(),
            phis: (0..n_phi)
                .map(|k| 2.0 * PI * k as f64 / n_phi as f64)
                .collect(),
            theta_weights: w,
        })
    }

    pub fn n_theta(&self) -> usize {
        self.thetas.len()
    }

    pub fn n_phi(&self) -> usize {
        self.phis.len()
    }

    /// Quadrature weight of node `(i, k)`.
    pub fn weight(&self, i: usize, _k: usize) -> f64 {
        self.theta_weights[i] * 2.0 * PI / self.n_phi() as f64
    }

    /// All nodes at the smallest distance from `(θ, φ)` along each axis; two
    /// polar rows tie when `θ` lies midway between nodes (e.g. the equator
    /// for an even number of rows).
    pub fn nearest_nodes(&self, theta: f64, phi: f64) -> Vec<(usize, usize)> {
        let best = (0..self.n_theta())
            .map(|i| (self.thetas[i] - theta).abs())
            .fold(f64::INFINITY, f64::min);
        let (_, k) = self.nearest_node(theta, phi);
        (0..self.n_theta())
            .filter(|&i| (self.thetas[i] - theta).abs() <= best + 1e-12)
            .map(|i| (i, k))
            .collect()
    }

    /// Node closest to `(θ, φ)` in angular distance along each axis.
    pub fn nearest_node(&self, theta: f64, phi: f64) -> (usize, usize) {
        let i = (0..self.n_theta())
            .min_by(|&a, &b| {
                (self.thetas[a] - theta)
                    .abs()
                    .total_cmp(&(self.thetas[b] - theta).abs())
            })
            .unwrap_or(0);
        let step = 2.0 * PI / self.n_phi() as f64;
        let k = (phi.rem_euclid(2.0 * PI) / step).round() as usize % self.n_phi();
        (i, k)
    }
}

/// Wigner function sampled on a [`SphereGrid`], stored θ-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub values: Vec<f64>,
    pub grid: SphereGrid,
    pub tau: f64,
}

impl WignerGrid {
    pub fn value(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.grid.n_phi() + k]
    }

    /// Node of the largest value.
    pub fn argmax(&self) -> (usize, usize) {
        let idx = (0..self.values.len())
            .max_by(|&a, &b| self.values[a].total_cmp(&self.values[b]))
            .unwrap_or(0);
        (idx / self.grid.n_phi(), idx % self.grid.n_phi())
    }

    /// Node of the smallest value.
    pub fn argmin(&self) -> (usize, usize) {
        let idx = (0..self.values.len())
            .min_by(|&a, &b| self.values[a].total_cmp(&self.values[b]))
            .unwrap_or(0);
        (idx / self.grid.n_phi(), idx % self.grid.n_phi())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether node `(i, k)` is no smaller than any of its eight neighbours
    /// (periodic in `φ`; rows beyond the poles are skipped).
    pub fn is_local_max(&self, i: usize, k: usize) -> bool {
        let n_phi = self.grid.n_phi() as isize;
        let centre = self.value(i, k);
        for di in -1isize..=1 {
            let row = i as isize + di;
            if row < 0 || row >= self.grid.n_theta() as isize {
                continue;
            }
            for dk in -1isize..=1 {
                if di == 0 && dk == 0 {
                    continue;
                }
                let col = (k as isize + dk).rem_euclid(n_phi) as usize;
                if self.value(row as usize, col) > centre {
                    return false;
                }
            }
        }
        true
    }

    /// Local maxima within `radius` grid cells (in both directions, `φ`
    /// periodic) of the node nearest `(θ, φ)`.
    pub fn local_maxima_near(&self, theta: f64, phi: f64, radius: usize) -> Vec<(usize, usize)> {
        let (ci, ck) = self.grid.nearest_node(theta, phi);
        let n_phi = self.grid.n_phi() as isize;
        let r = radius as isize;
        let mut found = Vec::new();
        for di in -r..=r {
            let row = ci as isize + di;
            if row < 0 || row >= self.grid.n_theta() as isize {
                continue;
            }
            for dk in -r..=r {
                let col = (ck as isize + dk).rem_euclid(n_phi) as usize;
                if self.is_local_max(row as usize, col) {
                    found.push((row as usize, col));
                }
            }
        }
        found
    }
}

/// Block `T_{j,sm}` with entries
/// `sqrt(2s+1) (-1)^{j-m'} (j s j; -m' m m'')` at row `m'`, column `m''`
/// (rows and columns ordered by ascending `m`).
pub fn multipole_matrix(j: u32, s: u32, m: i32) -> Result<DMatrix<Complex64>> {
    if m.unsigned_abs() > s {
        return Err(Error::domain(format!("|m| = {} exceeds s = {s}", m.abs())));
    }
    let n = (2 * j + 1) as usize;
    let ji = j as i32;
    let mut block = DMatrix::zeros(n, n);
    if s > 2 * j {
        return Ok(block);
    }
    let norm = ((2 * s + 1) as f64).sqrt();
    for m1 in -ji..=ji {
        let m2 = m1 - m;
        if m2.abs() > ji {
            continue;
        }
        let symbol = wigner_3j_doubled(
            2 * j as i64,
            2 * s as i64,
            2 * j as i64,
            -2 * m1 as i64,
            2 * m as i64,
            2 * m2 as i64,
        );
        let phase = if (ji - m1).rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        };
        block[((m1 + ji) as usize, (m2 + ji) as usize)] =
            Complex64::new(norm * phase * symbol, 0.0);
    }
    Ok(block)
}

const IMAGINARY_RESIDUE: f64 = 1e-10;

/// Expansion coefficients `c_sm` of `W = Σ c_sm Y_sm` for the given `j`
/// manifolds, indexed `s² + s + m`.
fn harmonic_coefficients(sigma: &DensityMatrix, js: &[u32]) -> Result<(usize, Vec<Complex64>)> {
    let s_max = js.iter().map(|j| 2 * j).max().unwrap_or(0) as usize;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); (s_max + 1) * (s_max + 1)];
    for &j in js {
        if j > sigma.j_max {
            return Err(Error::BasisOverflow {
                j,
                j_max: sigma.j_max,
            });
        }
        let block = sigma.block(j);
        let prefactor = ((2 * j + 1) as f64 / (4.0 * PI)).sqrt();
        for s in 0..=2 * j {
            for m in -(s as i32)..=(s as i32) {
                let t = multipole_matrix(j, s, m)?;
                let trace: Complex64 = t.iter().zip(block.iter()).map(|(a, b)| a.conj() * b).sum();
                let idx = (s * s + s) as usize;
                coeffs[(idx as i64 + m as i64) as usize] += trace * prefactor;
            }
        }
    }
    Ok((s_max, coeffs))
}

fn evaluate(sigma: &DensityMatrix, js: &[u32], grid: &SphereGrid, tau: f64) -> Result<WignerGrid> {
    let (s_max, coeffs) = harmonic_coefficients(sigma, js)?;
    let n_phi = grid.n_phi();
    let mut values = Vec::with_capacity(grid.n_theta() * n_phi);
    let mut worst_imag = 0.0f64;
    for &theta in &grid.thetas {
        let table = LegendreTable::new(s_max, theta);
        // f_m(θ) = Σ_s c_sm P̄_s^{|m|}(θ) times the phase of negative m.
        let mut f = vec![Complex64::new(0.0, 0.0); 2 * s_max + 1];
        for s in 0..=s_max {
            for m in -(s as i64)..=(s as i64) {
                let c = coeffs[((s * s + s) as i64 + m) as usize];
                if c == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let abs_m = m.unsigned_abs() as usize;
                let mut p = table.get(s, abs_m);
                if m < 0 && abs_m % 2 == 1 {
                    p = -p;
                }
                f[(m + s_max as i64) as usize] += c * p;
            }
        }
        for &phi in &grid.phis {
            let mut acc = Complex64::new(0.0, 0.0);
            for (idx, fm) in f.iter().enumerate() {
                let m = idx as f64 - s_max as f64;
                acc += fm * Complex64::from_polar(1.0, m * phi);
            }
            worst_imag = worst_imag.max(acc.im.abs());
            values.push(acc.re);
        }
    }
    if worst_imag > IMAGINARY_RESIDUE {
        return Err(Error::Numerical(format!(
            "Wigner function has imaginary part {worst_imag:.2e}; density matrix is not Hermitian"
        )));
    }
    Ok(WignerGrid {
        values,
        grid: grid.clone(),
        tau,
    })
}

/// `W_j` of one manifold.
pub fn wigner_single_j(sigma: &DensityMatrix, j: u32, grid: &SphereGrid) -> Result<WignerGrid> {
    evaluate(sigma, &[j], grid, 0.0)
}

/// `W = Σ_j W_j` over all manifolds of the basis.
pub fn wigner_total(sigma: &DensityMatrix, grid: &SphereGrid) -> Result<WignerGrid> {
    let js: Vec<u32> = (0..=sigma.j_max).collect();
    evaluate(sigma, &js, grid, 0.0)
}

/// Quadrature of `W` over the sphere.
pub fn sphere_integral(w: &WignerGrid) -> f64 {
    let n_phi = w.grid.n_phi();
    w.values
        .iter()
        .enumerate()
        .map(|(idx, v)| v * w.grid.weight(idx / n_phi, idx % n_phi))
        .sum()
}

/// Population of manifold `j`, the integral of `W_j`.
pub fn block_population(sigma: &DensityMatrix, j: u32) -> f64 {
    block_range(j).map(|k| sigma.entries[(k, k)].re).sum()
}
