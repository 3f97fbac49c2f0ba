//! Truncated `|j, m⟩` basis and the operators and states living on it.
//!
//! Basis vectors are ordered by `k = j² + j + m`, so each `j` manifold is a
//! contiguous block of length `2j + 1` starting at `j²`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::specfun::wigner_3j_doubled;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Quantum numbers of one basis vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisIndex {
    pub j: u32,
    pub m: i32,
}

impl BasisIndex {
    pub fn new(j: u32, m: i32) -> Result<Self> {
        if m.unsigned_abs() > j {
            return Err(Error::domain(format!("|m| = {} exceeds j = {j}", m.abs())));
        }
        Ok(Self { j, m })
    }

    /// Linear position `j² + j + m`.
    pub fn position(self) -> usize {
        let j = self.j as i64;
        (j * j + j + self.m as i64) as usize
    }

    pub fn from_position(k: usize) -> Self {
        let j = (k as f64).sqrt().floor() as u32;
        // Guard against rounding in the square root.
        let j = if ((j + 1) * (j + 1)) as usize <= k {
            j + 1
        } else {
            j
        };
        let j = if (j * j) as usize > k { j - 1 } else { j };
        let m = k as i64 - (j as i64 * j as i64 + j as i64);
        Self { j, m: m as i32 }
    }
}

/// Number of basis vectors for `j = 0..=j_max`.
pub fn dimension(j_max: u32) -> usize {
    ((j_max + 1) * (j_max + 1)) as usize
}

/// Range of positions belonging to the manifold `j`.
pub fn block_range(j: u32) -> std::ops::Range<usize> {
    let start = (j * j) as usize;
    start..start + (2 * j + 1) as usize
}

/// Dimensionless model parameters: coupling `u = 2ΘU_α/ħ²`, branching ratio
/// `Γ/Δ`, and the basis cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub u: f64,
    pub gamma_ratio: f64,
    pub j_max: u32,
}

impl ModelParams {
    pub fn new(u: f64, gamma_ratio: f64, j_max: u32) -> Result<Self> {
        if !(u >= 0.0) || !u.is_finite() {
            return Err(Error::domain(format!(
                "coupling u must be non-negative, got {u}"
            )));
        }
        if !(gamma_ratio >= 0.0) || !gamma_ratio.is_finite() {
            return Err(Error::domain(format!(
                "gamma_ratio must be non-negative, got {gamma_ratio}"
            )));
        }
        if j_max < 2 {
            return Err(Error::domain(format!(
                "j_max must be at least 2, got {j_max}"
            )));
        }
        if gamma_ratio > 0.1 {
            log::warn!("gamma_ratio = {gamma_ratio} is outside the far-detuned regime");
        }
        Ok(Self {
            u,
            gamma_ratio,
            j_max,
        })
    }

    /// Scaled jump rate `γ = (Γ/Δ) u`.
    pub fn jump_rate(&self) -> f64 {
        self.gamma_ratio * self.u
    }

    pub fn dim(&self) -> usize {
        dimension(self.j_max)
    }
}

/// Dense complex matrix over the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix(pub DMatrix<Complex64>);

impl OperatorMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn get(&self, row: BasisIndex, col: BasisIndex) -> Complex64 {
        self.0[(row.position(), col.position())]
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn matmul(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0)
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self(&self.0 * factor)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    /// Largest entry of `A - A†`.
    pub fn hermiticity_defect(&self) -> f64 {
        let a = &self.0;
        let mut worst = 0.0f64;
        for r in 0..a.nrows() {
            for c in 0..=r {
                worst = worst.max((a[(r, c)] - a[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// `⟨ψ|A|ψ⟩` (not divided by the norm).
    pub fn expectation(&self, psi: &PureState) -> Complex64 {
        psi.amplitudes.dotc(&(&self.0 * &psi.amplitudes))
    }

    /// `Tr(A σ)`.
    pub fn trace_with(&self, sigma: &DensityMatrix) -> Complex64 {
        let a = &self.0;
        let s = &sigma.entries;
        let n = a.nrows();
        let mut acc = ZERO;
        for r in 0..n {
            for c in 0..n {
                acc += a[(r, c)] * s[(c, r)];
            }
        }
        acc
    }

    /// Submatrix on the manifolds `j <= j_keep`.
    pub fn truncated(&self, j_keep: u32) -> Self {
        let d = dimension(j_keep);
        Self(self.0.view((0, 0), (d, d)).into_owned())
    }
}

/// Normalised state vector over the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    pub j_max: u32,
    pub amplitudes: DVector<Complex64>,
}

impl PureState {
    pub fn from_amplitudes(j_max: u32, amplitudes: DVector<Complex64>) -> Result<Self> {
        if amplitudes.len() != dimension(j_max) {
            return Err(Error::domain(format!(
                "expected {} amplitudes for j_max = {j_max}, got {}",
                dimension(j_max),
                amplitudes.len()
            )));
        }
        Ok(Self { j_max, amplitudes })
    }

    /// `|j, m⟩`.
    pub fn basis_vector(j_max: u32, index: BasisIndex) -> Result<Self> {
        if index.j > j_max {
            return Err(Error::BasisOverflow { j: index.j, j_max });
        }
        let mut amplitudes = DVector::zeros(dimension(j_max));
        amplitudes[index.position()] = Complex64::new(1.0, 0.0);
        Ok(Self { j_max, amplitudes })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if !(n > 0.0) {
            return Err(Error::DegenerateState);
        }
        Ok(Self {
            j_max: self.j_max,
            amplitudes: &self.amplitudes / Complex64::new(n, 0.0),
        })
    }
}

/// Density matrix over the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub j_max: u32,
    pub entries: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn from_entries(j_max: u32, entries: DMatrix<Complex64>) -> Result<Self> {
        let d = dimension(j_max);
        if entries.nrows() != d || entries.ncols() != d {
            return Err(Error::domain(format!("density matrix must be {d} x {d}")));
        }
        Ok(Self { j_max, entries })
    }

    /// `|ψ⟩⟨ψ| / ⟨ψ|ψ⟩`.
    pub fn from_pure(psi: &PureState) -> Self {
        let n = psi.norm_sqr();
        let a = &psi.amplitudes;
        Self {
            j_max: psi.j_max,
            entries: a * a.adjoint() / Complex64::new(n, 0.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    pub fn purity(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Block of the manifold `j`.
    pub fn block(&self, j: u32) -> DMatrix<Complex64> {
        let r = block_range(j);
        self.entries
            .view((r.start, r.start), (r.len(), r.len()))
            .into_owned()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.entries + self.entries.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks Hermiticity, unit trace and positivity to `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let defect = OperatorMatrix(self.entries.clone()).hermiticity_defect();
        if defect > tol {
            return Err(Error::Numerical(format!(
                "density matrix not Hermitian ({defect:.2e})"
            )));
        }
        let tr = self.trace();
        if (tr - 1.0).norm() > tol {
            return Err(Error::Numerical(format!(
                "density matrix trace {tr} differs from 1"
            )));
        }
        let low = self.min_eigenvalue();
        if low < -tol {
            return Err(Error::Numerical(format!(
                "density matrix eigenvalue {low:.2e} < 0"
            )));
        }
        Ok(())
    }
}

/// Cartesian axis label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// `⟨j' m'| C^1_q |j m⟩` for the rank-one harmonic `C^1_q = sqrt(4π/3) Y_1q`.
fn rank_one_element(j_out: u32, m_out: i32, q: i32, j_in: u32, m_in: i32) -> f64 {
    let (jo, ji) = (j_out as i64, j_in as i64);
    let reduced = wigner_3j_doubled(2 * jo, 2, 2 * ji, 0, 0, 0);
    if reduced == 0.0 {
        return 0.0;
    }
    let angular = wigner_3j_doubled(
        2 * jo,
        2,
        2 * ji,
        -2 * m_out as i64,
        2 * q as i64,
        2 * m_in as i64,
    );
    let phase = if m_out.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    phase * (((2 * ji + 1) * (2 * jo + 1)) as f64).sqrt() * reduced * angular
}

/// Matrix of the direction cosine `n_x = sinθ cosφ`, `n_y = sinθ sinφ` or
/// `n_z = cosθ`, built from the Wigner-Eckart theorem. Couplings to
/// `j_max + 1` are dropped by the truncation.
pub fn direction_cosine(axis: Axis, j_max: u32) -> OperatorMatrix {
    let d = dimension(j_max);
    let mut out = DMatrix::zeros(d, d);
    let sqrt_half = std::f64::consts::FRAC_1_SQRT_2;
    for k_in in 0..d {
        let a = BasisIndex::from_position(k_in);
        for j_out in [a.j.wrapping_sub(1), a.j + 1] {
            if j_out > j_max {
                continue;
            }
            for dm in -1..=1i32 {
                let m_out = a.m + dm;
                if m_out.unsigned_abs() > j_out {
                    continue;
                }
                let b = BasisIndex { j: j_out, m: m_out };
                let value = match (axis, dm) {
                    (Axis::Z, 0) => Complex64::new(rank_one_element(b.j, b.m, 0, a.j, a.m), 0.0),
                    (Axis::Z, _) => continue,
                    (_, 0) => continue,
                    // C_{-1} raises m by -1, C_{+1} by +1.
                    (Axis::X, _) => {
                        let c = rank_one_element(b.j, b.m, dm, a.j, a.m);
                        Complex64::new(if dm == -1 { c } else { -c } * sqrt_half, 0.0)
                    }
                    (Axis::Y, _) => {
                        let c = rank_one_element(b.j, b.m, dm, a.j, a.m);
                        I * c * sqrt_half
                    }
                };
                out[(b.position(), k_in)] = value;
            }
        }
    }
    OperatorMatrix(out)
}

/// Kinetic energy `J²/(2Θ)`: diagonal `j(j+1)`.
pub fn kinetic(j_max: u32) -> OperatorMatrix {
    let d = dimension(j_max);
    let diag = DVector::from_iterator(
        d,
        (0..d).map(|k| {
            let j = BasisIndex::from_position(k).j as f64;
            Complex64::new(j * (j + 1.0), 0.0)
        }),
    );
    OperatorMatrix(DMatrix::from_diagonal(&diag))
}

/// Light-induced potential `-u n_z n_z` (product of truncated matrices).
pub fn potential(p: &ModelParams) -> OperatorMatrix {
    let nz = direction_cosine(Axis::Z, p.j_max);
    OperatorMatrix(&nz.0 * &nz.0 * Complex64::new(-p.u, 0.0))
}

/// Jump operators `S_i = sqrt(γ) n_i n_z` for `i = x, y, z`.
pub fn jump_operators(p: &ModelParams) -> [OperatorMatrix; 3] {
    let root = Complex64::new(p.jump_rate().sqrt(), 0.0);
    let nz = direction_cosine(Axis::Z, p.j_max);
    [Axis::X, Axis::Y, Axis::Z].map(|axis| {
        let n = direction_cosine(axis, p.j_max);
        OperatorMatrix(&n.0 * &nz.0 * root)
    })
}

/// Non-Hermitian `T + V (1 + i Γ/(2Δ))` driving the no-jump evolution.
pub fn effective_hamiltonian(p: &ModelParams) -> OperatorMatrix {
    let v = potential(p);
    kinetic(p.j_max).add(&v.scale(Complex64::new(1.0, 0.5 * p.gamma_ratio)))
}

/// `(J_x, J_y, J_z)` built from ladder operators, block-diagonal in `j`.
pub fn angular_momentum_matrices(j_max: u32) -> [OperatorMatrix; 3] {
    let d = dimension(j_max);
    let mut jx = DMatrix::zeros(d, d);
    let mut jy = DMatrix::zeros(d, d);
    let mut jz = DMatrix::zeros(d, d);
    for k in 0..d {
        let a = BasisIndex::from_position(k);
        let (j, m) = (a.j as f64, a.m as f64);
        jz[(k, k)] = Complex64::new(m, 0.0);
        if a.m < a.j as i32 {
            // ⟨j, m+1| J_+ |j, m⟩
            let up = (j * (j + 1.0) - m * (m + 1.0)).sqrt();
            let k_up = k + 1;
            jx[(k_up, k)] += Complex64::new(0.5 * up, 0.0);
            jx[(k, k_up)] += Complex64::new(0.5 * up, 0.0);
            jy[(k_up, k)] += Complex64::new(0.0, -0.5 * up);
            jy[(k, k_up)] += Complex64::new(0.0, 0.5 * up);
        }
    }
    [OperatorMatrix(jx), OperatorMatrix(jy), OperatorMatrix(jz)]
}

/// Angular-momentum coherent state `|j, α, β⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentSpec {
    pub j: u32,
    pub alpha: f64,
    pub beta: f64,
}

/// `|j,α,β⟩ = Σ_m sqrt(C(2j, j+m)) sin(α/2)^(j+m) cos(α/2)^(j-m) e^{-i(j+m)β} |j m⟩`.
pub fn coherent_state(j: u32, alpha: f64, beta: f64, j_max: u32) -> Result<PureState> {
    if j > j_max {
        return Err(Error::BasisOverflow { j, j_max });
    }
    let mut amplitudes = DVector::zeros(dimension(j_max));
    let (s, c) = (0.5 * alpha).sin_cos();
    let ji = j as i32;
    for m in -ji..=ji {
        let up = (ji + m) as u32;
        let down = (ji - m) as u32;
        let magnitude = binomial(2 * j, up).sqrt() * s.powi(up as i32) * c.powi(down as i32);
        let phase = Complex64::from_polar(1.0, -(up as f64) * beta);
        amplitudes[BasisIndex { j, m }.position()] = phase * magnitude;
    }
    Ok(PureState { j_max, amplitudes })
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Normalised weighted sum of coherent states.
pub fn superposition_state(
    components: &[(Complex64, CoherentSpec)],
    j_max: u32,
) -> Result<PureState> {
    let mut amplitudes = DVector::zeros(dimension(j_max));
    for (weight, spec) in components {
        let state = coherent_state(spec.j, spec.alpha, spec.beta, j_max)?;
        amplitudes += state.amplitudes * *weight;
    }
    let raw = PureState { j_max, amplitudes };
    if raw.norm_sqr() < 1e-24 {
        return Err(Error::DegenerateState);
    }
    raw.normalized()
}
