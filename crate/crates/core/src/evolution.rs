//! Time evolution on the truncated basis: Schrödinger, Lindblad and
//! quantum-trajectory (Monte-Carlo wave function) propagation.
//!
//! All three paths share one fixed-step integrator: fourth-order Runge-Kutta
//! in the interaction picture of the diagonal kinetic term (Lawson's
//! integrating-factor scheme). The rotational phases `e^{-i j(j+1) τ}` are
//! applied exactly, so the step size is set by the potential and the decay
//! rates rather than by the largest rotational energy in the basis.
//!
//! Every operator conserves the parity of `j`. When the initial state lives in
//! one parity sector the evolution is carried out in that sector alone.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::basis::{
    angular_momentum_matrices, block_range, dimension, jump_operators, potential, Axis, BasisIndex,
    DensityMatrix, ModelParams, OperatorMatrix, PureState,
};
use crate::error::{Error, Result};

type C = Complex64;
const ZERO: C = C::new(0.0, 0.0);

/// Numerical settings shared by the propagators.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionConfig {
    /// Time step in `τ`.
    pub dt: f64,
    /// Final time in `τ`.
    pub t_end: f64,
    /// Steps between records; `0` picks a stride giving at most 5000 records.
    pub record_stride: usize,
    /// Number of trajectories in an ensemble.
    pub n_traj: usize,
    pub seed: u64,
    /// Largest population tolerated in the two highest `j` shells.
    pub tail_tolerance: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_end: 100.0,
            record_stride: 0,
            n_traj: 2000,
            seed: 0,
            tail_tolerance: 1e-3,
        }
    }
}

const MAX_AUTO_RECORDS: usize = 5000;

/// Resolved stepping plan of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPlan {
    pub n_steps: usize,
    pub h: f64,
    pub stride: usize,
}

impl StepPlan {
    /// Step indices at which states are recorded: every `stride`-th step,
    /// plus the final step.
    pub fn record_steps(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = (0..=self.n_steps).step_by(self.stride).collect();
        if steps.last() != Some(&self.n_steps) {
            steps.push(self.n_steps);
        }
        steps
    }

    pub fn record_times(&self) -> Vec<f64> {
        self.record_steps()
            .iter()
            .map(|&s| s as f64 * self.h)
            .collect()
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::domain(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::domain(format!(
                "t_end must be non-negative, got {}",
                self.t_end
            )));
        }
        if self.n_traj == 0 {
            return Err(Error::domain("n_traj must be at least 1"));
        }
        if !(self.tail_tolerance > 0.0) {
            return Err(Error::domain("tail_tolerance must be positive"));
        }
        Ok(())
    }

    /// Number of steps, the step actually used (`t_end / n_steps`, never
    /// longer than `dt`) and the record stride.
    pub fn plan(&self) -> Result<StepPlan> {
        self.validate()?;
        let n_steps = ((self.t_end / self.dt) - 1e-9).ceil().max(0.0) as usize;
        let h = if n_steps == 0 {
            0.0
        } else {
            self.t_end / n_steps as f64
        };
        let stride = if self.record_stride > 0 {
            self.record_stride
        } else {
            n_steps.div_ceil(MAX_AUTO_RECORDS).max(1)
        };
        Ok(StepPlan { n_steps, h, stride })
    }
}

/// State recorded at time `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedState<S> {
    pub tau: f64,
    pub state: S,
}

/// Observables at one recorded time.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableRecord {
    pub tau: f64,
    pub jx_mean: f64,
    pub jz_mean: f64,
    pub jz_var: f64,
    pub purity: f64,
    /// `p_j` for `j = 0..=j_max`.
    pub populations: Vec<f64>,
}

/// `⟨j, m+1|J_+|j, m⟩`.
fn raising(j: u32, m: i32) -> f64 {
    let (j, m) = (j as f64, m as f64);
    (j * (j + 1.0) - m * (m + 1.0)).sqrt()
}

/// `⟨J_x⟩`, `⟨J_z⟩`, `⟨J_z²⟩` and `p_j` from the diagonal and first
/// off-diagonal of a density matrix given through an accessor.
fn moments(j_max: u32, entry: impl Fn(usize, usize) -> C) -> (f64, f64, f64, Vec<f64>) {
    let mut jx = 0.0;
    let mut jz = 0.0;
    let mut jz2 = 0.0;
    let mut populations = vec![0.0; j_max as usize + 1];
    for k in 0..dimension(j_max) {
        let b = BasisIndex::from_position(k);
        let p = entry(k, k).re;
        let m = b.m as f64;
        jz += m * p;
        jz2 += m * m * p;
        populations[b.j as usize] += p;
        if b.m < b.j as i32 {
            jx += raising(b.j, b.m) * entry(k + 1, k).re;
        }
    }
    (jx, jz, jz2, populations)
}

impl ObservableRecord {
    pub fn from_density(tau: f64, sigma: &DensityMatrix) -> Self {
        let s = &sigma.entries;
        let (jx, jz, jz2, populations) = moments(sigma.j_max, |r, c| s[(r, c)]);
        Self {
            tau,
            jx_mean: jx,
            jz_mean: jz,
            jz_var: jz2 - jz * jz,
            purity: sigma.purity(),
            populations,
        }
    }

    /// Observables of `|ψ⟩⟨ψ|/⟨ψ|ψ⟩`.
    pub fn from_pure(tau: f64, psi: &PureState) -> Self {
        let a = &psi.amplitudes;
        let n = psi.norm_sqr();
        let (jx, jz, jz2, populations) = moments(psi.j_max, |r, c| a[r] * a[c].conj() / n);
        Self {
            tau,
            jx_mean: jx,
            jz_mean: jz,
            jz_var: jz2 - jz * jz,
            purity: 1.0,
            populations,
        }
    }

    /// Population of the two highest shells.
    pub fn tail(&self) -> f64 {
        let n = self.populations.len();
        self.populations[n.saturating_sub(2)..].iter().sum()
    }
}

/// `⟨J_x⟩ = Tr(J_x σ)`, `Var(J_z)`, `Tr σ²` and `p_j` of a density matrix.
pub fn observables(sigma: &DensityMatrix) -> ObservableRecord {
    ObservableRecord::from_density(0.0, sigma)
}

fn check_tail(record: &ObservableRecord, tolerance: f64) -> Result<()> {
    let tail = record.tail();
    if tail > tolerance {
        return Err(Error::Truncation {
            tail,
            tolerance,
            tau: record.tau,
        });
    }
    Ok(())
}

/// Compressed sparse rows.
#[derive(Debug, Clone)]
struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C>,
}

impl Csr {
    fn from_dense(m: &DMatrix<C>) -> Self {
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                if v != ZERO {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            row_ptr,
            cols,
            vals,
        }
    }

    fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    fn mul_vec(&self, x: &[C], out: &mut [C]) {
        for (r, slot) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[idx] * x[self.cols[idx]];
            }
            *slot = acc;
        }
    }

    /// `out = A X` for row-major square `X`.
    fn mul_dense(&self, x: &[C], out: &mut [C]) {
        let n = self.n();
        for r in 0..n {
            let row = &mut out[r * n..(r + 1) * n];
            row.fill(ZERO);
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                let v = self.vals[idx];
                let src = &x[self.cols[idx] * n..(self.cols[idx] + 1) * n];
                for (o, s) in row.iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
    }
}

/// Subset of basis positions closed under all the operators.
#[derive(Debug, Clone)]
struct Sector {
    j_max: u32,
    indices: Vec<usize>,
    energies: Vec<f64>,
}

impl Sector {
    fn new(j_max: u32, parity: Option<u32>) -> Self {
        let indices: Vec<usize> = (0..=j_max)
            .filter(|j| parity.is_none_or(|p| j % 2 == p))
            .flat_map(block_range)
            .collect();
        let energies = indices
            .iter()
            .map(|&k| {
                let j = BasisIndex::from_position(k).j as f64;
                j * (j + 1.0)
            })
            .collect();
        Self {
            j_max,
            indices,
            energies,
        }
    }

    fn parity_of(j_max: u32, weight_in: impl Fn(u32) -> bool) -> Option<u32> {
        let even = (0..=j_max).step_by(2).any(&weight_in);
        let odd = (1..=j_max).step_by(2).any(&weight_in);
        match (even, odd) {
            (true, false) => Some(0),
            (false, true) => Some(1),
            _ => None,
        }
    }

    fn for_vector(psi: &PureState) -> Self {
        let parity = Self::parity_of(psi.j_max, |j| {
            block_range(j).any(|k| psi.amplitudes[k] != ZERO)
        });
        Self::new(psi.j_max, parity)
    }

    fn for_matrix(sigma: &DensityMatrix) -> Self {
        let s = &sigma.entries;
        let parity = Self::parity_of(sigma.j_max, |j| {
            block_range(j).any(|r| (0..s.ncols()).any(|c| s[(r, c)] != ZERO || s[(c, r)] != ZERO))
        });
        Self::new(sigma.j_max, parity)
    }

    fn len(&self) -> usize {
        self.indices.len()
    }

    fn restrict_op(&self, op: &OperatorMatrix) -> Csr {
        let n = self.len();
        let dense = DMatrix::from_fn(n, n, |r, c| op.0[(self.indices[r], self.indices[c])]);
        Csr::from_dense(&dense)
    }

    fn restrict_vec(&self, psi: &PureState) -> Vec<C> {
        self.indices.iter().map(|&k| psi.amplitudes[k]).collect()
    }

    fn embed_vec(&self, y: &[C]) -> PureState {
        let mut amplitudes = DVector::zeros(dimension(self.j_max));
        for (&k, &v) in self.indices.iter().zip(y) {
            amplitudes[k] = v;
        }
        PureState {
            j_max: self.j_max,
            amplitudes,
        }
    }

    fn restrict_mat(&self, sigma: &DensityMatrix) -> Vec<C> {
        let n = self.len();
        let mut out = vec![ZERO; n * n];
        for (r, &gr) in self.indices.iter().enumerate() {
            for (c, &gc) in self.indices.iter().enumerate() {
                out[r * n + c] = sigma.entries[(gr, gc)];
            }
        }
        out
    }

    fn embed_mat(&self, y: &[C]) -> DensityMatrix {
        let n = self.len();
        let d = dimension(self.j_max);
        let mut entries = DMatrix::zeros(d, d);
        for (r, &gr) in self.indices.iter().enumerate() {
            for (c, &gc) in self.indices.iter().enumerate() {
                entries[(gr, gc)] = y[r * n + c];
            }
        }
        DensityMatrix {
            j_max: self.j_max,
            entries,
        }
    }

    /// `e^{-i E_a t}` per basis vector.
    fn vector_phases(&self, t: f64) -> Vec<C> {
        self.energies
            .iter()
            .map(|e| C::from_polar(1.0, -e * t))
            .collect()
    }

    /// `e^{-i (E_a - E_b) t}` per matrix entry, row-major.
    fn matrix_phases(&self, t: f64) -> Vec<C> {
        let v = self.vector_phases(t);
        let mut out = Vec::with_capacity(v.len() * v.len());
        for a in &v {
            for b in &v {
                out.push(a * b.conj());
            }
        }
        out
    }
}

/// Right-hand side in the interaction picture of the kinetic term.
trait Rhs {
    fn eval(&mut self, y: &[C], out: &mut [C]);
}

/// `-i G ψ` for a (possibly non-Hermitian) `G`.
struct VectorRhs<'a> {
    g: &'a Csr,
}

impl Rhs for VectorRhs<'_> {
    fn eval(&mut self, y: &[C], out: &mut [C]) {
        self.g.mul_vec(y, out);
        for o in out.iter_mut() {
            *o = C::new(o.im, -o.re);
        }
    }
}

/// `-i (G σ - σ G†) + Σ_c A_c σ A_c†` with `G = V - (i/2) Σ S†S`.
struct MasterRhs<'a> {
    g: &'a Csr,
    channels: &'a [Csr],
    n: usize,
    y: Vec<C>,
    z: Vec<C>,
    zt: Vec<C>,
}

impl<'a> MasterRhs<'a> {
    fn new(g: &'a Csr, channels: &'a [Csr], n: usize) -> Self {
        Self {
            g,
            channels,
            n,
            y: vec![ZERO; n * n],
            z: vec![ZERO; n * n],
            zt: vec![ZERO; n * n],
        }
    }
}

fn adjoint_into(src: &[C], dst: &mut [C], n: usize) {
    for r in 0..n {
        for c in 0..n {
            dst[c * n + r] = src[r * n + c].conj();
        }
    }
}

impl Rhs for MasterRhs<'_> {
    fn eval(&mut self, sigma: &[C], out: &mut [C]) {
        let n = self.n;
        // Y = G σ; -i (Y - Y†).
        self.g.mul_dense(sigma, &mut self.y);
        for r in 0..n {
            for c in 0..n {
                let d = self.y[r * n + c] - self.y[c * n + r].conj();
                out[r * n + c] = C::new(d.im, -d.re);
            }
        }
        for a in self.channels {
            // A σ A† = A (A σ)† for Hermitian σ.
            a.mul_dense(sigma, &mut self.z);
            adjoint_into(&self.z, &mut self.zt, n);
            a.mul_dense(&self.zt, &mut self.z);
            for (o, v) in out.iter_mut().zip(&self.z) {
                *o += v;
            }
        }
    }
}

/// Lawson fourth-order step on a flat array with elementwise propagator
/// phases `full = P_h` and `half = P_{h/2}`.
struct Lawson {
    k1: Vec<C>,
    k2: Vec<C>,
    k3: Vec<C>,
    k4: Vec<C>,
    tmp: Vec<C>,
}

impl Lawson {
    fn new(len: usize) -> Self {
        let z = vec![ZERO; len];
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }

    fn step(&mut self, y: &mut [C], h: f64, full: &[C], half: &[C], rhs: &mut impl Rhs) {
        let hh = 0.5 * h;
        rhs.eval(y, &mut self.k1);
        for i in 0..y.len() {
            self.tmp[i] = (y[i] + self.k1[i] * hh) * half[i];
        }
        rhs.eval(&self.tmp, &mut self.k2);
        for i in 0..y.len() {
            self.tmp[i] = y[i] * half[i] + self.k2[i] * hh;
        }
        rhs.eval(&self.tmp, &mut self.k3);
        for i in 0..y.len() {
            self.tmp[i] = y[i] * full[i] + self.k3[i] * half[i] * h;
        }
        rhs.eval(&self.tmp, &mut self.k4);
        let (h6, h3) = (h / 6.0, h / 3.0);
        for i in 0..y.len() {
            y[i] = (y[i] + self.k1[i] * h6) * full[i]
                + (self.k2[i] + self.k3[i]) * half[i] * h3
                + self.k4[i] * h6;
        }
    }
}

fn check_dims(p: &ModelParams, j_max: u32) -> Result<()> {
    if p.j_max != j_max {
        return Err(Error::domain(format!(
            "state built for j_max = {j_max} but parameters use j_max = {}",
            p.j_max
        )));
    }
    Ok(())
}

fn warn_on_step(p: &ModelParams, h: f64) {
    if h * p.u * (1.0 + p.gamma_ratio) > 0.1 {
        log::warn!("dt = {h} is large compared with the coupling u = {}", p.u);
    }
}

/// Schrödinger evolution with `H = T + V`, handing each recorded state to
/// `observer`. Returns the step plan used.
pub fn evolve_unitary_with(
    psi0: &PureState,
    p: &ModelParams,
    cfg: &EvolutionConfig,
    mut observer: impl FnMut(f64, &PureState) -> Result<()>,
) -> Result<StepPlan> {
    check_dims(p, psi0.j_max)?;
    let plan = cfg.plan()?;
    warn_on_step(p, plan.h);
    let sector = Sector::for_vector(psi0);
    let g = sector.restrict_op(&potential(p));
    let full = sector.vector_phases(plan.h);
    let half = sector.vector_phases(0.5 * plan.h);
    let mut y = sector.restrict_vec(psi0);
    let mut lawson = Lawson::new(y.len());
    let mut rhs = VectorRhs { g: &g };

    let mut emit = |step: usize, y: &[C]| -> Result<()> {
        let tau = step as f64 * plan.h;
        let psi = sector.embed_vec(y);
        check_tail(&ObservableRecord::from_pure(tau, &psi), cfg.tail_tolerance)?;
        observer(tau, &psi)
    };
    let records = plan.record_steps();
    let mut next = records.iter().peekable();
    for step in 0..=plan.n_steps {
        if step > 0 {
            lawson.step(&mut y, plan.h, &full, &half, &mut rhs);
        }
        if next.peek() == Some(&&step) {
            next.next();
            emit(step, &y)?;
        }
    }
    Ok(plan)
}

/// Schrödinger evolution with `H = T + V`; `gamma_ratio` is ignored.
pub fn evolve_unitary(
    psi0: &PureState,
    p: &ModelParams,
    cfg: &EvolutionConfig,
) -> Result<Vec<TimedState<PureState>>> {
    let mut out = Vec::new();
    evolve_unitary_with(psi0, p, cfg, |tau, psi| {
        out.push(TimedState {
            tau,
            state: psi.clone(),
        });
        Ok(())
    })?;
    Ok(out)
}

const EIGENVALUE_FLOOR: f64 = -1e-6;

/// Lindblad evolution with the three jump operators, handing each recorded
/// density matrix to `observer`.
pub fn evolve_master_with(
    sigma0: &DensityMatrix,
    p: &ModelParams,
    cfg: &EvolutionConfig,
    mut observer: impl FnMut(f64, &DensityMatrix) -> Result<()>,
) -> Result<StepPlan> {
    check_dims(p, sigma0.j_max)?;
    sigma0.validate(1e-10)?;
    let plan = cfg.plan()?;
    warn_on_step(p, plan.h);
    let sector = Sector::for_matrix(sigma0);
    let n = sector.len();

    let s = jump_operators(p);
    let decay = s.iter().fold(OperatorMatrix::zeros(p.dim()), |acc, op| {
        acc.add(&op.adjoint().matmul(op))
    });
    let g = sector.restrict_op(&potential(p).add(&decay.scale(C::new(0.0, -0.5))));
    // Rotate (S_x, S_y) into the m-raising and m-lowering combinations; the
    // dissipator is unchanged and each channel becomes sparser.
    let root_half = C::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let plus = s[0].add(&s[1].scale(C::new(0.0, 1.0))).scale(root_half);
    let minus = s[0].add(&s[1].scale(C::new(0.0, -1.0))).scale(root_half);
    let channels: Vec<Csr> = [plus, minus, s[2].clone()]
        .iter()
        .map(|op| sector.restrict_op(op))
        .filter(|csr| !csr.is_empty())
        .collect();

    let full = sector.matrix_phases(plan.h);
    let half = sector.matrix_phases(0.5 * plan.h);
    let mut y = sector.restrict_mat(sigma0);
    let mut lawson = Lawson::new(n * n);
    let mut rhs = MasterRhs::new(&g, &channels, n);

    let mut emit = |step: usize, y: &[C]| -> Result<()> {
        let tau = step as f64 * plan.h;
        let sigma = sector.embed_mat(y);
        check_tail(
            &ObservableRecord::from_density(tau, &sigma),
            cfg.tail_tolerance,
        )?;
        let local = DMatrix::from_row_slice(n, n, y);
        let low = local.symmetric_eigenvalues().min();
        if low < EIGENVALUE_FLOOR {
            return Err(Error::Numerical(format!(
                "density matrix eigenvalue {low:.3e} at tau = {tau}; reduce dt"
            )));
        }
        observer(tau, &sigma)
    };
    let records = plan.record_steps();
    let mut next = records.iter().peekable();
    for step in 0..=plan.n_steps {
        if step > 0 {
            lawson.step(&mut y, plan.h, &full, &half, &mut rhs);
            hermitize(&mut y, n);
        }
        if next.peek() == Some(&&step) {
            next.next();
            emit(step, &y)?;
        }
    }
    Ok(plan)
}

fn hermitize(y: &mut [C], n: usize) {
    for r in 0..n {
        y[r * n + r].im = 0.0;
        for c in 0..r {
            let avg = (y[r * n + c] + y[c * n + r].conj()) * 0.5;
            y[r * n + c] = avg;
            y[c * n + r] = avg.conj();
        }
    }
}

/// Lindblad evolution with the three jump operators.
pub fn evolve_master(
    sigma0: &DensityMatrix,
    p: &ModelParams,
    cfg: &EvolutionConfig,
) -> Result<Vec<TimedState<DensityMatrix>>> {
    let mut out = Vec::new();
    evolve_master_with(sigma0, p, cfg, |tau, sigma| {
        out.push(TimedState {
            tau,
            state: sigma.clone(),
        });
        Ok(())
    })?;
    Ok(out)
}

/// One quantum jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub tau: f64,
    pub channel: Axis,
}

/// Recorded (normalised) states and jumps of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<TimedState<PureState>>,
    pub jumps: Vec<JumpEvent>,
}

/// Operators of the no-jump evolution and the jump channels restricted to a
/// sector; shared read-only between trajectories.
struct TrajectoryModel {
    sector: Sector,
    plan: StepPlan,
    g: Csr,
    jumps: Vec<(Axis, Csr)>,
    full: Vec<C>,
    half: Vec<C>,
    stochastic: bool,
}

impl TrajectoryModel {
    fn new(psi0: &PureState, p: &ModelParams, cfg: &EvolutionConfig) -> Result<Self> {
        check_dims(p, psi0.j_max)?;
        let plan = cfg.plan()?;
        warn_on_step(p, plan.h);
        let sector = Sector::for_vector(psi0);
        let s = jump_operators(p);
        let decay = s.iter().fold(OperatorMatrix::zeros(p.dim()), |acc, op| {
            acc.add(&op.adjoint().matmul(op))
        });
        let g = sector.restrict_op(&potential(p).add(&decay.scale(C::new(0.0, -0.5))));
        let jumps = [Axis::X, Axis::Y, Axis::Z]
            .into_iter()
            .zip(s.iter())
            .map(|(axis, op)| (axis, sector.restrict_op(op)))
            .collect();
        Ok(Self {
            full: sector.vector_phases(plan.h),
            half: sector.vector_phases(0.5 * plan.h),
            sector,
            plan,
            g,
            jumps,
            stochastic: p.jump_rate() > 0.0,
        })
    }

    /// Runs one trajectory, passing each record's normalised sector vector to
    /// `observer`.
    fn run(
        &self,
        psi0: &PureState,
        seed: u64,
        stream: u64,
        jumps: &mut Vec<JumpEvent>,
        mut observer: impl FnMut(usize, &[C]),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let draw = |rng: &mut ChaCha8Rng| 1.0 - rng.random::<f64>();
        let mut threshold = draw(&mut rng);

        let mut y = self.sector.restrict_vec(psi0);
        let norm0 = norm_sqr(&y).sqrt();
        y.iter_mut().for_each(|v| *v /= norm0);
        let mut lawson = Lawson::new(y.len());
        let mut rhs = VectorRhs { g: &self.g };
        let mut scratch = vec![ZERO; y.len()];
        let mut normalized = vec![ZERO; y.len()];

        let records = self.plan.record_steps();
        let mut next = records.iter().enumerate().peekable();
        for step in 0..=self.plan.n_steps {
            if step > 0 {
                lawson.step(&mut y, self.plan.h, &self.full, &self.half, &mut rhs);
                if self.stochastic && norm_sqr(&y) <= threshold {
                    let tau = step as f64 * self.plan.h;
                    let weights: Vec<f64> = self
                        .jumps
                        .iter()
                        .map(|(_, op)| {
                            op.mul_vec(&y, &mut scratch);
                            norm_sqr(&scratch)
                        })
                        .collect();
                    let total: f64 = weights.iter().sum();
                    if total > 0.0 {
                        let mut pick = rng.random::<f64>() * total;
                        let mut chosen = weights.len() - 1;
                        for (i, w) in weights.iter().enumerate() {
                            if pick < *w {
                                chosen = i;
                                break;
                            }
                            pick -= w;
                        }
                        let (axis, op) = &self.jumps[chosen];
                        op.mul_vec(&y, &mut scratch);
                        y.copy_from_slice(&scratch);
                        jumps.push(JumpEvent {
                            tau,
                            channel: *axis,
                        });
                    }
                    let norm = norm_sqr(&y).sqrt();
                    y.iter_mut().for_each(|v| *v /= norm);
                    threshold = draw(&mut rng);
                }
            }
            if let Some(&(record, &s)) = next.peek() {
                if s == step {
                    next.next();
                    let norm = norm_sqr(&y).sqrt();
                    for (o, v) in normalized.iter_mut().zip(&y) {
                        *o = v / norm;
                    }
                    observer(record, &normalized);
                }
            }
        }
    }
}

fn norm_sqr(y: &[C]) -> f64 {
    y.iter().map(|v| v.norm_sqr()).sum()
}

/// Single Monte-Carlo wave-function trajectory. The no-jump evolution uses
/// `T + V - (i/2) Σ_i S_i†S_i`; a jump through channel `S_i` happens when
/// `‖ψ‖²` falls below a uniform threshold, with probability proportional to
/// `‖S_i ψ‖²`. The random stream is `(cfg.seed, stream_id)`.
pub fn evolve_trajectory(
    psi0: &PureState,
    p: &ModelParams,
    cfg: &EvolutionConfig,
    stream_id: u64,
) -> Result<Trajectory> {
    let model = TrajectoryModel::new(psi0, p, cfg)?;
    let times = model.plan.record_times();
    let mut states = Vec::with_capacity(times.len());
    let mut jumps = Vec::new();
    model.run(psi0, cfg.seed, stream_id, &mut jumps, |record, y| {
        states.push(TimedState {
            tau: times[record],
            state: model.sector.embed_vec(y),
        });
    });
    for s in &states {
        check_tail(
            &ObservableRecord::from_pure(s.tau, &s.state),
            cfg.tail_tolerance,
        )?;
    }
    Ok(Trajectory { states, jumps })
}

/// Mean and standard error of the trajectory average of one quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub standard_error: f64,
}

/// Statistics of the ensemble at one recorded time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRecord {
    /// Observables of the averaged density matrix.
    pub observables: ObservableRecord,
    pub jx: Estimate,
    pub jz: Estimate,
    /// Variance of `J_z` in the averaged state; error by the delta method.
    pub jz_var: Estimate,
    pub populations: Vec<Estimate>,
}

/// Result of [`ensemble_average`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub density: Vec<TimedState<DensityMatrix>>,
    pub records: Vec<EnsembleRecord>,
    /// Mean number of jumps per trajectory over the whole run.
    pub mean_jumps: Estimate,
}

/// Running sums for one record.
#[derive(Debug, Clone)]
struct Moments {
    sigma: Vec<C>,
    jx: [f64; 2],
    jz: [f64; 2],
    jz2: [f64; 2],
    jz_jz2: f64,
    populations: Vec<[f64; 2]>,
}

/// Trajectories run in parallel in batches of this many; sums are then added
/// in trajectory order, so the result does not depend on the thread count.
const ENSEMBLE_BATCH: usize = 32;

/// Average of `|ψ⟩⟨ψ|/⟨ψ|ψ⟩` over `cfg.n_traj` trajectories with streams
/// `0..n_traj`, together with sample statistics of the observables.
pub fn ensemble_average(
    psi0: &PureState,
    p: &ModelParams,
    cfg: &EvolutionConfig,
) -> Result<EnsembleResult> {
    let model = TrajectoryModel::new(psi0, p, cfg)?;
    let times = model.plan.record_times();
    let n = model.sector.len();
    let j_max = p.j_max;
    let local: Vec<BasisIndex> = model
        .sector
        .indices
        .iter()
        .map(|&k| BasisIndex::from_position(k))
        .collect();

    let mut acc: Vec<Moments> = (0..times.len())
        .map(|_| Moments {
            sigma: vec![ZERO; n * n],
            jx: [0.0; 2],
            jz: [0.0; 2],
            jz2: [0.0; 2],
            jz_jz2: 0.0,
            populations: vec![[0.0; 2]; j_max as usize + 1],
        })
        .collect();
    let mut jump_sum = [0.0f64; 2];

    let mut start = 0;
    while start < cfg.n_traj {
        let end = (start + ENSEMBLE_BATCH).min(cfg.n_traj);
        let batch: Vec<(Vec<Vec<C>>, usize)> = (start..end)
            .into_par_iter()
            .map(|index| {
                let mut states = Vec::with_capacity(times.len());
                let mut jumps = Vec::new();
                model.run(psi0, cfg.seed, index as u64, &mut jumps, |_, y| {
                    states.push(y.to_vec())
                });
                (states, jumps.len())
            })
            .collect();
        for (states, n_jumps) in batch {
            let k = n_jumps as f64;
            jump_sum[0] += k;
            jump_sum[1] += k * k;
            for (slot, y) in acc.iter_mut().zip(&states) {
                for r in 0..n {
                    let yr = y[r];
                    let row = &mut slot.sigma[r * n..(r + 1) * n];
                    for (o, yc) in row.iter_mut().zip(y) {
                        *o += yr * yc.conj();
                    }
                }
                let (jx, jz, jz2, pops) = local_moments(&local, y, j_max);
                slot.jx[0] += jx;
                slot.jx[1] += jx * jx;
                slot.jz[0] += jz;
                slot.jz[1] += jz * jz;
                slot.jz2[0] += jz2;
                slot.jz2[1] += jz2 * jz2;
                slot.jz_jz2 += jz * jz2;
                for (s, v) in slot.populations.iter_mut().zip(pops) {
                    s[0] += v;
                    s[1] += v * v;
                }
            }
        }
        start = end;
    }

    let count = cfg.n_traj as f64;
    let estimate = |s: [f64; 2]| {
        let mean = s[0] / count;
        let var = if cfg.n_traj > 1 {
            ((s[1] / count - mean * mean) * count / (count - 1.0)).max(0.0)
        } else {
            0.0
        };
        Estimate {
            mean,
            standard_error: (var / count).sqrt(),
        }
    };

    let mut density = Vec::with_capacity(times.len());
    let mut records = Vec::with_capacity(times.len());
    for (tau, slot) in times.iter().zip(acc) {
        let mean: Vec<C> = slot.sigma.iter().map(|v| v / count).collect();
        let sigma = model.sector.embed_mat(&mean);
        let observables = ObservableRecord::from_density(*tau, &sigma);
        check_tail(&observables, cfg.tail_tolerance)?;

        let jz = estimate(slot.jz);
        let jz2 = estimate(slot.jz2);
        let cov = if cfg.n_traj > 1 {
            (slot.jz_jz2 / count - jz.mean * jz2.mean) * count / (count - 1.0) / count
        } else {
            0.0
        };
        let var_of_var = 4.0 * jz.mean * jz.mean * jz.standard_error.powi(2) - 4.0 * jz.mean * cov
            + jz2.standard_error.powi(2);
        records.push(EnsembleRecord {
            jx: estimate(slot.jx),
            jz,
            jz_var: Estimate {
                mean: jz2.mean - jz.mean * jz.mean,
                standard_error: var_of_var.max(0.0).sqrt(),
            },
            populations: slot.populations.iter().map(|s| estimate(*s)).collect(),
            observables,
        });
        density.push(TimedState {
            tau: *tau,
            state: sigma,
        });
    }
    Ok(EnsembleResult {
        density,
        records,
        mean_jumps: estimate(jump_sum),
    })
}

fn local_moments(local: &[BasisIndex], y: &[C], j_max: u32) -> (f64, f64, f64, Vec<f64>) {
    let mut jx = 0.0;
    let mut jz = 0.0;
    let mut jz2 = 0.0;
    let mut pops = vec![0.0; j_max as usize + 1];
    for (i, b) in local.iter().enumerate() {
        let p = y[i].norm_sqr();
        let m = b.m as f64;
        jz += m * p;
        jz2 += m * m * p;
        pops[b.j as usize] += p;
        // Within a sector each j block is contiguous, so |j, m+1⟩ is next.
        if b.m < b.j as i32 {
            jx += raising(b.j, b.m) * (y[i + 1] * y[i].conj()).re;
        }
    }
    (jx, jz, jz2, pops)
}

/// Time during which heating of the vibrational motion stays negligible,
/// `Δ² / (η² Γ ω_ν Ω_R)`, in seconds for angular frequencies in rad/s.
///
/// Example: `Δ = 10¹³`, `Γ = 10¹¹` (`Γ/Δ = 0.01`), `η = 10`, `ω_ν = 10⁸`,
/// `Ω_R = 10⁶` give 0.1 s, i.e. about `1.6 × 10⁴` periods `2π/ω_ν`.
pub fn max_interaction_time(
    delta: f64,
    eta: f64,
    gamma: f64,
    omega_nu: f64,
    omega_r: f64,
) -> Result<f64> {
    for (name, value) in [
        ("delta", delta),
        ("eta", eta),
        ("gamma", gamma),
        ("omega_nu", omega_nu),
        ("omega_R", omega_r),
    ] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::domain(format!(
                "{name} must be positive, got {value}"
            )));
        }
    }
    Ok(delta * delta / (eta * eta * gamma * omega_nu * omega_r))
}

/// Reduced Planck constant in J s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Raman Rabi frequency `|d_ge E₀|² / (4 ħ² Δ)` in rad/s, for a transition
/// dipole in C m, field amplitude in V/m and detuning in rad/s.
pub fn raman_rabi_frequency(d_ge: f64, e0: f64, delta: f64) -> Result<f64> {
    for (name, value) in [("d_ge", d_ge), ("E0", e0), ("delta", delta)] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::domain(format!(
                "{name} must be positive, got {value}"
            )));
        }
    }
    Ok((d_ge * e0).powi(2) / (4.0 * HBAR * HBAR * delta))
}

/// `J_x`, `J_z` matrices, exposed for callers that need more observables.
pub fn observable_operators(j_max: u32) -> (OperatorMatrix, OperatorMatrix) {
    let [jx, _, jz] = angular_momentum_matrices(j_max);
    (jx, jz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{coherent_state, effective_hamiltonian, kinetic, CoherentSpec};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn cfg(dt: f64, t_end: f64, stride: usize) -> EvolutionConfig {
        EvolutionConfig {
            dt,
            t_end,
            record_stride: stride,
            ..Default::default()
        }
    }

    fn psi1(j_max: u32) -> PureState {
        coherent_state(2, FRAC_PI_2, 0.0, j_max).unwrap()
    }

    /// Exact propagator `e^{-i H t}` from the Hermitian eigendecomposition.
    fn exact_unitary(h: &OperatorMatrix, t: f64) -> DMatrix<C> {
        let eig = h.0.clone().symmetric_eigen();
        let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| C::from_polar(1.0, -e * t)));
        &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
    }

    #[test]
    fn step_plan_and_records() {
        let plan = cfg(0.05, 1165.0, 100).plan().unwrap();
        assert_eq!(plan.n_steps, 23300);
        let times = plan.record_times();
        assert_eq!(times.len(), 234);
        assert_abs_diff_eq!(times[233], 1165.0, epsilon = 1e-9);
        let auto = cfg(0.001, 100.0, 0).plan().unwrap();
        assert!(auto.record_steps().len() <= 5001);
        let odd = cfg(0.3, 1.0, 1).plan().unwrap();
        assert_eq!(odd.n_steps, 4);
        assert!(cfg(0.0, 1.0, 1).plan().is_err());
    }

    #[test]
    fn free_rotor_phases() {
        let p = ModelParams::new(0.0, 0.0, 6).unwrap();
        let psi = PureState::basis_vector(6, BasisIndex { j: 3, m: -1 }).unwrap();
        let out = evolve_unitary(&psi, &p, &cfg(0.1, 2.0, 5)).unwrap();
        for rec in &out {
            let a = rec.state.amplitudes[BasisIndex { j: 3, m: -1 }.position()];
            assert!((a - C::from_polar(1.0, -12.0 * rec.tau)).norm() < 1e-12);
        }
    }

    #[test]
    fn unitary_matches_exact_propagator() {
        let p = ModelParams::new(0.1, 0.0, 8).unwrap();
        let psi = psi1(8);
        let h = kinetic(8).add(&potential(&p));
        let out = evolve_unitary(&psi, &p, &cfg(0.02, 200.0, 2500)).unwrap();
        for rec in &out {
            let exact = exact_unitary(&h, rec.tau) * &psi.amplitudes;
            assert!(
                (&rec.state.amplitudes - exact).norm() < 1e-7,
                "tau = {}",
                rec.tau
            );
        }
    }

    #[test]
    fn unitary_conserves_jz_moments_and_parity() {
        let p = ModelParams::new(0.3, 0.0, 10).unwrap();
        let one = C::new(1.0, 0.0);
        let psi = crate::basis::superposition_state(
            &[
                (
                    one,
                    CoherentSpec {
                        j: 2,
                        alpha: 1.0,
                        beta: 0.3,
                    },
                ),
                (
                    C::new(0.0, 0.5),
                    CoherentSpec {
                        j: 3,
                        alpha: 2.0,
                        beta: -1.0,
                    },
                ),
            ],
            10,
        )
        .unwrap();
        let out = evolve_unitary(&psi, &p, &cfg(0.005, 50.0, 1000)).unwrap();
        let first = ObservableRecord::from_pure(0.0, &psi);
        let odd = |r: &ObservableRecord| r.populations.iter().skip(1).step_by(2).sum::<f64>();
        for rec in &out {
            let obs = ObservableRecord::from_pure(rec.tau, &rec.state);
            assert_abs_diff_eq!(rec.state.norm_sqr(), 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(obs.jz_mean, first.jz_mean, epsilon = 1e-9);
            assert_abs_diff_eq!(obs.jz_var, first.jz_var, epsilon = 1e-9);
            assert_abs_diff_eq!(odd(&obs), odd(&first), epsilon = 1e-9);
        }
    }

    #[test]
    fn master_without_decay_is_the_unitary_projector() {
        let p = ModelParams::new(0.1, 0.0, 6).unwrap();
        let psi = psi1(6);
        let c = cfg(0.01, 30.0, 500);
        let pure = evolve_unitary(&psi, &p, &c).unwrap();
        let mixed = evolve_master(&DensityMatrix::from_pure(&psi), &p, &c).unwrap();
        for (a, b) in pure.iter().zip(&mixed) {
            let proj = DensityMatrix::from_pure(&a.state);
            assert!((proj.entries - &b.state.entries).norm() < 1e-8);
        }
    }

    #[test]
    fn master_matches_dense_reference() {
        // Reference: plain RK4 on the dense Lindblad generator with a tiny step.
        let p = ModelParams::new(0.4, 0.05, 4).unwrap();
        let psi = coherent_state(1, 1.1, 0.4, 4).unwrap();
        let sigma0 = DensityMatrix::from_pure(&psi);
        let h = kinetic(4).add(&potential(&p)).0;
        let s = jump_operators(&p);
        let k = s
            .iter()
            .fold(DMatrix::zeros(25, 25), |acc: DMatrix<C>, op| {
                acc + op.0.adjoint() * &op.0
            });
        let rhs = |r: &DMatrix<C>| -> DMatrix<C> {
            let mut out = (&h * r - r * &h) * C::new(0.0, -1.0);
            for op in &s {
                out += &op.0 * r * op.0.adjoint();
            }
            out - (&k * r + r * &k) * C::new(0.5, 0.0)
        };
        let mut r = sigma0.entries.clone();
        let dt = 0.0025;
        for _ in 0..(10.0 / dt) as usize {
            let k1 = rhs(&r);
            let k2 = rhs(&(&r + &k1 * C::new(dt / 2.0, 0.0)));
            let k3 = rhs(&(&r + &k2 * C::new(dt / 2.0, 0.0)));
            let k4 = rhs(&(&r + &k3 * C::new(dt, 0.0)));
            r += (k1 + k2 * C::new(2.0, 0.0) + k3 * C::new(2.0, 0.0) + k4) * C::new(dt / 6.0, 0.0);
        }
        let c = EvolutionConfig {
            tail_tolerance: 1.0,
            ..cfg(0.01, 10.0, 1000)
        };
        let out = evolve_master(&sigma0, &p, &c).unwrap();
        let last = &out.last().unwrap().state;
        assert!((&last.entries - r).norm() < 1e-7);
        assert_abs_diff_eq!(last.trace().re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn master_decoheres_and_heats() {
        let p = ModelParams::new(0.1, 0.01, 8).unwrap();
        let out = evolve_master(
            &DensityMatrix::from_pure(&psi1(8)),
            &p,
            &cfg(0.1, 300.0, 100),
        )
        .unwrap();
        let recs: Vec<_> = out
            .iter()
            .map(|s| ObservableRecord::from_density(s.tau, &s.state))
            .collect();
        assert_abs_diff_eq!(recs[0].jz_var, 1.0, epsilon = 1e-12);
        for w in recs.windows(2) {
            assert!(w[1].jz_var >= w[0].jz_var - 1e-12);
            assert_abs_diff_eq!(w[1].populations.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
        assert!(recs.last().unwrap().purity < 1.0 - 1e-4);
    }

    #[test]
    fn truncation_is_detected() {
        let p = ModelParams::new(20.0, 0.0, 3).unwrap();
        let psi = PureState::basis_vector(3, BasisIndex { j: 1, m: 0 }).unwrap();
        let err = evolve_unitary(&psi, &p, &cfg(0.001, 1.0, 10)).unwrap_err();
        assert!(matches!(err, Error::Truncation { .. }));
    }

    #[test]
    fn trajectory_without_decay_is_unitary() {
        let p = ModelParams::new(0.1, 0.0, 6).unwrap();
        let c = cfg(0.02, 40.0, 100);
        let traj = evolve_trajectory(&psi1(6), &p, &c, 3).unwrap();
        assert!(traj.jumps.is_empty());
        let pure = evolve_unitary(&psi1(6), &p, &c).unwrap();
        for (a, b) in traj.states.iter().zip(&pure) {
            assert!((&a.state.amplitudes - &b.state.amplitudes).norm() < 1e-8);
        }
        let ens = ensemble_average(&psi1(6), &p, &EvolutionConfig { n_traj: 1, ..c }).unwrap();
        for (a, b) in ens.density.iter().zip(&pure) {
            let proj = DensityMatrix::from_pure(&b.state);
            assert!((&a.state.entries - proj.entries).norm() < 1e-8);
        }
    }

    #[test]
    fn jump_channels_respect_selection_rules() {
        let p = ModelParams::new(0.5, 0.5, 8).unwrap();
        let psi = PureState::basis_vector(8, BasisIndex { j: 2, m: 1 }).unwrap();
        let c = cfg(0.01, 20.0, 1);
        let traj = evolve_trajectory(&psi, &p, &c, 0).unwrap();
        assert!(!traj.jumps.is_empty());
        let mut m_now = 1.0;
        let mut jumps = traj.jumps.iter().peekable();
        for s in &traj.states {
            let obs = ObservableRecord::from_pure(s.tau, &s.state);
            if let Some(jump) = jumps.peek() {
                if (jump.tau - s.tau).abs() < 1e-9 {
                    let shifted = (obs.jz_mean - m_now).abs() > 0.5;
                    assert_eq!(shifted, jump.channel != Axis::Z);
                    jumps.next();
                }
            }
            // Between jumps the state keeps a sharp m.
            assert_abs_diff_eq!(obs.jz_var, 0.0, epsilon = 1e-9);
            m_now = obs.jz_mean;
        }
    }

    #[test]
    fn jump_count_matches_master_flux() {
        let p = ModelParams::new(0.5, 0.1, 6).unwrap();
        let c = EvolutionConfig {
            n_traj: 400,
            seed: 11,
            tail_tolerance: 1.0,
            ..cfg(0.01, 20.0, 10)
        };
        let psi = psi1(6);
        let ens = ensemble_average(&psi, &p, &c).unwrap();
        let s = jump_operators(&p);
        let flux: Vec<f64> = evolve_master(&DensityMatrix::from_pure(&psi), &p, &c)
            .unwrap()
            .iter()
            .map(|rec| {
                s.iter()
                    .map(|op| op.adjoint().matmul(op).trace_with(&rec.state).re)
                    .sum()
            })
            .collect();
        let h = 0.1;
        let integral: f64 = flux.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum();
        let diff = (ens.mean_jumps.mean - integral).abs();
        assert!(
            diff < 3.0 * ens.mean_jumps.standard_error,
            "{diff} vs {:?}",
            ens.mean_jumps
        );
    }

    #[test]
    fn ensemble_is_reproducible() {
        let p = ModelParams::new(0.1, 0.05, 5).unwrap();
        let c = EvolutionConfig {
            n_traj: 50,
            seed: 9,
            tail_tolerance: 1.0,
            ..cfg(0.05, 20.0, 40)
        };
        let a = ensemble_average(&psi1(5), &p, &c).unwrap();
        let b = ensemble_average(&psi1(5), &p, &c).unwrap();
        assert_eq!(a, b);
        let other = ensemble_average(&psi1(5), &p, &EvolutionConfig { seed: 10, ..c }).unwrap();
        assert_ne!(a.records, other.records);
    }

    #[test]
    fn observables_of_reference_states() {
        let rec = observables(&DensityMatrix::from_pure(&psi1(4)));
        assert_abs_diff_eq!(rec.jx_mean, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(rec.jz_var, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(rec.purity, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(rec.populations[2], 1.0, epsilon = 1e-14);
        let d = dimension(3);
        let mixed = DensityMatrix::from_entries(3, DMatrix::identity(d, d) / C::new(d as f64, 0.0))
            .unwrap();
        assert_abs_diff_eq!(observables(&mixed).purity, 1.0 / d as f64, epsilon = 1e-15);
        let (jx, _) = observable_operators(4);
        assert_abs_diff_eq!(jx.expectation(&psi1(4)).re, rec.jx_mean, epsilon = 1e-14);
    }

    #[test]
    fn effective_hamiltonian_identity_in_evolution_units() {
        let p = ModelParams::new(0.1, 0.01, 12).unwrap();
        let residual = effective_hamiltonian(&p)
            .add(&kinetic(12).add(&potential(&p)).scale(C::new(-1.0, 0.0)))
            .add(
                &jump_operators(&p)
                    .iter()
                    .fold(OperatorMatrix::zeros(p.dim()), |acc, s| {
                        acc.add(&s.adjoint().matmul(s))
                    })
                    .scale(C::new(0.0, 0.5)),
            )
            .truncated(10);
        assert!(residual.0.norm() < 1e-10);
    }

    #[test]
    fn interaction_time_scaling() {
        let base = max_interaction_time(1e13, 10.0, 1e11, 1e8, 1e6).unwrap();
        assert_abs_diff_eq!(base, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(
            max_interaction_time(2e13, 10.0, 1e11, 1e8, 1e6).unwrap(),
            4.0 * base,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            max_interaction_time(1e13, 20.0, 1e11, 1e8, 1e6).unwrap(),
            base / 4.0,
            epsilon = 1e-15
        );
        assert!(max_interaction_time(0.0, 1.0, 1.0, 1.0, 1.0).is_err());
        let omega = raman_rabi_frequency(1e-29, 1e7, 1e13).unwrap();
        assert_abs_diff_eq!(
            omega / (1e-44 / (4.0 * HBAR * HBAR * 1e13)),
            1.0,
            epsilon = 1e-14
        );
        assert!(raman_rabi_frequency(-1.0, 1.0, 1.0).is_err());
    }
}
