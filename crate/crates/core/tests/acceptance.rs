//! Acceptance checks for the whole toolkit. Prints one `PASS`/`FAIL` line per
//! criterion with its runtime and the measured quantities, and exits with a
//! failure status if any criterion fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rotordyn::basis::{
    effective_hamiltonian, jump_operators, kinetic, potential, ModelParams, OperatorMatrix,
};
use rotordyn::classical::{
    conserved_quantities, costheta_analytic, integrate_ode, lab_angular_momentum,
    solution_constants, ClassicalParams, ClassicalState,
};
use rotordyn::evolution::{
    ensemble_average, evolve_master, evolve_unitary_with, EvolutionConfig, ObservableRecord,
};
use rotordyn::runner::{parse_config_with, preset, run_deterministic, wigner_snapshots, Scenario};
use rotordyn::spectrum::{eigenenergies_numeric, eigenenergies_perturbative, level_shift_table};
use rotordyn::wigner::{sphere_integral, WignerGrid};

type Check = (bool, String);

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
    limit: Option<Duration>,
}

fn timed(name: &'static str, limit: Option<Duration>, f: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = f();
    let elapsed = start.elapsed();
    Outcome {
        name,
        pass,
        detail,
        elapsed,
        limit,
    }
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

// ---------------------------------------------------------------------------
// Classical

const U_CLASSICAL: f64 = 0.025;
/// Initial `θ'` of the tumbling (`ε = 0.024`) and librating (`ε = -0.1`)
/// orbits starting at the pole.
const SOLID_THETA_DOT: f64 = 0.32;
const DASHED_THETA_DOT: f64 = 0.30;

fn polar_start(theta_dot: f64) -> (ClassicalParams, ClassicalState) {
    let p = ClassicalParams::new(0.0, U_CLASSICAL).unwrap();
    (
        p,
        ClassicalState {
            theta: 0.0,
            phi: 0.0,
            theta_dot,
            phi_dot: 0.0,
        },
    )
}

fn nutation_period(p: &ClassicalParams, s: &ClassicalState) -> f64 {
    let (eps, kappa) = conserved_quantities(s, p).unwrap();
    solution_constants(eps, kappa, p.u_alpha)
        .unwrap()
        .nutation_period(kappa)
}

fn uniform(t_end: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| t_end * i as f64 / n as f64).collect()
}

fn criterion_1() -> Check {
    let mut pass = true;
    let mut detail = Vec::new();
    for (label, theta_dot) in [("solid", SOLID_THETA_DOT), ("dashed", DASHED_THETA_DOT)] {
        let (p, s0) = polar_start(theta_dot);
        let (eps, kappa) = conserved_quantities(&s0, &p).unwrap();
        let sc = solution_constants(eps, kappa, p.u_alpha).unwrap();
        let t_end = 3.0 * sc.nutation_period(kappa);
        // Uniform grid plus the half periods of cos θ, where the tumbling
        // orbit passes the poles.
        let half = 0.5 * sc.cos_period();
        let mut grid = uniform(t_end, 6000);
        grid.extend((1..).map(|k| k as f64 * half).take_while(|&t| t <= t_end));
        grid.sort_by(f64::total_cmp);
        let states = integrate_ode(&s0, &p, &grid).unwrap();
        let cos_ode: Vec<f64> = states.iter().map(|s| s.theta.cos()).collect();
        let max_diff = grid
            .iter()
            .zip(&cos_ode)
            .map(|(&t, c)| (costheta_analytic(t, s0.theta, &sc).unwrap() - c).abs())
            .fold(0.0, f64::max);
        let top = cos_ode.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let bottom = cos_ode.iter().cloned().fold(f64::INFINITY, f64::min);
        pass &= max_diff < 1e-6;
        if label == "solid" {
            pass &= (1.0 - top).abs() < 1e-6 && (1.0 + bottom).abs() < 1e-6;
        } else {
            pass &= bottom > -1.0 + 1e-3;
        }
        detail.push(format!(
            "{label}: eps={eps:.4} max|dcos|={max_diff:.2e} cos in [{bottom:.9}, {top:.9}]"
        ));
    }
    (pass, detail.join("; "))
}

fn lx_sign_changes(theta_dot: f64, periods: f64) -> (usize, f64) {
    let (p, s0) = polar_start(theta_dot);
    let t_end = periods * nutation_period(&p, &s0);
    let grid = uniform(t_end, 20000);
    let states = integrate_ode(&s0, &p, &grid[..grid.len() - 1]).unwrap();
    let lx: Vec<f64> = states.iter().map(|s| lab_angular_momentum(s)[0]).collect();
    let changes = lx
        .windows(2)
        .filter(|w| w[0].signum() != w[1].signum())
        .count();
    (
        changes,
        lx.iter()
            .cloned()
            .fold(f64::INFINITY, |a, b| a.min(b.abs())),
    )
}

fn criterion_2() -> Check {
    let periods = 3.0;
    let (dashed, _) = lx_sign_changes(DASHED_THETA_DOT, periods);
    let (solid, solid_min) = lx_sign_changes(SOLID_THETA_DOT, periods);
    let pass = dashed == 6 && solid == 0;
    (
        pass,
        format!(
            "over {periods} nutation periods: dashed {dashed} zero crossings (want 6), \
             solid {solid} (want 0, min|L_x|={solid_min:.4})"
        ),
    )
}

/// Largest drift of `ε` and `κ_z` over ten nutation periods.
fn classical_drift(p: &ClassicalParams, s0: &ClassicalState) -> (f64, f64) {
    let t_end = 10.0 * nutation_period(p, s0);
    let states = integrate_ode(s0, p, &uniform(t_end, 2000)).unwrap();
    let (e0, k0) = conserved_quantities(s0, p).unwrap();
    states.iter().fold((0.0, 0.0), |(de, dk), s| {
        let (e, k) = conserved_quantities(s, p).unwrap();
        (f64::max(de, (e - e0).abs()), f64::max(dk, (k - k0).abs()))
    })
}

// ---------------------------------------------------------------------------
// Quantum runs shared between criteria

/// Unitary run of the coherent state `|2, π/2, 0⟩` at `u = 0.1`, `j_max = 12`,
/// with the raw norm of every record.
struct UnitaryRun {
    records: Vec<ObservableRecord>,
    norms: Vec<f64>,
    elapsed: Duration,
}

const UNITARY_DT: f64 = 0.005;

fn unitary_run() -> UnitaryRun {
    let start = Instant::now();
    let cfg = parse_config_with(
        &format!("t_end = 1200\ndt = {UNITARY_DT}\nrecord_stride = 200\n"),
        Some(Scenario::EvolveUnitary),
        &[],
    )
    .unwrap();
    let psi0 = cfg.initial_state().unwrap();
    let p = cfg.model_params(0.0).unwrap();
    let mut records = Vec::new();
    let mut norms = Vec::new();
    evolve_unitary_with(&psi0, &p, &cfg.evolution_config(), |tau, psi| {
        records.push(ObservableRecord::from_pure(tau, psi));
        norms.push(psi.norm_sqr());
        Ok(())
    })
    .unwrap();
    UnitaryRun {
        records,
        norms,
        elapsed: start.elapsed(),
    }
}

fn criterion_3(unitary: &UnitaryRun) -> Check {
    let mut worst_eps: f64 = 0.0;
    let mut worst_kappa: f64 = 0.0;
    let precessing = ClassicalState {
        theta: PI / 3.0,
        phi: 0.0,
        theta_dot: 0.1,
        phi_dot: 0.2,
    };
    let p = ClassicalParams::new(0.0, U_CLASSICAL).unwrap();
    for s0 in [
        polar_start(SOLID_THETA_DOT).1,
        polar_start(DASHED_THETA_DOT).1,
        precessing,
    ] {
        let (de, dk) = classical_drift(&p, &s0);
        worst_eps = worst_eps.max(de);
        worst_kappa = worst_kappa.max(dk);
    }
    let r0 = &unitary.records[0];
    let norm = unitary
        .norms
        .iter()
        .map(|n| (n - 1.0).abs())
        .fold(0.0, f64::max);
    let jz = unitary
        .records
        .iter()
        .map(|r| (r.jz_mean - r0.jz_mean).abs())
        .fold(0.0, f64::max);
    let var = unitary
        .records
        .iter()
        .map(|r| (r.jz_var - r0.jz_var).abs())
        .fold(0.0, f64::max);
    let pass = worst_eps < 1e-6 && worst_kappa < 1e-6 && norm < 1e-8 && jz < 1e-8 && var < 1e-8;
    (
        pass,
        format!(
            "classical 10 periods: |d eps|={worst_eps:.2e} |d kappa|={worst_kappa:.2e}; \
             unitary to tau=1200 (dt={UNITARY_DT}): |d norm|={norm:.2e} |d <Jz>|={jz:.2e} |d Var Jz|={var:.2e}"
        ),
    )
}

fn criterion_4() -> Check {
    let mut pass = true;
    let mut ratio_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut worst_scaled: f64 = 0.0;
    for l in 0..=4u32 {
        for m in -(l as i32)..=(l as i32) {
            let residual = |u: f64| {
                let e = eigenenergies_numeric(m, u, 16).unwrap()[(l - m.unsigned_abs()) as usize];
                e - eigenenergies_perturbative(l, m, u)
            };
            let (r1, r2) = (residual(0.05), residual(0.025));
            let ratio = r1 / r2;
            ratio_range = (ratio_range.0.min(ratio), ratio_range.1.max(ratio));
            worst_scaled = worst_scaled
                .max((r1 / 0.05f64.powi(2)).abs())
                .max((r2 / 0.025f64.powi(2)).abs());
            pass &= (3.5..=4.5).contains(&ratio);
        }
    }
    pass &= worst_scaled < 1.0;

    let table = level_shift_table(1.0, 4).unwrap();
    let mut mirror_gap: f64 = 0.0;
    for l in 0..=4u32 {
        for m in 1..=(l as i32) {
            let k = (l - m as u32) as usize;
            let plus = eigenenergies_numeric(m, 1.0, 24).unwrap()[k];
            let minus = eigenenergies_numeric(-m, 1.0, 24).unwrap()[k];
            mirror_gap = mirror_gap.max((plus - minus).abs());
        }
    }
    pass &= mirror_gap < 1e-10;
    let shift = |l: u32, m_abs: u32| {
        table
            .iter()
            .find(|r| r.l == l && r.m_abs == m_abs)
            .unwrap()
            .shift
    };
    let mut ordering = true;
    for l in 1..=4u32 {
        let numeric = shift(l, 0) < shift(l, l);
        let first_order =
            eigenenergies_perturbative(l, 0, 1.0) < eigenenergies_perturbative(l, l as i32, 1.0);
        ordering &= numeric && first_order;
    }
    pass &= ordering && table.len() == 15;
    (
        pass,
        format!(
            "ratio in [{:.3}, {:.3}], max|E-E1|/u^2={worst_scaled:.3}; u=1 table: {} levels, \
             |E(m)-E(-m)|<={mirror_gap:.1e}, m=0 below |m|=l for l=1..4: {ordering}",
            ratio_range.0,
            ratio_range.1,
            table.len()
        ),
    )
}

fn criterion_5() -> Check {
    let p = ModelParams::new(0.1, 0.01, 12).unwrap();
    let t_plus_v = kinetic(p.j_max).add(&potential(&p));
    let decay = jump_operators(&p)
        .iter()
        .fold(OperatorMatrix::zeros(p.dim()), |acc, s| {
            acc.add(&s.adjoint().matmul(s))
        });
    let residual = effective_hamiltonian(&p)
        .add(&t_plus_v.scale((-1.0).into()))
        .add(&decay.scale(num_complex::Complex64::new(0.0, 0.5)))
        .truncated(p.j_max - 2);
    let norm = residual.0.norm();
    (
        norm < 1e-10,
        format!("Frobenius norm on j <= 10: {norm:.2e}"),
    )
}

/// Largest `⟨J_x⟩` within `[lo, hi]`.
fn peak_jx(records: &[ObservableRecord], lo: f64, hi: f64) -> (f64, f64) {
    records
        .iter()
        .filter(|r| r.tau >= lo && r.tau <= hi)
        .map(|r| (r.jx_mean, r.tau))
        .fold(
            (f64::NEG_INFINITY, 0.0),
            |a, b| if b.0 > a.0 { b } else { a },
        )
}

fn criterion_6(unitary: &UnitaryRun) -> Check {
    let jx0 = unitary.records[0].jx_mean;
    let (min_jx, min_tau) = unitary
        .records
        .iter()
        .filter(|r| r.tau <= 660.0)
        .map(|r| (r.jx_mean, r.tau))
        .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
    let (peak, peak_tau) = peak_jx(&unitary.records, 600.0, 720.0);
    let pass = (jx0 - 2.0).abs() < 1e-10
        && min_jx < -1.5
        && (165.0..=495.0).contains(&min_tau)
        && peak > 1.5;
    (
        pass,
        format!(
            "<Jx>(0)={jx0:.12}; min {min_jx:.4} at tau={min_tau}; \
             max on [600,720] {peak:.4} at tau={peak_tau}"
        ),
    )
}

fn preset_records(name: &str) -> Vec<ObservableRecord> {
    let cfg = parse_config_with(preset(name).unwrap(), None, &[]).unwrap();
    run_deterministic(&cfg).unwrap()
}

fn at(records: &[ObservableRecord], tau: f64) -> &ObservableRecord {
    records
        .iter()
        .find(|r| (r.tau - tau).abs() < 1e-6)
        .unwrap_or_else(|| panic!("no record at {tau}"))
}

fn criterion_7(unitary: &UnitaryRun) -> Check {
    // Coherent state: fig9 preset (records every τ); superposition: purity
    // preset.
    let coh = preset_records("fig9");
    let sup = preset_records("purity");

    let (peak_master, _) = peak_jx(&coh, 600.0, 720.0);
    let (peak_unitary, _) = peak_jx(&unitary.records, 600.0, 720.0);
    let a = peak_master < peak_unitary;

    let upto: Vec<&ObservableRecord> = coh.iter().filter(|r| r.tau <= 1165.0 + 1e-9).collect();
    let monotone = upto.windows(2).all(|w| w[1].jz_var >= w[0].jz_var - 1e-12);
    let var0 = at(&coh, 0.0).jz_var;
    let var_end = at(&coh, 1165.0).jz_var;
    let b = monotone && (var0 - 1.0).abs() < 1e-12 && var_end >= 1.1 * var0;

    let purity_coh = at(&coh, 1165.0).purity;
    let slower = sup
        .iter()
        .filter(|r| r.tau >= 200.0)
        .all(|r| r.purity > at(&coh, r.tau).purity);
    let c = purity_coh < 0.95 && slower;

    let mut d = true;
    let mut pops = Vec::new();
    for (label, records) in [("coh", &coh), ("sup", &sup)] {
        let end = at(records, 1165.0);
        let outer = end.populations[0] + end.populations[4];
        let p2 = end.populations[2];
        d &= outer >= 0.02 && p2 <= 1.0 - outer + 1e-9;
        pops.push(format!("{label} p0+p4={outer:.4} p2={p2:.4}"));
    }
    (
        a && b && c && d,
        format!(
            "(a) peak <Jx> master {peak_master:.4} < unitary {peak_unitary:.4}: {a}; \
             (b) Var(Jz) monotone {monotone}, {var0:.4} -> {var_end:.4}: {b}; \
             (c) purity(1165) coh {purity_coh:.4}, sup {:.4}, sup above coh for tau>=200: {c}; \
             (d) {}: {d}",
            at(&sup, 1165.0).purity,
            pops.join(", ")
        ),
    )
}

fn criterion_8() -> Check {
    const SEED: u64 = 1;
    let p = ModelParams::new(0.1, 0.01, 6).unwrap();
    let cfg = EvolutionConfig {
        dt: 0.01,
        t_end: 300.0,
        record_stride: 2500,
        n_traj: 2000,
        seed: SEED,
        tail_tolerance: 1e-3,
    };
    let psi0 = rotordyn::basis::coherent_state(2, FRAC_PI_2, 0.0, 6).unwrap();
    let master =
        evolve_master(&rotordyn::basis::DensityMatrix::from_pure(&psi0), &p, &cfg).unwrap();
    let ensemble = ensemble_average(&psi0, &p, &cfg).unwrap();

    // Differences below this are rounding noise (e.g. ⟨J_z⟩, which vanishes
    // by symmetry in both runs).
    const ROUNDING: f64 = 1e-12;
    let mut compared = 0;
    let mut failures = Vec::new();
    let mut worst = (0.0, String::new());
    for (rec, reference) in ensemble.records.iter().zip(&master) {
        let exact = ObservableRecord::from_density(reference.tau, &reference.state);
        let mut pairs = vec![
            ("jx".to_string(), rec.jx, exact.jx_mean),
            ("jz".to_string(), rec.jz, exact.jz_mean),
            ("jz_var".to_string(), rec.jz_var, exact.jz_var),
        ];
        for (j, (est, &value)) in rec.populations.iter().zip(&exact.populations).enumerate() {
            pairs.push((format!("p{j}"), *est, value));
        }
        for (name, est, value) in pairs {
            compared += 1;
            let diff = (est.mean - value).abs();
            if diff <= ROUNDING {
                continue;
            }
            let z = if est.standard_error > 0.0 {
                diff / est.standard_error
            } else {
                f64::INFINITY
            };
            if z > worst.0 {
                worst = (z, format!("{name} at tau={}", rec.observables.tau));
            }
            if z > 3.0 {
                failures.push(format!(
                    "{name}@{}: {:.3e} vs {value:.3e} (se {:.1e})",
                    rec.observables.tau, est.mean, est.standard_error
                ));
            }
        }
    }
    let mut detail = format!(
        "seed {SEED}: {compared} comparisons, {} beyond 3 SE, worst {:.1} SE ({}); mean jumps {:.3}",
        failures.len(),
        worst.0,
        worst.1,
        ensemble.mean_jumps.mean
    );
    if !failures.is_empty() {
        let shown: Vec<_> = failures.iter().take(4).cloned().collect();
        detail.push_str(&format!("; e.g. {}", shown.join(", ")));
    }
    (failures.is_empty(), detail)
}

fn criterion_9() -> Check {
    let run = |name: &str, gamma: f64| -> Vec<WignerGrid> {
        let cfg = parse_config_with(preset(name).unwrap(), None, &[]).unwrap();
        wigner_snapshots(&cfg, gamma).unwrap()
    };
    let coh_free = run("wigner-coh", 0.0);
    let coh_decay = run("wigner-coh", 0.01);
    let sup_free = run("wigner-sup", 0.0);
    let sup_decay = run("wigner-sup", 0.01);
    let snap = |grids: &[WignerGrid], tau: f64| -> WignerGrid {
        grids.iter().find(|w| w.tau == tau).unwrap().clone()
    };

    let integral_error = [&coh_free, &coh_decay, &sup_free, &sup_decay]
        .iter()
        .flat_map(|g| g.iter())
        .map(|w| (sphere_integral(w) - 1.0).abs())
        .fold(0.0, f64::max);
    let a = integral_error < 1e-8;

    let w0 = snap(&coh_free, 0.0);
    let b = w0.grid.nearest_nodes(FRAC_PI_2, 0.0).contains(&w0.argmax());

    let w990 = snap(&coh_free, 990.0);
    let near_zero = w990.local_maxima_near(FRAC_PI_2, 0.0, 2);
    let near_pi = w990.local_maxima_near(FRAC_PI_2, PI, 2);
    let c = !near_zero.is_empty() && !near_pi.is_empty();
    let value_at = |w: &WignerGrid, nodes: &[(usize, usize)]| {
        nodes
            .iter()
            .map(|&(i, k)| w.value(i, k))
            .fold(f64::NEG_INFINITY, f64::max)
    };

    let s0 = snap(&sup_free, 0.0);
    let d = s0.min() < 0.0 && s0.grid.nearest_nodes(FRAC_PI_2, 0.0).contains(&s0.argmin());

    let (min_free, min_decay) = (snap(&sup_free, 830.0).min(), snap(&sup_decay, 830.0).min());
    let e = min_decay > min_free;
    (
        a && b && c && d && e,
        format!(
            "(a) max|int W - 1|={integral_error:.1e}: {a}; (b) argmax {:?}: {b}; \
             (c) tau=990 maxima near (pi/2,0) W={:.4}, near (pi/2,pi) W={:.4}: {c}; \
             (d) min W {:.4} at {:?}: {d}; (e) tau=830 min W {min_decay:.4} (decay) vs {min_free:.4}: {e}",
            w0.argmax(),
            value_at(&w990, &near_zero),
            value_at(&w990, &near_pi),
            s0.min(),
            s0.argmin()
        ),
    )
}

fn criterion_10() -> Check {
    let docs = [
        ("evolve-trajectory", "u = 0.1\ngamma_ratio = 0.05\nj_max = 6\nt_end = 30\nn_traj = 96\nrecord_stride = 100\n"),
        ("wigner-snapshots", "j_max = 6\ndt = 0.05\nsnapshots = 0, 20\ngamma_ratios = 0, 0.01\nn_theta = 24\nn_phi = 48\n"),
        ("classical", "u = 0.025\ntheta_dot0 = 0.3\nt_end = 40\nrecord_stride = 20\n"),
        ("evolve-master", "j_max = 6\nt_end = 20\ndt = 0.05\n"),
    ];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut files = 0;
    let mut identical = true;
    for (scenario, doc) in docs {
        let config = dirs[0].path().join(format!("{scenario}.conf"));
        std::fs::write(&config, doc).unwrap();
        let mut listings = Vec::new();
        for dir in &dirs {
            let output = Command::new(env!("CARGO_BIN_EXE_rotordyn"))
                .arg(scenario)
                .arg("--config")
                .arg(&config)
                .args(["--out", "run"])
                .args(if scenario == "evolve-trajectory" {
                    vec!["--seed", "42"]
                } else {
                    vec![]
                })
                .env("ROTORDYN_OUT_DIR", dir.path())
                .output()
                .unwrap();
            if !output.status.success() {
                return (
                    false,
                    format!("{scenario}: {}", String::from_utf8_lossy(&output.stderr)),
                );
            }
            let mut names: Vec<String> = String::from_utf8(output.stdout)
                .unwrap()
                .lines()
                .map(|l| {
                    Path::new(l)
                        .file_name()
                        .unwrap()
                        .to_string_lossy()
                        .into_owned()
                })
                .collect();
            names.sort();
            listings.push(names);
        }
        identical &= listings[0] == listings[1];
        for name in &listings[0] {
            files += 1;
            let a = std::fs::read(dirs[0].path().join(name)).unwrap();
            let b = std::fs::read(dirs[1].path().join(name)).unwrap();
            identical &= a == b;
        }
    }
    (
        identical,
        format!("{files} output files from 4 scenarios compared byte for byte"),
    )
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut outcomes = vec![
        timed("1 classical analytic vs ODE", secs(1), criterion_1),
        timed("2 L_x sign pattern", secs(1), criterion_2),
    ];
    let unitary = unitary_run();
    outcomes.push(timed("3 conservation", None, || criterion_3(&unitary)));
    outcomes.push(timed("4 spectrum", secs(5), criterion_4));
    outcomes.push(timed("5 effective Hamiltonian identity", None, criterion_5));
    let mut six = timed("6 coherent-state oscillation", secs(30), || {
        criterion_6(&unitary)
    });
    six.elapsed += unitary.elapsed;
    outcomes.push(six);
    outcomes.push(timed("7 decoherence signatures", secs(120), || {
        criterion_7(&unitary)
    }));
    outcomes.push(timed(
        "8 trajectories vs master equation",
        secs(300),
        criterion_8,
    ));
    outcomes.push(timed("9 Wigner functions", secs(120), criterion_9));
    outcomes.push(timed("10 determinism", None, criterion_10));

    let mut all = true;
    for o in &outcomes {
        let in_time = o.limit.is_none_or(|limit| o.elapsed <= limit);
        let pass = o.pass && in_time;
        all &= pass;
        let limit = o
            .limit
            .map(|l| format!(" (limit {}s)", l.as_secs()))
            .unwrap_or_default();
        println!(
            "{} criterion {} [{:.2}s{limit}]: {}",
            if pass { "PASS" } else { "FAIL" },
            o.name,
            o.elapsed.as_secs_f64(),
            o.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
