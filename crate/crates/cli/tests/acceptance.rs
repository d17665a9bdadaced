//! End-to-end acceptance suite. Each test covers one numbered criterion and
//! prints a single PASS line on success (visible with --nocapture).

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;

use nalgebra::DVector;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use photon_extraction::bounds::{
    hyperbolic_m, lower_bound, restriction_residual, solve_omega_m,
};
use photon_extraction::drive::{reconstruct_drive, verify_drive, SineWavepacket};
use photon_extraction::dynamics::{instant_excitation, DriveContext, TimeGrid};
use photon_extraction::model::{
    cooperativity, critical_time, instant_excitation_limit, CavityChannel, SystemParams,
};
use photon_extraction::optimizer::{OptimizationTarget, Optimizer, OptimizerConfig};
use photon_extraction::projection::projection_for;
use photon_extraction::spectral::{
    build_basis, probability_matrix, synthesize_time_domain, FourierVector,
    MatrixKind,
};

use photon_extraction_cli::config::{load_scenario, LogGrid, OptimizerSection};
use photon_extraction_cli::scenario::{optimize_emission, run_scenario};

/// Lambda system at cooperativity 1 with kappa = 1 for a given kappa/g.
fn family(ratio: f64) -> SystemParams<f64> {
    let g = 1.0 / ratio;
    SystemParams::lambda(1.0, g * g / 2.0, g).unwrap()
}

fn quick(restarts: usize, max_iterations: usize) -> OptimizerSection {
    OptimizerSection { restarts, max_iterations, ..Default::default() }
}

fn splitting_pair(delta_z: f64) -> SystemParams<f64> {
    SystemParams::new(
        1.0,
        0.6,
        vec![
            CavityChannel::new((1.0f64 / 3.0).sqrt(), -delta_z / 2.0),
            CavityChannel::new(-(4.0f64 / 15.0).sqrt(), delta_z / 2.0),
        ],
    )
    .unwrap()
}

/// Three-channel system used by the metric-optimization preset.
fn three_channel() -> SystemParams<f64> {
    SystemParams::new(
        1.0,
        0.6,
        vec![
            CavityChannel::new((1.0f64 / 3.0).sqrt(), -5.0),
            CavityChannel::new(-(4.0f64 / 15.0).sqrt(), 0.0),
            CavityChannel::new((1.0f64 / 30.0).sqrt(), 5.0),
        ],
    )
    .unwrap()
}

#[test]
fn acceptance_01_adiabatic_recovery() {
    let limit = 2.0 / 3.0;
    for ratio in [10.0, 1.0, 0.1] {
        let params = family(ratio);
        let t = 50.0 * critical_time(&params).unwrap();
        let run = optimize_emission(&params, t, &[1], &quick(1, 800), 11).unwrap();
        let p = run.solution.term_probabilities[0][0];
        let rel = (p - limit).abs() / limit;
        assert!(rel <= 0.02, "kappa/g = {ratio}: P = {p:.5}, deviation {:.2}%", 100.0 * rel);
    }
    println!("PASS criterion 1: optimized P within 2% of 2/3 at T = 50 t_crit for all ratios");
}

#[test]
fn acceptance_02_bound_ordering() {
    let grid = LogGrid { min: 0.2, max: 50.0, count: 8 };
    for ratio in [10.0, 1.0, 0.1] {
        let params = family(ratio);
        let t_crit = critical_time(&params).unwrap();
        for m in grid.values().unwrap() {
            let t = m * t_crit;
            let bound = lower_bound(&params, t, 0, false).unwrap();
            let run = optimize_emission(&params, t, &[1], &quick(1, 800), 7).unwrap();
            let p = run.solution.term_probabilities[0][0];
            let lo = bound.p_lower.unwrap();
            assert!(
                lo - 1e-3 <= p && p <= bound.p_upper + 1e-3,
                "kappa/g = {ratio}, T/t_crit = {m:.3}: P = {p:.6} outside [{lo:.6}, {:.6}]",
                bound.p_upper
            );
        }
    }
    println!("PASS criterion 2: P_lower - 1e-3 <= P_numeric <= P_upper + 1e-3 on the 3x8 grid");
}

#[test]
fn acceptance_03_bound_convergence() {
    for ratio in [1.0, 0.1] {
        let params = family(ratio);
        let t = 50.0 * critical_time(&params).unwrap();
        let b = lower_bound(&params, t, 0, false).unwrap();
        let gap = b.p_upper - b.p_lower.unwrap();
        assert!(gap < 0.02, "kappa/g = {ratio}: gap {gap:.4} at 50 t_crit");
    }
    let params = family(10.0);
    let t = 2.5 * critical_time(&params).unwrap();
    let b = lower_bound(&params, t, 0, false).unwrap();
    let gap = b.p_upper - b.p_lower.unwrap();
    assert!(gap > 0.02, "bad cavity gap {gap:.4} at 2.5 t_crit not distinct");
    println!("PASS criterion 3: bounds converge (<0.02) at 50 t_crit, stay distinct for bad cavity");
}

#[test]
fn acceptance_04_instant_excitation_oracle() {
    let expected = [0.66334, 4.0 / 9.0, 0.013072];
    for (ratio, reference) in [10.0, 1.0, 0.1].into_iter().zip(expected) {
        let params = family(ratio);
        // 100 critical times; the emitter decays at rate ~ g^2/kappa in the
        // bad-cavity regime, so a fixed 100/kappa horizon would not converge
        let horizon = 100.0 * critical_time(&params).unwrap();
        let steps = ((horizon * 100.0).ceil() as usize).max(200_000);
        let grid = TimeGrid::new(horizon, steps).unwrap().with_stride(400);
        let traj = instant_excitation(&params, &grid).unwrap();
        let p = *traj.p_kappa_j[0].last().unwrap();
        let formula = instant_excitation_limit(&params).unwrap();
        assert!((formula - reference).abs() < 5e-4, "formula {formula} vs reference {reference}");
        let rel = (p - formula).abs() / formula;
        assert!(rel < 5e-3, "kappa/g = {ratio}: dynamics {p:.6} vs formula {formula:.6}");
    }
    println!("PASS criterion 4: instant-excitation dynamics reproduce the formula within 0.5%");
}

#[test]
fn acceptance_05_transcendental_solver() {
    for ratio in [10.0, 1.0, 0.1] {
        let params = family(ratio);
        let t_crit = critical_time(&params).unwrap();
        for m in [0.2, 2.5, 50.0] {
            let t = m * t_crit;
            let w = solve_omega_m(&params, t).unwrap();
            assert!(w > 0.0 && w < PI / t, "omega_m {w} outside (0, pi/T) at T = {t}");
            let r = restriction_residual(&params, t, w).unwrap();
            assert!(r.abs() < 1e-12, "residual {r:e} at omega_m");
            let r_pi = restriction_residual(&params, t, PI / t).unwrap();
            assert!(r_pi.abs() < 1e-12, "residual {r_pi:e} at the pi/T root");
        }
    }
    println!("PASS criterion 5: omega_m residual < 1e-12, omega_m < pi/T, pi/T root verified");
}

#[test]
fn acceptance_06_hyperbolic_exclusion() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..100 {
        let kappa = rng.gen_range(0.2..3.0f64);
        let g = rng.gen_range(0.2..3.0f64);
        let gamma = rng.gen_range(0.01..2.0f64);
        let t = rng.gen_range(0.1..5.0f64);
        let params = SystemParams::lambda(kappa, gamma, g).unwrap();
        let c = cooperativity(&params, 1).unwrap();
        let q = rng.gen_range(0.0..0.999) / (2.0 * c);
        let m = hyperbolic_m(&params, t, q).unwrap();
        assert!(
            m >= 1.0 / (2.0 * c) - 1e-12,
            "hyperbolic m {m} below 1/(2C) = {} for kappa={kappa} gamma={gamma} g={g} t={t} q={q}",
            1.0 / (2.0 * c)
        );
    }
    println!("PASS criterion 6: hyperbolic branch m >= 1/(2C) - 1e-12 on 100 random draws");
}

#[test]
fn acceptance_07_matrix_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t_end = 2.5;
    for n_pos in [8usize, 32] {
        let basis = build_basis(t_end, 1.25 * t_end, n_pos).unwrap();
        let params = family(1.0);
        let kinds = [
            MatrixKind::Emission(1),
            MatrixKind::CavityOccupation(1),
            MatrixKind::Spontaneous,
            MatrixKind::Excited,
            MatrixKind::TotalNonInitial,
        ];
        for _ in 0..4 {
            let t = rng.gen_range(0.05..t_end);
            for kind in kinds {
                let m = probability_matrix(&basis, &params, kind, t).unwrap().entries;
                let scale = m.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(1e-300);
                let dev = (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0f64, f64::max);
                assert!(dev <= 1e-12 * scale, "{kind:?} at t={t}: Hermiticity {dev:e}");
                let eig = nalgebra::SymmetricEigen::new(m.clone());
                let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
                assert!(min >= -1e-10 * m.trace().re, "{kind:?} at t={t}: eigenvalue {min:e}");
            }
        }

        // matrix quadratic form vs direct quadrature of the synthesized
        // wavepacket for the channel-1 emission probability
        let dim = basis.dim();
        let coeffs = DVector::from_fn(dim, |_, _| {
            Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let norm = coeffs.norm();
        let v = FourierVector::new(basis.clone(), coeffs / Complex::new(norm, 0.0)).unwrap();
        let t = 1.7;
        let p_mat = {
            let m = probability_matrix(&basis, &params, MatrixKind::Emission(1), t).unwrap().entries;
            (v.coefficients.adjoint() * &m * &v.coefficients)[(0, 0)].re
        };
        let steps = 8000usize;
        let times: Vec<f64> = (0..=steps).map(|i| t * i as f64 / steps as f64).collect();
        let alpha = synthesize_time_domain(&v, &params, 1, 0, &times).unwrap();
        let h = t / steps as f64;
        let mut acc = alpha[0].norm_sqr() + alpha[steps].norm_sqr();
        for (k, a) in alpha.iter().enumerate().take(steps).skip(1) {
            acc += a.norm_sqr() * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        let p_quad = 2.0 * params.kappa() * acc * h / 3.0;
        let rel = (p_mat - p_quad).abs() / p_quad.abs().max(1e-300);
        assert!(rel < 1e-6, "n_pos={n_pos}: matrix {p_mat:.9} vs quadrature {p_quad:.9}");
    }
    println!("PASS criterion 7: probability matrices Hermitian, PSD, and quadrature-consistent");
}

#[test]
fn acceptance_08_projection_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let t = 2.0;
    let cases: Vec<(SystemParams<f64>, usize, &str)> = vec![
        (family(1.0), 1, "single channel"),
        (splitting_pair(5.0), 2, "split pair"),
        (splitting_pair(0.0), 1, "degenerate pair"),
        (splitting_pair(1e-6), 1, "near-degenerate pair"),
    ];
    for (params, expect_j_m_d, label) in cases {
        let basis = build_basis(t, 1.25 * t, 8).unwrap();
        let proj = projection_for(&basis, &params).unwrap();
        assert_eq!(proj.j_m_d(), expect_j_m_d, "{label}: j_M_d");
        for _ in 0..25 {
            let raw = DVector::from_fn(basis.dim(), |_, _| {
                Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let mut w = proj.project_vector(&raw).unwrap();
            let n = w.norm();
            w /= Complex::new(n, 0.0);
            let full = proj.lift_vector(&w).unwrap();
            let v = FourierVector::new(basis.clone(), full).unwrap();
            for j in 1..=params.channel_count() {
                let a0 = synthesize_time_domain(&v, &params, j, 0, &[0.0]).unwrap()[0];
                // a collapsed partner constraint leaves a residual linear in
                // the splitting; enforced channels sit at numerical zero
                let tol = if expect_j_m_d < params.channel_count() && j > 1 {
                    let dz = (params.channels()[1].delta_g - params.channels()[0].delta_g).abs();
                    (10.0 * dz).max(1e-10)
                } else {
                    1e-10
                };
                assert!(a0.norm() < tol, "{label}: |alpha_g{j}(0)| = {:e}", a0.norm());
            }
        }
    }
    println!("PASS criterion 8: projected vectors start with empty cavities on all systems");
}

#[test]
fn acceptance_09_conservation_audit() {
    let params = family(1.0);
    let t = 2.5;
    let run = optimize_emission(&params, t, &[1], &quick(1, 600), 3).unwrap();
    let sol = &run.solution;
    assert!(sol.audit_max_total <= 1.0 + 1e-6, "audit max total {}", sol.audit_max_total);
    let total = sol
        .probability_traces
        .iter()
        .find(|(k, _)| *k == MatrixKind::TotalNonInitial)
        .map(|(_, tr)| tr)
        .unwrap();
    let max_total = total.iter().cloned().fold(0.0f64, f64::max);
    assert!((max_total - 1.0).abs() <= 1e-9, "normalized total at t_max {max_total}");
    println!("PASS criterion 9: 4x-density conservation audit and unit total at t_max");
}

#[test]
fn acceptance_10_gradient_validity() {
    let params = three_channel();
    let t = 5.0;
    let basis = build_basis(t, 1.25 * t, 12).unwrap();
    let proj = projection_for(&basis, &params).unwrap();
    let targets: Vec<Vec<(MatrixKind, f64)>> = vec![
        vec![(MatrixKind::Emission(2), t)],
        vec![(MatrixKind::Emission(1), t), (MatrixKind::Emission(2), t)],
    ];
    for terms in targets {
        let n_terms = terms.len();
        let target = OptimizationTarget::product(terms, t).unwrap();
        let opt = Optimizer::new(
            params.clone(),
            basis.clone(),
            proj.clone(),
            target,
            OptimizerConfig::default(),
        )
        .unwrap();
        let dim = proj.projected_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let v = {
            let v = DVector::from_fn(dim, |_, _| {
                Complex::new(rng.gen_range(-1.0..1.0f64), rng.gen_range(-1.0..1.0))
            });
            let n = v.norm();
            v / Complex::new(n, 0.0)
        };
        let (idx, _) = opt.find_tmax(&v).unwrap();
        let dir = opt.gradient_fixed(&v, idx).unwrap();
        let h = 1e-6;
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for i in 0..dim {
            for part in 0..2 {
                let delta =
                    if part == 0 { Complex::new(h, 0.0) } else { Complex::new(0.0, h) };
                let mut plus = v.clone();
                plus[i] += delta;
                let mut minus = v.clone();
                minus[i] -= delta;
                let fd = (opt.evaluate_fixed(&plus, idx).unwrap()
                    - opt.evaluate_fixed(&minus, idx).unwrap())
                    / (2.0 * h);
                numeric.push(fd);
                analytic.push(if part == 0 { 2.0 * dir[i].re } else { 2.0 * dir[i].im });
            }
        }
        let dot: f64 = analytic.iter().zip(&numeric).map(|(a, b)| a * b).sum();
        let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
        let cosine = dot / (na * nb);
        assert!(cosine >= 0.99, "{n_terms}-term target: cosine {cosine:.5}");
    }
    println!("PASS criterion 10: gradient vs finite differences cosine >= 0.99 for both targets");
}

#[test]
fn acceptance_11_drive_round_trip() {
    for ratio in [10.0, 1.0, 0.1] {
        let params = family(ratio);
        let t = 2.5 * critical_time(&params).unwrap();
        let bound = lower_bound(&params, t, 0, false).unwrap();
        let wavepacket = SineWavepacket::from_bound(&bound, true).unwrap();
        let ctx = DriveContext::new(0.0, 0.0, 0.0, 0.05).unwrap();
        let grid = TimeGrid::new(t, 2000).unwrap();
        let pulse = reconstruct_drive(&wavepacket, &params, &ctx, &grid).unwrap();
        let report = verify_drive(&pulse, &params, &ctx, &wavepacket).unwrap();
        assert!(
            report.dynamic_l2_error < 0.01,
            "kappa/g = {ratio}: round-trip L2 {:.4}",
            report.dynamic_l2_error
        );
        let max_mag = pulse.max_magnitude();
        let max_im = pulse.omega.iter().map(|z| z.im.abs()).fold(0.0f64, f64::max);
        assert!(max_im < 1e-8 * max_mag, "kappa/g = {ratio}: Im Omega {max_im:e}");
    }

    // peak drive grows monotonically as the margin shrinks
    let params = family(1.0);
    let t = 2.5;
    let bound = lower_bound(&params, t, 0, false).unwrap();
    let wavepacket = SineWavepacket::from_bound(&bound, true).unwrap();
    let grid = TimeGrid::new(t, 2000).unwrap();
    let mut prev = 0.0;
    for chi in [0.2, 0.1, 0.05, 0.02] {
        let ctx = DriveContext::new(0.0, 0.0, 0.0, chi).unwrap();
        let pulse = reconstruct_drive(&wavepacket, &params, &ctx, &grid).unwrap();
        let peak = pulse.max_magnitude();
        assert!(peak > prev, "chi = {chi}: peak {peak} not above {prev}");
        prev = peak;
    }
    println!("PASS criterion 11: drive round trip < 1%, real Omega, monotone peak vs chi");
}

#[test]
fn acceptance_12_zeeman_limits() {
    let t = 12.5;
    let base = splitting_pair(0.0);
    let (limit_merged, limit_split) =
        photon_extraction_cli::scenario::zeeman_limits(&base).unwrap();
    assert!((limit_merged - 5.0 / 81.0).abs() < 1e-12);
    assert!((limit_split - 20.0 / 728.0).abs() < 1e-12);

    // The degenerate pair reduces exactly to one effective channel, whose
    // analytic bounds cap the product at this extraction time slightly
    // below the infinite-time limit; the optimum must reach that cap.
    let g_eff = (0.6f64).sqrt();
    let eff = SystemParams::lambda(1.0, 0.6, g_eff).unwrap();
    let eff_bounds = lower_bound(&eff, t, 0, false).unwrap();
    let ratio_sq = 20.0 / 81.0;
    let cap_lower = ratio_sq * eff_bounds.p_lower.unwrap().powi(2);
    let cap_upper = ratio_sq * eff_bounds.p_upper.powi(2);

    let run0 =
        optimize_emission(&splitting_pair(0.0), t, &[1, 2], &quick(1, 1000), 3).unwrap();
    let p0 = run0.solution.objective;
    assert!(p0 >= cap_lower - 1e-4 && p0 <= cap_upper + 1e-4, "degenerate product {p0:.6} outside finite-time cap [{cap_lower:.6}, {cap_upper:.6}]");
    let dev0 = (p0 - limit_merged).abs() / limit_merged;
    assert!(dev0 < 0.06, "degenerate product {p0:.6} deviates {:.2}% from 5/81", 100.0 * dev0);

    let run20 =
        optimize_emission(&splitting_pair(20.0), t, &[1, 2], &quick(1, 1000), 3).unwrap();
    let p20 = run20.solution.objective;
    let dev20 = (p20 - limit_split).abs() / limit_split;
    assert!(dev20 < 0.10, "split product {p20:.6} deviates {:.2}% from 20/728", 100.0 * dev20);
    assert!(p20 < p0, "splitting did not reduce the product: {p20:.6} vs {p0:.6}");
    println!("PASS criterion 12: splitting limits matched (degenerate {:.4}%, split {:.4}%) and ordering holds", 100.0 * dev0, 100.0 * dev20);
}

#[test]
fn acceptance_13_regime_shapes() {
    let cfg = load_scenario(
        r#"
        [system]
        gamma = 0.5
        [[system.channel]]
        g = 1.0
        [scenario]
        kind = "regime_sweep"
        kappa_over_g = [0.1, 10.0]
        cooperativity = 1.0
        t_over_t_crit = [2.5]
        [optimizer]
        restarts = 1
        max_iterations = 800
        [output]
        seed = 5
    "#,
    )
    .unwrap();
    let out = run_scenario(&cfg, 1, false).unwrap();
    let entries = out.manifest["artifacts"].as_array().unwrap();
    let find = |ratio: f64| {
        entries
            .iter()
            .find(|e| (e["kappa_over_g"].as_f64().unwrap() - ratio).abs() < 1e-12)
            .unwrap()
    };
    let good = find(0.1);
    let shape = good["shape_distance_to_upper"].as_f64().unwrap();
    assert!(shape < 0.10, "good cavity shape distance {shape:.4}");
    let bad = find(10.0);
    let peak = bad["peak_time_fraction"].as_f64().unwrap();
    assert!(peak < 0.25, "bad cavity peak flux at {peak:.3} T");
    println!("PASS criterion 13: good-cavity flux tracks the bound sinusoid, bad-cavity peaks early");
}

#[test]
fn acceptance_14_sweep_determinism() {
    let sweep_toml = r#"
        [[job]]
        [job.system]
        gamma = 0.5
        [[job.system.channel]]
        g = 1.0
        [job.scenario]
        kind = "bounds_vs_t"
        t_over_t_crit = [1.0, 2.5]
        [job.optimizer]
        n_pos = 8
        normalization_times = 65
        restarts = 1
        max_iterations = 300
        [job.output]
        seed = 1

        [[job]]
        [job.system]
        gamma = 0.5
        [[job.system.channel]]
        g = 1.0
        [job.scenario]
        kind = "drive_roundtrip"
        t_extraction = 2.5
        chi_values = [0.05]
        drive_steps = 500
        [job.output]
        seed = 1
    "#;
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    fs::write(&config, sweep_toml).unwrap();

    let run = |workers: u32, out: &Path| {
        let status = Command::new(env!("CARGO_BIN_EXE_photon-extraction"))
            .args([
                "sweep",
                "--config",
                config.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seed",
                "1",
                "--workers",
                &workers.to_string(),
            ])
            .status()
            .unwrap();
        assert!(status.success(), "sweep with {workers} workers failed");
    };
    let out1 = dir.path().join("w1");
    let out8 = dir.path().join("w8");
    run(1, &out1);
    run(8, &out8);

    let mut csvs = Vec::new();
    for entry in walk(&out1) {
        if entry.extension().is_some_and(|e| e == "csv") {
            csvs.push(entry.strip_prefix(&out1).unwrap().to_path_buf());
        }
    }
    assert!(!csvs.is_empty(), "sweep produced no CSV artifacts");
    for rel in &csvs {
        let a = fs::read(out1.join(rel)).unwrap();
        let b = fs::read(out8.join(rel)).unwrap();
        assert_eq!(a, b, "CSV {} differs between 1 and 8 workers", rel.display());
    }
    println!(
        "PASS criterion 14: {} CSVs byte-identical between 1-worker and 8-worker sweeps",
        csvs.len()
    );
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    out.sort();
    out
}
