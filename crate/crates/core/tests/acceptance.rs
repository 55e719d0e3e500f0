//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::Command;

use edrlab::grid::GridSpec;
use edrlab::hilbert::{random_hermitian, random_state};
use edrlab::meter::{delta_quadratic, solve_unbiased_f};
use edrlab::models::{self, ModelSpec, ProbeSpec};
use edrlab::povm::{born_check, extract_povm, random_outcome_preserving_unitary};
use edrlab::{MeasurementProcess, MeterFunction, QState, UnitaryOp, Units};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn grid(n: usize) -> GridSpec {
    GridSpec::new(n, 1.0, 1.0).unwrap()
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

/// Mean squares from the vector route against `<A^2>` with dense `A`.
fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let proc = models::random_process(grid(4), grid(4), &mut rng).unwrap();
        let f = MeterFunction::affine(rng.random_range(0.5..1.5), rng.random_range(-0.5..0.5));
        let dense = dense_differences(&proc, &f);
        for _ in 0..20 {
            let psi = random_state(4, &mut rng);
            let pairs = [
                (proc.epsilon(&psi).unwrap().mean_square, dense_mean_square(&proc, &psi, &dense.eps)),
                (proc.delta(&psi, &f).unwrap().mean_square, dense_mean_square(&proc, &psi, &dense.delta)),
                (proc.eta(&psi).unwrap().mean_square, dense_mean_square(&proc, &psi, &dense.eta)),
            ];
            for (got, want) in pairs {
                worst = worst.max(rel_err(got, want));
            }
        }
    }
    check(worst <= 1e-12, format!("max relative error {worst:.2e} over 400 states (bound 1e-12)"))
}

struct Eq2Point {
    sigma: f64,
    epsilon: f64,
    delta: f64,
    eta: f64,
    deficit: f64,
}

fn eq2_sweep(n: usize, dx: f64) -> Vec<Eq2Point> {
    let obj = GridSpec::new(n, dx, 1.0).unwrap();
    let psi = obj.gaussian_state(0.0, 0.0, 1.5).unwrap();
    (0..10)
        .map(|i| {
            let sigma = 0.7 * 10f64.powf(i as f64 / 9.0);
            let spec = ModelSpec::von_neumann_padded(obj, 1.0, ProbeSpec::gaussian(0.0, sigma)).unwrap();
            let proc = models::von_neumann(&spec).unwrap();
            let r = proc.edr_report(&psi, &MeterFunction::identity()).unwrap();
            Eq2Point { sigma, epsilon: r.epsilon, delta: r.delta, eta: r.eta, deficit: r.unbiasedness_deficit }
        })
        .collect()
}

/// Predictive relation on the von Neumann model with minimal Gaussian probes.
fn criterion_2() -> Outcome {
    let hbar_half = 0.5;
    let coarse = eq2_sweep(64, 1.0);
    let mut ok = true;
    let mut worst_dev: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    let mut worst_deficit: f64 = 0.0;
    let mut worst_violation: f64 = 0.0;
    for p in &coarse {
        let prod = p.delta * p.eta;
        worst_deficit = worst_deficit.max(p.deficit);
        worst_dev = worst_dev.max(rel_err(prod, hbar_half));
        worst_violation = worst_violation.max((hbar_half - prod) / hbar_half);
        for (got, want) in [(p.epsilon, p.sigma), (p.delta, p.sigma), (p.eta, hbar_half / p.sigma)] {
            worst_oracle = worst_oracle.max(rel_err(got, want));
        }
        ok &= p.deficit <= 1e-8 && prod >= hbar_half * (1.0 - 0.05);
    }
    ok &= worst_dev <= 0.02 && worst_oracle <= 0.02;

    // same physical windows at half the spacing
    let fine = eq2_sweep(128, 0.5);
    let fine_dev = fine
        .iter()
        .map(|p| rel_err(p.delta * p.eta, hbar_half))
        .fold(0.0, f64::max);
    let converged = fine_dev <= 0.5 * worst_dev || fine_dev < 1e-10;
    ok &= converged;
    check(
        ok,
        format!(
            "n=64: max |delta*eta/(hbar/2) - 1| = {worst_dev:.2e}, worst violation {:.2e}, \
             max oracle error {worst_oracle:.2e}, max deficit {worst_deficit:.2e}; \
             n=128: max deviation {fine_dev:.2e}",
            worst_violation.max(0.0)
        ),
    )
}

fn swap_test_states(g: &GridSpec, rng: &mut ChaCha8Rng) -> Vec<QState> {
    let mut states = Vec::new();
    for i in 0..25 {
        let x0 = -3.0 + 0.25 * i as f64;
        let sigma = 0.8 + 0.05 * i as f64;
        let p0 = -0.5 + 0.04 * i as f64;
        states.push(g.gaussian_state(x0, p0, sigma).unwrap());
    }
    for _ in 0..25 {
        states.push(random_state(g.n, rng));
    }
    states
}

/// Swap model: Born formula holds, resolution is poor.
fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let g = grid(16);
    let proc = models::swap(&ModelSpec::swap(g, ProbeSpec::gaussian(1.0, 1.3))).unwrap();
    let xi = proc.probe_state().clone();
    let x = proc.measured();
    let mut max_eps: f64 = 0.0;
    let mut max_var_err: f64 = 0.0;
    let mut min_delta_sq = f64::INFINITY;
    for psi in swap_test_states(&g, &mut rng) {
        max_eps = max_eps.max(proc.epsilon(&psi).unwrap().value);
        let d = mean(&psi, x) - mean(&xi, x);
        let want = variance(&psi, x) + variance(&xi, x) + d * d;
        let got = proc.delta(&psi, &MeterFunction::identity()).unwrap().mean_square;
        max_var_err = max_var_err.max((got - want).abs());
        min_delta_sq = min_delta_sq.min(got);
    }
    let born = born_check(&proc);
    check(
        max_eps <= 1e-10 && born.max_deviation <= 1e-10 && born.is_born && max_var_err <= 1e-9 && min_delta_sq > 0.0,
        format!(
            "max epsilon {max_eps:.2e}, Born deviation {:.2e}, variance formula error {max_var_err:.2e}, \
             min delta^2 {min_delta_sq:.3}",
            born.max_deviation
        ),
    )
}

/// Epsilon is fixed by the POVM; eta is not.
fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut max_povm: f64 = 0.0;
    let mut max_eps: f64 = 0.0;
    let mut max_eta_change: f64 = 0.0;
    for _ in 0..20 {
        let base = models::random_process(grid(4), grid(4), &mut rng).unwrap();
        let w = random_outcome_preserving_unitary(&base, &mut rng);
        let after = base.followed_by(w).unwrap();
        let (a, b) = (extract_povm(&base), extract_povm(&after));
        for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
            max_povm = max_povm.max((x.element.matrix() - y.element.matrix()).norm());
        }
        for _ in 0..20 {
            let psi = random_state(4, &mut rng);
            let de = base.epsilon(&psi).unwrap().value - after.epsilon(&psi).unwrap().value;
            max_eps = max_eps.max(de.abs());
            let dn = base.eta(&psi).unwrap().value - after.eta(&psi).unwrap().value;
            max_eta_change = max_eta_change.max(dn.abs());
        }
    }
    check(
        max_povm <= 1e-10 && max_eps <= 1e-10 && max_eta_change > 1e-3,
        format!(
            "max POVM change {max_povm:.2e}, max epsilon change {max_eps:.2e}, \
             max eta change {max_eta_change:.3}"
        ),
    )
}

/// Max epsilon over the computational basis and 50 random states.
fn max_epsilon_all_states(proc: &MeasurementProcess, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let n = proc.dims().object;
    let basis_max = (0..n)
        .map(|i| proc.epsilon(&QState::basis(n, i)).unwrap().value)
        .fold(0.0, f64::max);
    let random_max = (0..50)
        .map(|_| proc.epsilon(&random_state(n, rng)).unwrap().value)
        .fold(0.0, f64::max);
    (basis_max, random_max)
}

/// Born formula holds exactly when epsilon vanishes for every state.
fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let g = grid(4);
    let spec = ModelSpec::swap(g, ProbeSpec::gaussian(0.0, 0.8));
    let swap = models::swap(&spec).unwrap();
    let mut split = 0;
    let mut ok = true;

    let (b, r) = max_epsilon_all_states(&swap, &mut rng);
    let born = born_check(&swap);
    let zero_eps = b.max(r) <= 1e-10;
    ok &= zero_eps && born.is_born;
    split += usize::from(zero_eps != born.is_born);

    let mut min_basis_eps = f64::INFINITY;
    let mut min_born_dev = f64::INFINITY;
    for _ in 0..10 {
        let h = random_hermitian(16, &mut rng, Units::Dimensionless);
        let u = UnitaryOp::exp_hermitian(&h, -0.05).then(UnitaryOp::swap(4)).unwrap();
        let proc = MeasurementProcess::new(edrlab::ProcessParts {
            probe_state: swap.probe_state().clone(),
            interaction: u,
            meter: swap.meter().clone(),
            measured: swap.measured().clone(),
            disturbed: swap.disturbed().clone(),
            hbar: swap.hbar(),
        })
        .unwrap();
        let (b, r) = max_epsilon_all_states(&proc, &mut rng);
        let born = born_check(&proc);
        let zero_eps = b.max(r) <= 1e-10;
        split += usize::from(zero_eps != born.is_born);
        min_basis_eps = min_basis_eps.min(b);
        min_born_dev = min_born_dev.min(born.max_deviation);
        ok &= !zero_eps && !born.is_born && b > 1e-3 && born.max_deviation > 1e-3;
    }
    ok &= split == 0;
    check(
        ok,
        format!(
            "swap: both sides hold; perturbed: min over 10 of max basis epsilon {min_basis_eps:.2e}, \
             min Born deviation {min_born_dev:.2e}; split verdicts {split}"
        ),
    )
}

/// Least-squares meter function: exact cases and a brute-force oracle.
fn criterion_6() -> Outcome {
    let mut ok = true;

    // offset von Neumann with a sharp probe
    let mu = 3.0;
    let spec = ModelSpec::von_neumann(grid(8), grid(32), 1.0, ProbeSpec::Sharp { x0: mu });
    let proc = models::von_neumann(&spec).unwrap();
    let sol = solve_unbiased_f(&proc).unwrap();
    let povm = extract_povm(&proc);
    let mut max_f_err: f64 = 0.0;
    let mut supported = 0;
    for (o, &f) in povm.outcomes.iter().zip(&sol.coefficients) {
        if o.element.matrix().norm() > 1e-12 {
            supported += 1;
            max_f_err = max_f_err.max((f - (o.value - mu)).abs());
        }
    }
    ok &= max_f_err <= 1e-8 && sol.residual <= 1e-9 && supported == 8;

    // identity model: best scalar multiple of the identity
    let id = models::identity(&ModelSpec::identity(grid(4), grid(4), ProbeSpec::gaussian(0.0, 0.7))).unwrap();
    let res2 = solve_unbiased_f(&id).unwrap().residual.powi(2);
    ok &= (res2 - 5.0).abs() <= 1e-9;

    // random processes against the normal equations
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut max_gap: f64 = 0.0;
    let mut infeasible = 0;
    for _ in 0..100 {
        let proc = models::random_process(grid(4), grid(4), &mut rng).unwrap();
        let sol = solve_unbiased_f(&proc).unwrap();
        let (_, oracle) = normal_equations_lstsq(&dense_povm(&proc), &dense_target(&proc));
        max_gap = max_gap.max((sol.residual - oracle).abs());
        infeasible += usize::from(sol.residual > 0.1);
    }
    ok &= max_gap <= 1e-9;
    check(
        ok,
        format!(
            "offset model: max |f - (m - mu)| {max_f_err:.2e} on {supported} supported clusters, \
             residual {:.2e}; identity residual^2 {res2:.12}; random: max oracle gap {max_gap:.2e}, \
             {infeasible}/100 with residual > 0.1 dx",
            sol.residual
        ),
    )
}

fn cli_output(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_edrlab"))
        .args(args)
        .env("EDRLAB_NUM_THREADS", "1")
        .output()
        .expect("run edrlab");
    assert!(out.status.success(), "edrlab {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

/// Gradient, POVM validity and CLI determinism.
fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);

    let proc = models::random_process(grid(4), grid(4), &mut rng).unwrap();
    let psi = random_state(4, &mut rng);
    let quad = delta_quadratic(&proc, &psi).unwrap();
    let k = quad.values.len();
    let delta_sq = |f: &[f64]| {
        let table = MeterFunction::tabulated(quad.values.iter().copied().zip(f.iter().copied()).collect());
        proc.delta(&psi, &table).unwrap().mean_square
    };
    let mut max_grad_err: f64 = 0.0;
    for _ in 0..5 {
        let f: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let grad = quad.gradient(&f);
        let h = 1e-5;
        let fd: Vec<f64> = (0..k)
            .map(|i| {
                let mut up = f.clone();
                let mut down = f.clone();
                up[i] += h;
                down[i] -= h;
                (delta_sq(&up) - delta_sq(&down)) / (2.0 * h)
            })
            .collect();
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let diff = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        max_grad_err = max_grad_err.max(diff / norm);
    }

    let mut povm_ok = true;
    let mut checked = 0;
    for i in 0..50 {
        let n = [4, 8, 16][i % 3];
        let proc = models::random_process(grid(4), grid(n), &mut rng).unwrap();
        povm_ok &= extract_povm(&proc).is_valid(1e-10);
        checked += 1;
    }
    for proc in [
        models::von_neumann(&ModelSpec::von_neumann_padded(grid(16), 1.0, ProbeSpec::gaussian(0.0, 1.5)).unwrap())
            .unwrap(),
        models::swap(&ModelSpec::swap(grid(16), ProbeSpec::gaussian(0.0, 1.5))).unwrap(),
        models::identity(&ModelSpec::identity(grid(16), grid(16), ProbeSpec::gaussian(0.0, 1.5))).unwrap(),
    ] {
        povm_ok &= extract_povm(&proc).is_valid(1e-10);
        checked += 1;
    }

    let runs = [
        vec!["search-f", "--model", "random", "--grid-n", "4", "--seed", "7", "--format", "json"],
        vec!["sweep", "--param", "lambda", "--from", "0", "--to", "1", "--steps", "5", "--grid-n", "16"],
        vec!["report", "--model", "random", "--grid-n", "4", "--seed", "11", "--format", "csv"],
    ];
    let mut deterministic = true;
    for args in &runs {
        deterministic &= cli_output(args) == cli_output(args);
    }

    check(
        max_grad_err <= 1e-6 && povm_ok && deterministic,
        format!(
            "gradient relative error {max_grad_err:.2e}; {checked} POVMs complete and positive: {povm_ok}; \
             CLI byte-identical: {deterministic}"
        ),
    )
}

fn main() {
    // skip when invoked for listing or filtering by the test runner
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("definition fidelity", criterion_1),
        ("predictive relation delta*eta >= hbar/2", criterion_2),
        ("Born formula with poor resolution", criterion_3),
        ("epsilon determined by the POVM", criterion_4),
        ("Born formula iff epsilon vanishes", criterion_5),
        ("unbiasing solver", criterion_6),
        ("numerical hygiene", criterion_7),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = std::time::Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let secs = start.elapsed().as_secs_f64();
        println!("criterion {} [{tag}] {name}: {} ({secs:.1} s)", i + 1, o.detail);
        failures += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
