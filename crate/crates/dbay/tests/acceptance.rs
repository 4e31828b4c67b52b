//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with the measured numbers. Run with
//! `cargo test -p dbay --test acceptance -- --nocapture` to see them.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use dbay::acquisition::{
    expected_improvement, in_search_region, in_upper_bound_region, kernel_scale_for,
    select_next_sample, AcquisitionError, AcquisitionParams, LipschitzModel,
};
use dbay::baselines::{dpop_solve, exhaustive_solve, Grid};
use dbay::benchmark::{
    generate_problem, grid_optimum, mean_relative_curve, relative_utility, run_experiment,
    sample_efficiency, ExperimentConfig, MatchedSamples, SolverName,
};
use dbay::dcop::{
    build_constraint_graph, piecewise_linear_lipschitz, prepare_tree, ContinuousDomain,
    DcopInstance, FunctionKind, Operator, UtilityFunction,
};
use dbay::gp::{
    posterior_dense, posterior_interval, tridiagonal_inverse_elements, DirichletKernel,
    ObservationSet, PosteriorPoint,
};
use dbay::io;
use dbay::protocol::SamplingStrategy;
use dbay::runtime::{solve, RunOptions, SolverConfig};

/// Criteria with pinned runtimes run one at a time, so their wall-clock
/// measurements do not contend with each other for cores.
static SUITE: std::sync::Mutex<()> = std::sync::Mutex::new(());

fn exclusive() -> std::sync::MutexGuard<'static, ()> {
    SUITE.lock().unwrap_or_else(std::sync::PoisonError::into_inner)
}

fn report(criterion: &str, passed: bool, detail: &str) {
    println!("[{}] {criterion}: {detail}", if passed { "PASS" } else { "FAIL" });
    assert!(passed, "{criterion}: {detail}");
}

/// Random piecewise-linear 1-Lipschitz function with knots on a uniform
/// grid of `knots` points over [0, 1].
fn random_lipschitz_fn(rng: &mut ChaCha8Rng, knots: usize) -> (Vec<f64>, Vec<f64>) {
    let xs: Vec<f64> = (0..knots).map(|i| i as f64 / (knots - 1) as f64).collect();
    let mut ys = vec![rng.gen_range(-1.0..1.0)];
    for w in xs.windows(2) {
        let slope: f64 = rng.gen_range(-1.0..1.0);
        ys.push(ys.last().unwrap() + slope * (w[1] - w[0]));
    }
    (xs, ys)
}

fn eval_pl(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let hi = xs.partition_point(|&k| k < x).clamp(1, xs.len() - 1);
    let t = (x - xs[hi - 1]) / (xs[hi] - xs[hi - 1]);
    ys[hi - 1] * (1.0 - t) + ys[hi] * t
}

#[test]
fn criterion_1_posterior_oracle_equivalence() {
    let _guard = exclusive();
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_mean: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for _ in 0..100 {
        // Boundary observations included, 3 ≤ S ≤ 20.
        let total = rng.gen_range(3..=20usize);
        let mut set = ObservationSet::new();
        set.insert(0.0, rng.gen_range(-2.0..2.0)).unwrap();
        set.insert(1.0, rng.gen_range(-2.0..2.0)).unwrap();
        while set.len() < total {
            let _ = set.insert(rng.gen_range(0.0005..0.9995), rng.gen_range(-2.0..2.0));
        }
        let kernel = DirichletKernel::new(rng.gen_range(0.2..3.0)).unwrap();
        for gi in 0..=100 {
            let x = gi as f64 / 100.0;
            let a = posterior_interval(&set, &kernel, x).unwrap();
            let b = posterior_dense(&set, &kernel, x).unwrap();
            worst_mean = worst_mean.max((a.mean - b.mean).abs());
            worst_var = worst_var.max((a.variance - b.variance).abs());
        }
    }

    let mut worst_defect: f64 = 0.0;
    for _ in 0..100 {
        // Strictly interior sets for the analytic inverse (boundary inputs
        // make the Gramian singular).
        let total = rng.gen_range(3..=20usize);
        let mut set = ObservationSet::new();
        while set.len() < total {
            let _ = set.insert(rng.gen_range(0.005..0.995), rng.gen_range(-2.0..2.0));
        }
        let kernel = DirichletKernel::new(rng.gen_range(0.2..3.0)).unwrap();
        let inv = tridiagonal_inverse_elements(&set, &kernel).unwrap();
        let entries = set.entries();
        let n = entries.len();
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                for l in 0..n {
                    let inv_lj = if l == j {
                        inv.diag[l]
                    } else if l + 1 == j {
                        inv.off[l]
                    } else if j + 1 == l {
                        inv.off[j]
                    } else {
                        0.0
                    };
                    if inv_lj != 0.0 {
                        v += kernel.eval(entries[i].x, entries[l].x).unwrap() * inv_lj;
                    }
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst_defect = worst_defect.max((v - target).abs());
            }
        }
    }
    let elapsed = started.elapsed();
    report(
        "criterion 1: posterior oracle equivalence",
        worst_mean < 1e-8 && worst_var < 1e-8 && worst_defect < 1e-8 && elapsed.as_secs() < 10,
        &format!(
            "max |Δμ| = {worst_mean:.2e}, max |Δσ²| = {worst_var:.2e}, \
             max |K·K⁻¹ − I| = {worst_defect:.2e}, elapsed {elapsed:.2?} (< 10 s)"
        ),
    );
}

#[test]
fn criterion_2_expected_improvement_against_monte_carlo() {
    let _guard = exclusive();
    let started = Instant::now();
    // Random tuples kept inside the regime a 10⁶-draw estimate can
    // resolve: with the mean gap below -2.5 deviations the draws rarely see
    // a positive gain and the sample standard error collapses to zero,
    // which makes a standard-error comparison meaningless. The deep tail is
    // checked separately below.
    let tuples: Vec<(f64, f64, f64, f64)> = {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let mut out = Vec::new();
        while out.len() < 50 {
            let mu = rng.gen_range(-2.0..2.0);
            let sigma = rng.gen_range(0.05..2.0);
            let incumbent = rng.gen_range(-2.0..2.0);
            let xi = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..0.5) };
            if (mu - incumbent - xi) / sigma >= -2.5 {
                out.push((mu, sigma, incumbent, xi));
            }
        }
        out
    };
    let worst = tuples
        .par_iter()
        .enumerate()
        .map(|(i, &(mu, sigma, incumbent, xi))| {
            let mut rng = ChaCha8Rng::seed_from_u64(4000 + i as u64);
            let draws = 1_000_000u64;
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..draws {
                // Box-Muller gives an erf-free oracle.
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen();
                let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                let gain = (mu + sigma * z - incumbent - xi).max(0.0);
                sum += gain;
                sum_sq += gain * gain;
            }
            let mc = sum / draws as f64;
            let var = (sum_sq / draws as f64 - mc * mc).max(0.0);
            let se = (var / draws as f64).sqrt().max(1e-12);
            let q = expected_improvement(
                &PosteriorPoint {
                    mean: mu,
                    variance: sigma * sigma,
                },
                incumbent,
                &AcquisitionParams { xi },
            );
            (q - mc).abs() / se
        })
        .reduce(|| 0.0, f64::max);
    // Deep tail: the draws see no positive gain, and the closed form must
    // agree that the expected improvement is negligible.
    let mut tail_ok = true;
    {
        let mut rng = ChaCha8Rng::seed_from_u64(919);
        for _ in 0..5 {
            let sigma: f64 = rng.gen_range(0.05..1.0);
            let incumbent: f64 = rng.gen_range(0.0..1.0);
            let mu = incumbent - rng.gen_range(6.0..9.0) * sigma;
            let q = expected_improvement(
                &PosteriorPoint {
                    mean: mu,
                    variance: sigma * sigma,
                },
                incumbent,
                &AcquisitionParams::default(),
            );
            if !(0.0..1e-6).contains(&q) {
                tail_ok = false;
            }
        }
    }
    let elapsed = started.elapsed();
    report(
        "criterion 2: expected improvement closed form",
        worst <= 3.0 && tail_ok && elapsed.as_secs() < 60,
        &format!(
            "max deviation {worst:.2} standard errors over 50 tuples;              deep-tail values vanish: {tail_ok}; elapsed {elapsed:.2?} (< 60 s)"
        ),
    );
}

#[test]
fn criterion_3_scale_guard_active_and_sufficient() {
    let _guard = exclusive();
    let lip = LipschitzModel::new(1.0);
    let kernel = kernel_scale_for(&lip).unwrap();
    let halved = DirichletKernel::new(0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut guard_failures = 0usize;
    let mut halved_violations = 0usize;
    for _ in 0..1000 {
        let (xs, ys) = random_lipschitz_fn(&mut rng, 9);
        let mut set = ObservationSet::new();
        set.insert(0.0, eval_pl(&xs, &ys, 0.0)).unwrap();
        set.insert(1.0, eval_pl(&xs, &ys, 1.0)).unwrap();
        let extra = rng.gen_range(1..=8);
        for _ in 0..extra {
            let x: f64 = rng.gen();
            let _ = set.insert(x, eval_pl(&xs, &ys, x));
        }
        let mut full_ok = true;
        let mut half_violated = false;
        for gi in 0..=1000 {
            let x = gi as f64 / 1000.0;
            let envelope = dbay::acquisition::upper_bound(&set, &lip, x);
            let full = posterior_interval(&set, &kernel, x).unwrap();
            if full.mean + full.std_dev() < envelope - 1e-9 {
                full_ok = false;
            }
            let half = posterior_interval(&set, &halved, x).unwrap();
            if half.mean + half.std_dev() < envelope - 1e-9 {
                half_violated = true;
            }
        }
        if !full_ok {
            guard_failures += 1;
        }
        if half_violated {
            halved_violations += 1;
        }
    }
    report(
        "criterion 3: kernel-scale guard",
        guard_failures == 0 && halved_violations >= 1,
        &format!(
            "scale = constant: {guard_failures}/1000 violations (need 0); \
             scale = constant/2: {halved_violations}/1000 violations (need ≥ 1)"
        ),
    );
}

#[test]
fn criterion_4_envelope_and_search_region_chain() {
    let _guard = exclusive();
    let lip = LipschitzModel::new(1.0);
    let kernel = kernel_scale_for(&lip).unwrap();
    let params = AcquisitionParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut checked = 0usize;
    let mut optimum_in_region = 0usize;
    let mut inclusion_holds = 0usize;
    while checked < 500 {
        // Knots on the 1001-point evaluation grid, so the true optimum is a
        // grid point; random real-valued observations leave it unobserved.
        let (xs, ys) = random_lipschitz_fn(&mut rng, 11);
        let mut set = ObservationSet::new();
        set.insert(0.0, eval_pl(&xs, &ys, 0.0)).unwrap();
        set.insert(1.0, eval_pl(&xs, &ys, 1.0)).unwrap();
        for _ in 0..4 {
            let x: f64 = rng.gen();
            let _ = set.insert(x, eval_pl(&xs, &ys, x));
        }
        let (argmax, max) = (0..=1000)
            .map(|gi| {
                let x = gi as f64 / 1000.0;
                (x, eval_pl(&xs, &ys, x))
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if max <= set.incumbent().unwrap().y {
            continue; // the optimum is effectively observed; not a trial
        }
        checked += 1;
        if in_upper_bound_region(&set, &lip, argmax) {
            optimum_in_region += 1;
        }
        let mut subset = true;
        for gi in 0..=1000 {
            let x = gi as f64 / 1000.0;
            if in_upper_bound_region(&set, &lip, x)
                && !in_search_region(&set, &kernel, &params, x).unwrap()
            {
                subset = false;
            }
        }
        if subset {
            inclusion_holds += 1;
        }
    }
    report(
        "criterion 4: envelope region contains optimum and sits inside search region",
        optimum_in_region == 500 && inclusion_holds == 500,
        &format!(
            "optimum in envelope region {optimum_in_region}/500; \
             region inclusion {inclusion_holds}/500"
        ),
    );
}

#[test]
fn criterion_5_one_dimensional_convergence() {
    let _guard = exclusive();
    let started = Instant::now();
    let lip = LipschitzModel::new(1.0);
    let kernel = kernel_scale_for(&lip).unwrap();
    let params = AcquisitionParams::default();
    let results: Vec<(bool, f64)> = (0..500u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(5000 + trial);
            let (xs, ys) = random_lipschitz_fn(&mut rng, 21);
            let mut set = ObservationSet::new();
            for x in [0.0, 1.0, 0.5] {
                set.insert(x, eval_pl(&xs, &ys, x)).unwrap();
            }
            for _ in 3..50 {
                match select_next_sample(&set, &kernel, &params) {
                    Ok(x) => {
                        if set.insert(x, eval_pl(&xs, &ys, x)).is_err() {
                            break;
                        }
                    }
                    Err(AcquisitionError::ConvergedFlat { .. }) => break,
                    Err(e) => panic!("{e}"),
                }
            }
            let best = set.incumbent().unwrap().y;
            let grid_max = (0..=100_000)
                .map(|i| eval_pl(&xs, &ys, i as f64 / 100_000.0))
                .fold(f64::NEG_INFINITY, f64::max);
            let gap = grid_max - best;
            (gap <= 0.02, gap)
        })
        .collect();
    let hits = results.iter().filter(|(ok, _)| *ok).count();
    let worst = results.iter().map(|&(_, g)| g).fold(0.0f64, f64::max);
    let elapsed = started.elapsed();
    report(
        "criterion 5: one-dimensional convergence at budget 50",
        hits * 100 >= 99 * 500 && elapsed.as_secs() < 120,
        &format!(
            "{hits}/500 within 0.02·L of the grid optimum (need ≥ 495), \
             worst gap {worst:.4}, elapsed {elapsed:.2?} (< 2 min)"
        ),
    );
}

#[test]
fn criterion_6_small_instance_optimality() {
    let _guard = exclusive();
    let results: Vec<(f64, bool)> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let m = 2 + (seed % 2) as usize;
            let t = 2 * m;
            let problem = generate_problem(seed, m, t, 1.0, 36.0);
            let instance = Arc::new(problem.compile(true).unwrap());

            let config = SolverConfig::uniform(m, 25);
            let out = solve(&instance, &config, seed, &RunOptions::default()).unwrap();
            let grid = Grid::equidistant(&instance, 361).unwrap();
            let (_, reference) = exhaustive_solve(&instance, &grid).unwrap();
            let relative = relative_utility(out.utility, reference).unwrap();

            // Injected exhaustive sampling must hit the same-grid optimum
            // exactly.
            let k = 25;
            let injected = SolverConfig::uniform(m, k).with_strategy(SamplingStrategy::GridSweep(k));
            let exact = solve(&instance, &injected, seed, &RunOptions::default()).unwrap();
            let (_, oracle) = grid_optimum(&instance, k).unwrap();
            (relative, exact.utility == oracle)
        })
        .collect();
    let mean = results.iter().map(|&(r, _)| r).sum::<f64>() / results.len() as f64;
    let worst = results.iter().map(|&(r, _)| r).fold(f64::INFINITY, f64::min);
    let exact_all = results.iter().all(|&(_, e)| e);
    report(
        "criterion 6: small-instance optimality at budget 25",
        mean >= 0.95 && exact_all,
        &format!(
            "mean relative utility {mean:.4} over 50 instances (need ≥ 0.95, worst single \
             instance {worst:.4}); injected-grid runs equal the grid optimum exactly: {exact_all}"
        ),
    );
}

#[test]
fn criterion_7_baseline_cross_validation() {
    let _guard = exclusive();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut checked = 0usize;
    let mut agree = 0usize;
    while checked < 100 {
        let agents = rng.gen_range(2..=4usize);
        let fcount = rng.gen_range(1..=2 * agents);
        let domains = vec![ContinuousDomain::new(-1.0, 1.0).unwrap(); agents];
        let functions: Vec<UtilityFunction> = (0..fcount)
            .map(|id| {
                let arity = rng.gen_range(1..=2.min(agents));
                let mut scope = Vec::new();
                while scope.len() < arity {
                    let v = rng.gen_range(0..agents);
                    if !scope.contains(&v) {
                        scope.push(v);
                    }
                }
                let knots: Vec<Vec<f64>> = scope.iter().map(|_| vec![-1.0, 0.0, 1.0]).collect();
                let cells = 3usize.pow(scope.len() as u32);
                let values: Vec<f64> = (0..cells).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let lipschitz = piecewise_linear_lipschitz(&knots, &values);
                UtilityFunction::new(
                    id,
                    scope,
                    FunctionKind::PiecewiseLinear { knots, values },
                    lipschitz,
                )
            })
            .collect();
        let Ok(instance) =
            DcopInstance::with_identity_allocation(domains, functions, Operator::Sum)
        else {
            continue;
        };
        let graph = build_constraint_graph(&instance);
        if !graph.is_connected() {
            continue;
        }
        let k = rng.gen_range(2..=10usize);
        let grid = Grid::equidistant(&instance, k).unwrap();
        let all: Vec<usize> = (0..agents).collect();
        if grid.cell_count(&all) > 100_000 {
            continue;
        }
        checked += 1;
        let tree = prepare_tree(&instance, &graph).unwrap();
        let (ea, eu) = exhaustive_solve(&instance, &grid).unwrap();
        let (da, du) = dpop_solve(&instance, &tree, &grid).unwrap();
        if eu == du && ea == da {
            agree += 1;
        }
    }
    report(
        "criterion 7: table solver equals exhaustive enumeration",
        agree == 100,
        &format!("{agree}/100 instances agree exactly on utility and assignment"),
    );
}

#[test]
fn criterion_8_benchmark_curves() {
    let _guard = exclusive();
    let started = Instant::now();
    let cfg = ExperimentConfig {
        jobs: std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
        ..ExperimentConfig::default()
    };
    let records = run_experiment(&cfg).expect("sweep runs");
    let elapsed = started.elapsed();

    // (a) Budget 3 is the shared equidistant bootstrap: per seed, the
    // adaptive and grid relative utilities coincide.
    let mut parity = true;
    let mut worst_parity_gap: f64 = 0.0;
    for &seed in &cfg.seeds {
        let dbay = records
            .iter()
            .find(|r| r.seed == seed && r.solver == SolverName::Adaptive && r.budget_or_k == 3)
            .unwrap();
        let grid = records
            .iter()
            .find(|r| r.seed == seed && r.solver == SolverName::Grid && r.budget_or_k == 3)
            .unwrap();
        let gap = (dbay.relative - grid.relative).abs();
        worst_parity_gap = worst_parity_gap.max(gap);
        if gap > 1e-9 {
            parity = false;
        }
    }

    // (b) Past the exploration phase the adaptive solver dominates the
    // equidistant baseline on mean relative utility.
    let solver_curve = mean_relative_curve(&records, SolverName::Adaptive);
    let grid_curve = mean_relative_curve(&records, SolverName::Grid);
    let mut dominates = true;
    for budget in 11..=20usize {
        let s = solver_curve.iter().find(|&&(b, _)| b == budget).unwrap().1;
        let g = grid_curve.iter().find(|&&(k, _)| k == budget).unwrap().1;
        if s < g {
            dominates = false;
        }
    }

    // (c) The grid needs at least as many samples as the adaptive budget to
    // match it.
    let efficiency = sample_efficiency(&solver_curve, &grid_curve);
    let mut efficient = true;
    for &(budget, matched) in &efficiency {
        if budget < 11 {
            continue;
        }
        let ok = match matched {
            MatchedSamples::At(k) => k >= budget,
            MatchedSamples::Beyond(_) => true,
        };
        if !ok {
            efficient = false;
        }
    }

    report(
        "criterion 8: benchmark curve reproduction",
        parity && dominates && efficient,
        &format!(
            "budget-3 parity within 1e-9 across {} seeds (worst gap {worst_parity_gap:.2e}): {parity}; \
             mean adaptive ≥ mean grid on budgets 11..20: {dominates}; \
             matched grid samples ≥ budget on budgets 11..20: {efficient}; \
             elapsed {elapsed:.1?} (target < 15 min)",
            cfg.seeds.len()
        ),
    );
    assert!(elapsed.as_secs() < 900);
}

#[test]
fn criterion_9_determinism() {
    let _guard = exclusive();
    let dir = std::env::temp_dir().join(format!("dbay_acceptance_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();

    // Byte-identical traces for a solve configuration.
    let problem = generate_problem(9, 6, 12, 1.0, 36.0);
    let instance = Arc::new(problem.compile(true).unwrap());
    let config = SolverConfig::uniform(6, 8);
    let options = RunOptions { record_trace: true };
    let trace_a = dir.join("a.trace");
    let trace_b = dir.join("b.trace");
    io::write_trace(&trace_a, &solve(&instance, &config, 9, &options).unwrap().trace).unwrap();
    io::write_trace(&trace_b, &solve(&instance, &config, 9, &options).unwrap().trace).unwrap();
    let traces_equal = std::fs::read(&trace_a).unwrap() == std::fs::read(&trace_b).unwrap();
    let trace_len = std::fs::read(&trace_a).unwrap().len();

    // Byte-identical CSVs for a sweep configuration, including across
    // different worker counts.
    let sweep = |jobs: usize, path: &std::path::Path| {
        let cfg = ExperimentConfig {
            seeds: (0..3).collect(),
            budgets: vec![3, 5, 8],
            grid_ks: (2..=10).collect(),
            reference_k: 60,
            jobs,
            ..ExperimentConfig::default()
        };
        let records = run_experiment(&cfg).unwrap();
        io::write_records_csv(path, &records).unwrap();
    };
    let csv_a = dir.join("a.csv");
    let csv_b = dir.join("b.csv");
    let csv_c = dir.join("c.csv");
    sweep(1, &csv_a);
    sweep(1, &csv_b);
    sweep(4, &csv_c);
    let csv_bytes = std::fs::read(&csv_a).unwrap();
    let csvs_equal =
        csv_bytes == std::fs::read(&csv_b).unwrap() && csv_bytes == std::fs::read(&csv_c).unwrap();

    report(
        "criterion 9: determinism",
        traces_equal && csvs_equal,
        &format!(
            "repeated solves write identical traces ({trace_len} bytes): {traces_equal}; \
             repeated sweeps (and a 4-worker sweep) write identical CSVs: {csvs_equal}"
        ),
    );
}
