//! Acceptance checks, one line per criterion. Runs without the libtest harness so the
//! lines are always printed; exits nonzero when any criterion fails.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 5 6`.

mod common;

use std::time::Instant;

use common::{mixed_spec, random_dataset, random_point};
use multirem::bf_tests::{
    all_orderings, compute_fractions, evidence_matrix, fractional_bf_gaussian, parse_hypotheses,
    test_homogeneity, test_variance_order, GaussianApprox, PlugIn, PriorMode, VarianceOrderConfig,
};
use multirem::fit::fit;
use multirem::fit_diagnostics::{deviance_residuals, write_paired};
use multirem::model::{
    noncentered_transform, poisson_oracle_receiver, poisson_oracle_sender, receiver_log_lik,
    receiver_log_lik_at, sender_log_lik, sender_log_lik_at, HyperPriorConfig, Model, ModelSpec,
    ModelTerm,
};
use multirem::sampler::{run_chains, ChainConfig, Init, PosteriorDraws, Target};
use multirem::simulator::{
    correlation_cholesky, simulate, AttributeDist, AttributeSpec, Count, PopulationParams,
    SimConfig, Simulation,
};
use multirem::statistics::{Side, StatKind, StatisticSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn sd(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

fn attr(name: &str) -> StatisticSpec {
    StatisticSpec::new(StatKind::ActorAttribute(name.into()))
}

fn normal_attr(name: &str, sd: f64) -> AttributeSpec {
    AttributeSpec {
        name: name.into(),
        dist: AttributeDist::Normal { mean: 0.0, sd },
    }
}

fn chains(chains: usize, warmup: usize, kept: usize, seed: u64) -> ChainConfig {
    ChainConfig {
        iterations: warmup + kept,
        warmup,
        seed,
        chains,
        ..ChainConfig::default()
    }
}

fn fit_simulation(sim: &Simulation, spec: &ModelSpec, cfg: &ChainConfig) -> Result<PosteriorDraws, String> {
    let model = Model::new(sim.dataset.clone(), spec.clone()).map_err(|e| e.to_string())?;
    fit(&model, cfg).map(|(d, _)| d).map_err(|e| e.to_string())
}

fn poisson_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for inst in 0..50u64 {
        let k = rng.random_range(1..=3);
        let model = Model::new(random_dataset(5000 + inst, k), mixed_spec()).unwrap();
        let mut snd = Vec::new();
        let mut rec = Vec::new();
        for j in 0..10 {
            let s = model.constrain(&random_point(&model, 100 * inst + j, 1.0)).unwrap();
            snd.push(poisson_oracle_sender(&model, &s).unwrap() - sender_log_lik(&model, &s).unwrap());
            rec.push(poisson_oracle_receiver(&model, &s).unwrap() - receiver_log_lik(&model, &s).unwrap());
        }
        worst = worst.max(sd(&snd)).max(sd(&rec));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-8 && secs < 10.0,
        format!("max sd of oracle offset {worst:.2e} over 50 instances in {secs:.2}s"),
    )
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let h = 1e-5;
    for inst in 0..20u64 {
        let model = Model::new(random_dataset(7000 + inst, 1 + inst as usize % 3), mixed_spec()).unwrap();
        let u = random_point(&model, inst, 1.0);
        let (_, g) = model.log_posterior_and_grad(&u).unwrap();
        for i in 0..u.len() {
            let mut up = u.clone();
            up[i] += h;
            let mut dn = u.clone();
            dn[i] -= h;
            let fd = (model.log_posterior(&up).unwrap() - model.log_posterior(&dn).unwrap()) / (2.0 * h);
            worst = worst.max((g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1.0));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-5 && secs < 30.0,
        format!("max relative error {worst:.2e} over 20 instances in {secs:.2}s"),
    )
}

fn noncentered() -> Outcome {
    let mean = [0.5, -1.0, 2.0];
    let sigma = [1.5, 0.7, 2.0];
    let omega = [1.0, 0.4, -0.2, 0.4, 1.0, 0.3, -0.2, 0.3, 1.0];
    let l = correlation_cholesky(&omega, 3).unwrap();
    let cov = |i: usize, j: usize| sigma[i] * sigma[j] * omega[i * 3 + j];
    let mut factor_err: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let aat: f64 = (0..3).map(|k| sigma[i] * l[i * 3 + k] * sigma[j] * l[j * 3 + k]).sum();
            factor_err = factor_err.max((aat - cov(i, j)).abs());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 100_000;
    let draws: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
            noncentered_transform(&z, &mean, &sigma, &l).unwrap()
        })
        .collect();
    let mut worst_z: f64 = 0.0;
    for i in 0..3 {
        let m = draws.iter().map(|d| d[i]).sum::<f64>() / n as f64;
        worst_z = worst_z.max((m - mean[i]).abs() / (cov(i, i) / n as f64).sqrt());
        for j in 0..=i {
            let c = draws.iter().map(|d| (d[i] - mean[i]) * (d[j] - mean[j])).sum::<f64>() / n as f64;
            let se = ((cov(i, i) * cov(j, j) + cov(i, j).powi(2)) / n as f64).sqrt();
            worst_z = worst_z.max((c - cov(i, j)).abs() / se);
        }
    }
    outcome(
        factor_err < 1e-10 && worst_z < 3.0,
        format!("max |AA' - Sigma| {factor_err:.1e}; worst moment deviation {worst_z:.2} MCSE"),
    )
}

/// Covariates in the style of a classroom study: binary gender and race, activity and
/// participation shifts, inertia.
fn recovery_setup(seed: u64) -> SimConfig {
    let bern = |name: &str| AttributeSpec {
        name: name.into(),
        dist: AttributeDist::Bernoulli { p: 0.5 },
    };
    let spec = ModelSpec {
        sender: vec![
            ModelTerm::random(StatisticSpec::new(StatKind::Intercept)),
            ModelTerm::random(attr("gender")),
            ModelTerm::fixed(StatisticSpec::new(StatKind::Outgoingness)),
            ModelTerm::fixed(StatisticSpec::new(StatKind::PShiftAbb)),
        ],
        receiver: vec![
            ModelTerm::fixed(attr("race")),
            ModelTerm::random(StatisticSpec::new(StatKind::Inertia)),
            ModelTerm::random(StatisticSpec::new(StatKind::PShiftAbba)),
        ],
        hyper: HyperPriorConfig::default(),
    };
    SimConfig {
        clusters: 15,
        actors: Count::Fixed(20),
        events: Count::Fixed(200),
        attributes: vec![bern("gender"), bern("race")],
        spec,
        params: PopulationParams {
            phi: vec![0.3, 1.0],
            psi: vec![-0.4],
            zeta: vec![-1.0, 0.4],
            mu: vec![0.6, 1.2],
            sigma_gamma: vec![0.5, 0.3],
            sigma_beta: vec![0.3, 0.4],
            corr_gamma: None,
            corr_beta: None,
        },
        seed,
    }
}

fn recovery() -> Outcome {
    let cfg = recovery_setup(2024);
    let sim = simulate(&cfg).unwrap();
    let draws = match fit_simulation(&sim, &cfg.spec, &chains(4, 1000, 1000, 11)) {
        Ok(d) => d,
        Err(e) => return outcome(false, format!("fit failed: {e}")),
    };
    let truth = sim.truth_table(&cfg.spec).unwrap();
    let summary = multirem::fit::summarize(&draws);
    let (mut inside, mut total) = (0, 0);
    let (mut hyper_inside, mut hyper_total) = (0, 0);
    let mut max_rhat: f64 = 0.0;
    let mut min_ess = f64::INFINITY;
    let mut undefined = 0;
    for ((name, value), s) in truth.iter().zip(&summary) {
        assert_eq!(name, &s.name);
        if s.sd == 0.0 {
            // structural zeros and ones of the Cholesky factors
            continue;
        }
        let hit = s.q025 <= *value && *value <= s.q975;
        total += 1;
        inside += usize::from(hit);
        if !name.starts_with("gamma.") && !name.starts_with("beta.") && !name.starts_with("L_") {
            hyper_total += 1;
            hyper_inside += usize::from(hit);
        }
        match (s.rhat, s.ess_bulk, s.ess_tail) {
            (Some(r), Some(b), Some(t)) => {
                max_rhat = max_rhat.max(r);
                min_ess = min_ess.min(b).min(t);
            }
            _ => undefined += 1,
        }
    }
    let coverage = inside as f64 / total as f64;
    let hyper_coverage = hyper_inside as f64 / hyper_total as f64;
    outcome(
        coverage >= 0.9 && hyper_coverage >= 0.9 && max_rhat < 1.05 && min_ess > 100.0 && undefined == 0,
        format!(
            "coverage {inside}/{total} ({hyper_inside}/{hyper_total} population-level); \
             max R-hat {max_rhat:.3}; min bulk/tail ESS {min_ess:.0}; divergences {}",
            draws.divergences()
        ),
    )
}

fn homogeneity_setup(sigma_x: f64, seed: u64) -> SimConfig {
    let spec = ModelSpec {
        sender: vec![
            ModelTerm::random(StatisticSpec::new(StatKind::Intercept)),
            ModelTerm::random(attr("x")),
        ],
        receiver: vec![ModelTerm::random(attr("y"))],
        hyper: HyperPriorConfig::default(),
    };
    SimConfig {
        clusters: 20,
        actors: Count::Fixed(8),
        events: Count::Fixed(100),
        attributes: vec![normal_attr("x", 1.0), normal_attr("y", 1.0)],
        spec,
        params: PopulationParams {
            zeta: vec![-1.0, 0.5],
            mu: vec![0.5],
            sigma_gamma: vec![0.3, sigma_x],
            sigma_beta: vec![0.3],
            ..PopulationParams::default()
        },
        seed,
    }
}

fn homogeneity_calibration() -> Outcome {
    let mut counts = [0usize; 2];
    let mut bfs = [Vec::new(), Vec::new()];
    for (case, sigma_x) in [0.0, 1.0].into_iter().enumerate() {
        for rep in 0..10u64 {
            let cfg = homogeneity_setup(sigma_x, 300 + 10 * case as u64 + rep);
            let sim = simulate(&cfg).unwrap();
            let draws = match fit_simulation(&sim, &cfg.spec, &chains(2, 500, 1000, rep + 1)) {
                Ok(d) => d,
                Err(e) => return outcome(false, format!("fit failed: {e}")),
            };
            let r = test_homogeneity(&draws, "x", Side::Sender, PlugIn::Mean).unwrap();
            let ok = if case == 0 { r.bf01 > 3.0 } else { r.bf01 < 1.0 / 3.0 };
            counts[case] += usize::from(ok);
            bfs[case].push(format!("{:.3}", r.bf01));
        }
    }
    outcome(
        counts[0] >= 8 && counts[1] >= 8,
        format!(
            "sigma 0: BF01 > 3 in {}/10 [{}]; sigma 1: BF01 < 1/3 in {}/10 [{}]",
            counts[0],
            bfs[0].join(" "),
            counts[1],
            bfs[1].join(" ")
        ),
    )
}

fn ordering_setup(seed: u64) -> SimConfig {
    let spec = ModelSpec {
        sender: vec![
            ModelTerm::random(StatisticSpec::new(StatKind::Intercept)),
            ModelTerm::random(attr("x1")),
            ModelTerm::random(attr("x2")),
            ModelTerm::random(attr("x3")),
        ],
        receiver: vec![ModelTerm::fixed(attr("x1"))],
        hyper: HyperPriorConfig::default(),
    };
    SimConfig {
        clusters: 300,
        actors: Count::Fixed(4),
        events: Count::Range([40, 80]),
        attributes: vec![normal_attr("x1", 1.0), normal_attr("x2", 1.5), normal_attr("x3", 1.5)],
        spec,
        params: PopulationParams {
            psi: vec![0.3],
            zeta: vec![-1.0, 0.2, -0.2, 0.1],
            sigma_gamma: vec![0.3, 1.3, 0.5, 0.45],
            ..PopulationParams::default()
        },
        seed,
    }
}

fn sd_names() -> Vec<String> {
    ["sigma_gamma.x1", "sigma_gamma.x2", "sigma_gamma.x3"].map(String::from).to_vec()
}

fn exploratory_prior() -> (f64, f64) {
    // posterior draws are irrelevant to the prior; any positive values do
    let names = sd_names();
    let rows = vec![vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]];
    let draws = PosteriorDraws {
        names: names.clone(),
        draws: vec![rows],
        stats: vec![Vec::new()],
        step_sizes: vec![1.0],
        inv_metrics: vec![Vec::new()],
    };
    let hs = all_orderings(&names);
    let exact = test_variance_order(&draws, &names, &hs, &VarianceOrderConfig::default()).unwrap();
    let analytic_err = exact
        .results
        .iter()
        .map(|h| (h.prior - 1.0 / 6.0).abs())
        .fold(0.0, f64::max);
    let mc = VarianceOrderConfig {
        prior: PriorMode::MonteCarlo,
        prior_samples: 200_000,
        ..VarianceOrderConfig::default()
    };
    let r = test_variance_order(&draws, &names, &hs, &mc).unwrap();
    let worst_z = r
        .results
        .iter()
        .map(|h| (h.prior - 1.0 / 6.0).abs() / h.prior_se.unwrap())
        .fold(0.0, f64::max);
    (analytic_err, worst_z)
}

fn evidence_consistency() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(2..8);
        let bfs: Vec<f64> = (0..n).map(|_| rng.random_range(-20.0f64..20.0).exp()).collect();
        let labels: Vec<String> = (0..n).map(|i| format!("H{i}")).collect();
        let e = evidence_matrix(&labels, &bfs).unwrap();
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((e.bf[i][j] * e.bf[j][i] - 1.0).abs());
                for k in 0..n {
                    worst = worst.max((e.bf[i][j] * e.bf[j][k] / e.bf[i][k] - 1.0).abs());
                }
            }
        }
    }
    worst
}

fn ordering_test() -> Outcome {
    let (analytic_err, mc_z) = exploratory_prior();
    let evidence_err = evidence_consistency();
    let names = sd_names();
    let hs = all_orderings(&names);
    let truth = "sigma_gamma.x1 > sigma_gamma.x2 > sigma_gamma.x3";
    let mut wins = 0;
    let mut top = Vec::new();
    for rep in 0..10u64 {
        let cfg = ordering_setup(900 + rep);
        let sim = simulate(&cfg).unwrap();
        let draws = match fit_simulation(&sim, &cfg.spec, &chains(2, 500, 1000, rep + 1)) {
            Ok(d) => d,
            Err(e) => return outcome(false, format!("fit failed: {e}")),
        };
        let r = test_variance_order(&draws, &names, &hs, &VarianceOrderConfig::default()).unwrap();
        let best = r
            .results
            .iter()
            .max_by(|a, b| a.bf_unconstrained.total_cmp(&b.bf_unconstrained))
            .unwrap();
        let truth_bf = r.results.iter().find(|h| h.label == truth).unwrap().bf_unconstrained;
        // ties at the top count for the true ordering
        if truth_bf >= best.bf_unconstrained {
            wins += 1;
        }
        top.push(format!("{:.2}", truth_bf));
    }
    outcome(
        analytic_err == 0.0 && mc_z < 3.0 && evidence_err < 1e-10 && wins >= 8,
        format!(
            "analytic prior error {analytic_err:.1e}; MC prior within {mc_z:.2} MCSE; \
             evidence matrix error {evidence_err:.1e}; true ordering best in {wins}/10 (its BF: {})",
            top.join(" ")
        ),
    )
}

/// Standard normal CDF by composite Simpson integration of the density.
fn phi_cdf(x: f64) -> f64 {
    let lo = -12.0;
    let n = 20_000;
    let h = (x - lo) / n as f64;
    let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = f(lo) + f(x);
    for i in 1..n {
        s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn closed_forms() -> Outcome {
    let gauss = |m: &[f64], c: &[f64]| GaussianApprox::new(m.to_vec(), c.to_vec()).unwrap();
    let (names, hs) = parse_hypotheses("H0: phi.x = 0").unwrap();
    let eq = fractional_bf_gaussian(&gauss(&[0.0], &[1.0]), &[0.1], &names, &hs, 1000, 1).unwrap();
    let eq_err = (eq.results[0].bf_unconstrained - 10f64.sqrt()).abs();

    let (names, hs) = parse_hypotheses("H1: phi.x > 0").unwrap();
    let one = fractional_bf_gaussian(&gauss(&[2.0], &[1.0]), &[0.2], &names, &hs, 1000, 1).unwrap();
    let one_err = (one.results[0].bf_unconstrained - phi_cdf(2.0) / 0.5).abs();

    let (names, hs) = parse_hypotheses("H1: |mu.a| < |mu.b|").unwrap();
    let post = gauss(&[0.4, -1.5], &[1.0, 0.3, 0.3, 1.0]);
    let abs = fractional_bf_gaussian(&post, &[0.05, 0.05], &names, &hs, 1_000_000, 3).unwrap();
    let abs_err = (abs.results[0].prior - 0.5).abs();

    let (b, _) = compute_fractions(5, 3, 0, 1, 300).unwrap();
    let b_err = (b - 23.0 / 300.0).abs();
    outcome(
        eq_err < 1e-10 && one_err < 1e-10 && abs_err < 1e-3 && b_err < 1e-15,
        format!(
            "sqrt(10) error {eq_err:.1e}; Phi(2)/0.5 error {one_err:.1e}; \
             |.| prior error {abs_err:.1e}; fraction error {b_err:.1e}"
        ),
    )
}

fn residuals() -> Outcome {
    let mut worst: f64 = 0.0;
    for inst in 0..30u64 {
        let model = Model::new(random_dataset(9000 + inst, 1 + inst as usize % 4), mixed_spec()).unwrap();
        let eff = model
            .constrain(&random_point(&model, inst, 1.0))
            .unwrap()
            .effects()
            .unwrap();
        let total: f64 = deviance_residuals(&model, &eff).unwrap().iter().map(|r| r.residual).sum();
        let ll = sender_log_lik_at(&model, &eff).unwrap() + receiver_log_lik_at(&model, &eff).unwrap();
        worst = worst.max((total + 2.0 * ll).abs() / (1.0 + ll.abs()));
    }
    let model = Model::new(random_dataset(1, 3), mixed_spec()).unwrap();
    let eff = model.constrain(&random_point(&model, 2, 1.0)).unwrap().effects().unwrap();
    let res = deviance_residuals(&model, &eff).unwrap();
    let mut buf = Vec::new();
    write_paired(&res, &res, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let diagonal = text.lines().skip(1).all(|l| {
        let f: Vec<&str> = l.split(',').collect();
        f[2] == f[3]
    });
    outcome(
        worst < 1e-8 && diagonal && text.lines().count() == res.len() + 1,
        format!("max relative |sum + 2 ll| {worst:.1e}; paired file diagonal: {diagonal}"),
    )
}

struct StdNormal(usize);

impl Target for StdNormal {
    fn dim(&self) -> usize {
        self.0
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> Option<f64> {
        for (g, v) in grad.iter_mut().zip(x) {
            *g = -v;
        }
        Some(-0.5 * x.iter().map(|v| v * v).sum::<f64>())
    }
}

/// Standard error of the mean from 50 batch means per chain.
fn batch_mcse(chains: &[Vec<f64>]) -> f64 {
    let mut means = Vec::new();
    for c in chains {
        let len = c.len() / 50;
        means.extend(c.chunks_exact(len).map(|b| b.iter().sum::<f64>() / len as f64));
    }
    sd(&means) / (means.len() as f64).sqrt()
}

fn sampler_sanity() -> Outcome {
    let cfg = chains(4, 1000, 1000, 42);
    let draws = run_chains(&StdNormal(5), &Init::default(), &cfg).unwrap();
    let mut worst_z: f64 = 0.0;
    for j in 0..5 {
        let ch = draws.chains_of(j);
        let n = (ch.len() * ch[0].len()) as f64;
        let mean = ch.iter().flatten().sum::<f64>() / n;
        let sq: Vec<Vec<f64>> = ch.iter().map(|c| c.iter().map(|x| x * x).collect()).collect();
        let var = sq.iter().flatten().sum::<f64>() / n;
        worst_z = worst_z
            .max(mean.abs() / batch_mcse(&ch))
            .max((var - 1.0).abs() / batch_mcse(&sq));
    }
    let again = run_chains(&StdNormal(5), &Init::default(), &cfg).unwrap();
    let identical = draws == again;
    let acc = draws.mean_accept_stat();
    outcome(
        worst_z < 3.0 && identical && (acc - 0.8).abs() < 0.1,
        format!("worst moment deviation {worst_z:.2} MCSE; same seed identical: {identical}; mean acceptance {acc:.3}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("Poisson equivalence", poisson_equivalence),
        ("gradient check", gradient_check),
        ("non-centered transform", noncentered),
        ("parameter recovery", recovery),
        ("homogeneity calibration", homogeneity_calibration),
        ("variance ordering", ordering_test),
        ("fractional closed forms", closed_forms),
        ("deviance residuals", residuals),
        ("sampler sanity", sampler_sanity),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {n} ({name}): {verdict} [{:.1}s] {}",
            start.elapsed().as_secs_f64(),
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
