//! Acceptance criteria 1 to 10, one PASS/FAIL line each.
//!
//! Run with `cargo test -p spider-em-harness --test acceptance`. Artifacts
//! (trace files, quantile tables) are left under the cargo target tmp dir.
//! The process fails if any criterion outside `KNOWN_RED` fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spider_em::algorithms::{
    run, run_em, run_online_em, run_sem_vr, run_spider_em, Algorithm, AlgorithmKind, Cadence, Flow, Hook,
    LoopLengths, NestedConfig, RandomSources, RunOptions, RunStatus, RunTrace, StepSchedule,
};
use spider_em::data::gen_multivariate_mixture;
use spider_em::gmm::{initial_statistic, GaussianMixture, InitStrategy};
use spider_em::ops::mean_field;
use spider_em::{MinibatchSampler, OracleCounts, SamplingMode, StatVector};
use spider_em_harness::checks::{gradient_identity, sampler_enumeration, spider_equivalence, SuiteReport};
use spider_em_harness::complexity::ComplexityConfig;
use spider_em_harness::experiment::{prepare, seed_offset_from_env, LoadedModel};
use spider_em_harness::trace_csv::without_wall_clock;
use spider_em_harness::{
    estimate_complexity, run_experiment, run_experiment_with, summarize_quantiles, ExperimentConfig, ExperimentOutput,
    QuantileTable, Settings,
};

/// Criteria that cannot be met as stated; the README explains each one.
/// They still print FAIL.
const KNOWN_RED: &[u32] = &[7, 9];

type Verdict = Result<(bool, String), String>;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load_config(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(configs_dir().join(name)).expect("shipped config parses")
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// 1 -------------------------------------------------------------------------

fn scaling() -> Verdict {
    let cfg = ComplexityConfig {
        seed_offset: seed_offset_from_env().map_err(err)?,
        ..Default::default()
    };
    let est = estimate_complexity(&cfg, 2.5e-5, &[1_000, 10_000, 100_000], 20).map_err(err)?;
    let spread = est.k_opt_spread();
    let slope = est.k_ce_slope();
    let cells: Vec<String> = est
        .records
        .iter()
        .map(|r| {
            format!(
                "n={} hit={:.2} K_Opt={} K_CE-n={}",
                r.n,
                r.hit_rate,
                r.median_k_opt.map_or("-".into(), |v| format!("{v}")),
                r.median_k_ce.map_or("-".into(), |v| format!("{v}"))
            )
        })
        .collect();
    let pass = spread.is_some_and(|s| s < 2.0) && slope.is_some_and(|s| (0.35..=0.65).contains(&s));
    Ok((
        pass,
        format!(
            "K_Opt max/min {:.3} (< 2), slope {:.3} (in [0.35, 0.65]); {}",
            spread.unwrap_or(f64::NAN),
            slope.unwrap_or(f64::NAN),
            cells.join("; ")
        ),
    ))
}

// 2, 4, 5 -------------------------------------------------------------------

fn suite_verdict(reports: Vec<SuiteReport>) -> Verdict {
    let pass = reports.iter().all(SuiteReport::passed);
    let detail = reports
        .iter()
        .map(|r| format!("{}: {:.3e} <= {:.0e}", r.detail, r.max_deviation, r.tolerance))
        .collect::<Vec<_>>()
        .join("; ");
    Ok((pass, detail))
}

// 3 -------------------------------------------------------------------------

/// The state after each update, indexed by `τ`.
fn states_by_tau(runner: impl FnOnce(RunOptions<'_>) -> spider_em::Result<RunTrace>) -> Result<Vec<StatVector>, String> {
    let mut states: Vec<StatVector> = Vec::new();
    let opts = RunOptions::quiet().with_hook(|v| {
        if v.tau as usize == states.len() {
            states.push(v.state.clone());
        } else {
            *states.last_mut().expect("started") = v.state.clone();
        }
        Flow::Continue
    });
    let trace = runner(opts).map_err(err)?;
    if trace.status != RunStatus::Completed {
        return Err(format!("run ended with {:?}", trace.status));
    }
    Ok(states)
}

fn full_batch_collapse() -> Verdict {
    let data = gen_multivariate_mixture(200, 3, 2, 3.0, 5)
        .and_then(|r| r.into_dataset())
        .map_err(err)?;
    let model = GaussianMixture::new(3, 2).map_err(err)?;
    let s0 = initial_statistic(&model, &data, InitStrategy::RandomResponsibilities, 6).map_err(err)?;
    let n = data.n();
    let full_batch = || MinibatchSampler::new(7, SamplingMode::WithoutReplacement, n).expect("valid");
    let one = StepSchedule::Constant(1.0);
    let nested = NestedConfig::new(5, 5, one.clone());

    // EM and Online EM start from s̄∘T(Ŝ_init); the nested-loop algorithms
    // start from Ŝ_init, so their update τ + 1 matches EM's update τ.
    let em = states_by_tau(|o| run_em(&model, &data, &s0, 20, o))?;
    let online = states_by_tau(|o| run_online_em(&model, &data, &s0, full_batch(), one.clone(), 20, o))?;
    let sem_vr = states_by_tau(|o| run_sem_vr(&model, &data, &s0, full_batch(), nested.clone(), o))?;
    let spider = states_by_tau(|o| run_spider_em(&model, &data, &s0, full_batch(), nested.clone(), o))?;
    let dev = |other: &[StatVector], shift: usize| -> f64 {
        (0..=20)
            .map(|tau| em[tau].max_abs_diff(&other[tau + shift]))
            .fold(0.0, f64::max)
    };
    let (d_online, d_sem, d_spider) = (dev(&online, 0), dev(&sem_vr, 1), dev(&spider, 1));
    let moved = em[0].max_abs_diff(&em[20]);
    let worst = d_online.max(d_sem).max(d_spider);
    Ok((
        worst <= 1e-12 && moved > 1e-6,
        format!(
            "max deviation from EM over 20 iterations: online-em {d_online:.2e}, sem-vr {d_sem:.2e}, \
             spider-em {d_spider:.2e} (<= 1e-12); EM moved {moved:.2e}"
        ),
    ))
}

// 6 -------------------------------------------------------------------------

fn em_monotone() -> Verdict {
    let cfg = load_config("variance-reduction.toml");
    let prep = prepare(&cfg, seed_offset_from_env().map_err(err)?).map_err(err)?;
    let LoadedModel::Gmm(model) = &prep.model else {
        return Err("expected the multivariate model".into());
    };
    let trace = run_em(
        model,
        &prep.data,
        &prep.s_init,
        100,
        RunOptions::default().with_cadence(Cadence::EveryIterate),
    )
    .map_err(err)?;
    let w: Vec<f64> = trace.checkpoints.iter().filter_map(|c| c.objective).collect();
    let worst_rise = w.windows(2).map(|p| p[1] - p[0]).fold(f64::NEG_INFINITY, f64::max);
    let h_sq = trace.last_h_sq().unwrap_or(f64::NAN);
    let fixed = mean_field(model, &prep.data, &trace.final_state).map_err(err)?.norm();
    Ok((
        trace.status == RunStatus::Completed && worst_rise <= 1e-10 && h_sq <= 1e-10 && fixed <= 1e-8,
        format!(
            "{} steps, largest W increase {worst_rise:.2e} (<= 1e-10), terminal ||h||^2 {h_sq:.2e} (<= 1e-10), \
             ||sbar(T(s*)) - s*|| {fixed:.2e} (<= 1e-8)",
            w.len() - 1
        ),
    ))
}

// 7, 9 ----------------------------------------------------------------------

const VR_KINDS: [AlgorithmKind; 4] = [
    AlgorithmKind::OnlineEm,
    AlgorithmKind::Iem,
    AlgorithmKind::Fiem,
    AlgorithmKind::SpiderEm,
];

/// Largest violation of `Σ_ℓ Ŝ[ℓ] = 1` and of `Σ_ℓ Ŝ[mean block ℓ] = ȳ`
/// over the iterates of one run phase, plus the mean-block deviation at
/// its last iterate.
#[derive(Clone, Copy, Default)]
struct Affine {
    mass: f64,
    mean: f64,
    last_mean: f64,
    iterates: u64,
}

/// Keyed by algorithm, seed and phase index.
type AffineLog = BTreeMap<(&'static str, u64, usize), Affine>;

struct VrRun {
    output: ExperimentOutput,
    affine: Arc<Mutex<AffineLog>>,
    secs: f64,
}

fn variance_reduction_run(config: &str, dir: &Path, jobs: usize) -> Result<VrRun, String> {
    let mut cfg = load_config(config);
    cfg.run.algorithms = VR_KINDS.iter().map(|k| k.as_str().to_string()).collect();
    let settings = Settings {
        seed_offset: seed_offset_from_env().map_err(err)?,
        jobs,
    };
    let prep = prepare(&cfg, settings.seed_offset).map_err(err)?;
    let LoadedModel::Gmm(model) = &prep.model else {
        return Err("expected the multivariate model".into());
    };
    let (g, p) = (model.components(), model.dim());
    let ybar: Arc<Vec<f64>> = Arc::new(prep.data.mean().to_vec());
    let affine = Arc::new(Mutex::new(AffineLog::new()));
    let factory = {
        let affine = Arc::clone(&affine);
        move |kind: AlgorithmKind, seed: u64| -> Option<Hook<'static>> {
            let affine = Arc::clone(&affine);
            let ybar = Arc::clone(&ybar);
            Some(Box::new(move |v| {
                let s = v.state;
                let mass = (s[..g].iter().sum::<f64>() - 1.0).abs();
                let mean = (0..p)
                    .map(|j| ((0..g).map(|l| s[g + l * p + j]).sum::<f64>() - ybar[j]).abs())
                    .fold(0.0, f64::max);
                let mut log = affine.lock().expect("not poisoned");
                let a = log.entry((kind.as_str(), seed, v.phase)).or_default();
                a.mass = a.mass.max(mass);
                a.mean = a.mean.max(mean);
                a.last_mean = mean;
                a.iterates += 1;
                Flow::Continue
            }))
        }
    };
    let start = Instant::now();
    let output = run_experiment_with(&cfg, dir, settings, Some(&factory)).map_err(err)?;
    Ok(VrRun {
        output,
        affine,
        secs: start.elapsed().as_secs_f64(),
    })
}

struct VrStats {
    iqr20: Vec<f64>,
    terminal_median: Vec<f64>,
}

fn vr_stats(run: &VrRun) -> Result<VrStats, String> {
    let mut iqr20 = Vec::new();
    let mut terminal_median = Vec::new();
    for kind in VR_KINDS {
        let paths: Vec<PathBuf> = run.output.traces_of(kind).into_iter().map(Path::to_path_buf).collect();
        let table: QuantileTable = summarize_quantiles(&paths, &[0.25, 0.5, 0.75]).map_err(err)?;
        let q = |qi| table.at(20, "h_sq_norm", qi).ok_or("no epoch-20 checkpoint");
        iqr20.push(q(2)? - q(0)?);
        terminal_median.push(table.terminal("h_sq_norm", 1).ok_or("no terminal checkpoint")?);
    }
    Ok(VrStats { iqr20, terminal_median })
}

fn judge_variance_reduction(full: &VrRun, smoke: &VrRun) -> Verdict {
    let (online, iem, fiem, spider) = (0, 1, 2, 3);
    let describe = |label: &str, run: &VrRun| -> Result<(bool, bool, String), String> {
        if let Some(r) = run.output.records.iter().find(|r| r.trace.diverged()) {
            return Err(format!("{label}: {} seed {} diverged", r.kind, r.seed));
        }
        let st = vr_stats(run)?;
        let a = st.iqr20[spider] < st.iqr20[online];
        let b = st.terminal_median[spider] <= st.terminal_median[iem]
            && st.terminal_median[spider] <= st.terminal_median[fiem];
        let text = format!(
            "{label} ({:.0} s): (a) {} IQR@20 spider-em {:.2e} vs online-em {:.2e}; (b) {} median terminal \
             ||h||^2 spider-em {:.2e}, iem {:.2e}, fiem {:.2e}",
            run.secs,
            if a { "ok" } else { "FAILED" },
            st.iqr20[spider],
            st.iqr20[online],
            if b { "ok" } else { "FAILED" },
            st.terminal_median[spider],
            st.terminal_median[iem],
            st.terminal_median[fiem],
        );
        Ok((a, b, text))
    };
    let (fa, fb, ftext) = describe("40 seeds x 150 epochs", full)?;
    let (sa, sb, stext) = describe("smoke 8 seeds x 40 epochs", smoke)?;
    let in_budget = full.secs <= 30.0 * 60.0 && smoke.secs <= 180.0;
    Ok((fa && fb && sa && sb && in_budget, format!("{ftext} | {stext}")))
}

fn judge_affine(runs: &[&VrRun]) -> Verdict {
    // Per algorithm and phase (0 is the warm start where there is one).
    let mut by_phase: BTreeMap<(&str, usize), Affine> = BTreeMap::new();
    for r in runs {
        for (&(kind, _, phase), a) in r.affine.lock().map_err(err)?.iter() {
            let e = by_phase.entry((kind, phase)).or_default();
            e.mass = e.mass.max(a.mass);
            e.mean = e.mean.max(a.mean);
            e.last_mean = e.last_mean.max(a.last_mean);
            e.iterates += a.iterates;
        }
    }
    let iterates: u64 = by_phase.values().map(|a| a.iterates).sum();
    let mass = by_phase.values().map(|a| a.mass).fold(0.0, f64::max);
    let mean = by_phase.values().map(|a| a.mean).fold(0.0, f64::max);
    let parts: Vec<String> = by_phase
        .iter()
        .map(|((kind, phase), a)| {
            format!(
                "{kind}/phase {phase}: masses {:.1e}, mean block max {:.1e}, at phase end {:.1e}",
                a.mass, a.mean, a.last_mean
            )
        })
        .collect();
    Ok((
        iterates > 0 && mass <= 1e-9 && mean <= 1e-9,
        format!(
            "{iterates} iterates: max |sum of masses - 1| {mass:.2e}, max mean-block deviation {mean:.2e} \
             (both <= 1e-9); {}",
            parts.join("; ")
        ),
    ))
}

// 8 -------------------------------------------------------------------------

/// Terminal counters from the cost table, initial pass included.
fn table_counts(kind: AlgorithmKind, n: u64, b: u64, k_max: u64, k_in: u64, k_out: u64, xis: &[u64]) -> OracleCounts {
    let (ce, m) = match kind {
        AlgorithmKind::Em => (n * k_max, k_max),
        AlgorithmKind::OnlineEm | AlgorithmKind::Iem => (b * k_max, k_max),
        AlgorithmKind::Fiem => (2 * b * k_max, k_max),
        AlgorithmKind::SemVr | AlgorithmKind::SpiderEm | AlgorithmKind::SpiderEmCv => {
            (k_out * (n + 2 * b * (k_in - 1)), k_out * k_in)
        }
        AlgorithmKind::SpiderEmPl => (
            xis.iter().map(|xi| n + 2 * b * xi).sum(),
            xis.iter().map(|xi| xi + 1).sum(),
        ),
    };
    OracleCounts {
        ce: n + ce,
        m_steps: 1 + m,
    }
}

fn oracle_accounting() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    for kind in AlgorithmKind::ALL {
        for _ in 0..5 {
            let n: usize = rng.random_range(30..200);
            let b: usize = rng.random_range(5..20);
            let k_max: u64 = rng.random_range(1..30);
            let k_in: u64 = rng.random_range(2..12);
            let k_out: u64 = rng.random_range(1..5);
            let gamma: f64 = rng.random_range(0.002..0.01);
            let mode = if rng.random_bool(0.5) {
                SamplingMode::WithReplacement
            } else {
                SamplingMode::WithoutReplacement
            };
            let seed: u64 = rng.random();
            let data = gen_multivariate_mixture(n, 2, 2, 2.0, seed)
                .and_then(|r| r.into_dataset())
                .map_err(err)?;
            let model = GaussianMixture::new(2, 2).map_err(err)?;
            let s0 = initial_statistic(&model, &data, InitStrategy::KMeans, seed).map_err(err)?;
            let schedule = StepSchedule::Constant(gamma);
            let nested = NestedConfig::new(k_out, k_in, schedule.clone());
            let alg = match kind {
                AlgorithmKind::Em => Algorithm::Em { k_max },
                AlgorithmKind::OnlineEm => Algorithm::OnlineEm { k_max, schedule },
                AlgorithmKind::Iem => Algorithm::Iem { k_max, schedule },
                AlgorithmKind::Fiem => Algorithm::Fiem { k_max, schedule },
                AlgorithmKind::SemVr => Algorithm::SemVr(nested),
                AlgorithmKind::SpiderEm => Algorithm::SpiderEm(nested),
                AlgorithmKind::SpiderEmCv => Algorithm::SpiderEmCv(nested),
                AlgorithmKind::SpiderEmPl => Algorithm::SpiderEmPl(nested),
            };
            let lengths_seed = seed ^ 1;
            let mut sources = RandomSources::new(MinibatchSampler::new(seed, mode, b).map_err(err)?)
                .with_second(MinibatchSampler::new(seed ^ 2, mode, b).map_err(err)?)
                .with_loop_lengths(LoopLengths::Uniform(ChaCha8Rng::seed_from_u64(lengths_seed)));
            let trace = run(&model, &data, &s0, &alg, &mut sources, RunOptions::quiet()).map_err(err)?;
            if trace.status != RunStatus::Completed {
                return Ok((false, format!("{kind} n={n} b={b} ended with {:?}", trace.status)));
            }
            let mut draws = ChaCha8Rng::seed_from_u64(lengths_seed);
            let xis: Vec<u64> = (0..k_out).map(|_| draws.random_range(1..k_in)).collect();
            let want = table_counts(kind, n as u64, b as u64, k_max, k_in, k_out, &xis);
            if trace.counts != want {
                return Ok((
                    false,
                    format!("{kind} n={n} b={b}: counters {:?}, table {:?}", trace.counts, want),
                ));
            }
            checked += 1;
        }
    }
    Ok((true, format!("{checked} runs over 8 algorithms match the cost table exactly")))
}

// 10 ------------------------------------------------------------------------

fn same_traces(a: &Path, b: &Path) -> Result<usize, String> {
    let mut files = 0;
    let mut names: Vec<_> = std::fs::read_dir(a)
        .map_err(err)?
        .filter_map(|e| e.ok().map(|e| e.file_name()))
        .filter(|n| n.to_string_lossy().ends_with(".csv"))
        .collect();
    names.sort();
    for name in names {
        let (x, y) = (a.join(&name), b.join(&name));
        if without_wall_clock(&x).map_err(err)? != without_wall_clock(&y).map_err(err)? {
            return Err(format!("{} differs", name.to_string_lossy()));
        }
        files += 1;
    }
    Ok(files)
}

fn determinism(root: &Path, smoke: &VrRun) -> Verdict {
    // Criteria 7 and 9: the smoke grid again, on two workers instead of one.
    let again = variance_reduction_run("variance-reduction-smoke.toml", &root.join("smoke-again"), 2)?;
    let vr_files = same_traces(&smoke.output.dir, &again.output.dir)?;

    // Criteria 3 and 6 exercise batch EM; rerun it through the CSV writer.
    let em_cfg = load_config("scalar-em.toml");
    let settings = Settings {
        seed_offset: seed_offset_from_env().map_err(err)?,
        jobs: 1,
    };
    run_experiment(&em_cfg, &root.join("em-a"), settings).map_err(err)?;
    run_experiment(&em_cfg, &root.join("em-b"), settings).map_err(err)?;
    let em_files = same_traces(&root.join("em-a"), &root.join("em-b"))?;

    // Criterion 1 on a reduced grid.
    let cfg = ComplexityConfig {
        seed_offset: settings.seed_offset,
        ..Default::default()
    };
    for tag in ["a", "b"] {
        let dir = root.join(format!("complexity-{tag}"));
        std::fs::create_dir_all(&dir).map_err(err)?;
        estimate_complexity(&cfg, 2.5e-5, &[1_000, 4_000], 4)
            .and_then(|e| e.write_csv(&dir.join("complexity.csv"), &dir.join("complexity_trials.csv")))
            .map_err(err)?;
    }
    let ce_files = same_traces(&root.join("complexity-a"), &root.join("complexity-b"))?;

    // Criteria 2, 4, 5 and 8 report numbers rather than files.
    let reports = || -> Result<Vec<SuiteReport>, String> {
        let mut r = sampler_enumeration().map_err(err)?;
        r.push(spider_equivalence().map_err(err)?);
        r.extend(gradient_identity().map_err(err)?);
        Ok(r)
    };
    let bitwise = reports()?
        .iter()
        .zip(reports()?.iter())
        .all(|(x, y)| x.max_deviation.to_bits() == y.max_deviation.to_bits());
    let accounting_twice = oracle_accounting()? == oracle_accounting()?;
    Ok((
        bitwise && accounting_twice,
        format!(
            "identical CSV bytes apart from wall_ms: {vr_files} variance-reduction files (1 vs 2 workers), \
             {em_files} EM files, {ce_files} complexity files; suite deviations bitwise equal: {bitwise}"
        ),
    ))
}

// ---------------------------------------------------------------------------

struct Report {
    selected: Vec<u32>,
    failed: Vec<u32>,
}

impl Report {
    /// `ACCEPTANCE_CRITERIA=8,9` restricts the run to those criteria.
    fn from_env() -> Report {
        let selected = match std::env::var("ACCEPTANCE_CRITERIA") {
            Ok(list) => list.split(',').filter_map(|v| v.trim().parse().ok()).collect(),
            Err(_) => (1..=10).collect(),
        };
        Report {
            selected,
            failed: Vec::new(),
        }
    }

    fn wants(&self, ids: &[u32]) -> bool {
        ids.iter().any(|id| self.selected.contains(id))
    }

    fn record(&mut self, id: u32, verdict: Verdict, secs: f64) {
        if !self.wants(&[id]) {
            return;
        }
        let (pass, detail) = verdict.unwrap_or_else(|e| (false, format!("error: {e}")));
        let note = if !pass && KNOWN_RED.contains(&id) {
            " [known red, see README]"
        } else {
            ""
        };
        println!(
            "criterion {id}: {} {detail} [{secs:.1} s]{note}",
            if pass { "PASS" } else { "FAIL" }
        );
        if !pass {
            self.failed.push(id);
        }
    }

    fn timed(&mut self, id: u32, f: impl FnOnce() -> Verdict) {
        if !self.wants(&[id]) {
            return;
        }
        let start = Instant::now();
        let v = f();
        self.record(id, v, start.elapsed().as_secs_f64());
    }
}

fn main() {
    // libtest flags such as --nocapture may be passed through; none apply.
    let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).expect("artifact directory");
    let mut report = Report::from_env();

    report.timed(1, scaling);
    report.timed(2, || spider_equivalence().map_err(err).and_then(|r| suite_verdict(vec![r])));
    report.timed(3, full_batch_collapse);
    report.timed(4, || sampler_enumeration().map_err(err).and_then(suite_verdict));
    report.timed(5, || gradient_identity().map_err(err).and_then(suite_verdict));
    report.timed(6, em_monotone);

    report.timed(8, oracle_accounting);

    if report.wants(&[7, 9, 10]) {
        let start = Instant::now();
        let smoke = variance_reduction_run("variance-reduction-smoke.toml", &root.join("smoke"), 1);
        let full = if report.wants(&[7, 9]) {
            variance_reduction_run("variance-reduction.toml", &root.join("full"), 1)
        } else {
            Err("not run".into())
        };
        let secs = start.elapsed().as_secs_f64();
        match (&smoke, &full) {
            (Ok(smoke), Ok(full)) => {
                report.record(7, judge_variance_reduction(full, smoke), secs);
                report.timed(9, || judge_affine(&[smoke, full]));
            }
            (Err(e), _) | (_, Err(e)) => {
                report.record(7, Err(e.clone()), secs);
                report.record(9, Err(e.clone()), 0.0);
            }
        }
        match &smoke {
            Ok(smoke) => report.timed(10, || determinism(&root, smoke)),
            Err(e) => report.record(10, Err(e.clone()), 0.0),
        }
    }

    let unexpected: Vec<u32> = report
        .failed
        .iter()
        .copied()
        .filter(|id| !KNOWN_RED.contains(id))
        .collect();
    println!(
        "acceptance: {} of {} criteria pass; failing: {:?}; unexpected failures: {:?}; artifacts in {}",
        report.selected.len() - report.failed.len(),
        report.selected.len(),
        report.failed,
        unexpected,
        root.display()
    );
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
