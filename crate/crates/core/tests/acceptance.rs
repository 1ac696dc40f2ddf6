//! End-to-end acceptance criteria at full ensemble sizes. Prints one
//! PASS/FAIL line per criterion, then fails if any criterion failed.

mod common;

use std::io::Write;
use std::time::Instant;

use bohmian::scenarios::{
    BornRule, BoxRelease, Check, Context, Dataset, DoubleSlit, EffectiveCollapse, FreeGaussian, ScenarioSpec, StationaryPreset,
    StationaryRealState,
};
use common::*;

const N: usize = 10_000;
const SEED: u64 = 20_240_611;
const CASES: u64 = 100;
const TIME_LIMIT_SECONDS: f64 = 300.0;

struct Run {
    label: String,
    ds: Dataset,
    checks: Vec<Check>,
    seconds: f64,
}

impl Run {
    fn new(label: impl Into<String>, spec: ScenarioSpec, n: usize) -> Self {
        let label = label.into();
        let ctx = Context::new(n, SEED);
        let start = Instant::now();
        let (ds, checks) = spec.run(&ctx).unwrap_or_else(|e| panic!("{label}: {e}"));
        let seconds = start.elapsed().as_secs_f64();
        eprintln!("  ran {label} in {seconds:.1} s");
        Self { label, ds, checks, seconds }
    }

    fn check(&self, name: &str) -> &Check {
        self.checks.iter().find(|c| c.name == name).unwrap_or_else(|| panic!("{}: no check {name}", self.label))
    }

    fn matching(&self, pattern: &str) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.name.contains(pattern)).collect()
    }
}

struct Verdicts(Vec<(usize, bool, String)>);

impl Verdicts {
    fn record(&mut self, id: usize, pass: bool, detail: String) {
        // written past the test harness capture so the verdicts always show
        let line = format!("{} criterion {id}: {detail}\n", if pass { "PASS" } else { "FAIL" });
        std::io::stdout().write_all(line.as_bytes()).unwrap();
        self.0.push((id, pass, detail));
    }
}

fn free_gaussian_oracle_error(run: &Run, sigma0: f64) -> f64 {
    let ens = run.ds.ensemble("trajectories").unwrap();
    let mut worst = 0.0f64;
    for tr in ens.completed() {
        let x0 = tr.samples[0].coords[0];
        for c in &tr.samples {
            let spread = (1.0 + (c.time / (2.0 * sigma0 * sigma0)).powi(2)).sqrt();
            worst = worst.max((c.coords[0] - x0 * spread).abs());
        }
    }
    worst
}

#[test]
fn acceptance() {
    let mut v = Verdicts(Vec::new());

    let free = Run::new("free_gaussian", ScenarioSpec::FreeGaussian(FreeGaussian::default()), N);
    let boxed = Run::new("box_release", ScenarioSpec::BoxRelease(BoxRelease::default()), N);
    let slit = Run::new("double_slit", ScenarioSpec::DoubleSlit(DoubleSlit::default()), N);

    // 1: equivariance at every stored frame, within the time budget.
    let mut detail = Vec::new();
    let mut ok = true;
    for run in [&free, &boxed, &slit] {
        let tv = run.matching("equivariance_tv");
        let failing = tv.iter().filter(|c| !c.pass).count();
        ok &= !tv.is_empty() && failing == 0 && run.seconds <= TIME_LIMIT_SECONDS;
        detail.push(format!("{} {}/{} frames in {:.0} s", run.label, tv.len() - failing, tv.len(), run.seconds));
    }
    v.record(1, ok, format!("equivariance: {}", detail.join(", ")));

    // 2: Born frequencies.
    let mut detail = Vec::new();
    let mut ok = true;
    let mut born_runs = Vec::new();
    for w in [0.36, 0.5, 1.0] {
        let run = Run::new(format!("born_rule w={w}"), ScenarioSpec::BornRule(BornRule { weight1: w, ..BornRule::default() }), N);
        let dev = run.check("born_frequency_deviation");
        ok &= dev.pass;
        let mut line = format!("w={w} |f-w|={:.4} (3σ {:.4})", dev.statistic, dev.bound);
        if w == 1.0 {
            let ex = run.check("born_rule_exceptions");
            ok &= ex.statistic == 0.0;
            line.push_str(&format!(" exceptions {}", ex.statistic));
        }
        detail.push(line);
        born_runs.push(run);
    }
    v.record(2, ok, format!("Born rule: {}", detail.join("; ")));

    // 3: box release.
    let speed = boxed.check("late_speed_within_2pct_fraction");
    let signs = boxed.check("side_sign_mismatches");
    let split = boxed.check("right_fraction_deviation");
    let ok = speed.statistic >= 0.99 && signs.statistic == 0.0 && split.statistic <= 0.015;
    v.record(
        3,
        ok,
        format!(
            "box release: speed fraction {:.4}, sign mismatches {}, |right-0.5| {:.4}",
            speed.statistic, signs.statistic, split.statistic
        ),
    );

    // 4: double slit.
    let counter = slit.check("slit_side_counterexamples");
    let ambiguous = slit.check("axis_ambiguous_fraction");
    let which_way = slit.check("which_way_visibility");
    let ok = counter.statistic == 0.0 && ambiguous.statistic <= 0.005 && which_way.statistic < 0.05;
    v.record(
        4,
        ok,
        format!(
            "double slit: counterexamples {}, ambiguous {:.4}, which-way visibility {:.4}",
            counter.statistic, ambiguous.statistic, which_way.statistic
        ),
    );

    // 5: effective collapse.
    let collapse = Run::new("effective_collapse", ScenarioSpec::EffectiveCollapse(EffectiveCollapse::default()), N);
    let fid = collapse.check("min_fidelity");
    let dev = collapse.check("max_deviation");
    let ok = fid.statistic >= 0.999 && dev.statistic <= 1e-6;
    v.record(5, ok, format!("effective collapse: fidelity {:.6}, deviation {:.2e}", fid.statistic, dev.statistic));

    // 6: stationary states.
    let mut detail = Vec::new();
    let mut ok = true;
    let mut stationary_runs = Vec::new();
    for preset in [StationaryPreset::Box, StationaryPreset::Harmonic] {
        let spec = ScenarioSpec::StationaryRealState(StationaryRealState { preset, ..StationaryRealState::default() });
        let run = Run::new(format!("stationary {preset:?}"), spec, N);
        let vel = run.check("max_scaled_grid_velocity");
        let drift = run.check("max_trajectory_drift");
        ok &= vel.statistic <= 1e-9 && drift.statistic <= 1e-8;
        detail.push(format!("{preset:?} velocity {:.1e} drift {:.1e}", vel.statistic, drift.statistic));
        stationary_runs.push(run);
    }
    v.record(6, ok, format!("stationarity: {}", detail.join(", ")));

    // 7: analytic oracles.
    let sigma0 = FreeGaussian::default().sigma0;
    let gauss = free_gaussian_oracle_error(&free, sigma0);
    let phase = plane_wave_phase_error();
    let ok = gauss <= 1e-3 * sigma0 && phase <= 1e-8;
    v.record(7, ok, format!("oracles: free Gaussian error {gauss:.2e}, plane-wave phase error {phase:.2e} per step"));

    // 8: solver hygiene.
    let [spectral, implicit] = long_run_norm_drift();
    let (coarse, fine) = continuity_residuals();
    let ratio = coarse / fine;
    let reversal = time_reversal_error();
    let ok = spectral <= 1e-6 && implicit <= 1e-6 && (3.0..=5.0).contains(&ratio) && reversal <= 1e-6;
    v.record(
        8,
        ok,
        format!("hygiene: norm drift {spectral:.1e}/{implicit:.1e}, continuity ratio {ratio:.2}, reversal {reversal:.1e}"),
    );

    // 9: structural invariants over randomized cases.
    let scaling = (0..CASES).filter(|&s| scaling_case(s) > SCALING_TOLERANCE).count();
    let spinor = (0..CASES).filter(|&s| spinor_case(s) > SPINOR_TOLERANCE).count();
    let permutation = (0..CASES).filter(|&s| permutation_case(s) > PERMUTATION_TOLERANCE).count();
    let crossing = (0..CASES).filter(|&s| crossing_case(s) > 0).count();
    let ok = scaling + spinor + permutation + crossing == 0;
    v.record(
        9,
        ok,
        format!(
            "invariants over {CASES} cases each: violations scaling {scaling}, spinor {spinor}, permutation {permutation}, crossing {crossing}"
        ),
    );

    // 10: node aborts across every ensemble above.
    let all: Vec<&Run> = [&free, &boxed, &slit, &collapse].into_iter().chain(&born_runs).chain(&stationary_runs).collect();
    let mut worst = 0.0f64;
    let mut count = 0;
    for run in &all {
        for c in run.matching("aborted_node_fraction") {
            worst = worst.max(c.statistic);
            count += 1;
        }
    }
    v.record(10, count > 0 && worst <= 1e-3, format!("aborted_node fraction: worst {worst:.1e} over {count} ensembles"));

    let failed: Vec<usize> = v.0.iter().filter(|(_, pass, _)| !pass).map(|(id, _, _)| *id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
