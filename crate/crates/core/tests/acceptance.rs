//! Acceptance report: one PASS/FAIL line per criterion, with the measured
//! values indented below it. Always exits 0; the report is the result.

mod support;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use softchain::analytics::{self, PairedTrial, TransitionMatrix};
use softchain::bench::{self, Scenario};
use softchain::calib::{self, NonCcConfig};
use softchain::env::action::ActionBounds;
use softchain::env::episode::{self, PrimitivePolicy};
use softchain::env::reward::guide_term;
use softchain::env::sampling::sample_boxes;
use softchain::env::{EpisodeConfig, GraspEnv, Outcome, ACT_DIM, OBS_DIM};
use softchain::model::RobotModel;

struct Report {
    passed: usize,
    total: usize,
}

impl Report {
    /// Runs one criterion; `body` returns whether it holds plus detail lines.
    fn criterion(&mut self, name: &str, limit: Duration, body: impl FnOnce() -> (bool, Vec<String>)) {
        let t = Instant::now();
        let (ok, details) = body();
        let elapsed = t.elapsed();
        let in_time = elapsed < limit;
        let pass = ok && in_time;
        self.total += 1;
        self.passed += pass as usize;
        println!(
            "{} {name} ({:.1} s, limit {} s{})",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", over time" }
        );
        for d in details {
            println!("    {d}");
        }
    }
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "VIOLATED"
    }
}

const TABLE_UNPERTURBED: [[u64; 3]; 3] = [[922, 6, 3], [13, 27, 10], [6, 1, 12]];
const TABLE_PERTURBED: [[u64; 3]; 3] = [[815, 2, 5], [20, 44, 48], [15, 4, 47]];

fn stuart_maxwell() -> (bool, Vec<String>) {
    let u = analytics::stuart_maxwell(&TransitionMatrix { counts: TABLE_UNPERTURBED });
    let p = analytics::stuart_maxwell(&TransitionMatrix { counts: TABLE_PERTURBED });
    let ok_u = (u.p - 1.4e-2).abs() <= 0.3 * 1.4e-2;
    let ok_p = (p.p.log10() - 1.4e-12f64.log10()).abs() <= 1.0;
    (
        ok_u && ok_p,
        vec![
            format!("unperturbed chi2 {:.4} p {:.4e} (target 1.4e-2 +-30%) {}", u.chi2, u.p, mark(ok_u)),
            format!("perturbed chi2 {:.4} p {:.4e} (target 1.4e-12 within 10x) {}", p.chi2, p.p, mark(ok_p)),
        ],
    )
}

fn marginals() -> (bool, Vec<String>) {
    let u = TransitionMatrix { counts: TABLE_UNPERTURBED };
    let p = TransitionMatrix { counts: TABLE_PERTURBED };
    let ok_u = u.row_marginals() == [931, 50, 19] && u.col_marginals() == [941, 34, 25];
    let ok_p = p.row_marginals() == [822, 112, 66] && p.col_marginals() == [850, 50, 100];
    (
        ok_u && ok_p,
        vec![
            format!("unperturbed rows {:?} cols {:?} {}", u.row_marginals(), u.col_marginals(), mark(ok_u)),
            format!("perturbed rows {:?} cols {:?} {}", p.row_marginals(), p.col_marginals(), mark(ok_p)),
        ],
    )
}

fn kinematic_sweep(model: &RobotModel) -> (bool, Vec<String>) {
    let ns = [2, 4, 8, 16, 32, 64];
    let rows = match calib::sweep_cc_vs_uj(&ns, 11, model.left.joints[0].length) {
        Ok(r) => r,
        Err(e) => return (false, vec![format!("sweep failed: {e}")]),
    };
    let summary = calib::summarize_sweep(&rows);
    let mut d = Vec::new();
    for s in &summary {
        d.push(format!(
            "N={:<2} pos mean {:.3e} median {:.3e} | ori mean {:.3e} median {:.3e} | nonconverged {}",
            s.disk_count, s.position.mean, s.position.median, s.orientation.mean, s.orientation.median, s.nonconverged
        ));
    }
    let decreasing = summary.windows(2).all(|w| {
        w[1].position.mean < w[0].position.mean && w[1].orientation.mean < w[0].orientation.mean
    });
    d.push(format!("means strictly decrease in N: {}", mark(decreasing)));
    let mut skewed = true;
    for s in summary.iter().filter(|s| s.disk_count <= 8) {
        for (metric, st) in [("pos", &s.position), ("ori", &s.orientation)] {
            if st.mean < st.median {
                skewed = false;
                d.push(format!("mean >= median: N={} {metric} mean {:.4e} < median {:.4e} VIOLATED", s.disk_count, st.mean, st.median));
            }
        }
    }
    if skewed {
        d.push("mean >= median for N <= 8: ok".into());
    }
    let origin: Vec<_> = rows.iter().filter(|r| r.q == [0.0, 0.0]).collect();
    let worst_pos = origin.iter().map(|r| r.position_error).fold(0.0, f64::max);
    let worst_ori = origin.iter().map(|r| r.orientation_error).fold(0.0, f64::max);
    // the chain length is a float sum of 2(N-1) half lengths
    let zero = origin.len() == ns.len() && worst_pos <= 1e-12 && worst_ori == 0.0;
    d.push(format!("error at q=(0,0): pos {worst_pos:.1e} m ori {worst_ori:.1e} rad (round-off 1e-12) {}", mark(zero)));
    (decreasing && skewed && zero, d)
}

fn noncc(model: &RobotModel) -> (bool, Vec<String>) {
    let cfg = NonCcConfig::from_model(model);
    let report = match calib::nonconstant_curvature_experiment(model, &cfg) {
        Ok(r) => r,
        Err(e) => return (false, vec![format!("experiment failed: {e}")]),
    };
    let mut d = vec![format!(
        "{} steps ({:.0} s), reference N={}, box {} kg",
        report.steps,
        report.steps as f64 / EpisodeConfig::from_model(model).policy_rate,
        cfg.reference,
        cfg.box_spec.mass
    )];
    let mut means = Vec::new();
    for &n in &cfg.disk_counts {
        let m = report.model(&format!("N={n}")).expect("coarse model present");
        let s = m.position_stats().expect("samples");
        d.push(format!("N={n:<2} mean pos err {:.4e} m", s.mean));
        means.push(s.mean);
    }
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    d.push(format!("mean position error decreases with N: {}", mark(decreasing)));
    let cc = report.model("CC").expect("CC estimate present");
    let (pos, ori) = match (cc.contact_position_stats(), cc.contact_orientation_stats()) {
        (Some(p), Some(o)) => (p.mean, o.mean),
        _ => return (false, d.into_iter().chain(["no contact-phase samples".to_string()]).collect()),
    };
    let l = report.joint_length;
    let bound = calib::position_implied_orientation(pos, l);
    let below = ori < bound;
    d.push(format!(
        "CC contact phase: pos {pos:.4e} m, ori {ori:.4e} rad, implied bound 2*pos/L = {bound:.4e} rad {}",
        mark(below)
    ));
    d.push(format!(
        "CC contact phase against the tighter pos/L = {:.4e} rad: {}",
        pos / l,
        if ori < pos / l { "below" } else { "above" }
    ));
    (decreasing && below, d)
}

fn rtf(model: &RobotModel) -> (bool, Vec<String>) {
    let dts = bench::DEFAULT_DTS;
    let ns = bench::DEFAULT_DISK_COUNTS;
    let pts = bench::run_bench(model, &dts, &ns, bench::DEFAULT_STEPS, Scenario::Contact);
    let mut d = Vec::new();
    let mut ok = true;
    for p in &pts {
        if let Some(e) = &p.error {
            ok = false;
            d.push(format!("dt {} N {} failed: {e}", p.dt, p.disk_count));
        }
    }
    let at = |i: usize, j: usize| pts[i * dts.len() + j].rtf;
    for (i, n) in ns.iter().enumerate() {
        let row: Vec<String> = (0..dts.len()).map(|j| format!("{:8.1}", at(i, j))).collect();
        d.insert(i, format!("N={n:<2} rtf at dt {:?} ms: {}", dts.map(|x| x * 1e3), row.join(" ")));
    }
    let in_dt = (0..ns.len()).all(|i| (1..dts.len()).all(|j| at(i, j) > at(i, j - 1)));
    let in_n = (0..dts.len()).all(|j| (1..ns.len()).all(|i| at(i, j) < at(i - 1, j)));
    d.push(format!("increasing in dt: {}", mark(in_dt)));
    d.push(format!("decreasing in N: {}", mark(in_n)));
    (ok && in_dt && in_n, d)
}

fn env_contracts(model: &RobotModel) -> (bool, Vec<String>) {
    let mut d = Vec::new();
    let mut env = GraspEnv::new(model.clone(), EpisodeConfig::from_model(model)).unwrap();
    let obs = env.reset(1).unwrap();
    let step = env.step(&[0.0; ACT_DIM]).unwrap();
    let dims = OBS_DIM == 93
        && ACT_DIM == 13
        && obs.raw.len() == 93
        && step.obs.normalized.len() == 93
        && env.step(&[0.0; 12]).is_err();
    d.push(format!("obs dim {} act dim {}: {}", obs.raw.len(), ACT_DIM, mark(dims)));

    let bounds = ActionBounds::from_model(model);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst_sum = 0.0f64;
    let mut guide_ok = true;
    for _ in 0..10_000 {
        let a: [f64; 13] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        let s: [f64; 13] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        let c = bounds.to_command(&bounds.unnormalize(&a));
        for arm in c.pressures {
            for pair in arm.chunks_exact(2) {
                worst_sum = worst_sum.max((pair[0] + pair[1] - 300.0).abs());
            }
        }
        let g = guide_term(&a, &s);
        guide_ok &= g > 0.0 && g <= 0.1 && g <= guide_term(&s, &s) && guide_term(&s, &s) == 0.1;
    }
    let pairs = worst_sum < 1e-9;
    d.push(format!("pair sums 300 kPa over 10000 actions, worst gap {worst_sum:.1e}: {}", mark(pairs)));
    d.push(format!("guide term in (0, 0.1], peak 0.1 at the primitive: {}", mark(guide_ok)));

    let tip_limit = 80f64.to_radians();
    let (prev, last) = support::lift_scenario();
    let lift = last.info.outcome == Some(Outcome::Lift)
        && last.terminated
        && last.info.lift >= 0.5
        && prev.is_some_and(|p| p.info.lift < 0.5);
    d.push(format!("lift {:.3} m ends step {} as Lift: {}", last.info.lift, last.info.step, mark(lift)));
    let (prev, last) = support::tip_scenario();
    let tip = last.info.outcome == Some(Outcome::Tip)
        && last.terminated
        && last.info.tilt > tip_limit
        && prev.is_some_and(|p| p.info.tilt <= tip_limit);
    d.push(format!("tilt {:.1} deg ends step {} as Tip: {}", last.info.tilt.to_degrees(), last.info.step, mark(tip)));
    let (last, mut env, home) = support::slip_scenario();
    let slip = last.info.step == 1200
        && last.truncated
        && last.info.outcome == Some(Outcome::Slip)
        && env.step(&home).is_err();
    d.push(format!("idle arms truncate at step {} as Slip: {}", last.info.step, mark(slip)));
    (dims && pairs && guide_ok && lift && tip && slip, d)
}

fn dynamics() -> (bool, Vec<String>) {
    let b = support::ballistic_drop();
    let rel = (b.drop - b.analytic).abs() / b.analytic;
    let ballistic = !b.touched && rel < 0.01;
    let e = support::passive_energy();
    let energy = e.worst_rise <= 1e-6 && e.last < e.initial;
    let m = support::mass_matrices(500);
    let spd = m.checked == 1000 && m.min_eigenvalue > 0.0 && m.cholesky_failures == 0 && m.max_asymmetry < 1e-12;
    let fd = support::tendon_fd_worst();
    let tendon = fd <= 1e-5;
    let replay = support::replay_identical();
    (
        ballistic && energy && spd && tendon && replay,
        vec![
            format!("ballistic drop {:.6} m vs {:.6} m, rel {rel:.1e} (1%): {}", b.drop, b.analytic, mark(ballistic)),
            format!(
                "passive energy worst rise {:.1e} J/step (1e-6), {:.4} -> {:.4} J: {}",
                e.worst_rise, e.initial, e.last, mark(energy)
            ),
            format!("mass matrix SPD at {} configs, min eigenvalue {:.3e}: {}", m.checked, m.min_eigenvalue, mark(spd)),
            format!("tendon torque vs central differences, worst rel {fd:.1e} (1e-5): {}", mark(tendon)),
            format!("replay bit-identical: {}", mark(replay)),
        ],
    )
}

fn end_to_end(model: &RobotModel) -> (bool, Vec<String>) {
    let (_, last) = support::lift_scenario();
    let lift = last.info.outcome == Some(Outcome::Lift);
    let mut d = vec![format!("nominal box, seed 0: {:?} at step {}: {}", last.info.outcome, last.info.step, mark(lift))];
    let cfg = EpisodeConfig::from_model(model);
    let boxes = sample_boxes(100, 0, model.contact.mu_box_floor);
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let results = match episode::evaluate(model, &cfg, &boxes, 0, jobs, |_| PrimitivePolicy) {
        Ok(r) => r,
        Err(e) => return (false, vec![format!("evaluation failed: {e}")]),
    };
    let outcomes: Vec<Outcome> = results.iter().map(|r| r.as_ref().map_or(Outcome::Aborted, |r| r.outcome)).collect();
    let c = analytics::outcome_counts(&outcomes);
    let classified = outcomes.len() == 100 && c[3] == 0;
    d.push(format!(
        "100 boxes, seed 0: lift {} slip {} tip {} unclassified {}: {}",
        c[0], c[1], c[2], c[3], mark(classified)
    ));
    (lift && classified, d)
}

fn corrective() -> (bool, Vec<String>) {
    let zero = [0.0; 13];
    let mut unit = [0.0; 13];
    unit[3] = 1.0;
    let u = analytics::corrective_action(&zero, &unit);
    let full = analytics::corrective_action(&zero, &[1.0; 13]);
    let norm = format!("{u:.2}") == "27.74" && (full - 100.0).abs() < 1e-12;

    // two slip->tip trials and one lift->lift trial, onset 5, window 100
    let onset = 5;
    let series = |f: &dyn Fn(usize) -> f64| {
        (0..onset + analytics::DEFAULT_WINDOW + 3).map(|i| if i < onset { 99.0 } else { f(i - onset) }).collect()
    };
    let trials = vec![
        PairedTrial { unperturbed: Outcome::Slip, perturbed: Outcome::Tip, series: series(&|k| k as f64) },
        PairedTrial { unperturbed: Outcome::Slip, perturbed: Outcome::Tip, series: series(&|_| 2.0) },
        PairedTrial { unperturbed: Outcome::Lift, perturbed: Outcome::Lift, series: series(&|_| 0.5) },
    ];
    let (rows, skipped) = analytics::corrective_table(&trials, onset, analytics::DEFAULT_WINDOW);
    let mut csv = Vec::new();
    analytics::write_corrective_csv(&mut csv, &rows).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    // pooled slip->tip window: 0..99 and 100 twos, mean 25.75, median 2, max 99
    let expected = ["transition,trials,mean_pct,median_pct,max_pct", "success->success,1,0.5,0.5,0.5", "slip->tip,2,25.75,2,99"];
    let table = skipped == 0 && lines == expected;
    let mut d = vec![
        format!("unit vector {u:.4}% (27.74), all-ones {full:.4}% (100): {}", mark(norm)),
        format!("synthetic {}-step window table matches expected rows: {}", analytics::DEFAULT_WINDOW, mark(table)),
    ];
    d.extend(lines.iter().map(|l| format!("  {l}")));
    (norm && table, d)
}

fn main() {
    let model = RobotModel::shipped();
    let mut r = Report { passed: 0, total: 0 };
    let s = Duration::from_secs;
    println!("acceptance report");
    r.criterion("Stuart-Maxwell p-values for the two transition tables", s(1), stuart_maxwell);
    r.criterion("transition table marginals", s(1), marginals);
    r.criterion("CC-vs-UJ kinematic sweep trends", s(600), || kinematic_sweep(&model));
    r.criterion("non-constant-curvature replay", s(900), || noncc(&model));
    r.criterion("real-time factor trends", s(600), || rtf(&model));
    r.criterion("environment contracts", s(60), || env_contracts(&model));
    r.criterion("dynamics property suite", s(300), dynamics);
    r.criterion("end-to-end primitive smoke", s(1200), || end_to_end(&model));
    r.criterion("corrective-action metric", s(1), corrective);
    println!("acceptance: {}/{} criteria pass", r.passed, r.total);
}
