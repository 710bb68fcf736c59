//! Release gate: one test per shipping criterion. Every test prints a single
//! PASS or FAIL line with its measured runtime and asserts both the criterion
//! and its time budget. A shared lock keeps the criteria sequential so the
//! timings stay honest on one core.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use offrec_autograd::seed;
use offrec_core::crr::{tabular_policy_of, CrrConfig, CrrTrainer, FilterKind, FilterSpec};
use offrec_core::data::{build_transitions, Catalog, Feedback, InteractionRecord, RewardSpec, StateSequence};
use offrec_core::models::{CriticConfig, NetworkParams, PolicyConfig, PolicyNetwork};
use offrec_core::synth::{
    bellman_residual, chain_mdp, epsilon_greedy, exact_advantage, exact_policy_eval,
    generate_logged_data, mdp_return, random_mdp, TabularPolicy,
};
use offrec_core::verify;
use rand::Rng;

static GATE: Mutex<()> = Mutex::new(());

fn gate() -> std::sync::MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

fn announce(n: u32, ok: bool, elapsed: Duration, detail: &str) {
    println!(
        "criterion {n} {} ({:.1}s)  {detail}",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
}

fn within(n: u32, elapsed: Duration, budget_s: u64) {
    assert!(
        elapsed < Duration::from_secs(budget_s),
        "criterion {n} exceeded its {budget_s}s budget: {elapsed:?}"
    );
}

#[test]
fn criterion_1_gradient_suite() {
    let _g = gate();
    let t = Instant::now();
    let reports = verify::gradient_suite().expect("gradient suite");
    let ok = reports.iter().all(|r| r.ok);
    let elapsed = t.elapsed();
    announce(
        1,
        ok,
        elapsed,
        &format!("{} finite-difference checks, max rel err <= 1e-4 at eps 1e-5", reports.len()),
    );
    for r in reports.iter().filter(|r| !r.ok) {
        eprintln!("  {}: {}", r.name, r.detail);
    }
    assert!(ok, "gradient checks failed");
    within(1, elapsed, 120);
}

#[test]
fn criterion_2_metric_oracle() {
    let _g = gate();
    let t = Instant::now();
    let report = verify::metric_suite(1000, 0xACC2).expect("metric suite");
    let elapsed = t.elapsed();
    announce(2, report.ok, elapsed, &report.detail);
    assert!(report.ok, "{}", report.detail);
    within(2, elapsed, 60);
}

#[test]
fn criterion_3_state_rule_properties() {
    let _g = gate();
    let t = Instant::now();
    let cases = 100_000usize;
    let threshold = 3.5;
    let spec = RewardSpec::RatingThreshold { threshold };
    let mut violations = 0usize;
    let mut first = String::new();
    let mut bad = |case: usize, what: &str, firsts: &mut String| {
        violations += 1;
        if firsts.is_empty() {
            *firsts = format!("case {case}: {what}");
        }
    };
    for case in 0..cases {
        let mut rng = seed::rng(&[0xACC3, case as u64]);
        let window = rng.gen_range(1..=8usize);
        let steps: Vec<(u32, f64)> = (0..rng.gen_range(1..=12usize))
            .map(|_| (rng.gen_range(1..=30u32), f64::from(rng.gen_range(1..=10u8)) * 0.5))
            .collect();
        let records: Vec<InteractionRecord> = steps
            .iter()
            .enumerate()
            .map(|(i, &(item, rating))| InteractionRecord {
                actor: "a".into(),
                item: item.to_string(),
                feedback: Feedback::Rating(rating),
                timestamp: i as i64,
            })
            .collect();
        let catalog = Catalog::build(&records);
        let transitions =
            build_transitions(&records, &catalog, window, &spec, true).expect("build");
        if transitions.len() != steps.len() {
            bad(case, "transition count", &mut first);
            continue;
        }
        let mut replay = StateSequence::empty(window);
        for t in &transitions {
            if t.state.ids().len() != window || t.next_state.ids().len() != window {
                bad(case, "window length changed", &mut first);
            }
            if t.state != replay {
                bad(case, "replay mismatch", &mut first);
            }
            if t.reward > 0.0 {
                let mut expect: Vec<u32> = t.state.ids()[1..].to_vec();
                expect.push(t.action);
                if t.next_state.ids() != expect.as_slice() {
                    bad(case, "positive reward did not shift-append", &mut first);
                }
            } else if t.next_state != t.state {
                bad(case, "zero reward moved the state", &mut first);
            }
            replay = t.next_state.clone();
        }
    }
    let elapsed = t.elapsed();
    let ok = violations == 0;
    announce(
        3,
        ok,
        elapsed,
        &format!("{cases} randomized streams: window length, shift-append, zero-reward fixpoint, replay"),
    );
    assert!(ok, "{violations} violations; first: {first}");
    within(3, elapsed, 60);
}

#[test]
fn criterion_4_tabular_bellman_oracle() {
    let _g = gate();
    let t = Instant::now();
    const TOL: f64 = 1e-10;
    let mut max_residual = 0.0f64;
    let mut max_identity = 0.0f64;
    let mut rng = seed::rng(&[0xACC4]);
    for i in 0..100u64 {
        let gamma = rng.gen_range(0.1..0.95);
        let mdp = random_mdp(5, 4, gamma, &[0xACC4, i]);
        let probs: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                let raw: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
                let z: f64 = raw.iter().sum();
                raw.iter().map(|p| p / z).collect()
            })
            .collect();
        let policy = TabularPolicy { probs };
        let v = exact_policy_eval(&mdp, &policy).expect("policy eval");
        max_residual = max_residual.max(bellman_residual(&mdp, &policy, &v));
        let adv = exact_advantage(&mdp, &policy).expect("advantage");
        for s in 0..5 {
            let mean: f64 = (0..4).map(|a| policy.probs[s][a] * adv[s][a]).sum();
            max_identity = max_identity.max(mean.abs());
        }
    }
    let elapsed = t.elapsed();
    let ok = max_residual <= TOL && max_identity <= TOL;
    announce(
        4,
        ok,
        elapsed,
        &format!(
            "100 random 5-state/4-action MDPs: max Bellman residual {max_residual:.3e}, max weighted advantage {max_identity:.3e}"
        ),
    );
    assert!(ok, "residual {max_residual:.3e}, identity {max_identity:.3e}, tol {TOL:.0e}");
    within(4, elapsed, 30);
}

fn chain_crr_config(iterations: u64, filter: FilterSpec, seed: u64) -> CrrConfig {
    CrrConfig {
        iterations,
        gamma: 0.9,
        filter,
        advantage_samples: 4,
        target_samples: 4,
        tau: 0.01,
        batch_size: 128,
        val_every: iterations.max(1),
        learning_rate: 1e-3,
        cosine: true,
        seed,
    }
}

fn exponential_filter() -> FilterSpec {
    FilterSpec { kind: FilterKind::Exponential, beta: 1.0, clip: 20.0 }
}

fn constant_filter() -> FilterSpec {
    FilterSpec { kind: FilterKind::Constant, beta: 1.0, clip: 20.0 }
}

fn chain_policy_config(items: usize) -> PolicyConfig {
    PolicyConfig { items, window: 1, dim: 8, blocks: 1, heads: 2, dropout: 0.0 }
}

fn chain_critic_config(items: usize) -> CriticConfig {
    CriticConfig { items, window: 1, dim: 8, hidden: 16, lstm_layers: 1, head_hidden: 16 }
}

#[test]
fn criterion_5_filtered_regression_beats_cloning() {
    let _g = gate();
    let t = Instant::now();
    let (mdp, greedy) = chain_mdp(0.9);
    let behavior = epsilon_greedy(&greedy, mdp.actions, 0.3);
    let data = generate_logged_data(&mdp, &behavior, 1000, 20, &[0xACC5]).expect("logged data");
    assert_eq!(data.len(), 20_000);

    let items = mdp.item_count();
    let mut wins = 0;
    let mut detail = Vec::new();
    for s in 0..10u64 {
        let init = PolicyNetwork::<f32>::new(chain_policy_config(items), seed::mix(&[0xACC5, 1, s]))
            .expect("policy init");
        let run = |filter: FilterSpec| {
            let cfg = chain_crr_config(2000, filter, seed::mix(&[0xACC5, 2, s]));
            let mut trainer = CrrTrainer::new(init.clone(), chain_critic_config(items), cfg)
                .expect("trainer");
            trainer.run(&data, &[]).expect("train");
            let pi = tabular_policy_of(trainer.policy(), &mdp).expect("projection");
            mdp_return(&mdp, &pi).expect("return")
        };
        let crr = run(exponential_filter());
        let bc = run(constant_filter());
        if crr >= bc {
            wins += 1;
        }
        detail.push(format!("{crr:.2}/{bc:.2}"));
    }
    let elapsed = t.elapsed();
    let ok = wins >= 8;
    announce(
        5,
        ok,
        elapsed,
        &format!("filtered regression vs cloning on the chain MDP: {wins}/10 seeds (returns {})", detail.join(" ")),
    );
    assert!(ok, "only {wins}/10 seeds favored the filtered run: {}", detail.join(" "));
    within(5, elapsed, 600);
}

#[test]
fn criterion_6_huge_beta_matches_constant_filter() {
    let _g = gate();
    let t = Instant::now();
    let (mdp, greedy) = chain_mdp(0.9);
    let behavior = epsilon_greedy(&greedy, mdp.actions, 0.3);
    let data = generate_logged_data(&mdp, &behavior, 50, 10, &[0xACC6]).expect("logged data");
    let items = mdp.item_count();
    let init =
        PolicyNetwork::<f32>::new(chain_policy_config(items), 0xACC6).expect("policy init");

    // One iteration leaves the actor gradient of that step on the policy
    // parameters; everything except the filter is seeded identically.
    let grads_after_one_step = |filter: FilterSpec| {
        let cfg = CrrConfig { iterations: 1, ..chain_crr_config(1, filter, 0xACC6) };
        let mut trainer =
            CrrTrainer::new(init.clone(), chain_critic_config(items), cfg).expect("trainer");
        trainer.run(&data, &[]).expect("one step");
        let net = trainer.policy().clone();
        net.params()
            .iter()
            .map(|(_, p)| (p.name.clone(), p.grad.data().to_vec()))
            .collect::<Vec<(String, Vec<f32>)>>()
    };
    let huge_beta = grads_after_one_step(FilterSpec {
        kind: FilterKind::Exponential,
        beta: 1e9,
        clip: 20.0,
    });
    let cloning = grads_after_one_step(constant_filter());

    let mut max_dev = 0.0f64;
    let mut nonzero = false;
    for ((name_a, a), (name_b, b)) in huge_beta.iter().zip(&cloning) {
        assert_eq!(name_a, name_b);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            max_dev = max_dev.max((f64::from(*x) - f64::from(*y)).abs());
            nonzero |= *x != 0.0;
        }
    }
    let elapsed = t.elapsed();
    let ok = max_dev <= 1e-5 && nonzero;
    announce(
        6,
        ok,
        elapsed,
        &format!("actor gradient at beta 1e9 vs constant filter: max elementwise deviation {max_dev:.3e}"),
    );
    assert!(nonzero, "actor gradient was identically zero; the comparison is vacuous");
    assert!(max_dev <= 1e-5, "max deviation {max_dev:.3e} above 1e-5");
    within(6, elapsed, 60);
}

fn offrec(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_offrec"))
        .args(args)
        .output()
        .expect("spawn offrec");
    assert!(
        out.status.success(),
        "offrec {:?} failed with {:?}\nstdout: {}\nstderr: {}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    String::from_utf8(out.stdout).expect("utf8 stdout")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf8 path")
}

/// Largest value in the named column of a training-curve CSV.
fn best_in_column(path: &Path, column: &str) -> f64 {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().expect("csv header").split(',').collect();
    let idx = header.iter().position(|h| *h == column).unwrap_or_else(|| {
        panic!("{}: no column {column} in {header:?}", path.display())
    });
    lines
        .filter_map(|l| l.split(',').nth(idx))
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<f64>().expect("numeric csv cell"))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn criterion_7_scaled_pipeline() {
    let _g = gate();
    let t = Instant::now();
    let dir = tempfile::tempdir().expect("tempdir");
    let root = dir.path();
    let config = root.join("run.toml");
    std::fs::write(
        &config,
        "\
[data]
window = 30

[policy]
dim = 16
blocks = 1
heads = 2
dropout = 0.2

[pretrain]
epochs = 8
batch_size = 128
learning_rate = 1e-3
seed = 1

[critic]
hidden = 32
lstm_layers = 2
head_hidden = 32

[crr]
iterations = 5000
",
    )
    .expect("write config");

    let raw = root.join("raw");
    let data = root.join("data");
    let stage1 = root.join("stage1");
    let stage2 = root.join("stage2");
    offrec(&[
        "synth", "sessions", "--out", s(&raw), "--items", "200", "--actors", "2000",
        "--min-len", "20", "--max-len", "32", "--noise", "0.2", "--seed", "70",
    ]);
    offrec(&[
        "ingest", "--input", s(&raw.join("log.csv")), "--out", s(&data),
        "--config", s(&config), "--schema", "sessions",
    ]);
    offrec(&["pretrain", "--data", s(&data), "--out", s(&stage1), "--config", s(&config)]);
    let stage1_best = best_in_column(&stage1.join("pretrain_curve.csv"), "val_hr");

    offrec(&[
        "train-crr", "--data", s(&data), "--out", s(&stage2),
        "--init", s(&stage1.join("policy.ckpt")), "--config", s(&config), "--seed", "2",
    ]);
    let stage2_best = best_in_column(&stage2.join("crr_curve.csv"), "val_hr");

    let mut ablation_losses = 0;
    let mut ablation_bests = Vec::new();
    for seed in ["101", "102", "103", "104", "105"] {
        let out = root.join(format!("ablation_{seed}"));
        offrec(&[
            "train-crr", "--data", s(&data), "--out", s(&out), "--no-init",
            "--config", s(&config), "--seed", seed,
        ]);
        let best = best_in_column(&out.join("crr_curve.csv"), "val_hr");
        if best < stage2_best {
            ablation_losses += 1;
        }
        ablation_bests.push(format!("{best:.3}"));
    }

    let ceiling = 0.81;
    let stage1_ok = stage1_best >= 0.9 * ceiling;
    let stage2_ok = stage2_best >= 0.95 * stage1_best;
    let ablation_ok = ablation_losses >= 4;
    let elapsed = t.elapsed();
    let ok = stage1_ok && stage2_ok && ablation_ok;
    announce(
        7,
        ok,
        elapsed,
        &format!(
            "stage1 HR {stage1_best:.3} (floor {:.3}), stage2 HR {stage2_best:.3} (floor {:.3}), ablation below in {ablation_losses}/5 seeds ({})",
            0.9 * ceiling,
            0.95 * stage1_best,
            ablation_bests.join(" ")
        ),
    );
    assert!(stage1_ok, "stage1 best {stage1_best} below 0.9 x {ceiling}");
    assert!(stage2_ok, "stage2 best {stage2_best} below 0.95 x {stage1_best}");
    assert!(ablation_ok, "ablation only lost {ablation_losses}/5 seeds: {}", ablation_bests.join(" "));
    within(7, elapsed, 1800);
}

#[test]
fn criterion_8_byte_determinism() {
    let _g = gate();
    let t = Instant::now();
    let dir = tempfile::tempdir().expect("tempdir");
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "\
[data]
window = 4

[policy]
dim = 8
blocks = 1
heads = 2
dropout = 0.1

[pretrain]
epochs = 2
batch_size = 32
seed = 1

[critic]
hidden = 8
lstm_layers = 1
head_hidden = 8

[crr]
iterations = 40
val_every = 20
batch_size = 16
learning_rate = 1e-3
seed = 2
",
    )
    .expect("write config");

    let run_pipeline = |tag: &str| -> PathBuf {
        let root = dir.path().join(tag);
        let raw = root.join("raw");
        let data = root.join("data");
        let stage1 = root.join("stage1");
        let stage2 = root.join("stage2");
        let eval = root.join("eval");
        offrec(&[
            "synth", "sessions", "--threads", "1", "--out", s(&raw), "--items", "25",
            "--actors", "60", "--min-len", "8", "--max-len", "12", "--seed", "8",
        ]);
        offrec(&[
            "ingest", "--threads", "1", "--input", s(&raw.join("log.csv")), "--out", s(&data),
            "--config", s(&config), "--schema", "sessions",
        ]);
        offrec(&[
            "pretrain", "--threads", "1", "--data", s(&data), "--out", s(&stage1),
            "--config", s(&config),
        ]);
        offrec(&[
            "train-crr", "--threads", "1", "--data", s(&data), "--out", s(&stage2),
            "--init", s(&stage1.join("policy.ckpt")), "--config", s(&config),
        ]);
        offrec(&[
            "evaluate", "--threads", "1", "--policy", s(&stage2.join("policy_best.ckpt")),
            "--data", s(&data), "--out", s(&eval), "--split", "test", "--seed", "3",
        ]);
        root
    };

    let a = run_pipeline("first");
    let b = run_pipeline("second");
    let files = [
        "raw/log.csv",
        "raw/manifest.json",
        "data/catalog.csv",
        "data/train.txt",
        "data/validation.txt",
        "data/test.txt",
        "data/manifest.json",
        "stage1/policy.ckpt",
        "stage1/pretrain_curve.csv",
        "stage1/manifest.json",
        "stage2/policy_best.ckpt",
        "stage2/trainer_state.ckpt",
        "stage2/crr_curve.csv",
        "stage2/manifest.json",
        "eval/report.json",
        "eval/audit.csv",
        "eval/manifest.json",
    ];
    let mut differing = Vec::new();
    for f in files {
        let left = std::fs::read(a.join(f)).unwrap_or_else(|e| panic!("{f}: {e}"));
        let right = std::fs::read(b.join(f)).unwrap_or_else(|e| panic!("{f}: {e}"));
        if left != right {
            differing.push(f);
        }
    }
    let elapsed = t.elapsed();
    let ok = differing.is_empty();
    announce(
        8,
        ok,
        elapsed,
        &format!("full pipeline rerun with --threads 1: {} artifacts byte-identical", files.len()),
    );
    assert!(ok, "artifacts differ between reruns: {differing:?}");
    within(8, elapsed, 600);
}
