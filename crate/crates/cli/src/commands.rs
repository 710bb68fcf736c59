//! One function per subcommand. Each resolves its configuration, runs the
//! library, writes its artifacts into the output directory, and finishes
//! with a manifest describing the run.

use std::path::{Path, PathBuf};

use offrec_core::crr::{self, CrrConfig, CrrTrainer};
use offrec_core::data::{self, Catalog, PipelineConfig, Transition};
use offrec_core::eval;
use offrec_core::models::{CriticConfig, PolicyConfig, PolicyNetwork};
use offrec_core::pretrain::{pretrain, PretrainConfig};
use offrec_core::synth;
use offrec_core::{Error, Result};

use crate::args::*;
use crate::config::{build_section, RunConfig};
use crate::dataset;
use crate::manifest::Manifest;

pub const POLICY_FILE: &str = "policy.ckpt";
pub const PRETRAIN_CURVE_FILE: &str = "pretrain_curve.csv";
pub const BEST_POLICY_FILE: &str = "policy_best.ckpt";
pub const STATE_FILE: &str = "trainer_state.ckpt";
pub const CRR_CURVE_FILE: &str = "crr_curve.csv";
pub const REPORT_FILE: &str = "report.json";
pub const AUDIT_FILE: &str = "audit.csv";
pub const LOG_FILE: &str = "log.csv";
pub const MDP_FILE: &str = "mdp.json";
pub const BEHAVIOR_FILE: &str = "behavior.json";

/// Resolves an output directory against `OFFREC_OUTPUT_ROOT` (relative paths
/// only) and creates it.
fn out_dir(raw: &Path) -> Result<PathBuf> {
    let resolved = match std::env::var_os("OFFREC_OUTPUT_ROOT") {
        Some(root) if raw.is_relative() => PathBuf::from(root).join(raw),
        _ => raw.to_path_buf(),
    };
    std::fs::create_dir_all(&resolved)?;
    Ok(resolved)
}

/// The window length a dataset was built with, read off its states.
fn dataset_window(ds: &dataset::LoadedDataset) -> Result<usize> {
    [&ds.train, &ds.validation, &ds.test]
        .iter()
        .find_map(|split| split.first())
        .map(|t| t.state.window())
        .ok_or_else(|| Error::data("dataset has no transitions in any split"))
}

fn write_json_pretty<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::data(format!("{}: encode: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn fmt_validation(hr: Option<f64>, ndcg: Option<f64>) -> String {
    match (hr, ndcg) {
        (Some(h), Some(n)) => format!("  val HR {h:.4} NDCG {n:.4}"),
        _ => String::new(),
    }
}

pub fn ingest(args: IngestArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let mut section = cfg.data.clone();
    if let Some(schema) = args.schema {
        section.schema = schema.into();
    }
    if let Some(window) = args.window {
        section.window = window;
    }

    // The manifest records the resolved scheme, not the absent field.
    section.reward = Some(section.resolved_reward()?);
    let records = data::parse_log(&args.input, section.schema)?;
    let n_raw = records.len();
    let pipeline = PipelineConfig {
        window: section.window,
        reward: section.reward.clone().expect("just resolved"),
        split: section.split,
        emit_cold_start: section.emit_cold_start,
    };
    let ds = data::build_dataset(records, &pipeline)?;

    let out = out_dir(&args.out)?;
    let files = dataset::save(&out, &ds)?;
    println!(
        "ingest: {} raw records, {} items; transitions train/validation/test = {}/{}/{}",
        n_raw,
        ds.catalog.len(),
        ds.train.len(),
        ds.validation.len(),
        ds.test.len()
    );

    let mut m = Manifest::new("ingest");
    m.input(&args.input)?;
    m.config_of(&serde_json::json!({ "data": section }))?;
    for f in files {
        m.output(f);
    }
    m.write(&out)
}

pub fn pretrain_policy(args: PretrainArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let ds = dataset::load(&args.data)?;
    dataset::check_ids(&ds)?;
    let items = ds.catalog.len();
    let window = dataset_window(&ds)?;

    let policy_cfg: PolicyConfig = build_section(
        "policy",
        cfg.policy.as_ref(),
        &["items", "window"],
        &[("items", items.into()), ("window", window.into())],
    )?;
    let mut set: Vec<(&str, serde_json::Value)> = Vec::new();
    if let Some(epochs) = args.epochs {
        set.push(("epochs", epochs.into()));
    }
    if let Some(seed) = args.seed {
        set.push(("seed", seed.into()));
    }
    let pre_cfg: PretrainConfig = build_section("pretrain", cfg.pretrain.as_ref(), &[], &set)?;

    let val = eval::eval_samples_from_transitions(&ds.validation);
    let mut policy = PolicyNetwork::<f32>::new(policy_cfg.clone(), pre_cfg.seed)?;
    let outcome = pretrain(&mut policy, &ds.train, &val, &pre_cfg)?;
    for row in &outcome.curve {
        println!(
            "epoch {:>4}  loss {:.6}{}",
            row.epoch,
            row.train_loss,
            fmt_validation(row.val_hr, row.val_ndcg)
        );
    }
    println!(
        "pretrain: kept epoch {} with HR@10 {:.4}, NDCG@10 {:.4}",
        outcome.best_epoch, outcome.best_hr, outcome.best_ndcg
    );

    let out = out_dir(&args.out)?;
    policy.save(&out.join(POLICY_FILE))?;
    offrec_core::pretrain::write_curve_csv(&out.join(PRETRAIN_CURVE_FILE), &outcome.curve)?;

    let mut m = Manifest::new("pretrain");
    for f in [dataset::CATALOG_FILE, dataset::TRAIN_FILE, dataset::VALIDATION_FILE] {
        m.input(&args.data.join(f))?;
    }
    m.config_of(&serde_json::json!({ "policy": policy_cfg, "pretrain": pre_cfg }))?;
    m.output(POLICY_FILE);
    m.output(PRETRAIN_CURVE_FILE);
    m.write(&out)
}

pub fn train_crr(args: TrainCrrArgs) -> Result<()> {
    let ds = dataset::load(&args.data)?;
    dataset::check_ids(&ds)?;
    let val = eval::eval_samples_from_transitions(&ds.validation);
    let out = out_dir(&args.out)?;

    let mut m = Manifest::new("train-crr");
    for f in [dataset::CATALOG_FILE, dataset::TRAIN_FILE, dataset::VALIDATION_FILE] {
        m.input(&args.data.join(f))?;
    }

    let mut trainer = if let Some(state) = &args.resume {
        m.input(state)?;
        println!("resuming from {}", state.display());
        CrrTrainer::<f32>::resume(state)?
    } else {
        let cfg = RunConfig::load(args.config.as_deref())?;
        let items = ds.catalog.len();
        let window = dataset_window(&ds)?;

        let mut set: Vec<(&str, serde_json::Value)> = Vec::new();
        if let Some(iterations) = args.iterations {
            set.push(("iterations", iterations.into()));
        }
        if let Some(seed) = args.seed {
            set.push(("seed", seed.into()));
        }
        let crr_cfg: CrrConfig = build_section("crr", cfg.crr.as_ref(), &[], &set)?;

        let policy = if let Some(ckpt) = &args.init {
            m.input(ckpt)?;
            let policy = PolicyNetwork::<f32>::load(ckpt)?;
            let pc = policy.config();
            if pc.items != items || pc.window != window {
                return Err(Error::config(format!(
                    "checkpoint expects {} items and window {}, dataset has {} items and window {}",
                    pc.items, pc.window, items, window
                )));
            }
            policy
        } else if args.no_init {
            let policy_cfg: PolicyConfig = build_section(
                "policy",
                cfg.policy.as_ref(),
                &["items", "window"],
                &[("items", items.into()), ("window", window.into())],
            )?;
            PolicyNetwork::new(policy_cfg, crr_cfg.seed)?
        } else {
            return Err(Error::config(
                "pass --init <checkpoint>, --no-init, or --resume <state>",
            ));
        };

        let critic_cfg: CriticConfig = build_section(
            "critic",
            cfg.critic.as_ref(),
            &["items", "window", "dim"],
            &[
                ("items", items.into()),
                ("window", window.into()),
                ("dim", policy.config().dim.into()),
            ],
        )?;
        CrrTrainer::new(policy, critic_cfg, crr_cfg)?
    };

    m.config_of(&serde_json::json!({
        "crr": trainer.config(),
        "policy": trainer.policy().config(),
        "critic": trainer.critic().config(),
    }))?;

    let state_path = out.join(STATE_FILE);
    let total = trainer.config().iterations;
    while let Some(row) = trainer.train_until_next_row(&ds.train, &val)? {
        let actor = row
            .actor_loss
            .map_or_else(|| "(skipped)".to_string(), |l| format!("{l:.6}"));
        println!(
            "iter {:>7}/{}  actor {}  critic {:.6}  mean_w {:.4}{}",
            row.iteration,
            total,
            actor,
            row.critic_loss,
            row.mean_filter_weight,
            fmt_validation(row.val_hr, row.val_ndcg)
        );
        trainer.save_state(&state_path)?;
        if args.stop_after.is_some_and(|stop| trainer.iteration() >= stop) {
            break;
        }
    }
    trainer.save_state(&state_path)?;
    crr::write_crr_curve_csv(&out.join(CRR_CURVE_FILE), trainer.rows())?;
    trainer.best_policy().save(&out.join(BEST_POLICY_FILE))?;

    if trainer.iteration() < total {
        println!(
            "train-crr: paused at iteration {} of {}; continue with --resume {}",
            trainer.iteration(),
            total,
            state_path.display()
        );
    } else if let Some((iteration, hr, ndcg)) = trainer.best_info() {
        println!(
            "train-crr: finished {total} iterations; kept iteration {iteration} with HR {hr:.4}, NDCG {ndcg:.4}"
        );
    } else {
        println!("train-crr: finished {total} iterations without validation; kept the final policy");
    }

    m.output(BEST_POLICY_FILE);
    m.output(STATE_FILE);
    m.output(CRR_CURVE_FILE);
    m.write(&out)
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let policy = PolicyNetwork::<f32>::load(&args.policy)?;
    let ds = dataset::load(&args.data)?;
    dataset::check_ids(&ds)?;
    if policy.config().items != ds.catalog.len() {
        return Err(Error::config(format!(
            "policy scores {} items but the catalog has {}",
            policy.config().items,
            ds.catalog.len()
        )));
    }

    let split: &[Transition] = match args.split {
        SplitArg::Train => &ds.train,
        SplitArg::Validation => &ds.validation,
        SplitArg::Test => &ds.test,
    };
    let samples = eval::eval_samples_from_transitions(split);
    let seed = args.seed.unwrap_or(cfg.eval.seed);
    let k = args.k.unwrap_or(cfg.eval.k);
    let outcome = eval::evaluate_policy(&policy, &samples, args.pool.into(), seed, k)?;

    let out = out_dir(&args.out)?;
    write_json_pretty(&out.join(REPORT_FILE), &outcome.report)?;
    eval::write_audit_csv(&out.join(AUDIT_FILE), &outcome.audit)?;

    println!(
        "evaluate: {} positives from the {} split at k={}",
        outcome.report.n_pos,
        args.split.name(),
        k
    );
    if let Some(metrics) = &outcome.report.all {
        println!("  all  pool: HR {:.4}  NDCG {:.4}", metrics.hr, metrics.ndcg);
    }
    if let Some(metrics) = &outcome.report.rand {
        println!(
            "  rand pool: HR {:.4}  NDCG {:.4}  ({} shrunk pools)",
            metrics.hr, metrics.ndcg, outcome.report.shrunk_rand_pools
        );
    }

    let mut m = Manifest::new("evaluate");
    m.input(&args.policy)?;
    m.input(&args.data.join(dataset::CATALOG_FILE))?;
    m.input(&args.data.join(match args.split {
        SplitArg::Train => dataset::TRAIN_FILE,
        SplitArg::Validation => dataset::VALIDATION_FILE,
        SplitArg::Test => dataset::TEST_FILE,
    }))?;
    m.config_of(&serde_json::json!({
        "split": args.split.name(),
        "pool": args.pool.name(),
        "seed": seed,
        "k": k,
    }))?;
    m.output(REPORT_FILE);
    m.output(AUDIT_FILE);
    m.write(&out)
}

pub fn synth(args: SynthArgs) -> Result<()> {
    match args.kind {
        SynthKind::Sessions(a) => synth_sessions(a),
        SynthKind::Tabular(a) => synth_tabular(a),
    }
}

fn synth_sessions(args: SynthSessionsArgs) -> Result<()> {
    let cfg = synth::SessionGenConfig {
        items: args.items,
        actors: args.actors,
        min_len: args.min_len,
        max_len: args.max_len,
        noise: args.noise,
        positive_prob: args.positive_prob,
        schema: args.schema.into(),
        seed: args.seed,
        ..synth::SessionGenConfig::default()
    };
    let records = synth::generate_synthetic_sessions(&cfg)?;
    let out = out_dir(&args.out)?;
    synth::write_log_csv(&out.join(LOG_FILE), &records, cfg.schema)?;
    println!(
        "synth sessions: {} records for {} actors over {} items",
        records.len(),
        cfg.actors,
        cfg.items
    );

    let mut m = Manifest::new("synth-sessions");
    m.config_of(&serde_json::json!({ "sessions": cfg }))?;
    m.output(LOG_FILE);
    m.write(&out)
}

fn synth_tabular(args: SynthTabularArgs) -> Result<()> {
    let (mdp, greedy) = match args.mdp {
        MdpArg::Chain => synth::chain_mdp(args.gamma),
        MdpArg::Random => {
            let mdp = synth::random_mdp(
                args.states,
                args.actions,
                args.gamma,
                &[args.seed, 0x5241_4e44_4d44_5047],
            );
            let (_, greedy) = synth::value_iteration(&mdp, 1e-12);
            (mdp, greedy)
        }
    };
    let behavior = synth::epsilon_greedy(&greedy, mdp.actions, args.epsilon);
    let logged =
        synth::generate_logged_data(&mdp, &behavior, args.episodes, args.horizon, &[args.seed])?;

    let out = out_dir(&args.out)?;
    mdp.save(&out.join(MDP_FILE))?;
    write_json_pretty(&out.join(BEHAVIOR_FILE), &behavior)?;
    Catalog::identity(mdp.item_count()).save(&out.join(dataset::CATALOG_FILE))?;
    data::write_transitions(&out.join(dataset::TRAIN_FILE), &logged)?;
    data::write_transitions(&out.join(dataset::VALIDATION_FILE), &[])?;
    data::write_transitions(&out.join(dataset::TEST_FILE), &[])?;
    println!(
        "synth tabular: {} transitions from {} episodes of horizon {}",
        logged.len(),
        args.episodes,
        args.horizon
    );

    let mut m = Manifest::new("synth-tabular");
    m.config_of(&serde_json::json!({
        "states": mdp.states,
        "actions": mdp.actions,
        "gamma": mdp.gamma,
        "epsilon": args.epsilon,
        "episodes": args.episodes,
        "horizon": args.horizon,
        "seed": args.seed,
    }))?;
    for f in [MDP_FILE, BEHAVIOR_FILE, dataset::CATALOG_FILE, dataset::TRAIN_FILE] {
        m.output(f);
    }
    m.write(&out)
}

pub fn verify(args: VerifyArgs) -> Result<bool> {
    use offrec_core::verify as suites;

    let mut reports = Vec::new();
    if matches!(args.suite, SuiteArg::All | SuiteArg::Gradients) {
        reports.extend(suites::gradient_suite()?);
    }
    if matches!(args.suite, SuiteArg::All | SuiteArg::Metrics) {
        reports.push(suites::metric_suite(args.instances, args.seed)?);
    }
    if matches!(args.suite, SuiteArg::All | SuiteArg::Tabular) {
        reports.push(suites::tabular_suite(args.mdps, args.seed)?);
    }

    for r in &reports {
        println!("{} {:<26} {}", if r.ok { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let passed = reports.iter().filter(|r| r.ok).count();
    println!("{passed} of {} checks passed", reports.len());
    Ok(passed == reports.len())
}
