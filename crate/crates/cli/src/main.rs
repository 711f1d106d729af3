//! `gridsafe`: train, evaluate, and inspect the safe topology-control stack.

mod config;
mod remote;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use gridsafe_core::actions::ActionSet;
use gridsafe_core::advisor::{Advisor, MockAdvisor, RuleBasedAdvisor};
use gridsafe_core::case::{load_case, GridCase};
use gridsafe_core::chronics::{load_chronics, Chronics};
use gridsafe_core::env::Env;
use gridsafe_core::feature::frame_dim;
use gridsafe_core::fixtures;
use gridsafe_core::learner::Learner;
use gridsafe_core::metrics::{curves_to_svg, emit_report, rollout};
use gridsafe_core::prompt::{build_prompt, parse_proposal};
use gridsafe_core::refine::proposal_to_action;
use gridsafe_core::replay::{BufferEntry, ReplayBuffer};
use gridsafe_core::trainer::{Trainer, TrainerEvent};
use gridsafe_core::CoreError;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "gridsafe", version, about = "Safe-RL topology control for power grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the training loop with optional advisor-based buffer refinement
    Train(TrainArgs),
    /// Evaluate a checkpoint with greedy rollouts
    Eval(EvalArgs),
    /// Print prompt/proposal/accept-reject traces for buffer candidates
    RefineDemo(RefineDemoArgs),
    /// Solve one case snapshot and print the limit report
    PfCheck(PfCheckArgs),
    /// Write the bundled case and chronics fixtures
    GenFixtures(GenFixturesArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// overrides both the trainer and learner seeds
    #[arg(long)]
    seed: Option<u64>,
    /// advisor mode override: off | rule | mock | remote
    #[arg(long)]
    advisor: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    total_steps: Option<usize>,
    /// actor safety weight override
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Args)]
struct RefineDemoArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// candidates to walk through
    #[arg(long, default_value_t = 3)]
    count: usize,
}

#[derive(Args)]
struct PfCheckArgs {
    #[arg(long)]
    case: Option<PathBuf>,
    #[arg(long)]
    chronics: Option<PathBuf>,
    /// chronics row to solve
    #[arg(long, default_value_t = 0)]
    row: usize,
}

#[derive(Args)]
struct GenFixturesArgs {
    #[arg(long, default_value = "fixtures")]
    output_dir: PathBuf,
}

/// Exit codes: 1 user error, 2 numeric failure, 3 io failure.
enum CliError {
    User(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::User(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::User(m) | CliError::Numeric(m) | CliError::Io(m) => m,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> CliError {
        match &e {
            CoreError::Parse { .. }
            | CoreError::Invariant { .. }
            | CoreError::ChronicsRange(_)
            | CoreError::Usage(_) => CliError::User(e.to_string()),
            CoreError::Divergence { .. }
            | CoreError::SingularJacobian { .. }
            | CoreError::InjectionOffSlackIsland { .. }
            | CoreError::UnusableEpisode(_)
            | CoreError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            CoreError::Io { .. } | CoreError::Serde(_) => CliError::Io(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::RefineDemo(args) => cmd_refine_demo(args),
        Command::PfCheck(args) => cmd_pf_check(args),
        Command::GenFixtures(args) => cmd_gen_fixtures(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn resolve_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).map_err(CliError::User)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = common.seed {
        cfg.trainer.seed = seed;
        cfg.learner.seed = seed;
    }
    if let Some(mode) = &common.advisor {
        cfg.advisor.mode = mode.clone();
    }
    cfg.validate().map_err(CliError::User)?;
    Ok(cfg)
}

fn load_case_file(path: &Path) -> Result<GridCase, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    load_case(&text).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

fn load_chronics_file(path: &Path) -> Result<Chronics, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    load_chronics(&text).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

/// Bundled desk fixture rows: two full default-length episodes of headroom.
const BUNDLED_ROWS: usize = 576;

fn build_env(cfg: &RunConfig) -> Result<Env, CliError> {
    let case = match &cfg.case {
        Some(p) => load_case_file(p)?,
        None => load_case(fixtures::FIVE_BUS_CASE).expect("bundled case is valid"),
    };
    let chronics = match &cfg.chronics {
        Some(p) => load_chronics_file(p)?,
        None => {
            if cfg.case.is_some() {
                return Err(CliError::User(
                    "a custom case needs a matching chronics file (set `chronics`)".into(),
                ));
            }
            fixtures::five_bus_stressed_chronics(BUNDLED_ROWS)
        }
    };
    Env::new(Arc::new(case), Arc::new(chronics), cfg.env.clone()).map_err(CliError::from)
}

fn make_advisor(cfg: &RunConfig) -> Result<Option<Box<dyn Advisor>>, CliError> {
    match cfg.advisor.mode.as_str() {
        "off" => Ok(None),
        "rule" => Ok(Some(Box::new(RuleBasedAdvisor::default()))),
        "mock" => {
            let dir = cfg.advisor.mock_dir.as_ref().expect("validated");
            let mock = MockAdvisor::from_dir(dir)?;
            Ok(Some(Box::new(mock)))
        }
        "remote" => {
            let endpoint = cfg.advisor.endpoint.clone().expect("validated");
            let advisor =
                remote::RemoteAdvisor::new(endpoint, cfg.advisor.model.clone(), cfg.advisor.timeout_secs)?;
            Ok(Some(Box::new(advisor)))
        }
        _ => unreachable!("validated"),
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let mut cfg = resolve_config(&args.common)?;
    if let Some(steps) = args.total_steps {
        cfg.trainer.total_steps = steps;
    }
    if let Some(beta) = args.beta {
        cfg.learner.beta = beta;
    }
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(&cfg.output_dir, e))?;
    cfg.echo(&cfg.output_dir).map_err(CliError::Io)?;

    let env = build_env(&cfg)?;
    let mut trainer = Trainer::new(env, cfg.learner.clone(), cfg.trainer.clone(), cfg.refinement.clone())?;
    let mut advisor = make_advisor(&cfg)?;
    let advisor_ref: Option<&mut dyn Advisor> = match advisor.as_deref_mut() {
        Some(a) => Some(a),
        None => None,
    };

    println!("training: {} env steps, advisor={}", cfg.trainer.total_steps, cfg.advisor.mode);
    let out = cfg.output_dir.clone();
    let mut event_error: Option<CliError> = None;
    let summary = {
        let event_error = &mut event_error;
        trainer.run(advisor_ref, &mut |event| {
            let r: Result<(), CliError> = (|| {
                match event {
                    TrainerEvent::Checkpoint { grad_step, learner } => {
                        let path = out.join(format!("checkpoint-{grad_step}.json"));
                        std::fs::write(&path, learner.to_checkpoint_json()?)
                            .map_err(|e| io_err(&path, e))?;
                    }
                    TrainerEvent::Eval { grad_step, report } => {
                        let agg = report.aggregate();
                        println!(
                            "eval @ {grad_step}: survival {:.1}, reward {:.3}, safety {:.2}",
                            agg.mean_survival, agg.mean_reward, agg.mean_safety_cost
                        );
                    }
                    TrainerEvent::Refinement {
                        grad_step,
                        attempted,
                        accepted,
                    } => {
                        println!("refinement @ {grad_step}: {accepted}/{attempted} accepted");
                    }
                }
                Ok(())
            })();
            r.map_err(|e| {
                let msg = e.message().to_string();
                *event_error = Some(e);
                CoreError::Usage(msg)
            })
        })
    };
    let summary = match summary {
        Ok(s) => s,
        Err(e) => return Err(event_error.unwrap_or_else(|| CliError::from(e))),
    };

    let ckpt_path = cfg.output_dir.join("checkpoint.json");
    std::fs::write(&ckpt_path, trainer.learner.to_checkpoint_json()?).map_err(|e| io_err(&ckpt_path, e))?;

    let report = rollout(
        &trainer.env,
        &trainer.action_set,
        |s| trainer.learner.greedy_action(s),
        cfg.trainer.eval_episodes,
        cfg.learner.n_hist,
        cfg.trainer.seed,
        trainer.fingerprint(),
    )?;
    let csv_path = cfg.output_dir.join("metrics.csv");
    emit_report(&report, &csv_path, None)?;
    if !summary.curves.steps.is_empty() {
        let svg_path = cfg.output_dir.join("curves.svg");
        let svg = curves_to_svg(&summary.curves, trainer.fingerprint(), cfg.trainer.seed);
        std::fs::write(&svg_path, svg).map_err(|e| io_err(&svg_path, e))?;
    }

    let agg = report.aggregate();
    println!(
        "done: {} env steps, {} gradient steps, {} episodes, lambda_c {:.6}",
        summary.env_steps, summary.grad_steps, summary.episodes, summary.final_lambda_c
    );
    println!(
        "refinement: {} attempted, {} accepted",
        summary.refinement_attempted, summary.refinement_accepted
    );
    println!(
        "final eval: survival {:.1}, reward {:.3}, safety cost {:.2}",
        agg.mean_survival, agg.mean_reward, agg.mean_safety_cost
    );
    println!("checkpoint: {}", ckpt_path.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let mut cfg = resolve_config(&args.common)?;
    if let Some(n) = args.episodes {
        cfg.trainer.eval_episodes = n;
    }
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(&cfg.output_dir, e))?;
    cfg.echo(&cfg.output_dir).map_err(CliError::Io)?;

    let text = std::fs::read_to_string(&args.checkpoint).map_err(|e| io_err(&args.checkpoint, e))?;
    let learner = Learner::from_checkpoint_json(&text)?;
    let env = build_env(&cfg)?;
    let set = ActionSet::enumerate(&env.case);
    let expected_dim = learner.config.n_hist * frame_dim(&env.case);
    if learner.input_dim != expected_dim || learner.n_actions != set.len() {
        return Err(CliError::User(format!(
            "checkpoint shape mismatch: expects input {} / {} actions, case gives {} / {}",
            learner.input_dim,
            learner.n_actions,
            expected_dim,
            set.len()
        )));
    }

    let report = rollout(
        &env,
        &set,
        |s| learner.greedy_action(s),
        cfg.trainer.eval_episodes,
        learner.config.n_hist,
        cfg.trainer.seed,
        "eval",
    )?;
    let csv_path = cfg.output_dir.join("eval.csv");
    emit_report(&report, &csv_path, None)?;
    let agg = report.aggregate();
    println!(
        "eval over {} episodes: survival {:.1} +- {:.1}, reward {:.3} +- {:.3}",
        report.episodes.len(),
        agg.mean_survival,
        agg.std_survival,
        agg.mean_reward,
        agg.std_reward
    );
    println!(
        "overload rate {:.2}%, violation rate {:.2}%, safety cost {:.2}",
        agg.mean_overload_rate, agg.mean_violation_rate, agg.mean_safety_cost
    );
    println!("report: {}", csv_path.display());
    Ok(())
}

fn cmd_refine_demo(args: RefineDemoArgs) -> Result<(), CliError> {
    let mut cfg = resolve_config(&args.common)?;
    if cfg.advisor.mode == "off" {
        cfg.advisor.mode = "rule".to_string();
    }
    let env = build_env(&cfg)?;
    let Some(mut advisor) = make_advisor(&cfg)? else {
        return Err(CliError::User("refine-demo needs an advisor".into()));
    };

    // fill a small buffer with do-nothing experience across the chronics
    let horizon = env.episode_horizon();
    let max_offset = env.chronics.n_rows().saturating_sub(horizon);
    let mut buffer = ReplayBuffer::new(1024);
    let mut offset = 0;
    while offset <= max_offset && buffer.len() < 512 {
        let mut state = match env.reset(offset) {
            Ok(s) => s,
            Err(_) => {
                offset += horizon.max(1);
                continue;
            }
        };
        while !state.terminal && buffer.len() < 512 {
            let tr = env.step(&state, &gridsafe_core::topology::Action::DoNothing)?;
            state = tr.s_next.clone();
            buffer.push(BufferEntry {
                transition: tr,
                s_stack: Vec::new(),
                s_next_stack: Vec::new(),
                advised: false,
            });
        }
        offset += horizon.max(1);
    }

    let candidates = buffer.select_candidates(&cfg.refinement);
    if candidates.is_empty() {
        println!("no candidates below r_thr = {}", cfg.refinement.r_thr);
        return Ok(());
    }
    println!("{} candidates below r_thr = {}", candidates.len(), cfg.refinement.r_thr);

    for (n, &idx) in candidates.iter().take(args.count).enumerate() {
        let t = &buffer.get(idx).transition;
        println!("\n=== candidate {n} (r = {:.4}, C_v = {:.3}, C_l = {:.3}) ===", t.r, t.c_v, t.c_l);
        let prompt = build_prompt(&env.case, t, &cfg.refinement)?;
        println!("--- prompt ---\n{prompt}\n--- end prompt ---");
        let c_orig =
            gridsafe_core::env::compute_safety_cost(t.c_v, t.c_l, &env.config);
        let mut accepted = false;
        for round in 1..=cfg.refinement.k_max {
            let ctx = gridsafe_core::advisor::AdvisorContext {
                env: &env,
                transition: t,
                prompt: &prompt,
                config: &cfg.refinement,
            };
            let response = match advisor.advise(&ctx) {
                Ok(r) => r,
                Err(e) => {
                    println!("round {round}: advisor failure ({e})");
                    continue;
                }
            };
            println!("round {round} response: {response}");
            let proposal = parse_proposal(&response, env.case.n_lines());
            if !proposal.is_ok() {
                println!("round {round}: proposal rejected ({:?})", proposal.status);
                continue;
            }
            let action = match proposal_to_action(&env.case, &t.s.topo, &proposal.changes) {
                Ok(a) => a,
                Err(msg) => {
                    println!("round {round}: inconsistent proposal ({msg})");
                    continue;
                }
            };
            let sim = env.step(&t.s, &action)?;
            let c_hat = gridsafe_core::env::compute_safety_cost(sim.c_v, sim.c_l, &env.config);
            let improves = sim.r > t.r || (sim.r == t.r && c_hat < c_orig);
            println!(
                "round {round}: simulated r = {:.4} (was {:.4}), C = {:.3} (was {:.3}) -> {}",
                sim.r,
                t.r,
                c_hat,
                c_orig,
                if improves { "ACCEPT" } else { "reject" }
            );
            if improves {
                accepted = true;
                break;
            }
        }
        if !accepted {
            println!("no improvement after {} rounds; original stands", cfg.refinement.k_max);
        }
    }
    Ok(())
}

fn cmd_pf_check(args: PfCheckArgs) -> Result<(), CliError> {
    let (case, chronics) = match (&args.case, &args.chronics) {
        (None, None) => (
            load_case(fixtures::FIVE_BUS_CASE).expect("bundled case is valid"),
            fixtures::five_bus_mild_chronics(BUNDLED_ROWS),
        ),
        (Some(c), Some(ch)) => (load_case_file(c)?, load_chronics_file(ch)?),
        (Some(_), None) => {
            return Err(CliError::User("pf-check with --case also needs --chronics".into()))
        }
        (None, Some(ch)) => (
            load_case(fixtures::FIVE_BUS_CASE).expect("bundled case is valid"),
            load_chronics_file(ch)?,
        ),
    };
    let mut env_cfg = gridsafe_core::env::EnvConfig::default();
    env_cfg.max_episode_length = 1;
    let env = Env::new(Arc::new(case), Arc::new(chronics), env_cfg)?;
    let state = env.reset(args.row)?;
    let sol = state.solution.as_ref().expect("reset solves");
    let lim = state.limits.as_ref().expect("reset evaluates limits");
    println!(
        "converged in {} iterations, max mismatch {:.3e} p.u.",
        sol.iterations, sol.mismatch_norm
    );
    println!("C_v = {}, C_l = {}", lim.c_v, lim.c_l);
    for (li, line) in env.case.lines.iter().enumerate() {
        println!(
            "line {}: {:.3} / {:.2} p.u. ({:.1}%)",
            line.id.0,
            sol.line_current[li],
            line.i_max,
            sol.line_current[li] / line.i_max * 100.0
        );
    }
    if lim.violating_buses.is_empty() {
        println!("voltage violations: none");
    } else {
        for (sub, v) in &lim.violating_buses {
            println!("voltage violation: bus {} at {:.4} pu", sub.0, v);
        }
    }
    if lim.overloaded_lines.is_empty() {
        println!("overloads: none");
    } else {
        for (line, pct) in &lim.overloaded_lines {
            println!("overload: line {} at {:.1}%", line.0, pct);
        }
    }
    Ok(())
}

fn cmd_gen_fixtures(args: GenFixturesArgs) -> Result<(), CliError> {
    std::fs::create_dir_all(&args.output_dir).map_err(|e| io_err(&args.output_dir, e))?;
    let files: [(&str, String); 3] = [
        ("five_bus.case", fixtures::FIVE_BUS_CASE.to_string()),
        ("five_bus_mild.csv", fixtures::five_bus_mild_chronics(BUNDLED_ROWS).to_csv()),
        ("five_bus_stressed.csv", fixtures::five_bus_stressed_chronics(BUNDLED_ROWS).to_csv()),
    ];
    for (name, contents) in files {
        let path = args.output_dir.join(name);
        std::fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
