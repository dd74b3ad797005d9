//! `esmtts`: command-line pipeline over the conditioning library.
//!
//! Subcommands: `inventory`, `condition`, `control`, `gradcheck`,
//! `train-toy`. Any parse or shape failure exits nonzero with a
//! machine-readable JSON error report on stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use esm_core::gradcheck::{grad_check, GradCheckOptions};
use esm_core::{
    batch_condition, batch_loss, batch_loss_and_grad, build_inventory, enhance_expressiveness,
    parse_file, smooth_transition, Combination, ControlSpec, ControlWarning, ExecMode, Model,
    RunConfig, SpecSource, SyntheticTask,
};

#[derive(Parser)]
#[command(name = "esmtts", version, about = "Bilingual conditioning pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print or write the default token inventory as CSV.
    Inventory(InventoryArgs),
    /// Condition annotated utterances with a trained checkpoint.
    Condition(ConditionArgs),
    /// Emit control specs (expressiveness doubling or smooth transition).
    Control(ControlArgs),
    /// Check analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Train on the synthetic task with plain gradient descent.
    TrainToy(TrainArgs),
}

#[derive(Args)]
struct InventoryArgs {
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConditionArgs {
    /// Annotated utterance file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Model checkpoint (JSON).
    #[arg(long)]
    ckpt: PathBuf,
    /// Output directory for artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Apply one label combination to every span instead of the utterance's
    /// own labels.
    #[arg(long, conflicts_with = "spec")]
    combo: Option<ComboArg>,
    /// Control-spec JSON (as emitted by `control`), one spec per utterance.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Speaker id for the speaker embedding.
    #[arg(long, default_value_t = 0)]
    speaker: usize,
    /// Process independent utterances on the rayon pool.
    #[arg(long)]
    parallel: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ComboArg {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl From<ComboArg> for Combination {
    fn from(value: ComboArg) -> Self {
        match value {
            ComboArg::A => Combination::A,
            ComboArg::B => Combination::B,
            ComboArg::C => Combination::C,
            ComboArg::D => Combination::D,
            ComboArg::E => Combination::E,
            ComboArg::F => Combination::F,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ControlMode {
    Enhance,
    SmoothTransition,
}

#[derive(Args)]
struct ControlArgs {
    /// Which control operation to apply.
    #[arg(long)]
    mode: ControlMode,
    /// Annotated utterance file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Run configuration JSON; desk-scale defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum tolerated relative error.
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration JSON; desk-scale defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the loss curve and checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Train on the phonology-blind task variant.
    #[arg(long)]
    blind: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = err
                .downcast_ref::<esm_core::Error>()
                .map(|e| e.kind())
                .unwrap_or("io");
            let report = serde_json::json!({
                "error": { "kind": kind, "message": format!("{err:#}") }
            });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Inventory(args) => cmd_inventory(args),
        Command::Condition(args) => cmd_condition(args),
        Command::Control(args) => cmd_control(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::TrainToy(args) => cmd_train(args),
    }
}

fn load_config(path: &Option<PathBuf>, seed: Option<u64>) -> Result<RunConfig> {
    let mut config = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => RunConfig::desk(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn write_or_print(out: &Option<PathBuf>, contents: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
        }
        None => print!("{contents}"),
    }
    Ok(())
}

fn cmd_inventory(args: InventoryArgs) -> Result<()> {
    write_or_print(&args.out, &build_inventory().to_csv())
}

fn read_utterances(path: &Path, model: &Model) -> Result<Vec<esm_core::Utterance>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let utts = parse_file(&text, &model.inventory)?;
    if utts.is_empty() {
        bail!("no utterances in {}", path.display());
    }
    Ok(utts)
}

fn cmd_condition(args: ConditionArgs) -> Result<()> {
    let ckpt = fs::read_to_string(&args.ckpt)
        .with_context(|| format!("reading {}", args.ckpt.display()))?;
    let model = Model::from_checkpoint_json(&ckpt)?;
    let utterances = read_utterances(&args.input, &model)?;
    let mode = if args.parallel {
        ExecMode::Parallel
    } else {
        ExecMode::Sequential
    };

    fs::create_dir_all(&args.out)?;
    let mut written = 0usize;

    let sources: Vec<(String, SpecSource)> = if let Some(spec_path) = &args.spec {
        let text = fs::read_to_string(spec_path)
            .with_context(|| format!("reading {}", spec_path.display()))?;
        let specs: Vec<ControlSpec> =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", spec_path.display()))?;
        if specs.len() != utterances.len() {
            bail!(
                "{} control specs for {} utterances",
                specs.len(),
                utterances.len()
            );
        }
        vec![(String::new(), SpecSource::PerUtterance(specs))]
    } else if let Some(combo) = args.combo {
        let combo: Combination = combo.into();
        vec![(format!("combo_{}", combo.as_str()), SpecSource::Combination(combo))]
    } else {
        // Default run: the utterance's own labels plus all six combinations.
        let mut v = vec![(String::new(), SpecSource::OwnLabels)];
        for combo in Combination::ALL {
            v.push((
                format!("combo_{}", combo.as_str()),
                SpecSource::Combination(combo),
            ));
        }
        v
    };

    for (tag, source) in &sources {
        let artifacts = batch_condition(&model, &utterances, source, args.speaker, mode)?;
        for art in artifacts {
            for (name, contents) in art.files {
                let name = if tag.is_empty() {
                    name
                } else {
                    // utt0000_conditioned.csv -> utt0000_combo_a_conditioned.csv
                    name.replacen("_", &format!("_{tag}_"), 1)
                };
                fs::write(args.out.join(&name), contents)?;
                written += 1;
            }
        }
    }
    println!(
        "conditioned {} utterance(s), wrote {written} file(s) to {}",
        utterances.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_control(args: ControlArgs) -> Result<()> {
    let inventory = build_inventory();
    let text =
        fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let utterances = parse_file(&text, &inventory)?;
    if utterances.is_empty() {
        bail!("no utterances in {}", args.input.display());
    }

    let mut specs = Vec::with_capacity(utterances.len());
    for u in &utterances {
        let base = ControlSpec::from_utterance(u);
        let spec = match args.mode {
            ControlMode::Enhance => enhance_expressiveness(u, &base)?,
            ControlMode::SmoothTransition => {
                let (spec, warnings) = smooth_transition(u, &base, &inventory)?;
                for w in warnings {
                    match w {
                        ControlWarning::NoEnglishSpan => {
                            eprintln!("warning: line {}: no English span to rewrite", u.line)
                        }
                    }
                }
                spec
            }
        };
        specs.push(spec);
    }
    let json = serde_json::to_string_pretty(&specs)?;
    write_or_print(&args.out, &format!("{json}\n"))
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<()> {
    let config = load_config(&args.config, args.seed)?;
    let task = SyntheticTask::phonology_sensitive(&config, config.seed)?;
    let model = Model::new(&config, config.seed)?;
    let report = grad_check(
        &model,
        |m| batch_loss_and_grad(m, &task.examples),
        |m| batch_loss(m, &task.examples),
        &GradCheckOptions {
            tolerance: args.tolerance,
            ..Default::default()
        },
    )?;
    for group in &report.groups {
        println!(
            "{:<40} entries {:>6}  max rel err {:.3e}",
            group.name, group.entries, group.max_rel_err
        );
    }
    println!(
        "checked {} entries; max relative error {:.6e} (tolerance {:.0e})",
        report.entries_checked, report.max_rel_err, report.tolerance
    );
    if !report.passed() {
        bail!(
            "gradient check failed: max relative error {:.6e} above {:.0e}",
            report.max_rel_err,
            report.tolerance
        );
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = load_config(&args.config, args.seed)?;
    let task = if args.blind {
        SyntheticTask::phonology_blind(&config, config.seed)?
    } else {
        SyntheticTask::phonology_sensitive(&config, config.seed)?
    };
    let report = esm_core::train_toy(&task, &config)?;
    println!(
        "trained {} steps: loss {} -> {} (ratio {:.6})",
        config.steps,
        report.initial_loss(),
        report.final_loss(),
        report.reduction()
    );
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        let mut csv = String::from("step,loss\n");
        for (i, loss) in report.losses.iter().enumerate() {
            csv.push_str(&format!("{i},{loss}\n"));
        }
        fs::write(out.join("loss_curve.csv"), csv)?;
        fs::write(out.join("model.json"), report.model.to_checkpoint_json()?)?;
        println!("wrote loss_curve.csv and model.json to {}", out.display());
    }
    Ok(())
}
