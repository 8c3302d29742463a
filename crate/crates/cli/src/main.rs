use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nhnn::commands::{
    cmd_cluster, cmd_eval_cross, cmd_eval_loso, cmd_predict, cmd_synth, cmd_train, CmdResult, Failure, RunConfig,
};
use nhnn::evaluation::{render_cluster_ratios, render_cross, render_within};

#[derive(Parser)]
#[command(name = "nhnn", version, about = "Hierarchical emotion classifiers with Dirichlet-process clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Maximum number of concurrent evaluation jobs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write a synthetic corpus.
    Synth,
    /// Fit the summary-feature mixture and report clusters.
    Cluster,
    /// Train the base model and the hierarchical model.
    Train,
    /// Leave-one-speaker-out evaluation.
    EvalLoso,
    /// Train on one corpus, test on another.
    EvalCross,
    /// Score utterances with a saved model.
    Predict,
}

fn load(cli: &Cli) -> CmdResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(Failure::Invalid)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> CmdResult<()> {
    let cfg = load(cli)?;
    match cli.command {
        Command::Synth => {
            let s = cmd_synth(&cfg)?;
            println!(
                "wrote {} utterances from {} speakers (low/medium/high {}/{}/{}) to {}",
                s.n_utterances,
                s.n_speakers,
                s.label_counts[0],
                s.label_counts[1],
                s.label_counts[2],
                s.manifest.display()
            );
        }
        Command::Cluster => {
            let r = cmd_cluster(&cfg)?;
            println!("{} clusters, weights {:?}", r.n_clusters, r.weights);
            if let Some(p) = &r.prune {
                println!("pruned components {:?}, {} utterances reassigned", p.pruned, p.reassigned);
            }
            print!("{}", render_cluster_ratios(&r.ratios));
        }
        Command::Train => {
            let r = cmd_train(&cfg)?;
            println!(
                "base best epoch {} (val loss {:.4}); {} heads, saved to {}",
                r.base.best_epoch,
                r.base.best_val_loss,
                r.nhnn.finetune.cluster_sizes.len(),
                r.model_dir.display()
            );
        }
        Command::EvalLoso => print!("{}", render_within(&cmd_eval_loso(&cfg, cli.jobs)?)),
        Command::EvalCross => print!("{}", render_cross(&cmd_eval_cross(&cfg, cli.jobs)?)),
        Command::Predict => {
            for p in cmd_predict(&cfg)?.predictions {
                println!("{}\t{:?}\t{:?}", p.id, p.label, p.probs);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NHNN_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors count as invalid input
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
