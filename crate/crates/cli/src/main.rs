use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use hrf_core::experiments::{self, Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "hrf", version, about = "Train, reward-fine-tune and evaluate toy diffusion models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the base denoiser, embedder and scorer, then evaluate it.
    Pretrain(RunArgs),
    /// Fine-tune the pretrained model, then evaluate the result.
    Finetune(RunArgs),
    /// Evaluate a run directory's model on the shared evaluation noise.
    Eval(RunArgs),
    /// Switch from the fine-tuned to the base model mid-chain.
    Inject(RunArgs),
    /// Recompute the embedding Vendi curve from stored samples.
    VendiCurve(RunArgs),
    /// Aggregate metric reports from several run directories.
    Report {
        /// Run directories or report.csv files.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Output CSV.
        #[arg(long, default_value = "report.csv")]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Window preset: baseline, early or later.
    #[arg(long)]
    preset: Option<String>,
    /// ddpo, hrf or hrf-d.
    #[arg(long)]
    method: Option<String>,
}

impl RunArgs {
    fn load(&self, forced_method: Option<&str>) -> hrf_core::Result<RunConfig> {
        if let (Some(m), Some(_)) = (forced_method, &self.method) {
            return Err(hrf_core::Error::Config(format!("--method cannot be combined with `{m}`")));
        }
        let ov = Overrides {
            seed: self.seed,
            out: self.out.clone(),
            preset: self.preset.clone(),
            method: forced_method.map(str::to_string).or_else(|| self.method.clone()),
        };
        RunConfig::load(self.config.as_deref(), &ov)
    }
}

fn print_eval(e: &experiments::Evaluation) {
    let r = &e.report;
    println!(
        "eval {}: reward {:.4} ± {:.4}, vendi raw {:.3}, vendi embed {:.3}, IS {:.3}, coverage {:.3} {:?}",
        r.run_id, r.mean_reward, r.se_reward, r.vendi_raw, r.vendi_embed, r.is_score, r.mode_coverage, e.histogram
    );
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Pretrain(a) => {
            let cfg = a.load(Some("pretrain"))?;
            let s = experiments::pretrain(&cfg).context("pretraining failed")?;
            println!("pretrain: final loss {:.5}, embedder accuracy {:.4}", s.final_loss, s.embedder_accuracy);
            print_eval(&experiments::evaluate(&cfg)?);
            println!("wrote {}", cfg.out_dir.display());
        }
        Command::Finetune(a) => {
            let cfg = a.load(None)?;
            let log = experiments::finetune(&cfg).context("fine-tuning failed")?;
            if let Some(last) = log.rows.last() {
                println!("finetune: {} iterations, last mean reward {:.4}", log.rows.len(), last.mean_reward);
            }
            print_eval(&experiments::evaluate(&cfg)?);
            println!("wrote {}", cfg.out_dir.display());
        }
        Command::Eval(a) => print_eval(&experiments::evaluate(&a.load(None)?)?),
        Command::Inject(a) => {
            let cfg = a.load(None)?;
            let rows = experiments::inject(&cfg)?;
            for (s, d) in experiments::final_distances(&rows) {
                println!("inject at {s}: final distance {d:.5}");
            }
        }
        Command::VendiCurve(a) => {
            let cfg = a.load(None)?;
            let curve = experiments::vendi_curve(&cfg)?;
            if let Some((n, v)) = curve.last() {
                println!("vendi curve: {} points, VS({n}) = {v:.4}", curve.len());
            }
        }
        Command::Report { runs, out } => {
            let rows = experiments::report(&runs, &out)?;
            println!("aggregated {} rows into {}", rows.len(), out.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<hrf_core::Error>() {
        Some(e) if e.is_config() => 1,
        _ => 2,
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
