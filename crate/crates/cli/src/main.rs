use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use unlearn_cli::commands::{run, Command, Outcome};
use unlearn_cli::pipeline::PipelineConfig;
use unlearn_core::container::read_json;
use unlearn_core::Error;

#[derive(Parser)]
#[command(name = "unlearn", version, about = "Masked unlearning with curvature compensation and a checkable certificate")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of masked weights.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Fisher damping.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Split curvature blocks larger than this.
    #[arg(long, global = true, value_parser = ["256", "512"])]
    block_cap: Option<String>,
    /// Fractional bits of the fixed-point encoding.
    #[arg(long, global = true)]
    frac_bits: Option<u32>,
    /// Artifact directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Print a JSON summary on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[arg(long, global = true)]
    solver: Option<String>,
    #[arg(long, global = true)]
    curvature_proxy: Option<String>,
    #[arg(long, global = true)]
    hessian: Option<String>,
    #[arg(long, global = true)]
    backend: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Generate the synthetic task and pretrain.
    Train,
    /// Fine-tune the pretrained model on the personal data.
    Personalize,
    /// Block-wise damped Fisher of the personalized model.
    Fisher,
    /// Saliency mask on the forget set.
    Mask,
    /// Compensated update and the unlearned model.
    Unlearn,
    /// Check the real-arithmetic certificate.
    Certify,
    /// Second-order forget-loss accounting.
    ReportBounds,
    /// Encode, check and prove the fixed-point certificate.
    Prove,
    /// Verify a proof against its public statement.
    Verify,
    /// Retrain without the forget set, then personalize.
    Gold,
    /// Accuracies, alignment and membership inference.
    Evaluate,
    /// Run every stage.
    Demo,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Train => Command::Train,
            Cmd::Personalize => Command::Personalize,
            Cmd::Fisher => Command::Fisher,
            Cmd::Mask => Command::Mask,
            Cmd::Unlearn => Command::Unlearn,
            Cmd::Certify => Command::Certify,
            Cmd::ReportBounds => Command::ReportBounds,
            Cmd::Prove => Command::Prove,
            Cmd::Verify => Command::Verify,
            Cmd::Gold => Command::Gold,
            Cmd::Evaluate => Command::Evaluate,
            Cmd::Demo => Command::Demo,
        }
    }
}

fn config(cli: &Cli) -> unlearn_core::Result<PipelineConfig> {
    let mut cfg: PipelineConfig = match &cli.config {
        Some(path) => read_json(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(k) = cli.k {
        cfg.k = Some(k);
    }
    if let Some(l) = cli.lambda {
        cfg.fisher_lambda = l;
    }
    if let Some(cap) = &cli.block_cap {
        cfg.block_cap = Some(cap.parse().expect("validated by clap"));
    }
    if let Some(f) = cli.frac_bits {
        cfg.frac_bits = f;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    for (slot, flag) in [
        (&mut cfg.solver, &cli.solver),
        (&mut cfg.curvature_proxy, &cli.curvature_proxy),
        (&mut cfg.hessian, &cli.hessian),
        (&mut cfg.backend, &cli.backend),
    ] {
        if let Some(v) = flag {
            *slot = v.clone();
        }
    }
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        3
    } else if matches!(e, Error::Unsatisfied(_) | Error::DigestMismatch { .. }) {
        1
    } else {
        2
    }
}

fn print_human(out: &Outcome) {
    println!("{}: {}", out.command, if out.pass { "pass" } else { "FAIL" });
    match &out.summary {
        Value::Object(m) => {
            for (k, v) in m {
                match v.get("pass").and_then(Value::as_bool) {
                    Some(p) => println!("  {k}: {}", if p { "pass" } else { "FAIL" }),
                    None => println!("  {k}: {v}"),
                }
            }
        }
        Value::Array(rows) => {
            for r in rows {
                println!("  {r}");
            }
        }
        other => println!("  {other}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config(&cli).and_then(|cfg| run(cli.command.into(), &cfg));
    match result {
        Ok(out) => {
            if cli.json {
                println!("{}", serde_json::to_string(&out).expect("summary serializes"));
            } else {
                print_human(&out);
            }
            ExitCode::from(if out.pass { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
