use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use latact::act_space::{ActScore, DialogueAct};
use latact::dialog_data::{generate_corpus, holdout_path, Corpus, GenConfig};
use latact::pipeline::{
    finetune, predict_acts, pretrain, run_chat, run_eval, ChatSession, Checkpoint, ControlMode, EvalOptions, TrainConfig,
};

#[derive(Parser)]
#[command(name = "latact", version, about = "Latent dialogue-act response generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus, plus a holdout-domain split next to it.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated training domains.
        #[arg(long, value_delimiter = ',', default_value = "restaurant,hotel,attraction")]
        domains: Vec<String>,
        #[arg(long, default_value_t = 300)]
        dialogues: usize,
        #[arg(long, default_value_t = 0.4)]
        unlabeled_frac: f64,
        /// Domain withheld from training, or `none`.
        #[arg(long, default_value = "shop")]
        holdout: String,
    },
    /// Train a model from scratch.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        /// key = value training configuration; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Continue training on `--examples` dialogues sampled from a corpus.
    Finetune {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        examples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score generated responses; writes a JSON report and prints a table.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "none")]
        control: ControlMode,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Feed the annotated act instead of the predicted one where available.
        #[arg(long)]
        gold_acts: bool,
    },
    /// Print the act chosen for every turn, with act F1 against the labels.
    PredictAct {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Interactive session on stdin.
    Chat {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        require: Vec<String>,
        #[arg(long)]
        forbid: Vec<String>,
    },
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    Corpus::load(path).with_context(|| format!("reading {}", path.display()))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))
}

fn parse_acts(texts: &[String]) -> Result<Vec<DialogueAct>> {
    texts
        .iter()
        .map(|t| DialogueAct::parse(t).with_context(|| format!("bad act {t:?}")))
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            out,
            seed,
            domains,
            dialogues,
            unlabeled_frac,
            holdout,
        } => {
            let holdout = (holdout != "none").then_some(holdout);
            let cfg = GenConfig {
                seed,
                domains,
                dialogues,
                unlabeled_frac,
                holdout_dialogues: if holdout.is_some() { dialogues.div_ceil(3) } else { 0 },
                holdout,
                ..GenConfig::default()
            };
            let (train, hold) = generate_corpus(&cfg)?;
            train.save(&out).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} dialogues to {}", train.dialogues.len(), out.display());
            if let Some(hold) = hold {
                let path = holdout_path(&out);
                hold.save(&path).with_context(|| format!("writing {}", path.display()))?;
                println!("wrote {} dialogues to {}", hold.dialogues.len(), path.display());
            }
        }
        Command::Pretrain { data, config, out } => {
            let cfg = match config {
                Some(p) => TrainConfig::load(&p).with_context(|| format!("reading {}", p.display()))?,
                None => TrainConfig::default(),
            };
            let corpus = load_corpus(&data)?;
            let (ckpt, summary) = pretrain(&cfg, &corpus)?;
            ckpt.save(&out).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "{} steps on {} dialogues, loss {:.4} -> {:.4}, table {} acts",
                summary.steps,
                summary.dialogues,
                summary.initial_loss,
                summary.final_loss,
                ckpt.table.len()
            );
        }
        Command::Finetune {
            ckpt,
            data,
            examples,
            out,
        } => {
            let ckpt = load_checkpoint(&ckpt)?;
            let corpus = load_corpus(&data)?;
            let (tuned, summary) = finetune(ckpt, &corpus, examples)?;
            tuned.save(&out).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "{} steps on {} dialogues, loss {:.4} -> {:.4}, table {} acts",
                summary.steps,
                summary.dialogues,
                summary.initial_loss,
                summary.final_loss,
                tuned.table.len()
            );
        }
        Command::Eval {
            ckpt,
            data,
            control,
            report,
            gold_acts,
        } => {
            let ckpt = load_checkpoint(&ckpt)?;
            let corpus = load_corpus(&data)?;
            let r = run_eval(&ckpt, &corpus.dialogues, &corpus.world(), EvalOptions { control, gold_acts })?;
            if let Some(path) = report {
                std::fs::write(&path, r.to_json()).with_context(|| format!("writing {}", path.display()))?;
            }
            print!("{}", r.to_tsv());
        }
        Command::PredictAct { ckpt, data } => {
            let ckpt = load_checkpoint(&ckpt)?;
            let corpus = load_corpus(&data)?;
            let preds = predict_acts(&ckpt, &corpus.dialogues, &corpus.world())?;
            let mut out = BufWriter::new(io::stdout().lock());
            let mut score = ActScore::default();
            let mut labeled = 0;
            writeln!(out, "dialogue\tturn\tpredicted\tgold")?;
            for p in &preds {
                let show = |a: &Option<DialogueAct>| a.as_ref().map_or("-".to_string(), |a| a.serialize());
                writeln!(out, "{}\t{}\t{}\t{}", p.dialogue, p.turn, show(&p.predicted), show(&p.gold))?;
                if let Some(gold) = &p.gold {
                    labeled += 1;
                    match &p.predicted {
                        Some(pred) => score.add(latact::act_space::act_f1(pred, gold)),
                        None => score.false_negatives += gold.triples().count(),
                    }
                }
            }
            if labeled > 0 {
                writeln!(out, "act_f1\t{:.4}\t({labeled} labeled turns)", score.f1())?;
            }
            out.flush()?;
        }
        Command::Chat { ckpt, require, forbid } => {
            let ckpt = load_checkpoint(&ckpt)?;
            let (required, forbidden) = (parse_acts(&require)?, parse_acts(&forbid)?);
            let mut session = ChatSession::new(&ckpt, &required, &forbidden)?;
            run_chat(&mut session, io::stdin().lock(), io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let cause: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("error: {}", cause.join(": "));
            ExitCode::FAILURE
        }
    }
}
