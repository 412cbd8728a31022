use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use relprobe_core::forge::PairType;
use relprobe_core::pipeline::{self, RelationEntry, SpaceEntry, StudyConfig, TrainOptions, TrainingOverrides};
use relprobe_core::synthetic::{self, PlantedConfig};
use relprobe_core::NodeKind;

const EXIT_INPUT: u8 = 2;
const EXIT_INCOMPLETE: u8 = 3;
const EXIT_TASK_FAILURES: u8 = 4;

/// Probe embedding spaces for relational knowledge drawn from a knowledge graph.
#[derive(Parser)]
#[command(name = "relprobe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StudyArgs {
    /// Study configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl StudyArgs {
    fn load(&self) -> Result<StudyConfig> {
        let mut cfg = StudyConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        Ok(cfg)
    }
}

fn pattern(p: &Option<String>) -> Result<Option<glob::Pattern>> {
    p.as_deref()
        .map(|s| glob::Pattern::new(s).with_context(|| format!("bad glob `{s}`")))
        .transpose()
}

#[derive(Subcommand)]
enum Command {
    /// Generate relation and random datasets, the manifest and the KG summary.
    Gen {
        #[command(flatten)]
        study: StudyArgs,
        /// Only relations whose name matches this glob.
        #[arg(long)]
        filter_relation: Option<String>,
    },
    /// Train probes for every missing (dataset, space, architecture) result.
    Train {
        #[command(flatten)]
        study: StudyArgs,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        filter_relation: Option<String>,
        /// Only spaces whose name matches this glob.
        #[arg(long)]
        filter_space: Option<String>,
    },
    /// Compute the baseline range, verdicts and aggregate tables.
    Analyze {
        #[command(flatten)]
        study: StudyArgs,
    },
    /// Print the aggregate table written by `analyze`.
    Report {
        #[command(flatten)]
        study: StudyArgs,
    },
    /// Gradient check on a tiny probe plus metric and statistics oracles.
    Check,
    /// Write a synthetic study with a planted relation, an identity relation
    /// and a scrambled relation.
    Synth {
        /// Directory for the KG, the embedding file and study.toml.
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Gen { study, filter_relation } => {
            let cfg = study.load()?;
            let summary = pipeline::cmd_gen(&cfg, pattern(&filter_relation)?.as_ref())?;
            let ok = summary.manifest.iter().filter(|m| m.is_ok()).count();
            println!(
                "{ok} datasets generated, {} skipped; output in {}",
                summary.manifest.len() - ok,
                cfg.out_dir.display()
            );
            for (kind, n) in &summary.seed_sizes {
                println!("seed vocabulary {kind}: {n}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Train {
            study,
            jobs,
            filter_relation,
            filter_space,
        } => {
            let cfg = study.load()?;
            let opts = TrainOptions {
                jobs,
                relation_filter: pattern(&filter_relation)?,
                space_filter: pattern(&filter_space)?,
            };
            let s = pipeline::cmd_train(&cfg, &opts)?;
            println!(
                "trained {}, already present {}, uncovered {}, failed {}",
                s.trained,
                s.already_done,
                s.uncovered.len(),
                s.failures.len()
            );
            for (ds, space, arch, err) in &s.failures {
                eprintln!("failed: {ds} on {space} ({arch}): {err}");
            }
            Ok(if s.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_TASK_FAILURES)
            })
        }
        Command::Analyze { study } => {
            let cfg = study.load()?;
            let s = pipeline::cmd_analyze(&cfg)?;
            match &s.range {
                Some(r) => println!(
                    "baseline range [{:.4}, {:.4}] from {} runs; {} verdicts",
                    r.lower, r.upper, r.n_results, s.n_verdicts
                ),
                None => eprintln!("no baseline range: random-dataset results are missing"),
            }
            for (c, n) in &s.classification_counts {
                println!("  {c}: {n}");
            }
            for d in &s.unanalyzable {
                eprintln!("unanalyzable: {d}");
            }
            Ok(if s.complete() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_INCOMPLETE)
            })
        }
        Command::Report { study } => {
            let cfg = study.load()?;
            print!("{}", pipeline::cmd_report(&cfg)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Check => {
            let lines = pipeline::cmd_check();
            for l in &lines {
                println!("{} {}: {}", if l.passed { "PASS" } else { "FAIL" }, l.name, l.detail);
            }
            Ok(if lines.iter().all(|l| l.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Synth { dir, pairs, dim, seed } => {
            let study = synthetic::planted_study(&PlantedConfig {
                dim,
                n_pairs: pairs,
                seed,
                ..PlantedConfig::default()
            })?;
            let (kg_path, vec_path) = synthetic::write_study(&study, &dir)?;
            let cfg = synthetic_config(&kg_path, &vec_path, seed);
            let path = dir.join("study.toml");
            std::fs::write(&path, cfg.to_toml()?).with_context(|| path.display().to_string())?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn file_name(p: &std::path::Path) -> PathBuf {
    p.file_name().map(PathBuf::from).unwrap_or_else(|| p.to_path_buf())
}

fn synthetic_config(kg_path: &std::path::Path, vec_path: &std::path::Path, seed: u64) -> StudyConfig {
    StudyConfig {
        kg_path: file_name(kg_path),
        kg_name: "synthetic".into(),
        spaces: vec![SpaceEntry {
            name: synthetic::PLANTED.into(),
            path: Some(file_name(vec_path)),
            covers: vec![NodeKind::Word],
            is_random: false,
        }],
        master_seed: seed,
        random_sizes: vec![200, 500, 1000],
        random_pair_type: PairType::WordWord,
        random_dim: None,
        min_total: 100,
        default_pair_types: vec![PairType::WordWord],
        relations: synthetic::groups()
            .into_iter()
            .map(|(name, group)| {
                (
                    name,
                    RelationEntry {
                        group: Some(group),
                        ..RelationEntry::default()
                    },
                )
            })
            .collect(),
        training: TrainingOverrides {
            learning_rate: Some(1e-3),
            ..TrainingOverrides::default()
        },
        out_dir: "out".into(),
    }
}
