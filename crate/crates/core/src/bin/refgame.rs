use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use refgame::corpus::{write_corpus, zero_shot_split, RefExCorpus, Utterance};
use refgame::evaluation::{build_ts_distractors, noun_metrics, resolution_accuracy};
use refgame::experiment::{
    acquire_corpus, emit_report, load_report, render_report, run_experiment_on, train_eval_models,
    train_split, ts_seed, ExperimentConfig, ModelBundle, SpeakerReport,
};
use refgame::pragmatics::{make_category_belief, s1_decode};
use refgame::speakers::{decode_greedy, NextWordModel};
use refgame::ReportFormat;

#[derive(Parser)]
#[command(name = "refgame", version, about = "Zero-shot reference game experiments")]
struct Cli {
    /// Experiment config (TOML). Defaults to the bundled demo config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Markdown,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
            Format::Markdown => ReportFormat::Markdown,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Speaker {
    S0,
    S1,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic world and write it as JSONL.
    GenWorld,
    /// Write train.jsonl and test.jsonl for one zero-shot category.
    Split {
        #[arg(long)]
        category: String,
    },
    /// Train the literal speaker and word/category table for one split.
    Train {
        #[arg(long)]
        category: String,
    },
    /// Decode expressions for every zero-shot test target of a split.
    Generate {
        #[arg(long)]
        category: String,
        #[arg(long, value_enum, default_value_t = Speaker::S1)]
        speaker: Speaker,
        /// Model bundle from `train`; trained on the fly when absent.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Score a generations file (from `generate`) against both test sets.
    Eval {
        #[arg(long)]
        category: String,
        #[arg(long)]
        generations: PathBuf,
    },
    /// Run the full experiment and write the report.
    Run,
    /// Re-render a JSON report in another format.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Serialize, Deserialize)]
struct GenerationLine {
    scene_id: String,
    target_id: String,
    category: String,
    speaker: String,
    expression: Vec<String>,
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let config = match &cli.config {
        Some(p) => ExperimentConfig::from_path(p).context("[config]")?,
        None => ExperimentConfig::demo(),
    };
    Ok(match cli.seed {
        Some(s) => config.with_seed(s),
        None => config,
    })
}

fn out_dir(cli: &Cli, config: &ExperimentConfig) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| config.output_dir())
}

fn writer(cli: &Cli, default: &Path) -> anyhow::Result<(PathBuf, BufWriter<File>)> {
    let path = cli.out.clone().unwrap_or_else(|| default.to_owned());
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("[io] creating {}", parent.display()))?;
    }
    let f = File::create(&path).with_context(|| format!("[io] creating {}", path.display()))?;
    Ok((path, BufWriter::new(f)))
}

fn write_jsonl(corpus: &RefExCorpus, path: &Path) -> anyhow::Result<()> {
    let f = File::create(path).with_context(|| format!("[io] creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    write_corpus(corpus, &mut w)
        .and_then(|_| w.flush())
        .with_context(|| format!("[io] writing {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = load_config(&cli)?;
    match &cli.command {
        Command::GenWorld => {
            let corpus = acquire_corpus(&config)?;
            let path = cli.out.clone().unwrap_or_else(|| config.output_dir().join("world.jsonl"));
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).with_context(|| format!("[io] creating {}", parent.display()))?;
            }
            write_jsonl(&corpus, &path)?;
            println!("{} ({} records)", path.display(), corpus.len());
        }
        Command::Split { category } => {
            let corpus = acquire_corpus(&config)?;
            let (train, test) = zero_shot_split(&corpus, [category.as_str()])
                .with_context(|| format!("[split {category}]"))?;
            let dir = out_dir(&cli, &config);
            fs::create_dir_all(&dir).with_context(|| format!("[io] creating {}", dir.display()))?;
            write_jsonl(&train, &dir.join("train.jsonl"))?;
            write_jsonl(&test, &dir.join("test.jsonl"))?;
            println!("train {} / test {} records in {}", train.len(), test.len(), dir.display());
        }
        Command::Train { category } => {
            let corpus = acquire_corpus(&config)?;
            let models = train_split(&config, &corpus, category)?;
            let bundle = ModelBundle::new(&models.speaker, &models.table);
            let default = config.output_dir().join(format!("model-{category}.json"));
            let (path, mut w) = writer(&cli, &default)?;
            serde_json::to_writer(&mut w, &bundle)
                .map_err(anyhow::Error::from)
                .and_then(|_| w.flush().map_err(Into::into))
                .with_context(|| format!("[io] writing {}", path.display()))?;
            println!("{}", path.display());
        }
        Command::Generate {
            category,
            speaker,
            model,
        } => {
            let corpus = acquire_corpus(&config)?;
            let mut models = train_split(&config, &corpus, category)?;
            if let Some(p) = model {
                let text = fs::read_to_string(p).with_context(|| format!("[io] reading {}", p.display()))?;
                let bundle: ModelBundle =
                    serde_json::from_str(&text).with_context(|| format!("[model] parsing {}", p.display()))?;
                let loaded = bundle.speaker()?;
                if loaded.vocabulary() != &corpus.vocabulary || loaded.categories() != &corpus.categories {
                    bail!("[model] {} was trained on a different corpus", p.display());
                }
                models.speaker = loaded;
                models.table = bundle.table;
            }
            let default = config.output_dir().join(format!(
                "gen-{category}-{}.jsonl",
                if matches!(speaker, Speaker::S0) { "s0" } else { "s1" }
            ));
            let (path, mut w) = writer(&cli, &default)?;
            let n_categories = models.train.categories.len();
            let mut n = 0;
            for rec in &models.test.records {
                let target = rec.target();
                if target.category != models.category {
                    continue;
                }
                let utt = match speaker {
                    Speaker::S0 => decode_greedy(&models.speaker, target, config.decode.max_len),
                    Speaker::S1 => {
                        let belief = make_category_belief(
                            config.belief_mode,
                            target,
                            n_categories,
                            config.custom_belief.as_deref(),
                        )
                        .with_context(|| format!("[generate {category}]"))?;
                        s1_decode(&models.speaker, &models.table, &belief, target, &config.decode)
                            .with_context(|| format!("[generate {category}]"))?
                    }
                };
                let line = GenerationLine {
                    scene_id: rec.scene.id.clone(),
                    target_id: target.id.clone(),
                    category: category.clone(),
                    speaker: if matches!(speaker, Speaker::S0) { "S0" } else { "S1" }.into(),
                    expression: utt.words(&corpus.vocabulary).into_iter().map(str::to_owned).collect(),
                };
                serde_json::to_writer(&mut w, &line)?;
                writeln!(w)?;
                n += 1;
            }
            w.flush()?;
            println!("{} ({n} expressions)", path.display());
        }
        Command::Eval {
            category,
            generations,
        } => {
            let corpus = acquire_corpus(&config)?;
            let eval = train_eval_models(&config, &corpus)?;
            let cat = corpus
                .categories
                .require(category)
                .with_context(|| format!("[eval {category}]"))?;
            let (_, test) = zero_shot_split(&corpus, [category.as_str()])
                .with_context(|| format!("[eval {category}]"))?;
            let by_scene: BTreeMap<&str, usize> = test
                .records
                .iter()
                .enumerate()
                .map(|(i, r)| (r.scene.id.as_str(), i))
                .collect();
            let f = File::open(generations)
                .with_context(|| format!("[io] opening {}", generations.display()))?;
            let mut indices = Vec::new();
            let mut utterances = Vec::new();
            for (n, line) in BufReader::new(f).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let g: GenerationLine = serde_json::from_str(&line)
                    .with_context(|| format!("[eval] {}:{}", generations.display(), n + 1))?;
                let &i = by_scene
                    .get(g.scene_id.as_str())
                    .ok_or_else(|| anyhow!("[eval] scene `{}` is not a {category} test scene", g.scene_id))?;
                let words: Vec<&str> = g.expression.iter().map(String::as_str).collect();
                indices.push(i);
                utterances.push(Utterance::from_words(&corpus.vocabulary, &words, true));
            }
            let seed_index = config
                .zero_shot_categories
                .iter()
                .position(|c| c == category)
                .unwrap_or(0);
            let similar = eval.similar.restricted_to(cat);
            let all_ts = build_ts_distractors(&test, &similar, config.ts_distractors_k, ts_seed(config.seed, seed_index))
                .with_context(|| format!("[ts-distractors {category}]"))?;
            let targets = refgame::evaluation::ts_distractor_targets(&test, &similar);
            let pos: BTreeMap<usize, usize> = targets.iter().enumerate().map(|(j, &i)| (i, j)).collect();
            let ts_distractors = indices
                .iter()
                .map(|i| pos.get(i).map(|&j| all_ts[j].clone()))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| anyhow!("[eval] generations include non-{category} targets"))?;
            let ts_image: Vec<_> = indices.iter().map(|&i| test.records[i].scene.clone()).collect();
            let report = SpeakerReport {
                noun_metrics: noun_metrics(&utterances, &eval.lexicon, &corpus.vocabulary, cat)
                    .with_context(|| format!("[eval {category}]"))?,
                acc_ts_image: resolution_accuracy(&ts_image, &utterances, &eval.speaker, &eval.table, &eval.lexicon)
                    .with_context(|| format!("[eval {category}]"))?,
                acc_ts_distractors: resolution_accuracy(
                    &ts_distractors,
                    &utterances,
                    &eval.speaker,
                    &eval.table,
                    &eval.lexicon,
                )
                .with_context(|| format!("[eval {category}]"))?,
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Run => {
            let corpus = acquire_corpus(&config)?;
            let report = run_experiment_on(&config, &corpus)?;
            let path = emit_report(&report, cli.format.into(), &out_dir(&cli, &config))?;
            print!("{}", render_report(&report, ReportFormat::Markdown));
            println!("wrote {}", path.display());
        }
        Command::Report { input } => {
            let report = load_report(input).context("[report]")?;
            match &cli.out {
                Some(dir) => println!("{}", emit_report(&report, cli.format.into(), dir)?.display()),
                None => print!("{}", render_report(&report, cli.format.into())),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
