//! ceclcnn command line: train and evaluate the image-embedding text
//! classifier, inspect character embeddings, generate synthetic corpora,
//! and preview rasterized glyphs.
//!
//! Exit codes: 0 success, 1 usage/config/IO errors, 2 numeric failure
//! (non-finite training loss).

mod config;
mod util;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use ceclcnn::analysis;
use ceclcnn::augment::{RandomErasingConfig, WildcardConfig, WildcardGranularity};
use ceclcnn::data::{
    generate_synthetic, holdout_documents, load_tsv, split, synthetic_glyph_source,
    write_components_tsv, write_dataset_tsv, BatchSpec, SyntheticDatasetSpec,
};
use ceclcnn::glyph::{load_font, GlyphSource};
use ceclcnn::model::{init_params, ModelConfig};
use ceclcnn::train::{evaluate, load_checkpoint, train, train_from, TrainConfig};
use ceclcnn::Error as CoreError;

use config::{resolve, resolve_on_off, resolve_opt, resolve_required, resolve_switch, FileConfig};
use util::{display_char, glyph_to_pgm, parse_char_token, read_charset};

#[derive(Debug)]
pub enum CliError {
    Core(CoreError),
    Msg(String),
}

impl CliError {
    pub fn msg(m: impl Into<String>) -> Self {
        CliError::Msg(m.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(CoreError::NonFiniteLoss { .. }) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => e.fmt(f),
            CliError::Msg(m) => f.write_str(m),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(CoreError::Io(e))
    }
}

type CliResult<T> = Result<T, CliError>;

/// Prefix an error with the file it refers to, for loaders whose errors
/// do not already carry their path (corpus and checkpoint reads).
fn at_path(what: &str, path: &Path, e: impl fmt::Display) -> CliError {
    CliError::msg(format!("{what} {}: {e}", path.display()))
}

#[derive(Parser)]
#[command(
    name = "ceclcnn",
    version,
    about = "Character-level text classification on rendered glyph images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a classifier; writes metrics.csv, last.ckpt and best.ckpt
    Train(TrainArgs),
    /// Evaluate a checkpoint on a corpus; prints accuracy=<float>
    Eval(EvalArgs),
    /// Nearest characters to a query, by embedding distance
    Neighbors(NeighborsArgs),
    /// Write a charset's embeddings as CSV for external projection
    ExportEmbeddings(ExportEmbeddingsArgs),
    /// Generate a synthetic compositional corpus as TSV
    SynthData(SynthDataArgs),
    /// Rasterize characters to PGM images
    GlyphPreview(GlyphPreviewArgs),
}

/// Glyph provider shared by every subcommand that rasterizes: a real font
/// or the regenerated synthetic component library.
#[derive(Args)]
struct SourceArgs {
    /// Font file (.ttf/.otf) to rasterize characters with
    #[arg(long, value_name = "PATH")]
    font: Option<PathBuf>,
    /// Use synthetic glyphs: component library size of the corpus
    #[arg(long, value_name = "N")]
    synth_components: Option<u32>,
    /// Seed the synthetic corpus was generated with [default: 13]
    #[arg(long, value_name = "SEED")]
    synth_seed: Option<u64>,
}

fn resolve_source(args: &SourceArgs, file: &mut FileConfig) -> CliResult<GlyphSource> {
    let font = resolve_opt(args.font.clone(), file, "font")?;
    let components = resolve_opt(args.synth_components, file, "synth-components")?;
    let synth_seed = resolve(args.synth_seed, file, "synth-seed", 13u64)?;
    match (font, components) {
        (Some(path), None) => Ok(load_font(&path)?),
        (None, Some(n)) => Ok(synthetic_glyph_source(n, synth_seed)?),
        (Some(_), Some(_)) => {
            Err(CliError::msg("pass either --font or --synth-components, not both"))
        }
        (None, None) => Err(CliError::msg(
            "a glyph source is required: --font PATH or --synth-components N",
        )),
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Config file of key=value lines; flags override it
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Corpus TSV, one `label<TAB>text` line per document
    #[arg(long, value_name = "PATH")]
    corpus: Option<PathBuf>,
    /// Train on a generated synthetic corpus instead of --corpus
    #[arg(long)]
    synthetic: bool,
    /// Font file (.ttf/.otf); required with --corpus
    #[arg(long, value_name = "PATH")]
    font: Option<PathBuf>,

    /// Character embedding width d_CE [default: 128]
    #[arg(long, value_name = "N")]
    d_ce: Option<usize>,
    /// Encoder batching window C; pure batching knob [default: 10]
    #[arg(long, value_name = "N")]
    chunk: Option<usize>,
    /// Document length D: pad/truncate every document to this [default: 126]
    #[arg(long, value_name = "N")]
    doc_len: Option<usize>,

    /// Total epochs to reach, including any resumed ones [default: 10]
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
    /// Adam step size alpha [default: 0.001]
    #[arg(long, value_name = "X")]
    learning_rate: Option<f64>,
    /// Base seed: weight init, batch order, augmentation streams [default: 0]
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Minibatch size B, in documents [default: 256]
    #[arg(long, value_name = "N")]
    batch_size: Option<usize>,
    /// Batch order seed [default: the --seed value]
    #[arg(long, value_name = "SEED")]
    shuffle_seed: Option<u64>,
    /// Drop the final short batch of each epoch [default: false]
    #[arg(long)]
    drop_last: bool,
    /// Evaluate every N epochs, 0 = never [default: 1]
    #[arg(long, value_name = "N")]
    eval_every: Option<usize>,
    /// Fraction of the corpus used for training [default: 0.8]
    #[arg(long, value_name = "X")]
    train_fraction: Option<f64>,
    /// Seed for the train/test split [default: 0]
    #[arg(long, value_name = "SEED")]
    split_seed: Option<u64>,

    /// Random-erasing fire probability p [default: 0.3]
    #[arg(long, value_name = "X")]
    erase_p: Option<f64>,
    /// Erased-area fraction lower bound s_l [default: 0.02]
    #[arg(long, value_name = "X")]
    erase_area_min: Option<f64>,
    /// Erased-area fraction upper bound s_h [default: 0.4]
    #[arg(long, value_name = "X")]
    erase_area_max: Option<f64>,
    /// Erased-rectangle aspect lower bound r_1 [default: 0.3]
    #[arg(long, value_name = "X")]
    erase_aspect_min: Option<f64>,
    /// Erased-rectangle aspect upper bound r_2 [default: 2.0]
    #[arg(long, value_name = "X")]
    erase_aspect_max: Option<f64>,
    /// Wildcard zeroing probability gamma_w [default: 0.1]
    #[arg(long, value_name = "X")]
    gamma_w: Option<f64>,
    /// Enable random erasing [default: on]
    #[arg(long, conflicts_with = "no_random_erasing")]
    random_erasing: bool,
    /// Disable random erasing
    #[arg(long)]
    no_random_erasing: bool,
    /// Enable wildcard training [default: on]
    #[arg(long, conflicts_with = "no_wildcard")]
    wildcard: bool,
    /// Disable wildcard training
    #[arg(long)]
    no_wildcard: bool,
    /// Wildcard whole character columns instead of single elements [default: false]
    #[arg(long)]
    wildcard_per_character: bool,
    /// Rescale surviving wildcard elements by 1/(1-gamma_w) [default: false]
    #[arg(long)]
    wildcard_rescale: bool,

    /// Directory for metrics.csv, last.ckpt, best.ckpt [default: run]
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Resume from a checkpoint; --epochs is the new total
    #[arg(long, value_name = "PATH")]
    resume: Option<PathBuf>,
    /// Suppress per-epoch progress lines [default: false]
    #[arg(long)]
    quiet: bool,

    /// Synthetic corpus: number of classes [default: 4]
    #[arg(long, value_name = "N")]
    synth_classes: Option<usize>,
    /// Synthetic corpus: training characters per class [default: 20]
    #[arg(long, value_name = "N")]
    synth_chars_per_class: Option<usize>,
    /// Synthetic corpus: reserved unseen characters per class [default: 5]
    #[arg(long, value_name = "N")]
    synth_holdout_per_class: Option<usize>,
    /// Synthetic corpus: documents per class [default: 100]
    #[arg(long, value_name = "N")]
    synth_docs_per_class: Option<usize>,
    /// Synthetic corpus: characters per document [default: 30]
    #[arg(long, value_name = "N")]
    synth_doc_length: Option<usize>,
    /// Synthetic corpus: component library size [default: 40]
    #[arg(long, value_name = "N")]
    synth_components: Option<u32>,
    /// Synthetic corpus: generation seed [default: 13]
    #[arg(long, value_name = "SEED")]
    synth_seed: Option<u64>,
}

impl TrainArgs {
    fn any_synth_flag(&self) -> bool {
        self.synth_classes.is_some()
            || self.synth_chars_per_class.is_some()
            || self.synth_holdout_per_class.is_some()
            || self.synth_docs_per_class.is_some()
            || self.synth_doc_length.is_some()
            || self.synth_components.is_some()
            || self.synth_seed.is_some()
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Config file of key=value lines; flags override it
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Checkpoint to evaluate
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Corpus TSV to evaluate on
    #[arg(long, value_name = "PATH")]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    source: SourceArgs,
}

#[derive(Args)]
struct NeighborsArgs {
    /// Config file of key=value lines; flags override it
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Checkpoint whose encoder embeds the charset
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Charset file: one character or U+XXXX per line
    #[arg(long, value_name = "PATH")]
    charset: Option<PathBuf>,
    /// Query character (literal or U+XXXX); must be in the charset
    #[arg(long, value_name = "CHAR")]
    query: Option<String>,
    /// Number of neighbors to print [default: 5]
    #[arg(long, value_name = "N")]
    k: Option<usize>,
    /// Aligned human-readable table instead of char<TAB>distance lines
    #[arg(long)]
    pretty: bool,
    #[command(flatten)]
    source: SourceArgs,
}

#[derive(Args)]
struct ExportEmbeddingsArgs {
    /// Config file of key=value lines; flags override it
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Checkpoint whose encoder embeds the charset
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Charset file: one character or U+XXXX per line
    #[arg(long, value_name = "PATH")]
    charset: Option<PathBuf>,
    /// Output CSV path (header codepoint_hex,v0,...)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(flatten)]
    source: SourceArgs,
}

#[derive(Args)]
struct SynthDataArgs {
    /// Config file of key=value lines; flags override it
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Number of classes [default: 4]
    #[arg(long, value_name = "N")]
    classes: Option<usize>,
    /// Training characters per class [default: 20]
    #[arg(long, value_name = "N")]
    chars_per_class: Option<usize>,
    /// Reserved unseen characters per class [default: 5]
    #[arg(long, value_name = "N")]
    holdout_per_class: Option<usize>,
    /// Documents per class [default: 100]
    #[arg(long, value_name = "N")]
    docs_per_class: Option<usize>,
    /// Characters per document [default: 30]
    #[arg(long, value_name = "N")]
    doc_length: Option<usize>,
    /// Component library size [default: 40]
    #[arg(long, value_name = "N")]
    components: Option<u32>,
    /// Generation seed [default: 13]
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Output corpus TSV path
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Also write the codepoint -> components table here
    #[arg(long, value_name = "PATH")]
    components_out: Option<PathBuf>,
    /// Also write a charset file (training + holdout characters) here
    #[arg(long, value_name = "PATH")]
    charset_out: Option<PathBuf>,
    /// Also generate documents of purely holdout characters [default: 0]
    #[arg(long, value_name = "N")]
    holdout_docs: Option<usize>,
    /// Output TSV for --holdout-docs
    #[arg(long, value_name = "PATH")]
    holdout_out: Option<PathBuf>,
    /// Seed for --holdout-docs generation [default: 1]
    #[arg(long, value_name = "SEED")]
    holdout_seed: Option<u64>,
}

#[derive(Args)]
struct GlyphPreviewArgs {
    /// Config file of key=value lines; flags override it
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Characters to render (literal or U+XXXX)
    #[arg(value_name = "CHAR", num_args = 1..)]
    chars: Vec<String>,
    /// Directory for the U+XXXX.pgm files [default: .]
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    source: SourceArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Neighbors(args) => cmd_neighbors(args),
        Command::ExportEmbeddings(args) => cmd_export_embeddings(args),
        Command::SynthData(args) => cmd_synth_data(args),
        Command::GlyphPreview(args) => cmd_glyph_preview(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let mut file = FileConfig::load(args.config.as_deref())?;

    let synthetic = resolve_switch(args.synthetic, &mut file, "synthetic", false)?;
    let corpus = resolve_opt(args.corpus.clone(), &mut file, "corpus")?;
    let font = resolve_opt(args.font.clone(), &mut file, "font")?;

    let d_ce = resolve_opt(args.d_ce, &mut file, "d-ce")?;
    let chunk = resolve_opt(args.chunk, &mut file, "chunk")?;
    let doc_len = resolve_opt(args.doc_len, &mut file, "doc-len")?;

    let epochs = resolve(args.epochs, &mut file, "epochs", 10usize)?;
    let learning_rate = resolve_opt(args.learning_rate, &mut file, "learning-rate")?;
    let seed = resolve_opt(args.seed, &mut file, "seed")?;
    let batch_size = resolve(args.batch_size, &mut file, "batch-size", 256usize)?;
    let shuffle_seed = resolve_opt(args.shuffle_seed, &mut file, "shuffle-seed")?;
    let drop_last = resolve_switch(args.drop_last, &mut file, "drop-last", false)?;
    let eval_every = resolve(args.eval_every, &mut file, "eval-every", 1usize)?;
    let train_fraction = resolve(args.train_fraction, &mut file, "train-fraction", 0.8f64)?;
    let split_seed = resolve(args.split_seed, &mut file, "split-seed", 0u64)?;

    let random_erasing = RandomErasingConfig {
        p: resolve(args.erase_p, &mut file, "erase-p", 0.3)?,
        area_min: resolve(args.erase_area_min, &mut file, "erase-area-min", 0.02)?,
        area_max: resolve(args.erase_area_max, &mut file, "erase-area-max", 0.4)?,
        aspect_min: resolve(args.erase_aspect_min, &mut file, "erase-aspect-min", 0.3)?,
        aspect_max: resolve(args.erase_aspect_max, &mut file, "erase-aspect-max", 2.0)?,
    };
    let wildcard = WildcardConfig {
        gamma_w: resolve(args.gamma_w, &mut file, "gamma-w", 0.1)?,
        granularity: if resolve_switch(
            args.wildcard_per_character,
            &mut file,
            "wildcard-per-character",
            false,
        )? {
            WildcardGranularity::PerCharacter
        } else {
            WildcardGranularity::PerElement
        },
        rescale_survivors: resolve_switch(
            args.wildcard_rescale,
            &mut file,
            "wildcard-rescale",
            false,
        )?,
    };
    let use_random_erasing =
        resolve_on_off(args.random_erasing, args.no_random_erasing, &mut file, "random-erasing", true)?;
    let use_wildcard =
        resolve_on_off(args.wildcard, args.no_wildcard, &mut file, "wildcard", true)?;

    let out_dir = resolve(args.out_dir.clone(), &mut file, "out-dir", PathBuf::from("run"))?;
    let resume = resolve_opt(args.resume.clone(), &mut file, "resume")?;
    let quiet = resolve_switch(args.quiet, &mut file, "quiet", false)?;

    let (dataset, source) = if synthetic {
        if corpus.is_some() {
            return Err(CliError::msg("--synthetic conflicts with --corpus"));
        }
        if font.is_some() {
            return Err(CliError::msg(
                "--synthetic renders its own glyphs; --font is not applicable",
            ));
        }
        let spec = SyntheticDatasetSpec {
            num_classes: resolve(args.synth_classes, &mut file, "synth-classes", 4)?,
            chars_per_class: resolve(
                args.synth_chars_per_class,
                &mut file,
                "synth-chars-per-class",
                20,
            )?,
            docs_per_class: resolve(
                args.synth_docs_per_class,
                &mut file,
                "synth-docs-per-class",
                100,
            )?,
            doc_length: resolve(args.synth_doc_length, &mut file, "synth-doc-length", 30)?,
            component_count: resolve(args.synth_components, &mut file, "synth-components", 40)?,
            holdout_chars_per_class: resolve(
                args.synth_holdout_per_class,
                &mut file,
                "synth-holdout-per-class",
                5,
            )?,
            seed: resolve(args.synth_seed, &mut file, "synth-seed", 13)?,
        };
        let bundle = generate_synthetic(&spec)?;
        (bundle.dataset, bundle.source)
    } else {
        if args.any_synth_flag() {
            return Err(CliError::msg("synth-* options require --synthetic"));
        }
        let Some(corpus) = corpus else {
            return Err(CliError::msg("a corpus is required: --corpus PATH or --synthetic"));
        };
        let Some(font) = font else {
            return Err(CliError::msg("--font is required when training on a corpus"));
        };
        (load_tsv(&corpus).map_err(|e| at_path("corpus", &corpus, e))?, load_font(&font)?)
    };
    file.finish()?;

    let num_classes = dataset.num_classes();
    // 1.0 means "train on everything": no test split exists, and the
    // final accuracy falls back to the training set below.
    let (train_set, test_set) = if train_fraction >= 1.0 {
        let empty = ceclcnn::data::Dataset {
            documents: Vec::new(),
            class_names: dataset.class_names.clone(),
        };
        (dataset, empty)
    } else {
        split(&dataset, train_fraction, split_seed)?
    };

    // Resumed runs inherit the checkpoint's geometry and seed; explicit
    // flags must agree with it rather than silently diverge.
    struct Start {
        model: ceclcnn::model::CeClcnn<f32>,
        adam: Option<(ceclcnn::AdamState<f32>, u64)>,
        seed: u64,
    }
    let start = match &resume {
        None => {
            let seed = seed.unwrap_or(0);
            let config = ModelConfig {
                d_ce: d_ce.unwrap_or(128),
                chunk: chunk.unwrap_or(10),
                doc_len: doc_len.unwrap_or(126),
                num_classes,
            };
            Start { model: init_params(config, seed)?, adam: None, seed }
        }
        Some(path) => {
            let ckpt = load_checkpoint::<f32>(path).map_err(|e| at_path("checkpoint", path, e))?;
            let c = ckpt.model.config;
            for (name, given, stored) in [
                ("--d-ce", d_ce, c.d_ce),
                ("--chunk", chunk, c.chunk),
                ("--doc-len", doc_len, c.doc_len),
            ] {
                if let Some(v) = given {
                    if v != stored {
                        return Err(CliError::msg(format!(
                            "{name} {v} differs from the checkpoint's {stored}; drop the flag or retrain"
                        )));
                    }
                }
            }
            if c.num_classes != num_classes {
                return Err(CliError::msg(format!(
                    "checkpoint expects {} classes, corpus has {num_classes}",
                    c.num_classes
                )));
            }
            if let Some(s) = seed {
                if s != ckpt.progress.base_seed {
                    return Err(CliError::msg(format!(
                        "--seed {s} differs from the checkpoint's base seed {}; a resumed run must keep it",
                        ckpt.progress.base_seed
                    )));
                }
            }
            if ckpt.progress.next_epoch >= epochs as u64 {
                return Err(CliError::msg(format!(
                    "checkpoint already completed {} epochs; raise --epochs above that",
                    ckpt.progress.next_epoch
                )));
            }
            let mut adam = ckpt.adam;
            if let Some(lr) = learning_rate {
                adam.alpha = lr as f32;
            }
            Start {
                seed: ckpt.progress.base_seed,
                model: ckpt.model,
                adam: Some((adam, ckpt.progress.next_epoch)),
            }
        }
    };

    let cfg = TrainConfig {
        epochs,
        learning_rate: learning_rate.unwrap_or(1e-3),
        seed: start.seed,
        use_random_erasing,
        use_wildcard,
        random_erasing,
        wildcard,
        batch: BatchSpec {
            batch_size,
            shuffle_seed: shuffle_seed.unwrap_or(start.seed),
            drop_last,
        },
        eval_every,
        checkpoint_dir: Some(out_dir.clone()),
        verbose: !quiet,
    };
    std::fs::create_dir_all(&out_dir)?;

    let history = match start.adam {
        None => train(&start.model, &train_set, &test_set, &cfg, &source)?,
        Some((mut adam, next_epoch)) => {
            train_from(&start.model, &mut adam, next_epoch, &train_set, &test_set, &cfg, &source)?
        }
    };
    history.write_csv(&out_dir.join("metrics.csv"))?;

    let accuracy = if test_set.is_empty() {
        eprintln!("test split is empty; reporting training-set accuracy");
        evaluate(&start.model, &train_set, &source)?
    } else {
        evaluate(&start.model, &test_set, &source)?
    };
    println!("accuracy={accuracy}");
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    let mut file = FileConfig::load(args.config.as_deref())?;
    let checkpoint: PathBuf = resolve_required(args.checkpoint.clone(), &mut file, "checkpoint")?;
    let corpus: PathBuf = resolve_required(args.corpus.clone(), &mut file, "corpus")?;
    let source = resolve_source(&args.source, &mut file)?;
    file.finish()?;

    let ckpt =
        load_checkpoint::<f32>(&checkpoint).map_err(|e| at_path("checkpoint", &checkpoint, e))?;
    let dataset = load_tsv(&corpus).map_err(|e| at_path("corpus", &corpus, e))?;
    if dataset.num_classes() != ckpt.model.config.num_classes {
        return Err(CliError::msg(format!(
            "corpus has {} classes, checkpoint expects {}",
            dataset.num_classes(),
            ckpt.model.config.num_classes
        )));
    }
    let accuracy = evaluate(&ckpt.model, &dataset, &source)?;
    println!("accuracy={accuracy}");
    Ok(())
}

fn cmd_neighbors(args: NeighborsArgs) -> CliResult<()> {
    let mut file = FileConfig::load(args.config.as_deref())?;
    let checkpoint: PathBuf = resolve_required(args.checkpoint.clone(), &mut file, "checkpoint")?;
    let charset: PathBuf = resolve_required(args.charset.clone(), &mut file, "charset")?;
    let query: String = resolve_required(args.query.clone(), &mut file, "query")?;
    let k = resolve(args.k, &mut file, "k", 5usize)?;
    let pretty = resolve_switch(args.pretty, &mut file, "pretty", false)?;
    let source = resolve_source(&args.source, &mut file)?;
    file.finish()?;

    let codepoints = read_charset(&charset)?;
    let query_cp = parse_char_token(&query)?;
    let ckpt =
        load_checkpoint::<f32>(&checkpoint).map_err(|e| at_path("checkpoint", &checkpoint, e))?;
    let matrix = analysis::embed_charset(&ckpt.model, &codepoints, &source)?;
    let neighbors = analysis::nearest_neighbors(&matrix, query_cp, k)?;
    for (cp, distance) in neighbors {
        if pretty {
            println!("U+{cp:04X}  {distance:>12.4}  {}", display_char(cp));
        } else {
            println!("{}\t{distance}", display_char(cp));
        }
    }
    Ok(())
}

fn cmd_export_embeddings(args: ExportEmbeddingsArgs) -> CliResult<()> {
    let mut file = FileConfig::load(args.config.as_deref())?;
    let checkpoint: PathBuf = resolve_required(args.checkpoint.clone(), &mut file, "checkpoint")?;
    let charset: PathBuf = resolve_required(args.charset.clone(), &mut file, "charset")?;
    let out: PathBuf = resolve_required(args.out.clone(), &mut file, "out")?;
    let source = resolve_source(&args.source, &mut file)?;
    file.finish()?;

    let codepoints = read_charset(&charset)?;
    let ckpt =
        load_checkpoint::<f32>(&checkpoint).map_err(|e| at_path("checkpoint", &checkpoint, e))?;
    let matrix = analysis::embed_charset(&ckpt.model, &codepoints, &source)?;
    analysis::export_embeddings(&matrix, &out)?;
    eprintln!("wrote {} embeddings of width {} to {}", matrix.len(), matrix.dim(), out.display());
    Ok(())
}

fn cmd_synth_data(args: SynthDataArgs) -> CliResult<()> {
    let mut file = FileConfig::load(args.config.as_deref())?;
    let spec = SyntheticDatasetSpec {
        num_classes: resolve(args.classes, &mut file, "classes", 4)?,
        chars_per_class: resolve(args.chars_per_class, &mut file, "chars-per-class", 20)?,
        docs_per_class: resolve(args.docs_per_class, &mut file, "docs-per-class", 100)?,
        doc_length: resolve(args.doc_length, &mut file, "doc-length", 30)?,
        component_count: resolve(args.components, &mut file, "components", 40)?,
        holdout_chars_per_class: resolve(args.holdout_per_class, &mut file, "holdout-per-class", 5)?,
        seed: resolve(args.seed, &mut file, "seed", 13)?,
    };
    let out: PathBuf = resolve_required(args.out.clone(), &mut file, "out")?;
    let components_out = resolve_opt(args.components_out.clone(), &mut file, "components-out")?;
    let charset_out = resolve_opt(args.charset_out.clone(), &mut file, "charset-out")?;
    let holdout_docs = resolve(args.holdout_docs, &mut file, "holdout-docs", 0usize)?;
    let holdout_out = resolve_opt(args.holdout_out.clone(), &mut file, "holdout-out")?;
    let holdout_seed = resolve(args.holdout_seed, &mut file, "holdout-seed", 1u64)?;
    file.finish()?;

    let bundle = generate_synthetic(&spec)?;
    write_dataset_tsv(&bundle.dataset, &out)?;
    eprintln!("wrote {} documents to {}", bundle.dataset.len(), out.display());

    if let Some(path) = components_out {
        write_components_tsv(&bundle, &path)?;
        eprintln!("wrote component table to {}", path.display());
    }
    if let Some(path) = charset_out {
        let mut text = String::from("# charset: one character per line (U+XXXX form)\n");
        for chars in bundle.class_chars.iter().chain(bundle.holdout_chars.iter()) {
            for &cp in chars {
                text.push_str(&format!("U+{cp:04X}\n"));
            }
        }
        std::fs::write(&path, text)?;
        eprintln!("wrote charset to {}", path.display());
    }
    if holdout_docs > 0 {
        let Some(path) = holdout_out else {
            return Err(CliError::msg("--holdout-docs needs --holdout-out PATH"));
        };
        let ds = holdout_documents(&bundle, holdout_docs, spec.doc_length, holdout_seed)?;
        write_dataset_tsv(&ds, &path)?;
        eprintln!("wrote {} holdout documents to {}", ds.len(), path.display());
    } else if holdout_out.is_some() {
        return Err(CliError::msg("--holdout-out needs --holdout-docs N"));
    }
    Ok(())
}

fn cmd_glyph_preview(args: GlyphPreviewArgs) -> CliResult<()> {
    let mut file = FileConfig::load(args.config.as_deref())?;
    let out_dir = resolve(args.out_dir.clone(), &mut file, "out-dir", PathBuf::from("."))?;
    let source = resolve_source(&args.source, &mut file)?;
    file.finish()?;

    if args.chars.is_empty() {
        return Err(CliError::msg("pass at least one character to render"));
    }
    std::fs::create_dir_all(&out_dir)?;
    for token in &args.chars {
        let cp = parse_char_token(token)?;
        let img = source.rasterize(cp);
        let path = out_dir.join(format!("U+{cp:04X}.pgm"));
        std::fs::write(&path, glyph_to_pgm(&img))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}
