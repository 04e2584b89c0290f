use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use querytag::datagen::{
    distant_label, distant_label_all, generate_miniworld, generate_synthetic, stratified_sample, AmbiguousLexicon,
    MiniWorldConfig,
};
use querytag::dataset::{split_golden, Catalog, Dataset, Source};
use querytag::embeddings::{load_embeddings, nearest_neighbors};
use querytag::model_io::{load_model, save_model};
use querytag::net::{init_params, Vocab};
use querytag::preprocess::tokenize;
use querytag::train::{evaluate_f1, train_model, EvalReport, Scores};
use querytag::triplelearn::{one_pass_baseline, run_triplelearn, IterationReport, NeuralTrainer};
use serde_json::json;

use crate::config::RunConfig;
use crate::service::{self, tag_query, ServiceState, TagResponse};

#[derive(Debug, Parser)]
#[command(
    name = "querytag",
    version,
    about = "Brand and product-type tagging for search queries"
)]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CatalogArgs {
    /// Brand list, one entry per line.
    #[arg(long)]
    brands: PathBuf,
    /// Product-type list, one entry per line.
    #[arg(long)]
    product_types: PathBuf,
}

impl CatalogArgs {
    fn load(&self) -> Result<Catalog> {
        Catalog::read(&self.brands, &self.product_types).context("reading catalog")
    }
}

#[derive(Debug, Args)]
pub struct QueryInput {
    /// A single raw query.
    #[arg(long, conflicts_with = "input")]
    query: Option<String>,
    /// File with one raw query per line.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output file for --input (JSON lines); stdout when absent.
    #[arg(long, requires = "input")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded mini-world: catalog, golden, noisy and synthetic data.
    GenMiniworld {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        brands: usize,
        #[arg(long, default_value_t = 50)]
        product_types: usize,
        #[arg(long, default_value_t = 500)]
        golden: usize,
        #[arg(long, default_value_t = 5000)]
        noisy: usize,
        #[arg(long, default_value_t = 0.15)]
        noise_rate: f64,
        #[arg(long, default_value_t = 0.05)]
        ambiguity_rate: f64,
        #[arg(long, default_value_t = 0.15)]
        decoy_rate: f64,
    },
    /// One labeled query per catalog entry.
    GenSynthetic {
        #[command(flatten)]
        catalog: CatalogArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label raw queries (one per line) by greedy catalog matching.
    GenNoisy {
        #[command(flatten)]
        catalog: CatalogArgs,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a sequence-pattern-stratified sample from a dataset.
    Sample {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        n: usize,
        /// Output dataset; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model with dev-F1 early stopping.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// key = value configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Pretrained word vectors; width must match word_emb.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Catalog whose fingerprint is stored in the model.
        #[arg(long, requires = "product_types")]
        brands: Option<PathBuf>,
        #[arg(long, requires = "brands")]
        product_types: Option<PathBuf>,
    },
    /// Iterative training over golden, noisy and synthetic datasets.
    Triplelearn {
        #[arg(long)]
        golden: PathBuf,
        #[arg(long)]
        noisy: PathBuf,
        #[arg(long)]
        synthetic: PathBuf,
        #[command(flatten)]
        catalog: CatalogArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where to save the best model.
        #[arg(long)]
        out: PathBuf,
        /// Append per-iteration JSON lines here instead of stdout.
        #[arg(long)]
        reports: Option<PathBuf>,
        /// Also train and score the one-pass baseline.
        #[arg(long)]
        baseline: bool,
    },
    /// Exact-match F1 of a prediction file against a gold file.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
    /// Tag queries with a trained model.
    Tag {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        input: QueryInput,
        #[arg(long, default_value_t = service::DEFAULT_MAX_TOKENS)]
        max_tokens: usize,
    },
    /// Tag queries with the legacy greedy catalog matcher.
    BaselineTag {
        #[command(flatten)]
        catalog: CatalogArgs,
        #[command(flatten)]
        input: QueryInput,
    },
    /// Run the HTTP tagging service.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Longer queries are truncated to this many tokens.
        #[arg(long, default_value_t = service::DEFAULT_MAX_TOKENS)]
        max_tokens: usize,
    },
    /// Nearest neighbors and vocab coverage of a word-vector file.
    InspectEmb {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        word: Option<String>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Dataset whose tokens define the vocab for the coverage percentage.
        #[arg(long)]
        vocab_from: Option<PathBuf>,
    },
}

/// Parses `args` and runs the command. Errors print one line to stderr.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli, &mut io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    Dataset::read(path, true).with_context(|| format!("reading {}", path.display()))
}

fn load_config(seed: u64, path: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = RunConfig::with_seed(seed);
    if let Some(p) = path {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        cfg.apply_text(&text, p)?;
    }
    Ok(cfg)
}

fn queries(input: &QueryInput) -> Result<Vec<String>> {
    match (&input.query, &input.input) {
        (Some(q), None) => Ok(vec![q.clone()]),
        (None, Some(p)) => {
            let f = fs::File::open(p).with_context(|| format!("reading {}", p.display()))?;
            io::BufReader::new(f)
                .lines()
                .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
                .map(|l| l.map_err(Into::into))
                .collect()
        }
        _ => bail!("give either --query or --input"),
    }
}

fn emit_responses(input: &QueryInput, responses: &[TagResponse], out: &mut dyn Write) -> Result<()> {
    let mut file;
    let sink: &mut dyn Write = match &input.out {
        Some(p) => {
            file = io::BufWriter::new(fs::File::create(p)?);
            &mut file
        }
        None => out,
    };
    for r in responses {
        if input.query.is_some() {
            writeln!(sink, "{}", serde_json::to_string_pretty(r)?)?;
        } else {
            writeln!(sink, "{}", serde_json::to_string(r)?)?;
        }
    }
    sink.flush()?;
    Ok(())
}

fn scores_json(s: &Scores) -> serde_json::Value {
    json!({"precision": s.precision, "recall": s.recall, "f1": s.f1, "tp": s.tp, "fp": s.fp, "fn": s.fn_})
}

pub fn report_json(r: &EvalReport) -> serde_json::Value {
    let mut v = scores_json(&r.micro);
    v["brand"] = scores_json(&r.brand);
    v["product"] = scores_json(&r.product);
    v
}

fn eval_table(r: &EvalReport, out: &mut dyn Write) -> io::Result<()> {
    writeln!(
        out,
        "{:<6} {:>9} {:>7} {:>7} {:>6} {:>6} {:>6}",
        "type", "precision", "recall", "f1", "tp", "fp", "fn"
    )?;
    for (name, s) in [("BRD", &r.brand), ("PRD", &r.product), ("micro", &r.micro)] {
        writeln!(
            out,
            "{:<6} {:>9.2} {:>7.2} {:>7.2} {:>6} {:>6} {:>6}",
            name, s.precision, s.recall, s.f1, s.tp, s.fp, s.fn_
        )?;
    }
    Ok(())
}

pub fn iteration_json(r: &IterationReport) -> serde_json::Value {
    json!({
        "iteration": r.iteration,
        "training": r.training_size,
        "unique_brd": r.unique_brd,
        "unique_prd": r.unique_prd,
        "added_synthetic": r.added_synthetic,
        "added_noisy": r.added_noisy,
        "rejected_noisy": r.rejected_noisy,
        "dev_f1": r.dev.f1(),
        "test_f1": r.test.f1(),
    })
}

fn iteration_table(reports: &[IterationReport], out: &mut dyn Write) -> io::Result<()> {
    writeln!(
        out,
        "{:>4} {:>9} {:>9} {:>9} {:>7} {:>7}",
        "iter", "training", "unq. BRD", "unq. PRD", "dev F1", "test F1"
    )?;
    for r in reports {
        writeln!(
            out,
            "{:>4} {:>9} {:>9} {:>9} {:>7.2} {:>7.2}",
            r.iteration,
            r.training_size,
            r.unique_brd,
            r.unique_prd,
            r.dev.f1(),
            r.test.f1()
        )?;
    }
    Ok(())
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::GenMiniworld {
            out: dir,
            brands,
            product_types,
            golden,
            noisy,
            noise_rate,
            ambiguity_rate,
            decoy_rate,
        } => {
            let cfg = MiniWorldConfig {
                n_brands: brands,
                n_product_types: product_types,
                n_golden: golden,
                n_noisy: noisy,
                n_synthetic: brands + product_types,
                noise_rate,
                ambiguity_rate,
                decoy_rate,
                seed,
                ..Default::default()
            };
            let w = generate_miniworld(&cfg)?;
            fs::create_dir_all(&dir)?;
            w.catalog.write(dir.join("brands.txt"), dir.join("product_types.txt"))?;
            w.golden.write(dir.join("golden.tsv"))?;
            w.noisy.write(dir.join("noisy.tsv"))?;
            w.synthetic.write(dir.join("synthetic.tsv"))?;
            writeln!(
                out,
                "wrote {} brands, {} product types, {} golden, {} noisy, {} synthetic to {}",
                w.catalog.brands.len(),
                w.catalog.product_types.len(),
                w.golden.len(),
                w.noisy.len(),
                w.synthetic.len(),
                dir.display()
            )?;
        }
        Command::GenSynthetic { catalog, out: path } => {
            let d = generate_synthetic(&catalog.load()?)?;
            d.write(&path)?;
            writeln!(out, "wrote {} synthetic queries to {}", d.len(), path.display())?;
        }
        Command::GenNoisy {
            catalog,
            queries: qpath,
            out: path,
        } => {
            let catalog = catalog.load()?;
            let text = fs::read_to_string(&qpath).with_context(|| format!("reading {}", qpath.display()))?;
            let tokens: Vec<Vec<String>> = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(tokenize)
                .collect::<querytag::Result<_>>()?;
            let d = distant_label_all(tokens.iter().map(Vec::as_slice), &catalog)?;
            d.write(&path)?;
            writeln!(out, "wrote {} noisy queries to {}", d.len(), path.display())?;
        }
        Command::Sample { input, n, out: path } => {
            let d = stratified_sample(&read_dataset(&input)?, n, seed);
            match path {
                Some(p) => d.write(p)?,
                None => d.write_to(&mut &mut *out)?,
            }
        }
        Command::Train {
            train,
            dev,
            out: path,
            config,
            embeddings,
            brands,
            product_types,
        } => {
            let cfg = load_config(seed, config.as_deref())?;
            let train = read_dataset(&train)?;
            let dev = read_dataset(&dev)?;
            let pretrained = embeddings.map(|p| load_embeddings(&p, cfg.dims.word_emb)).transpose()?;
            let vocab = Arc::new(Vocab::from_queries(train.iter()));
            let params0 = init_params(&cfg.dims, cfg.flags, vocab, pretrained.as_ref(), cfg.init_seed)?;
            let outcome = train_model(&train, &dev, params0, &cfg.train)?;
            let fingerprint = match (brands, product_types) {
                (Some(b), Some(p)) => Catalog::read(b, p)?.fingerprint(),
                _ => [0; 32],
            };
            save_model(&outcome.best, &fingerprint, &path)?;
            for (epoch, (r, loss)) in outcome.history.iter().zip(&outcome.losses).enumerate() {
                writeln!(out, "{}", json!({"epoch": epoch + 1, "loss": loss, "dev_f1": r.f1()}))?;
            }
            writeln!(
                out,
                "best epoch {} (dev F1 {:.2}); model saved to {}",
                outcome.best_epoch + 1,
                outcome.history[outcome.best_epoch].f1(),
                path.display()
            )?;
        }
        Command::Triplelearn {
            golden,
            noisy,
            synthetic,
            catalog,
            config,
            out: path,
            reports,
            baseline,
        } => {
            let cfg = load_config(seed, config.as_deref())?;
            let catalog = catalog.load()?;
            let split = split_golden(&read_dataset(&golden)?, cfg.split_seed)?;
            let noisy = read_dataset(&noisy)?;
            let synthetic = read_dataset(&synthetic)?;
            let lexicon = AmbiguousLexicon::from_catalog(&catalog);
            let mut trainer = NeuralTrainer::new(cfg.dims, cfg.flags, cfg.train.clone(), cfg.init_seed);
            let outcome = run_triplelearn(
                &split,
                &noisy,
                &synthetic,
                &lexicon,
                &catalog,
                &cfg.triplelearn,
                &mut trainer,
            )?;
            {
                let mut file;
                let sink: &mut dyn Write = match &reports {
                    Some(p) => {
                        file = fs::OpenOptions::new().create(true).append(true).open(p)?;
                        &mut file
                    }
                    None => &mut *out,
                };
                for r in &outcome.reports {
                    writeln!(sink, "{}", iteration_json(r))?;
                }
            }
            iteration_table(&outcome.reports, out)?;
            writeln!(
                out,
                "best iteration {} (stop: {:?})",
                outcome.best_iteration, outcome.stop
            )?;
            if baseline {
                let (_, r) = one_pass_baseline(&split, &noisy, &synthetic, &mut trainer)?;
                writeln!(out, "one-pass baseline test F1 {:.2}", r.f1())?;
            }
            save_model(&outcome.best, &catalog.fingerprint(), &path)?;
            writeln!(out, "model saved to {}", path.display())?;
        }
        Command::Eval { pred, gold } => {
            let pred = read_dataset(&pred)?;
            let gold = read_dataset(&gold)?;
            let r = evaluate_f1(&pred.items, &gold.items)?;
            eval_table(&r, out)?;
            writeln!(out, "{}", report_json(&r))?;
        }
        Command::Tag {
            model,
            input,
            max_tokens,
        } => {
            let artifact = load_model(&model).with_context(|| format!("loading {}", model.display()))?;
            let responses = queries(&input)?
                .iter()
                .map(|q| tag_query(&artifact.params, q, max_tokens))
                .collect::<querytag::Result<Vec<_>>>()?;
            emit_responses(&input, &responses, out)?;
        }
        Command::BaselineTag { catalog, input } => {
            let catalog = catalog.load()?;
            let responses = queries(&input)?
                .iter()
                .map(|q| {
                    let tagged = distant_label(&tokenize(q)?, &catalog, Source::Predicted)?;
                    Ok(TagResponse::from_tagged(q, &tagged))
                })
                .collect::<querytag::Result<Vec<_>>>()?;
            emit_responses(&input, &responses, out)?;
        }
        Command::Serve {
            model,
            port,
            host,
            max_tokens,
        } => {
            let artifact = load_model(&model).with_context(|| format!("loading {}", model.display()))?;
            let state = ServiceState::new(artifact, max_tokens);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                    .await
                    .with_context(|| format!("binding {host}:{port}"))?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                service::serve(listener, state).await?;
                anyhow::Ok(())
            })?;
        }
        Command::InspectEmb {
            embeddings,
            dim,
            word,
            k,
            vocab_from,
        } => {
            let table = load_embeddings(&embeddings, dim)?;
            writeln!(out, "{} vectors of width {}", table.len(), table.dim())?;
            if let Some(p) = vocab_from {
                let d = read_dataset(&p)?;
                let vocab = Vocab::from_queries(d.iter());
                writeln!(out, "vocab coverage {:.1}%", table.coverage(&vocab))?;
            }
            if let Some(w) = word {
                for (n, sim) in nearest_neighbors(&table, &w, k)? {
                    writeln!(out, "{n}\t{sim:.4}")?;
                }
            }
        }
    }
    Ok(())
}
