//! `cpg-cds` command-line entry points.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cpg_cds::assets;
use cpg_cds::dataset::Corpus;
use cpg_cds::evaluation::{
    parse_annotations, run_benchmark, write_reports, AgreementReport, BenchmarkReport, RunConfig, CANONICAL_SEEDS,
    DEFAULT_PARALLELISM,
};
use cpg_cds::guideline::{parse_guideline, GuidelineTree, PredicateBindings, StructuredPatientFacts};
use cpg_cds::llm::{BackendConfig, BackendFactory, BackendKind, ScriptedBackend, TranscriptSink};
use cpg_cds::prompt::{Renderer, TemplateSet};
use cpg_cds::strategies::{run_method, MethodKind, RunContext};
use cpg_cds_service::{DataPaths, Resources, ServiceConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "cpg-cds",
    version,
    about = "Guideline-driven clinical decision support with language models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct DataArgs {
    /// Guideline tree JSON (defaults to the bundled tree).
    #[arg(short = 'g', long = "guideline", global = true)]
    pub guideline: Option<PathBuf>,
    /// Node-to-predicate bindings for the simulator.
    #[arg(long, global = true)]
    pub predicates: Option<PathBuf>,
    /// Prompt template set.
    #[arg(long, global = true)]
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a guideline file and print leaf and path counts.
    Validate {
        #[command(flatten)]
        data: DataArgs,
    },
    /// List every root-to-leaf path.
    Paths {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Print the composed prompt for a method.
    Render {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        method: MethodKind,
        #[arg(long)]
        patient_file: Option<PathBuf>,
        /// Node whose question prompt to render (BDT only; defaults to the root).
        #[arg(long)]
        node: Option<String>,
    },
    /// Run one strategy on one patient and print the recommendation and trace.
    Recommend {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        method: MethodKind,
        #[arg(long)]
        patient_file: PathBuf,
        /// Structured facts for the simulator.
        #[arg(long)]
        facts: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the multi-seed benchmark and write report files.
    Bench {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long, value_delimiter = ',', default_values_t = CANONICAL_SEEDS)]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_values_t = MethodKind::ALL)]
        methods: Vec<MethodKind>,
        /// Corpus file (defaults to the bundled 39-case corpus).
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "./out")]
        out: PathBuf,
        #[arg(long = "parallel", default_value_t = DEFAULT_PARALLELISM)]
        parallel: usize,
    },
    /// Inter-rater agreement (Gwet's AC1) per annotation category.
    Agreement {
        /// CSV with columns response_id,rater_id,category,rating.
        #[arg(long)]
        ratings: PathBuf,
    },
    /// Start the HTTP service.
    Serve {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Default rules for scripted requests.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Static UI assets served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Allowed CORS origin (repeatable; any origin when omitted).
        #[arg(long = "cors-origin")]
        cors_origins: Vec<String>,
    },
}

#[derive(Debug, Args, Clone)]
pub struct BackendArgs {
    #[arg(long, default_value = "truthful_sim")]
    pub backend: BackendKind,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    /// JSON rule file for the scripted backend.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Append every request and response to this JSON-lines file.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

impl BackendArgs {
    fn config(&self) -> BackendConfig {
        let mut config = BackendConfig::new(self.backend);
        if let Some(m) = &self.model {
            config.model_id = m.clone();
        }
        config.temperature = self.temperature;
        config
    }

    fn factory(&self, tree: &GuidelineTree, bindings: &PredicateBindings) -> Result<BackendFactory> {
        let script = self.script.as_ref().map(ScriptedBackend::load).transpose()?;
        let factory = BackendFactory::new(
            self.config(),
            Arc::new(tree.clone()),
            Arc::new(bindings.clone()),
            script,
        )?;
        Ok(match &self.transcript {
            Some(path) => factory.with_transcript(Arc::new(
                TranscriptSink::create(path).with_context(|| format!("cannot create {}", path.display()))?,
            )),
            None => factory,
        })
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

struct Data {
    tree: GuidelineTree,
    bindings: PredicateBindings,
    templates: TemplateSet,
}

impl DataArgs {
    fn tree(&self) -> Result<GuidelineTree> {
        match &self.guideline {
            Some(p) => parse_guideline(&read(p)?).with_context(|| format!("invalid guideline {}", p.display())),
            None => Ok(assets::canonical_tree().clone()),
        }
    }

    fn load(&self) -> Result<Data> {
        let tree = self.tree()?;
        let bindings = match &self.predicates {
            Some(p) => PredicateBindings::parse(&read(p)?)?,
            None => PredicateBindings::parse(assets::PREDICATES_JSON)?,
        };
        let templates = match &self.templates {
            Some(p) => TemplateSet::parse(&read(p)?)?,
            None => assets::canonical_templates().clone(),
        };
        Ok(Data {
            tree,
            bindings,
            templates,
        })
    }

    fn paths(&self) -> DataPaths {
        DataPaths {
            guideline: self.guideline.clone(),
            predicates: self.predicates.clone(),
            templates: self.templates.clone(),
            ..DataPaths::default()
        }
    }
}

/// Parses `argv` and runs the command, writing to `out` and `err`.
/// Returns the process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_DOMAIN
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

pub fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Validate { data } => {
            let tree = data.tree()?;
            writeln!(
                out,
                "leaves: {}, paths: {}",
                tree.leaf_count(),
                tree.enumerate_paths().len()
            )?;
            writeln!(out, "nodes: {}, depth: {}", tree.node_count(), tree.depth())?;
        }
        Command::Paths { data } => {
            let tree = data.tree()?;
            for (i, path) in tree.enumerate_paths().iter().enumerate() {
                let label = &tree.leaf(path.leaf.as_str()).expect("path ends at a leaf").label;
                writeln!(out, "{:>2}. {path}  [{label}]", i + 1)?;
            }
        }
        Command::Render {
            data,
            method,
            patient_file,
            node,
        } => {
            let d = data.load()?;
            let patient = match &patient_file {
                Some(p) => read(p)?.trim().to_string(),
                None => "{patient description}".to_string(),
            };
            let r = Renderer::new(&d.templates);
            let bundle = match method {
                MethodKind::Bdt => {
                    let id = node.unwrap_or_else(|| d.tree.root().to_string());
                    let n = d.tree.node(&id).ok_or_else(|| anyhow!("unknown node `{id}`"))?;
                    r.bdt_question(&patient, n)?
                }
                MethodKind::CotFsp => r.cot(&patient, &d.tree)?,
                MethodKind::Pagc => r.pagc(&patient, &d.tree)?,
                MethodKind::Zsp => r.zsp(&patient)?,
            };
            writeln!(out, "{}", bundle.text())?;
        }
        Command::Recommend {
            data,
            backend,
            method,
            patient_file,
            facts,
            seed,
        } => {
            let d = data.load()?;
            let patient = read(&patient_file)?.trim().to_string();
            let facts: Option<StructuredPatientFacts> = match &facts {
                Some(p) => {
                    Some(serde_json::from_str(&read(p)?).with_context(|| format!("invalid facts {}", p.display()))?)
                }
                None => None,
            };
            let client = backend.factory(&d.tree, &d.bindings)?.client(facts.as_ref())?;
            let ctx = RunContext { seed, case_id: None };
            let outcome = runtime()?.block_on(run_method(method, &d.tree, &patient, &d.templates, &client, &ctx));
            match outcome {
                Ok(trace) => {
                    let leaf = trace.final_leaf.as_ref().expect("successful runs end at a leaf");
                    writeln!(out, "recommendation: {}", leaf.label)?;
                    writeln!(out, "leaf: {}", leaf.id)?;
                    writeln!(out, "{}", serde_json::to_string_pretty(&trace)?)?;
                }
                Err(e) => {
                    if let Some(trace) = e.trace() {
                        writeln!(out, "{}", serde_json::to_string_pretty(trace)?)?;
                    }
                    bail!("{} ({})", e, e.kind());
                }
            }
        }
        Command::Bench {
            data,
            backend,
            seeds,
            methods,
            corpus,
            out: out_dir,
            parallel,
        } => {
            let d = data.load()?;
            let corpus = match &corpus {
                Some(p) => Corpus::load(p, &d.tree, false)?,
                None => Corpus::from_cases(assets::canonical_corpus().cases.clone(), "data/corpus.jsonl", &d.tree)?,
            };
            let config = RunConfig {
                seeds,
                methods,
                backend: backend.config(),
                parallelism: parallel,
            };
            config.validate()?;
            let factory = backend.factory(&d.tree, &d.bindings)?;
            let records = runtime()?.block_on(run_benchmark(&corpus, &config, &d.tree, &d.templates, &factory))?;
            let report = BenchmarkReport::build(&records, &config, &d.tree)?;
            let files = write_reports(&out_dir, &report, &records)
                .with_context(|| format!("cannot write reports to {}", out_dir.display()))?;
            for m in &report.methods {
                let rank = m.rank.map_or_else(|| "-".to_string(), |r| r.to_string());
                writeln!(
                    out,
                    "{:<8} mean macro-F1 {:.2}  accuracy {:.2}  failures {}  rank {}",
                    m.method.display_name(),
                    cpg_cds::evaluation::round_half_up(m.mean_macro_f1, 2),
                    cpg_cds::evaluation::round_half_up(m.accuracy, 2),
                    m.failures,
                    rank
                )?;
            }
            for f in files {
                writeln!(out, "wrote {}", f.display())?;
            }
        }
        Command::Agreement { ratings } => {
            let records = parse_annotations(&read(&ratings)?)?;
            let report = AgreementReport::from_records(&records)?;
            writeln!(
                out,
                "raters: {}, {}; items: {}",
                report.raters[0], report.raters[1], report.items
            )?;
            for c in &report.categories {
                writeln!(
                    out,
                    "{}: {:.2} ({})",
                    c.category,
                    cpg_cds::evaluation::round_half_up(c.ac1, 2),
                    c.band
                )?;
            }
        }
        Command::Serve {
            data,
            host,
            port,
            corpus,
            script,
            static_dir,
            cors_origins,
        } => {
            let paths = DataPaths {
                corpus,
                script,
                ..data.paths()
            };
            let resources = Resources::load(&paths)?;
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .with_context(|| format!("invalid address {host}:{port}"))?;
            let config = ServiceConfig {
                cors_origins: (!cors_origins.is_empty()).then_some(cors_origins),
                static_dir,
            };
            writeln!(out, "listening on http://{addr}")?;
            out.flush()?;
            runtime()?.block_on(cpg_cds_service::serve(addr, resources, config))?;
        }
    }
    Ok(())
}
