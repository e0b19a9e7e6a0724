//! `litrec`: build, inspect and query a recommendation index.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use litrec_core::index::{BuildParams, Index};
use litrec_core::keyword_norm::KeywordMap;
use litrec_core::recommender::{explain, recommend, Closest, Query, RecommendationSet, RecommenderConfig};
use litrec_core::usage::{load_usage, ReaderFilter, Readership, UsageLog};
use litrec_core::Error;

const EXIT_INPUT: u8 = 2;
const EXIT_PARAMETER: u8 = 3;
const EXIT_UNKNOWN_DOC: u8 = 4;
const EXIT_NO_SIGNAL: u8 = 5;
const EXIT_CORRUPT: u8 = 6;

#[derive(Parser)]
#[command(name = "litrec", version, about = "Keyword topic-space literature recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index directory from a JSONL corpus.
    Build(BuildArgs),
    /// Print recommendations for a document, keyword list or bibliography.
    Recommend(RecommendArgs),
    /// Summarize an index: cluster sizes, similarity, spectrum.
    Stats {
        #[arg(long)]
        index: PathBuf,
    },
}

#[derive(clap::Args)]
struct BuildArgs {
    /// Corpus file, one JSON record per line.
    #[arg(long)]
    docs: PathBuf,
    #[arg(long, default_value_t = BuildParams::default().dims)]
    dims: usize,
    #[arg(long, default_value_t = BuildParams::default().clusters)]
    clusters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = BuildParams::default().min_df)]
    min_df: usize,
    #[arg(long, default_value_t = BuildParams::default().max_df_fraction)]
    max_df_frac: f64,
    /// Tab-separated `raw<TAB>canonical` synonym table.
    #[arg(long)]
    synonyms: Option<PathBuf>,
    /// Regexes (one per line) of keywords kept verbatim; defaults to PACS codes.
    #[arg(long)]
    passthrough: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Machine,
}

#[derive(clap::Args)]
struct RecommendArgs {
    #[arg(long)]
    index: PathBuf,
    /// Usage log, `user<TAB>doc<TAB>timestamp` per line.
    #[arg(long)]
    usage: Option<PathBuf>,
    #[arg(long, group = "query", required = true)]
    doc: Option<String>,
    /// File of referenced document ids, whitespace separated.
    #[arg(long, group = "query")]
    refs: Option<PathBuf>,
    /// Comma-separated keywords.
    #[arg(long, group = "query", value_delimiter = ',')]
    keywords: Option<Vec<String>>,
    #[arg(long, default_value_t = RecommenderConfig::default().group_size)]
    group_size: usize,
    /// Maximum gap in hours between adjacent reads.
    #[arg(long, default_value_t = 8.0)]
    session_gap: f64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. }
        | Error::Malformed { .. }
        | Error::DuplicateId(_)
        | Error::EmptyVocabulary
        | Error::NoKeywordedDocuments => EXIT_INPUT,
        Error::InvalidArgument(_) | Error::RankExceeded { .. } => EXIT_PARAMETER,
        Error::NotFound(_) => EXIT_UNKNOWN_DOC,
        Error::NoSignal(_) => EXIT_NO_SIGNAL,
        Error::CorruptIndex(_) => EXIT_CORRUPT,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new(exit_code(&e), e.to_string())
    }
}

fn load_index(dir: &Path) -> Result<Index, Failure> {
    Index::load(dir).map_err(|e| Failure::new(EXIT_CORRUPT, e.to_string()))
}

fn build(args: BuildArgs) -> Result<(), Failure> {
    if !args.max_df_frac.is_finite() || args.max_df_frac <= 0.0 || args.max_df_frac > 1.0 {
        return Err(Failure::new(EXIT_PARAMETER, "--max-df-frac must be in (0, 1]"));
    }
    if args.clusters == 0 {
        return Err(Failure::new(EXIT_PARAMETER, "--clusters must be at least 1"));
    }
    let map = KeywordMap::from_files(args.synonyms.as_deref(), args.passthrough.as_deref())?;
    let params = BuildParams {
        dims: args.dims,
        clusters: args.clusters,
        seed: args.seed,
        min_df: args.min_df,
        max_df_fraction: args.max_df_frac,
        ..BuildParams::default()
    };
    let (index, report) = Index::build_from_file(&args.docs, map, &params)?;
    index.save(&args.out)?;
    println!("documents: {}", index.corpus.len());
    println!("vocabulary: {}", report.vocab_size);
    println!("placed by keywords: {}", report.placement.by_keywords);
    println!("placed by bibliography: {}", report.placement.by_bibliography);
    println!("excluded: {}", report.placement.excluded.len());
    let load = &report.load;
    if load.dangling_references + load.duplicate_references_dropped + load.self_references_dropped > 0 {
        println!(
            "references: {} outside the corpus, {} duplicates and {} self-citations dropped",
            load.dangling_references, load.duplicate_references_dropped, load.self_references_dropped
        );
    }
    println!("index written to {}", args.out.display());
    Ok(())
}

fn read_refs(path: &Path) -> Result<Vec<String>, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::new(EXIT_INPUT, format!("cannot read {}: {e}", path.display())))?;
    Ok(text.split_whitespace().map(str::to_string).collect())
}

fn render_text(set: &RecommendationSet) -> String {
    let mut out = String::new();
    let target = match &set.target.doc_id {
        Some(id) => format!("{id} ({:?}, {:?})", set.target.kind, set.target.vector_source),
        None => format!("{:?} query ({:?})", set.target.kind, set.target.vector_source),
    };
    out.push_str(&format!("target: {target}\ncluster: {}\ngroup: {} documents\n", set.cluster, set.group.len()));
    if let Closest::Ranked { ranked } = &set.closest_in_cluster {
        for (i, n) in ranked.iter().enumerate() {
            out.push_str(&format!("  {}. {}\t{:.4}\n", i + 1, n.doc_id, n.statistic));
        }
    }
    out.push_str(&explain(set));
    out
}

fn recommend_cmd(args: RecommendArgs) -> Result<(), Failure> {
    if !args.session_gap.is_finite() || args.session_gap < 0.0 {
        return Err(Failure::new(EXIT_PARAMETER, "--session-gap must be a non-negative number of hours"));
    }
    let cfg = RecommenderConfig {
        group_size: args.group_size,
        session_gap: Duration::from_secs((args.session_gap * 3600.0).round() as u64),
        ..RecommenderConfig::default()
    };
    cfg.validate()?;
    let index = load_index(&args.index)?;
    let log = match &args.usage {
        Some(p) => load_usage(p)?,
        None => UsageLog::default(),
    };
    let readership = Readership::new(log, ReaderFilter::default());
    let query = match (args.doc, args.refs, args.keywords) {
        (Some(d), _, _) => Query::Doc(d),
        (_, Some(p), _) => Query::References(read_refs(&p)?),
        (_, _, Some(k)) => Query::Keywords(k),
        _ => unreachable!("clap requires one query"),
    };
    let set = recommend(&index, &readership, &query, &cfg)?;
    match args.format {
        Format::Machine => println!("{}", set.to_json()),
        Format::Text => print!("{}", render_text(&set)),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Build(args) => build(args),
        Command::Recommend(args) => recommend_cmd(args),
        Command::Stats { index } => {
            print!("{}", load_index(&index)?.stats().render());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_PARAMETER) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("litrec: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
