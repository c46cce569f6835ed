//! `horolab`: experiments on horocyclic products of percolation trees.
//!
//! Exit status is 0 on success, 2 when the computation ran but a check
//! failed, and 1 on usage or resource errors.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use horolab::TreeParams;
use serde::Serialize;

pub const SEED_ENV: &str = "HOROLAB_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "horolab",
    version,
    about = "Horocyclic products of percolation trees"
)]
pub struct Cli {
    /// Master seed; the HOROLAB_SEED environment variable takes precedence.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for parallel trials (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Write the artifact here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Sample one window of a percolation tree.
    SampleTree(SampleTreeArgs),
    /// Build the product of two sampled windows and export its edges.
    BuildWindow(PairArgs),
    /// Window-ratio decay experiment over a range of h.
    Folner(FolnerArgs),
    /// Martingale diagnostics for the normalised level counts.
    Martingale(MartingaleArgs),
    /// Tetraeder subset in DL(beta, beta).
    Tetraeder(TetraederArgs),
    /// Exhaustive anchored ratio over connected subsets containing the root.
    Anchored(AnchoredArgs),
    /// Boundary comparison after removing percolative edges.
    Cutcheck(CutcheckArgs),
    /// Component count of the product over a split factor, with and without a bridge.
    Lemma11(Lemma11Args),
    /// Equal mean offspring of the two factors.
    Growthcheck(GrowthArgs),
    /// Probability that all edges near the root are closed.
    Allclosed(AllClosedArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SampleTreeArgs {
    /// alpha_min,alpha_max,p
    #[arg(long)]
    pub params: TreeParams,
    /// Window rooted at level -h with height 2h.
    #[arg(long)]
    pub h: u32,
    #[arg(long, value_enum, default_value_t = Side::Right)]
    pub side: Side,
}

#[derive(Debug, Args, Serialize)]
pub struct PairArgs {
    #[arg(long)]
    pub left: TreeParams,
    #[arg(long)]
    pub right: TreeParams,
    #[arg(long)]
    pub h: u32,
}

#[derive(Debug, Args, Serialize)]
pub struct FolnerArgs {
    #[arg(long)]
    pub left: TreeParams,
    #[arg(long)]
    pub right: TreeParams,
    /// lo..hi (inclusive) or a single value
    #[arg(long, value_parser = parse_range)]
    pub h: HRange,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct MartingaleArgs {
    #[arg(long)]
    pub params: TreeParams,
    #[arg(long, default_value_t = 8)]
    pub height: u32,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    /// Discard extinct trials (needed when alpha_min = 0).
    #[arg(long)]
    pub condition: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct TetraederArgs {
    #[arg(long)]
    pub beta: u32,
    #[arg(long = "N", id = "N")]
    pub n: u32,
    /// Skip the explicit graph and use level counts only.
    #[arg(long)]
    pub closed_form: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct AnchoredArgs {
    #[arg(long)]
    pub left: TreeParams,
    #[arg(long)]
    pub right: TreeParams,
    #[arg(long)]
    pub h: u32,
    #[arg(long)]
    pub n_max: usize,
    #[arg(long, default_value_t = horolab::iso::DEFAULT_MAX_SUBSETS)]
    pub max_subsets: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct CutcheckArgs {
    #[arg(long, default_value = "1,1,1")]
    pub left: TreeParams,
    #[arg(long, default_value = "2,3,0.5")]
    pub right: TreeParams,
    #[arg(long, default_value_t = 3)]
    pub h: u32,
    #[arg(long, default_value_t = 100)]
    pub clusters: u64,
    #[arg(long, default_value_t = 100)]
    pub subsets: usize,
    #[arg(long, default_value_t = 60)]
    pub max_size: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct Lemma11Args {
    #[arg(long, default_value = "1,3,0.6")]
    pub ambient: TreeParams,
    #[arg(long, default_value = "1,2,0.5")]
    pub left: TreeParams,
    #[arg(long, default_value_t = 2)]
    pub h: u32,
    #[arg(long, default_value_t = 20)]
    pub instances: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct GrowthArgs {
    #[arg(long)]
    pub left: TreeParams,
    #[arg(long)]
    pub right: TreeParams,
    #[arg(long, default_value_t = 1e-12)]
    pub tolerance: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct AllClosedArgs {
    #[arg(long)]
    pub left: TreeParams,
    #[arg(long)]
    pub right: TreeParams,
    #[arg(long = "N", id = "N")]
    pub n: u32,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct HRange {
    pub lo: i64,
    pub hi: i64,
}

fn parse_range(s: &str) -> Result<HRange, String> {
    let parse = |t: &str| {
        t.trim()
            .parse::<i64>()
            .map_err(|_| format!("expected lo..hi or an integer, got {s:?}"))
    };
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
        None => {
            let v = parse(s)?;
            (v, v)
        }
    };
    if lo < 0 || hi < lo {
        return Err(format!("range {s:?} must satisfy 0 <= lo <= hi"));
    }
    Ok(HRange { lo, hi })
}

/// Result of a subcommand: success, or a check that ran and failed.
pub enum Status {
    Ok,
    CheckFailed,
}

fn main() -> ExitCode {
    let mut cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Ok(v) = std::env::var(SEED_ENV) {
        match v.trim().parse() {
            Ok(seed) => cli.seed = seed,
            Err(_) => {
                eprintln!("error: {SEED_ENV}={v:?} is not an unsigned integer");
                return ExitCode::from(1);
            }
        }
    }
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: --jobs {jobs}: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::CheckFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
