mod commands;
mod formats;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "octok",
    version,
    about = "Octree tokenization of sparse 3D structures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Xyz,
    Crystal,
    Voxgrid,
}

#[derive(Clone, Debug, clap::Args)]
struct GridArgs {
    /// Force a fixed tree depth (replicates fixed-depth configurations).
    #[arg(long = "L", conflicts_with = "auto_l")]
    levels: Option<u32>,
    /// Pick the minimal depth per input (the default behavior).
    #[arg(long = "auto-L")]
    auto_l: bool,
    /// Leaf cell length in angstroms.
    #[arg(long, default_value_t = 0.24)]
    leaf: f64,
    /// In-cell offset resolution in angstroms.
    #[arg(long, default_value_t = 0.01)]
    res: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a structure file into token JSONL.
    Tokenize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
        #[arg(long = "out")]
        output: PathBuf,
        /// Expand into the masked next-token form.
        #[arg(long)]
        mntp: bool,
        #[command(flatten)]
        grid: GridArgs,
        /// Seed for --rotate.
        #[arg(long)]
        seed: Option<u64>,
        /// Apply a seeded random rotation before tokenization.
        #[arg(long, requires = "seed")]
        rotate: bool,
        /// On a leaf collision, halve the leaf length and offset
        /// resolution (deepening the tree by one level) and retry.
        #[arg(long)]
        auto_deepen: bool,
    },
    /// Decode token JSONL back into a structure file.
    Detokenize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// Round-trip a structure and report the worst coordinate error.
    Verify {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Print sequence statistics as JSON.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Fit a count model on a directory of token JSONL files.
    Fit {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
    },
    /// Draw samples from a fitted model and keep the top-r by score.
    Sample {
        #[arg(long)]
        model: PathBuf,
        /// Number of candidates to draw.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        /// Candidates kept after ranking by cumulative log-probability.
        #[arg(long = "top-r", default_value_t = 1)]
        top_r: usize,
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// Bit-pack a raw boolean grid into the 8-channel form.
    Pack {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// Unpack an 8-channel grid back into the raw boolean form.
    Unpack {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Tokenize {
            input,
            format,
            output,
            mntp,
            grid,
            seed,
            rotate,
            auto_deepen,
        } => commands::tokenize(
            &input,
            format,
            &output,
            mntp,
            &grid,
            seed,
            rotate,
            auto_deepen,
        ),
        Command::Detokenize { input, output } => commands::detokenize(&input, &output),
        Command::Verify {
            input,
            format,
            grid,
        } => commands::verify(&input, format, &grid),
        Command::Stats { input } => commands::stats(&input),
        Command::Fit {
            corpus,
            output,
            alpha,
        } => commands::fit(&corpus, &output, alpha),
        Command::Sample {
            model,
            n,
            seed,
            temperature,
            top_r,
            output,
        } => commands::sample(&model, n, seed, temperature, top_r, &output),
        Command::Pack { input, output } => commands::pack(&input, &output),
        Command::Unpack { input, output } => commands::unpack(&input, &output),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
