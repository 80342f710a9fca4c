//! Command-line harness: reproducible experiments over space files.
//!
//! Every command reads its parameters from an optional JSON config file and
//! from flags (flags win), writes JSON reports into the output directory, and
//! stamps each report with the seed and the SHA-256 of the canonical config.
//! Input files enter the hash by content, and the output directory does not
//! enter it, so the same experiment run into two directories produces
//! byte-identical files.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub use commands::{error_code, run};
pub use config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "sphere-fraisse", version, about = "Finite sphere metric spaces and their Gaussian field")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Float tolerance for embeddings and geometry.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Initial snapping grid is `2^-denom_bits`.
    #[arg(long = "denom-bits", global = true)]
    pub denom_bits: Option<u32>,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Exact membership certificate (exit 2 for a non-member).
    Certify { input: Option<PathBuf> },
    /// Float coordinates of a certified space.
    Embed { input: Option<PathBuf> },
    /// Free amalgam of two spaces over identified subspaces.
    Amalgamate {
        left: Option<PathBuf>,
        right: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        common_left: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        common_right: Option<Vec<usize>>,
    },
    /// Generic chain of random certified extensions.
    Grow {
        input: Option<PathBuf>,
        #[arg(long)]
        stages: Option<usize>,
        #[arg(long)]
        per_stage: Option<usize>,
    },
    /// Finite witnesses from type-sphere geometry and the extension property.
    Witness {
        kind: Option<WitnessKind>,
        input: Option<PathBuf>,
        /// Target squared distance for `theta`.
        #[arg(long)]
        target: Option<String>,
        /// Angle bound for `connect`.
        #[arg(long)]
        phi: Option<f64>,
        /// Maximal squared jump for `chain`.
        #[arg(long)]
        step: Option<String>,
        /// Prescribed squared distances for `extension`.
        #[arg(long, value_delimiter = ',')]
        dists: Option<Vec<String>>,
        /// Fixed points for `algebraicity`.
        #[arg(long, value_delimiter = ',')]
        fixed: Option<Vec<usize>>,
        /// The point whose type is copied, for `algebraicity`.
        #[arg(long)]
        x: Option<usize>,
        /// Number of copies for `algebraicity`.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Raw Gaussian draws as CSV.
    Sample { input: Option<PathBuf> },
    /// Mixing estimates over near-orthogonal copies.
    Mixing {
        input: Option<PathBuf>,
        /// Cylinder event, e.g. `0>0,1<1/2`.
        #[arg(long)]
        event: Option<String>,
        #[arg(long = "k", value_delimiter = ',', num_args = 0..)]
        k_values: Option<Vec<u64>>,
    },
    /// Distribution of the induced random order and its uniformity test.
    Orders {
        input: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        indices: Option<Vec<usize>>,
    },
}

#[derive(ValueEnum, Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum WitnessKind {
    /// Rotation angle achieving a target distance.
    Theta,
    /// A point within half an angle of two type-mates.
    Connect,
    /// A chain of short certified jumps between type-mates.
    Chain,
    /// Exact one-point extension with prescribed distances.
    Extension,
    /// Several distinct realizations of a type over fixed points.
    Algebraicity,
}

/// Process exit status of a finished command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// Exit 0.
    Positive,
    /// Exit 2: valid input, negative answer (e.g. not a member).
    Negative,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Outcome::Positive => 0,
            Outcome::Negative => 2,
        }
    }
}
