// SPDX-License-Identifier: MIT OR Apache-2.0

use clap::Parser;
use fmosum_cli::{main_with, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    std::process::exit(main_with(&cli));
}
