//! Runs every criterion of the reproduction protocol at full size and prints
//! one pass/fail line per criterion. Exits nonzero if any criterion fails.

use lbal_cli::protocol::{self, Options};

fn main() {
    let opts = Options {
        binary: Some(env!("CARGO_BIN_EXE_lbal").into()),
        ..Options::default()
    };
    let mut failed = Vec::new();
    for (id, _) in protocol::CRITERIA {
        let outcome = protocol::run_one(id, &opts).expect("known criterion");
        println!("{outcome}");
        if !outcome.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", protocol::CRITERIA.len());
    } else {
        println!("acceptance: failed {}", failed.join(", "));
        std::process::exit(1);
    }
}
