//! Writes a synthetic corpus (`wav/` plus `manifest.jsonl`) for trying the CLI.
//!
//! usage: synthetic_corpus DIR [N_TRAIN] [N_TEST] [SECONDS] [SEED]

use wssdrc_core::corpus::write_synthetic_corpus;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(dir) = args.first() else {
        eprintln!("usage: synthetic_corpus DIR [N_TRAIN] [N_TEST] [SECONDS] [SEED]");
        std::process::exit(2);
    };
    let num = |i: usize, default: f64| args.get(i).map_or(default, |s| s.parse().expect("numeric argument"));
    let m = write_synthetic_corpus(
        dir.as_ref(),
        num(1, 40.0) as usize,
        num(2, 120.0) as usize,
        num(3, 2.0),
        num(4, 0.0) as u64,
    )
    .expect("writing corpus");
    println!("{} utterances in {dir}", m.entries.len());
}
