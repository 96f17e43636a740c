//! Every example builds and exits cleanly. `cargo test` compiles examples
//! next to the test binaries, so they are run from there.

use std::path::PathBuf;
use std::process::Command;

const EXAMPLES: &[&str] = &[
    "chunking",
    "bm25_rank",
    "semantic_fusion",
    "annotate_replay",
    "parse_clean",
    "timeline_dataset",
    "split_notes",
    "dataset_stats",
    "concordance",
    "end_to_end",
];

fn examples_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().join("examples")
}

#[test]
fn examples_run() {
    let dir = examples_dir();
    for name in EXAMPLES {
        let path = dir.join(format!("{name}{}", std::env::consts::EXE_SUFFIX));
        assert!(path.is_file(), "example binary missing: {}", path.display());
        let out = Command::new(&path).output().unwrap();
        assert!(
            out.status.success(),
            "{name} failed:\n{}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(!out.stdout.is_empty(), "{name} printed nothing");
    }
}
