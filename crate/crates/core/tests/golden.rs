use std::path::Path;

use pw_core::golden;

/// Set to rewrite the committed files instead of checking them; `pw
/// oracle-run` does the same from the command line.
const REGENERATE_VAR: &str = "PW_REGENERATE_GOLDEN";

#[test]
fn committed_golden_files_match_the_oracle() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    if std::env::var_os(REGENERATE_VAR).is_some() {
        golden::write_all(&dir).unwrap();
    }
    let stale = golden::stale_files(&dir).unwrap();
    assert!(stale.is_empty(), "outdated golden files (run `pw oracle-run`): {stale:?}");
}
