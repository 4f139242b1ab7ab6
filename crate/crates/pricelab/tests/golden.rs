use pricelab::spacecalc::{high_freq_table, high_freq_transcript, q, qi, run_low_freq_iteration};
use std::path::PathBuf;

fn golden(name: &str, text: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("golden").join(name);
    if std::env::var_os("PRICELAB_BLESS").is_some() {
        std::fs::write(&path, text).unwrap();
        return;
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(want == text, "{} differs from the engine output:\n{text}", path.display());
}

#[test]
fn lowfreq_five_halves() {
    golden("lowfreq_s2_k5-2.txt", &run_low_freq_iteration(qi(2), q(5, 2)).unwrap().transcript());
}

#[test]
fn lowfreq_three_halves() {
    golden("lowfreq_s3_k3-2.txt", &run_low_freq_iteration(qi(3), q(3, 2)).unwrap().transcript());
}

#[test]
fn highfreq_table() {
    golden("highfreq_table.txt", &high_freq_transcript(&high_freq_table().unwrap()));
}
