use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pricelab"))
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn flat_config_passes_the_huygens_check() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("flat");
    let o = run(&["decay", "run", "-c", bundled("flat.cfg").to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let rows = csv_rows(&out.join("summary.csv"));
    assert!(rows.iter().any(|r| &r[1] == "huygens tail" && &r[5] == "true"));
    let m = manifest(&out);
    assert_eq!(m["status"], "pass");
    assert_eq!(m["partial"], false);
    let keys = stdout(&run(&["schema"])).lines().count();
    assert_eq!(m["config"].as_object().unwrap().len(), keys, "every default is recorded");
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    assert!(m["grid"]["evolution"]["dr"].is_number());
}

#[test]
fn kappa_three_halves_decays_at_the_predicted_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("k");
    let o = run(&["decay", "run", "-c", bundled("kappa-1.5.cfg").to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let rows = csv_rows(&out.join("summary.csv"));
    let row = rows.iter().find(|r| &r[1] == "decay exponent").expect("summary row");
    assert_eq!(row[2].parse::<f64>().unwrap(), -3.5);
    let fitted: f64 = row[3].parse().unwrap();
    assert!((fitted + 3.5).abs() <= 0.35, "fitted {fitted}");
    assert_eq!(&row[5], "true");
    let transcript = std::fs::read_to_string(out.join("derivation.txt")).unwrap();
    assert!(transcript.contains("5/2-"), "{transcript}");

    // refitting the emitted trace gives the recorded exponent
    let o = run(&["decay", "fit", out.join("trace_r2.csv").to_str().unwrap(), "--t1", "50", "--t2", "500"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fit: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(fit["exponent"].as_f64().unwrap(), fitted);
}

#[test]
fn integer_kappa_is_a_schema_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    std::fs::write(&cfg, "kind = potential\nkappa = 2\n").unwrap();
    let out = tmp.path().join("never");
    let o = run(&["decay", "run", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("(1,∞)\\ℕ"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["decay", "runn"]).status.code(), Some(2));
    assert_eq!(run(&["model", "check", "--set", "kapa=1.5"]).status.code(), Some(2));
    assert_eq!(run(&["model", "check", "--set", "observers"]).status.code(), Some(2));
}

#[test]
fn replaying_a_manifest_reproduces_every_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let first = run(&[
        "decay", "run", "--set", "kind=potential", "--set", "kappa=2.5", "--set", "t_end=120", "--set", "fit_t2=120",
        "--set", "observers=1.5,3", "--set", "exec=sequential", "-o", a.to_str().unwrap(),
    ]);
    assert_eq!(first.status.code(), Some(0), "{}", stdout(&first));
    let again = run(&["decay", "run", "-c", a.join("manifest.json").to_str().unwrap(), "-o", b.to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(0));
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["config_sha256"], mb["config_sha256"]);
    let files = ma["artifacts"].as_array().unwrap();
    assert!(files.len() >= 5);
    for f in files {
        let name = f["file"].as_str().unwrap();
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert_eq!(ma["artifacts"], mb["artifacts"]);
}

#[test]
fn stage_errors_name_the_module_and_a_remedy() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cfl");
    let o = run(&[
        "decay", "run", "--set", "kind=potential", "--set", "courant=1.5", "--set", "t_end=60", "--set", "fit_t2=60",
        "-o", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("error in timedomain") && err.contains("hint: lower courant"), "{err}");
    let m = manifest(&out);
    assert_eq!(m["status"], "error");
    assert_eq!(m["partial"], true);
    assert_eq!(m["error"]["module"], "timedomain");
}

#[test]
fn check_commands_pass_on_their_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 6] = [
        &["model", "check", "--set", "kind=metric", "--set", "h00=0.1", "--set", "hrr=0.1", "--set", "v=0.5"],
        &["resolve", "--sigma", "0,0.3,1,3"],
        &["mellin", "check"],
        &["neumann", "check", "--set", "kind=potential"],
        &["norm", "--set", "kind=potential"],
        &["ft-lemma", "--alpha", "0.5"],
    ];
    for (k, args) in cases.iter().enumerate() {
        let out = tmp.path().join(k.to_string());
        let mut all = args.to_vec();
        all.extend(["-o", out.to_str().unwrap()]);
        let o = run(&all);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}{}", stdout(&o), stderr(&o));
        assert_eq!(manifest(&out)["status"], "pass");
    }
    let rows = csv_rows(&tmp.path().join("1").join("resolvent.csv"));
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r[5].parse::<f64>().unwrap() < 1e-6));
}

#[test]
fn a_jump_sample_fails_the_fourier_check() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["ft-lemma", "--alpha", "0.5", "--kind", "jump", "-o", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL Fourier decay"));
}

#[test]
fn spacecalc_derive_matches_the_golden_transcript() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["spacecalc", "derive", "--set", "s=2", "--set", "kappa=5/2", "-o", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("../pricelab/golden/lowfreq_s2_k5-2.txt");
    assert_eq!(
        std::fs::read_to_string(tmp.path().join("derivation.txt")).unwrap(),
        std::fs::read_to_string(golden).unwrap()
    );
    let m = manifest(tmp.path());
    assert_eq!(m["results"]["low_frequency"]["m"], 4);
}
