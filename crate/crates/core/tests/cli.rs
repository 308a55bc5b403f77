//! End-to-end runs of the `powerscale` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use powerscale::config::{default_data_dir, RunConfig};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_powerscale"));
    c.env_remove("RUST_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn have_data() -> bool {
    let ok = default_data_dir().join("train-images-idx3-ubyte").exists();
    if !ok {
        eprintln!("skipping: no MNIST files");
    }
    ok
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn presets_are_listed_and_shown() {
    let o = run(&["presets"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 38);
    assert!(text.contains("appB_momentum_9"));
    let o = run(&["presets", "--show", "appD_3layer_240"]);
    assert!(o.status.success());
    assert!(RunConfig::from_toml(&stdout(&o), "shown").is_ok());
    assert_eq!(run(&["presets", "--show", "nope"]).status.code(), Some(2));
}

#[test]
fn fit_of_published_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["fit", "--published", "appC_1layer", "--published", "appD_2layer", "--published", "appD_3layer", "--target", "0.05", "--out", p(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit = std::fs::read_to_string(dir.path().join("fit.csv")).unwrap();
    let rho: Vec<f64> = csv::Reader::from_reader(fit.as_bytes())
        .records()
        .map(|r| r.unwrap())
        .filter(|r| &r[1] == "rho")
        .map(|r| r[3].parse().unwrap())
        .collect();
    assert_eq!(rho.len(), 3);
    for (got, want) in rho.iter().zip([0.2954, 0.3422, 0.3841]) {
        assert!((got - want).abs() < 1e-4, "{got} vs {want}");
    }
    assert!(fit.contains("size_for_error,0.05,"), "{fit}");
    assert!(std::fs::read_to_string(dir.path().join("plot.svg")).unwrap().starts_with("<svg"));
    let cross = std::fs::read_to_string(dir.path().join("crossover.csv")).unwrap();
    assert_eq!(cross.lines().count(), 3, "{cross}");
}

#[test]
fn fit_needs_two_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("one.csv");
    std::fs::write(&series, "examples_per_label,error,std,n_samples\n30,0.3,0.02,20\n").unwrap();
    let o = run(&["fit", "--series", p(&series), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(run(&["fit", "--published", "appZ", "--out", p(dir.path())]).status.code(), Some(2));
}

#[test]
fn config_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(&["run", "--preset", "appX_9", "--out", p(&out)]).status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "examples_per_label = \"many\"\n").unwrap();
    assert_eq!(run(&["run", "--config", p(&bad), "--out", p(&out)]).status.code(), Some(2));
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let o = run(&["run", "--preset", "appC_1layer_30", "--samples", "1", "--data-dir", p(&empty), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn malformed_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("junk.bin");
    std::fs::write(&ckpt, b"not a checkpoint at all").unwrap();
    let o = run(&["expand", "--checkpoint", p(&ckpt), "--no-test-set", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(5));
    let o = run(&["run", "--checkpoint", p(&ckpt), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn run_writes_outputs_and_replays_from_manifest() {
    if !have_data() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let o = run(&["run", "--preset", "appC_1layer_30", "--samples", "2", "--seed", "9", "--save-checkpoint", "--out", p(&a)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("published: 0.7360"));
    for f in ["results.csv", "manifest.json", "config.toml", "checkpoint.bin", "checkpoint.bin.txt"] {
        assert!(a.join(f).exists(), "{f}");
    }

    let b = dir.path().join("b");
    let o = run(&["run", "--config", p(&a.join("manifest.json")), "--out", p(&b)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ra = std::fs::read(a.join("results.csv")).unwrap();
    assert_eq!(ra, std::fs::read(b.join("results.csv")).unwrap());

    let c = dir.path().join("c");
    assert!(run(&["run", "--config", p(&a.join("config.toml")), "--samples", "2", "--out", p(&c)]).status.success());
    assert_eq!(ra, std::fs::read(c.join("results.csv")).unwrap());

    let o = run(&["run", "--checkpoint", p(&a.join("checkpoint.bin"))]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("test success rate"));
}

#[test]
fn expanded_checkpoint_agrees() {
    if !have_data() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "--preset", "appD_2layer_30", "--samples", "1", "--save-checkpoint", "--out", p(dir.path())]);
    assert!(o.status.success());
    let o = run(&["expand", "--checkpoint", p(&dir.path().join("checkpoint.bin")), "--random-inputs", "2000", "--out", p(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("agreement.json")).unwrap()).unwrap();
    assert_eq!(report["test_set_agreement"], 1.0);
    assert_eq!(report["random_agreement"], 1.0);
    assert_eq!(report["test_set_examples"], 10000);
    let o = run(&["run", "--checkpoint", p(&dir.path().join("expanded.bin"))]);
    assert!(o.status.success());

    // a one-layer checkpoint cannot be expanded
    let one = dir.path().join("one");
    assert!(run(&["run", "--preset", "appC_1layer_30", "--samples", "1", "--save-checkpoint", "--out", p(&one)]).status.success());
    let o = run(&["expand", "--checkpoint", p(&one.join("checkpoint.bin")), "--no-test-set", "--out", p(&one)]);
    assert_eq!(o.status.code(), Some(2));
}

fn grid_file(dir: &Path) -> PathBuf {
    let path = dir.join("grid.toml");
    std::fs::write(
        &path,
        r#"preset = "appC_1layer_30"
examples_per_label = 3
n_samples = 2

[grid]
stages = 2

[[grid.axes]]
name = "alpha"
low = 0.0
high = 0.02
resolution = 0.005
refine = 5.0
"#,
    )
    .unwrap();
    path
}

fn counts(o: &Output) -> (usize, usize, usize) {
    let text = stdout(o);
    let line = text.lines().find(|l| l.starts_with("points:")).expect("summary line");
    let n: Vec<usize> = line.split(|c: char| !c.is_ascii_digit()).filter_map(|s| s.parse().ok()).collect();
    (n[0], n[1], n[2])
}

#[test]
fn grid_resumes_from_truncated_journal() {
    if !have_data() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = grid_file(dir.path());
    let out = dir.path().join("out");
    let o = run(&["grid", "--config", p(&cfg), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (points, evaluated, resumed) = counts(&o);
    assert_eq!(resumed, 0);
    assert!(evaluated <= points);
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let journal = std::fs::read_to_string(out.join("evaluations.csv")).unwrap();
    let incumbent = std::fs::read_to_string(out.join("incumbent.toml")).unwrap();
    let journal_lines: Vec<&str> = journal.lines().collect();
    assert_eq!(journal_lines.len(), evaluated);

    // keep three results and a torn fourth line
    let keep = 3;
    let torn = format!("{}\n{}", journal_lines[..keep].join("\n"), &journal_lines[keep][..4]);
    std::fs::write(out.join("evaluations.csv"), torn).unwrap();
    let o = run(&["grid", "--config", p(&cfg), "--resume", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(counts(&o), (points, evaluated - keep, keep));
    assert_eq!(std::fs::read_to_string(out.join("trace.csv")).unwrap().lines().count(), trace.lines().count());
    assert_eq!(std::fs::read_to_string(out.join("incumbent.toml")).unwrap(), incumbent);

    // a changed search refuses to resume
    let other = std::fs::read_to_string(&cfg).unwrap().replace("n_samples = 2", "n_samples = 3");
    std::fs::write(&cfg, other).unwrap();
    assert_eq!(run(&["grid", "--config", p(&cfg), "--resume", "--out", p(&out)]).status.code(), Some(2));

    // the incumbent is a runnable config with the base seed
    let rc = RunConfig::load(&out.join("incumbent.toml")).unwrap();
    let base = RunConfig::load(&grid_file(dir.path())).unwrap().resolve().unwrap();
    assert_eq!(rc.resolve().unwrap().seed, base.seed);
    let o = run(&["run", "--config", p(&out.join("incumbent.toml")), "--out", p(&dir.path().join("inc"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn single_size_sweep_cannot_be_fitted() {
    if !have_data() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(&cfg, "n_samples = 2\n\n[sweep]\npresets = [\"appC_1layer_30\"]\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&["sweep", "--config", p(&cfg), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let series = out.join("series.csv");
    assert_eq!(std::fs::read_to_string(&series).unwrap().lines().count(), 2);
    let o = run(&["fit", "--series", p(&series), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
}
