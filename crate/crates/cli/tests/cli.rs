use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn actens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_actens"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn blobs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/csv_dataset/blobs.csv")
}

fn evaluate_into(out: &Path) -> Output {
    let data = blobs();
    actens(&[
        "evaluate",
        "--data",
        data.to_str().unwrap(),
        "--family",
        "relu,prelu,melu4",
        "--max-input",
        "1,255",
        "--epochs",
        "3",
        "--folds",
        "3",
        "--lr",
        "0.01",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn basis_prints_schedule() {
    let o = actens(&["basis", "--max-input", "256", "--k", "8"]);
    assert!(o.status.success());
    assert_eq!(
        stdout(&o),
        "max_input,j,a,lambda\n256,1,512,512\n256,2,256,256\n256,3,768,256\n\
         256,4,128,128\n256,5,384,128\n256,6,640,128\n256,7,896,128\n"
    );
}

#[test]
fn gradcheck_default_suite_passes() {
    let o = actens(&["gradcheck", "--points", "200"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.ends_with(" ok")).count(), 27);
    assert!(!out.contains("skipped"));
}

#[test]
fn gradcheck_published_mode_reports_skips() {
    let o = actens(&["gradcheck", "--points", "100", "--published-gradients"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.lines().filter(|l| l.contains("skipped (intentional)")).count() >= 3);
}

#[test]
fn gradcheck_single_family() {
    let o = actens(&["gradcheck", "--family", "melu", "--k", "8", "--max-input", "256", "--points", "50"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1);
    assert!(out.starts_with("melu8@256") && out.contains("params/channel  8"), "{out}");
}

#[test]
fn evaluate_report_and_ensemble() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let oa = evaluate_into(a.path());
    assert!(oa.status.success(), "{}", String::from_utf8_lossy(&oa.stderr));
    assert!(evaluate_into(b.path()).status.success());
    for f in ["report.csv", "folds.csv", "wilcoxon.csv", "report.md"] {
        let (x, y) = (std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        assert_eq!(x, y, "{f}");
    }
    let report = std::fs::read_to_string(a.path().join("report.csv")).unwrap();
    assert!(report.starts_with("method,blobs,Avg\n"), "{report}");
    assert!(report.contains("\nENS@1,") && report.contains("\nENS@255,") && report.contains("\neENS,"));

    // the saved config reproduces the run
    let c = tempfile::tempdir().unwrap();
    let cfg = a.path().join("config.json");
    let oc = actens(&["evaluate", "--config", cfg.to_str().unwrap(), "--out", c.path().to_str().unwrap()]);
    assert!(oc.status.success(), "{}", String::from_utf8_lossy(&oc.stderr));
    assert_eq!(std::fs::read(c.path().join("report.csv")).unwrap(), report.as_bytes());

    // a lost cell leaves a blank and the report still builds
    std::fs::remove_file(a.path().join("cells/blobs/prelu@1/fold1.csv")).unwrap();
    let r = tempfile::tempdir().unwrap();
    let or = actens(&["report", a.path().to_str().unwrap(), "--out", r.path().to_str().unwrap()]);
    assert!(or.status.success());
    let rebuilt = std::fs::read_to_string(r.path().join("report.csv")).unwrap();
    let line = rebuilt.lines().find(|l| l.starts_with("prelu@1,")).unwrap();
    assert_eq!(line, "prelu@1,,");

    // fuse two cells by hand
    let labels = a.path().join("cells/blobs/labels_fold0.csv");
    let o = actens(&[
        "ensemble",
        a.path().join("cells/blobs/relu@1/fold0.csv").to_str().unwrap(),
        a.path().join("cells/blobs/melu4@1/fold0.csv").to_str().unwrap(),
        "--labels",
        labels.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("accuracy "));
    assert!(stdout(&o).lines().count() > 1);
}

#[test]
fn exit_codes() {
    assert_eq!(actens(&["basis", "--bogus"]).status.code(), Some(1));
    assert_eq!(actens(&["--help"]).status.code(), Some(0));
    assert_eq!(actens(&["evaluate"]).status.code(), Some(1));
    assert_eq!(actens(&["evaluate", "--data", "/nonexistent/x.csv"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(actens(&["evaluate", "--data", empty.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(actens(&["basis", "--folds", "1"]).status.code(), Some(1));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"epoch\": 3}").unwrap();
    assert_eq!(actens(&["basis", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(actens(&["ensemble", empty.to_str().unwrap()]).status.code(), Some(1));
}
