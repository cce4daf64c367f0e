use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn totseg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_totseg")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn files_under(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn synth_is_deterministic_and_ordered() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(totseg(&["synth", "--out", "a", "--k", "5", "--videos", "20", "--seed", "7"], d));
    ok(totseg(&["synth", "--out", "b", "--k", "5", "--videos", "20", "--seed", "7"], d));
    let a = files_under(&d.join("a"));
    assert_eq!(a, files_under(&d.join("b")));
    assert_eq!(a.len(), 20 * 2 + 1);

    let gt = lines(&d.join("a/synthetic/groundTruth/video_000.txt"));
    let mut order: Vec<&str> = gt.iter().map(String::as_str).collect();
    order.dedup();
    assert_eq!(order, ["action_0", "action_1", "action_2", "action_3", "action_4"]);
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(totseg(&["synth", "--out", "data", "--videos", "6", "--seed", "3", "--segment-len", "30"], d));
    let train = ok(totseg(
        &[
            "train",
            "--data",
            "data",
            "--out",
            "models",
            "--batch",
            "64",
            "--iterations",
            "150",
            "--sigma",
            "1.0",
            "--freeze-iters",
            "20",
        ],
        d,
    ));
    assert!(stdout(&train).contains("batch = 64  # flag"));
    assert!(d.join("models/synthetic.totc").is_file());
    let log = lines(&d.join("models/synthetic.log"));
    assert_eq!(log[0], "iter, L_CE, L_TC, L, row_err, col_err");
    assert_eq!(log.len(), 151);

    ok(totseg(&["segment", "--model", "models", "--data", "data", "--out", "pred"], d));
    let first = files_under(&d.join("pred"));
    ok(totseg(&["segment", "--model", "models/synthetic.totc", "--data", "data", "--out", "pred"], d));
    assert_eq!(first, files_under(&d.join("pred")), "segmentation rerun differs");

    for v in 0..6 {
        let name = format!("video_{v:03}");
        let labels: Vec<usize> =
            lines(&d.join(format!("pred/synthetic/labels/{name}.txt"))).iter().map(|l| l.parse().unwrap()).collect();
        let gt = lines(&d.join(format!("data/synthetic/groundTruth/{name}.txt")));
        assert_eq!(labels.len(), gt.len());
        assert!(labels.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
        let timeline = lines(&d.join(format!("pred/synthetic/timeline/{name}.csv")));
        assert_eq!(timeline[0], "cluster,start,end");
        assert_eq!(timeline.len(), 1 + 5);
    }

    let eval = ok(totseg(&["eval", "--pred", "pred", "--gt", "data", "--report", "report.txt"], d));
    assert!(stdout(&eval).contains("overall: MOF"));
    let report = fs::read_to_string(d.join("report.txt")).unwrap();
    for key in ["mof=", "f1=", "synthetic.mof=", "synthetic.f1=", "synthetic.matched_frames=", "synthetic.mapping.4="] {
        assert!(report.lines().any(|l| l.starts_with(key)), "missing {key} in\n{report}");
    }
    assert!(!report.contains("NaN"));
}

#[test]
fn ground_truth_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(totseg(&["synth", "--out", "data", "--videos", "3", "--segment-len", "10"], d));
    let out = ok(totseg(&["eval", "--pred", "data", "--gt", "data", "--report", "r.txt"], d));
    assert!(stdout(&out).contains("overall: MOF 100.00%  F1 100.00%"));
    let r = fs::read_to_string(d.join("r.txt")).unwrap();
    assert!(r.contains("mof=1.000000") && r.contains("f1=1.000000"));
}

#[test]
fn excluded_background_frames_are_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(totseg(&["synth", "--out", "data", "--videos", "2", "--segment-len", "10", "--jitter", "0"], d));
    // predictions equal the ground truth except on action_0 frames
    let pred_dir = d.join("pred/synthetic/labels");
    fs::create_dir_all(&pred_dir).unwrap();
    for v in ["video_000", "video_001"] {
        let gt = lines(&d.join(format!("data/synthetic/groundTruth/{v}.txt")));
        let pred: Vec<&str> = gt.iter().map(|l| if l == "action_0" { "action_3" } else { l.as_str() }).collect();
        fs::write(pred_dir.join(format!("{v}.txt")), pred.join("\n") + "\n").unwrap();
    }
    let without = ok(totseg(&["eval", "--pred", "pred", "--gt", "data", "--exclude-background", "action_0"], d));
    assert!(stdout(&without).contains("(80 / 80 frames matched"), "{}", stdout(&without));
    assert!(stdout(&without).contains("MOF 100.00%"));
    let with = ok(totseg(&["eval", "--pred", "pred", "--gt", "data"], d));
    assert!(!stdout(&with).contains("MOF 100.00%"));

    let bad = totseg(&["eval", "--pred", "pred", "--gt", "data", "--exclude-background", "nope"], d);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn config_precedence_and_reference_settings() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(totseg(&["synth", "--out", "data", "--videos", "3", "--jitter", "0.1"], d));
    fs::write(d.join("run.cfg"), "# settings\nrho = 0.2\nsigma = 1.5\nembed-dim = 12\n").unwrap();
    let out = ok(totseg(
        &["train", "--data", "data", "--out", "m", "--config", "run.cfg", "--rho", "0.3", "--iterations", "2"],
        d,
    ));
    let s = stdout(&out);
    assert!(s.contains("rho = 0.3  # flag"));
    assert!(s.contains("sigma = 1.5  # file"));
    assert!(s.contains("embed_dim = 12  # file"));
    assert!(s.contains("lr = 0.001  # default"));

    let tot = ok(totseg(
        &[
            "train",
            "--data",
            "data",
            "--out",
            "m",
            "--mode",
            "tot",
            "--rho",
            "0.07",
            "--sigma",
            "2.5",
            "--batch",
            "512",
            "--tau",
            "0.1",
            "--sinkhorn-iters",
            "3",
            "--lr",
            "1e-3",
            "--wd",
            "1e-4",
            "--iterations",
            "2",
        ],
        d,
    ));
    let s = stdout(&tot);
    for line in [
        "mode = tot  # flag",
        "rho = 0.07  # flag",
        "sigma = 2.5  # flag",
        "batch = 512  # flag",
        "tau = 0.1  # flag",
        "sinkhorn_iters = 3  # flag",
        "lr = 0.001  # flag",
        "wd = 0.0001  # flag",
        "videos_per_batch = 2  # default",
    ] {
        assert!(s.contains(line), "missing {line:?} in\n{s}");
    }
    let tcl = ok(totseg(
        &[
            "train",
            "--data",
            "data",
            "--out",
            "m",
            "--mode",
            "tot+tcl",
            "--lambda",
            "30",
            "--alpha",
            "1.0",
            "--iterations",
            "2",
        ],
        d,
    ));
    let s = stdout(&tcl);
    assert!(
        s.contains("mode = tot+tcl  # flag") && s.contains("lambda = 30  # flag") && s.contains("alpha = 1  # flag")
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(totseg(&["train", "--out", "m"], d).status.code(), Some(1));
    assert_eq!(totseg(&["train", "--data", "missing", "--out", "m"], d).status.code(), Some(1));
    assert_eq!(totseg(&["bogus"], d).status.code(), Some(1));
    assert_eq!(totseg(&["--help"], d).status.code(), Some(0));

    ok(totseg(&["synth", "--out", "data", "--videos", "3", "--jitter", "0.1"], d));
    fs::write(d.join("bad.cfg"), "unknown_key = 1\n").unwrap();
    let o = totseg(&["train", "--data", "data", "--out", "m", "--config", "bad.cfg"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown_key"));
    assert_eq!(totseg(&["train", "--data", "data", "--out", "m", "--rho", "-1"], d).status.code(), Some(1));

    // checkpoint trained on 16-dimensional features, applied to 8-dimensional ones
    ok(totseg(&["train", "--data", "data", "--out", "m", "--iterations", "1"], d));
    ok(totseg(&["synth", "--out", "narrow", "--videos", "2", "--dim", "8"], d));
    let o = totseg(&["segment", "--model", "m", "--data", "narrow", "--out", "p"], d);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));

    // a sampling window that cannot be met is a data error
    let o = totseg(&["train", "--data", "data", "--out", "m", "--batch", "4000", "--iterations", "1"], d);
    assert_eq!(o.status.code(), Some(2));
}
