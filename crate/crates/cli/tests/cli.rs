use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hypgeo::checkpoint::Checkpoint;
use hypgeo::stats::spearman;

fn hypgeo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypgeo"))
        .args(args)
        .env("HYPGEO_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = hypgeo(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn floats(row: &[String], from: usize) -> Vec<f64> {
    row[from..].iter().map(|v| v.parse().unwrap()).collect()
}

/// Small tree and model so a full pipeline runs in seconds.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        std::fs::write(
            root.join("cfg.toml"),
            "latent_dim = 4\nencoder_hidden = [16]\ndecoder_hidden = [16]\nepochs = 4\nbatch_size = 16\n\
             stage3_steps = 40\nmapper_hyp_hidden = 8\nmapper_feat_hidden = 8\nmapper_delta_hidden = 8\n\
             mapper_fusion_hidden = 8\n",
        )
        .unwrap();
        let f = Fixture { _dir: dir, root };
        ok(&[
            "gen-data",
            "--branching",
            "2,2",
            "--level-scales",
            "2,1",
            "--feat-dim",
            "8",
            "--samples-per-leaf",
            "10",
            "--out",
            s(&f.p("data.jsonl")),
        ]);
        ok(&[
            "split",
            "--data",
            s(&f.p("data.jsonl")),
            "--train-out",
            s(&f.p("train.jsonl")),
            "--val-out",
            s(&f.p("val.jsonl")),
        ]);
        f
    }

    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn train2(&self, out: &str, metrics: &str, extra: &[&str]) {
        let paths = [
            self.p("train.jsonl"),
            self.p("val.jsonl"),
            self.p("cfg.toml"),
            self.p(out),
            self.p(metrics),
        ];
        let mut args = vec![
            "train",
            "--stage",
            "2",
            "--data",
            s(&paths[0]),
            "--val",
            s(&paths[1]),
            "--config",
            s(&paths[2]),
            "--out",
            s(&paths[3]),
            "--metrics",
            s(&paths[4]),
        ];
        args.extend_from_slice(extra);
        ok(&args);
    }
}

#[test]
fn gen_data_defaults_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    ok(&["gen-data", "--seed", "7", "--out", s(&a)]);
    ok(&["gen-data", "--seed", "7", "--out", s(&b)]);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 6400);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn bad_flags_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.jsonl");
    let r = hypgeo(&["gen-data", "--branching", "0", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("branching"));
    assert_eq!(hypgeo(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(hypgeo(&["--help"]).status.code(), Some(0));
}

#[test]
fn outputs_are_not_overwritten_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.jsonl");
    std::fs::write(&out, "keep").unwrap();
    let args = ["gen-data", "--branching", "2", "--level-scales", "1", "--out", s(&out)];
    assert_eq!(hypgeo(&args).status.code(), Some(1));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "keep");
    let mut forced = args.to_vec();
    forced.push("--force");
    ok(&forced);
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 200);
}

#[test]
fn missing_files_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let r = hypgeo(&[
        "split",
        "--data",
        "/nonexistent/data.jsonl",
        "--train-out",
        s(&dir.path().join("t")),
        "--val-out",
        s(&dir.path().join("v")),
    ]);
    assert_eq!(r.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&r.stderr).contains("/nonexistent/data.jsonl"));
}

#[test]
fn stage3_requires_init() {
    let f = Fixture::new();
    let r = hypgeo(&[
        "train",
        "--stage",
        "3",
        "--data",
        s(&f.p("train.jsonl")),
        "--out",
        s(&f.p("m.ckpt")),
    ]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("--init"));
}

#[test]
fn training_is_reproducible_and_checkpoints_round_trip() {
    let f = Fixture::new();
    f.train2("a.ckpt", "a.csv", &[]);
    f.train2("b.ckpt", "b.csv", &[]);
    let a = std::fs::read(f.p("a.ckpt")).unwrap();
    assert_eq!(a, std::fs::read(f.p("b.ckpt")).unwrap());
    assert_eq!(std::fs::read(f.p("a.csv")).unwrap(), std::fs::read(f.p("b.csv")).unwrap());
    let again = Checkpoint::from_bytes(&a).unwrap().to_bytes().unwrap();
    assert_eq!(a, again);

    let m = rows(&f.p("a.csv"));
    assert_eq!(m[0].join(","), "step,lr,loss_hyper,loss_rec,acc,spearman_radius_depth");
    assert_eq!(m.len(), 5);
}

#[test]
fn rec_only_zeroes_the_classification_column() {
    let f = Fixture::new();
    f.train2("r.ckpt", "r.csv", &["--rec-only"]);
    for row in &rows(&f.p("r.csv"))[1..] {
        assert_eq!(row[2].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn embed_matches_training_log_spearman() {
    let f = Fixture::new();
    f.train2("m.ckpt", "m.csv", &[]);
    let out = f.p("emb.csv");
    ok(&[
        "embed",
        "--ckpt",
        s(&f.p("m.ckpt")),
        "--data",
        s(&f.p("val.jsonl")),
        "--with-ancestors",
        "--out",
        s(&out),
    ]);
    let table = rows(&out);
    assert_eq!(table[0][..5].join(","), "id,leaf,depth,path,radius");
    let body = &table[1..];
    let leaves: Vec<_> = body.iter().filter(|r| !r[1].is_empty()).collect();
    let val_len = std::fs::read_to_string(f.p("val.jsonl")).unwrap().lines().count();
    assert_eq!(leaves.len(), val_len);
    for r in body {
        assert!(r[4].parse::<f64>().unwrap() < 12.9);
    }

    // every leaf pairs with its ancestors along its path, and itself
    let mut depth = Vec::new();
    let mut radius = Vec::new();
    for leaf in &leaves {
        let path: Vec<&str> = leaf[3].split('/').collect();
        for level in 0..path.len() {
            let prefix = path[..level].join("/");
            let anc = body
                .iter()
                .find(|r| r[1].is_empty() && r[2] == level.to_string() && r[3] == prefix)
                .unwrap();
            depth.push(level as f64);
            radius.push(anc[4].parse::<f64>().unwrap());
        }
        depth.push(path.len() as f64);
        radius.push(leaf[4].parse::<f64>().unwrap());
    }
    let logged: f64 = rows(&f.p("m.csv")).last().unwrap()[5].parse().unwrap();
    assert!((spearman(&depth, &radius) - logged).abs() < 1e-6);
}

#[test]
fn embed_rejects_mismatched_data() {
    let f = Fixture::new();
    f.train2("m.ckpt", "m.csv", &[]);
    let other = f.p("wide.jsonl");
    ok(&["gen-data", "--branching", "2", "--level-scales", "1", "--feat-dim", "9", "--out", s(&other)]);
    let r = hypgeo(&["embed", "--ckpt", s(&f.p("m.ckpt")), "--data", s(&other), "--out", s(&f.p("e.csv"))]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn sample_interpolate_and_fuse_contracts() {
    let f = Fixture::new();
    f.train2("m.ckpt", "m.csv", &[]);
    let (ck, data) = (f.p("m.ckpt"), f.p("val.jsonl"));
    let out = f.p("children.csv");
    ok(&[
        "sample", "--ckpt", s(&ck), "--data", s(&data), "--ref", "3", "--n", "20", "--r-child", "0.7", "--out",
        s(&out),
    ]);
    let t = rows(&out);
    assert_eq!(t.len(), 21);
    assert_eq!(t[0][..4].join(","), "i,label,dist_to_parent,radius");
    for r in &t[1..] {
        assert!(r[2].parse::<f64>().unwrap() <= 0.7 + 1e-6);
    }

    let out = f.p("interp.csv");
    ok(&[
        "interpolate", "--ckpt", s(&ck), "--data", s(&data), "--from", "0", "--to", "7", "--radius", "6.2126",
        "--out", s(&out),
    ]);
    let t = rows(&out);
    assert_eq!(t.len(), 12);
    assert_eq!(t[0][..3].join(","), "t,radius,label");
    for r in &t[1..] {
        assert!((r[1].parse::<f64>().unwrap() - 6.2126).abs() < 1e-6);
    }

    let emb = f.p("emb.csv");
    ok(&["embed", "--ckpt", s(&ck), "--data", s(&data), "--out", s(&emb)]);
    let e = rows(&emb);
    let (ra, rb): (f64, f64) = (e[1][4].parse().unwrap(), e[8][4].parse().unwrap());
    let out = f.p("fuse.csv");
    ok(&[
        "fuse", "--ckpt", s(&ck), "--data", s(&data), "--a", "0", "--b", "7", "--r-level", "1.0", "--out",
        s(&out),
    ]);
    for r in &rows(&out)[1..] {
        assert!((r[1].parse::<f64>().unwrap() - ra.max(rb)).abs() < 1e-6);
    }
}

#[test]
fn stage3_and_zero_edit() {
    let f = Fixture::new();
    f.train2("m.ckpt", "m.csv", &[]);
    ok(&[
        "train",
        "--stage",
        "3",
        "--init",
        s(&f.p("m.ckpt")),
        "--data",
        s(&f.p("train.jsonl")),
        "--val",
        s(&f.p("val.jsonl")),
        "--out",
        s(&f.p("m3.ckpt")),
        "--metrics",
        s(&f.p("m3.csv")),
    ]);
    let m = rows(&f.p("m3.csv"));
    assert_eq!(m[0].join(","), "step,lr,loss_delta,val_cosine");
    let bytes = std::fs::read(f.p("m3.ckpt")).unwrap();
    let ck = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(ck.stage, 3);
    assert_eq!(ck.to_bytes().unwrap(), bytes);

    // editing needs a mapper
    let r = hypgeo(&[
        "edit", "--ckpt", s(&f.p("m.ckpt")), "--data", s(&f.p("val.jsonl")), "--source", "0", "--target", "5",
        "--out", s(&f.p("x.csv")),
    ]);
    assert_eq!(r.status.code(), Some(1));

    let emb = f.p("emb.csv");
    ok(&["embed", "--ckpt", s(&f.p("m3.ckpt")), "--data", s(&f.p("val.jsonl")), "--out", s(&emb)]);
    let z0 = floats(&rows(&emb)[1], 5);
    let out = f.p("edit.csv");
    ok(&[
        "edit", "--ckpt", s(&f.p("m3.ckpt")), "--data", s(&f.p("val.jsonl")), "--source", "0", "--target", "5",
        "--text", "--strength", "0", "--out", s(&out),
    ]);
    let t = rows(&out);
    assert_eq!(t.len(), 12);
    for r in &t[1..] {
        assert_eq!(floats(r, 3), z0);
    }
}

#[test]
fn grad_check_passes_and_detects_corruption() {
    let r = ok(&["grad-check", "--random", "--draws", "3"]);
    let text = String::from_utf8_lossy(&r.stdout);
    assert!(text.starts_with("parameter,max_rel_err,max_abs_err,status"));
    assert!(text.contains("stage2_loss.") && text.contains("delta_loss.") && text.contains("PASS"));
    let bad = hypgeo(&["grad-check", "--random", "--draws", "1", "--corrupt-gradient"]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
}
