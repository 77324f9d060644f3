use std::path::Path;
use std::process::Command;

use usx_cli::run_cli;

const TINY: &str = r#"
seed = 7
[dataset]
toy_spines = 2
[joint_rep]
us_points = 64
xray_points = 32
gt_points = 128
[network]
coarse_points = 32
feat_dim = 16
latent_dim = 16
enc_hidden = [16, 16]
dec_hidden = 32
width = 16
heads = 2
blocks = 1
[train]
epochs = 2
learning_rate = 0.001
[eval.emd]
exact_threshold = 128
"#;

fn usx(args: &[&str]) -> i32 {
    run_cli(std::iter::once("usx").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = root.join("cfg.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let c = p(&cfg);
    let data = root.join("data");
    assert_eq!(usx(&["simulate", "--config", c, "--jobs", "2", "--out", p(&data)]), 0);
    assert!(data.join("manifest.json").exists());

    for mode in ["baseline", "ours"] {
        let run = root.join(format!("run_{mode}"));
        assert_eq!(usx(&["train", "--config", c, "--data", p(&data), "--out", p(&run), "--mode", mode]), 0);
        let log = std::fs::read_to_string(run.join("train_log.csv")).unwrap();
        assert!(log.starts_with("# config_digest "));
        assert_eq!(log.lines().count(), 2 + 2);
        let pred = root.join(format!("pred_{mode}"));
        assert_eq!(
            usx(&["complete", "--config", c, "--deterministic", "--model", p(&run.join("model.vxc")), "--data", p(&data), "--out", p(&pred)]),
            0
        );
        let timing: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(pred.join("timing.json")).unwrap()).unwrap();
        assert_eq!(timing["seconds"].as_object().unwrap().len(), 2);
        let id = timing["seconds"].as_object().unwrap().keys().next().unwrap().clone();
        for f in ["coarse.ply", "refined.ply", "joint.ply"] {
            assert!(pred.join(&id).join(f).exists(), "{f}");
        }
    }

    let eval = root.join("eval");
    let pa = format!("ours={}", p(&root.join("pred_ours")));
    let pb = format!("baseline={}", p(&root.join("pred_baseline")));
    assert_eq!(usx(&["evaluate", "--config", c, "--data", p(&data), "--pred", &pa, "--pred", &pb, "--out", p(&eval)]), 0);
    let table = std::fs::read_to_string(eval.join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 2 + 6);
    let pairs = std::fs::read_to_string(eval.join("pairs.csv")).unwrap();
    assert_eq!(pairs.lines().count(), 2 + 2 * 2 * 3);

    // Two test vertebrae are too few for a signed-rank test.
    let pairs_csv = eval.join("pairs.csv");
    let code = usx(&["stats", "--a", p(&pairs_csv), "--b", p(&pairs_csv), "--method-a", "ours", "--method-b", "baseline"]);
    assert_eq!(code, 2);
    // Several methods in one file need an explicit choice.
    assert_eq!(usx(&["stats", "--a", p(&pairs_csv), "--b", p(&pairs_csv)]), 1);
}

#[test]
fn stats_on_handmade_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut a = String::from("# config_digest x\nmethod,id,region,cd_x1e4,emd_x1e4,f1\n");
    let mut b = a.clone();
    for i in 0..8 {
        for r in ["whole", "arch", "body"] {
            a.push_str(&format!("a,v{i},{r},{},{},0.5\n", 1.0 + i as f64, 2.0 + i as f64));
            b.push_str(&format!("b,v{i},{r},{},{},NA\n", 2.0 + 2.0 * i as f64, 2.0 + i as f64));
        }
    }
    let (pa, pb) = (tmp.path().join("a.csv"), tmp.path().join("b.csv"));
    std::fs::write(&pa, &a).unwrap();
    std::fs::write(&pb, &b).unwrap();
    let out = tmp.path().join("stats.csv");
    assert_eq!(usx(&["stats", "--a", p(&pa), "--b", p(&pb), "--out", p(&out)]), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let cd = text.lines().find(|l| l.starts_with("whole,cd_x1e4,")).unwrap();
    let f: Vec<&str> = cd.split(',').collect();
    // All eight differences negative: W+ = 0, W- = 36, exact p = 2/256.
    assert_eq!(&f[5..10], &["0", "36", "0", "0.0078125", "true"]);
    // EMD differences are all zero and F1 is undefined for b.
    assert!(text.lines().any(|l| l.starts_with("whole,emd_x1e4,") && l.contains("insufficient")));
    assert!(text.lines().any(|l| l.starts_with("body,f1,0,")));

    let c = b.replace("v7", "v9");
    std::fs::write(&pb, c).unwrap();
    assert_eq!(usx(&["stats", "--a", p(&pa), "--b", p(&pb)]), 2);
}

#[test]
fn exit_codes_from_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_usx");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code().unwrap();
    assert_eq!(status(&["--version"]), 0);
    assert_eq!(status(&["frobnicate"]), 1);
    assert_eq!(status(&["train", "--data", "x"]), 1);
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[train]\nepochz = 3\n").unwrap();
    assert_eq!(status(&["simulate", "--config", p(&bad), "--out", p(tmp.path())]), 1);
    let meshes = tmp.path().join("meshes.toml");
    std::fs::write(&meshes, "[dataset]\nsource = \"meshes\"\n").unwrap();
    assert_eq!(status(&["simulate", "--config", p(&meshes), "--out", p(tmp.path())]), 1);
    assert_eq!(status(&["train", "--data", p(&tmp.path().join("missing")), "--out", p(tmp.path())]), 2);
    assert_eq!(status(&["train", "--data", p(tmp.path()), "--out", p(tmp.path()), "--mode", "bogus"]), 1);
    assert_eq!(status(&["simulate", "--jobs", "0", "--out", p(tmp.path())]), 1);
}

#[test]
fn single_mesh_is_simulated() {
    let tmp = tempfile::tempdir().unwrap();
    let mesh = usx_core::dataset::generate_toy_vertebra(&Default::default()).unwrap();
    let path = tmp.path().join("v.ply");
    usx_core::geom::io::write_ply_mesh(&path, &mesh).unwrap();
    let cfg = tmp.path().join("cfg.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let out = tmp.path().join("data");
    assert_eq!(usx(&["simulate", "--config", p(&cfg), "--out", p(&out), p(&path)]), 0);
    let s = usx_core::sample::VertebraSample::load(&out.join("samples").join("v_L1")).unwrap();
    assert_eq!((s.us_partial.len(), s.xray_partial.len(), s.complete.len()), (64, 32, 128));
}
