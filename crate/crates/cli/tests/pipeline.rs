use std::path::Path;
use std::process::Command;

fn graphdial(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_graphdial")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "graphdial {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: &str = "\
count = 24
nodes = 8
p_min = 0.3
p_max = 0.7
dim = 3
epochs = 40
batch_size = 8
lr = 0.01
patience = none
checkpoint_every = 20
enc_layers = 1
dec_layers = 1
enc_hidden = 8
enc_embed = 8
dec_hidden = 8
dec_embed = 8
sos_dim = 8
latent_dim = 4
";

#[test]
fn dataset_train_generate_eval_latent() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = root.join("tiny.conf");
    std::fs::write(&cfg, TINY).unwrap();
    let data = root.join("data");
    let run = root.join("run");

    graphdial(&["dataset", "--kind", "er", "--feature", "density", "--seed", "3", "--config", s(&cfg), "--out", s(&data)]);
    let manifest = data.join("manifest.json");
    let text = std::fs::read_to_string(&manifest).unwrap();
    assert!(text.contains("\"density\""));

    // Same seed, same manifest bytes.
    let again = root.join("data2");
    graphdial(&["dataset", "--kind", "er", "--feature", "density", "--seed", "3", "--config", s(&cfg), "--out", s(&again)]);
    assert_eq!(std::fs::read(&manifest).unwrap(), std::fs::read(again.join("manifest.json")).unwrap());

    graphdial(&["train", "--manifest", s(&manifest), "--seed", "1", "--config", s(&cfg), "--out", s(&run)]);
    for f in ["best.ckpt", "last.ckpt", "epoch_00020.ckpt", "train_log.csv"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let log = std::fs::read_to_string(run.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 41);

    let ckpt = run.join("last.ckpt");
    let gen = root.join("gen");
    graphdial(&[
        "generate", "--checkpoint", s(&ckpt), "--condition", "0.3", "--condition", "0.6", "--count", "5", "--seed", "2",
        "--out", s(&gen),
    ]);
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(gen.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["conditions"].as_array().unwrap().len(), 2);
    let slots: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(gen.join("condition_0.3/metadata.json")).unwrap()).unwrap();
    assert_eq!(slots["slots"].as_array().unwrap().len(), 5);

    let ev = root.join("eval");
    graphdial(&[
        "eval", "--checkpoint", s(&ckpt), "--manifest", s(&manifest), "--condition", "0.3", "--condition", "0.6",
        "--count", "6", "--seed", "2", "--out", s(&ev),
    ]);
    for f in ["report.txt", "features.csv", "pairplot.svg", "metadata.json"] {
        assert!(ev.join(f).exists(), "{f} missing");
    }
    let report = std::fs::read_to_string(ev.join("report.txt")).unwrap();
    assert!(report.contains("dataset 25/50/75%"));

    let lat = root.join("latent");
    let out = graphdial(&[
        "latent", "--checkpoint", s(&ckpt), "--manifest", s(&manifest), "--count", "4", "--seed", "2", "--out", s(&lat),
    ]);
    assert_eq!(out.lines().filter(|l| l.trim_start().starts_with('z')).count(), 4);

    // Wrong latent size is a configuration error.
    let bad = Command::new(env!("CARGO_BIN_EXE_graphdial"))
        .args(["latent", "--checkpoint", s(&ckpt), "--manifest", s(&manifest), "--latent-dim", "3", "--out", s(&lat)])
        .output()
        .unwrap();
    assert!(!bad.status.success());
}

#[test]
fn rejects_unknown_config_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.conf");
    std::fs::write(&cfg, "epochz = 3\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_graphdial"))
        .args(["dataset", "--config", s(&cfg), "--out", s(tmp.path())])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
}
