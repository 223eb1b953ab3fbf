use std::path::{Path, PathBuf};
use std::process::Command;

use adaptherm::checkpoint::{self, Model, ModelKind};
use adaptherm::config::{config_hash, parse_config, to_json};
use adaptherm::datafile;
use adaptherm_core::mesh::SpacecraftConfig;
use adaptherm_core::nnet::{Activation, MlpParams, MlpSpec, OutputActivation};
use proptest::prelude::*;

fn spec_strategy() -> impl Strategy<Value = MlpSpec> {
    (1usize..6, 1usize..4, 1usize..6, 1usize..5, any::<bool>(), any::<bool>()).prop_map(|(i, l, w, o, relu, sig)| {
        MlpSpec {
            input_dim: i,
            hidden_layers: l,
            hidden_width: w,
            output_dim: o,
            activation: if relu { Activation::Relu } else { Activation::Tanh },
            output_activation: if sig {
                OutputActivation::Sigmoid
            } else {
                OutputActivation::Identity
            },
        }
    })
}

fn bits(net: &MlpParams) -> Vec<u64> {
    net.weights
        .iter()
        .chain(&net.biases)
        .flat_map(|t| t.iter().map(|x| x.to_bits()))
        .collect()
}

proptest! {
    #[test]
    fn ann_checkpoint_round_trips(spec in spec_strategy(), seed in any::<u64>(), scale in 1e-3f64..1e3) {
        let net = MlpParams::init(spec, seed).unwrap();
        let b = checkpoint::encode_net(ModelKind::Ann, &net, scale).unwrap();
        match checkpoint::decode_net(&b).unwrap() {
            Model::Ann(m) => {
                prop_assert_eq!(m.net.spec, spec);
                prop_assert_eq!(m.load_scale.to_bits(), scale.to_bits());
                prop_assert_eq!(bits(&m.net), bits(&net));
            }
            other => prop_assert!(false, "decoded as {:?}", other.kind()),
        }
    }

    #[test]
    fn truncated_checkpoint_is_an_error(spec in spec_strategy(), cut in 0.0f64..1.0) {
        let net = MlpParams::init(spec, 1).unwrap();
        let b = checkpoint::encode_net(ModelKind::Ann, &net, 1.0).unwrap();
        let n = ((b.len() as f64) * cut) as usize;
        prop_assert!(checkpoint::decode_net(&b[..n]).is_err());
    }

    #[test]
    fn random_bytes_never_panic(b in proptest::collection::vec(any::<u8>(), 0..256)) {
        let _ = checkpoint::decode_net(&b);
        let _ = datafile::decode(&b);
    }
}

#[test]
fn config_json_round_trips() {
    let c = SpacecraftConfig::default_spacecraft();
    let back = parse_config(&to_json(&c)).unwrap();
    assert_eq!(back.len(), c.len());
    assert_eq!(config_hash(&back), config_hash(&c));
    for (a, b) in back.surfaces.iter().zip(&c.surfaces) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.kind, b.kind);
        assert!((a.width - b.width).abs() < 1e-12 && (a.height - b.height).abs() < 1e-12);
    }
}

#[test]
fn config_errors_name_the_field() {
    let c = SpacecraftConfig::default_spacecraft();
    let text = to_json(&c).replacen("\"ir_emissivity\": 0.", "\"ir_emissivity\": 7.", 1);
    let e = parse_config(&text).unwrap_err().to_string();
    assert!(e.contains("ir_emissivity"), "{e}");
    let e = parse_config("{ \"schema_version\": 1, ").unwrap_err().to_string();
    assert!(e.contains("line"), "{e}");
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adaptherm"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("adaptherm-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str]) -> (i32, String, String) {
    let o = bin().args(args).output().unwrap();
    (
        o.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&o.stdout).into_owned(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).0, 0);
    assert_eq!(run(&["train", "--no-such-flag"]).0, 1);
    let d = scratch("exit");
    let (code, _, err) = run(&["dataset", "inspect", "--dataset", p(&d.join("missing.bin"))]);
    assert_eq!(code, 1);
    assert!(err.contains("missing.bin"), "{err}");
    // far beyond the explicit stability limit
    let out = d.join("blowup.csv");
    let (code, _, err) = run(&[
        "simulate",
        "--rays",
        "50",
        "--n",
        "10",
        "--dt",
        "2000",
        "--duration",
        "200000",
        "--every",
        "2000",
        "--out",
        p(&out),
    ]);
    assert_eq!(code, 2, "{err}");
    std::fs::remove_dir_all(&d).ok();
}

#[test]
fn small_pipeline() {
    let d = scratch("pipeline");
    let data = d.join("data.bin");
    let (code, _, err) = run(&[
        "dataset",
        "generate",
        "--rays",
        "100",
        "--orbits",
        "2",
        "--samples",
        "3",
        "--duration",
        "2",
        "--out",
        p(&data),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(data.with_extension("json").exists());
    let (code, out, err) = run(&["dataset", "inspect", "--dataset", p(&data)]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("6 samples"), "{out}");

    let models = d.join("models");
    for kind in ["lf", "hf", "piml-a"] {
        let (code, _, err) = run(&[
            "train",
            kind,
            "--dataset",
            p(&data),
            "--out",
            p(&models),
            "--epochs",
            "1",
        ]);
        assert_eq!(code, 0, "{kind}: {err}");
    }
    let ckpt = models.join("piml-a.ckpt");
    assert!(ckpt.exists() && models.join("piml-a_log.csv").exists());
    let log = std::fs::read_to_string(models.join("piml-a_log.csv")).unwrap();
    assert!(log.starts_with("# adaptherm"), "{log}");

    let reports = d.join("reports");
    let (code, _, err) = run(&[
        "eval",
        "--dataset",
        p(&data),
        "--split",
        "all",
        "--out",
        p(&reports),
        "--checkpoint",
        p(&models.join("lf.json")),
        "--checkpoint",
        p(&models.join("hf.json")),
        "--checkpoint",
        p(&ckpt),
    ]);
    assert_eq!(code, 0, "{err}");
    let mae = std::fs::read_to_string(reports.join("mae_per_face.csv")).unwrap();
    let rows: Vec<&str> = mae.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 4, "{mae}");
    let hf = rows.iter().find(|r| r.starts_with("hf,")).unwrap();
    assert!(hf.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0), "{hf}");
    for f in ["nodalization_hist.csv", "orbit_error.csv"] {
        assert!(reports.join(f).exists(), "{f}");
    }
    std::fs::remove_dir_all(&d).ok();
}
