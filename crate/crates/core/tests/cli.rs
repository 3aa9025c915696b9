use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use superrad::experiments::RunRecord;

fn superrad(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_superrad"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("SUPERRAD_OUT")
        .output()
        .unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn free_decay_writes_documented_files() {
    let tmp = tempfile::tempdir().unwrap();
    let o = superrad(&["free-decay", "--n", "4", "--sweep", "gamma:0.5:1:2"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p = tmp.path();
    assert_eq!(
        header(&p.join("free_decay_summary.csv")),
        "index,n,gamma,delay_time,delay_mf,boundary,peak_intensity,peak_intensity_per_atom,error"
    );
    assert_eq!(header(&p.join("free_decay_point000.csv")), "t,intensity,intensity_per_atom,jz_per_n");
    assert!(p.join("free_decay_point001.csv").exists());
    assert!(p.join("free_decay_timing.json").exists());

    let text = fs::read_to_string(p.join("free_decay_record.json")).unwrap();
    let rec: RunRecord = serde_json::from_str(&text).unwrap();
    assert_eq!(rec.points.len(), 2);
    assert_eq!(serde_json::to_string_pretty(&rec).unwrap() + "\n", text);
}

#[test]
fn raman_summary_carries_standard_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let o = superrad(&["raman-pulse", "--n", "3", "--trajectories", "20", "--samples", "61"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p = tmp.path();
    assert_eq!(
        header(&p.join("raman_pulse_summary.csv")),
        "index,n,gamma,omega0,delta,pulse_length,peak_intensity_per_atom,peak_intensity_per_atom_se,peak_time,n_trajectories,n_failed,mean_jumps,error"
    );
    let h = header(&p.join("raman_pulse_point000.csv"));
    assert!(h.starts_with("t,intensity,intensity_per_atom,js_per_n,je_per_n,jg_per_n,"));
    assert!(h.contains("intensity_se"));
}

#[test]
fn steady_summary_lists_both_solvers() {
    let tmp = tempfile::tempdir().unwrap();
    let o = superrad(&["driven-steady", "--n", "4", "--sweep", "gamma:0.1:1:3"], tmp.path());
    assert!(o.status.success());
    let text = fs::read_to_string(tmp.path().join("driven_steady_summary.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().next().unwrap().contains("mf_regime"));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["raman-pulse", "--n", "4", "--trajectories", "30", "--seed", "5"];
    for d in ["a", "b"] {
        assert!(superrad(&args, &tmp.path().join(d)).status.success());
    }
    for f in ["raman_pulse_record.json", "raman_pulse_summary.csv", "raman_pulse_point000.csv"] {
        assert_eq!(fs::read(tmp.path().join("a").join(f)).unwrap(), fs::read(tmp.path().join("b").join(f)).unwrap());
    }
    let other = superrad(&["raman-pulse", "--n", "4", "--trajectories", "30", "--seed", "6"], &tmp.path().join("c"));
    assert!(other.status.success());
    assert_ne!(
        fs::read(tmp.path().join("a/raman_pulse_point000.csv")).unwrap(),
        fs::read(tmp.path().join("c/raman_pulse_point000.csv")).unwrap()
    );
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"n": 3, "gamma": 2.0, "t-max": 4.0, "samples": 21}"#).unwrap();
    let o = superrad(&["free-decay", "--config", cfg.to_str().unwrap(), "--gamma", "0.5"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rec: RunRecord =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("free_decay_record.json")).unwrap()).unwrap();
    let p = &rec.points[0].params;
    assert_eq!((p.n_atoms, p.gamma, p.t_max, p.n_samples), (3, 0.5, Some(4.0), 21));

    fs::write(&cfg, r#"{"atoms": 3}"#).unwrap();
    let o = superrad(&["free-decay", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn output_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("env_out");
    let o = Command::new(env!("CARGO_BIN_EXE_superrad"))
        .args(["free-decay", "--n", "2"])
        .env("SUPERRAD_OUT", &dir)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.join("free_decay_summary.csv").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| superrad(args, tmp.path()).status.code();
    assert_eq!(code(&["free-decay", "--gamma", "-1"]), Some(2));
    assert_eq!(code(&["free-decay", "--n", "0"]), Some(2));
    assert_eq!(code(&["driven-steady", "--solver", "mcwf"]), Some(2));
    assert_eq!(code(&["driven-steady", "--delta", "0.5"]), Some(2));
    assert_eq!(code(&["raman-pulse", "--solver", "meanfield"]), Some(2));
    assert_eq!(code(&["raman-pulse", "--sweep", "zeta:1:2:3"]), Some(2));
    assert_eq!(code(&["free-decay", "--trajectories", "0", "--solver", "mcwf"]), Some(2));

    // an unwritable output location is an I/O failure
    let file = tmp.path().join("not_a_dir");
    fs::write(&file, "").unwrap();
    assert_eq!(superrad(&["free-decay", "--n", "2"], &file).status.code(), Some(1));
}

#[test]
fn verify_subcommand_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_superrad"))
        .args(["verify", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")));
    assert!(tmp.path().join("verify.json").exists());
}
