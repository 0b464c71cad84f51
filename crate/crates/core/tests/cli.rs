use std::fs;
use std::process::Command;

fn dcsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dcsim"))
}

#[test]
fn paired_run_writes_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dcsim()
        .args(["--paired", "--runs", "2", "--duration-s", "2", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("dc") && stdout.contains("hh"));
    for mode in ["dc", "hh"] {
        for i in 0..2 {
            let dir = tmp.path().join(format!("default/{mode}/run{i}"));
            for f in [
                "summary.csv",
                "throughput_series.csv",
                "latency_series.csv",
                "association.csv",
                "rrc_traffic.csv",
                "channel_trace.csv",
                "messages.csv",
                "procedures.csv",
            ] {
                assert!(dir.join(f).is_file(), "{mode}/run{i}/{f}");
            }
            assert!(!dir.join("events.csv").exists());
        }
        assert!(tmp.path().join(format!("default/{mode}/aggregate.csv")).is_file());
    }
    let series = fs::read_to_string(tmp.path().join("default/dc/run0/throughput_series.csv")).unwrap();
    // Header plus 20 windows of 100 ms.
    assert_eq!(series.lines().count(), 21);
}

#[test]
fn config_file_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("slow_x2.toml");
    fs::write(&cfg, "mode = \"hh\"\nx2_latency_ms = 10.0\nruns = 1\nduration_s = 1.0\n").unwrap();
    let out = dcsim()
        .arg("--config")
        .arg(&cfg)
        .args(["--seed", "9", "--packet-log", "--trace", "--out"])
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = tmp.path().join("o/slow_x2/hh/run0");
    assert!(run.join("packets.csv").is_file());
    assert!(run.join("events.csv").is_file());
    let summary = fs::read_to_string(run.join("summary.csv")).unwrap();
    assert!(summary.contains("mode,hh"));
}

#[test]
fn sweep_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dcsim()
        .args(["--sweep-x2", "0.1,10", "--sweep-speed", "8,16", "--runs", "1", "--duration-s", "1", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for label in ["default_x2-0.1ms_speed-8", "default_x2-10ms_speed-16"] {
        assert!(tmp.path().join(label).join("dc/run0/summary.csv").is_file(), "{label}");
    }
}

#[test]
fn bad_input_exits_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "rlc_buffer_bytes = 0\n").unwrap();
    let out = dcsim().arg("--config").arg(&cfg).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rlc_buffer_bytes"));

    let out = dcsim().args(["--ue-speed", "-1", "--out"]).arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = dcsim()
        .args(["--scenario", "/nonexistent/scenario.toml", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_ne!(out.status.code(), Some(0));

    let out = dcsim().args(["--mode", "xx"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scenario_file_is_used() {
    let tmp = tempfile::tempdir().unwrap();
    let lte = "[[enb]]\nid = 1\nkind = \"lte\"\nx = 0.0\ny = 50.0\n\n";
    let path = "[ue_path]\nstart_x = 0.0\nstart_y = 0.0\nend_x = 10.0\nend_y = 0.0\n";
    let lte_only = tmp.path().join("lte_only.toml");
    fs::write(&lte_only, format!("{lte}{path}")).unwrap();
    let out = dcsim().arg("--scenario").arg(&lte_only).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mmWave"));

    // A mmWave cell far out of range leaves the UE on LTE for the whole run.
    let far = tmp.path().join("far.toml");
    let mm = "[[enb]]\nid = 2\nkind = \"mmwave\"\nx = 50000.0\ny = 0.0\n\n";
    fs::write(&far, format!("{lte}{mm}{path}")).unwrap();
    let out = dcsim()
        .arg("--scenario")
        .arg(&far)
        .args(["--runs", "1", "--out"])
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let assoc = fs::read_to_string(tmp.path().join("o/default/dc/run0/association.csv")).unwrap();
    assert_eq!(assoc.lines().count(), 2, "{assoc}");
    assert!(assoc.lines().nth(1).unwrap().ends_with(",1"), "{assoc}");
}
