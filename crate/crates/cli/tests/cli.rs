// SPDX-License-Identifier: Apache-2.0

use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idma-sim")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SWEEP_HEADER: &str = "config_id,dw,aw,nax,mem_preset,piece_bytes,total_bytes,cycles,util,launch_latency,failures";

#[test]
fn legalize_prints_burst_table() {
    let o = run(&["legalize", "--src", "0xF00", "--dst", "0x0", "--len", "8192", "--proto", "axi", "--dw", "64", "--side", "read"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "side,seq,addr,len");
    assert_eq!(
        &lines[1..],
        ["read,0,0xf00,256", "read,1,0x1000,2048", "read,2,0x1800,2048", "read,3,0x2000,2048", "read,4,0x2800,1792"]
    );
    let both = stdout(&run(&["legalize", "--src", "0xF00", "--dst", "0x0", "--len", "8192", "--dw", "64"]));
    assert_eq!(both.lines().filter(|l| l.starts_with("write,")).count(), 4);
}

#[test]
fn simulate_pulp_reports_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let o = run(&["simulate", "--config", "pulp", "--trace", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], SWEEP_HEADER);
    assert!(lines[1].starts_with("pulp,64,32,16,sram,8192,8192,"));
    let t = std::fs::read_to_string(&trace).unwrap();
    assert!(t.starts_with("cycle,unit,event,address,length,port\n"));
    assert_eq!(t.lines().filter(|l| l.contains(",r,")).count(), 1024);
}

#[test]
fn simulate_json_report() {
    let o = run(&["simulate", "--config", "base", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["failures"], 0);
    assert!(v["utilization"].as_f64().unwrap() > 0.9);
}

#[test]
fn sweep_rows_follow_input_order_and_are_monotone() {
    let o = Command::new(env!("CARGO_BIN_EXE_idma-sim"))
        .args(["sweep", "--param", "nax", "--values", "16,1,4,2,8", "--config", "hbm"])
        .env("IDMA_SIM_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<Vec<String>> = text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(text.lines().next(), Some(SWEEP_HEADER));
    let nax: Vec<u32> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert_eq!(nax, vec![16, 1, 4, 2, 8]);
    let mut by_nax: Vec<(u32, f64)> = rows.iter().map(|r| (r[3].parse().unwrap(), r[8].parse().unwrap())).collect();
    by_nax.sort_by_key(|p| p.0);
    assert!(by_nax.windows(2).all(|w| w[0].1 <= w[1].1), "{by_nax:?}");
}

#[test]
fn sweep_is_deterministic() {
    let args = ["sweep", "--param", "piece_bytes", "--values", "1,8,64", "--config", "base", "--seed", "4"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
}

#[test]
fn estimate_outputs() {
    let area = stdout(&run(&["estimate", "area", "--config", "base"]));
    assert!(area.starts_with("unit,base_ge,read_ge,write_ge,total_ge\n"));
    assert!(area.lines().last().unwrap().starts_with("total,,,,"));
    let t = stdout(&run(&["estimate", "timing", "--config", "base"]));
    assert!(t.starts_with("longest_path_ns,f_max_ghz,coefficients\n"));
    let l = stdout(&run(&["estimate", "latency", "--config", "mempool", "--format", "json"]));
    let v: serde_json::Value = serde_json::from_str(&l).unwrap();
    assert_eq!(v["backend"], 2);
    assert_eq!(v["total"], v["backend"].as_u64().unwrap() + v["midends"].as_u64().unwrap());
}

#[test]
fn config_errors_exit_one() {
    let o = run(&["simulate", "--config", "no-such-preset"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{\"engine\": 5}").unwrap();
    assert_eq!(run(&["simulate", "--config", p.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(run(&["sweep", "--config", "base", "--param", "colour", "--values", "1"]).status.code(), Some(1));
    assert_eq!(run(&["legalize", "--src", "0", "--dst", "0", "--len", "4", "--proto", "pci"]).status.code(), Some(1));
}

#[test]
fn contract_violation_exits_two() {
    let base = stdout(&run(&["presets", "base"]));
    let mut v: serde_json::Value = serde_json::from_str(&base).unwrap();
    v["engine"]["has_legalizer"] = false.into();
    v["workload"]["piece_bytes"] = 8192.into();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("nolegal.json");
    std::fs::write(&p, v.to_string()).unwrap();
    let o = run(&["simulate", "--config", p.to_str().unwrap(), "--out", dir.path().join("r.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("area.json");
    let o = run(&["estimate", "area", "--config", "cheshire", "--format", "json", "--out", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
    assert!(v["total"].as_f64().unwrap() > 0.0);
}

#[test]
fn presets_listed() {
    let text = stdout(&run(&["presets"]));
    for n in ["base", "pulp", "cheshire", "mempool", "manticore", "hbm"] {
        assert!(text.lines().any(|l| l == n), "{n}");
    }
    assert_eq!(run(&["presets", "zzz"]).status.code(), Some(1));
}
