//! End-to-end runs of the `mwk` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn mwk(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mwk"))
        .current_dir(dir)
        .env_remove("MWK_BACKEND")
        .env_remove("MWK_CONFIG")
        .env_remove("MWK_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn tiny(dir: &Path, args: &[&str]) -> Output {
    mwk(dir, &[&["--backend", "tiny", "--json"], args].concat())
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", stdout(o)))
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn edit(path: &Path, f: impl FnOnce(&mut Value)) {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    f(&mut v);
    std::fs::write(path, v.to_string()).unwrap();
}

/// Replaces a hex scalar by a different one of the same width.
fn bump(v: &mut Value) {
    let s = v.as_str().unwrap().to_string();
    let last = if s.ends_with("01") { "02" } else { "01" };
    *v = Value::String(format!("{}{last}", &s[..s.len() - 2]));
}

fn grant(dir: &Path, file: &str) {
    let o = tiny(dir, &["tx", "build", "--grant", "--output", "150:3", "--output", "50:4", "--out", file]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn tx_verify_reports_clauses() {
    let d = TempDir::new().unwrap();
    grant(d.path(), "valid.json");
    let o = tiny(d.path(), &["tx", "verify", "valid.json"]);
    assert_eq!((code(&o), stdout(&o).trim()), (0, r#"{"ok":true}"#));

    std::fs::copy(d.path().join("valid.json"), d.path().join("tampered.json")).unwrap();
    edit(&d.path().join("tampered.json"), |t| bump(&mut t["kernel"]["sigma"]["s"]));
    let o = tiny(d.path(), &["tx", "verify", "tampered.json"]);
    assert_eq!((code(&o), stdout(&o).trim()), (1, r#"{"clause":"iii","ok":false}"#));

    std::fs::copy(d.path().join("valid.json"), d.path().join("unbalanced.json")).unwrap();
    edit(&d.path().join("unbalanced.json"), |t| bump(&mut t["tko"]));
    assert_eq!(json(&tiny(d.path(), &["tx", "verify", "unbalanced.json"]))["clause"], "ii");

    std::fs::copy(d.path().join("valid.json"), d.path().join("badrp.json")).unwrap();
    edit(&d.path().join("badrp.json"), |t| {
        let rp = t["kernel"]["rp"].as_array_mut().unwrap();
        rp.swap(0, 1);
    });
    assert_eq!(json(&tiny(d.path(), &["tx", "verify", "badrp.json"]))["clause"], "i");
}

#[test]
fn usage_errors_exit_two() {
    let d = TempDir::new().unwrap();
    assert_eq!(code(&mwk(d.path(), &["frobnicate"])), 2);
    assert_eq!(code(&mwk(d.path(), &["--backend", "huge", "keys"])), 2);
    let o = tiny(d.path(), &["tx", "verify", "missing.json"]);
    assert_eq!(code(&o), 2);
    assert_eq!(json(&o)["ok"], false);
    let o = mwk(d.path(), &["game", "run", "--game", "hiding"]);
    assert_eq!(code(&o), 2, "unbounded adversary on the curve backend");
}

#[test]
fn config_rejects_unknown_keys_and_env_overrides() {
    let d = TempDir::new().unwrap();
    std::fs::write(d.path().join("bad.toml"), "[features]\nwarp = true\n").unwrap();
    assert_eq!(code(&mwk(d.path(), &["--config", "bad.toml", "keys"])), 2);

    std::fs::write(d.path().join("ok.toml"), "backend = \"tiny\"\n[group]\nn = 29\nG = 2\nH = 3\nJ = 5\n").unwrap();
    let o = mwk(d.path(), &["--config", "ok.toml", "keys"]);
    assert_eq!(json(&o)["params"]["tiny_order"], 29);

    let o = Command::new(env!("CARGO_BIN_EXE_mwk")).current_dir(d.path()).env("MWK_BACKEND", "tiny").arg("keys").output().unwrap();
    assert_eq!(json(&o)["params"]["backend"], "tiny");
    let o = Command::new(env!("CARGO_BIN_EXE_mwk"))
        .current_dir(d.path())
        .env("MWK_BACKEND", "tiny")
        .args(["--backend", "curve", "keys"])
        .output()
        .unwrap();
    assert_eq!(json(&o)["params"]["backend"], "curve", "flags beat the environment");
}

#[test]
fn sim_run_is_byte_identical_per_seed() {
    let d = TempDir::new().unwrap();
    let a = tiny(d.path(), &["sim", "run", "--seed", "7"]);
    let b = tiny(d.path(), &["sim", "run", "--seed", "7", "--report", "r.json"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let file: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(file, json(&a));
    let r = json(&a);
    assert_eq!(r["converged"], true);
    let hashes: Vec<&Value> = r["nodes"].as_array().unwrap().iter().map(|n| &n["ledger_hash"]).collect();
    assert!(hashes.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn sim_run_reads_scenario_files() {
    let d = TempDir::new().unwrap();
    std::fs::write(
        d.path().join("sc.json"),
        r#"[{"at":0,"action":"submit_tx","node":1},{"at":10,"action":"mint","node":2}]"#,
    )
    .unwrap();
    let r = json(&tiny(d.path(), &["sim", "run", "--scenario", "sc.json"]));
    assert_eq!(r["nodes"][0]["height"], 2);
    assert_eq!(r["txs"].as_array().unwrap().len(), 1);
}

#[test]
fn chain_flow_detects_double_spend() {
    let d = TempDir::new().unwrap();
    let o = tiny(d.path(), &["chain", "init", "c.jsonl", "--grant", "150:3", "--grant", "50:4"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let o = tiny(d.path(), &["tx", "build", "--input", "150:3", "--output", "100:5", "--output", "50:6", "--out", "s.json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&tiny(d.path(), &["chain", "append", "c.jsonl", "s.json"]))["blocks"], 3);
    let before = std::fs::read(d.path().join("c.jsonl")).unwrap();
    let o = tiny(d.path(), &["chain", "append", "c.jsonl", "s.json"]);
    assert_eq!((code(&o), json(&o)["error"].as_str()), (1, Some("double-spend")));
    assert_eq!(std::fs::read(d.path().join("c.jsonl")).unwrap(), before);
    let o = tiny(d.path(), &["chain", "validate", "c.jsonl"]);
    assert_eq!(json(&o)["utxos"], 3);

    // a forged line after the valid prefix
    let mut text = String::from_utf8(before).unwrap();
    let spend = std::fs::read_to_string(d.path().join("s.json")).unwrap();
    let block = serde_json::json!({
        "inputs": serde_json::from_str::<Value>(&spend).unwrap()["inputs"],
        "outputs": [], "kernels": [], "ko": serde_json::from_str::<Value>(&spend).unwrap()["tko"],
    });
    text.push_str(&format!("{block}\n"));
    std::fs::write(d.path().join("forged.jsonl"), text).unwrap();
    let o = tiny(d.path(), &["chain", "validate", "forged.jsonl"]);
    assert_eq!((code(&o), json(&o)["block"].as_u64()), (1, Some(3)));
}

#[test]
fn node_step_incubation_and_unchanged_state() {
    let d = TempDir::new().unwrap();
    let inc = |args: &[&str]| tiny(d.path(), &[&["--incubation"], args].concat());
    let o = inc(&["tx", "build", "--grant", "--output", "150:3", "--output", "50:4", "--incubation-period", "2", "--incubation-period", "0", "--out", "g.json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(code(&inc(&["node", "step", "st.json", "g.json"])), 0);
    assert_eq!(code(&inc(&["node", "step", "st.json", "mine-block"])), 0);
    assert_eq!(code(&inc(&["tx", "build", "--input", "150:3", "--output", "150:9", "--out", "sp.json"])), 0);
    let before = std::fs::read(d.path().join("st.json")).unwrap();
    let o = inc(&["node", "step", "st.json", "sp.json"]);
    assert_eq!(code(&o), 1);
    assert_eq!(json(&o)["response"]["error"], "incubation-violation");
    assert_eq!(std::fs::read(d.path().join("st.json")).unwrap(), before);
    assert_eq!(code(&inc(&["node", "step", "st.json", "mine-block"])), 0);
    assert_eq!(code(&inc(&["node", "step", "st.json", "sp.json"])), 0);
}

#[test]
fn node_rcv_replays_the_addr_trace() {
    let d = TempDir::new().unwrap();
    std::fs::write(d.path().join("p1.json"), r#"{"from":9,"to":0,"msg":{"type":"addr","data":[1,2]}}"#).unwrap();
    std::fs::write(d.path().join("p2.json"), r#"{"from":9,"to":0,"msg":{"type":"addr","data":[1,3]}}"#).unwrap();
    let r1 = json(&tiny(d.path(), &["node", "rcv", "n.json", "p1.json", "--addr", "0"]));
    assert_eq!(r1["state"]["as"], serde_json::json!([1, 2]));
    let r2 = json(&tiny(d.path(), &["node", "rcv", "n.json", "p2.json"]));
    assert_eq!(r2["state"]["as"], serde_json::json!([1, 2, 3]));
    let out: Vec<String> = r2["out"].as_array().unwrap().iter().map(|p| p.to_string()).collect();
    let want = [
        r#"{"from":0,"msg":{"data":[1,2,3],"type":"addr"},"to":1}"#,
        r#"{"from":0,"msg":{"data":[1,2,3],"type":"addr"},"to":2}"#,
        r#"{"from":0,"msg":{"type":"connect"},"to":3}"#,
    ];
    assert_eq!(out, want);
}

#[test]
fn node_mint_follows_the_schedule() {
    let d = TempDir::new().unwrap();
    // round robin over a1..a5: height 1 belongs to a2
    let r = json(&tiny(d.path(), &["node", "mint", "a1.json", "--addr", "1"]));
    assert_eq!((r["changed"].as_bool(), r["ledger_height"].as_u64()), (Some(false), Some(1)));
    let r = json(&tiny(d.path(), &["node", "mint", "a2.json", "--addr", "2"]));
    assert_eq!((r["changed"].as_bool(), r["ledger_height"].as_u64()), (Some(true), Some(2)));
}

#[test]
fn block_commands() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    assert_eq!(code(&tiny(p, &["tx", "build", "--input", "9:3", "--output", "9:5", "--out", "a.json"])), 0);
    assert_eq!(code(&tiny(p, &["tx", "build", "--input", "9:5", "--output", "4:8", "--output", "5:1", "--out", "b.json"])), 0);
    assert_eq!(code(&tiny(p, &["block", "join", "a.json", "b.json", "--out", "blk.json"])), 0);
    let joined: Value = serde_json::from_str(&std::fs::read_to_string(p.join("blk.json")).unwrap()).unwrap();
    assert_eq!(joined["inputs"].as_array().unwrap().len(), 2);
    let cut = tiny(p, &["block", "cutthrough", "blk.json"]);
    std::fs::write(p.join("cut.json"), &cut.stdout).unwrap();
    assert_eq!(json(&cut)["inputs"].as_array().unwrap().len(), 1);
    assert_eq!(json(&cut)["outputs"].as_array().unwrap().len(), 2);
    assert_eq!(stdout(&tiny(p, &["block", "verify", "cut.json"])).trim(), r#"{"ok":true}"#);

    edit(&p.join("cut.json"), |b| bump(&mut b["kernels"][1]["sigma"]["s"]));
    let o = tiny(p, &["block", "verify", "cut.json"]);
    assert_eq!((code(&o), stdout(&o).trim()), (1, r#"{"clause":"ii","ok":false}"#));
    edit(&p.join("blk.json"), |b| bump(&mut b["ko"]));
    assert_eq!(json(&tiny(p, &["block", "verify", "blk.json"]))["clause"], "i");
}

#[test]
fn games_run_through_the_cli() {
    let d = TempDir::new().unwrap();
    let r = json(&tiny(d.path(), &["game", "run", "--game", "dlog", "--trials", "200", "--seed", "3"]));
    assert_eq!(r["result"]["successes"], 200);
    assert_eq!(r["rates_equal"], true);
    let r = json(&tiny(d.path(), &["game", "run", "--game", "dlog", "--adversary", "flaky", "--trials", "200"]));
    assert_eq!(r["rates_equal"], true);
    let r = json(&tiny(d.path(), &["game", "run", "--game", "hiding", "--trials", "4000"]));
    let rate = r["result"]["success_rate"].as_f64().unwrap();
    assert!((rate - 0.5).abs() < 0.04, "{rate}");
    assert_eq!(r["images_equal"], true);
    let r = json(&mwk(d.path(), &["game", "run", "--game", "binding", "--adversary", "honest", "--trials", "50"]));
    assert_eq!(r["result"]["successes"], 0);
}

#[test]
fn fcr_check_and_stem_statistics() {
    let d = TempDir::new().unwrap();
    let o = mwk(d.path(), &["fcr", "check"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["chains"], 121);
    let o = tiny(d.path(), &["--beam-dummy", "sim", "stem", "--runs", "400", "--seed", "2"]);
    let r = json(&o);
    assert_eq!(code(&o), 0, "{r}");
    assert_eq!(r["dummies"]["bad"], 0);
}
