use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::thread;

use serde_json::{json, Value as Json};
use tempfile::TempDir;
use wasmprobe_testkit::{fixture, oracle::Outcome, Val};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wasmprobe"))
}

/// Writes fixture `name` as `name.wasm` into `dir`.
fn wasm(dir: &TempDir, name: &str) -> PathBuf {
    write(dir, name, &fixture(name).wasm())
}

fn write(dir: &TempDir, name: &str, bytes: &[u8]) -> PathBuf {
    let p = dir.path().join(format!("{name}.wasm"));
    std::fs::write(&p, bytes).unwrap();
    p
}

fn run(args: &[&str], module: Option<&Path>) -> Output {
    let mut c = bin();
    c.args(args);
    if let Some(m) = module {
        c.arg(m);
    }
    c.output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn list_monitors_is_stable_and_unique() {
    let a = run(&["--list-monitors"], None);
    let b = run(&["--list-monitors"], None);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let out = text(&a.stdout);
    let names: Vec<&str> = out.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(names.len(), 8);
    let mut unique = names.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), 8);
    assert!(names.contains(&"hotness") && names.contains(&"debug"));
}

#[test]
fn plain_run_prints_no_report() {
    let dir = TempDir::new().unwrap();
    let m = wasm(&dir, "loop3");
    for args in [&["run"][..], &[][..]] {
        let o = run(args, Some(&m));
        assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
        assert!(o.stdout.is_empty());
        assert!(o.stderr.is_empty(), "{}", text(&o.stderr));
    }
}

#[test]
fn hotness_report_file_matches_the_oracle() {
    let dir = TempDir::new().unwrap();
    let m = wasm(&dir, "loop3");
    let tsv = dir.path().join("report.tsv");
    let report_arg = format!("--report={}", tsv.display());
    let o = run(&["run", "--monitors=hotness", &report_arg], Some(&m));
    assert_eq!(o.status.code(), Some(0));
    assert!(text(&o.stderr).contains("hotness"));

    let rows = std::fs::read_to_string(&tsv).unwrap();
    let mut got = BTreeMap::new();
    for line in rows.lines() {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 5, "{line}");
        assert_eq!(cols[0], "hotness");
        let key = (cols[1].parse::<u32>().unwrap(), cols[2].parse::<u32>().unwrap());
        got.insert(key, cols[4].parse::<u64>().unwrap());
    }
    let want = fixture("loop3").oracle().counts;
    assert_eq!(got, want);
}

#[test]
fn program_output_goes_to_stdout_and_results_are_printed() {
    let dir = TempDir::new().unwrap();
    let f = fixture("host_print");
    let o = run(&["--monitors=coverage"], Some(&wasm(&dir, "host_print")));
    assert_eq!(o.status.code(), Some(0));
    assert!(text(&o.stdout).starts_with(&f.oracle().output), "{}", text(&o.stdout));
    assert!(text(&o.stderr).contains("coverage"));

    let f = fixture("factorial");
    let o = run(&[], Some(&wasm(&dir, "factorial")));
    let Outcome::Returned(vals) = f.oracle().outcome else { panic!() };
    assert_eq!(vals, vec![Val::I64(24)]);
    assert_eq!(text(&o.stdout), "i64:24\n");
}

#[test]
fn arguments_are_typed_by_the_entry_signature() {
    let dir = TempDir::new().unwrap();
    let m = wasm(&dir, "hot_loop");
    let o = bin().arg(&m).arg("4").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    // acc ^= n for n = 4, 3, 2, 1.
    assert_eq!(text(&o.stdout), "i32:4\n");
    let o = bin().arg(&m).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("takes 1 argument"));
    let o = bin().arg(&m).arg("nope").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn start_is_the_fallback_entry_point() {
    let dir = TempDir::new().unwrap();
    let bytes = wat::parse_str(r#"(module (func (export "_start") (result i32) i32.const 7))"#).unwrap();
    let o = run(&[], Some(&write(&dir, "start", &bytes)));
    assert_eq!(text(&o.stdout), "i32:7\n");
    let bytes = wat::parse_str(r#"(module (func (export "other")))"#).unwrap();
    let m = write(&dir, "other", &bytes);
    assert_eq!(run(&[], Some(&m)).status.code(), Some(2));
    assert_eq!(run(&["--entry=other"], Some(&m)).status.code(), Some(0));
}

#[test]
fn text_modules_are_accepted() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("fact.wat");
    std::fs::write(&p, fixture("factorial").wat).unwrap();
    let o = run(&[], Some(&p));
    assert_eq!(text(&o.stdout), "i64:24\n");
    std::fs::write(&p, "(module (func").unwrap();
    assert_eq!(run(&[], Some(&p)).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let good = wasm(&dir, "loop3");

    let o = run(&["--monitors=bogus"], Some(&good));
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("unknown monitor"), "{}", text(&o.stderr));

    let o = run(&["--no-such-flag"], Some(&good));
    assert_eq!(o.status.code(), Some(2));

    let o = run(&[], Some(&dir.path().join("missing.wasm")));
    assert_eq!(o.status.code(), Some(2));

    let o = run(&[], Some(&write(&dir, "garbage", b"\0asm\x01\0\0\0\x01\xff")));
    assert_eq!(o.status.code(), Some(2));

    for trap in ["trap_div", "trap_oob", "trap_unreachable", "trap_stack", "trap_indirect"] {
        let o = run(&["--monitors=branch"], Some(&wasm(&dir, trap)));
        assert_eq!(o.status.code(), Some(1), "{trap}");
        assert!(text(&o.stderr).contains("trap"), "{trap}");
        // Reports are still produced.
        assert!(text(&o.stderr).contains("branch"), "{trap}");
    }

    // The debugger's `quit` stops the program with a monitor error.
    let mut child = bin()
        .arg("--monitors=debug")
        .arg(&good)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"quit\n").unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", text(&o.stderr));
}

#[test]
fn bench_prints_a_table_with_every_variant() {
    let dir = TempDir::new().unwrap();
    let m = wasm(&dir, "hot_loop");
    let o = bin()
        .args(["--bench=3", "--empty-probes", "--monitors=hotness,branch"])
        .arg(&m)
        .arg("20000")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let out = text(&o.stdout);
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].starts_with("variant"), "{out}");
    let variants: Vec<&str> = lines[1..]
        .iter()
        .map(|l| l.split("  ").next().unwrap().trim())
        .collect();
    assert_eq!(
        variants,
        vec!["(none)", "(stripped)", "hotness", "hotness [empty]", "branch", "branch [empty]"]
    );
    for l in &lines[1..] {
        let runs = l.split_whitespace().rev().nth(3).unwrap();
        assert_eq!(runs, "3", "{l}");
    }
    assert!(!out.contains("warning"));

    // Default repetition count.
    let o = bin().arg("--bench").arg(&m).arg("100").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(text(&o.stdout).lines().nth(1).unwrap().contains(" 5 "));

    assert_eq!(run(&["--empty-probes"], Some(&m)).status.code(), Some(2));
}

#[test]
fn debug_port_serves_the_protocol() {
    let dir = TempDir::new().unwrap();
    let m = wasm(&dir, "loop3");
    let mut child = bin()
        .args(["--debug-port=0", "--monitors=loop"])
        .arg(&m)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let mut first = String::new();
    stderr.read_line(&mut first).unwrap();
    let url = first
        .split_whitespace()
        .find(|w| w.starts_with("ws://"))
        .unwrap_or_else(|| panic!("no url in {first:?}"))
        .trim_end_matches(';')
        .to_string();
    // Keep draining stderr so the child never blocks on it.
    let rest = thread::spawn(move || {
        let mut s = String::new();
        for l in stderr.lines() {
            s.push_str(&l.unwrap());
            s.push('\n');
        }
        s
    });

    let (mut ws, _) = tungstenite::connect(url.as_str()).unwrap();
    let mut inbox: Vec<Json> = Vec::new();
    let mut next = |ws: &mut tungstenite::WebSocket<_>| -> Json {
        loop {
            if !inbox.is_empty() {
                return inbox.remove(0);
            }
            if let tungstenite::Message::Text(t) = ws.read().unwrap() {
                inbox.extend(t.as_str().lines().map(|l| serde_json::from_str::<Json>(l).unwrap()));
            }
        }
    };
    assert_eq!(next(&mut ws), json!({ "event": "hello", "params": { "version": 1 } }));
    assert_eq!(next(&mut ws)["params"]["reason"], "entry");
    let send = |ws: &mut tungstenite::WebSocket<_>, v: Json| ws.send(tungstenite::Message::text(v.to_string())).unwrap();
    send(&mut ws, json!({ "id": 1, "method": "setBreakpoint", "params": { "func": 0, "pc": 6 } }));
    assert_eq!(next(&mut ws), json!({ "id": 1, "result": {} }));
    let mut id = 2;
    let mut pauses = 0;
    let reports = loop {
        send(&mut ws, json!({ "id": id, "method": "continue", "params": {} }));
        assert_eq!(next(&mut ws), json!({ "id": id, "result": {} }));
        id += 1;
        let m = next(&mut ws);
        if m["event"] == "paused" {
            pauses += 1;
            continue;
        }
        break m;
    };
    let mut reports = vec![reports];
    loop {
        let m = next(&mut ws);
        if m["event"] == "exited" {
            assert_eq!(m["params"]["code"], 0);
            break;
        }
        reports.push(m);
    }
    assert_eq!(pauses, 3);
    let names: Vec<&str> = reports.iter().map(|r| r["params"]["monitor"].as_str().unwrap()).collect();
    assert_eq!(names, vec!["loop", "debug"]);
    drop(ws);
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));
    let rest = rest.join().unwrap();
    assert!(rest.contains("== loop =="), "{rest}");
}
