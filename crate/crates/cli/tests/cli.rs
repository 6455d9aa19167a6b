//! End-to-end checks of the command line binary: determinism of exports
//! and renders (criterion 9) and the documented exit codes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../core/tests/fixtures/{name}.scen"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("coopgrid_cli_{}_{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coopgrid"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// All regular files under `dir`, keyed by relative name.
fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            files.insert(
                entry.file_name().to_string_lossy().into_owned(),
                std::fs::read(entry.path()).unwrap(),
            );
        }
    }
    files
}

fn assert_identical_runs(tag: &str, subcommand: &str, scenario: &str, extra: &[&str]) {
    let scen = fixture(scenario);
    let scen = scen.to_str().unwrap();
    let mut outputs = Vec::new();
    for round in 0..2 {
        let out_dir = temp_dir(&format!("{tag}_{round}"));
        let mut args = vec![
            subcommand,
            "--scenario",
            scen,
            "--out",
            out_dir.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        let output = run(&args);
        assert!(
            output.status.success(),
            "{tag} round {round} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        outputs.push((output.stdout, dir_contents(&out_dir)));
    }
    let (stdout_a, files_a) = &outputs[0];
    let (stdout_b, files_b) = &outputs[1];
    assert_eq!(stdout_a, stdout_b, "{tag}: stdout differs between runs");
    assert_eq!(
        files_a.keys().collect::<Vec<_>>(),
        files_b.keys().collect::<Vec<_>>(),
        "{tag}: file sets differ"
    );
    for (name, bytes) in files_a {
        assert_eq!(bytes, &files_b[name], "{tag}: {name} differs between runs");
    }
    assert!(!files_a.is_empty(), "{tag}: no output files written");
}

#[test]
fn criterion_9_determinism() {
    assert_identical_runs("plan_exact", "plan", "turnaround", &[]);
    assert_identical_runs("plan_soft", "plan", "turnaround", &["--mode", "soft"]);
    assert_identical_runs("coop", "coop", "pocket_small", &["--trace"]);
    assert_identical_runs(
        "render",
        "render",
        "narrowing",
        &["--mode", "soft", "--tau", "0.8"],
    );
    assert_identical_runs("oracle", "oracle", "pocket_small", &[]);
    println!("criterion 9 (deterministic runs): PASS");
}

#[test]
fn malformed_scenario_exits_1() {
    let dir = temp_dir("bad_scen");
    let path = dir.join("bad.scen");
    std::fs::write(
        &path,
        "name: broken\nmap:\n..\n...\nagent: start=0,0,Q goals=9,9,any\n",
    )
    .unwrap();
    let out = run(&["plan", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("[RAGGED]"), "{stderr}");
    assert!(stderr.contains("[HEADING]"), "{stderr}");
    assert!(stderr.contains("[HORIZON]"), "{stderr}");
}

#[test]
fn missing_file_exits_1() {
    let out = run(&["plan", "--scenario", "/nonexistent/nowhere.scen"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn infeasible_plan_exits_2() {
    let dir = temp_dir("walled");
    let path = dir.join("walled.scen");
    std::fs::write(
        &path,
        "name: walled\nhorizon: 6\nmap:\n.#.\n.#.\n.#.\nagent: start=0,1,E goals=2,1,any\n",
    )
    .unwrap();
    let out = run(&["plan", "--scenario", path.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
}

#[test]
fn saturated_joint_oracle_exits_2() {
    let dir = temp_dir("oracle_sat");
    let scen = fixture("corridor_small");
    let out = run(&[
        "oracle",
        "--scenario",
        scen.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc = std::fs::read_to_string(dir.join("oracle.json")).unwrap();
    assert!(doc.contains("\"poses\": null"), "{doc}");
}

#[test]
fn exhausted_iterations_exit_3() {
    let scen = fixture("narrowing");
    let out = run(&[
        "coop",
        "--scenario",
        scen.to_str().unwrap(),
        "--max-iters",
        "3",
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("no convergence"));
}

#[test]
fn trace_lines_have_the_documented_shape() {
    let scen = fixture("pocket_small");
    let out = run(&["coop", "--scenario", scen.to_str().unwrap(), "--trace"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let mut trace_lines = 0;
    for line in stdout.lines() {
        if line.starts_with("converged=") {
            continue;
        }
        trace_lines += 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(fields.len(), 4, "unexpected trace line: {line}");
        let prefixes = ["iter=", "J=", "coll=", "gnorm="];
        for (field, prefix) in fields.iter().zip(prefixes) {
            assert!(field.starts_with(prefix), "unexpected trace line: {line}");
            assert!(
                field[prefix.len()..].parse::<f64>().is_ok(),
                "unparseable value in: {line}"
            );
        }
    }
    assert!(trace_lines > 0, "no trace lines printed");
}

#[test]
fn seed_flag_is_accepted() {
    let scen = fixture("turnaround");
    let out = run(&["plan", "--scenario", scen.to_str().unwrap(), "--seed", "7"]);
    assert!(out.status.success());
}
