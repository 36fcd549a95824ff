use std::process::Command;

fn parboot(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_parboot"))
        .args(args)
        .env_remove("PARBOOT_FORMAT")
        .output()
        .expect("binary runs")
}

fn json(out: &std::process::Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn simulate_report_schema() {
    let out = parboot(&["simulate", "--strategy", "dbsa", "--D", "10000", "--N", "1000", "--P", "4", "--seed", "205"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    for key in ["spec", "estimate", "measured", "predicted", "match", "oracle", "generated_at"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["measured"]["total_bytes"], 120_024);
    for key in ["bytes_by_channel", "peak_floats_per_rank", "points_per_rank"] {
        assert!(v["measured"].get(key).is_some(), "missing measured.{key}");
    }
    assert!(v["oracle"].get("rel_err").is_some());
}

#[test]
fn simulate_ddrs_listing_constants() {
    let out = parboot(&["simulate", "--strategy", "ddrs", "--D", "100000", "--N", "1000", "--P", "4", "--seed", "205"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["measured"]["bytes_by_channel"]["results_back"], 12_000);
    assert_eq!(v["measured"]["bytes_by_channel"]["verification"], 12_000);
}

#[test]
fn env_var_sets_default_format() {
    let out = Command::new(env!("CARGO_BIN_EXE_parboot"))
        .args(["predict", "--strategy", "dbsa"])
        .env("PARBOOT_FORMAT", "csv")
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("strategy,status,"), "{text}");
}

#[test]
fn exit_codes() {
    assert_eq!(parboot(&["simulate"]).status.code(), Some(2));
    assert_eq!(parboot(&["simulate", "--strategy", "dbsr", "--N", "7", "--P", "2"]).status.code(), Some(2));
    assert_eq!(
        parboot(&["plan", "--D", "10000", "--N", "1000", "--P", "4", "--memory-cap", "100"]).status.code(),
        Some(3)
    );
    assert_eq!(parboot(&["verify", "--desync-rank", "3"]).status.code(), Some(4));
}

#[test]
fn plan_text_output() {
    let out = parboot(&[
        "plan", "--D", "10000", "--N", "1000", "--P", "4", "--memory-cap", "10000000", "--format", "text",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("choice: DBSA"), "{text}");
}
