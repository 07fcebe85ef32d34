use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nucvox::io::{grid_from_json, load_grid, read_labeled_scan};
use nucvox::GridConfig;

fn nucvox(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nucvox")).args(args).env_remove("NUC_THREADS").output().expect("binary runs")
}

fn stdout(output: &Output) -> String {
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    String::from_utf8(output.stdout.clone()).unwrap()
}

fn error_line(output: &Output) -> String {
    let stderr = String::from_utf8(output.stderr.clone()).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    stderr.trim_end().to_string()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn api_boundaries_end_at_50_268() {
    let out = stdout(&nucvox(&["boundaries", "--scheme", "api", "--a0", "0.05", "--d", "0.0062", "--nr", "120"]));
    let last = out.lines().last().unwrap();
    assert_eq!(last, "120,50.268");
    assert!(out.starts_with("# config: {"));
    assert_eq!(out.lines().filter(|l| !l.starts_with('#')).count(), 122);

    let json: serde_json::Value = serde_json::from_str(&stdout(&nucvox(&["boundaries", "--format", "json"]))).unwrap();
    assert_eq!(json["boundaries"].as_array().unwrap().last().unwrap().as_f64(), Some(50.268));
    assert_eq!(json["config"]["scheme"]["kind"], "api");
}

#[test]
fn empty_synthetic_cloud_voxelizes_to_zero_voxels() {
    let dir = tempfile::tempdir().unwrap();
    let scan = dir.path().join("empty.bin");
    let summary = stdout(&nucvox(&["gen-synthetic", "--beams", "0", "--out", path(&scan)]));
    assert!(summary.contains("\"points\": 0"));
    assert_eq!(fs::metadata(&scan).unwrap().len(), 0);

    let grid = grid_from_json(&stdout(&nucvox(&["voxelize", path(&scan)]))).unwrap();
    assert!(grid.is_empty());
    assert_eq!(grid.config(), &GridConfig::default());
}

#[test]
fn voxelize_writes_json_or_binary_grids() {
    let dir = tempfile::tempdir().unwrap();
    let scan = dir.path().join("000000.bin");
    stdout(&nucvox(&["gen-synthetic", "--seed", "3", "--beams", "8", "--out", path(&scan)]));
    assert!(dir.path().join("000000.label").is_file());
    let cloud = read_labeled_scan(&scan, Some(&dir.path().join("000000.label"))).unwrap().cloud;

    let json = dir.path().join("grid.json");
    let binary = dir.path().join("grid.nucvox");
    stdout(&nucvox(&["voxelize", path(&scan), "--out", path(&json), "--scheme", "uniform", "--nr", "60"]));
    stdout(&nucvox(&["voxelize", path(&scan), "--out", path(&binary), "--scheme", "uniform", "--nr", "60"]));
    let grid = load_grid(&json).unwrap();
    assert_eq!(load_grid(&binary).unwrap(), grid);
    assert_eq!(grid.config().n_r, 60);
    assert_eq!(grid.accepted_points(), cloud.len());
    assert!(grid.has_labels(), "labels are found beside the scan");
}

#[test]
fn compare_csv_is_byte_identical_across_runs() {
    let args = ["compare", "--schemes", "uniform,api,gpi,piecewise", "--format", "csv"];
    let first = nucvox(&args);
    let second = nucvox(&[&args[..], &["--threads", "3"]].concat());
    assert_eq!(stdout(&first), stdout(&second));

    let text = stdout(&first);
    assert_eq!(text.lines().filter(|l| l.starts_with("# config ")).count(), 4);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(
        rows[0],
        "scheme,band_lo,band_hi,points,misencoded,encoding_error,nonempty_voxels,mean_points_per_nonempty_cell"
    );
    assert_eq!(rows.len(), 1 + 4 * 5);
    assert!(rows[1].starts_with("uniform-120,0.0,10.0,"));
    assert!(rows[20].starts_with("piecewise-120,40.0,50.0,"));
}

#[test]
fn compare_accepts_bin_count_suffixes() {
    let out = stdout(&nucvox(&["compare", "--schemes", "uniform:480,api", "--seed", "2", "--bands", "0,25,50"]));
    let json: serde_json::Value = serde_json::from_str(&out).unwrap();
    let reports = json["reports"].as_array().unwrap();
    assert_eq!(reports[0]["scheme"], "uniform-480");
    assert_eq!(reports[1]["scheme"], "api-120");
    assert_eq!(reports[0]["bands"].as_array().unwrap().len(), 2);
}

#[test]
fn analyze_sequence_reports_scans_mean_and_reference() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("08");
    fs::create_dir_all(seq.join("velodyne")).unwrap();
    fs::create_dir_all(seq.join("labels")).unwrap();
    for n in 0..3 {
        let scan = seq.join(format!("velodyne/00000{n}.bin"));
        let labels = seq.join(format!("labels/00000{n}.label"));
        let seed = n.to_string();
        stdout(&nucvox(&[
            "gen-synthetic",
            "--seed",
            &seed,
            "--beams",
            "8",
            "--out",
            path(&scan),
            "--labels-out",
            path(&labels),
        ]));
    }
    let json: serde_json::Value =
        serde_json::from_str(&stdout(&nucvox(&["analyze", path(&seq), "--reference"]))).unwrap();
    assert_eq!(json["schema"], "nucvox.sequence/1");
    assert_eq!(json["scans"].as_array().unwrap().len(), 3);
    assert_eq!(json["scans"][0]["scan"], "000000.bin");
    assert_eq!(json["mean"]["scans"], 3);
    assert_eq!(json["reference"]["total"].as_f64(), Some(21015.1));
    let counts: Vec<f64> =
        (0..3).map(|n| json["scans"][n]["report"]["overall"]["nonempty_voxels"].as_f64().unwrap()).collect();
    let mean = json["mean"]["overall"]["nonempty_voxels"].as_f64().unwrap();
    assert!((mean - counts.iter().sum::<f64>() / 3.0).abs() < 1e-9);
    assert!(json["mean"]["overall"]["encoding_error"].as_f64().is_some(), "labels come from ../labels");

    let csv = stdout(&nucvox(&["analyze", path(&seq), "--format", "csv"]));
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 1 + 3 * 6 + 6);
    assert!(rows.last().unwrap().starts_with("mean,api-120,,,"));
}

#[test]
fn analyze_single_scan_emits_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let scan = dir.path().join("s.bin");
    stdout(&nucvox(&["gen-synthetic", "--beams", "8", "--out", path(&scan)]));
    let json: serde_json::Value = serde_json::from_str(&stdout(&nucvox(&["analyze", path(&scan)]))).unwrap();
    assert_eq!(json["schema"], "nucvox.report/1");
    assert_eq!(json["config"], serde_json::to_value(GridConfig::default()).unwrap());
}

#[test]
fn inline_flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("grid.toml");
    let base = GridConfig {
        n_phi: 180,
        ..GridConfig::default().with_scheme(nucvox::PartitionScheme::default_for("gpi").unwrap())
    };
    base.save(&config).unwrap();

    let json: serde_json::Value = serde_json::from_str(&stdout(&nucvox(&[
        "boundaries",
        "--format",
        "json",
        "--config",
        path(&config),
        "--ratio",
        "1.03",
        "--nr",
        "60",
    ])))
    .unwrap();
    let resolved: GridConfig = serde_json::from_value(json["config"].clone()).unwrap();
    assert_eq!(resolved.n_phi, 180);
    assert_eq!(resolved.n_r, 60);
    assert_eq!(resolved.scheme, nucvox::PartitionScheme::Gpi { a0: 0.05, ratio: 1.03 });

    // switching kind starts from that kind's defaults
    let json: serde_json::Value = serde_json::from_str(&stdout(&nucvox(&[
        "boundaries",
        "--format",
        "json",
        "--config",
        path(&config),
        "--scheme",
        "api",
        "--d",
        "0.01",
    ])))
    .unwrap();
    assert_eq!(json["config"]["scheme"], serde_json::json!({"kind": "api", "a0": 0.05, "d": 0.01}));
    assert_eq!(json["config"]["n_phi"], 180);
}

#[test]
fn failures_use_distinct_exit_codes_and_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&[&str], i32, &str); 5] = [
        (&["boundaries", "--bogus"], 2, "error[usage]:"),
        (&["voxelize", "/definitely/not/here.bin"], 3, "error[missing-input]:"),
        (&["boundaries", "--a0", "-1"], 4, "error[config]:"),
        (&["boundaries", "--nphi", "361", "--scales", "2"], 4, "error[config]:"),
        (&["boundaries", "--scheme", "uniform", "--scales", "2"], 4, "error[config]:"),
    ];
    for (args, code, prefix) in cases {
        let output = nucvox(args);
        assert_eq!(output.status.code(), Some(code), "{args:?}");
        assert!(error_line(&output).starts_with(prefix), "{args:?}");
    }

    let bad = dir.path().join("bad.bin");
    fs::write(&bad, [0u8; 17]).unwrap();
    let output = nucvox(&["voxelize", path(&bad)]);
    assert_eq!(output.status.code(), Some(5));
    assert!(error_line(&output).starts_with("error[malformed]:"));

    let help = stdout(&nucvox(&["--help"]));
    for code in ["2  usage", "3  missing input", "4  configuration", "5  malformed"] {
        assert!(help.contains(code), "{code}");
    }
    assert!(stdout(&nucvox(&["boundaries", "--help"])).contains("tool convention"));
}

#[test]
fn threads_can_come_from_the_environment() {
    let output =
        Command::new(env!("CARGO_BIN_EXE_nucvox")).args(["boundaries"]).env("NUC_THREADS", "0").output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(error_line(&output).contains("--threads"));
}
