use std::path::Path;
use std::process::{Command, Output};

fn hmmvi(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmmvi"))
        .args(args)
        .env("HMMVI_OUTPUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = hmmvi(&["--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for sub in ["solve", "diag", "bench", "mesh"] {
        assert!(text.contains(sub), "{text}");
    }
    let o = hmmvi(&["solve", "--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("--warm-start"));
}

#[test]
fn unknown_flag_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = hmmvi(&["solve", "--colour", "red"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--colour"));
}

#[test]
fn invalid_values_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["solve", "--delta", "-1"][..],
        &["solve", "--generator", "hexagon:4"],
        &["solve", "--operator", "seepage", "--p", "3"],
        &["solve", "--warm-start", "maybe"],
        &["solve", "--model", "signorini", "--generator", "cartesian:4"],
        &["solve", "--mesh", "/nonexistent/mesh.json"],
        &["bench", "dam", "--mesh", "cartesian:4"],
    ] {
        let o = hmmvi(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(!stderr(&o).contains("panicked"));
    }
}

#[test]
fn bench_dam_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let o = hmmvi(&["bench", "dam", "--mesh", "dam-hex:441"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("seepage point in ["), "{text}");
    for f in ["seepage.json", "artifact.json", "solution.vtk", "summary.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let artifact = std::fs::read_to_string(dir.path().join("artifact.json")).unwrap();
    let parsed = hmm_vi::io::RunArtifact::from_json(&artifact).unwrap();
    assert_eq!(parsed.config["command"], "bench dam");
    let mesh = hmm_vi::mesh::dam_hexagonal::<f64>(441).unwrap();
    assert_eq!(parsed.mesh_hash, hmm_vi::io::mesh_hash(&mesh));
    assert_eq!(parsed.to_json(), artifact);
}

#[test]
fn solve_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = hmmvi(&["solve", "--generator", "dam-hex:100", "--max-outer", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("outer"));
}

#[test]
fn config_file_supplies_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "model = \"obstacle\"\ngenerator = \"cartesian:6\"\nmax_outer = 1\n").unwrap();
    let out = dir.path().join("o");
    let o = hmmvi(&["solve", "--config", cfg.to_str().unwrap(), "--max-outer", "20", "--output-dir", out.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("obstacle on cartesian:6"));
    let artifact = std::fs::read_to_string(out.join("artifact.json")).unwrap();
    let parsed = hmm_vi::io::RunArtifact::from_json(&artifact).unwrap();
    assert_eq!(parsed.config["options"]["max_outer"], 20);

    std::fs::write(&cfg, "modle = \"obstacle\"\n").unwrap();
    let o = hmmvi(&["solve", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("modle"));
}

#[test]
fn demos_and_mesh_export() {
    let dir = tempfile::tempdir().unwrap();
    let o = hmmvi(&["bench", "bulkley", "--generator", "cartesian:8", "--yield-coefficient", "0.3"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("VI probe residual"));
    let o = hmmvi(&["bench", "obstacle", "--generator", "triangular:6"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = hmmvi(&["mesh", "--generator", "dam-kershaw:1"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("2601 cells"));
    let back: hmm_vi::Mesh = hmm_vi::io::read_mesh_file(&dir.path().join("mesh.json")).unwrap();
    assert_eq!(back.num_cells(), 2601);
    let o = hmmvi(&["solve", "--model", "bulkley", "--mesh", dir.path().join("mesh.json").to_str().unwrap(), "--yield-coefficient", "0"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn diag_writes_study_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = hmmvi(&["diag", "--mesh", "cartesian:4,cartesian:8", "--jobs", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("study.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("mesh_id,cells,h_mesh,theta,s_d,w_d"));
    assert!(lines[1].starts_with("cartesian:4,16,"));
}
