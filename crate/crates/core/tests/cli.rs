use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use coastal_slr::raster::{read_class_grid, GridFormat};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_coastal-slr"));
    c.env("RUST_LOG", "warn");
    c
}

fn fixture_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/fjord/config.json")
}

fn run_in(out: &Path, args: &[&str]) -> Output {
    bin()
        .arg("--config")
        .arg(fixture_config())
        .args(args)
        .env("COASTAL_SLR_OUTPUT_DIR", out)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn skill_prints_the_chance_corrected_accuracy() {
    let o = bin().args(["skill", "--accuracy", "0.676", "--classes", "2"]).output().unwrap();
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "0.3520");
    let o = bin().args(["skill", "--accuracy", "0.5", "--classes", "1"]).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn inundate_writes_one_mask_per_height_into_the_override_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["inundate", "--heights", "1,2,3,4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for h in 1..=4 {
        assert!(tmp.path().join(format!("scenarios/mask_{h}m.asc")).is_file());
    }
    assert!(!tmp.path().join("scenarios/mask_5m.asc").exists());
    let o = run_in(tmp.path(), &["inundate", "--heights", "2,1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run_in(tmp.path(), &["inundate", "--connectivity", "6"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn lcm_validate_counts_match_a_triple_loop() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["lcm-validate"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let read = |p: &str| read_class_grid(&tmp.path().join(p), GridFormat::EsriAscii).unwrap();
    let (t2, predicted, t3) = (read("lulc/lulc_2006.asc"), read("projections/lulc_2011.asc"), read("lulc/lulc_2011.asc"));
    let (mut hits, mut misses, mut false_alarms, mut rejections) = (0, 0, 0, 0);
    for i in 0..t2.cells().len() {
        let (Some(a), Some(p), Some(b)) = (t2.value(i), predicted.value(i), t3.value(i)) else { continue };
        match (a != b, a != p) {
            (true, true) => hits += 1,
            (true, false) => misses += 1,
            (false, true) => false_alarms += 1,
            (false, false) => rejections += 1,
        }
    }
    let expected = format!(
        "category,cells\nhits,{hits}\nmisses,{misses}\nfalse_alarms,{false_alarms}\ncorrect_rejections,{rejections}\n"
    );
    assert_eq!(stdout(&o), expected);
}

#[test]
fn stats_and_export_report_their_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["stats"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("height_m,"));
    let o = run_in(tmp.path(), &["--seed", "9", "export"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(PathBuf::from(stdout(&o).trim()), tmp.path().join("catalog.json"));
    let effective: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("effective_config.json")).unwrap()).unwrap();
    assert_eq!(effective["seed"], 9);
    assert_eq!(effective["mlp"]["seed"], 9);
}

#[test]
fn config_and_data_errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin().args(["--config", "/nonexistent/config.json", "stats"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    // A DEM that exists but does not parse fails at ingest.
    let dir = tmp.path().join("fixture");
    std::fs::create_dir(&dir).unwrap();
    for e in std::fs::read_dir(fixture_config().parent().unwrap()).unwrap() {
        let e = e.unwrap();
        std::fs::copy(e.path(), dir.join(e.file_name())).unwrap();
    }
    std::fs::write(dir.join("dem.asc"), "ncols oops\n").unwrap();
    let config = dir.join("config.json");
    let o = bin()
        .arg("--config")
        .arg(&config)
        .arg("ingest")
        .env("COASTAL_SLR_OUTPUT_DIR", tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ingest"));
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut text = String::new();
    s.read_to_string(&mut text).ok()?;
    Some(text)
}

#[test]
fn serve_publishes_an_exported_catalog() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_in(tmp.path(), &["run"]).status.success());
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = bin()
        .args(["serve", "--port", &port.to_string(), "--catalog"])
        .arg(tmp.path().join("catalog.json"))
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let started = Instant::now();
    let response = loop {
        if let Some(r) = http_get(port, "/api/stats") {
            break r;
        }
        assert!(started.elapsed() < Duration::from_secs(20), "server did not come up");
        std::thread::sleep(Duration::from_millis(50));
    };
    let _ = child.kill();
    let _ = child.wait();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("\"inundated_cells\""));
}
