mod common;

use std::path::Path;
use std::process::{Command, Output};

use beamrecall::app::QueryRequest;
use beamrecall_core::audio::read_wav;
use beamrecall_core::scene::MetricReport;
use beamrecall_testkit::fixtures::RECALL_QUERY;
use common::{cli, client, test_config, write_config, write_recall_wav, TestServer};
use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_beamrecall");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn write_scene(dir: &Path) -> std::path::PathBuf {
    let scene = json!({
        "sample_rate_hz": 16000,
        "snr_db": 30.0,
        "seed": 3,
        "sources": [
            { "label": "left", "azimuth_deg": 135.0, "synthetic": { "seed": 11, "duration_s": 4.0, "f0_hz": 120.0 } },
            { "label": "right", "azimuth_deg": 45.0, "synthetic": { "seed": 22, "duration_s": 4.0, "f0_hz": 210.0 } }
        ]
    });
    let path = dir.join("scene.json");
    std::fs::write(&path, scene.to_string()).unwrap();
    path
}

#[test]
fn usage_and_exit_codes() {
    let help = run(&["--help"]);
    assert_eq!(code(&help), 0);
    for sub in ["ingest", "doa", "beamform", "beampattern", "simulate", "evaluate", "query", "serve"] {
        assert!(String::from_utf8_lossy(&help.stdout).contains(sub), "{sub} missing from help");
    }
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["query", "--session", "x"])), 1);
    assert_eq!(code(&run(&["ingest", "--wav", "x.wav", "--stream", "noequals"])), 1);

    let dir = tempfile::tempdir().unwrap();
    let config = test_config(dir.path());
    let config_path = dir.path().join("c.toml");
    write_config(&config, &config_path);

    let missing = cli(BIN, &config_path, &["--json", "query", "--session", "000000000000", "--q", RECALL_QUERY]);
    assert_eq!(code(&missing), 1);
    assert!(missing.stdout.is_empty());
    assert_eq!(stderr_json(&missing)["code"], "session_not_found");

    let no_wav = cli(BIN, &config_path, &["ingest", "--wav", "/nonexistent.wav", "--stream", "a=10"]);
    assert_eq!(code(&no_wav), 1);
    assert!(String::from_utf8_lossy(&no_wav.stderr).contains("bad_request"));

    std::fs::write(dir.path().join("bad.toml"), "listen = 5\n").unwrap();
    let bad = run(&["--config", dir.path().join("bad.toml").to_str().unwrap(), "--json", "serve"]);
    assert_eq!(code(&bad), 1);
    assert_eq!(stderr_json(&bad)["code"], "bad_config");

    // A damaged session directory is our fault, not the caller's.
    let broken = config.sessions_root.join("abcdefabcdef");
    std::fs::create_dir_all(&broken).unwrap();
    std::fs::write(broken.join("manifest.json"), "{").unwrap();
    let corrupt = cli(BIN, &config_path, &["--json", "query", "--session", "abcdefabcdef", "--q", RECALL_QUERY]);
    assert_eq!(code(&corrupt), 2);
    assert_eq!(stderr_json(&corrupt)["code"], "corrupt_session");
}

#[test]
fn simulate_evaluate_doa_beamform_beampattern() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path());
    let mix = dir.path().join("mix.wav");
    let refs = dir.path().join("refs");
    let out = run(&[
        "simulate",
        "--spec",
        scene.to_str().unwrap(),
        "--out",
        mix.to_str().unwrap(),
        "--references-dir",
        refs.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let audio = read_wav(&mix).unwrap();
    assert_eq!(audio.num_channels(), 7);
    assert_eq!(audio.num_samples(), 64_000);
    for label in ["left", "right"] {
        assert_eq!(read_wav(refs.join(format!("{label}.wav"))).unwrap().num_channels(), 1);
    }

    let eval = run(&["--json", "evaluate", "--spec", scene.to_str().unwrap()]);
    assert_eq!(code(&eval), 0, "{}", String::from_utf8_lossy(&eval.stderr));
    let report: MetricReport = serde_json::from_slice(&eval.stdout).unwrap();
    assert_eq!(report.before_channel, 0);
    assert_eq!(report.streams.len(), 2);
    for s in &report.streams {
        assert!(s.si_sdr_after_db > s.si_sdr_before_db, "{s:?}");
    }
    let text = run(&["evaluate", "--spec", scene.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&text.stdout).contains("stoi_after"));

    let doa = run(&["--json", "doa", "--wav", mix.to_str().unwrap()]);
    assert_eq!(code(&doa), 0, "{}", String::from_utf8_lossy(&doa.stderr));
    let est: Value = serde_json::from_slice(&doa.stdout).unwrap();
    let mut found: Vec<f64> = est["peaks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["azimuth_deg"].as_f64().unwrap())
        .collect();
    found.sort_by(f64::total_cmp);
    assert_eq!(found.len(), 2);
    assert!((found[0] - 45.0).abs() <= 10.0 && (found[1] - 135.0).abs() <= 10.0, "{found:?}");

    let beams = dir.path().join("beams");
    let bf = run(&[
        "beamform",
        "--wav",
        mix.to_str().unwrap(),
        "--stream",
        "left=135",
        "--stream",
        "right=45",
        "--out-dir",
        beams.to_str().unwrap(),
    ]);
    assert_eq!(code(&bf), 0, "{}", String::from_utf8_lossy(&bf.stderr));
    for label in ["left", "right"] {
        let s = read_wav(beams.join(format!("{label}.wav"))).unwrap();
        assert_eq!((s.num_channels(), s.num_samples()), (1, 64_000));
    }

    let bp = run(&["beampattern", "--wav", mix.to_str().unwrap(), "--stream", "left=135", "--freq", "2000"]);
    assert_eq!(code(&bp), 0, "{}", String::from_utf8_lossy(&bp.stderr));
    let csv = String::from_utf8(bp.stdout).unwrap();
    assert!(csv.starts_with("azimuth_deg,left\n"));
    assert_eq!(csv.lines().count(), 361);

    let too_close = run(&["beamform", "--wav", mix.to_str().unwrap(), "--stream", "a=10", "--stream", "b=12", "--out-dir", "x"]);
    assert_eq!(code(&too_close), 1, "{}", String::from_utf8_lossy(&too_close.stderr));
}

#[test]
fn ingest_then_query_matches_the_api() {
    let dir = tempfile::tempdir().unwrap();
    let config = test_config(dir.path());
    let config_path = dir.path().join("c.toml");
    write_config(&config, &config_path);
    let wav = dir.path().join("mix.wav");
    write_recall_wav(&wav);

    let ingest = cli(
        BIN,
        &config_path,
        &["--json", "ingest", "--wav", wav.to_str().unwrap(), "--stream", "left=135", "--stream", "right=45"],
    );
    assert_eq!(code(&ingest), 0, "{}", String::from_utf8_lossy(&ingest.stderr));
    let outcome: Value = serde_json::from_slice(&ingest.stdout).unwrap();
    assert_eq!(outcome["created"], true);
    let id = outcome["session_id"].as_str().unwrap().to_string();

    let again = cli(BIN, &config_path, &["ingest", "--wav", wav.to_str().unwrap(), "--stream", "left=135", "--stream", "right=45"]);
    assert_eq!(String::from_utf8_lossy(&again.stdout).trim(), id);

    let by_id = cli(BIN, &config_path, &["query", "--session", &id, "--q", RECALL_QUERY]);
    assert_eq!(code(&by_id), 0, "{}", String::from_utf8_lossy(&by_id.stderr));
    let session_dir = config.sessions_root.join(&id);
    let by_path = run(&["query", "--session", session_dir.to_str().unwrap(), "--q", RECALL_QUERY]);
    assert_eq!(code(&by_path), 0, "{}", String::from_utf8_lossy(&by_path.stderr));
    assert_eq!(by_id.stdout, by_path.stdout);

    let server = TestServer::start(config.clone());
    let api = client()
        .post(server.url(&format!("/sessions/{id}/query")))
        .json(&QueryRequest::new(RECALL_QUERY))
        .send()
        .unwrap()
        .text()
        .unwrap();
    assert_eq!(format!("{api}\n").as_bytes(), by_id.stdout.as_slice());

    let set = cli(BIN, &config_path, &["query", "--session", &id, "--q", RECALL_QUERY, "--set", "window_k=0"]);
    assert_eq!(code(&set), 0);
    let narrow: Value = serde_json::from_slice(&set.stdout).unwrap();
    let wide: Value = serde_json::from_slice(&by_id.stdout).unwrap();
    assert!(narrow["attended"].to_string().len() <= wide["attended"].to_string().len());
    let unknown = cli(BIN, &config_path, &["query", "--session", &id, "--q", RECALL_QUERY, "--set", "nope=1"]);
    assert_eq!(code(&unknown), 1);
    let no_topic = cli(BIN, &config_path, &["--json", "query", "--session", &id, "--q", "Summarize."]);
    assert_eq!(code(&no_topic), 1);
    assert_eq!(stderr_json(&no_topic)["stage"], "topic_extraction");

    let bp = cli(BIN, &config_path, &["beampattern", "--session", &id, "--freq", "1000", "--resolution", "10"]);
    assert_eq!(code(&bp), 0, "{}", String::from_utf8_lossy(&bp.stderr));
    assert!(String::from_utf8_lossy(&bp.stdout).starts_with("azimuth_deg,left,right\n"));
}

#[test]
fn serve_binds_and_reports_bind_failures() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("c.toml");
    write_config(&test_config(dir.path()), &config_path);
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let out = cli(BIN, &config_path, &["--json", "serve", "--listen", &addr]);
    assert_eq!(code(&out), 2);
    assert_eq!(stderr_json(&out)["code"], "bind_failure");
}
