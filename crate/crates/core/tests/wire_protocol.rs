use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::PathBuf;

use serde_json::{json, Value};

use softchain::env::{EpisodeConfig, GraspEnv};
use softchain::model::RobotModel;
use softchain::wire::{self, Response, Session};

fn transcript_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../protocol/transcript.jsonl")
}

/// Requests of the conformance transcript, in order.
fn transcript_requests() -> Vec<String> {
    let act: Vec<f64> = (0..13).map(|i| 0.1 * i as f64 - 0.6).collect();
    vec![
        json!({"op": "hello"}).to_string(),
        "this is not json".into(),
        json!({"op": "step", "action": act}).to_string(),
        json!({"op": "reset", "seed": 7}).to_string(),
        json!({"op": "step", "action": vec![0.0; 12]}).to_string(),
        json!({"op": "step", "action": act}).to_string(),
        json!({"op": "reset", "seed": 7, "config": {"max_steps": 1}}).to_string(),
        json!({"op": "step", "action": act}).to_string(),
        json!({"op": "step", "action": act}).to_string(),
        json!({"op": "reset", "config": {"bogus": 1}}).to_string(),
        json!({"op": "launch"}).to_string(),
        json!({"op": "close"}).to_string(),
    ]
}

fn run_session(requests: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let input = requests.join("\n") + "\n";
    wire::serve_stream(RobotModel::shipped(), input.as_bytes(), &mut out).unwrap();
    String::from_utf8(out).unwrap().lines().map(String::from).collect()
}

#[test]
fn conformance_transcript() {
    let requests = transcript_requests();
    let responses = run_session(&requests);
    assert_eq!(responses.len(), requests.len());
    let path = transcript_path();
    if std::env::var_os("SOFTCHAIN_BLESS").is_some() {
        let mut f = std::fs::File::create(&path).unwrap();
        for (req, resp) in requests.iter().zip(&responses) {
            let resp: Value = serde_json::from_str(resp).unwrap();
            writeln!(f, "{}", json!({"send": req, "recv": resp})).unwrap();
        }
    }
    let text = std::fs::read_to_string(&path).expect("transcript present");
    let entries: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(entries.len(), requests.len());
    for (i, (entry, got)) in entries.iter().zip(&responses).enumerate() {
        assert_eq!(entry["send"].as_str().unwrap(), requests[i], "request {i}");
        let got: Value = serde_json::from_str(got).unwrap();
        assert_eq!(entry["recv"], got, "response {i} to {}", requests[i]);
    }
}

#[test]
fn transcript_covers_the_contract() {
    let r: Vec<Response> = run_session(&transcript_requests())
        .iter()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(r[0].ok);
    assert_eq!((r[0].version, r[0].obs_dim, r[0].act_dim), (Some(1), Some(93), Some(13)));
    assert!(!r[1].ok && r[1].error.as_ref().unwrap().contains("malformed"));
    assert!(!r[2].ok && r[2].error.as_ref().unwrap().contains("protocol error"));
    assert!(r[3].ok && r[3].obs.as_ref().unwrap().len() == 93);
    assert!(!r[4].ok && r[4].error.as_ref().unwrap().contains("13"));
    assert!(r[5].ok && r[5].obs.as_ref().unwrap().len() == 93);
    assert_eq!((r[5].terminated, r[5].truncated), (Some(false), Some(false)));
    assert_eq!(r[5].info.as_ref().unwrap().step, 1);
    assert_eq!(r[7].truncated, Some(true));
    assert!(!r[8].ok && r[8].error.as_ref().unwrap().contains("protocol error"));
    assert!(!r[9].ok && r[9].error.as_ref().unwrap().contains("bogus"));
    assert!(!r[10].ok);
    assert!(r[11].ok);
}

#[test]
fn sessions_are_deterministic_and_match_in_process_use() {
    let reqs = [
        json!({"op": "reset", "seed": 7}).to_string(),
        json!({"op": "step", "action": vec![0.2; 13]}).to_string(),
    ];
    let a = run_session(&reqs);
    let b = run_session(&reqs);
    assert_eq!(a, b);

    let model = RobotModel::shipped();
    let mut env = GraspEnv::new(model.clone(), EpisodeConfig::from_model(&model)).unwrap();
    let obs = env.reset(7).unwrap();
    let step = env.step(&[0.2; 13]).unwrap();
    let reset: Response = serde_json::from_str(&a[0]).unwrap();
    let stepped: Response = serde_json::from_str(&a[1]).unwrap();
    // bit-exact floats after the JSON round trip
    assert_eq!(reset.obs.unwrap(), obs.normalized.to_vec());
    assert_eq!(stepped.obs.unwrap(), step.obs.normalized.to_vec());
    assert_eq!(stepped.reward.unwrap().to_bits(), step.reward.to_bits());
    assert_eq!(stepped.info.unwrap(), step.info);
}

#[test]
fn session_close_disposes_environment() {
    let mut s = Session::new(RobotModel::shipped());
    assert!(s.handle_line(r#"{"op":"reset","seed":1}"#).ok);
    assert!(s.handle_line(r#"{"op":"close"}"#).ok);
    assert!(s.is_closed());
    let r = s.handle_line(&json!({"op": "step", "action": vec![0.0; 13]}).to_string());
    assert!(!r.ok);
}

#[test]
fn tcp_transport() {
    let listener = wire::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || wire::serve_tcp(RobotModel::shipped(), listener));
    let mut conns: Vec<TcpStream> = (0..2).map(|_| TcpStream::connect(addr).unwrap()).collect();
    let mut obs = Vec::new();
    for c in &mut conns {
        let mut reader = BufReader::new(c.try_clone().unwrap());
        let mut line = String::new();
        writeln!(c, r#"{{"op":"hello"}}"#).unwrap();
        reader.read_line(&mut line).unwrap();
        assert_eq!(line.trim(), r#"{"ok":true,"version":1,"obs_dim":93,"act_dim":13}"#);
        line.clear();
        writeln!(c, r#"{{"op":"reset","seed":7}}"#).unwrap();
        reader.read_line(&mut line).unwrap();
        obs.push(line.clone());
        line.clear();
        writeln!(c, r#"{{"op":"close"}}"#).unwrap();
        reader.read_line(&mut line).unwrap();
        assert_eq!(line.trim(), r#"{"ok":true}"#);
    }
    assert_eq!(obs[0], obs[1]);
}
