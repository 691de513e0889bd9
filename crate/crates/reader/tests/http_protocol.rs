//! Drives the service over HTTP only, as a browser client would.

use std::path::PathBuf;
use std::time::Duration;

use cxr_reader::{spawn, CaseRecord, Role, Study, StudyConfig};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

fn study(dir: &std::path::Path) -> Study {
    let cases = (0..50)
        .map(|i| {
            let name = format!("img{i:02}.png");
            image::GrayImage::from_pixel(8, 8, image::Luma([i as u8]))
                .save(dir.join(&name))
                .unwrap();
            CaseRecord {
                case_id: format!("case{i:02}"),
                images: vec![PathBuf::from(name)],
                indication: "Cough.".into(),
                model_draft: format!("Draft text {i}."),
                resident_draft: (i % 2 == 0).then(|| format!("Other draft {i}.")),
            }
        })
        .collect();
    let cfg = StudyConfig::new(cases, dir.to_path_buf(), 3);
    Study::open(cfg, &dir.join("events.jsonl")).unwrap()
}

fn feedback() -> Value {
    json!({"likert": 5, "reasons": ["content:false-prediction", "style:phrasing"],
           "efficiency": {"writing": true, "interpretation": false}})
}

#[test]
fn full_session_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let addr = spawn(study(dir.path()), "127.0.0.1:0".parse().unwrap()).unwrap();
    let base = format!("http://{addr}");
    let http = Client::new();

    let r = http
        .post(format!("{base}/sessions"))
        .json(&json!({"reader_id": "res-1", "role": "resident"}))
        .send()
        .unwrap();
    assert_eq!(r.status(), StatusCode::CREATED);
    let sid = r.json::<Value>().unwrap()["session_id"].as_str().unwrap().to_string();

    let mut blank = 0;
    for i in 0..30 {
        let r = http.get(format!("{base}/sessions/{sid}/next")).send().unwrap();
        assert_eq!(r.status(), StatusCode::OK);
        let raw = r.bytes().unwrap();
        let text = String::from_utf8(raw.to_vec()).unwrap();
        for banned in ["arm", "scratch", "model_draft", "resident_draft", "source"] {
            assert!(!text.contains(banned), "payload leaks {banned}: {text}");
        }
        let p: Value = serde_json::from_str(&text).unwrap();
        let keys: Vec<&str> = p.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, ["case_id", "image_urls", "indication", "prefill"]);
        let case = p["case_id"].as_str().unwrap().to_string();
        if p["prefill"] == "" {
            blank += 1;
        }
        let url = p["image_urls"][0].as_str().unwrap();
        let img = http.get(format!("{base}{url}")).send().unwrap();
        assert_eq!(img.headers()["content-type"], "image/png");
        assert_eq!(&img.bytes().unwrap()[1..4], b"PNG");

        let fb_url = format!("{base}/sessions/{sid}/cases/{case}/feedback");
        if i == 0 {
            let early = http.post(&fb_url).json(&feedback()).send().unwrap();
            assert_eq!(early.status(), StatusCode::CONFLICT);
        }
        let wait = if i < 2 { 1.0 } else { 0.0 };
        std::thread::sleep(Duration::from_secs_f64(wait));
        let ack: Value = http
            .post(format!("{base}/sessions/{sid}/cases/{case}/report"))
            .json(&json!({"text": "No acute findings.", "client_elapsed_s": wait}))
            .send()
            .unwrap()
            .json()
            .unwrap();
        let server = ack["server_elapsed_s"].as_f64().unwrap();
        assert!(server > 0.0 && (server - wait).abs() <= 0.5, "{server} vs {wait}");
        let dup = http
            .post(format!("{base}/sessions/{sid}/cases/{case}/report"))
            .json(&json!({"text": "again"}))
            .send()
            .unwrap();
        assert_eq!(dup.status(), StatusCode::CONFLICT);
        assert_eq!(http.post(&fb_url).json(&feedback()).send().unwrap().status(), StatusCode::OK);
    }
    assert_eq!(blank, 10);
    let done = http.get(format!("{base}/sessions/{sid}/next")).send().unwrap();
    assert_eq!(done.status(), StatusCode::NO_CONTENT);

    let unknown = http.get(format!("{base}/sessions/nope/next")).send().unwrap();
    assert_eq!(unknown.status(), StatusCode::NOT_FOUND);
    let bad_likert = http
        .post(format!("{base}/sessions/{sid}/cases/case00/feedback"))
        .json(&json!({"likert": 7, "efficiency": {"writing": true, "interpretation": true}}))
        .send()
        .unwrap();
    assert!(bad_likert.status().is_client_error());

    let report: Value = http.get(format!("{base}/analysis")).send().unwrap().json().unwrap();
    assert_eq!(report["events"], 90);
    let res = &report["roles"]["resident"];
    assert_eq!(res["arms"]["scratch"]["time_s"]["n"], 10);
    assert_eq!(res["arms"]["model_draft"]["time_s"]["n"], 20);
    assert_eq!(res["arms"]["model_draft"]["content_edit_share"], 1.0);

    let log = cxr_reader::read_events(&dir.path().join("events.jsonl")).unwrap();
    assert_eq!(log.len(), 90);
    assert_eq!(cxr_reader::analyze(&log).unwrap(), serde_json::from_value(report).unwrap());
    let _ = Role::Attending;
}
