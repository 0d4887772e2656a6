//! Remote provider against an in-process mock sidecar.

mod common;

use std::collections::{BTreeSet, HashMap};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use focus360::geom::{angular_distance, mask_to_geometry, pixel_to_dir, Direction, RasterDims};
use focus360::locate::remote::{SidecarClient, SidecarError};
use focus360::locate::synthetic::DiscTrajectory;
use focus360::locate::wire::{decode_frame, encode_frame, WireMask};
use focus360::locate::{EntryStatus, ProviderConfig};
use focus360::media::{frame_time, FrameBuffer, MaskBuffer};
use focus360::pipeline::{load_script, render, RenderError};
use focus360::script::{parse_roadmap, Script};
use serde_json::{json, Value};

use common::{run_config, tree, write_sequence, write_text};

#[derive(Default)]
struct MockState {
    fps: f64,
    /// `track/next` call numbers (1-based) answered with `missing`.
    dropouts: BTreeSet<usize>,
    /// Free text the mock "understands" beyond the grammar.
    canned_parse: Option<(String, String)>,
    detected: HashMap<[u32; 4], DiscTrajectory>,
    sessions: HashMap<String, (DiscTrajectory, RasterDims, usize)>,
    next_session: usize,
}

type Shared = Arc<Mutex<MockState>>;
type Reply = (StatusCode, Json<Value>);

fn error(status: StatusCode, msg: impl Into<String>) -> Reply {
    (status, Json(json!({ "error": msg.into() })))
}

fn frame_field(body: &Value) -> Result<FrameBuffer, Reply> {
    let b64 =
        body.get("frame").and_then(Value::as_str).ok_or_else(|| error(StatusCode::BAD_REQUEST, "missing `frame`"))?;
    decode_frame(b64).map_err(|e| error(StatusCode::BAD_REQUEST, e.to_string()))
}

fn wire(mask: &MaskBuffer) -> Value {
    serde_json::to_value(WireMask::encode(mask)).unwrap()
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn parse(State(st): State<Shared>, Json(body): Json<Value>) -> Reply {
    let Some(text) = body.get("text").and_then(Value::as_str) else {
        return error(StatusCode::BAD_REQUEST, "missing `text`");
    };
    if let Some((input, csv)) = &st.lock().unwrap().canned_parse {
        if input == text {
            return (StatusCode::OK, Json(json!({ "csv": csv })));
        }
    }
    match parse_roadmap(text) {
        Ok(s) => (StatusCode::OK, Json(json!({ "csv": s.to_csv() }))),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, format!("no intervals: {e}")),
    }
}

async fn detect(State(st): State<Shared>, Json(body): Json<Value>) -> Reply {
    let frame = match frame_field(&body) {
        Ok(f) => f,
        Err(r) => return r,
    };
    let Some(desc) = body.get("description").and_then(Value::as_str) else {
        return error(StatusCode::BAD_REQUEST, "missing `description`");
    };
    let Some(traj) = DiscTrajectory::parse(desc) else {
        return error(StatusCode::NOT_FOUND, "target not found");
    };
    let Some(bbox) = traj.mask_at(frame.dims(), 0.0).bbox() else {
        return error(StatusCode::NOT_FOUND, "target not found");
    };
    st.lock().unwrap().detected.insert(bbox, traj);
    (StatusCode::OK, Json(json!({ "bbox": bbox, "score": 0.9 })))
}

async fn track_init(State(st): State<Shared>, Json(body): Json<Value>) -> Reply {
    let frame = match frame_field(&body) {
        Ok(f) => f,
        Err(r) => return r,
    };
    let Some(bbox) = body.get("bbox").and_then(|b| serde_json::from_value::<[u32; 4]>(b.clone()).ok()) else {
        return error(StatusCode::BAD_REQUEST, "missing or malformed `bbox`");
    };
    let mut st = st.lock().unwrap();
    let Some(traj) = st.detected.get(&bbox).copied() else {
        return error(StatusCode::BAD_REQUEST, "bbox was not produced by /detect");
    };
    let id = format!("session-{}", st.next_session);
    st.next_session += 1;
    st.sessions.insert(id.clone(), (traj, frame.dims(), 0));
    let mask = traj.mask_at(frame.dims(), 0.0);
    (StatusCode::OK, Json(json!({ "session_id": id, "mask": wire(&mask) })))
}

async fn track_next(State(st): State<Shared>, Json(body): Json<Value>) -> Reply {
    let Some(id) = body.get("session_id").and_then(Value::as_str) else {
        return error(StatusCode::BAD_REQUEST, "missing `session_id`");
    };
    let frame = match frame_field(&body) {
        Ok(f) => f,
        Err(r) => return r,
    };
    let mut st = st.lock().unwrap();
    let fps = st.fps;
    let call = {
        let Some((_, _, calls)) = st.sessions.get_mut(id) else {
            return error(StatusCode::GONE, "unknown session");
        };
        *calls += 1;
        *calls
    };
    if st.dropouts.contains(&call) {
        return (StatusCode::OK, Json(json!({ "missing": true })));
    }
    let (traj, dims, calls) = st.sessions[id];
    if dims != frame.dims() {
        return error(StatusCode::BAD_REQUEST, "frame size changed");
    }
    let mask = traj.mask_at(dims, frame_time(calls, fps));
    (StatusCode::OK, Json(json!({ "mask": wire(&mask) })))
}

struct Mock {
    url: String,
    _shutdown: tokio::sync::oneshot::Sender<()>,
}

fn start_mock(state: MockState) -> Mock {
    let shared: Shared = Arc::new(Mutex::new(state));
    let app = Router::new()
        .route("/health", get(health))
        .route("/parse", post(parse))
        .route("/detect", post(detect))
        .route("/track/init", post(track_init))
        .route("/track/next", post(track_next))
        .with_state(shared);
    let (addr_tx, addr_rx) = std::sync::mpsc::channel::<SocketAddr>();
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            addr_tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = stop_rx.await;
                })
                .await
                .unwrap();
        });
    });
    let addr = addr_rx.recv().unwrap();
    Mock { url: format!("http://{addr}"), _shutdown: stop_tx }
}

fn mock(fps: f64) -> Mock {
    start_mock(MockState { fps, ..MockState::default() })
}

fn client(m: &Mock) -> SidecarClient {
    SidecarClient::new(&m.url, Duration::from_secs(10))
}

fn dims(w: usize, h: usize) -> RasterDims {
    RasterDims::new(w, h).unwrap()
}

#[test]
fn health_endpoint() {
    let m = mock(10.0);
    assert_eq!(client(&m).health().unwrap().status, "ok");
}

#[test]
fn parse_output_is_accepted_by_from_csv() {
    let m = mock(10.0);
    let c = client(&m);
    let csv = c.parse("0:12-0:25: the farthest turtle\n").unwrap();
    let s = Script::from_csv(&csv).unwrap();
    assert_eq!(s.entries()[0].start(), 12.0);
    assert_eq!(s.entries()[0].end(), 25.0);
    assert_eq!(s.entries()[0].description(), "the farthest turtle");
    let csv = c.parse("1 - 2 : a, \"b\"\n3 - 4 : c\n").unwrap();
    assert_eq!(Script::from_csv(&csv).unwrap().to_csv(), csv);
    let e = c.parse("hello").unwrap_err();
    assert_eq!(e.status(), Some(422));
}

#[test]
fn detect_returns_projected_disc_extent() {
    let m = mock(10.0);
    let d = dims(64, 32);
    let frame = encode_frame(&FrameBuffer::filled(d, [10, 20, 30]));
    let det = client(&m).detect(frame.clone(), "disc lon=0 lat=0 r=0.2").unwrap();
    let center = Direction::from_lon_lat(0.0, 0.0);
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    for v in 0..d.height {
        for u in 0..d.width {
            if angular_distance(&pixel_to_dir(u, v, d), &center) <= 0.2 {
                x0 = x0.min(u as u32);
                y0 = y0.min(v as u32);
                x1 = x1.max(u as u32);
                y1 = y1.max(v as u32);
            }
        }
    }
    assert_eq!(det.bbox, [x0, y0, x1, y1]);
    let e = client(&m).detect(frame, "the farthest turtle").unwrap_err();
    assert_eq!(e.status(), Some(404));
}

#[test]
fn malformed_requests_are_rejected() {
    let m = mock(10.0);
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let resp =
        agent.post(&format!("{}/detect", m.url)).send_json(json!({ "description": "disc lon=0 lat=0 r=0.2" })).unwrap();
    assert_eq!(resp.status().as_u16(), 400);
    let e = client(&m).track_next("bogus", encode_frame(&FrameBuffer::filled(dims(8, 4), [0; 3]))).unwrap_err();
    assert_eq!(e, SidecarError::Status { status: 410, message: "unknown session".into() });
}

#[test]
fn tracked_centroids_advance_along_trajectory() {
    let m = mock(10.0);
    let c = client(&m);
    let d = dims(64, 32);
    let frame = encode_frame(&FrameBuffer::filled(d, [0; 3]));
    let det = c.detect(frame.clone(), "disc lon=-1 lat=0.2 r=0.3 rate=2 heading=0.4").unwrap();
    let init = c.track_init(frame.clone(), det.bbox).unwrap();
    let mut masks = vec![init.mask.decode().unwrap()];
    for _ in 0..3 {
        masks.push(c.track_next(&init.session_id, frame.clone()).unwrap().mask.unwrap().decode().unwrap());
    }
    let start = Direction::from_lon_lat(-1.0, 0.2);
    let travelled: Vec<f64> =
        masks.iter().map(|m| angular_distance(&mask_to_geometry(m).unwrap().center, &start)).collect();
    assert!(travelled.windows(2).all(|w| w[1] > w[0]), "{travelled:?}");
}

#[test]
fn remote_render_matches_synthetic_byte_for_byte() {
    let d = dims(64, 32);
    let fps = 10.0;
    let m = mock(fps);
    let tmp = tempfile::tempdir().unwrap();
    let (manifest, _) = write_sequence(tmp.path(), d, 20, fps);
    let script = write_text(
        tmp.path(),
        "script.txt",
        "0.2 - 1.6 : disc lon=-0.8 lat=0.3 r=0.35 rate=1.5 heading=0.6\n\
         0.5 - 2 : disc lon=2.5 lat=-0.4 r=0.25 rate=0.7 heading=2.2\n",
    );

    let syn_out = tmp.path().join("synthetic");
    let syn = render(&run_config(&manifest, &script, &syn_out, ProviderConfig::Synthetic { default: None })).unwrap();
    let rem_out = tmp.path().join("remote");
    let remote_cfg = run_config(
        &manifest,
        &script,
        &rem_out,
        ProviderConfig::Remote { url: m.url.clone(), timeout: Duration::from_secs(10) },
    );
    let rem = render(&remote_cfg).unwrap();

    assert_eq!(rem.exit_code(), 0);
    assert!(syn.rendered > 10);
    assert_eq!(syn.rendered, rem.rendered);
    assert!(rem.entries.iter().all(|e| e.status == EntryStatus::Tracked && e.score == Some(0.9)));
    assert_eq!(tree(&syn_out), tree(&rem_out));
}

#[test]
fn missing_responses_are_held() {
    let fps = 10.0;
    let m = start_mock(MockState { fps, dropouts: [2, 3].into(), ..MockState::default() });
    let tmp = tempfile::tempdir().unwrap();
    let (manifest, _) = write_sequence(tmp.path(), dims(32, 16), 8, fps);
    let script = write_text(tmp.path(), "s.txt", "0 - 1 : disc lon=0 lat=0 r=0.4 rate=1\n");
    let cfg = run_config(
        &manifest,
        &script,
        &tmp.path().join("out"),
        ProviderConfig::Remote { url: m.url.clone(), timeout: Duration::from_secs(10) },
    );
    let report = render(&cfg).unwrap();
    let e = &report.entries[0];
    assert_eq!(e.status, EntryStatus::Tracked);
    assert_eq!((e.detected, e.held), (6, 2));
}

#[test]
fn non_disc_entry_is_skipped_with_partial_exit() {
    let m = mock(10.0);
    let tmp = tempfile::tempdir().unwrap();
    let (manifest, _) = write_sequence(tmp.path(), dims(32, 16), 8, 10.0);
    let script = write_text(tmp.path(), "s.txt", "0 - 1 : the farthest turtle\n0 - 1 : disc lon=0 lat=0 r=0.4\n");
    let cfg = run_config(
        &manifest,
        &script,
        &tmp.path().join("out"),
        ProviderConfig::Remote { url: m.url.clone(), timeout: Duration::from_secs(10) },
    );
    let report = render(&cfg).unwrap();
    assert!(matches!(report.entries[0].status, EntryStatus::Skipped { .. }));
    assert_eq!(report.entries[1].status, EntryStatus::Tracked);
    assert_eq!(report.exit_code(), 2);
}

#[test]
fn free_text_falls_back_to_sidecar_parse() {
    let text = "Look at the turtle from twelve to twenty-five seconds.\n";
    let csv = "start_seconds,end_seconds,description\n12.0,25.0,the turtle\n";
    let m = start_mock(MockState { fps: 10.0, canned_parse: Some((text.into(), csv.into())), ..MockState::default() });
    let tmp = tempfile::tempdir().unwrap();
    let path = write_text(tmp.path(), "free.txt", text);
    let c = client(&m);
    let (script, warnings) = load_script(&path, Some(&c)).unwrap();
    assert_eq!(script.to_csv(), csv);
    assert!(warnings[0].contains("sidecar"));
    assert!(matches!(load_script(&path, None), Err(RenderError::Script { .. })));

    let bad = write_text(tmp.path(), "bad.txt", "hello\n");
    let err = load_script(&bad, Some(&c)).unwrap_err().to_string();
    assert!(err.contains("line 1") && err.contains("422"), "{err}");
}

#[test]
fn documented_fixtures_decode() {
    let req: Value = serde_json::from_str(
        r#"{"frame": "UDYKNCAyCjI1NQr/AAD/AAD/AAD/AAD/AAD/AAD/AAD/AAA=", "description": "disc lon=0 lat=0 r=0.2"}"#,
    )
    .unwrap();
    let f = decode_frame(req["frame"].as_str().unwrap()).unwrap();
    assert_eq!(f, FrameBuffer::filled(dims(4, 2), [255, 0, 0]));
    assert_eq!(encode_frame(&f), req["frame"]);
    let m: WireMask = serde_json::from_str(r#"{"width": 4, "height": 2, "runs": [[1, 2], [5, 1]]}"#).unwrap();
    let bits = m.decode().unwrap();
    let set: Vec<usize> = (0..8).filter(|&i| bits.bits()[i]).collect();
    assert_eq!(set, vec![1, 2, 5]);
    assert_eq!(WireMask::encode(&bits), m);
}
