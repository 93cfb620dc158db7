//! Fixtures shared by the service, CLI and acceptance tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use atlas_cli::service::{router, AppState};
use atlas_core::{Parallelism, ToyEncoder};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tower::ServiceExt;

/// The toy encoder's eight hues, with a representative pure color and the
/// center of each color's geographic cluster.
pub const COLORS: [(&str, [u8; 3], (f64, f64)); 8] = [
    ("red", [255, 0, 0], (48.885, 2.39)),
    ("orange", [255, 128, 0], (48.885, 2.28)),
    ("yellow", [255, 255, 0], (48.815, 2.39)),
    ("green", [0, 255, 0], (48.815, 2.28)),
    ("cyan", [0, 255, 255], (48.85, 2.335)),
    ("blue", [0, 0, 255], (48.86, 2.26)),
    ("purple", [128, 0, 255], (48.84, 2.41)),
    ("magenta", [255, 0, 255], (48.805, 2.335)),
];

pub const PARIS: (f64, f64, f64, f64) = (48.80, 48.90, 2.25, 2.42);

#[derive(Debug, Clone)]
pub struct Item {
    pub id: String,
    pub color: &'static str,
    pub lat: f64,
    pub lon: f64,
}

/// Writes `n` small solid-color PNGs (each pixel jittered in brightness but
/// kept inside its hue) plus `manifest.csv`, and returns the manifest path
/// and the items in manifest order.
pub fn color_corpus(dir: &Path, n: usize, seed: u64) -> (PathBuf, Vec<Item>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = dir.join("images");
    std::fs::create_dir_all(&images).unwrap();
    let mut csv = String::from("id,uri,lat,lon,color\n");
    let mut items = Vec::with_capacity(n);
    for i in 0..n {
        let (color, rgb, (clat, clon)) = COLORS[rng.random_range(0..COLORS.len())];
        let shade: f32 = rng.random_range(0.75..1.0);
        let img = RgbImage::from_fn(6, 4, |_, _| {
            let s = shade * rng.random_range(0.95f32..=1.0);
            Rgb(rgb.map(|c| (c as f32 * s).round() as u8))
        });
        let file = format!("c{:04}.png", (i * 7919) % 10_000);
        img.save(images.join(&file)).unwrap();
        let lat = clat + rng.random_range(-0.01..0.01);
        let lon = clon + rng.random_range(-0.01..0.01);
        let id = format!("img{:04}", (i * 37) % 1000);
        csv.push_str(&format!("{id},images/{file},{lat},{lon},{color}\n"));
        items.push(Item { id, color, lat, lon });
    }
    let manifest = dir.join("manifest.csv");
    std::fs::write(&manifest, csv).unwrap();
    (manifest, items)
}

pub fn toy_state(cache_dir: &Path) -> Arc<AppState> {
    Arc::new(AppState::new(Arc::new(ToyEncoder::new()), cache_dir, Parallelism::Auto))
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap()
    }
}

pub async fn call(state: &Arc<AppState>, method: &str, uri: &str, body: Option<serde_json::Value>) -> Reply {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let response = router(state.clone()).oneshot(request).await.unwrap();
    let status = response.status();
    let content_type = response
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string())
        .unwrap_or_default();
    let body = response.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        content_type,
        body,
    }
}

pub async fn get(state: &Arc<AppState>, uri: &str) -> Reply {
    call(state, "GET", uri, None).await
}

pub fn sha256_file(path: &Path) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

/// Color corpus embedded with the toy encoder and saved as `corpus.catl`.
pub fn color_store(dir: &Path, n: usize, seed: u64) -> (PathBuf, Vec<Item>) {
    use atlas_core::corpus::scan_corpus;
    use atlas_core::ingest::EmbedOptions;
    let (manifest, items) = color_corpus(dir, n, seed);
    let records = scan_corpus(&manifest).unwrap();
    let (store, report) = atlas_core::embed_corpus(&records, &ToyEncoder::new(), EmbedOptions::default()).unwrap();
    assert!(report.failed.is_empty());
    let path = dir.join("corpus.catl");
    atlas_core::save_store(&store, &path).unwrap();
    (path, items)
}

/// The same analyses as command lines (after `--store <path>`) and as HTTP
/// requests against a corpus registered as `colors`.
pub fn golden_pairs() -> Vec<(&'static str, Vec<&'static str>, &'static str)> {
    vec![
        ("search", vec!["--prompt", "red", "-k", "7"], "/corpora/colors/search?q=red&k=7"),
        (
            "scatter",
            vec!["--x", "red", "--y", "a blue thing", "--norm", "rank", "--sample", "40"],
            "/corpora/colors/scatter?x=red&y=a%20blue%20thing&norm=rank&sample=40&seed=5",
        ),
        (
            "map",
            vec!["--prompt", "green", "--rows", "6", "--cols", "5", "--min-count", "1", "--bbox", "48.8,2.25,48.9,2.42"],
            "/corpora/colors/map?prompt=green&rows=6&cols=5&min_count=1&bbox=48.8,2.25,48.9,2.42",
        ),
        (
            "contrast",
            vec!["--a", "red", "--b", "blue", "--rows", "4", "--cols", "4", "--stat", "max", "--template", "{}"],
            "/corpora/colors/contrast?a=red&b=blue&rows=4&cols=4&stat=max&template=%7B%7D",
        ),
        ("extremes", vec!["--prompt", "yellow", "-n", "3"], "/corpora/colors/extremes?prompt=yellow&n=3"),
    ]
}

/// Runs the `atlas` binary with `--seed 5` and the given subcommand.
pub fn atlas(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_atlas"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

/// Byte-for-byte comparison of every golden analysis run through the binary
/// and through the router. Returns the first mismatch.
pub async fn cli_matches_http(store: &Path, state: &Arc<AppState>) -> Result<(), String> {
    let store = store.to_str().unwrap();
    for (cmd, extra, uri) in golden_pairs() {
        let mut args = vec!["--seed", "5", cmd, "--store", store];
        args.extend(extra);
        let out = atlas(&args);
        if !out.status.success() {
            return Err(format!("{cmd}: {}", String::from_utf8_lossy(&out.stderr)));
        }
        let reply = get(state, uri).await;
        if reply.status != 200 {
            return Err(format!("{uri}: {}", String::from_utf8_lossy(&reply.body)));
        }
        if out.stdout != reply.body {
            return Err(format!(
                "{cmd} differs:\ncli  {}\nhttp {}",
                String::from_utf8_lossy(&out.stdout),
                String::from_utf8_lossy(&reply.body)
            ));
        }
    }
    Ok(())
}
