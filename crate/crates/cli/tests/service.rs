//! The HTTP service, driven in-process.

mod common;

use std::sync::Arc;

use common::{call, color_store, get, sha256_file, toy_state, PARIS};
use serde_json::{json, Value};

async fn registered(dir: &std::path::Path, n: usize) -> (Arc<atlas_cli::service::AppState>, std::path::PathBuf, Vec<common::Item>) {
    let (store, items) = color_store(dir, n, 7);
    let state = toy_state(&dir.join("cache"));
    let r = call(&state, "POST", "/corpora", Some(json!({ "name": "colors", "store_path": store }))).await;
    assert_eq!(r.status, 201, "{}", String::from_utf8_lossy(&r.body));
    assert_eq!(r.json()["count"], n);
    (state, store, items)
}

#[tokio::test]
async fn registration_listing_and_health() {
    let dir = tempfile::tempdir().unwrap();
    let (state, store, _) = registered(dir.path(), 40).await;

    let list = get(&state, "/corpora").await;
    assert_eq!(list.status, 200);
    assert_eq!(list.json()[0]["name"], "colors");
    assert_eq!(list.json()[0]["backend"], "toy");
    assert_eq!(get(&state, "/healthz").await.json()["status"], "ok");

    let dup = call(&state, "POST", "/corpora", Some(json!({ "name": "colors", "store_path": store }))).await;
    assert_eq!(dup.status, 409);
    assert_eq!(dup.json()["error"], "DuplicateCorpus");

    let missing = call(&state, "POST", "/corpora", Some(json!({ "name": "x", "store_path": dir.path().join("nope.catl") }))).await;
    assert_eq!(missing.status, 400);
    let bad_name = call(&state, "POST", "/corpora", Some(json!({ "name": "a/b", "store_path": store }))).await;
    assert_eq!(bad_name.status, 400);
    let malformed = call(&state, "POST", "/corpora", Some(json!({ "nom": "x" }))).await;
    assert_eq!(malformed.status, 400);
    assert_eq!(malformed.json()["error"], "BadQuery");
}

#[tokio::test]
async fn search_ranks_red_first_and_validates_queries() {
    let dir = tempfile::tempdir().unwrap();
    let (state, _, items) = registered(dir.path(), 60).await;
    let r = get(&state, "/corpora/colors/search?q=red&k=3").await;
    assert_eq!(r.status, 200);
    assert_eq!(r.content_type, "application/json");
    let body = r.json();
    let hits = body["hits"].as_array().unwrap();
    assert_eq!(hits.len(), 3);
    let red: Vec<&str> = items.iter().filter(|i| i.color == "red").map(|i| i.id.as_str()).collect();
    assert!(red.contains(&hits[0]["id"].as_str().unwrap()));
    assert_eq!(hits[0]["score"], 1.0);
    assert_eq!(hits[0]["rank"], 1);
    assert_eq!(body["prompt"], "a photo of red");

    let verbatim = get(&state, "/corpora/colors/search?q=red&k=1&template=%7B%7D").await.json();
    assert_eq!(verbatim["prompt"], "red");

    for (uri, status, name) in [
        ("/corpora/missing/search?q=a", 404, "UnknownCorpus"),
        ("/corpora/colors/search?k=3", 400, "BadQuery"),
        ("/corpora/colors/search?q=red&k=0", 400, "BadQuery"),
        ("/corpora/colors/search?q=red&k=abc", 400, "BadQuery"),
        ("/corpora/colors/search?q=red&template=nothing", 400, "BadTemplate"),
    ] {
        let r = get(&state, uri).await;
        assert_eq!(r.status, status, "{uri}");
        assert_eq!(r.json()["error"], name, "{uri}");
    }
}

#[tokio::test]
async fn scatter_map_contrast_and_extremes_payloads() {
    let dir = tempfile::tempdir().unwrap();
    let (state, _, items) = registered(dir.path(), 80).await;

    let sc = get(&state, "/corpora/colors/scatter?x=red&y=blue&norm=none").await;
    assert_eq!(sc.status, 200);
    let sc = sc.json();
    assert_eq!(sc["points"].as_array().unwrap().len(), 80);
    assert_eq!(sc["meta"]["x"]["prompt"]["text"], "red");
    assert_eq!(sc["meta"]["backend"], "toy");
    for (p, item) in sc["points"].as_array().unwrap().iter().zip(&items) {
        let r = p["residual"].as_f64().unwrap();
        match item.color {
            "red" => assert!(r < 0.0),
            "blue" => assert!(r > 0.0),
            _ => assert_eq!(r, 0.0),
        }
    }

    let m = get(&state, "/corpora/colors/map?prompt=red&rows=8&cols=8").await;
    assert_eq!(m.status, 200);
    assert_eq!(m.content_type, "application/geo+json");
    let m = m.json();
    assert_eq!(m["type"], "FeatureCollection");
    let total: u64 = m["features"].as_array().unwrap().iter().map(|f| f["properties"]["count"].as_u64().unwrap()).sum();
    assert_eq!(total, 80);

    let bbox = format!("{},{},{},{}", PARIS.0, PARIS.2, PARIS.1, PARIS.3);
    let c = get(&state, &format!("/corpora/colors/contrast?a=red&b=blue&rows=4&cols=4&bbox={bbox}")).await;
    assert_eq!(c.status, 200);
    assert_eq!(c.json()["properties"]["a"], "a photo of red");

    let e = get(&state, "/corpora/colors/extremes?prompt=green&n=2").await.json();
    assert_eq!(e["top"].as_array().unwrap().len(), 2);
    assert_eq!(e["top"][0]["score"], 1.0);

    let far = get(&state, "/corpora/colors/map?prompt=red&bbox=10,10,11,11").await;
    assert_eq!(far.status, 422);
    assert_eq!(far.json()["error"], "EmptyRegion");
    let matrix = get(&state, "/corpora/colors/map?prompt=red&rows=2&cols=3&format=matrix").await;
    assert_eq!(matrix.content_type, "application/json");
    assert_eq!(matrix.json()["count"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn degenerate_analyses_are_422_with_the_error_name() {
    let dir = tempfile::tempdir().unwrap();
    let (state, _, _) = registered(dir.path(), 30).await;
    // a one-point sample has zero variance on both axes
    let r = get(&state, "/corpora/colors/scatter?x=red&y=blue&norm=zscore&sample=1").await;
    assert_eq!(r.status, 422);
    assert_eq!(r.json()["error"], "DegenerateScores");
    let same = get(&state, "/corpora/colors/scatter?x=red&y=red").await.json();
    assert_eq!(same["correlation"], Value::Null);
    assert!(same["points"].as_array().unwrap().iter().all(|p| p["residual"] == 0.0));
}

#[tokio::test]
async fn images_and_cached_thumbnails() {
    let dir = tempfile::tempdir().unwrap();
    let (state, store, items) = registered(dir.path(), 10).await;
    let before = sha256_file(&store);

    let id = &items[0].id;
    let img = get(&state, &format!("/corpora/colors/images/{id}")).await;
    assert_eq!(img.status, 200);
    assert_eq!(img.content_type, "image/png");
    let decoded = image::load_from_memory(&img.body).unwrap();
    assert_eq!((decoded.width(), decoded.height()), (6, 4));

    let thumb = get(&state, &format!("/corpora/colors/images/{id}/thumb")).await;
    assert_eq!(thumb.status, 200);
    assert_eq!(thumb.content_type, "image/png");
    // small images are not upscaled
    let t = image::load_from_memory(&thumb.body).unwrap();
    assert_eq!((t.width(), t.height()), (6, 4));
    let cached: Vec<_> = walk(&dir.path().join("cache"));
    assert_eq!(cached.len(), 1);

    assert_eq!(get(&state, "/corpora/colors/images/nope").await.status, 404);
    assert_eq!(get(&state, "/corpora/colors/images/nope").await.json()["error"], "UnknownImage");
    assert_eq!(get(&state, "/corpora/nope/images/x").await.status, 404);
    assert_eq!(sha256_file(&store), before);
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).into_iter().flatten().flatten() {
        if e.path().is_dir() {
            out.extend(walk(&e.path()));
        } else {
            out.push(e.path());
        }
    }
    out
}

#[test]
fn thumbnails_cap_the_long_edge() {
    let img = image::RgbImage::from_pixel(600, 300, image::Rgb([10, 200, 30]));
    let mut png = std::io::Cursor::new(Vec::new());
    img.write_to(&mut png, image::ImageFormat::Png).unwrap();
    let thumb = atlas_cli::service::make_thumbnail(png.get_ref()).unwrap();
    let t = image::load_from_memory(&thumb).unwrap();
    assert_eq!((t.width(), t.height()), (256, 128));
    let tall = image::RgbImage::from_pixel(10, 1000, image::Rgb([1, 2, 3]));
    let mut png = std::io::Cursor::new(Vec::new());
    tall.write_to(&mut png, image::ImageFormat::Png).unwrap();
    let t = image::load_from_memory(&atlas_cli::service::make_thumbnail(png.get_ref()).unwrap()).unwrap();
    assert_eq!((t.width(), t.height()), (3, 256));
}

#[tokio::test]
async fn repeated_and_concurrent_requests_agree_and_hit_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let (state, store, _) = registered(dir.path(), 50).await;
    let before = sha256_file(&store);
    let first = get(&state, "/corpora/colors/search?q=red&k=5").await.body;
    assert_eq!(state.cache_len(), 1);
    let mut tasks = Vec::new();
    for _ in 0..16 {
        let st = state.clone();
        tasks.push(tokio::spawn(async move { get(&st, "/corpora/colors/search?q=red&k=5").await.body }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), first);
    }
    assert_eq!(state.cache_len(), 1);
    get(&state, "/corpora/colors/search?q=blue&k=5").await;
    assert_eq!(state.cache_len(), 2);
    assert_eq!(sha256_file(&store), before);
}
