use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use memelens_core::corpus::{Corpus, Split};
use memelens_core::features::{labels_of, split_examples, FeaturePipeline};
use memelens_core::gbdt::{train_gbdt, GbdtParams};
use memelens_core::lexicon::LexiconSet;
use memelens_core::synthetic::{generate, SyntheticConfig};
use memelens_core::vectorizer::VectorizerOptions;
use memelens_review::{augment_corpus, router, Candidate, ModelInfo, ReviewConfig, ReviewService};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    dir: tempfile::TempDir,
    candidates: Vec<Candidate>,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let synthetic = generate(&SyntheticConfig {
            n_memes: 80,
            seed: 4,
            ..SyntheticConfig::default()
        })
        .unwrap();
        synthetic.write(dir.path()).unwrap();
        let corpus = Corpus::new(synthetic.records, synthetic.annotations)
            .unwrap()
            .assign_splits(4)
            .unwrap();
        let train = split_examples(&corpus, Split::Train);
        let pipeline = FeaturePipeline::fit(&train, LexiconSet::bundled(), VectorizerOptions::default()).unwrap();
        let params = GbdtParams {
            n_estimators: 10,
            ..GbdtParams::default()
        };
        let model = train_gbdt(
            &pipeline.rows(&train).unwrap(),
            &labels_of(&train).unwrap(),
            &params,
            &pipeline.feature_names(),
        )
        .unwrap();
        let candidates = augment_corpus(&corpus, &model, &pipeline, 0.5, 8).unwrap();
        Fixture { dir, candidates }
    }

    fn labels_path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn service(&self, labels: &Path) -> Arc<ReviewService> {
        self.service_with(self.candidates.clone(), labels)
    }

    fn service_with(&self, candidates: Vec<Candidate>, labels: &Path) -> Arc<ReviewService> {
        let config = ReviewConfig {
            threshold: 0.5,
            image_root: self.dir.path().to_path_buf(),
            labels_path: labels.to_path_buf(),
            model: ModelInfo {
                kind: "gbdt".into(),
                n_trees: 10,
                n_features: 0,
            },
        };
        Arc::new(ReviewService::new(candidates, config).unwrap())
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let builder = Request::builder().method(method).uri(uri);
    let request = match body {
        Some(b) => builder
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = axum::body::to_bytes(response.into_body(), usize::MAX).await.unwrap();
    (status, bytes.to_vec())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn label(value: u8) -> Option<Value> {
    Some(json!({ "label": value, "annotator": "mod-a" }))
}

#[tokio::test]
async fn queue_is_deterministic_and_ordered() {
    let fx = Fixture::new();
    let a = router(fx.service(&fx.labels_path("a.jsonl")));
    let b = router(fx.service(&fx.labels_path("b.jsonl")));

    let (status, first) = call(&a, "GET", "/api/queue", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(call(&a, "GET", "/api/queue", None).await.1, first);
    assert_eq!(call(&b, "GET", "/api/queue", None).await.1, first);

    let queue: Vec<Value> = serde_json::from_slice(&first).unwrap();
    assert!(!queue.is_empty());
    let scores: Vec<f64> = queue
        .iter()
        .map(|i| i["augmentation"]["score"].as_f64().unwrap())
        .collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert!(scores.iter().all(|&s| s >= 0.5));
    assert!(queue.iter().all(|i| i["status"] == "pending"));

    let (_, all) = call_json(&a, "GET", "/api/queue?threshold=0", None).await;
    assert_eq!(all.as_array().unwrap().len(), fx.candidates.len());
    let (_, none) = call_json(&a, "GET", "/api/queue?threshold=1", None).await;
    assert_eq!(none.as_array().unwrap().len(), 0);

    let (_, by_id) = call_json(&a, "GET", "/api/queue?threshold=0&sort=id", None).await;
    let ids: Vec<&str> = by_id
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["id"].as_str().unwrap())
        .collect();
    assert!(ids.windows(2).all(|w| w[0] < w[1]));

    assert_eq!(
        call(&a, "GET", "/api/queue?sort=random", None).await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        call(&a, "GET", "/api/queue?threshold=2", None).await.0,
        StatusCode::BAD_REQUEST
    );
}

#[tokio::test]
async fn not_found_and_conflict_semantics() {
    let fx = Fixture::new();
    let app = router(fx.service(&fx.labels_path("labels.jsonl")));
    let id = fx.candidates[0].augmentation.id.clone();

    assert_eq!(
        call(&app, "GET", "/api/memes/nope", None).await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        call(&app, "POST", "/api/memes/nope/label", label(1)).await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        call(&app, "GET", "/api/memes/nope/image", None).await.0,
        StatusCode::NOT_FOUND
    );

    let (status, item) = call_json(&app, "POST", &format!("/api/memes/{id}/label"), label(1)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(item["status"], "labeled");
    assert_eq!(item["human_label"], 1);
    assert_eq!(item["annotator"], "mod-a");

    // identical resubmission is accepted and changes nothing
    let (status, again) = call_json(&app, "POST", &format!("/api/memes/{id}/label"), label(1)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again["labeled_at"], item["labeled_at"]);

    let (status, conflict) = call_json(&app, "POST", &format!("/api/memes/{id}/label"), label(0)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(conflict["stored_label"], 1);
    let (_, stored) = call_json(&app, "GET", &format!("/api/memes/{id}"), None).await;
    assert_eq!(stored["human_label"], 1);

    let other = &fx.candidates[1].augmentation.id;
    assert_eq!(
        call(&app, "POST", &format!("/api/memes/{other}/label"), label(7))
            .await
            .0,
        StatusCode::BAD_REQUEST
    );
    let log = std::fs::read_to_string(fx.labels_path("labels.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 1);
}

#[tokio::test]
async fn labels_survive_restart() {
    let fx = Fixture::new();
    let path = fx.labels_path("labels.jsonl");
    let ids: Vec<String> = fx
        .candidates
        .iter()
        .take(3)
        .map(|c| c.augmentation.id.clone())
        .collect();
    let before = {
        let app = router(fx.service(&path));
        for (i, id) in ids.iter().enumerate() {
            let (status, _) = call(&app, "POST", &format!("/api/memes/{id}/label"), label((i % 2) as u8)).await;
            assert_eq!(status, StatusCode::OK);
        }
        call_json(&app, "GET", "/api/stats/agreement", None).await.1
    };

    let app = router(fx.service(&path));
    for (i, id) in ids.iter().enumerate() {
        let (_, item) = call_json(&app, "GET", &format!("/api/memes/{id}"), None).await;
        assert_eq!(item["status"], "labeled");
        assert_eq!(item["human_label"], (i % 2) as u64);
    }
    assert_eq!(call_json(&app, "GET", "/api/stats/agreement", None).await.1, before);
    let (_, conflict) = call_json(&app, "POST", &format!("/api/memes/{}/label", ids[0]), label(1)).await;
    assert_eq!(conflict["stored_label"], 0);
}

#[tokio::test]
async fn scripted_ten_label_session() {
    let fx = Fixture::new();
    let app = router(fx.service(&fx.labels_path("labels.jsonl")));
    let (_, stats) = call_json(&app, "GET", "/api/stats/agreement", None).await;
    assert_eq!(stats["n_reviewed"], 0);
    assert_eq!(stats["agreement"], 0.0);

    // agree with the model on 7 items, overrule it on 3
    let script: Vec<(String, u8, u8)> = fx
        .candidates
        .iter()
        .take(10)
        .enumerate()
        .map(|(i, c)| {
            let model = c.augmentation.predicted_label;
            let human = if i % 4 == 1 { 1 - model } else { model };
            (c.augmentation.id.clone(), model, human)
        })
        .collect();
    for (id, _, human) in &script {
        let (status, _) = call(&app, "POST", &format!("/api/memes/{id}/label"), label(*human)).await;
        assert_eq!(status, StatusCode::OK);
    }

    let count = |f: &dyn Fn(u8, u8) -> bool| script.iter().filter(|(_, m, h)| f(*m, *h)).count() as u64;
    let (_, stats) = call_json(&app, "GET", "/api/stats/agreement", None).await;
    assert_eq!(stats["n_reviewed"], 10);
    assert_eq!(stats["agreement"], 0.7);
    let c = &stats["confusion"];
    assert_eq!(c["model_pos_human_pos"], count(&|m, h| m == 1 && h == 1));
    assert_eq!(c["model_pos_human_neg"], count(&|m, h| m == 1 && h == 0));
    assert_eq!(c["model_neg_human_pos"], count(&|m, h| m == 0 && h == 1));
    assert_eq!(c["model_neg_human_neg"], count(&|m, h| m == 0 && h == 0));
    assert_eq!(stats["human_positive_rate"], count(&|_, h| h == 1) as f64 / 10.0);
    assert_eq!(stats["model_positive_rate"], count(&|m, _| m == 1) as f64 / 10.0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_submissions() {
    let fx = Fixture::new();
    let path = fx.labels_path("labels.jsonl");
    let app = router(fx.service(&path));

    let mut tasks = Vec::new();
    for c in fx.candidates.iter().take(32) {
        let app = app.clone();
        let id = c.augmentation.id.clone();
        tasks.push(tokio::spawn(async move {
            call(&app, "POST", &format!("/api/memes/{id}/label"), label(1)).await.0
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 32);

    let contested = fx.candidates[40].augmentation.id.clone();
    let racers: Vec<_> = [0u8, 1]
        .into_iter()
        .map(|l| {
            let app = app.clone();
            let uri = format!("/api/memes/{contested}/label");
            tokio::spawn(async move { call(&app, "POST", &uri, label(l)).await.0 })
        })
        .collect();
    let mut statuses = Vec::new();
    for r in racers {
        statuses.push(r.await.unwrap());
    }
    statuses.sort();
    assert_eq!(statuses, [StatusCode::OK, StatusCode::CONFLICT]);
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 33);
}

#[tokio::test]
async fn image_passthrough_is_confined() {
    let fx = Fixture::new();
    let app = router(fx.service(&fx.labels_path("labels.jsonl")));
    let id = &fx.candidates[0].augmentation.id;
    let response = app
        .clone()
        .oneshot(
            Request::get(format!("/api/memes/{id}/image"))
                .body(Body::empty())
                .unwrap(),
        )
        .await
        .unwrap();
    assert_eq!(response.status(), StatusCode::OK);
    assert_eq!(response.headers()["content-type"], "image/png");
    let bytes = axum::body::to_bytes(response.into_body(), usize::MAX).await.unwrap();
    assert!(bytes.starts_with(b"\x89PNG"));

    let mut escaped = fx.candidates[..2].to_vec();
    escaped[0].img = "../outside.png".into();
    escaped[1].img = "img/missing.png".into();
    let app = router(fx.service_with(escaped.clone(), &fx.labels_path("other.jsonl")));
    let uri = |c: &Candidate| format!("/api/memes/{}/image", c.augmentation.id);
    assert_eq!(
        call(&app, "GET", &uri(&escaped[0]), None).await.0,
        StatusCode::FORBIDDEN
    );
    assert_eq!(
        call(&app, "GET", &uri(&escaped[1]), None).await.0,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn health_reports_version() {
    let fx = Fixture::new();
    let app = router(fx.service(&fx.labels_path("labels.jsonl")));
    let (status, health) = call_json(&app, "GET", "/api/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(health["status"], "ok");
    assert_eq!(health["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(health["items"], fx.candidates.len() as u64);
    assert_eq!(health["model"]["kind"], "gbdt");
}
