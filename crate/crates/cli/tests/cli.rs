use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use ptt_core::corpus::{self, Dataset};
use ptt_core::{SentencePair, Split, TermCluster};
use serde_json::{json, Value};

fn ptt(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptt"))
        .args(args)
        .current_dir(dir)
        .env_remove("PTT_SCORER_URL")
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn four_terms() -> SentencePair {
    serde_json::from_str(include_str!("../../core/tests/data/four_terms.jsonl").trim()).unwrap()
}

/// One-pair test split holding the four-term example.
fn four_terms_dataset(dir: &Path) -> PathBuf {
    let pair = four_terms();
    let cluster = TermCluster {
        cluster_id: 0,
        domain: pair.domain,
        terms: vec![
            "adversarial training".into(),
            "recurrent neural architectures".into(),
            "bayesian optimization".into(),
        ],
    };
    let path = dir.join("four_terms.jsonl");
    corpus::save(&Dataset::new("four-terms", vec![pair], vec![cluster]), &path).unwrap();
    path
}

fn write_lines(path: &Path, lines: &[String]) {
    fs::write(path, lines.iter().map(|l| format!("{l}\n")).collect::<String>()).unwrap();
}

/// Mock scorer sidecar answering `len(hyp) / 100` and counting requests.
struct Sidecar {
    url: String,
    requests: Arc<AtomicUsize>,
}

fn sidecar() -> Sidecar {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let seen = Arc::clone(&requests);
    thread::spawn(move || {
        for mut rq in server.incoming_requests() {
            seen.fetch_add(1, Ordering::SeqCst);
            let mut body = String::new();
            rq.as_reader().read_to_string(&mut body).unwrap();
            let out = if rq.url() == "/v1/health" {
                json!({"status": "ok", "model_ids": {"comet": "mock-comet"}})
            } else {
                let req: Value = serde_json::from_str(&body).unwrap();
                let scores: Vec<f64> = req["items"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|i| i["hyp"].as_str().unwrap().chars().count() as f64 / 100.0)
                    .collect();
                json!({"request_id": req["request_id"], "scores": scores, "model_id": "mock-comet"})
            };
            let _ = rq.respond(tiny_http::Response::from_string(out.to_string()));
        }
    });
    Sidecar { url, requests }
}

fn mock_dataset(dir: &Path) -> PathBuf {
    let clusters: Vec<String> = (1..=8)
        .map(|i| {
            let domain = ["ai", "biology"][i % 2];
            json!({"cluster_id": i, "domain": domain,
                   "terms": [format!("graph model{i}"), format!("kernel method{i}"), format!("sparse code{i}")]})
            .to_string()
        })
        .collect();
    write_lines(&dir.join("clusters.jsonl"), &clusters);
    let o = ptt(&["generate", "clusters.jsonl", "--out", "gen", "--mock"], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = ptt(&["split", "gen/dataset.jsonl", "--out", "split.jsonl", "--fractions", "0.5,0.25,0.25"], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join("split.jsonl")
}

fn test_targets(path: &Path) -> Vec<String> {
    corpus::load(path).unwrap().pairs_in(Split::Test).map(|p| p.target.clone()).collect()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn self_eval_is_perfect_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let data = mock_dataset(tmp.path());
    write_lines(&tmp.path().join("refs.txt"), &test_targets(&data));

    let o = ptt(&["eval", "refs.txt", "--dataset", "split.jsonl", "--out", "a"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("1.000"));
    let r = report(&tmp.path().join("a"));
    assert_eq!(r["results"]["mean_weight"], 1.0);
    assert_eq!(r["results"]["mean_raw"]["bleu"], 100.0);
    assert_eq!(r["dataset"]["content_hash"], corpus::load(&data).unwrap().loaded_hash.unwrap().as_str());
    assert_eq!(r["toolkit"], ptt_core::TOOLKIT_VERSION);
    assert_eq!(r["config"]["metrics"], json!(["bleu"]));

    let o = ptt(&["eval", "refs.txt", "--dataset", "split.jsonl", "--out", "b", "--jobs", "3"], tmp.path());
    assert_eq!(code(&o), 0);
    for f in ["sentences.jsonl", "report.txt"] {
        assert_eq!(fs::read(tmp.path().join("a").join(f)).unwrap(), fs::read(tmp.path().join("b").join(f)).unwrap());
    }
}

#[test]
fn dropped_annotation_shows_in_sentence_output() {
    let tmp = tempfile::tempdir().unwrap();
    four_terms_dataset(tmp.path());
    let hyp = four_terms().target.replacen("(recurrent neural architectures)", "", 1);
    write_lines(&tmp.path().join("hyp.txt"), &[hyp]);

    let o = ptt(&["eval", "hyp.txt", "--dataset", "four_terms.jsonl", "--out", "e"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let line = fs::read_to_string(tmp.path().join("e/sentences.jsonl")).unwrap();
    let s: Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!((s["n_eng"].as_u64(), s["n_kor"].as_u64()), (Some(4), Some(3)));
    assert_eq!(s["weight"], 0.75);
    assert!(fs::read_to_string(tmp.path().join("e/report.txt")).unwrap().contains("0.750"));
}

#[test]
fn bleu_only_never_contacts_the_scorer() {
    let tmp = tempfile::tempdir().unwrap();
    four_terms_dataset(tmp.path());
    write_lines(&tmp.path().join("hyp.txt"), &[four_terms().target]);
    let side = sidecar();
    let o = ptt(
        &["eval", "hyp.txt", "--dataset", "four_terms.jsonl", "--out", "e", "--metrics", "bleu", "--scorer-url", &side.url],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(side.requests.load(Ordering::SeqCst), 0);
}

#[test]
fn neural_columns_come_from_the_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    four_terms_dataset(tmp.path());
    write_lines(&tmp.path().join("hyp.txt"), &[four_terms().target]);
    let side = sidecar();
    // Scorer URL from the environment, metric list from the config file.
    fs::write(tmp.path().join("run.toml"), "metrics = [\"bleu\", \"comet\"]\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ptt"))
        .args(["--config", "run.toml", "eval", "hyp.txt", "--dataset", "four_terms.jsonl", "--out", "e"])
        .current_dir(tmp.path())
        .env("PTT_SCORER_URL", &side.url)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(side.requests.load(Ordering::SeqCst) >= 1);
    let r = report(&tmp.path().join("e"));
    assert_eq!(r["model_ids"]["comet"], "mock-comet");
    assert_eq!(r["config"]["scorer"]["endpoint"], side.url.as_str());
    // The sidecar scores the stripped hypothesis by length.
    let line = fs::read_to_string(tmp.path().join("e/sentences.jsonl")).unwrap();
    let s: Value = serde_json::from_str(line.trim()).unwrap();
    let expected = s["stripped_hyp"].as_str().unwrap().chars().count() as f64 / 100.0;
    assert_eq!(r["results"]["mean_raw"]["comet"].as_f64(), Some(expected));
    assert_eq!(r["results"]["mean_weighted"]["comet"].as_f64(), Some(expected));
}

#[test]
fn unreachable_scorer_is_partial_success() {
    let tmp = tempfile::tempdir().unwrap();
    four_terms_dataset(tmp.path());
    write_lines(&tmp.path().join("hyp.txt"), &[four_terms().target]);
    fs::write(tmp.path().join("run.toml"), "[scorer]\nretries = 0\ntimeout_secs = 2.0\n").unwrap();
    let o = ptt(
        &[
            "--config", "run.toml", "eval", "hyp.txt", "--dataset", "four_terms.jsonl", "--out", "e", "--metrics",
            "bleu,bertscore", "--scorer-url", "http://127.0.0.1:9",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let r = report(&tmp.path().join("e"));
    assert!(r["unavailable"]["bertscore"].is_string());
    assert_eq!(r["results"]["mean_raw"]["bleu"], 100.0);
}

#[test]
fn line_count_mismatch_names_both_counts() {
    let tmp = tempfile::tempdir().unwrap();
    four_terms_dataset(tmp.path());
    write_lines(&tmp.path().join("hyp.txt"), &["a".into(), "b".into()]);
    let o = ptt(&["eval", "hyp.txt", "--dataset", "four_terms.jsonl", "--out", "e"], tmp.path());
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("has 2 lines but the selected split has 1 sentence pairs"), "{}", stderr(&o));
}

#[test]
fn jsonl_hypotheses_match_by_id() {
    let tmp = tempfile::tempdir().unwrap();
    let data = mock_dataset(tmp.path());
    let ds = corpus::load(&data).unwrap();
    let mut lines: Vec<String> = ds
        .pairs_in(Split::Test)
        .map(|p| json!({"id": p.id, "hyp": p.target}).to_string())
        .collect();
    lines.reverse();
    write_lines(&tmp.path().join("hyps.jsonl"), &lines);
    let o = ptt(&["eval", "hyps.jsonl", "--dataset", "split.jsonl", "--out", "e"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(report(&tmp.path().join("e"))["results"]["mean_raw"]["bleu"], 100.0);

    lines.push(json!({"id": "nope", "hyp": "x"}).to_string());
    write_lines(&tmp.path().join("hyps.jsonl"), &lines);
    let o = ptt(&["eval", "hyps.jsonl", "--dataset", "split.jsonl", "--out", "e"], tmp.path());
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("nope"));
}

#[test]
fn generate_two_clusters_then_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let clusters = [
        json!({"cluster_id": 1, "domain": "ai", "terms": ["graph attention", "message passing", "node embedding"]}),
        json!({"cluster_id": 2, "domain": "biology", "terms": ["gene expression", "cell cycle", "protein folding"]}),
    ];
    write_lines(&tmp.path().join("c.jsonl"), &clusters.iter().map(Value::to_string).collect::<Vec<_>>());
    let o = ptt(&["generate", "c.jsonl", "--out", "g", "--mock"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("2 transcripts (0 resumed), 6 provider calls, 6 pairs"), "{}", stdout(&o));
    assert_eq!(fs::read_dir(tmp.path().join("g/transcripts")).unwrap().count(), 2);
    let first = fs::read(tmp.path().join("g/dataset.jsonl")).unwrap();
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("g/dataset.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["provenance"]["command"], "generate");

    let o = ptt(&["generate", "c.jsonl", "--out", "g", "--mock"], tmp.path());
    assert!(stdout(&o).contains("2 transcripts (2 resumed), 0 provider calls, 6 pairs"), "{}", stdout(&o));
    assert_eq!(fs::read(tmp.path().join("g/dataset.jsonl")).unwrap(), first);
    let o = ptt(&["validate", "g/dataset.jsonl"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn bad_cluster_fails_before_any_request() {
    let tmp = tempfile::tempdir().unwrap();
    write_lines(
        &tmp.path().join("c.jsonl"),
        &[json!({"cluster_id": 1, "domain": "ai", "terms": ["only", "two"]}).to_string()],
    );
    let side = sidecar();
    fs::write(
        tmp.path().join("provider.toml"),
        format!("endpoint = \"{}/v1/chat/completions\"\n[arxiv]\nbase_url = \"{}/api/query\"\n", side.url, side.url),
    )
    .unwrap();
    let o = ptt(&["generate", "c.jsonl", "--out", "g", "--provider", "provider.toml"], tmp.path());
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("has 2 terms, expected 3"));
    assert_eq!(side.requests.load(Ordering::SeqCst), 0);
}

#[test]
fn split_is_seeded_and_guarded() {
    let tmp = tempfile::tempdir().unwrap();
    mock_dataset(tmp.path());
    let run = |out: &str, seed: &str| {
        let args = ["split", "gen/dataset.jsonl", "--out", out, "--seed", seed, "--fractions", "0.5,0.25,0.25"];
        let o = ptt(&args, tmp.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        fs::read(tmp.path().join(out)).unwrap()
    };
    assert_eq!(run("s1.jsonl", "7"), run("s2.jsonl", "7"));

    let o = ptt(&["split", "s1.jsonl", "--out", "s3.jsonl"], tmp.path());
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("resplit"));
    let o = ptt(&["split", "s1.jsonl", "--out", "s3.jsonl", "--resplit", "--fractions", "0.5,0.25,0.25"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // Default 80/10/10 cannot place 3-pair clusters in a 2-pair test split.
    let o = ptt(&["split", "s1.jsonl", "--out", "s3.jsonl", "--resplit"], tmp.path());
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("targets only 2"));
    let o = ptt(&["split", "s1.jsonl", "--out", "s4.jsonl", "--resplit", "--fractions", "0.5,0.5,0.5"], tmp.path());
    assert_eq!(code(&o), 4);
}

#[test]
fn validate_reports_problems() {
    let tmp = tempfile::tempdir().unwrap();
    let mut pair = four_terms();
    pair.target = pair.target.replacen("(bayesian optimization)", "", 1);
    let path = tmp.path().join("bad.jsonl");
    let cluster = TermCluster {
        cluster_id: 0,
        domain: pair.domain,
        terms: vec!["adversarial training".into(), "recurrent neural architectures".into(), "bayesian optimization".into()],
    };
    corpus::save(&Dataset::new("bad", vec![pair], vec![cluster]), &path).unwrap();
    let o = ptt(&["validate", "bad.jsonl", "--json"], tmp.path());
    assert_eq!(code(&o), 4);
    let d: Value = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(d["kind"], "missing_parenthetical");
    assert_eq!(d["term"], "bayesian optimization");

    fs::write(&path, "{\"id\": 3}\n").unwrap();
    assert_eq!(code(&ptt(&["validate", "bad.jsonl"], tmp.path())), 4);
    assert_eq!(code(&ptt(&["validate", "missing.jsonl"], tmp.path())), 1);
}

#[test]
fn report_marks_best_and_refuses_mixed_data() {
    let tmp = tempfile::tempdir().unwrap();
    let data = mock_dataset(tmp.path());
    let refs = test_targets(&data);
    write_lines(&tmp.path().join("good.txt"), &refs);
    let worse: Vec<String> = refs.iter().map(|r| r.replacen('(', " ", 1).replacen(')', " ", 1)).collect();
    write_lines(&tmp.path().join("worse.txt"), &worse);
    for sys in ["good", "worse"] {
        let o = ptt(&["eval", &format!("{sys}.txt"), "--dataset", "split.jsonl", "--out", sys], tmp.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }

    let o = ptt(&["report", "worse/report.json", "good/report.json", "--out", "merged.json"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let good_row = text.lines().find(|l| l.starts_with("good")).unwrap();
    let worse_row = text.lines().find(|l| l.starts_with("worse")).unwrap();
    assert!(good_row.contains("1.000*") && good_row.contains("100.00*"), "{text}");
    assert!(!worse_row.contains('*'), "{text}");
    let merged: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("merged.json")).unwrap()).unwrap();
    assert_eq!(merged["systems"][1]["system"], "good");
    assert_eq!(merged["systems"][1]["best"], json!(["w_terms", "m_ptt_bleu", "bleu"]));

    let o = ptt(&["report", "good/report.json", "--format", "markdown"], tmp.path());
    assert_eq!(stdout(&o).lines().count(), 3);
    assert!(stdout(&o).contains("**1.000**"));

    // Same hypotheses against a different dataset.
    four_terms_dataset(tmp.path());
    write_lines(&tmp.path().join("t1.txt"), &[four_terms().target]);
    let o = ptt(&["eval", "t1.txt", "--dataset", "four_terms.jsonl", "--out", "t1"], tmp.path());
    assert_eq!(code(&o), 0);
    let o = ptt(&["report", "good/report.json", "t1/report.json"], tmp.path());
    assert_eq!(code(&o), 4);
    let h1 = report(&tmp.path().join("good"))["dataset"]["content_hash"].as_str().unwrap().to_owned();
    let h2 = report(&tmp.path().join("t1"))["dataset"]["content_hash"].as_str().unwrap().to_owned();
    assert!(stderr(&o).contains(&h1) && stderr(&o).contains(&h2), "{}", stderr(&o));
}
