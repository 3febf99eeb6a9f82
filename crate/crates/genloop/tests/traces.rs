use ptt_core::{Domain, TermCluster};
use ptt_genloop::mock::{evaluator_reply, translator_reply, writer_reply, ScriptedProvider, StaticArxiv};
use ptt_genloop::parse::numbered_texts;
use ptt_genloop::{run_cluster, AgentRole, PipelineSettings, Route, TranscriptStatus};

fn cluster() -> TermCluster {
    TermCluster {
        cluster_id: 17,
        domain: Domain::HighEnergyPhysics,
        terms: vec!["jet quenching".into(), "quarkonia suppression".into(), "Quark-Gluon Plasma".into()],
    }
}

fn terms() -> [String; 3] {
    cluster().terms.try_into().unwrap()
}

/// Scripts a run whose evaluator hands out `scores[r]` in round `r`.
fn scripted(scores: &[[u8; 7]]) -> ScriptedProvider {
    let terms = terms();
    let writer = writer_reply(&terms, "t0");
    let english = numbered_texts(&writer, "english", 7).unwrap();
    let korean = numbered_texts(&translator_reply(&terms, &english, false), "korean", 7).unwrap();
    let pairs: Vec<(String, String)> = english.iter().cloned().zip(korean.iter().cloned()).collect();
    let p = ScriptedProvider::new();
    p.push(AgentRole::Writer, writer);
    for s in scores {
        p.push(AgentRole::Translator, translator_reply(&terms, &english, false));
        p.push(AgentRole::Evaluator, evaluator_reply(&terms, &pairs, Some(s)));
    }
    p
}

fn run(p: &ScriptedProvider) -> ptt_genloop::AgentTranscript {
    run_cluster(&cluster(), p, &StaticArxiv::echo(), &PipelineSettings::default())
}

#[test]
fn accepted_first_round() {
    let p = scripted(&[[9, 10, 8, 10, 9, 10, 10]]);
    let t = run(&p);
    assert_eq!(t.status, TranscriptStatus::Completed);
    assert_eq!(t.rounds.len(), 1);
    assert_eq!(t.rounds[0].route, Route::FinalOutput);
    assert_eq!(t.total_provider_calls, 3);
    assert_eq!(
        p.roles_called(),
        vec![AgentRole::Writer, AgentRole::Translator, AgentRole::Evaluator]
    );
    assert!(!t.needs_review && !t.fallback);
    assert_eq!(t.final_pairs.len(), 7);
    assert_eq!(t.final_pairs[6].terms.len(), 3);
    assert!(t.routes_replay());
}

#[test]
fn one_revision() {
    let p = scripted(&[[10, 10, 7, 10, 10, 10, 10], [10; 7]]);
    let t = run(&p);
    let routes: Vec<Route> = t.rounds.iter().map(|r| r.route).collect();
    assert_eq!(routes, [Route::Translator, Route::FinalOutput]);
    assert_eq!(t.total_provider_calls, 5);
    assert_eq!(t.status, TranscriptStatus::Completed);
    assert_eq!(t.selected_round, Some(1));
    assert_eq!(p.remaining(), 0);

    // Round two's translator prompt carries round one's feedback.
    let requests = p.requests();
    let second_translate = &requests[3];
    assert_eq!(second_translate.0, AgentRole::Translator);
    assert!(second_translate.1[0].content.contains("score: 7/10"));
}

#[test]
fn exhausted_rounds_fall_back_to_best() {
    let p = scripted(&[[7; 7], [10, 10, 10, 10, 10, 10, 6], [7, 7, 7, 7, 7, 7, 7]]);
    let t = run(&p);
    assert_eq!(t.rounds.len(), 3);
    assert!(t.rounds.iter().all(|r| r.route == Route::Translator));
    assert_eq!(t.total_provider_calls, 7);
    assert_eq!(t.status, TranscriptStatus::Fallback);
    assert!(t.fallback && t.needs_review);
    // Rounds one and three tie on minimum score 7; the later one wins.
    assert_eq!(t.selected_round, Some(2));
    assert!(t.fallback_reason.as_deref().unwrap().contains("max_rounds"));
}

#[test]
fn max_rounds_is_respected() {
    let p = scripted(&[[5; 7], [5; 7], [5; 7]]);
    let settings = PipelineSettings {
        max_rounds: 1,
        ..PipelineSettings::default()
    };
    let t = run_cluster(&cluster(), &p, &StaticArxiv::echo(), &settings);
    assert_eq!(t.rounds.len(), 1);
    assert_eq!(t.total_provider_calls, 3);
    assert_eq!(t.status, TranscriptStatus::Fallback);
}

#[test]
fn malformed_writer_is_reprompted_then_fails() {
    let p = ScriptedProvider::new();
    for _ in 0..3 {
        p.push(AgentRole::Writer, "1.english: only one sentence about jet quenching");
    }
    let t = run(&p);
    assert_eq!(t.status, TranscriptStatus::Failed);
    assert_eq!(t.total_provider_calls, 3);
    assert_eq!(t.reprompts, 2);
    assert!(t.error.as_deref().unwrap().starts_with("writer:"));
    // The repair message lists what was wrong.
    let last = &p.requests()[2].1;
    assert_eq!(last.len(), 5);
    assert!(last[4].content.contains("item 2 is missing"));
}

#[test]
fn writer_missing_term_is_repaired() {
    let terms = terms();
    let good = writer_reply(&terms, "t0");
    let bad = good.replacen("jet quenching", "jet physics", 1);
    let q = ScriptedProvider::new();
    q.push(AgentRole::Writer, bad);
    q.push(AgentRole::Writer, good);
    let english = numbered_texts(&writer_reply(&terms, "t0"), "english", 7).unwrap();
    let korean = numbered_texts(&translator_reply(&terms, &english, false), "korean", 7).unwrap();
    let pairs: Vec<(String, String)> = english.iter().cloned().zip(korean).collect();
    q.push(AgentRole::Translator, translator_reply(&terms, &english, false));
    q.push(AgentRole::Evaluator, evaluator_reply(&terms, &pairs, None));
    let t = run(&q);
    assert_eq!(t.status, TranscriptStatus::Completed);
    assert_eq!(t.total_provider_calls, 4);
    assert_eq!(t.reprompts, 1);
    assert!(q.requests()[1].1[2].content.contains("sentence 1 must use the term \"jet quenching\""));
}

#[test]
fn unparseable_score_becomes_zero() {
    let terms = terms();
    let english = numbered_texts(&writer_reply(&terms, "t0"), "english", 7).unwrap();
    let korean = numbered_texts(&translator_reply(&terms, &english, false), "korean", 7).unwrap();
    let pairs: Vec<(String, String)> = english.iter().cloned().zip(korean).collect();
    let bad_eval = evaluator_reply(&terms, &pairs, None).replacen("score: 10/10", "score: excellent", 1);
    let p = ScriptedProvider::new();
    p.push(AgentRole::Writer, writer_reply(&terms, "t0"));
    p.push(AgentRole::Translator, translator_reply(&terms, &english, false));
    p.push(AgentRole::Evaluator, bad_eval.clone());
    p.push(AgentRole::Evaluator, bad_eval);
    p.push(AgentRole::Translator, translator_reply(&terms, &english, false));
    p.push(AgentRole::Evaluator, evaluator_reply(&terms, &pairs, None));
    let t = run(&p);
    assert_eq!(t.rounds[0].scores[0], 0);
    assert_eq!(t.rounds[0].route, Route::Translator);
    assert!(t.rounds[0].evaluations[0].diagnostic.is_some());
    assert!(t.diagnostics.iter().any(|d| d.contains("excellent")));
    assert_eq!(t.status, TranscriptStatus::Completed);
    assert_eq!(t.total_provider_calls, 6);
}

#[test]
fn accepted_but_unannotated_needs_review() {
    let terms = terms();
    let english = numbered_texts(&writer_reply(&terms, "t0"), "english", 7).unwrap();
    let flawed = translator_reply(&terms, &english, true);
    let korean = numbered_texts(&flawed, "korean", 7).unwrap();
    let pairs: Vec<(String, String)> = english.iter().cloned().zip(korean).collect();
    let p = ScriptedProvider::new();
    p.push(AgentRole::Writer, writer_reply(&terms, "t0"));
    p.push(AgentRole::Translator, flawed);
    p.push(AgentRole::Evaluator, evaluator_reply(&terms, &pairs, Some(&[9; 7])));
    let t = run(&p);
    assert_eq!(t.rounds.len(), 1);
    assert_eq!(t.status, TranscriptStatus::Fallback);
    assert!(t.needs_review);
    // The evaluator reported "No" for the dropped terms, which the local check agrees with.
    assert!(t.rounds[0].evaluations.iter().all(|e| !e.audit_mismatch));
}

#[test]
fn provider_error_is_recorded() {
    let p = ScriptedProvider::new();
    p.push(AgentRole::Writer, writer_reply(&terms(), "t0"));
    let t = run(&p);
    assert_eq!(t.status, TranscriptStatus::Failed);
    assert!(t.error.as_deref().unwrap().starts_with("translator:"));
    assert_eq!(t.total_provider_calls, 2);
}

#[test]
fn no_arxiv_results_fails_cleanly() {
    let p = scripted(&[[10; 7]]);
    let arxiv = StaticArxiv::empty();
    let t = run_cluster(&cluster(), &p, &arxiv, &PipelineSettings::default());
    assert_eq!(t.status, TranscriptStatus::Failed);
    assert_eq!(arxiv.queries().len(), 4);
    assert_eq!(t.total_provider_calls, 0);
}

#[test]
fn transcript_round_trips_as_json() {
    let t = run(&scripted(&[[7; 7], [9; 7]]));
    let json = serde_json::to_string(&t).unwrap();
    let back: ptt_genloop::AgentTranscript = serde_json::from_str(&json).unwrap();
    assert_eq!(back, t);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["rounds"][0]["route"], "translator");
    assert_eq!(v["rounds"][1]["route"], "final_output");
}
