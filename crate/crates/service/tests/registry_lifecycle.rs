use std::collections::BTreeMap;

use toxbench_core::dataset::Endpoint;
use toxbench_core::metrics::EndpointScore;
use toxbench_core::protocol::ValidationReport;
use toxbench_service::orchestrate::{EvaluationResult, EvaluationStatus, Timings};
use toxbench_service::registry::{
    read_events, Decision, LeaderboardError, LeaderboardQuery, ModelCard, Registry, RegistryError, RegistryState,
    SortKey, Direction, Status,
};

fn card(name: &str, developer: &str) -> ModelCard {
    ModelCard {
        model_name: name.into(),
        developer: developer.into(),
        architecture: "MLP".into(),
        model_version: "1".into(),
        space_url: "https://example.org/space".into(),
        commit_hash: "0123abcd".into(),
        ..ModelCard::default()
    }
}

fn result(status: EvaluationStatus, mean: f64) -> EvaluationResult {
    let scored = status == EvaluationStatus::Scored;
    EvaluationResult {
        status,
        per_endpoint: if scored {
            Endpoint::ALL.iter().map(|&e| EndpointScore { endpoint: e, auc: mean, n_pos: 3, n_neg: 5 }).collect()
        } else {
            Vec::new()
        },
        mean_auc: scored.then_some(mean),
        rows: 8,
        unique_smiles: 8,
        batch_size: 64,
        request_count: 1,
        validation: ValidationReport { ok: status != EvaluationStatus::Rejected, violations: Vec::new() },
        failure: None,
        attempts: Vec::new(),
        timings: Timings { total_ms: 1.5, slowest_batch_ms: 1.0 },
        dataset_hash: "ab".repeat(32),
        endpoint_url: "https://example.org/space/predict".into(),
    }
}

fn approved(r: &Registry, name: &str, mean: f64) -> u64 {
    let id = r.submit(card(name, "Lab")).unwrap().id;
    r.start_evaluation(id).unwrap();
    r.attach_result(id, result(EvaluationStatus::Scored, mean)).unwrap();
    r.review(id, Decision::Approve, "admin", "").unwrap();
    id
}

#[test]
fn result_statuses_propagate() {
    let r = Registry::in_memory();
    let expect = [
        (EvaluationStatus::Scored, Status::Preliminary),
        (EvaluationStatus::Rejected, Status::Rejected),
        (EvaluationStatus::Failed, Status::Failed),
    ];
    for (i, (eval, status)) in expect.into_iter().enumerate() {
        let id = r.submit(card(&format!("m{i}"), "Lab")).unwrap().id;
        r.start_evaluation(id).unwrap();
        let s = r.attach_result(id, result(eval, 0.8)).unwrap();
        assert_eq!(s.status, status);
        assert_eq!(s.transitions.len(), 3);
        assert!(s.result.is_some());
    }
    let err = r.attach_result(1, result(EvaluationStatus::Scored, 0.8)).unwrap_err();
    assert!(matches!(err, RegistryError::IllegalTransition { from: Status::Preliminary, .. }));
}

#[test]
fn review_rules() {
    let r = Registry::in_memory();
    let id = r.submit(card("m", "Lab")).unwrap().id;
    assert!(matches!(r.review(id, Decision::Approve, "admin", ""), Err(RegistryError::IllegalTransition { .. })));
    r.start_evaluation(id).unwrap();
    r.attach_result(id, result(EvaluationStatus::Scored, 0.8)).unwrap();
    assert!(matches!(r.review(id, Decision::Reject, "  ", ""), Err(RegistryError::EmptyReviewer)));
    let s = r.review(id, Decision::Reject, "admin", "not reproducible").unwrap();
    assert_eq!(s.status, Status::Rejected);
    assert_eq!(s.review.unwrap().note, "not reproducible");
    assert!(r.snapshot().result_of(&r.get(id).unwrap()).is_some(), "result retained");
    assert!(matches!(r.review(id, Decision::Approve, "admin", ""), Err(RegistryError::IllegalTransition { .. })));
}

#[test]
fn leaderboard_order_filters_and_access() {
    let r = Registry::in_memory();
    let low = approved(&r, "beta", 0.82);
    let high = approved(&r, "Alpha", 0.84);
    let tie = approved(&r, "gamma", 0.82);
    let pending = r.submit(card("delta", "Other")).unwrap().id;

    let rows = r.leaderboard(&LeaderboardQuery::default(), false).unwrap();
    assert_eq!(rows.iter().map(|r| r.id).collect::<Vec<_>>(), vec![high, low, tie]);
    assert_eq!(rows[0].per_endpoint.len(), 12);

    let by_name = LeaderboardQuery { sort: Some(SortKey::Name), ..Default::default() };
    let names: Vec<String> = r.leaderboard(&by_name, false).unwrap().into_iter().map(|r| r.model_name).collect();
    assert_eq!(names, vec!["Alpha", "beta", "gamma"]);

    let asc = LeaderboardQuery { dir: Some(Direction::Asc), ..Default::default() };
    assert_eq!(r.leaderboard(&asc, false).unwrap().iter().map(|r| r.id).collect::<Vec<_>>(), vec![low, tie, high]);

    let q = LeaderboardQuery { q: Some("ALP".into()), ..Default::default() };
    assert_eq!(r.leaderboard(&q, false).unwrap().len(), 1);

    let hidden = LeaderboardQuery { status: Some("pending".into()), ..Default::default() };
    assert_eq!(r.leaderboard(&hidden, false), Err(LeaderboardError::Forbidden));
    let rows = r.leaderboard(&hidden, true).unwrap();
    assert_eq!(rows.iter().map(|r| r.id).collect::<Vec<_>>(), vec![pending]);
    assert_eq!(rows[0].mean_auc, None);
}

#[test]
fn log_replay_reproduces_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let hash = {
        let r = Registry::open(&path).unwrap();
        approved(&r, "a", 0.9);
        let id = r.submit(card("b", "Lab")).unwrap().id;
        r.start_evaluation(id).unwrap();
        r.attach_result(id, result(EvaluationStatus::Rejected, 0.0)).unwrap();
        r.submit(card("c", "Lab")).unwrap();
        r.snapshot().state_hash()
    };
    let events = read_events(&path).unwrap();
    assert_eq!(events.len(), 8);
    let replayed = RegistryState::replay(&events).unwrap();
    assert_eq!(replayed.state_hash(), hash);
    for s in replayed.submissions.values() {
        if let Some((i, h)) = &s.result {
            assert_eq!(&replayed.results[*i].content_hash(), h);
        }
    }
    let reopened = Registry::open(&path).unwrap();
    assert_eq!(reopened.snapshot().state_hash(), hash);
    assert_eq!(reopened.submit(card("d", "Lab")).unwrap().id, 4);
    let first: BTreeMap<String, serde_json::Value> =
        serde_json::from_str(std::fs::read_to_string(&path).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["event"], "submission_created");
    assert_eq!(first["seq"], 1);
}

#[test]
fn corrupt_log_is_reported_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    std::fs::write(&path, "{\"seq\":1}\n").unwrap();
    assert!(matches!(Registry::open(&path), Err(RegistryError::Corrupt { line: 1, .. })));
}
