use std::sync::Arc;

use proptest::prelude::*;
use pw_core::generator::random_instance;
use pw_core::query::{Predicate, Projection, Source};
use pw_core::view::group_profile;
use pw_core::*;

fn bound_session(inst: &pw_core::generator::Instance, mode: ViewMode) -> Session {
    let mut s = Session::new(&inst.profile.user_id);
    s.set_profile(Some(inst.profile.clone()));
    s.set_degree(inst.degree).unwrap();
    let target = s.target_profile().unwrap();
    if !target.is_empty() {
        s.bind_view(Arc::new(build_view(&inst.dataset, &target, mode).unwrap())).unwrap();
    }
    s
}

fn column_label(ds: &Dataset, p: &Predicate) -> String {
    if p.column.table == ds.fact.name {
        p.column.name.clone()
    } else {
        p.column.to_string()
    }
}

/// Hand-rolled predicate check over a result row; nulls never match.
fn row_matches(columns: &[String], row: &[Value], ds: &Dataset, preds: &[Predicate]) -> bool {
    preds.iter().all(|p| {
        let i = columns.iter().position(|c| *c == column_label(ds, p)).unwrap();
        let cell = &row[i];
        let Some(kind) = cell.kind() else { return false };
        let lit = p.value.bind_literal(kind, "test").unwrap();
        matches!(cell.compare(&lit), Ok(Some(ord)) if p.operator.holds(ord))
    })
}

fn sum_of(r: &QueryResult) -> f64 {
    match &r.rows[0][0] {
        Value::Null => 0.0,
        Value::Integer(i) => *i as f64,
        Value::Decimal(d) => *d,
        other => panic!("sum returned {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn query_predicates_commute_with_the_view(seed in 0u64..10_000) {
        let inst = random_instance(seed);
        let session = bound_session(&inst, ViewMode::Ids);
        for q in &inst.queries {
            // Widen each query to all columns so every predicate column is visible.
            let wide = Query {
                projection: Projection::All,
                group_by: vec![],
                ..q.clone()
            };
            let routed = route(&wide, &session, &inst.dataset).unwrap();
            let unfiltered = route(&wide.without_predicates(), &session, &inst.dataset).unwrap();
            let filtered: Vec<_> = unfiltered
                .rows
                .iter()
                .filter(|r| row_matches(&unfiltered.columns, r, &inst.dataset, &wide.predicates))
                .cloned()
                .collect();
            prop_assert_eq!(&routed.rows, &filtered, "query `{}`", wide);
        }
    }

    #[test]
    fn view_sums_never_exceed_warehouse_sums(seed in 0u64..10_000) {
        let inst = random_instance(seed);
        let session = bound_session(&inst, ViewMode::Full);
        let mut texts = vec!["SELECT sum(amount) FROM F".to_string()];
        texts.extend(inst.queries.iter().filter(|q| q.source == Source::Star).map(|q| {
            let mut t = "SELECT sum(amount) FROM F".to_string();
            for (i, p) in q.predicates.iter().enumerate() {
                t.push_str(if i == 0 { " WHERE " } else { " AND " });
                t.push_str(&format!("{} {} {}", p.column, p.operator.as_str(), p.value.to_literal()));
            }
            t
        }));
        for text in texts {
            let q = parse_query(&text, &inst.dataset).unwrap();
            let personal = route(&q, &session, &inst.dataset).unwrap();
            let full = evaluate(&q, &inst.dataset, Target::Warehouse).unwrap();
            prop_assert!(sum_of(&personal) <= sum_of(&full) * (1.0 + 1e-12) + 1e-9, "`{}`", text);
        }
    }

    #[test]
    fn answered_from_reports_the_source(seed in 0u64..10_000) {
        let inst = random_instance(seed);
        let q = &inst.queries[0];
        let mut session = bound_session(&inst, ViewMode::Ids);
        let personalized = !effective_profile(&inst.profile, inst.degree).unwrap().is_empty();
        let expected = if personalized { AnsweredFrom::UserView } else { AnsweredFrom::FullWarehouse };
        prop_assert_eq!(route(q, &session, &inst.dataset).unwrap().answered_from, expected);

        session.personalization_enabled = false;
        prop_assert_eq!(route(q, &session, &inst.dataset).unwrap().answered_from, AnsweredFrom::FullWarehouse);

        session.personalization_enabled = true;
        session.set_degree(0.0).unwrap();
        prop_assert_eq!(route(q, &session, &inst.dataset).unwrap().answered_from, AnsweredFrom::FullWarehouse);
    }

    #[test]
    fn group_sessions_answer_from_group_views(seed in 0u64..10_000) {
        let inst = random_instance(seed);
        let group = group_profile(&[inst.profile.clone(), inst.profile.clone()]).unwrap();
        prop_assume!(!group.is_empty());
        let mut session = Session::new(&inst.profile.user_id);
        session.set_profile(Some(inst.profile.clone()));
        session.set_group(Some(group));
        let target = session.target_profile().unwrap();
        session.bind_view(Arc::new(build_view(&inst.dataset, &target, ViewMode::Ids).unwrap())).unwrap();
        let r = route(&inst.queries[0], &session, &inst.dataset).unwrap();
        prop_assert_eq!(r.answered_from, AnsweredFrom::GroupView);
    }

    #[test]
    fn empty_profiles_select_every_fact(seed in 0u64..10_000) {
        let inst = random_instance(seed);
        let (empty, _) = normalize_profile("u", vec![]);
        for mode in [ViewMode::Full, ViewMode::Ids] {
            let v = build_view(&inst.dataset, &empty, mode).unwrap();
            prop_assert_eq!(v.fact_ids.len(), inst.dataset.fact.len());
        }
    }
}

#[test]
fn a_replaced_profile_never_reuses_the_old_view() {
    let ds = fixtures::cars_mini();
    let (old, _) = normalize_profile("alice", fixtures::car_buyer_preferences());
    let (new, _) = normalize_profile("alice", fixtures::car_buyer_preferences()[..1].to_vec());
    let mut s = Session::new("alice");
    s.set_profile(Some(old.clone()));
    s.bind_view(Arc::new(build_view(&ds, &old, ViewMode::Ids).unwrap())).unwrap();
    s.set_profile(Some(new.clone()));
    let q = parse_query(fixtures::WIDE_QUERY, &ds).unwrap();
    assert!(matches!(route(&q, &s, &ds), Err(Error::NoViewBound(_))));
    let stale = Arc::new(build_view(&ds, &old, ViewMode::Ids).unwrap());
    assert!(matches!(s.bind_view(stale), Err(Error::ViewMismatch { .. })));
}
