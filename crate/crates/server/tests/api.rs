use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use pw_core::metadata::MetadataStore;
use pw_core::oracle::{compare_results, oracle_evaluate};
use pw_core::warehouse::Warehouse;
use pw_core::{fixtures, parse_query, AnsweredFrom, Profile, QueryResult, Value as Cell, ViewMode};
use pw_server::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Api {
    app: Router,
    state: AppState,
    _dir: tempfile::TempDir,
}

impl Api {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut wh = Warehouse::init(dir.path().join("warehouse"), fixtures::CARS_MINI_SCHEMA).unwrap();
        for (t, csv) in [
            ("Car", fixtures::CARS_MINI_CAR),
            ("Owner", fixtures::CARS_MINI_OWNER),
            ("Advertisement", fixtures::CARS_MINI_ADVERTISEMENT),
            ("Sales", fixtures::CARS_MINI_SALES),
        ] {
            wh.ingest(t, csv).unwrap();
        }
        let store = MetadataStore::open(dir.path().join("meta")).unwrap();
        let state = AppState::new(wh, store, ViewMode::Ids);
        Api {
            app: router(state.clone()),
            state,
            _dir: dir,
        }
    }

    async fn call(&self, method: &str, path: &str, token: Option<&str>, body: &str) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(format!("/api/v1{path}"));
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let resp = self
            .app
            .clone()
            .oneshot(req.body(Body::from(body.to_string())).unwrap())
            .await
            .unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| panic!("non-JSON body: {bytes:?}"));
        (status, value)
    }

    async fn register(&self, user: &str) {
        let body = json!({"user_id": user, "passphrase": "pass"}).to_string();
        assert_eq!(self.call("POST", "/users", None, &body).await.0, StatusCode::CREATED);
    }

    async fn login(&self, user: &str) -> Value {
        let body = json!({"user_id": user, "passphrase": "pass"}).to_string();
        let (status, v) = self.call("POST", "/sessions", None, &body).await;
        assert_eq!(status, StatusCode::CREATED, "{v}");
        v
    }

    async fn token(&self, user: &str) -> String {
        self.login(user).await["token"].as_str().unwrap().to_string()
    }

    async fn query(&self, token: &str, text: &str) -> (StatusCode, Value) {
        self.call("POST", "/query", Some(token), &json!({ "text": text }).to_string()).await
    }

    /// Registers `user`, logs in and saves the car-buyer profile, waiting for
    /// the resulting build.
    async fn car_buyer(&self, user: &str) -> String {
        self.register(user).await;
        let token = self.token(user).await;
        let (status, v) = self
            .call("PUT", &format!("/users/{user}/profile"), Some(&token), &profile_body(user))
            .await;
        assert_eq!(status, StatusCode::OK, "{v}");
        self.state.wait_for_builds().await;
        token
    }
}

fn profile_body(user: &str) -> String {
    let mut doc: Value = serde_json::from_str(fixtures::CARS_MINI_PROFILE).unwrap();
    doc["user_id"] = json!(user);
    doc.to_string()
}

fn car_ids(v: &Value) -> Vec<i64> {
    v["rows"].as_array().unwrap().iter().map(|r| r[0].as_i64().unwrap()).collect()
}

fn result_from_json(v: &Value) -> QueryResult {
    let cell = |c: &Value| match c {
        Value::Null => Cell::Null,
        Value::String(s) => Cell::Text(s.clone()),
        Value::Number(n) if n.is_i64() => Cell::Integer(n.as_i64().unwrap()),
        Value::Number(n) => Cell::Decimal(n.as_f64().unwrap()),
        other => panic!("unexpected cell {other}"),
    };
    QueryResult {
        columns: v["columns"].as_array().unwrap().iter().map(|c| c.as_str().unwrap().to_string()).collect(),
        rows: v["rows"].as_array().unwrap().iter().map(|r| r.as_array().unwrap().iter().map(cell).collect()).collect(),
        answered_from: AnsweredFrom::UserView,
    }
}

#[tokio::test]
async fn registration() {
    let api = Api::new();
    api.register("alice").await;
    let (status, v) = api.call("POST", "/users", None, r#"{"user_id":"alice","passphrase":"x"}"#).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::CONFLICT, Some("CONFLICT")));
    let (status, v) = api.call("POST", "/users", None, r#"{"user_id":"bob"}"#).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("BAD_REQUEST")));
}

#[tokio::test]
async fn sessions_distinguish_beginners() {
    let api = Api::new();
    api.register("alice").await;
    let first = api.login("alice").await;
    assert_eq!(first["needs_onboarding"], json!(true));
    assert_eq!(first["view"], Value::Null);

    let (status, v) = api.call("POST", "/sessions", None, r#"{"user_id":"alice","passphrase":"nope"}"#).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::UNAUTHORIZED, Some("UNAUTHENTICATED")));

    api.car_buyer("bob").await;
    let again = api.login("bob").await;
    assert_eq!(again["needs_onboarding"], json!(false));
    assert_eq!(again["view"]["fact_rows"], json!(5));
}

#[tokio::test]
async fn saving_profiles() {
    let api = Api::new();
    api.register("alice").await;
    let token = api.token("alice").await;
    let put = |body: String| {
        let api = &api;
        let token = token.clone();
        async move { api.call("PUT", "/users/alice/profile", Some(&token), &body).await }
    };

    let (status, v) = put(profile_body("alice")).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["rebuild_enqueued"], json!(true));
    api.state.wait_for_builds().await;
    let (_, v) = put(profile_body("alice")).await;
    assert_eq!(v["rebuild_enqueued"], json!(false));

    let unknown = r#"{"preferences":[{"dimension":"Car","attribute":"wheels","operator":"=","value":4}]}"#;
    let (status, v) = put(unknown.into()).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("BAD_REQUEST")));
    let mismatch = r#"{"preferences":[{"dimension":"Car","attribute":"year","operator":">","value":"recent"}]}"#;
    let (status, v) = put(mismatch.into()).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("KIND_MISMATCH")), "{v}");

    let (status, _) = api.call("PUT", "/users/bob/profile", Some(&token), &profile_body("bob")).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = api.call("PUT", "/users/alice/profile", None, &profile_body("alice")).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn personalization_switch_and_degree() {
    let api = Api::new();
    let token = api.car_buyer("alice").await;
    let set = |body: &'static str| {
        let api = &api;
        let token = token.clone();
        async move { api.call("PUT", "/users/alice/personalization", Some(&token), body).await }
    };

    let (status, v) = set(r#"{"enabled": false}"#).await;
    assert_eq!((status, &v["view"]), (StatusCode::OK, &Value::Null));
    let (_, r) = api.query(&token, fixtures::WIDE_QUERY).await;
    assert_eq!(r["answered_from"], json!("FULL_WAREHOUSE"));
    assert_eq!(car_ids(&r).len(), 8);

    let (_, v) = set(r#"{"enabled": true, "degree": 1.0}"#).await;
    assert_eq!(v["view"]["fact_rows"], json!(5), "cached view binds at once: {v}");
    assert_eq!(v["build"], Value::Null);
    let (_, r) = api.query(&token, fixtures::WIDE_QUERY).await;
    assert_eq!(r["answered_from"], json!("USER_VIEW"));

    let pause = api.state.pause_builds().await;
    let (_, v) = set(r#"{"enabled": true, "degree": 0.5}"#).await;
    assert_eq!(v["view"], Value::Null);
    assert_eq!(v["build"]["state"], json!("QUEUED"));
    let (status, r) = api.query(&token, fixtures::WIDE_QUERY).await;
    assert_eq!((status, r["code"].as_str()), (StatusCode::CONFLICT, Some("CONFLICT")));
    drop(pause);
    api.state.wait_for_builds().await;
    let (_, r) = api.query(&token, fixtures::WIDE_QUERY).await;
    // Half of four preferences: year and price only.
    assert_eq!(car_ids(&r), vec![1, 3, 5, 6, 8]);

    let (status, v) = set(r#"{"enabled": true, "degree": 1.5}"#).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("BAD_REQUEST")));
}

#[tokio::test]
async fn rebuild_and_stats() {
    let api = Api::new();
    api.register("alice").await;
    let token = api.token("alice").await;
    let (status, _) = api.call("POST", "/users/alice/view/rebuild", Some(&token), "").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = api.call("GET", "/users/alice/view/stats", Some(&token), "").await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    api.call("PUT", "/users/alice/profile", Some(&token), &profile_body("alice")).await;
    api.state.wait_for_builds().await;

    let pause = api.state.pause_builds().await;
    let (s1, first) = api.call("POST", "/users/alice/view/rebuild", Some(&token), "").await;
    let (s2, second) = api.call("POST", "/users/alice/view/rebuild", Some(&token), "").await;
    assert_eq!((s1, s2), (StatusCode::ACCEPTED, StatusCode::ACCEPTED));
    assert_eq!(first["coalesced"], json!(false));
    assert_eq!(second["coalesced"], json!(true));
    assert_eq!(first["ticket"]["ticket"], second["ticket"]["ticket"]);
    drop(pause);
    api.state.wait_for_builds().await;
    let (_, status) = api.call("GET", "/users/alice/view/status", Some(&token), "").await;
    assert_eq!(status["build"]["state"], json!("DONE"));

    let (status, stats) = api.call("GET", "/users/alice/view/stats", Some(&token), "").await;
    assert_eq!(status, StatusCode::OK);
    let ds = api.state.snapshot();
    let (profile, _) = Profile::from_json(fixtures::CARS_MINI_PROFILE).unwrap();
    for d in stats["dimensions"].as_array().unwrap() {
        let name = d["dimension"].as_str().unwrap();
        let q = parse_query(&format!("SELECT * FROM {name}"), &ds).unwrap();
        let kept = oracle_evaluate(&q, &profile.preferences, &ds).unwrap().rows.len();
        assert_eq!(d["kept"], json!(kept), "{name}");
        assert_eq!(d["total"], json!(ds.dimension(name).unwrap().len()), "{name}");
    }
}

#[tokio::test]
async fn queries_go_stale_after_ingest_and_recover_after_rebuild() {
    let api = Api::new();
    let token = api.car_buyer("alice").await;
    let (status, r) = api.query(&token, "Select * From Car where model = 'BMW'").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!((r["answered_from"].as_str(), car_ids(&r)), (Some("USER_VIEW"), vec![1, 8]));

    let (status, v) = api.query(&token, "Select * Form Car").await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("SYNTAX_ERROR")));
    assert_eq!(v["detail"]["position"], json!(9));

    let sale = json!({"table": "Sales", "csv": "car_id,owner_id,ad_id,euro_sold\n8,3,5,19000.00\n"}).to_string();
    let (status, v) = api.call("POST", "/admin/ingest", None, &sale).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["views_marked_stale"], json!(1));

    let (status, v) = api.query(&token, fixtures::WIDE_QUERY).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::CONFLICT, Some("STALE_VIEW")));
    assert_eq!(v["detail"]["rebuild"], json!("POST /api/v1/users/alice/view/rebuild"));

    api.call("POST", "/users/alice/view/rebuild", Some(&token), "").await;
    api.state.wait_for_builds().await;
    let ds = api.state.snapshot();
    let (profile, _) = Profile::from_json(fixtures::CARS_MINI_PROFILE).unwrap();
    for text in [fixtures::WIDE_QUERY, "SELECT * FROM Sales", "SELECT Car.model, sum(euro_sold) FROM Sales GROUP BY Car.model"] {
        let (status, r) = api.query(&token, text).await;
        assert_eq!(status, StatusCode::OK, "{r}");
        let expected = oracle_evaluate(&parse_query(text, &ds).unwrap(), &profile.preferences, &ds).unwrap();
        compare_results(&result_from_json(&r), &result_from_json(&expected.to_json())).unwrap();
    }
}

#[tokio::test]
async fn bad_ingest_reports_the_row() {
    let api = Api::new();
    let csv = "car_id,owner_id,ad_id,euro_sold\n1,1,1,100.0\n99,1,1,5.0\n";
    let (status, v) = api.call("POST", "/admin/ingest", None, &json!({"table": "Sales", "csv": csv}).to_string()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["detail"]["row"], json!(2), "{v}");
    let (status, _) = api.call("POST", "/admin/ingest", None, r#"{"table":"Nope","csv":"a\n1\n"}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn group_views() {
    let api = Api::new();
    let alice = api.car_buyer("alice").await;
    api.car_buyer("bob").await;
    let (status, v) = api
        .call("PUT", "/users/alice/personalization", Some(&alice), r#"{"enabled": true, "group": ["bob"]}"#)
        .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    api.state.wait_for_builds().await;
    let (_, r) = api.query(&alice, fixtures::WIDE_QUERY).await;
    assert_eq!(r["answered_from"], json!("GROUP_VIEW"));
    assert_eq!(car_ids(&r), vec![1, 3, 6, 8]);

    let (status, _) = api
        .call("PUT", "/users/alice/personalization", Some(&alice), r#"{"enabled": true, "group": ["carol"]}"#)
        .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    api.call("PUT", "/users/alice/personalization", Some(&alice), r#"{"enabled": true, "group": []}"#)
        .await;
    let (_, r) = api.query(&alice, fixtures::WIDE_QUERY).await;
    assert_eq!(r["answered_from"], json!("USER_VIEW"));
}

#[tokio::test]
async fn unknown_routes_and_methods_are_not_found() {
    let api = Api::new();
    for (m, p) in [("GET", "/nowhere"), ("DELETE", "/query"), ("GET", "/users")] {
        let (status, v) = api.call(m, p, None, "").await;
        assert_eq!((status, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("NOT_FOUND")), "{m} {p}");
    }
}

mod fuzz {
    use super::*;
    use proptest::prelude::*;

    const DOCUMENTED: [&str; 7] = [
        "BAD_REQUEST",
        "UNAUTHENTICATED",
        "NOT_FOUND",
        "CONFLICT",
        "STALE_VIEW",
        "KIND_MISMATCH",
        "SYNTAX_ERROR",
    ];

    fn bodies() -> impl Strategy<Value = String> {
        let json_leaf = prop_oneof![
            Just(Value::Null),
            any::<bool>().prop_map(Value::from),
            any::<i64>().prop_map(Value::from),
            any::<f64>().prop_filter("finite", |f| f.is_finite()).prop_map(Value::from),
            "[ -~]{0,12}".prop_map(Value::from),
        ];
        let json = json_leaf.prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..4).prop_map(Value::from),
                prop::collection::btree_map(
                    prop_oneof![
                        Just("user_id".to_string()),
                        Just("passphrase".to_string()),
                        Just("text".to_string()),
                        Just("enabled".to_string()),
                        Just("degree".to_string()),
                        Just("group".to_string()),
                        Just("preferences".to_string()),
                        Just("table".to_string()),
                        Just("csv".to_string()),
                        "[a-z]{1,6}",
                    ],
                    inner,
                    0..5,
                )
                .prop_map(|m| Value::Object(m.into_iter().collect())),
            ]
        });
        prop_oneof![
            json.prop_map(|v| v.to_string()),
            "\\PC{0,40}",
            prop::collection::vec(any::<u8>(), 0..40).prop_map(|b| String::from_utf8_lossy(&b).into_owned()),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn malformed_bodies_get_documented_errors(endpoint in 0usize..7, body in bodies(), authed in any::<bool>()) {
            let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
            rt.block_on(async {
                let api = Api::new();
                api.register("alice").await;
                let token = api.token("alice").await;
                let (method, path) = [
                    ("POST", "/users"),
                    ("POST", "/sessions"),
                    ("PUT", "/users/alice/profile"),
                    ("PUT", "/users/alice/personalization"),
                    ("POST", "/users/alice/view/rebuild"),
                    ("POST", "/query"),
                    ("POST", "/admin/ingest"),
                ][endpoint];
                let (status, v) = api.call(method, path, authed.then_some(token.as_str()), &body).await;
                if status.is_success() {
                    prop_assert!(v.is_object());
                } else {
                    let code = v["code"].as_str().unwrap_or_default();
                    prop_assert!(DOCUMENTED.contains(&code), "{} {} -> {} {}", method, path, status, v);
                    prop_assert!([400, 401, 404, 409].contains(&status.as_u16()));
                }
                api.state.wait_for_builds().await;
                Ok(())
            })?;
        }
    }
}
