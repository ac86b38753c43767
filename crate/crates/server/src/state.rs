//! Shared service state: the warehouse, the metadata store, open sessions
//! and the background view builder.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::Duration;

use pw_core::metadata::MetadataStore;
use pw_core::warehouse::Warehouse;
use pw_core::{build_view, Dataset, MaterializedView, Profile, Session, ViewMode};
use rand::Rng;
use serde::Serialize;

use crate::error::{ApiError, ApiResult};

pub const WAREHOUSE_DIR: &str = "warehouse";
pub const METADATA_DIR: &str = "meta";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BuildState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Ticket {
    pub ticket: u64,
    pub owner: String,
    pub profile_hash: String,
    pub state: BuildState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Default)]
struct Builds {
    next_ticket: u64,
    /// Queued or running builds by (owner, profile hash).
    in_flight: HashMap<(String, String), Ticket>,
    /// Most recent finished build per owner.
    finished: HashMap<String, Ticket>,
    /// One build at a time per owner.
    owner_locks: HashMap<String, Arc<tokio::sync::Mutex<()>>>,
}

struct Inner {
    warehouse: RwLock<Warehouse>,
    store: Mutex<MetadataStore>,
    sessions: Mutex<HashMap<String, Session>>,
    builds: Mutex<Builds>,
    /// Builds run under a read guard; [`AppState::pause_builds`] takes it
    /// exclusively.
    build_gate: Arc<tokio::sync::RwLock<()>>,
    view_mode: ViewMode,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    // A panicking handler must not take the whole service down with it.
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// Summary of a bound view as reported to clients.
#[derive(Debug, Clone, Serialize)]
pub struct ViewSummary {
    pub owner: String,
    pub profile_hash: String,
    pub mode: ViewMode,
    pub built_generation: u64,
    pub fact_rows: usize,
    pub stale: bool,
}

impl ViewSummary {
    pub fn of(view: &MaterializedView, ds: &Dataset) -> Self {
        ViewSummary {
            owner: view.owner.clone(),
            profile_hash: view.profile_hash.clone(),
            mode: view.mode,
            built_generation: view.built_generation,
            fact_rows: view.fact_ids.len(),
            stale: view.is_stale(ds.ingest_generation()),
        }
    }
}

impl AppState {
    pub fn new(warehouse: Warehouse, store: MetadataStore, view_mode: ViewMode) -> Self {
        AppState {
            inner: Arc::new(Inner {
                warehouse: RwLock::new(warehouse),
                store: Mutex::new(store),
                sessions: Mutex::new(HashMap::new()),
                builds: Mutex::new(Builds::default()),
                build_gate: Arc::default(),
                view_mode,
            }),
        }
    }

    /// Opens `<data_dir>/warehouse` and `<data_dir>/meta`.
    pub fn open(data_dir: &Path, view_mode: ViewMode) -> pw_core::Result<Self> {
        let warehouse = Warehouse::open(data_dir.join(WAREHOUSE_DIR))?;
        let store = MetadataStore::open(data_dir.join(METADATA_DIR))?;
        Ok(AppState::new(warehouse, store, view_mode))
    }

    pub fn snapshot(&self) -> Arc<Dataset> {
        self.inner.warehouse.read().unwrap_or_else(|e| e.into_inner()).snapshot()
    }

    pub fn store(&self) -> MutexGuard<'_, MetadataStore> {
        lock(&self.inner.store)
    }

    /// Ingests a CSV batch and flags every cached view built before it.
    /// Holds the warehouse exclusively for the duration.
    pub fn ingest(&self, table: &str, csv: &str) -> pw_core::Result<(usize, u64, usize)> {
        let mut wh = self.inner.warehouse.write().unwrap_or_else(|e| e.into_inner());
        let rows = wh.ingest(table, csv)?;
        let generation = wh.dataset().ingest_generation();
        let stale = self.store().mark_stale(generation);
        Ok((rows, generation, stale))
    }

    pub fn open_session(&self, session: Session) -> String {
        let token = hex::encode(rand::rng().random::<[u8; 24]>());
        lock(&self.inner.sessions).insert(token.clone(), session);
        token
    }

    pub fn session(&self, token: &str) -> ApiResult<Session> {
        lock(&self.inner.sessions)
            .get(token)
            .cloned()
            .ok_or_else(|| ApiError::unauthenticated("unknown or expired session token"))
    }

    pub fn update_session<R>(&self, token: &str, f: impl FnOnce(&mut Session) -> R) -> ApiResult<R> {
        let mut sessions = lock(&self.inner.sessions);
        let s = sessions
            .get_mut(token)
            .ok_or_else(|| ApiError::unauthenticated("unknown or expired session token"))?;
        Ok(f(s))
    }

    /// Applies `f` to every open session of `user_id`.
    pub fn update_user_sessions(&self, user_id: &str, mut f: impl FnMut(&mut Session)) {
        for s in lock(&self.inner.sessions).values_mut().filter(|s| s.user_id == user_id) {
            f(s);
        }
    }

    /// Binds `view` to every session whose target profile it serves.
    fn bind_everywhere(&self, view: Arc<MaterializedView>) {
        for s in lock(&self.inner.sessions).values_mut() {
            let serves = s
                .target_profile()
                .is_ok_and(|t| view.serves(&t));
            if serves {
                let _ = s.bind_view(Arc::clone(&view));
            }
        }
    }

    /// Makes sure the session at `token` has a view for its target profile:
    /// binds a cached one when available, otherwise enqueues a build. Returns
    /// the ticket and whether it was newly created.
    pub fn ensure_view(&self, token: &str) -> ApiResult<Option<(Ticket, bool)>> {
        let session = self.session(token)?;
        if !session.personalization_enabled {
            return Ok(None);
        }
        let target = session.target_profile()?;
        if target.is_empty() || session.view().is_some_and(|v| v.serves(&target)) {
            return Ok(None);
        }
        let ds = self.snapshot();
        let cached = {
            let store = self.store();
            store
                .has_view(&target.user_id, &target.profile_hash)
                .then(|| store.load_view(&target.user_id, &target.profile_hash, &ds))
        };
        match cached {
            Some(Ok(view)) => {
                let view = Arc::new(view);
                self.update_session(token, |s| s.bind_view(view).ok())?;
                Ok(None)
            }
            // An unreadable cached view is rebuilt rather than reported.
            Some(Err(_)) | None => Ok(Some(self.enqueue_build(target))),
        }
    }

    /// Starts building a view for `target` unless one is already queued or
    /// running for the same owner and profile, in which case that ticket is
    /// returned with `false`.
    pub fn enqueue_build(&self, target: Profile) -> (Ticket, bool) {
        let key = (target.user_id.clone(), target.profile_hash.clone());
        let (ticket, owner_lock) = {
            let mut builds = lock(&self.inner.builds);
            if let Some(t) = builds.in_flight.get(&key) {
                return (t.clone(), false);
            }
            builds.next_ticket += 1;
            let ticket = Ticket {
                ticket: builds.next_ticket,
                owner: key.0.clone(),
                profile_hash: key.1.clone(),
                state: BuildState::Queued,
                error: None,
            };
            builds.in_flight.insert(key.clone(), ticket.clone());
            let owner_lock = Arc::clone(builds.owner_locks.entry(key.0.clone()).or_default());
            (ticket, owner_lock)
        };

        let state = self.clone();
        tokio::spawn(async move {
            let _single_flight = owner_lock.lock().await;
            let _gate = Arc::clone(&state.inner.build_gate).read_owned().await;
            state.set_build_state(&key, BuildState::Running);
            let ds = state.snapshot();
            let mode = state.inner.view_mode;
            let built = tokio::task::spawn_blocking(move || build_view(&ds, &target, mode)).await;
            let outcome = match built {
                Ok(Ok(view)) => match state.store().save_view(&view) {
                    Ok(()) => {
                        state.bind_everywhere(Arc::new(view));
                        Ok(())
                    }
                    Err(e) => Err(e.to_string()),
                },
                Ok(Err(e)) => Err(e.to_string()),
                Err(e) => Err(format!("build task failed: {e}")),
            };
            let mut builds = lock(&state.inner.builds);
            if let Some(mut t) = builds.in_flight.remove(&key) {
                match outcome {
                    Ok(()) => t.state = BuildState::Done,
                    Err(msg) => {
                        tracing::warn!(owner = %key.0, "view build failed: {msg}");
                        t.state = BuildState::Failed;
                        t.error = Some(msg);
                    }
                }
                builds.finished.insert(key.0.clone(), t);
            }
        });
        (ticket, true)
    }

    fn set_build_state(&self, key: &(String, String), state: BuildState) {
        if let Some(t) = lock(&self.inner.builds).in_flight.get_mut(key) {
            t.state = state;
        }
    }

    /// The in-flight build for `owner`, or else its most recent finished one.
    pub fn latest_ticket(&self, owner: &str) -> Option<Ticket> {
        let builds = lock(&self.inner.builds);
        builds
            .in_flight
            .values()
            .filter(|t| t.owner == owner)
            .max_by_key(|t| t.ticket)
            .or_else(|| builds.finished.get(owner))
            .cloned()
    }

    /// Holds every queued build in the `QUEUED` state until the guard drops.
    pub async fn pause_builds(&self) -> tokio::sync::OwnedRwLockWriteGuard<()> {
        Arc::clone(&self.inner.build_gate).write_owned().await
    }

    /// Waits until no build is queued or running.
    pub async fn wait_for_builds(&self) {
        while !lock(&self.inner.builds).in_flight.is_empty() {
            tokio::time::sleep(Duration::from_millis(2)).await;
        }
    }
}
