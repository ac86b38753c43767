//! Personalization metadata kept beside the warehouse: registered users,
//! their current profiles and the cache of materialized views.
//!
//! Layout under the store root:
//!
//! ```text
//! users.json                  every user record
//! profiles/<user>.json        current profile of each user
//! views/<owner>-<hash>.json   view envelopes, keyed by owner and profile hash
//! ```
//!
//! Every file is pretty JSON with sorted keys and a trailing newline, and is
//! replaced atomically (write to a temporary file, then rename).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::preference::{Contradiction, Profile};
use crate::query::Session;
use crate::star_store::Dataset;
use crate::view::{MaterializedView, ViewEnvelope};

const USERS_FILE: &str = "users.json";
const PROFILES_DIR: &str = "profiles";
const VIEWS_DIR: &str = "views";
const MAX_USER_ID_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    /// Hex sha256 of `salt || passphrase`.
    pub credential: String,
    pub salt: String,
    /// RFC 3339, UTC.
    pub created_at: String,
    pub experienced: bool,
}

/// Outcome of [`MetadataStore::save_profile`].
#[derive(Debug, Clone)]
pub struct SavedProfile {
    pub profile: Profile,
    /// The stored hash changed or no view exists for it yet.
    pub rebuild_needed: bool,
    pub warnings: Vec<Contradiction>,
}

#[derive(Debug, Clone)]
struct ViewEntry {
    envelope: ViewEnvelope,
    stale: bool,
}

/// User ids are short and restricted to `[A-Za-z0-9_.-]` so they are safe
/// in file names and can never contain the `+` used by group ids.
pub fn validate_user_id(user_id: &str) -> Result<()> {
    let ok = !user_id.is_empty()
        && user_id.len() <= MAX_USER_ID_LEN
        && !user_id.starts_with('.')
        && user_id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidUserId(user_id.to_string()))
    }
}

fn digest(salt: &str, passphrase: &str) -> String {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update(passphrase.as_bytes());
    hex::encode(h.finalize())
}

/// Length-independent byte comparison.
fn same_digest(a: &str, b: &str) -> bool {
    a.len() == b.len() && a.bytes().zip(b.bytes()).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn to_sorted_json<T: Serialize>(value: &T) -> Result<String> {
    let mut out = serde_json::to_string_pretty(&serde_json::to_value(value)?)?;
    out.push('\n');
    Ok(out)
}

/// Replaces `path` with `contents` so that readers see either the old or the
/// new file, never a partial one.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn view_file_name(owner: &str, profile_hash: &str) -> String {
    format!("{owner}-{profile_hash}.json")
}

pub struct MetadataStore {
    root: PathBuf,
    users: BTreeMap<String, UserRecord>,
    profiles: BTreeMap<String, Profile>,
    views: BTreeMap<(String, String), ViewEntry>,
}

impl MetadataStore {
    /// Opens the store at `root`, creating it if needed, and loads every
    /// persisted record.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for dir in [root.clone(), root.join(PROFILES_DIR), root.join(VIEWS_DIR)] {
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        let users_path = root.join(USERS_FILE);
        let users: BTreeMap<String, UserRecord> = if users_path.exists() {
            serde_json::from_str(&read(&users_path)?)?
        } else {
            BTreeMap::new()
        };

        let mut profiles = BTreeMap::new();
        for path in json_files(&root.join(PROFILES_DIR))? {
            let (profile, _) = Profile::from_json(&read(&path)?)?;
            profiles.insert(profile.user_id.clone(), profile);
        }
        let mut views = BTreeMap::new();
        for path in json_files(&root.join(VIEWS_DIR))? {
            let envelope = ViewEnvelope::from_json(&read(&path)?)?;
            views.insert(
                (envelope.owner.clone(), envelope.profile_hash.clone()),
                ViewEntry { envelope, stale: false },
            );
        }
        Ok(MetadataStore {
            root,
            users,
            profiles,
            views,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn write_users(&self) -> Result<()> {
        write_atomic(&self.root.join(USERS_FILE), to_sorted_json(&self.users)?.as_bytes())
    }

    pub fn register_user(&mut self, user_id: &str, passphrase: &str) -> Result<UserRecord> {
        validate_user_id(user_id)?;
        if passphrase.is_empty() {
            return Err(Error::EmptyPassphrase);
        }
        if self.users.contains_key(user_id) {
            return Err(Error::DuplicateUser(user_id.to_string()));
        }
        let salt = hex::encode(rand::rng().random::<[u8; 16]>());
        let record = UserRecord {
            user_id: user_id.to_string(),
            credential: digest(&salt, passphrase),
            salt,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            experienced: false,
        };
        self.users.insert(user_id.to_string(), record.clone());
        if let Err(e) = self.write_users() {
            self.users.remove(user_id);
            return Err(e);
        }
        Ok(record)
    }

    pub fn user(&self, user_id: &str) -> Option<&UserRecord> {
        self.users.get(user_id)
    }

    pub fn users(&self) -> impl Iterator<Item = &UserRecord> {
        self.users.values()
    }

    /// Checks the credential. Unknown users and wrong passphrases produce the
    /// same error.
    pub fn verify(&self, user_id: &str, passphrase: &str) -> Result<&UserRecord> {
        match self.users.get(user_id) {
            Some(r) if same_digest(&digest(&r.salt, passphrase), &r.credential) => Ok(r),
            _ => Err(Error::Unauthenticated),
        }
    }

    /// Opens a session. Beginners are flagged for onboarding; experienced
    /// users get the cached view of their current profile bound right away,
    /// when one exists.
    pub fn authenticate(&self, user_id: &str, passphrase: &str, ds: &Dataset) -> Result<Session> {
        let record = self.verify(user_id, passphrase)?;
        let mut session = Session::new(user_id);
        session.needs_onboarding = !record.experienced;
        session.set_profile(self.profiles.get(user_id).cloned());
        let target = session.target_profile()?;
        if !target.is_empty() {
            if let Ok(view) = self.load_view(&target.user_id, &target.profile_hash, ds) {
                session.bind_view(Arc::new(view))?;
            }
        }
        Ok(session)
    }

    pub fn profile(&self, user_id: &str) -> Option<&Profile> {
        self.profiles.get(user_id)
    }

    /// Stores `profile` as the user's current one after kind-checking it.
    /// Views of earlier profiles stay cached.
    pub fn save_profile(&mut self, profile: Profile, warnings: Vec<Contradiction>, ds: &Dataset) -> Result<SavedProfile> {
        if !self.users.contains_key(&profile.user_id) {
            return Err(Error::NotFound(format!("user `{}`", profile.user_id)));
        }
        profile.check(ds)?;
        let unchanged = self
            .profiles
            .get(&profile.user_id)
            .is_some_and(|p| p.profile_hash == profile.profile_hash);
        let cached = self.has_view(&profile.user_id, &profile.profile_hash);

        let path = self.root.join(PROFILES_DIR).join(format!("{}.json", profile.user_id));
        write_atomic(&path, profile.to_json().as_bytes())?;
        self.profiles.insert(profile.user_id.clone(), profile.clone());

        let record = self.users.get_mut(&profile.user_id).expect("checked above");
        if !record.experienced {
            record.experienced = true;
            self.write_users()?;
        }
        Ok(SavedProfile {
            rebuild_needed: !(unchanged && cached),
            profile,
            warnings,
        })
    }

    pub fn has_view(&self, owner: &str, profile_hash: &str) -> bool {
        self.views.contains_key(&(owner.to_string(), profile_hash.to_string()))
    }

    pub fn save_view(&mut self, view: &MaterializedView) -> Result<()> {
        let envelope = ViewEnvelope::from_view(view);
        let path = self.view_path(&view.owner, &view.profile_hash);
        write_atomic(&path, envelope.to_json().as_bytes())?;
        self.views.insert(
            (view.owner.clone(), view.profile_hash.clone()),
            ViewEntry { envelope, stale: false },
        );
        Ok(())
    }

    fn view_path(&self, owner: &str, profile_hash: &str) -> PathBuf {
        self.root.join(VIEWS_DIR).join(view_file_name(owner, profile_hash))
    }

    pub fn envelope(&self, owner: &str, profile_hash: &str) -> Result<&ViewEnvelope> {
        self.views
            .get(&(owner.to_string(), profile_hash.to_string()))
            .map(|e| &e.envelope)
            .ok_or_else(|| Error::NotFound(format!("view `{owner}` / {profile_hash}")))
    }

    /// The persisted bytes of a view, as written by [`Self::save_view`].
    pub fn view_bytes(&self, owner: &str, profile_hash: &str) -> Result<Vec<u8>> {
        self.envelope(owner, profile_hash)?;
        let path = self.view_path(owner, profile_hash);
        fs::read(&path).map_err(|e| Error::io(&path, e))
    }

    /// Loads a cached view against `ds`. A view older than the warehouse
    /// loads fine but is marked stale.
    pub fn load_view(&self, owner: &str, profile_hash: &str, ds: &Dataset) -> Result<MaterializedView> {
        let entry = self
            .views
            .get(&(owner.to_string(), profile_hash.to_string()))
            .ok_or_else(|| Error::NotFound(format!("view `{owner}` / {profile_hash}")))?;
        let mut view = entry.envelope.clone().into_view(ds)?;
        view.stale |= entry.stale;
        Ok(view)
    }

    pub fn is_view_stale(&self, owner: &str, profile_hash: &str, generation: u64) -> Result<bool> {
        let entry = self
            .views
            .get(&(owner.to_string(), profile_hash.to_string()))
            .ok_or_else(|| Error::NotFound(format!("view `{owner}` / {profile_hash}")))?;
        Ok(entry.stale || entry.envelope.built_generation < generation)
    }

    /// Flags every view built before `generation`; returns how many.
    pub fn mark_stale(&mut self, generation: u64) -> usize {
        let mut count = 0;
        for entry in self.views.values_mut() {
            if entry.envelope.built_generation < generation {
                entry.stale = true;
                count += 1;
            }
        }
        count
    }

    pub fn view_keys(&self) -> impl Iterator<Item = (&str, &str)> {
        self.views.keys().map(|(o, h)| (o.as_str(), h.as_str()))
    }

    /// Deletes cached views selected by `select(owner, envelope)`; returns how
    /// many were removed.
    pub fn purge_views(&mut self, mut select: impl FnMut(&str, &ViewEnvelope) -> bool) -> Result<usize> {
        let doomed: Vec<(String, String)> = self
            .views
            .iter()
            .filter(|((owner, _), entry)| select(owner, &entry.envelope))
            .map(|(k, _)| k.clone())
            .collect();
        for key in &doomed {
            let path = self.view_path(&key.0, &key.1);
            match fs::remove_file(&path) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(Error::io(&path, e)),
            }
            self.views.remove(key);
        }
        Ok(doomed.len())
    }
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
