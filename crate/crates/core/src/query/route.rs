use std::sync::Arc;

use super::{evaluate, Query, QueryResult, Target};
use crate::error::{Error, Result};
use crate::preference::{effective_profile, normalize_profile, Profile};
use crate::star_store::Dataset;
use crate::view::MaterializedView;

/// Per-user query context. The bound view is shared and swapped whole.
#[derive(Debug, Clone)]
pub struct Session {
    pub user_id: String,
    pub personalization_enabled: bool,
    degree: f64,
    /// Set for users who have never saved a profile.
    pub needs_onboarding: bool,
    pub profile: Option<Profile>,
    /// When set, queries are answered from this group's shared view.
    pub group: Option<Profile>,
    view: Option<Arc<MaterializedView>>,
}

impl Session {
    pub fn new(user_id: &str) -> Self {
        Session {
            user_id: user_id.to_string(),
            personalization_enabled: true,
            degree: 1.0,
            needs_onboarding: false,
            profile: None,
            group: None,
            view: None,
        }
    }

    pub fn degree(&self) -> f64 {
        self.degree
    }

    /// Changing the degree unbinds a view that no longer matches.
    pub fn set_degree(&mut self, degree: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&degree) {
            return Err(Error::DegreeOutOfRange(degree));
        }
        self.degree = degree;
        self.drop_mismatched_view();
        Ok(())
    }

    pub fn set_profile(&mut self, profile: Option<Profile>) {
        self.profile = profile;
        self.drop_mismatched_view();
    }

    pub fn set_group(&mut self, group: Option<Profile>) {
        self.group = group;
        self.drop_mismatched_view();
    }

    fn drop_mismatched_view(&mut self) {
        let Ok(target) = self.target_profile() else {
            self.view = None;
            return;
        };
        if self.view.as_ref().is_some_and(|v| !v.serves(&target)) {
            self.view = None;
        }
    }

    /// The profile a view must be built from to serve this session: the
    /// degree-limited prefix of the group's or the user's profile.
    pub fn target_profile(&self) -> Result<Profile> {
        let base = match (&self.group, &self.profile) {
            (Some(g), _) => g.clone(),
            (None, Some(p)) => p.clone(),
            (None, None) => return Ok(normalize_profile(&self.user_id, Vec::new()).0),
        };
        let prefix = effective_profile(&base, self.degree)?;
        Ok(normalize_profile(&base.user_id, prefix).0)
    }

    pub fn view(&self) -> Option<&Arc<MaterializedView>> {
        self.view.as_ref()
    }

    /// Binds `view`, refusing one built for a different profile.
    pub fn bind_view(&mut self, view: Arc<MaterializedView>) -> Result<()> {
        let target = self.target_profile()?;
        if !view.serves(&target) {
            return Err(Error::ViewMismatch {
                expected: format!("{}/{}", target.user_id, target.profile_hash),
                found: format!("{}/{}", view.owner, view.profile_hash),
            });
        }
        self.view = Some(view);
        Ok(())
    }

    pub fn unbind_view(&mut self) {
        self.view = None;
    }
}

/// Answers `q` for `session`: from the warehouse when personalization is off
/// or the effective profile is empty, otherwise from the bound view, with the
/// query's own predicates narrowing the view further.
pub fn route(q: &Query, session: &Session, ds: &Dataset) -> Result<QueryResult> {
    if !session.personalization_enabled {
        return evaluate(q, ds, Target::Warehouse);
    }
    let target = session.target_profile()?;
    if target.is_empty() {
        return evaluate(q, ds, Target::Warehouse);
    }
    let view = session
        .view
        .as_ref()
        .filter(|v| v.serves(&target))
        .ok_or_else(|| Error::NoViewBound(target.user_id.clone()))?;
    if view.is_stale(ds.ingest_generation()) {
        return Err(Error::StaleView {
            owner: view.owner.clone(),
            built: view.built_generation,
            current: ds.ingest_generation(),
        });
    }
    evaluate(q, ds, Target::View(view))
}
