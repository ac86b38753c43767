//! Group profiles: one shared view for users with common preferences.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::preference::{normalize_profile, Profile};

const GROUP_PREFIX: &str = "group+";

/// Synthetic owner id of the group formed by `members`. User ids cannot
/// contain `+`, so group ids never collide with user ids.
pub fn group_id<S: AsRef<str>>(members: &[S]) -> String {
    let mut ids: Vec<&str> = members.iter().map(AsRef::as_ref).collect();
    ids.sort_unstable();
    ids.dedup();
    format!("{GROUP_PREFIX}{}", ids.join("+"))
}

pub fn is_group_owner(owner: &str) -> bool {
    owner.starts_with(GROUP_PREFIX)
}

/// The preferences shared by every member, compared as exact triples. Each
/// kept preference takes the smallest priority any member gave it; the result
/// is re-ranked 1..k.
pub fn group_profile(profiles: &[Profile]) -> Result<Profile> {
    let (first, rest) = profiles.split_first().ok_or(Error::EmptyGroup)?;
    let member_priorities: Vec<HashMap<String, u32>> = rest
        .iter()
        .map(|p| {
            p.preferences
                .iter()
                .map(|pref| (pref.text(), pref.priority.unwrap_or(u32::MAX)))
                .collect()
        })
        .collect();

    let mut shared: Vec<(u32, usize, _)> = Vec::new();
    for (position, pref) in first.preferences.iter().enumerate() {
        let text = pref.text();
        let mut best = pref.priority.unwrap_or(u32::MAX);
        let mut everywhere = true;
        for member in &member_priorities {
            match member.get(&text) {
                Some(&p) => best = best.min(p),
                None => {
                    everywhere = false;
                    break;
                }
            }
        }
        if everywhere {
            shared.push((best, position, pref.clone()));
        }
    }
    shared.sort_by_key(|(priority, position, _)| (*priority, *position));

    let members: Vec<&str> = profiles.iter().map(|p| p.user_id.as_str()).collect();
    let prefs = shared
        .into_iter()
        .enumerate()
        .map(|(rank, (_, _, p))| p.with_priority(rank as u32 + 1))
        .collect();
    Ok(normalize_profile(&group_id(&members), prefs).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preference::{parse_preference, Preference};
    use crate::preference::tests::arb_preference;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn profile(user: &str, texts: &[&str]) -> Profile {
        let prefs = texts.iter().map(|t| parse_preference(t).unwrap()).collect();
        normalize_profile(user, prefs).0
    }

    fn texts(p: &Profile) -> BTreeSet<String> {
        p.preferences.iter().map(Preference::text).collect()
    }

    #[test]
    fn identical_members() {
        let a = profile("alice", &["Car.year > 2007", "Car.color = 'black'"]);
        let b = profile("bob", &["Car.year > 2007", "Car.color = 'black'"]);
        let g = group_profile(&[a.clone(), b]).unwrap();
        assert_eq!(texts(&g), texts(&a));
        assert_eq!(g.user_id, "group+alice+bob");
        assert!(is_group_owner(&g.user_id));
    }

    #[test]
    fn disjoint_members_share_nothing() {
        let a = profile("alice", &["Car.year > 2007"]);
        let b = profile("bob", &["Car.price < 20000"]);
        assert!(group_profile(&[a, b]).unwrap().is_empty());
    }

    #[test]
    fn partial_overlap_matches_set_intersection() {
        let a = profile("alice", &["Car.year > 2007", "Car.color = 'black'"]);
        let b = profile("bob", &["Car.price < 20000", "Car.year > 2007"]);
        let g = group_profile(&[a.clone(), b.clone()]).unwrap();
        let expected: BTreeSet<String> = texts(&a).intersection(&texts(&b)).cloned().collect();
        assert_eq!(texts(&g), expected);
        assert_eq!(expected, BTreeSet::from(["Car.year > 2007".to_string()]));
        assert_eq!(g.preferences[0].priority, Some(1));
    }

    #[test]
    fn priority_is_the_minimum_across_members() {
        let a = profile("alice", &["Car.year > 2007", "Car.color = 'black'"]);
        let b = profile("bob", &["Car.color = 'black'", "Car.year > 2007"]);
        let g = group_profile(&[a, b]).unwrap();
        // Both have a best priority of 1; ties fall back to the first member's order.
        assert_eq!(g.preferences[0].text(), "Car.year > 2007");
        assert_eq!(g.preferences[1].text(), "Car.color = 'black'");
    }

    #[test]
    fn empty_group_is_an_error() {
        assert!(matches!(group_profile(&[]), Err(Error::EmptyGroup)));
    }

    proptest! {
        #[test]
        fn result_is_a_subset_of_every_member(
            lists in proptest::collection::vec(proptest::collection::vec(arb_preference(), 0..5), 1..4),
            shared in proptest::collection::vec(arb_preference(), 0..3),
        ) {
            let profiles: Vec<Profile> = lists
                .into_iter()
                .enumerate()
                .map(|(i, mut l)| {
                    l.extend(shared.iter().cloned());
                    normalize_profile(&format!("u{i}"), l).0
                })
                .collect();
            let g = group_profile(&profiles).unwrap();
            for p in &profiles {
                prop_assert!(texts(&g).is_subset(&texts(p)));
            }
            let shared_texts: BTreeSet<String> = shared.iter().map(Preference::text).collect();
            prop_assert!(shared_texts.is_subset(&texts(&g)));
            let single = group_profile(&profiles[..1]).unwrap();
            prop_assert_eq!(texts(&single), texts(&profiles[0]));
        }
    }
}
