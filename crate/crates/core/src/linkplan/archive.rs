use std::collections::BTreeMap;

use super::{Archive, LinkError, Strength, Universe};

/// Checks every member exists and keeps the recorded build order.
pub fn plan_archives(trace: &[Archive], universe: &Universe) -> Result<Vec<Archive>, LinkError> {
    for a in trace {
        if let Some(m) = a.members.iter().find(|m| universe.get(m).is_none()) {
            return Err(LinkError::UnknownMember {
                archive: a.name.clone(),
                member: m.clone(),
            });
        }
    }
    Ok(trace.to_vec())
}

/// Member that supplies each symbol when the archives are linked in order:
/// the first strong definition, or failing that the first weak one.
/// Duplicates inside archives never fail.
pub fn archive_winners(archives: &[Archive], universe: &Universe) -> BTreeMap<String, String> {
    let mut won: BTreeMap<String, (String, Strength)> = BTreeMap::new();
    for member in archives.iter().flat_map(|a| &a.members) {
        let Some(o) = universe.get(member) else {
            continue;
        };
        for d in &o.defined {
            match won.get(&d.sym) {
                Some((_, Strength::Strong)) => {}
                Some((_, Strength::Weak)) if d.strength == Strength::Weak => {}
                _ => {
                    won.insert(d.sym.clone(), (member.clone(), d.strength));
                }
            }
        }
    }
    won.into_iter().map(|(s, (m, _))| (s, m)).collect()
}
