use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::check::validate_plan;
use super::{AliasBinding, LinkError, LinkPlan, Universe};

/// `alias -> canonical`, serialized as a plain JSON object.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AliasTable {
    pub entries: BTreeMap<String, String>,
}

impl AliasTable {
    pub fn get(&self, alias: &str) -> Option<&str> {
        self.entries.get(alias).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<A: Into<String>, C: Into<String>> FromIterator<(A, C)> for AliasTable {
    fn from_iter<I: IntoIterator<Item = (A, C)>>(iter: I) -> Self {
        AliasTable {
            entries: iter.into_iter().map(|(a, c)| (a.into(), c.into())).collect(),
        }
    }
}

/// End of the alias chain starting at `sym`; `sym` itself when it is not
/// an alias.
pub fn canonical_of(table: &AliasTable, sym: &str) -> Result<String, LinkError> {
    let mut cur = sym;
    let mut seen = BTreeSet::new();
    while let Some(next) = table.get(cur) {
        if !seen.insert(cur) {
            return Err(LinkError::AliasCycle(cur.to_string()));
        }
        cur = next;
    }
    Ok(cur.to_string())
}

/// Binds every aliased reference of a selected object straight to the end
/// of its chain, then requires the plan to be fully resolved.
pub fn bind_aliases(plan: &LinkPlan, aliases: &AliasTable, universe: &Universe) -> Result<LinkPlan, LinkError> {
    let mut out = plan.clone();
    let selected: Vec<_> = plan
        .selected
        .iter()
        .map(|n| universe.get(n).ok_or_else(|| LinkError::UnknownObject(n.clone())))
        .collect::<Result<_, _>>()?;
    let defined = |sym: &str| {
        selected
            .iter()
            .any(|o| o.defined.iter().any(|d| plan.renamed(&o.name, &d.sym) == sym))
    };
    for o in &selected {
        for u in &o.undefined {
            if aliases.get(u).is_none() {
                continue;
            }
            let canonical = canonical_of(aliases, u)?;
            if !defined(&canonical) {
                return Err(LinkError::DanglingAlias {
                    alias: u.clone(),
                    canonical,
                });
            }
            if !out.alias_bindings.iter().any(|b| &b.alias == u) {
                out.alias_bindings.push(AliasBinding {
                    alias: u.clone(),
                    canonical,
                });
            }
        }
    }
    if let Some(u) = validate_plan(&out, universe).unresolved.first() {
        return Err(LinkError::Unresolvable(u.symbol.clone()));
    }
    Ok(out)
}
