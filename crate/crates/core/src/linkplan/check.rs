use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{LinkPlan, Strength, Universe};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unresolved {
    pub object: String,
    pub symbol: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateStrong {
    pub symbol: String,
    pub objects: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanReport {
    pub unknown_objects: Vec<String>,
    pub unresolved: Vec<Unresolved>,
    pub duplicate_strong: Vec<DuplicateStrong>,
}

impl PlanReport {
    pub fn is_valid(&self) -> bool {
        self.unknown_objects.is_empty() && self.unresolved.is_empty() && self.duplicate_strong.is_empty()
    }
}

/// Checks a plan from scratch: with renames and alias bindings applied,
/// every reference of a selected object must hit exactly one strong
/// definition, or only weak ones.
pub fn validate_plan(plan: &LinkPlan, universe: &Universe) -> PlanReport {
    let mut report = PlanReport::default();
    let mut strong: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    let mut weak: BTreeMap<&str, usize> = BTreeMap::new();
    let mut objects = Vec::new();
    for name in &plan.selected {
        let Some(o) = universe.get(name) else {
            report.unknown_objects.push(name.clone());
            continue;
        };
        objects.push(o);
        for d in &o.defined {
            let sym = plan.renamed(&o.name, &d.sym);
            match d.strength {
                Strength::Strong => strong.entry(sym).or_default().push(o.name.clone()),
                Strength::Weak => *weak.entry(sym).or_default() += 1,
            }
        }
    }
    for o in objects {
        for u in &o.undefined {
            let target = plan
                .alias_bindings
                .iter()
                .find(|b| &b.alias == u)
                .map_or(u.as_str(), |b| b.canonical.as_str());
            let s = strong.get(target).map_or(0, Vec::len);
            if s == 0 && !weak.contains_key(target) {
                report.unresolved.push(Unresolved {
                    object: o.name.clone(),
                    symbol: u.clone(),
                });
            }
        }
    }
    for (sym, objs) in strong {
        if objs.len() > 1 {
            report.duplicate_strong.push(DuplicateStrong {
                symbol: sym.to_string(),
                objects: objs,
            });
        }
    }
    report
}
