use std::collections::BTreeSet;

use super::alias::{canonical_of, AliasTable};
use super::{LinkError, LinkPlan, ObjectDesc, Provenance, Rename, Strength, Universe};

/// Appended to an application symbol that clashes with the host port;
/// later clashes on the same name get `__app2`, `__app3`, ...
pub const RENAME_SUFFIX: &str = "__app";

struct State<'a> {
    selected: Vec<&'a ObjectDesc>,
    renames: Vec<Rename>,
    /// Every symbol name in use, so fresh names never collide.
    taken: BTreeSet<String>,
}

impl<'a> State<'a> {
    fn current<'s>(&'s self, o: &'s ObjectDesc, sym: &'s str) -> &'s str {
        self.renames
            .iter()
            .find(|r| r.object == o.name && r.old == sym)
            .map_or(sym, |r| r.new.as_str())
    }

    fn is_defined(&self, sym: &str) -> bool {
        self.selected
            .iter()
            .any(|o| o.defined.iter().any(|d| self.current(o, &d.sym) == sym))
    }

    fn strong_definer(&self, sym: &str) -> Option<&'a ObjectDesc> {
        self.selected.iter().copied().find(|o| {
            o.defined
                .iter()
                .any(|d| d.strength == Strength::Strong && self.current(o, &d.sym) == sym)
        })
    }

    fn rename(&mut self, object: &str, sym: &str) {
        let mut new = format!("{sym}{RENAME_SUFFIX}");
        let mut k = 2;
        while self.taken.contains(&new) {
            new = format!("{sym}{RENAME_SUFFIX}{k}");
            k += 1;
        }
        self.taken.insert(new.clone());
        self.renames.push(Rename {
            object: object.to_string(),
            old: sym.to_string(),
            new,
        });
    }

    /// Links `o`, renaming the application side of any strong clash with
    /// the host port.
    fn pull(&mut self, o: &'a ObjectDesc) -> Result<(), LinkError> {
        for d in o.defined.iter().filter(|d| d.strength == Strength::Strong) {
            let Some(prev) = self.strong_definer(&d.sym) else {
                continue;
            };
            match (prev.provenance, o.provenance) {
                // renamed names are fresh, so a clash is always on an original name
                (Provenance::App, Provenance::Lpl) => self.rename(&prev.name, &d.sym),
                (Provenance::Lpl, Provenance::App) => self.rename(&o.name, &d.sym),
                _ => {
                    return Err(LinkError::IrreconcilableDuplicate {
                        symbol: d.sym.clone(),
                        first: prev.name.clone(),
                        second: o.name.clone(),
                    })
                }
            }
        }
        self.selected.push(o);
        Ok(())
    }

    /// First reference, in link order, with no definition yet. Alias
    /// references stand for their canonical symbol.
    fn first_unresolved(&self, aliases: &AliasTable) -> Result<Option<(String, String)>, LinkError> {
        for o in &self.selected {
            for u in &o.undefined {
                let target = canonical_of(aliases, u)?;
                if !self.is_defined(&target) {
                    return Ok(Some((u.clone(), target)));
                }
            }
        }
        Ok(None)
    }

    fn has(&self, o: &ObjectDesc) -> bool {
        self.selected.iter().any(|s| s.name == o.name)
    }
}

/// Links the roots, then repeatedly pulls in a definer for the first
/// unresolved reference, taking the host port's object over the
/// application's whenever both define it.
pub fn resolve_links(
    roots: &[ObjectDesc],
    app_pool: &[ObjectDesc],
    lpl_pool: &[ObjectDesc],
) -> Result<LinkPlan, LinkError> {
    resolve_links_with(roots, app_pool, lpl_pool, &AliasTable::default())
}

/// [`resolve_links`] where a reference to an alias is satisfied by pulling
/// a definer of its canonical symbol. The binding itself is recorded by
/// [`super::bind_aliases`].
pub fn resolve_links_with(
    roots: &[ObjectDesc],
    app_pool: &[ObjectDesc],
    lpl_pool: &[ObjectDesc],
    aliases: &AliasTable,
) -> Result<LinkPlan, LinkError> {
    if roots.is_empty() {
        return Err(LinkError::NoRoots);
    }
    let universe = Universe::new(roots.iter().chain(app_pool).chain(lpl_pool))?;
    let mut st = State {
        selected: Vec::new(),
        renames: Vec::new(),
        taken: universe
            .iter()
            .flat_map(|o| o.defined.iter().map(|d| d.sym.clone()).chain(o.undefined.iter().cloned()))
            .collect(),
    };
    for r in roots {
        st.pull(r)?;
    }
    while let Some((reference, sym)) = st.first_unresolved(aliases)? {
        let definer = lpl_pool
            .iter()
            .chain(app_pool)
            .find(|o| o.defines(&sym) && !st.has(o));
        match definer {
            Some(o) => st.pull(o)?,
            None if reference != sym => {
                return Err(LinkError::DanglingAlias {
                    alias: reference,
                    canonical: sym,
                })
            }
            None => return Err(LinkError::Unresolvable(sym)),
        }
    }
    Ok(LinkPlan {
        selected: st.selected.iter().map(|o| o.name.clone()).collect(),
        archives: Vec::new(),
        renames: st.renames,
        alias_bindings: Vec::new(),
    })
}
