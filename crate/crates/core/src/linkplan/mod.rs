//! Link planning over object descriptors: which objects to link, which
//! application symbols to rename so the host port wins, archive order,
//! alias bindings and config selection against a build oracle.

mod alias;
mod archive;
mod check;
mod config;
mod resolve;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use alias::{bind_aliases, canonical_of, AliasTable};
pub use archive::{archive_winners, plan_archives};
pub use check::{validate_plan, DuplicateStrong, PlanReport, Unresolved};
pub use config::{select_configs, ConfigEntry, ConfigSet};
pub use resolve::{resolve_links, resolve_links_with, RENAME_SUFFIX};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Provenance {
    App,
    #[serde(rename = "LPL")]
    Lpl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strength {
    Strong,
    Weak,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolDef {
    pub sym: String,
    pub strength: Strength,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectDesc {
    pub name: String,
    pub provenance: Provenance,
    #[serde(default)]
    pub defined: Vec<SymbolDef>,
    #[serde(default)]
    pub undefined: Vec<String>,
}

impl ObjectDesc {
    pub fn new(name: &str, provenance: Provenance) -> Self {
        ObjectDesc {
            name: name.to_string(),
            provenance,
            defined: Vec::new(),
            undefined: Vec::new(),
        }
    }

    pub fn strong(mut self, sym: &str) -> Self {
        self.defined.push(SymbolDef {
            sym: sym.to_string(),
            strength: Strength::Strong,
        });
        self
    }

    pub fn weak(mut self, sym: &str) -> Self {
        self.defined.push(SymbolDef {
            sym: sym.to_string(),
            strength: Strength::Weak,
        });
        self
    }

    pub fn needs(mut self, sym: &str) -> Self {
        self.undefined.push(sym.to_string());
        self
    }

    pub fn defines(&self, sym: &str) -> bool {
        self.defined.iter().any(|d| d.sym == sym)
    }

    fn check(&self) -> Result<(), LinkError> {
        for (i, d) in self.defined.iter().enumerate() {
            if self.defined[..i].iter().any(|e| e.sym == d.sym) {
                return Err(LinkError::InvalidObject {
                    object: self.name.clone(),
                    detail: format!("`{}` defined twice", d.sym),
                });
            }
            if self.undefined.contains(&d.sym) {
                return Err(LinkError::InvalidObject {
                    object: self.name.clone(),
                    detail: format!("`{}` both defined and undefined", d.sym),
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Archive {
    pub name: String,
    pub members: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rename {
    pub object: String,
    pub old: String,
    pub new: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasBinding {
    pub alias: String,
    pub canonical: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkPlan {
    pub selected: Vec<String>,
    pub archives: Vec<Archive>,
    pub renames: Vec<Rename>,
    pub alias_bindings: Vec<AliasBinding>,
}

impl LinkPlan {
    /// Name `object` gives to its definition of `sym` after renames.
    pub fn renamed<'a>(&'a self, object: &str, sym: &'a str) -> &'a str {
        self.renames
            .iter()
            .find(|r| r.object == object && r.old == sym)
            .map_or(sym, |r| r.new.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinkError {
    #[error("no root objects given")]
    NoRoots,
    #[error("object `{0}` appears more than once")]
    DuplicateObject(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("invalid object `{object}`: {detail}")]
    InvalidObject { object: String, detail: String },
    #[error("symbol `{0}` is defined by no object")]
    Unresolvable(String),
    #[error("`{symbol}` is strongly defined by both `{first}` and `{second}`")]
    IrreconcilableDuplicate {
        symbol: String,
        first: String,
        second: String,
    },
    #[error("archive `{archive}` lists unknown member `{member}`")]
    UnknownMember { archive: String, member: String },
    #[error("alias `{alias}` points at `{canonical}`, which no selected object defines")]
    DanglingAlias { alias: String, canonical: String },
    #[error("alias table has a cycle through `{0}`")]
    AliasCycle(String),
    #[error("config key `{0}` appears more than once")]
    DuplicateConfigKey(String),
    #[error("the build fails with no application configs")]
    OracleFailure,
}

/// Every known object by name.
#[derive(Clone, Debug, Default)]
pub struct Universe {
    objects: BTreeMap<String, ObjectDesc>,
}

impl Universe {
    pub fn new<'a>(objects: impl IntoIterator<Item = &'a ObjectDesc>) -> Result<Self, LinkError> {
        let mut map = BTreeMap::new();
        for o in objects {
            o.check()?;
            if map.insert(o.name.clone(), o.clone()).is_some() {
                return Err(LinkError::DuplicateObject(o.name.clone()));
            }
        }
        Ok(Universe { objects: map })
    }

    pub fn get(&self, name: &str) -> Option<&ObjectDesc> {
        self.objects.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ObjectDesc> {
        self.objects.values()
    }
}

/// JSON input to the `linkplan` command.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub objects: Vec<ObjectDesc>,
    /// Objects linked unconditionally; every other object is pooled by its
    /// provenance.
    pub roots: Vec<String>,
    #[serde(default)]
    pub archives: Vec<Archive>,
    #[serde(default)]
    pub aliases: AliasTable,
    #[serde(default)]
    pub configs: ConfigSet,
}

/// Plan plus the validator's verdict, as emitted by the CLI.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkOutcome {
    pub plan: LinkPlan,
    pub report: PlanReport,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accepted_configs: Option<ConfigSet>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn universe(&self) -> Result<Universe, LinkError> {
        Universe::new(&self.objects)
    }

    /// Resolve, order archives, bind aliases and validate.
    pub fn plan(&self) -> Result<(LinkPlan, PlanReport), LinkError> {
        let universe = self.universe()?;
        let mut roots = Vec::new();
        for r in &self.roots {
            roots.push(
                universe
                    .get(r)
                    .cloned()
                    .ok_or_else(|| LinkError::UnknownObject(r.clone()))?,
            );
        }
        let pool = |prov: Provenance| -> Vec<ObjectDesc> {
            self.objects
                .iter()
                .filter(|o| o.provenance == prov && !self.roots.contains(&o.name))
                .cloned()
                .collect()
        };
        let mut plan = resolve_links_with(&roots, &pool(Provenance::App), &pool(Provenance::Lpl), &self.aliases)?;
        plan.archives = plan_archives(&self.archives, &universe)?;
        let plan = bind_aliases(&plan, &self.aliases, &universe)?;
        let report = validate_plan(&plan, &universe);
        Ok((plan, report))
    }
}
