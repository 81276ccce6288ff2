use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::LinkError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigEntry {
    pub key: String,
    pub value: String,
}

/// Ordered `key = value` build settings.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfigSet {
    pub entries: Vec<ConfigEntry>,
}

impl ConfigSet {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|e| e.key == key).map(|e| e.value.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One `key=value` line per entry, as handed to an external oracle.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{}={}", e.key, e.value);
        }
        out
    }

    fn check_unique(&self) -> Result<(), LinkError> {
        for (i, e) in self.entries.iter().enumerate() {
            if self.entries[..i].iter().any(|f| f.key == e.key) {
                return Err(LinkError::DuplicateConfigKey(e.key.clone()));
            }
        }
        Ok(())
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for ConfigSet {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        ConfigSet {
            entries: iter
                .into_iter()
                .map(|(k, v)| ConfigEntry {
                    key: k.into(),
                    value: v.into(),
                })
                .collect(),
        }
    }
}

/// One greedy pass in declared order: keep each config iff the build still
/// succeeds with it added to those already kept. The oracle is first asked
/// about the empty set, then once per config, strictly in sequence.
pub fn select_configs(
    app_configs: &ConfigSet,
    mut oracle: impl FnMut(&ConfigSet) -> bool,
) -> Result<ConfigSet, LinkError> {
    app_configs.check_unique()?;
    let mut accepted = ConfigSet::default();
    if !oracle(&accepted) {
        return Err(LinkError::OracleFailure);
    }
    for e in &app_configs.entries {
        let mut candidate = accepted.clone();
        candidate.entries.push(e.clone());
        if oracle(&candidate) {
            accepted = candidate;
        }
    }
    Ok(accepted)
}
