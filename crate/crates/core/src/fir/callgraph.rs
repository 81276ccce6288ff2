use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use super::{Instr, Program};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown root function `{0}`")]
pub struct UnknownRoot(pub String);

/// Direct-call graph. Builtins are not nodes.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CallGraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<(String, String)>,
}

impl CallGraph {
    pub fn callees<'a>(&'a self, caller: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .range((caller.to_string(), String::new())..)
            .take_while(move |(c, _)| c == caller)
            .map(|(_, callee)| callee.as_str())
    }

    /// callee → callers
    pub fn reversed(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut out: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (a, b) in &self.edges {
            out.entry(b.as_str()).or_default().insert(a.as_str());
        }
        out
    }
}

pub fn call_graph(p: &Program) -> CallGraph {
    let mut g = CallGraph {
        nodes: p.functions.keys().cloned().collect(),
        edges: BTreeSet::new(),
    };
    for f in p.functions.values() {
        for (_, _, ins) in f.instrs() {
            if let Instr::Call { func, .. } = ins {
                if p.functions.contains_key(func) {
                    g.edges.insert((f.name.clone(), func.clone()));
                }
            }
        }
    }
    g
}

/// Transitive closure of the call graph from `roots`, roots included.
pub fn reachable_functions<S: AsRef<str>>(
    p: &Program,
    roots: &[S],
) -> Result<BTreeSet<String>, UnknownRoot> {
    let graph = call_graph(p);
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    for r in roots {
        let r = r.as_ref();
        if !p.functions.contains_key(r) {
            return Err(UnknownRoot(r.to_string()));
        }
        if seen.insert(r.to_string()) {
            queue.push_back(r.to_string());
        }
    }
    while let Some(f) = queue.pop_front() {
        for callee in graph.callees(&f) {
            if seen.insert(callee.to_string()) {
                queue.push_back(callee.to_string());
            }
        }
    }
    Ok(seen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fir::parse_program;

    fn chain() -> Program {
        parse_program(
            "fn g() { b0: return; } fn f() { b0: call g(); return; }
             fn main() { b0: call f(); return; } fn h() { b0: call h(); return; }
             fn irq() { b0: call h(); return; } vector { irq }",
        )
        .unwrap()
    }

    #[test]
    fn edges_match_call_sites() {
        let g = call_graph(&chain());
        let edges: Vec<(&str, &str)> =
            g.edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        assert_eq!(edges, vec![("f", "g"), ("h", "h"), ("irq", "h"), ("main", "f")]);
        assert_eq!(g.callees("main").collect::<Vec<_>>(), vec!["f"]);
    }

    #[test]
    fn reachability() {
        let p = chain();
        let r = reachable_functions(&p, &["main"]).unwrap();
        assert_eq!(r.into_iter().collect::<Vec<_>>(), vec!["f", "g", "main"]);
        let with_isr = reachable_functions(&p, &["main", "irq"]).unwrap();
        assert!(with_isr.contains("h"));
        assert!(reachable_functions::<&str>(&p, &[]).unwrap().is_empty());
        assert_eq!(reachable_functions(&p, &["nope"]), Err(UnknownRoot("nope".into())));
    }
}
