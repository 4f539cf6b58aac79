use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use petgraph::graphmap::DiGraphMap;

/// Caller → callees. Every program function has an entry, even without calls.
pub type CallGraph = BTreeMap<String, BTreeSet<String>>;

/// Functions lying on a directed cycle of `graph` (direct or mutual recursion).
pub fn detect_recursion(graph: &CallGraph) -> BTreeSet<String> {
    let mut g: DiGraphMap<&str, ()> = DiGraphMap::default();
    for (caller, callees) in graph {
        g.add_node(caller);
        for callee in callees {
            g.add_edge(caller, callee, ());
        }
    }
    let mut out = BTreeSet::new();
    for component in tarjan_scc(&g) {
        let cyclic = component.len() > 1 || g.contains_edge(component[0], component[0]);
        if cyclic {
            out.extend(component.into_iter().map(str::to_owned));
        }
    }
    // callees that never appear as callers cannot be on a cycle
    out.retain(|f| graph.contains_key(f));
    out
}
