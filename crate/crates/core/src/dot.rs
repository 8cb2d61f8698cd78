//! Object graphs in Graphviz DOT notation.
//!
//! One node per object (key, attribute values, inref listing, deleted
//! flag) and one edge per surviving non-NULL outref entry, labelled with
//! its reference id.

use std::fmt::Write;

use crate::model::ids::{ObjectKey, ReplicaId};
use crate::model::world::World;

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Renders `replica`'s state. `alias` may give objects readable names.
pub fn snapshot(world: &World, replica: ReplicaId, alias: impl Fn(ObjectKey) -> Option<&'static str>) -> String {
    let name = |k: ObjectKey| match alias(k) {
        Some(a) => format!("{a} ({k})"),
        None => k.to_string(),
    };
    let short = |k: ObjectKey| alias(k).map(str::to_string).unwrap_or_else(|| k.to_string());
    let rep = world.replica(replica);
    let mut out = String::new();
    writeln!(out, "digraph {} {{", quote(&replica.to_string())).unwrap();
    writeln!(out, "  node [shape=box, fontname=monospace];").unwrap();
    for (key, obj) in &rep.objects {
        let mut label = name(*key);
        if obj.root {
            label.push_str(" root");
        }
        if obj.deleted {
            label.push_str(" DELETED");
        }
        for (attr, out_ref) in &obj.attrs {
            let values: Vec<String> = out_ref
                .entries()
                .map(|e| match e.value {
                    Some(r) => format!("{},{}", short(r.target), r.id),
                    None => "null".to_string(),
                })
                .collect();
            write!(label, "\n{attr}: {}", values.join(" | ")).unwrap();
        }
        let inref: Vec<String> = obj
            .inref
            .current()
            .map(|(s, id)| format!("{},{id}", short(s)))
            .collect();
        write!(
            label,
            "\ninref: {}",
            if inref.is_empty() {
                "-".to_string()
            } else {
                inref.join(" ")
            }
        )
        .unwrap();
        let style = if obj.deleted { ", style=dashed" } else { "" };
        writeln!(out, "  {} [label={}{style}];", quote(&key.to_string()), quote(&label)).unwrap();
    }
    for (key, obj) in &rep.objects {
        for (attr, r) in obj.outgoing() {
            writeln!(
                out,
                "  {} -> {} [label={}];",
                quote(&key.to_string()),
                quote(&r.target.to_string()),
                quote(&format!("{} {attr}", r.id))
            )
            .unwrap();
        }
    }
    out.push_str("}\n");
    out
}

/// Surviving non-NULL outref entries at `replica`: the edge count of its
/// snapshot.
pub fn edge_count(world: &World, replica: ReplicaId) -> usize {
    world
        .replica(replica)
        .objects
        .values()
        .map(|o| o.outgoing().count())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::effector::CompositionMode;
    use crate::refs::ops::Op;

    #[test]
    fn edges_match_entries() {
        let mut w = World::new(1, CompositionMode::PureCausal);
        let r = ReplicaId(0);
        let a = ObjectKey::new(r, 1);
        let x = ObjectKey::new(r, 2);
        w.generate(r, Op::create(a, true, &["a"])).unwrap();
        w.generate(r, Op::create(x, false, &["a"])).unwrap();
        w.generate(r, Op::init(a, "a", x)).unwrap();
        let dot = snapshot(&w, r, |k| (k == x).then_some("X"));
        assert_eq!(dot.matches(" -> ").count(), edge_count(&w, r));
        assert!(dot.contains("\"k0.1\" -> \"k0.2\" [label=\"#0.1 a\"];"));
        assert!(dot.contains("X (k0.2)"));
    }
}
