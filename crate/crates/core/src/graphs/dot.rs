use std::fmt::Write;

use super::MixedGraph;

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// DOT text with one cluster per block. Graphs with directed edges become a
/// `digraph` whose undirected edges carry `dir=none`.
pub fn export_dot(g: &MixedGraph) -> String {
    let directed = !g.directed_edges().is_empty();
    let (kind, arrow) = if directed { ("digraph", "->") } else { ("graph", "--") };
    let mut out = String::new();
    writeln!(out, "{kind} G {{").unwrap();
    writeln!(out, "  node [shape=circle];").unwrap();
    for (i, block) in g.blocks().iter().enumerate() {
        let mut members = block.members.clone();
        members.sort_by(|&a, &b| g.order_key(a).cmp(&g.order_key(b)));
        writeln!(out, "  subgraph cluster_{i} {{").unwrap();
        writeln!(out, "    label={};", quote(&block.name)).unwrap();
        for m in members {
            writeln!(out, "    {};", quote(g.label(m))).unwrap();
        }
        writeln!(out, "  }}").unwrap();
    }
    let mut lines: Vec<String> = g
        .undirected_labels()
        .into_iter()
        .map(|(a, b)| {
            let attr = if directed { " [dir=none]" } else { "" };
            format!("  {} {arrow} {}{attr};", quote(&a), quote(&b))
        })
        .collect();
    lines.extend(
        g.directed_labels()
            .into_iter()
            .map(|(a, b)| format!("  {} -> {};", quote(&a), quote(&b))),
    );
    lines.sort();
    for l in lines {
        writeln!(out, "{l}").unwrap();
    }
    out.push_str("}\n");
    out
}
