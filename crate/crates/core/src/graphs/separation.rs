use std::collections::VecDeque;

use super::{moralize, MixedGraph};
use crate::error::{Error, Result};

fn check_sets(g: &MixedGraph, sets: [&[usize]; 3]) -> Result<()> {
    let mut seen = vec![false; g.len()];
    for set in sets {
        for &v in set {
            if v >= g.len() {
                return Err(Error::Graph(format!("no vertex {v}")));
            }
            if seen[v] {
                return Err(Error::OverlappingSets);
            }
        }
        for &v in set {
            seen[v] = true;
        }
    }
    Ok(())
}

/// True iff every path from `a` to `b` in the undirected graph `g` passes
/// through `s`.
pub fn separates(g: &MixedGraph, a: &[usize], b: &[usize], s: &[usize]) -> Result<bool> {
    if !g.directed_edges().is_empty() {
        return Err(Error::Graph("separation needs an undirected graph; moralize first".into()));
    }
    check_sets(g, [a, b, s])?;
    let mut blocked = vec![false; g.len()];
    for &v in s {
        blocked[v] = true;
    }
    let mut target = vec![false; g.len()];
    for &v in b {
        target[v] = true;
    }
    let mut queue: VecDeque<usize> = a.iter().copied().collect();
    for &v in a {
        blocked[v] = true;
    }
    while let Some(v) = queue.pop_front() {
        if target[v] {
            return Ok(false);
        }
        for w in g.neighbours(v) {
            if !blocked[w] {
                blocked[w] = true;
                queue.push_back(w);
            }
        }
    }
    Ok(true)
}

/// Which latent vertices may appear in an induced separator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeparatorSearch {
    /// Latent vertices other than the direct parents of the two response sets.
    #[default]
    ExcludeParents,
    AnyLatent,
}

/// Smallest set of latent vertices separating two response sets in the moral
/// graph of `bcg`. Candidates are tried by increasing size, then in vertex
/// order (kind, clustering, margin).
pub fn induced_separation(
    bcg: &MixedGraph,
    a: &[usize],
    b: &[usize],
    search: SeparatorSearch,
) -> Result<Option<Vec<usize>>> {
    check_sets(bcg, [a, b, &[]])?;
    if a.iter().chain(b).any(|&v| bcg.vertices()[v].kind.is_latent()) {
        return Err(Error::Graph("induced separation takes response vertices".into()));
    }
    let moral = moralize(bcg);
    let excluded: Vec<usize> = match search {
        SeparatorSearch::ExcludeParents => a.iter().chain(b).flat_map(|&v| bcg.parents(v)).collect(),
        SeparatorSearch::AnyLatent => Vec::new(),
    };
    let mut candidates: Vec<usize> = (0..bcg.len())
        .filter(|&v| bcg.vertices()[v].kind.is_latent() && !excluded.contains(&v))
        .collect();
    candidates.sort_by(|&x, &y| bcg.order_key(x).cmp(&bcg.order_key(y)));
    let n = candidates.len();
    for size in 0..=n {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            let set: Vec<usize> = idx.iter().map(|&i| candidates[i]).collect();
            if separates(&moral, a, b, &set)? {
                return Ok(Some(set));
            }
            // next combination in lexicographic order
            let mut k = size;
            while k > 0 && idx[k - 1] == n - size + k - 1 {
                k -= 1;
            }
            if k == 0 {
                break;
            }
            idx[k - 1] += 1;
            for t in k..size {
                idx[t] = idx[t - 1] + 1;
            }
        }
    }
    Ok(None)
}
