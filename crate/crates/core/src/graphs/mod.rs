//! Mixed graphs of latent and response vertices: independence graphs from
//! edge tests, block chain graphs, moralization and separation queries.

mod dot;
mod separation;

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gtests::{adjust_pvalues, Correction};

pub use dot::export_dot;
pub use separation::{induced_separation, separates, SeparatorSearch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VertexKind {
    /// Random component of margin `margin` for clustering `clustering` (1-based).
    LatentBlock { clustering: usize, margin: usize },
    /// One cluster's scalar random component in the scalar representation.
    LatentScalar { clustering: usize, margin: usize, cluster: usize },
    Response { margin: usize },
}

impl VertexKind {
    pub fn is_latent(&self) -> bool {
        !matches!(self, VertexKind::Response { .. })
    }

    pub fn margin(&self) -> usize {
        match *self {
            VertexKind::LatentBlock { margin, .. }
            | VertexKind::LatentScalar { margin, .. }
            | VertexKind::Response { margin } => margin,
        }
    }

    pub fn default_label(&self) -> String {
        match *self {
            VertexKind::LatentBlock { clustering, margin } => format!("B{clustering}[{margin}]"),
            VertexKind::LatentScalar {
                clustering,
                margin,
                cluster,
            } => format!("B{clustering}[{margin}]_{cluster}"),
            VertexKind::Response { margin } => format!("Y[{margin}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub label: String,
    #[serde(flatten)]
    pub kind: VertexKind,
}

impl Vertex {
    pub fn new(kind: VertexKind) -> Self {
        Self {
            label: kind.default_label(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub members: Vec<usize>,
}

/// Graph with undirected and directed edges over vertex indices. Undirected
/// edges are stored in both orientations, directed edges once.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MixedGraph {
    vertices: Vec<Vertex>,
    undirected: BTreeSet<(usize, usize)>,
    directed: BTreeSet<(usize, usize)>,
    blocks: Vec<Block>,
}

impl MixedGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a vertex to block `block`, creating blocks as needed.
    pub fn add_vertex(&mut self, vertex: Vertex, block: &str) -> Result<usize> {
        if self.index_of(&vertex.label).is_some() {
            return Err(Error::Graph(format!("duplicate vertex label '{}'", vertex.label)));
        }
        let id = self.vertices.len();
        self.vertices.push(vertex);
        match self.blocks.iter_mut().find(|b| b.name == block) {
            Some(b) => b.members.push(id),
            None => self.blocks.push(Block {
                name: block.to_string(),
                members: vec![id],
            }),
        }
        Ok(id)
    }

    fn block_of(&self, v: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.members.contains(&v))
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.vertices.len() {
            return Err(Error::Graph(format!("no vertex {v}")));
        }
        Ok(())
    }

    pub fn add_undirected(&mut self, a: usize, b: usize) -> Result<()> {
        self.check_vertex(a)?;
        self.check_vertex(b)?;
        if a == b {
            return Err(Error::Graph("self loops are not allowed".into()));
        }
        self.undirected.insert((a, b));
        self.undirected.insert((b, a));
        Ok(())
    }

    pub fn add_directed(&mut self, from: usize, to: usize) -> Result<()> {
        self.check_vertex(from)?;
        self.check_vertex(to)?;
        if from == to {
            return Err(Error::Graph("self loops are not allowed".into()));
        }
        self.directed.insert((from, to));
        Ok(())
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.label == label)
    }

    /// Vertex indices for labels, erroring on unknown labels.
    pub fn indices(&self, labels: &[&str]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|l| {
                self.index_of(l)
                    .ok_or_else(|| Error::Graph(format!("unknown vertex '{l}'")))
            })
            .collect()
    }

    pub fn label(&self, v: usize) -> &str {
        &self.vertices[v].label
    }

    pub fn has_undirected(&self, a: usize, b: usize) -> bool {
        self.undirected.contains(&(a, b))
    }

    pub fn has_directed(&self, from: usize, to: usize) -> bool {
        self.directed.contains(&(from, to))
    }

    /// Undirected edges, each once with `a < b`.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        self.undirected.iter().copied().filter(|(a, b)| a < b).collect()
    }

    pub fn directed_edges(&self) -> Vec<(usize, usize)> {
        self.directed.iter().copied().collect()
    }

    /// Undirected edges as sorted label pairs, for comparisons.
    pub fn undirected_labels(&self) -> BTreeSet<(String, String)> {
        self.undirected_edges()
            .into_iter()
            .map(|(a, b)| {
                let (x, y) = (self.label(a).to_string(), self.label(b).to_string());
                if x <= y {
                    (x, y)
                } else {
                    (y, x)
                }
            })
            .collect()
    }

    pub fn directed_labels(&self) -> BTreeSet<(String, String)> {
        self.directed
            .iter()
            .map(|&(a, b)| (self.label(a).to_string(), self.label(b).to_string()))
            .collect()
    }

    pub fn parents(&self, v: usize) -> Vec<usize> {
        self.directed
            .iter()
            .filter(|&&(_, to)| to == v)
            .map(|&(from, _)| from)
            .collect()
    }

    pub(crate) fn neighbours(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.undirected.range((v, 0)..=(v, usize::MAX)).map(|&(_, b)| b)
    }

    /// Checks the block chain rules: undirected edges stay inside a block,
    /// directed edges cross blocks and run from latent to response vertices.
    pub fn validate_chain(&self) -> Result<()> {
        for (a, b) in self.undirected_edges() {
            if self.block_of(a) != self.block_of(b) {
                return Err(Error::Graph(format!(
                    "undirected edge {}--{} crosses blocks",
                    self.label(a),
                    self.label(b)
                )));
            }
        }
        for &(a, b) in &self.directed {
            if self.block_of(a) == self.block_of(b) {
                return Err(Error::Graph(format!(
                    "directed edge {}->{} inside a block",
                    self.label(a),
                    self.label(b)
                )));
            }
            if !self.vertices[a].kind.is_latent() || self.vertices[b].kind.is_latent() {
                return Err(Error::Graph(format!(
                    "directed edge {}->{} must run from latent to response",
                    self.label(a),
                    self.label(b)
                )));
            }
        }
        Ok(())
    }

    /// Sort key giving a deterministic vertex order by kind, clustering, margin.
    pub(crate) fn order_key(&self, v: usize) -> (VertexKind, &str) {
        (self.vertices[v].kind, &self.vertices[v].label)
    }

    pub fn to_json(&self) -> GraphJson {
        let pair = |&(a, b): &(usize, usize)| [self.label(a).to_string(), self.label(b).to_string()];
        GraphJson {
            vertices: self.vertices.clone(),
            undirected: self.undirected_edges().iter().map(pair).collect(),
            directed: self.directed_edges().iter().map(pair).collect(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockJson {
                    name: b.name.clone(),
                    members: b.members.iter().map(|&m| self.label(m).to_string()).collect(),
                })
                .collect(),
        }
    }

    pub fn from_json(json: &GraphJson) -> Result<Self> {
        let mut g = MixedGraph::new();
        let mut placed = vec![false; json.vertices.len()];
        for b in &json.blocks {
            for m in &b.members {
                let i = json
                    .vertices
                    .iter()
                    .position(|v| &v.label == m)
                    .ok_or_else(|| Error::Graph(format!("unknown block member '{m}'")))?;
                placed[i] = true;
                g.add_vertex(json.vertices[i].clone(), &b.name)?;
            }
        }
        if let Some(i) = placed.iter().position(|p| !p) {
            return Err(Error::Graph(format!("vertex '{}' is in no block", json.vertices[i].label)));
        }
        for [a, b] in &json.undirected {
            let ix = g.indices(&[a, b])?;
            g.add_undirected(ix[0], ix[1])?;
        }
        for [a, b] in &json.directed {
            let ix = g.indices(&[a, b])?;
            g.add_directed(ix[0], ix[1])?;
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockJson {
    pub name: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub vertices: Vec<Vertex>,
    pub undirected: Vec<[String; 2]>,
    pub directed: Vec<[String; 2]>,
    pub blocks: Vec<BlockJson>,
}

/// Undirected graph over `margins` latent vertices of one clustering, with
/// 0-based margin pairs as edges.
pub fn latent_block(margins: usize, edges: &[(usize, usize)]) -> Result<MixedGraph> {
    let mut g = MixedGraph::new();
    for j in 1..=margins {
        g.add_vertex(
            Vertex::new(VertexKind::LatentBlock {
                clustering: 1,
                margin: j,
            }),
            "latent 1",
        )?;
    }
    for &(a, b) in edges {
        g.add_undirected(a, b)?;
    }
    Ok(g)
}

/// Independence graph from a symmetric matrix of pairwise p-values: margins
/// `i` and `j` are joined when the corrected p-value is below `alpha`.
pub fn build_ug(pvalues: &DMatrix<f64>, alpha: f64, correction: Correction) -> Result<MixedGraph> {
    let d = pvalues.nrows();
    if pvalues.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: pvalues.ncols(),
        });
    }
    let mut pairs = Vec::new();
    let mut raw = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            let (a, b) = (pvalues[(i, j)], pvalues[(j, i)]);
            if (a - b).abs() > 1e-12 {
                return Err(Error::NotSymmetric((a - b).abs()));
            }
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Domain(format!("p-value {a} outside [0, 1]")));
            }
            pairs.push((i, j));
            raw.push(a);
        }
    }
    let adjusted = adjust_pvalues(&raw, correction);
    let edges: Vec<(usize, usize)> = pairs
        .into_iter()
        .zip(adjusted)
        .filter(|&(_, p)| p < alpha)
        .map(|(e, _)| e)
        .collect();
    latent_block(d, &edges)
}

/// Block chain graph: one latent block per clustering, a response block, and a
/// directed edge from every latent vertex to the response of its margin.
pub fn build_bcg(latent_blocks: &[MixedGraph], margins: usize) -> Result<MixedGraph> {
    if latent_blocks.is_empty() {
        return Err(Error::Graph("need at least one latent block".into()));
    }
    let mut g = MixedGraph::new();
    let mut ids = Vec::new();
    for (c, block) in latent_blocks.iter().enumerate() {
        if block.len() != margins || !block.directed.is_empty() {
            return Err(Error::Graph(format!(
                "latent block {} must be undirected with {margins} vertices, has {}",
                c + 1,
                block.len()
            )));
        }
        let name = format!("latent {}", c + 1);
        let mut local = vec![0; margins];
        for (i, v) in block.vertices.iter().enumerate() {
            let j = v.kind.margin();
            if !(1..=margins).contains(&j) || !v.kind.is_latent() {
                return Err(Error::Graph(format!("vertex '{}' has no valid margin", v.label)));
            }
            local[i] = g.add_vertex(
                Vertex::new(VertexKind::LatentBlock {
                    clustering: c + 1,
                    margin: j,
                }),
                &name,
            )?;
        }
        for (a, b) in block.undirected_edges() {
            g.add_undirected(local[a], local[b])?;
        }
        ids.push((local, block));
    }
    let mut responses = vec![0; margins + 1];
    for (j, slot) in responses.iter_mut().enumerate().skip(1) {
        *slot = g.add_vertex(Vertex::new(VertexKind::Response { margin: j }), "responses")?;
    }
    for (local, block) in &ids {
        for (i, v) in block.vertices.iter().enumerate() {
            g.add_directed(local[i], responses[v.kind.margin()])?;
        }
    }
    Ok(g)
}

/// Drops directions and marries every pair of parents of a common child.
pub fn moralize(g: &MixedGraph) -> MixedGraph {
    let mut m = MixedGraph {
        vertices: g.vertices.clone(),
        undirected: g.undirected.clone(),
        directed: BTreeSet::new(),
        blocks: g.blocks.clone(),
    };
    for &(a, b) in &g.directed {
        m.undirected.insert((a, b));
        m.undirected.insert((b, a));
    }
    for v in 0..g.len() {
        let parents = g.parents(v);
        for (i, &a) in parents.iter().enumerate() {
            for &b in &parents[i + 1..] {
                m.undirected.insert((a, b));
                m.undirected.insert((b, a));
            }
        }
    }
    m
}

/// The two-clustering, three-margin model with chains 1–2–3 in both latent
/// blocks.
pub fn figure2_fixture() -> MixedGraph {
    let chain = latent_block(3, &[(0, 1), (1, 2)]).expect("static fixture");
    build_bcg(&[chain.clone(), chain], 3).expect("static fixture")
}

/// Replaces each latent block vertex by `q` per-cluster scalars, giving `q`
/// separated copies of every latent block. Responses keep one vertex per
/// margin and receive an edge from every scalar of that margin.
pub fn scalar_representation(g: &MixedGraph, q: usize) -> Result<MixedGraph> {
    if q == 0 {
        return Err(Error::InvalidParameter("q must be positive".into()));
    }
    let mut out = MixedGraph::new();
    let mut map: Vec<Vec<usize>> = vec![Vec::new(); g.len()];
    for block in &g.blocks {
        for &v in &block.members {
            let kind = g.vertices[v].kind;
            match kind {
                VertexKind::LatentBlock { clustering, margin } => {
                    for l in 1..=q {
                        let id = out.add_vertex(
                            Vertex::new(VertexKind::LatentScalar {
                                clustering,
                                margin,
                                cluster: l,
                            }),
                            &block.name,
                        )?;
                        map[v].push(id);
                    }
                }
                _ => map[v].push(out.add_vertex(g.vertices[v].clone(), &block.name)?),
            }
        }
    }
    for (a, b) in g.undirected_edges() {
        if map[a].len() == map[b].len() {
            for l in 0..map[a].len() {
                out.add_undirected(map[a][l], map[b][l])?;
            }
        } else {
            for &x in &map[a] {
                for &y in &map[b] {
                    out.add_undirected(x, y)?;
                }
            }
        }
    }
    for &(a, b) in &g.directed {
        for &x in &map[a] {
            for &y in &map[b] {
                out.add_directed(x, y)?;
            }
        }
    }
    Ok(out)
}
