//! Interaction graphs.
//!
//! Vertices are dense indices `0..n`. Each undirected edge is stored once as
//! `(lo, hi)` with `lo < hi`; quantities that are antisymmetric under edge
//! reversal (the drift, the Brownian increment `B_xy = -B_yx`) are carried
//! with the orientation `lo -> hi` and negated at the `hi` end.

use std::collections::{BTreeSet, VecDeque};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionGraph {
    labels: Vec<i64>,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    coords: Option<Vec<Vec<i64>>>,
}

impl InteractionGraph {
    /// All lattice points of `region` (one index range per axis), joined when
    /// their lattice distance is 1. Vertices are numbered in lexicographic
    /// coordinate order.
    pub fn lattice_region(lattice_dim: usize, region: &[Range<i64>]) -> Result<Self> {
        if lattice_dim == 0 {
            return Err(Error::arg("lattice_dim", "must be positive"));
        }
        if region.len() != lattice_dim {
            return Err(Error::arg(
                "box",
                format!("expected {lattice_dim} ranges, got {}", region.len()),
            ));
        }
        if region.iter().any(|r| r.is_empty()) {
            return Err(Error::arg("box", "empty region"));
        }

        let extents: Vec<usize> = region.iter().map(|r| (r.end - r.start) as usize).collect();
        let n: usize = extents.iter().product();
        let mut coords = Vec::with_capacity(n);
        for flat in 0..n {
            let mut rem = flat;
            let mut c = vec![0i64; lattice_dim];
            for axis in (0..lattice_dim).rev() {
                c[axis] = region[axis].start + (rem % extents[axis]) as i64;
                rem /= extents[axis];
            }
            coords.push(c);
        }

        // Row-major strides: moving +1 along `axis` adds strides[axis] to the flat index.
        let mut strides = vec![1usize; lattice_dim];
        for axis in (0..lattice_dim.saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * extents[axis + 1];
        }
        let mut edges = Vec::new();
        for (v, c) in coords.iter().enumerate() {
            for axis in 0..lattice_dim {
                if c[axis] + 1 < region[axis].end {
                    edges.push((v, v + strides[axis]));
                }
            }
        }
        edges.sort_unstable();

        let mut g = Self::assemble((0..n as i64).collect(), edges)?;
        g.coords = Some(coords);
        Ok(g)
    }

    pub fn complete(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::arg("n", "a complete loopless graph needs at least 2 vertices"));
        }
        let edges = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect();
        Self::assemble((0..n as i64).collect(), edges)
    }

    /// A path `0 - 1 - ... - (n-1)`.
    pub fn chain(n: usize) -> Result<Self> {
        Self::lattice_region(1, std::slice::from_ref(&(0..n as i64)))
    }

    /// A graph with one vertex and no edges; its dynamics is trivial.
    pub fn singleton() -> Self {
        Self {
            labels: vec![0],
            edges: Vec::new(),
            adjacency: vec![Vec::new()],
            coords: None,
        }
    }

    /// Builds a graph from explicit vertex labels and undirected edges given
    /// by label. Fails on loops, duplicate edges, unknown labels or a
    /// disconnected result.
    pub fn from_labeled(labels: &[i64], edges: &[[i64; 2]]) -> Result<Self> {
        let mut index = std::collections::HashMap::with_capacity(labels.len());
        for (i, &l) in labels.iter().enumerate() {
            if index.insert(l, i).is_some() {
                return Err(Error::Graph(format!("duplicate vertex label {l}")));
            }
        }
        let mut out = Vec::with_capacity(edges.len());
        for &[a, b] in edges {
            let ia = *index
                .get(&a)
                .ok_or_else(|| Error::Graph(format!("edge references unknown vertex {a}")))?;
            let ib = *index
                .get(&b)
                .ok_or_else(|| Error::Graph(format!("edge references unknown vertex {b}")))?;
            out.push((ia.min(ib), ia.max(ib)));
            if ia == ib {
                return Err(Error::Graph(format!("loop at vertex {a}")));
            }
        }
        let mut seen = BTreeSet::new();
        for e in &out {
            if !seen.insert(*e) {
                return Err(Error::Graph(format!(
                    "duplicate edge {{{}, {}}}",
                    labels[e.0], labels[e.1]
                )));
            }
        }
        let g = Self::assemble(labels.to_vec(), out)?;
        let report = g.validate();
        if !report.is_valid() {
            return Err(Error::Graph(report.to_string()));
        }
        Ok(g)
    }

    /// Constructs a graph without any checks. Only for exercising
    /// [`InteractionGraph::validate`] on corrupted inputs.
    pub fn from_parts_unchecked(
        labels: Vec<i64>,
        edges: Vec<(usize, usize)>,
        adjacency: Vec<Vec<usize>>,
    ) -> Self {
        Self {
            labels,
            edges,
            adjacency,
            coords: None,
        }
    }

    fn assemble(labels: Vec<i64>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Graph("no vertices".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &edges {
            if a >= n || b >= n {
                return Err(Error::Graph(format!("edge ({a}, {b}) out of range")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for nb in &mut adjacency {
            nb.sort_unstable();
        }
        Ok(Self {
            labels,
            edges,
            adjacency,
            coords: None,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    /// Lattice coordinates, when the graph came from [`InteractionGraph::lattice_region`].
    pub fn coords(&self) -> Option<&[Vec<i64>]> {
        self.coords.as_deref()
    }

    pub fn validate(&self) -> ValidationReport {
        let n = self.labels.len();
        let mut report = ValidationReport::default();
        let mut seen = BTreeSet::new();
        for &(a, b) in &self.edges {
            if a >= n || b >= n {
                report.out_of_range.push((a, b));
                continue;
            }
            if a == b {
                report.loops.push(a);
            }
            if !seen.insert((a.min(b), a.max(b))) {
                report.duplicate_edges.push((a, b));
            }
        }
        for (v, nb) in self.adjacency.iter().enumerate() {
            for &w in nb {
                if w >= n {
                    report.out_of_range.push((v, w));
                    continue;
                }
                if w == v && !report.loops.contains(&v) {
                    report.loops.push(v);
                }
                if !self.adjacency[w].contains(&v) {
                    report.asymmetric.push((v, w));
                }
                if !seen.contains(&(v.min(w), v.max(w))) {
                    report.adjacency_mismatch.push((v, w));
                }
            }
        }
        for &(a, b) in &seen {
            if a < n && b < n && (!self.adjacency[a].contains(&b) || !self.adjacency[b].contains(&a)) {
                report.adjacency_mismatch.push((a, b));
            }
        }
        report.components = self.count_components();
        report
    }

    fn count_components(&self) -> usize {
        let n = self.labels.len();
        let mut visited = vec![false; n];
        let mut components = 0;
        for start in 0..n {
            if visited[start] {
                continue;
            }
            components += 1;
            visited[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &w in self.adjacency.get(v).map(Vec::as_slice).unwrap_or(&[]) {
                    if w < n && !visited[w] {
                        visited[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        components
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub loops: Vec<usize>,
    pub duplicate_edges: Vec<(usize, usize)>,
    pub asymmetric: Vec<(usize, usize)>,
    pub adjacency_mismatch: Vec<(usize, usize)>,
    pub out_of_range: Vec<(usize, usize)>,
    pub components: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.loops.is_empty()
            && self.duplicate_edges.is_empty()
            && self.asymmetric.is_empty()
            && self.adjacency_mismatch.is_empty()
            && self.out_of_range.is_empty()
            && self.components <= 1
    }

    pub fn is_connected(&self) -> bool {
        self.components <= 1
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_valid() {
            return write!(f, "valid");
        }
        let mut parts = Vec::new();
        if !self.loops.is_empty() {
            parts.push(format!("loops at {:?}", self.loops));
        }
        if !self.duplicate_edges.is_empty() {
            parts.push(format!("duplicate edges {:?}", self.duplicate_edges));
        }
        if !self.asymmetric.is_empty() {
            parts.push(format!("asymmetric adjacency {:?}", self.asymmetric));
        }
        if !self.adjacency_mismatch.is_empty() {
            parts.push(format!("adjacency disagrees with edges {:?}", self.adjacency_mismatch));
        }
        if !self.out_of_range.is_empty() {
            parts.push(format!("out-of-range endpoints {:?}", self.out_of_range));
        }
        if self.components > 1 {
            parts.push(format!("disconnected ({} components)", self.components));
        }
        write!(f, "{}", parts.join("; "))
    }
}

/// JSON form of a graph: `{"vertices": [0, 1, 2], "edges": [[0, 1], [1, 2]]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub vertices: Vec<i64>,
    pub edges: Vec<[i64; 2]>,
}

impl GraphDocument {
    pub fn to_graph(&self) -> Result<InteractionGraph> {
        if self.vertices.len() == 1 && self.edges.is_empty() {
            let mut g = InteractionGraph::singleton();
            g.labels = self.vertices.clone();
            return Ok(g);
        }
        InteractionGraph::from_labeled(&self.vertices, &self.edges)
    }

    pub fn from_graph(g: &InteractionGraph) -> Self {
        Self {
            vertices: g.labels.clone(),
            edges: g
                .edges
                .iter()
                .map(|&(a, b)| [g.labels[a], g.labels[b]])
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn chain_of_three_has_two_edges() {
        let g = InteractionGraph::lattice_region(1, std::slice::from_ref(&(0..3))).unwrap();
        assert_eq!(g.num_vertices(), 3);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert!(g.validate().is_valid());
    }

    #[test]
    fn unit_square() {
        let g = InteractionGraph::lattice_region(2, &[0..2, 0..2]).unwrap();
        assert_eq!(g.num_vertices(), 4);
        assert_eq!(g.num_edges(), 4);
        assert_eq!(g.coords().unwrap()[3], vec![1, 1]);
    }

    #[test]
    fn empty_box_is_rejected() {
        assert!(InteractionGraph::lattice_region(1, std::slice::from_ref(&(0..0))).is_err());
        assert!(InteractionGraph::lattice_region(1, &[]).is_err());
    }

    #[test]
    fn complete_graphs() {
        assert_eq!(InteractionGraph::complete(4).unwrap().num_edges(), 6);
        assert_eq!(InteractionGraph::complete(2).unwrap().num_edges(), 1);
        assert!(InteractionGraph::complete(1).is_err());
    }

    #[test]
    fn injected_loop_is_reported() {
        let g = InteractionGraph::from_parts_unchecked(
            vec![0, 1],
            vec![(0, 1), (1, 1)],
            vec![vec![1], vec![0, 1]],
        );
        let r = g.validate();
        assert!(!r.is_valid());
        assert_eq!(r.loops, vec![1]);
    }

    #[test]
    fn disjoint_edges_are_disconnected() {
        let g = InteractionGraph::from_parts_unchecked(
            vec![0, 1, 2, 3],
            vec![(0, 1), (2, 3)],
            vec![vec![1], vec![0], vec![3], vec![2]],
        );
        let r = g.validate();
        assert_eq!(r.components, 2);
        assert!(!r.is_connected());
        assert!(r.loops.is_empty() && r.asymmetric.is_empty());
    }

    #[test]
    fn asymmetric_adjacency_is_reported() {
        let g = InteractionGraph::from_parts_unchecked(
            vec![0, 1],
            vec![(0, 1)],
            vec![vec![1], vec![]],
        );
        assert_eq!(g.validate().asymmetric, vec![(0, 1)]);
    }

    #[test]
    fn labeled_construction_rejects_bad_input() {
        assert!(InteractionGraph::from_labeled(&[5, 9], &[[5, 5]]).is_err());
        assert!(InteractionGraph::from_labeled(&[5, 9], &[[5, 9], [9, 5]]).is_err());
        assert!(InteractionGraph::from_labeled(&[5, 9, 11], &[[5, 9]]).is_err());
        let g = InteractionGraph::from_labeled(&[5, 9, 11], &[[11, 9], [5, 9]]).unwrap();
        assert_eq!(g.edges(), &[(1, 2), (0, 1)]);
    }

    #[test]
    fn json_document_roundtrip() {
        let doc: GraphDocument =
            serde_json::from_str(r#"{"vertices": [0, 1, 2], "edges": [[0, 1], [1, 2]]}"#).unwrap();
        let g = doc.to_graph().unwrap();
        assert_eq!(GraphDocument::from_graph(&g), doc);
        assert!(serde_json::from_str::<GraphDocument>(r#"{"vertices": [0], "edges": [], "x": 1}"#).is_err());
    }

    proptest! {
        #[test]
        fn handshake_and_translation_invariance(
            dims in prop::collection::vec(1i64..4, 1..4),
            shift in -5i64..5,
        ) {
            let region: Vec<Range<i64>> = dims.iter().map(|&d| 0..d).collect();
            let moved: Vec<Range<i64>> = dims.iter().map(|&d| shift..shift + d).collect();
            let g = InteractionGraph::lattice_region(dims.len(), &region).unwrap();
            let h = InteractionGraph::lattice_region(dims.len(), &moved).unwrap();
            let degree_sum: usize = (0..g.num_vertices()).map(|v| g.neighbors(v).len()).sum();
            prop_assert_eq!(degree_sum, 2 * g.num_edges());
            prop_assert!(g.validate().is_valid());
            // Lexicographic numbering is the canonical relabeling.
            prop_assert_eq!(g.edges(), h.edges());
        }
    }
}
