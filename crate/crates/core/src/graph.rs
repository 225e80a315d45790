//! Weighted undirected co-authorship graph.
//!
//! Nodes are stored in ascending author-id order, so node indices and every
//! adjacency list iterate deterministically. Edge weight is the number of
//! distinct joint publications in the build range.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::Path;

use crate::corpus::{PublicationSource, YearRange};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoauthorGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    /// neighbor index and weight, sorted by neighbor index
    adj: Vec<Vec<(usize, u32)>>,
}

/// Builds the graph from every publication dated in `range`.
pub fn build_graph<S: PublicationSource + ?Sized>(source: &S, range: YearRange) -> CoauthorGraph {
    build_graph_filtered(source, range, None)
}

/// Like [`build_graph`], but only authors in `keep` become nodes; a paper
/// contributes edges among its kept authors only.
pub fn build_graph_restricted<S: PublicationSource + ?Sized>(
    source: &S,
    range: YearRange,
    keep: &BTreeSet<String>,
) -> CoauthorGraph {
    build_graph_filtered(source, range, Some(keep))
}

fn build_graph_filtered<S: PublicationSource + ?Sized>(
    source: &S,
    range: YearRange,
    keep: Option<&BTreeSet<String>>,
) -> CoauthorGraph {
    let mut nodes = BTreeSet::new();
    let mut weights: BTreeMap<(&str, &str), u32> = BTreeMap::new();
    let pubs = source.publications_in(range);
    for rec in &pubs {
        let mut authors: Vec<&str> = rec
            .author_ids
            .iter()
            .map(String::as_str)
            .filter(|a| keep.is_none_or(|k| k.contains(*a)))
            .collect();
        authors.sort_unstable();
        authors.dedup();
        for (i, &a) in authors.iter().enumerate() {
            nodes.insert(a);
            for &b in &authors[i + 1..] {
                *weights.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
    let mut g = CoauthorGraph::with_nodes(nodes.into_iter().map(str::to_string).collect());
    for ((a, b), w) in weights {
        let (i, j) = (g.index[a], g.index[b]);
        g.adj[i].push((j, w));
        g.adj[j].push((i, w));
    }
    for list in &mut g.adj {
        list.sort_unstable();
    }
    g
}

impl CoauthorGraph {
    fn with_nodes(mut nodes: Vec<String>) -> Self {
        nodes.sort();
        nodes.dedup();
        let index = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        let adj = vec![Vec::new(); nodes.len()];
        CoauthorGraph { nodes, index, adj }
    }

    /// Builds a graph from explicit weighted edges plus optional isolated
    /// nodes. Repeated edges accumulate weight; self-loops are ignored.
    pub fn from_edges<'a>(
        edges: impl IntoIterator<Item = (&'a str, &'a str, u32)>,
        isolated: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        let mut nodes = BTreeSet::new();
        let mut weights: BTreeMap<(&str, &str), u32> = BTreeMap::new();
        for (a, b, w) in edges {
            nodes.insert(a);
            nodes.insert(b);
            if a == b || w == 0 {
                continue;
            }
            let key = if a < b { (a, b) } else { (b, a) };
            *weights.entry(key).or_insert(0) += w;
        }
        nodes.extend(isolated);
        let mut g = CoauthorGraph::with_nodes(nodes.into_iter().map(str::to_string).collect());
        for ((a, b), w) in weights {
            let (i, j) = (g.index[a], g.index[b]);
            g.adj[i].push((j, w));
            g.adj[j].push((i, w));
        }
        for list in &mut g.adj {
            list.sort_unstable();
        }
        g
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn contains(&self, author: &str) -> bool {
        self.index.contains_key(author)
    }

    pub fn index_of(&self, author: &str) -> Result<usize> {
        self.index
            .get(author)
            .copied()
            .ok_or_else(|| Error::AbsentNode(author.to_string()))
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.nodes[idx]
    }

    /// Neighbors of node `idx` with edge weights, ascending by index.
    pub fn neighbors(&self, idx: usize) -> &[(usize, u32)] {
        &self.adj[idx]
    }

    pub fn degree_of(&self, idx: usize) -> usize {
        self.adj[idx].len()
    }

    pub fn weighted_degree_of(&self, idx: usize) -> u64 {
        self.adj[idx].iter().map(|&(_, w)| u64::from(w)).sum()
    }

    pub fn weight_between(&self, i: usize, j: usize) -> Option<u32> {
        self.adj[i]
            .binary_search_by_key(&j, |&(n, _)| n)
            .ok()
            .map(|pos| self.adj[i][pos].1)
    }

    pub fn degree(&self, author: &str) -> Result<usize> {
        Ok(self.degree_of(self.index_of(author)?))
    }

    /// Sum of edge weights incident to `author`.
    pub fn weighted_degree(&self, author: &str) -> Result<u64> {
        Ok(self.weighted_degree_of(self.index_of(author)?))
    }

    pub fn weight(&self, a: &str, b: &str) -> Result<Option<u32>> {
        Ok(self.weight_between(self.index_of(a)?, self.index_of(b)?))
    }

    pub fn has_edge(&self, a: &str, b: &str) -> Result<bool> {
        Ok(self.weight(a, b)?.is_some())
    }

    /// Unweighted BFS distance between node indices; `None` when unreachable.
    /// With `exclude_direct` the edge between the endpoints is ignored.
    pub fn distance(&self, source: usize, target: usize, exclude_direct: bool) -> Option<usize> {
        if source == target {
            return Some(0);
        }
        let mut dist = vec![usize::MAX; self.nodes.len()];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adj[u] {
                if dist[v] != usize::MAX {
                    continue;
                }
                if exclude_direct && u == source && v == target {
                    continue;
                }
                dist[v] = dist[u] + 1;
                if v == target {
                    return Some(dist[v]);
                }
                queue.push_back(v);
            }
        }
        None
    }

    /// BFS path length between two distinct authors; `Ok(None)` when no path.
    pub fn shortest_path_len(&self, a: &str, b: &str, exclude_direct: bool) -> Result<Option<usize>> {
        if a == b {
            return Err(Error::SameNode(a.to_string()));
        }
        let (i, j) = (self.index_of(a)?, self.index_of(b)?);
        Ok(self.distance(i, j, exclude_direct))
    }

    pub fn connected(&self, a: &str, b: &str) -> Result<bool> {
        let (i, j) = (self.index_of(a)?, self.index_of(b)?);
        Ok(self.distance(i, j, false).is_some())
    }

    /// Connected-component label per node index; labels are assigned in
    /// ascending order of each component's smallest node index.
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.nodes.len()];
        let mut next = 0;
        for start in 0..self.nodes.len() {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            let mut stack = vec![start];
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adj[u] {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// Edges as (a, b, weight) with a < b, sorted lexicographically.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.adj.iter().enumerate().flat_map(move |(i, list)| {
            list.iter()
                .filter(move |&&(j, _)| i < j)
                .map(move |&(j, w)| (self.nodes[i].as_str(), self.nodes[j].as_str(), w))
        })
    }

    pub fn write_edge_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["author_a", "author_b", "weight"])?;
        for (a, b, weight) in self.edges() {
            w.write_record([a, b, weight.to_string().as_str()])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }
}
