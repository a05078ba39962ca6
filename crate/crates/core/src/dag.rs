//! The known causal graph shared by source and target domains.

use std::collections::{HashMap, HashSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A directed acyclic graph over named nodes.
///
/// Parent lists are kept sorted. `topo_order` lists node indices so that every
/// parent precedes its children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DagSpec {
    names: Vec<String>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topo_order: Vec<usize>,
}

/// On-disk form: `{"nodes": [...], "edges": [[parent, child], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct DagFile {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
}

impl DagSpec {
    /// Builds a DAG from node names and `(parent, child)` index pairs.
    ///
    /// The topological order is computed with Kahn's algorithm, breaking ties
    /// by node index so the result is deterministic.
    pub fn new(names: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let p = names.len();
        if p == 0 {
            return Err(Error::InvalidDag("graph has no nodes".into()));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidDag(format!("duplicate node name `{name}`")));
            }
        }
        let mut parents = vec![Vec::new(); p];
        for &(from, to) in edges {
            if from >= p || to >= p {
                return Err(Error::InvalidDag(format!("edge ({from}, {to}) out of range")));
            }
            if from == to {
                return Err(Error::InvalidDag(format!("self-loop on `{}`", names[from])));
            }
            if parents[to].contains(&from) {
                return Err(Error::InvalidDag(format!(
                    "duplicate edge {} -> {}",
                    names[from], names[to]
                )));
            }
            parents[to].push(from);
        }
        for list in &mut parents {
            list.sort_unstable();
        }
        let topo_order = kahn_order(&parents)
            .ok_or_else(|| Error::InvalidDag("graph contains a cycle".into()))?;
        Ok(Self::assemble(names, parents, topo_order))
    }

    /// Builds a DAG from name-keyed edges.
    pub fn from_named_edges(names: Vec<String>, edges: &[(String, String)]) -> Result<Self> {
        let index: HashMap<&str, usize> =
            names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut idx_edges = Vec::with_capacity(edges.len());
        for (from, to) in edges {
            let f = *index.get(from.as_str()).ok_or_else(|| Error::UnknownNode(from.clone()))?;
            let t = *index.get(to.as_str()).ok_or_else(|| Error::UnknownNode(to.clone()))?;
            idx_edges.push((f, t));
        }
        Self::new(names, &idx_edges)
    }

    /// Assembles a DAG from explicit parts without checking them. Use
    /// [`validate_topological_order`] to test the result.
    pub fn from_parts_unchecked(
        names: Vec<String>,
        parents: Vec<Vec<usize>>,
        topo_order: Vec<usize>,
    ) -> Self {
        Self::assemble(names, parents, topo_order)
    }

    fn assemble(names: Vec<String>, parents: Vec<Vec<usize>>, topo_order: Vec<usize>) -> Self {
        let mut children = vec![Vec::new(); names.len()];
        for (child, ps) in parents.iter().enumerate() {
            for &parent in ps {
                if parent < children.len() {
                    children[parent].push(child);
                }
            }
        }
        Self {
            names,
            parents,
            children,
            topo_order,
        }
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, node: usize) -> &str {
        &self.names[node]
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    pub fn is_root(&self, node: usize) -> bool {
        self.parents[node].is_empty()
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&k| self.is_root(k)).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, parent: usize, child: usize) -> bool {
        self.parents[child].binary_search(&parent).is_ok()
    }

    /// All `(parent, child)` pairs, ordered by child then parent.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(child, ps)| ps.iter().map(move |&p| (p, child)))
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    /// Ancestors of `node`, excluding the node itself.
    pub fn ancestors(&self, node: usize) -> Vec<usize> {
        let mut seen = vec![false; self.node_count()];
        let mut queue: VecDeque<usize> = self.parents[node].iter().copied().collect();
        while let Some(k) = queue.pop_front() {
            if !seen[k] {
                seen[k] = true;
                queue.extend(self.parents[k].iter().copied());
            }
        }
        (0..self.node_count()).filter(|&k| seen[k]).collect()
    }

    /// True when `i` and `j` are adjacent or share a child (moral-graph edge).
    pub fn moral_adjacent(&self, i: usize, j: usize) -> bool {
        if i == j || self.has_edge(i, j) || self.has_edge(j, i) {
            return true;
        }
        self.children[i].iter().any(|c| self.children[j].contains(c))
    }

    pub fn to_file(&self) -> DagFile {
        DagFile {
            nodes: self.names.clone(),
            edges: self
                .edges()
                .into_iter()
                .map(|(p, c)| (self.names[p].clone(), self.names[c].clone()))
                .collect(),
        }
    }

    pub fn from_file(file: &DagFile) -> Result<Self> {
        Self::from_named_edges(file.nodes.clone(), &file.edges)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: DagFile = serde_json::from_str(&text)?;
        Self::from_file(&file)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_file())?)?;
        Ok(())
    }
}

fn kahn_order(parents: &[Vec<usize>]) -> Option<Vec<usize>> {
    let p = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); p];
    for (child, ps) in parents.iter().enumerate() {
        for &parent in ps {
            children[parent].push(child);
        }
    }
    let mut ready: std::collections::BTreeSet<usize> =
        (0..p).filter(|&k| indegree[k] == 0).collect();
    let mut order = Vec::with_capacity(p);
    while let Some(k) = ready.pop_first() {
        order.push(k);
        for &c in &children[k] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    (order.len() == p).then_some(order)
}

/// True iff `topo_order` is a permutation of the nodes, parent lists are free
/// of duplicates and self-loops, and every parent precedes its child.
pub fn validate_topological_order(dag: &DagSpec) -> bool {
    let p = dag.node_count();
    if dag.topo_order.len() != p || dag.parents.len() != p {
        return false;
    }
    let mut position = vec![usize::MAX; p];
    for (pos, &node) in dag.topo_order.iter().enumerate() {
        if node >= p || position[node] != usize::MAX {
            return false;
        }
        position[node] = pos;
    }
    for (child, ps) in dag.parents.iter().enumerate() {
        let mut seen = HashSet::new();
        for &parent in ps {
            if parent >= p || parent == child || !seen.insert(parent) {
                return false;
            }
            if position[parent] >= position[child] {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("X{i}")).collect()
    }

    #[test]
    fn chain_order_checks() {
        let good = DagSpec::from_parts_unchecked(names(2), vec![vec![], vec![0]], vec![0, 1]);
        assert!(validate_topological_order(&good));
        let bad = DagSpec::from_parts_unchecked(names(2), vec![vec![], vec![0]], vec![1, 0]);
        assert!(!validate_topological_order(&bad));
    }

    #[test]
    fn three_cycle_rejected() {
        let cyc = DagSpec::from_parts_unchecked(
            names(3),
            vec![vec![2], vec![0], vec![1]],
            vec![0, 1, 2],
        );
        assert!(!validate_topological_order(&cyc));
        assert!(DagSpec::new(names(3), &[(0, 1), (1, 2), (2, 0)]).is_err());
    }

    #[test]
    fn self_loops_and_duplicates_rejected() {
        assert!(DagSpec::new(names(2), &[(1, 1)]).is_err());
        assert!(DagSpec::new(names(2), &[(0, 1), (0, 1)]).is_err());
        let dup = DagSpec::from_parts_unchecked(names(2), vec![vec![], vec![0, 0]], vec![0, 1]);
        assert!(!validate_topological_order(&dup));
    }

    #[test]
    fn json_round_trip_keeps_structure() {
        let dag = DagSpec::new(names(4), &[(0, 2), (1, 2), (2, 3)]).unwrap();
        let text = serde_json::to_string(&dag.to_file()).unwrap();
        let back = DagSpec::from_file(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(dag, back);
        assert!(validate_topological_order(&back));
    }

    #[test]
    fn moral_adjacency() {
        // 0 -> 2 <- 1, 2 -> 3
        let dag = DagSpec::new(names(4), &[(0, 2), (1, 2), (2, 3)]).unwrap();
        assert!(dag.moral_adjacent(0, 1));
        assert!(!dag.moral_adjacent(0, 3));
        assert_eq!(dag.ancestors(3), vec![0, 1, 2]);
    }
}
