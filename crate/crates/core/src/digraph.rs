//! Directed interaction graphs and their node decomposition.
//!
//! Arc convention: an arc `(j, i)` means *j influences i*, i.e. `j ∈ 𝒩ᵢ` and
//! `χᵢⱼ = 1`. Reachability, spanning trees and maximum nodes all follow the
//! direction of influence. Internally vertices are 0-based; the JSON graph
//! format ([`GraphFile`]) is 1-based.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// On-disk graph format: `{ "n": 3, "arcs": [[1, 2], [2, 3]] }` with 1-based
/// `[source, target]` pairs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    #[serde(default)]
    pub arcs: Vec<[usize; 2]>,
}

/// Immutable (0,1)-adjacency structure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Digraph {
    n: usize,
    /// `in_nbrs[i]` is 𝒩ᵢ, sorted ascending.
    in_nbrs: Vec<Vec<usize>>,
    /// `out_nbrs[j]` lists every `i` with `j ∈ 𝒩ᵢ`, sorted ascending.
    out_nbrs: Vec<Vec<usize>>,
}

impl Digraph {
    /// Builds a digraph from 0-based `(source, target)` arcs. Duplicate arcs
    /// collapse; self-loops and out-of-range vertices are rejected.
    pub fn new<I>(n: usize, arcs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n == 0 {
            return Err(Error::InvalidGraph("graph must have at least one vertex".into()));
        }
        let mut set = BTreeSet::new();
        for (j, i) in arcs {
            if j >= n || i >= n {
                return Err(Error::InvalidGraph(format!(
                    "arc ({j}, {i}) out of range for {n} vertices"
                )));
            }
            if j == i {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {j}")));
            }
            set.insert((j, i));
        }
        let mut in_nbrs = vec![Vec::new(); n];
        let mut out_nbrs = vec![Vec::new(); n];
        for &(j, i) in &set {
            in_nbrs[i].push(j);
            out_nbrs[j].push(i);
        }
        for v in in_nbrs.iter_mut().chain(out_nbrs.iter_mut()) {
            v.sort_unstable();
        }
        Ok(Self { n, in_nbrs, out_nbrs })
    }

    pub fn from_file(file: &GraphFile) -> Result<Self> {
        let mut arcs = Vec::with_capacity(file.arcs.len());
        for &[j, i] in &file.arcs {
            if j == 0 || i == 0 {
                return Err(Error::InvalidGraph(format!(
                    "arc [{j}, {i}] uses index 0; vertices are 1-based"
                )));
            }
            arcs.push((j - 1, i - 1));
        }
        Self::new(file.n, arcs)
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            n: self.n,
            arcs: self.arcs().map(|(j, i)| [j + 1, i + 1]).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let file: GraphFile = serde_json::from_str(&text)?;
        Self::from_file(&file)
    }

    /// Directed cycle `0 → 1 → … → n−1 → 0`.
    pub fn cycle(n: usize) -> Result<Self> {
        if n < 2 {
            return Self::new(n, std::iter::empty());
        }
        Self::new(n, (0..n).map(|j| (j, (j + 1) % n)))
    }

    /// Directed path `0 → 1 → … → n−1`.
    pub fn path(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (i - 1, i)))
    }

    /// Every ordered pair of distinct vertices.
    pub fn complete(n: usize) -> Result<Self> {
        Self::new(
            n,
            (0..n).flat_map(|j| (0..n).filter(move |&i| i != j).map(move |i| (j, i))),
        )
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// 𝒩ᵢ: vertices that influence `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.in_nbrs[i]
    }

    /// Vertices influenced by `j`.
    pub fn successors(&self, j: usize) -> &[usize] {
        &self.out_nbrs[j]
    }

    pub fn has_arc(&self, source: usize, target: usize) -> bool {
        self.in_nbrs[target].binary_search(&source).is_ok()
    }

    pub fn arc_count(&self) -> usize {
        self.in_nbrs.iter().map(Vec::len).sum()
    }

    /// Arcs as `(source, target)` in lexicographic order.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out_nbrs
            .iter()
            .enumerate()
            .flat_map(|(j, out)| out.iter().map(move |&i| (j, i)))
    }

    /// Vertices reachable from `root` along influence direction, `root` included.
    pub fn reachable_from(&self, root: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut stack = vec![root];
        seen[root] = true;
        while let Some(u) = stack.pop() {
            for &v in &self.out_nbrs[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

/// True iff some vertex reaches every other vertex.
pub fn has_spanning_tree(g: &Digraph) -> bool {
    spanning_tree_root(g).is_some()
}

/// Smallest vertex from which all others are reachable.
pub fn spanning_tree_root(g: &Digraph) -> Option<usize> {
    (0..g.len()).find(|&r| g.reachable_from(r).iter().all(|&x| x))
}

/// Maximal strongly connected components. Each component is sorted, and
/// components are ordered by their smallest vertex.
pub fn strongly_connected_components(g: &Digraph) -> Vec<Vec<usize>> {
    let n = g.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0usize;

    // (vertex, position in successor list)
    let mut call: Vec<(usize, usize)> = Vec::new();
    for start in 0..n {
        if index[start] != usize::MAX {
            continue;
        }
        call.push((start, 0));
        index[start] = next;
        low[start] = next;
        next += 1;
        stack.push(start);
        on_stack[start] = true;

        while let Some(top) = call.last_mut() {
            let v = top.0;
            let succ = g.successors(v);
            if top.1 < succ.len() {
                let w = succ[top.1];
                top.1 += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                comps.push(comp);
            }
        }
    }
    comps.sort_by_key(|c| c[0]);
    comps
}

/// Strongly connected components that receive no arc from outside
/// themselves (the sources of the condensation). Never empty.
pub fn maximum_nodes(g: &Digraph) -> Vec<Vec<usize>> {
    let comps = strongly_connected_components(g);
    let comp_of = component_index(g.len(), &comps);
    comps
        .iter()
        .enumerate()
        .filter(|(c, comp)| {
            comp.iter()
                .all(|&i| g.neighbors(i).iter().all(|&j| comp_of[j] == *c))
        })
        .map(|(_, comp)| comp.clone())
        .collect()
}

fn component_index(n: usize, comps: &[Vec<usize>]) -> Vec<usize> {
    let mut comp_of = vec![0; n];
    for (c, comp) in comps.iter().enumerate() {
        for &v in comp {
            comp_of[v] = c;
        }
    }
    comp_of
}

/// Layered decomposition `𝒢₀, …, 𝒢_d` obtained by repeatedly peeling the
/// maximum nodes of the remaining graph.
///
/// A peel step that yields several maximum nodes contributes one layer per
/// node, ordered by smallest vertex; those nodes do not influence each other,
/// so each is still a maximum node once its predecessors in the list are
/// removed. The raw peel levels are kept in [`NodeDecomposition::levels`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDecomposition {
    layers: Vec<Vec<usize>>,
    layer_of: Vec<usize>,
    levels: Vec<Vec<Vec<usize>>>,
}

/// Decomposition of a digraph that contains a spanning tree, so that `𝒢₀` is
/// its unique maximum node.
pub fn node_decomposition(g: &Digraph) -> Result<NodeDecomposition> {
    let dec = NodeDecomposition::peel(g);
    let roots = dec.levels[0].len();
    if roots != 1 {
        return Err(Error::NoSpanningTree { maximum_nodes: roots });
    }
    Ok(dec)
}

impl NodeDecomposition {
    /// Peels any digraph, with or without a spanning tree.
    pub fn peel(g: &Digraph) -> Self {
        let n = g.len();
        let comps = strongly_connected_components(g);
        let comp_of = component_index(n, &comps);
        let m = comps.len();

        // Condensation in-degrees (distinct source components).
        let mut preds: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); m];
        let mut succs: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); m];
        for (j, i) in g.arcs() {
            let (cj, ci) = (comp_of[j], comp_of[i]);
            if cj != ci {
                preds[ci].insert(cj);
                succs[cj].insert(ci);
            }
        }
        let mut indeg: Vec<usize> = preds.iter().map(BTreeSet::len).collect();
        let mut frontier: Vec<usize> = (0..m).filter(|&c| indeg[c] == 0).collect();
        let mut levels = Vec::new();
        while !frontier.is_empty() {
            frontier.sort_by_key(|&c| comps[c][0]);
            let mut next = Vec::new();
            for &c in &frontier {
                for &s in &succs[c] {
                    indeg[s] -= 1;
                    if indeg[s] == 0 {
                        next.push(s);
                    }
                }
            }
            levels.push(frontier.iter().map(|&c| comps[c].clone()).collect::<Vec<_>>());
            frontier = next;
        }

        let layers: Vec<Vec<usize>> = levels.iter().flatten().cloned().collect();
        let mut layer_of = vec![0; n];
        for (k, layer) in layers.iter().enumerate() {
            for &v in layer {
                layer_of[v] = k;
            }
        }
        Self { layers, layer_of, levels }
    }

    /// A single layer holding every vertex.
    pub fn trivial(n: usize) -> Self {
        Self {
            layers: vec![(0..n).collect()],
            layer_of: vec![0; n],
            levels: vec![vec![(0..n).collect()]],
        }
    }

    pub fn layers(&self) -> &[Vec<usize>] {
        &self.layers
    }

    pub fn layer(&self, k: usize) -> &[usize] {
        &self.layers[k]
    }

    /// Number of non-maximal layers; layers are indexed `0..=d`.
    pub fn d(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.layer_of.len()
    }

    pub fn layer_of(&self, v: usize) -> usize {
        self.layer_of[v]
    }

    /// `N_k = |𝒢_k|`.
    pub fn sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    /// `S_k = N_0 + … + N_k`.
    pub fn prefix_sums(&self) -> Vec<usize> {
        self.layers
            .iter()
            .scan(0, |acc, l| {
                *acc += l.len();
                Some(*acc)
            })
            .collect()
    }

    /// Peel levels before splitting: level `p` lists the maximum nodes of the
    /// graph with levels `0..p` removed.
    pub fn levels(&self) -> &[Vec<Vec<usize>>] {
        &self.levels
    }

    /// Checks the structural invariants against `g`, returning a description
    /// of the first failure.
    pub fn validate(&self, g: &Digraph) -> std::result::Result<(), String> {
        let n = g.len();
        if self.layer_of.len() != n {
            return Err(format!("covers {} vertices, graph has {n}", self.layer_of.len()));
        }
        let mut seen = vec![false; n];
        for layer in &self.layers {
            if layer.is_empty() {
                return Err("empty layer".into());
            }
            for &v in layer {
                if std::mem::replace(&mut seen[v], true) {
                    return Err(format!("vertex {v} appears twice"));
                }
            }
        }
        if let Some(v) = seen.iter().position(|&s| !s) {
            return Err(format!("vertex {v} not covered"));
        }
        for (j, i) in g.arcs() {
            if self.layer_of[j] > self.layer_of[i] {
                return Err(format!(
                    "arc {j}->{i} goes from layer {} back to layer {}",
                    self.layer_of[j], self.layer_of[i]
                ));
            }
        }
        for (k, layer) in self.layers.iter().enumerate() {
            let local: Vec<(usize, usize)> = g
                .arcs()
                .filter(|(j, i)| self.layer_of[*j] == k && self.layer_of[*i] == k)
                .map(|(j, i)| (pos(layer, j), pos(layer, i)))
                .collect();
            let sub = Digraph::new(layer.len(), local).map_err(|e| e.to_string())?;
            if strongly_connected_components(&sub).len() != 1 {
                return Err(format!("layer {k} is not strongly connected"));
            }
        }
        Ok(())
    }
}

fn pos(layer: &[usize], v: usize) -> usize {
    layer.binary_search(&v).expect("vertex in layer")
}
