//! Bus-branch graph algorithms: chordal extension by greedy minimum-degree
//! elimination, maximal clique enumeration, and cycle bases.

use crate::net::Network;
use std::collections::BTreeSet;

/// Simple undirected graph over internal bus indices.
///
/// Parallel branches collapse to a single edge; self-loops are rejected at
/// network validation. `root` is the slack bus and anchors spanning trees.
#[derive(Debug, Clone)]
pub struct BusGraph {
    n: usize,
    adj: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
    root: usize,
}

/// Maximal clique of the chordal extension; members sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clique {
    pub index: usize,
    pub members: Vec<usize>,
}

impl Clique {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// All unordered member pairs (a < b).
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let m = &self.members;
        (0..m.len()).flat_map(move |i| (i + 1..m.len()).map(move |j| (m[i], m[j])))
    }
}

/// Closed bus sequence; the edge from the last bus back to the first closes
/// the cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cycle {
    pub index: usize,
    pub buses: Vec<usize>,
}

impl Cycle {
    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }

    /// Oriented edges (u, w) around the cycle, including the closing edge.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let b = &self.buses;
        (0..b.len()).map(move |i| (b[i], b[(i + 1) % b.len()]))
    }

    /// Same cycle walked in the opposite direction.
    pub fn reversed(&self) -> Cycle {
        let mut buses = self.buses.clone();
        buses[1..].reverse();
        Cycle { index: self.index, buses }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("graph is disconnected ({0} of {1} vertices reachable)")]
    Disconnected(usize, usize),
    #[error("graph with ordering is not chordal: eliminating {0} leaves non-adjacent later neighbors {1} and {2}")]
    NotChordal(usize, usize, usize),
    #[error("clique member {0} out of range")]
    BadClique(usize),
}

impl BusGraph {
    /// Builds a simple graph from explicit edges.
    pub fn from_edges(n: usize, list: &[(usize, usize)], root: usize) -> Result<Self, GraphError> {
        let mut set = BTreeSet::new();
        for &(a, b) in list {
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for l in &mut adj {
            l.sort_unstable();
        }
        let g = BusGraph { n, adj, edges, root };
        let reach = g.reachable(root);
        if reach != n {
            return Err(GraphError::Disconnected(reach, n));
        }
        Ok(g)
    }

    fn reachable(&self, start: usize) -> usize {
        if self.n == 0 {
            return 0;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![start];
        seen[start] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical edge list, sorted ascending.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Breadth-first spanning tree from the root: parent of each vertex
    /// (root's parent is itself) in BFS order with sorted neighbor visits.
    pub fn bfs_tree(&self) -> Vec<usize> {
        let mut parent = vec![usize::MAX; self.n];
        parent[self.root] = self.root;
        let mut queue = std::collections::VecDeque::from([self.root]);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                if parent[v] == usize::MAX {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        parent
    }
}

/// Deduplicated bus graph of a network.
pub fn build_graph(net: &Network) -> Result<BusGraph, GraphError> {
    let list: Vec<_> = (0..net.n_branches()).map(|k| net.branch_ends(k)).collect();
    BusGraph::from_edges(net.n_buses(), &list, net.slack())
}

/// Chordal extension by greedy minimum-degree elimination.
///
/// Returns the extended graph (original edges plus fill-in) and the
/// elimination ordering, which is a perfect elimination ordering of the
/// extension. Ties break on the smaller vertex index.
pub fn chordal_extension(g: &BusGraph) -> (BusGraph, Vec<usize>) {
    let n = g.n_vertices();
    let mut work: Vec<BTreeSet<usize>> = (0..n)
        .map(|v| g.neighbors(v).iter().copied().collect())
        .collect();
    let mut alive: BTreeSet<usize> = (0..n).collect();
    let mut order = Vec::with_capacity(n);
    let mut all_edges: BTreeSet<(usize, usize)> = g.edges().iter().copied().collect();
    while !alive.is_empty() {
        let &v = alive
            .iter()
            .min_by_key(|&&u| (work[u].len(), u))
            .unwrap();
        order.push(v);
        let nbrs: Vec<usize> = work[v].iter().copied().collect();
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                if work[a].insert(b) {
                    work[b].insert(a);
                    all_edges.insert((a.min(b), a.max(b)));
                }
            }
        }
        for &u in &nbrs {
            work[u].remove(&v);
        }
        work[v].clear();
        alive.remove(&v);
    }
    let edges: Vec<_> = all_edges.into_iter().collect();
    let chordal = BusGraph::from_edges(n, &edges, g.root()).expect("extension preserves connectivity");
    (chordal, order)
}

/// Maximal cliques of a chordal graph given its perfect elimination ordering.
///
/// Each vertex contributes the candidate {v} union its later neighbors;
/// non-maximal candidates are filtered. Cliques are indexed by smallest
/// member, then lexicographically.
pub fn maximal_cliques(chordal: &BusGraph, ordering: &[usize]) -> Result<Vec<Clique>, GraphError> {
    let n = chordal.n_vertices();
    let mut pos = vec![usize::MAX; n];
    for (p, &v) in ordering.iter().enumerate() {
        pos[v] = p;
    }
    let mut candidates: Vec<Vec<usize>> = Vec::with_capacity(n);
    for &v in ordering {
        let later: Vec<usize> = chordal
            .neighbors(v)
            .iter()
            .copied()
            .filter(|&u| pos[u] > pos[v])
            .collect();
        // perfect elimination check: later neighbors must be pairwise adjacent
        for (i, &a) in later.iter().enumerate() {
            for &b in &later[i + 1..] {
                if !chordal.has_edge(a, b) {
                    return Err(GraphError::NotChordal(v, a, b));
                }
            }
        }
        let mut c = later;
        c.push(v);
        c.sort_unstable();
        candidates.push(c);
    }
    let mut cliques: Vec<Vec<usize>> = Vec::new();
    'outer: for c in candidates {
        for other in &cliques {
            if c.len() <= other.len() && c.iter().all(|v| other.binary_search(v).is_ok()) {
                continue 'outer;
            }
        }
        cliques.retain(|other| {
            !(other.len() < c.len() && other.iter().all(|v| c.binary_search(v).is_ok()))
        });
        cliques.push(c);
    }
    cliques.sort();
    cliques.dedup();
    Ok(cliques
        .into_iter()
        .enumerate()
        .map(|(index, members)| Clique { index, members })
        .collect())
}

/// Fundamental cycle basis from the BFS spanning tree rooted at the slack.
///
/// One cycle per non-tree edge (a, b), walked a -> tree path -> b with the
/// non-tree edge closing it; indexed by canonical non-tree edge order.
pub fn cycle_basis(g: &BusGraph) -> Vec<Cycle> {
    let parent = g.bfs_tree();
    let mut depth = vec![0usize; g.n_vertices()];
    // parents are assigned in BFS order, so a sweep in discovery order works;
    // recompute depths by chasing parents to stay order-independent
    for v in 0..g.n_vertices() {
        let mut d = 0;
        let mut u = v;
        while parent[u] != u {
            u = parent[u];
            d += 1;
        }
        depth[v] = d;
    }
    let tree: BTreeSet<(usize, usize)> = (0..g.n_vertices())
        .filter(|&v| parent[v] != v)
        .map(|v| (v.min(parent[v]), v.max(parent[v])))
        .collect();
    let mut cycles = Vec::new();
    for &(a, b) in g.edges() {
        if tree.contains(&(a, b)) {
            continue;
        }
        // climb to the common ancestor
        let (mut u, mut v) = (a, b);
        let mut left = vec![u];
        let mut right = vec![v];
        while depth[u] > depth[v] {
            u = parent[u];
            left.push(u);
        }
        while depth[v] > depth[u] {
            v = parent[v];
            right.push(v);
        }
        while u != v {
            u = parent[u];
            v = parent[v];
            left.push(u);
            right.push(v);
        }
        right.pop(); // drop duplicate ancestor
        right.reverse();
        left.extend(right);
        cycles.push(Cycle { index: cycles.len(), buses: left });
    }
    cycles
}

/// All chordless cycles of length <= `max_len`, deduplicated up to rotation
/// and reflection, in deterministic order.
///
/// Canonical form: the cycle starts at its smallest vertex and its second
/// vertex is smaller than its last.
pub fn enumerate_chordless_cycles(g: &BusGraph, max_len: usize) -> Vec<Cycle> {
    let mut out = Vec::new();
    let n = g.n_vertices();
    let mut path = Vec::new();
    let mut on_path = vec![false; n];
    for start in 0..n {
        path.clear();
        path.push(start);
        on_path[start] = true;
        extend(g, start, max_len, &mut path, &mut on_path, &mut out);
        on_path[start] = false;
    }
    for (i, c) in out.iter_mut().enumerate() {
        c.index = i;
    }
    out
}

fn extend(
    g: &BusGraph,
    start: usize,
    max_len: usize,
    path: &mut Vec<usize>,
    on_path: &mut Vec<bool>,
    out: &mut Vec<Cycle>,
) {
    let last = *path.last().unwrap();
    for &next in g.neighbors(last) {
        if next <= start || on_path[next] {
            continue;
        }
        // chordless: `next` may touch the path only at `last` (and possibly
        // at `start`, which closes the cycle)
        let mut closes = false;
        let mut chord = false;
        for &p in path.iter() {
            if p == last {
                continue;
            }
            if g.has_edge(next, p) {
                if p == start {
                    closes = true;
                } else {
                    chord = true;
                    break;
                }
            }
        }
        if chord {
            continue;
        }
        if closes {
            if path.len() + 1 >= 3 && path.len() + 1 <= max_len && path[1] < next {
                let mut buses = path.clone();
                buses.push(next);
                out.push(Cycle { index: 0, buses });
            }
            // a vertex adjacent to start would leave a chord if extended past
            continue;
        }
        if path.len() + 1 >= max_len {
            continue;
        }
        path.push(next);
        on_path[next] = true;
        extend(g, start, max_len, path, on_path, out);
        on_path[next] = false;
        path.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> BusGraph {
        BusGraph::from_edges(n, edges, 0).unwrap()
    }

    #[test]
    fn triangle_basics() {
        let g = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(g.n_vertices(), 3);
        assert_eq!(g.n_edges(), 3);
        let (ch, ord) = chordal_extension(&g);
        assert_eq!(ch.n_edges(), 3);
        let cl = maximal_cliques(&ch, &ord).unwrap();
        assert_eq!(cl.len(), 1);
        assert_eq!(cl[0].members, vec![0, 1, 2]);
        let cycles = cycle_basis(&g);
        assert_eq!(cycles.len(), 1);
        assert_eq!(cycles[0].len(), 3);
    }

    #[test]
    fn parallel_edges_collapse() {
        let g = graph(2, &[(0, 1), (1, 0)]);
        assert_eq!(g.n_edges(), 1);
    }

    #[test]
    fn four_cycle_gets_exactly_one_chord() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        let (ch, ord) = chordal_extension(&g);
        assert_eq!(ch.n_edges(), 5);
        let cl = maximal_cliques(&ch, &ord).unwrap();
        assert_eq!(cl.len(), 2);
        assert!(cl.iter().all(|c| c.len() == 3));
    }

    #[test]
    fn trees_are_already_chordal() {
        let g = graph(5, &[(0, 1), (1, 2), (1, 3), (3, 4)]);
        let (ch, ord) = chordal_extension(&g);
        assert_eq!(ch.n_edges(), 4);
        let cl = maximal_cliques(&ch, &ord).unwrap();
        assert_eq!(cl.len(), 4);
        assert!(cl.iter().all(|c| c.len() == 2));
        assert!(cycle_basis(&g).is_empty());
    }

    #[test]
    fn path_cliques_are_edges() {
        let g = graph(3, &[(0, 1), (1, 2)]);
        let (ch, ord) = chordal_extension(&g);
        let cl = maximal_cliques(&ch, &ord).unwrap();
        assert_eq!(cl.len(), 2);
        assert_eq!(cl[0].members, vec![0, 1]);
        assert_eq!(cl[1].members, vec![1, 2]);
    }

    #[test]
    fn chorded_square_cliques() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)]);
        let (ch, ord) = chordal_extension(&g);
        assert_eq!(ch.n_edges(), 5);
        let cl = maximal_cliques(&ch, &ord).unwrap();
        assert_eq!(cl.len(), 2);
        assert_eq!(cl[0].members, vec![0, 1, 2]);
        assert_eq!(cl[1].members, vec![0, 2, 3]);
    }

    #[test]
    fn non_chordal_input_detected() {
        let square = graph(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        let bad_order = vec![0, 1, 2, 3];
        assert!(matches!(
            maximal_cliques(&square, &bad_order),
            Err(GraphError::NotChordal(_, _, _))
        ));
    }

    #[test]
    fn k4_chordless_cycles() {
        let g = graph(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        let tri = enumerate_chordless_cycles(&g, 3);
        assert_eq!(tri.len(), 4);
        let four = enumerate_chordless_cycles(&g, 4);
        assert_eq!(four.len(), 4); // no chordless 4-cycles in K4
    }

    #[test]
    fn square_chordless_cycles() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        assert!(enumerate_chordless_cycles(&g, 3).is_empty());
        let four = enumerate_chordless_cycles(&g, 4);
        assert_eq!(four.len(), 1);
        assert_eq!(four[0].buses, vec![0, 1, 2, 3]);
    }

    #[test]
    fn basis_count_and_gf2_rank_on_random_graphs() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for trial in 0..40 {
            let n = rng.random_range(4..=12);
            // random spanning tree plus extra edges keeps it connected
            let mut edges = Vec::new();
            for v in 1..n {
                edges.push((rng.random_range(0..v), v));
            }
            for _ in 0..rng.random_range(0..=n) {
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                if a != b {
                    edges.push((a.min(b), a.max(b)));
                }
            }
            let g = graph(n, &edges);
            let cycles = cycle_basis(&g);
            assert_eq!(
                cycles.len(),
                g.n_edges() - n + 1,
                "trial {trial}: basis size must be |E| - |V| + 1"
            );
            // GF(2) rank of the cycle-edge incidence vectors equals the count
            let edge_pos: std::collections::HashMap<(usize, usize), usize> =
                g.edges().iter().copied().enumerate().map(|(i, e)| (e, i)).collect();
            let mut rows: Vec<Vec<bool>> = cycles
                .iter()
                .map(|c| {
                    let mut row = vec![false; g.n_edges()];
                    for (u, w) in c.edges() {
                        row[edge_pos[&(u.min(w), u.max(w))]] ^= true;
                    }
                    row
                })
                .collect();
            let mut rank = 0;
            for col in 0..g.n_edges() {
                if let Some(p) = (rank..rows.len()).find(|&r| rows[r][col]) {
                    rows.swap(rank, p);
                    let pivot = rows[rank].clone();
                    for (r, row) in rows.iter_mut().enumerate() {
                        if r != rank && row[col] {
                            for (x, p) in row.iter_mut().zip(&pivot) {
                                *x ^= p;
                            }
                        }
                    }
                    rank += 1;
                }
            }
            assert_eq!(rank, cycles.len(), "trial {trial}: cycles must be independent");
            // every cycle is closed and walks real edges
            for c in &cycles {
                for (u, w) in c.edges() {
                    assert!(g.has_edge(u, w));
                }
            }
        }
    }

    #[test]
    fn chordal_extension_is_supergraph_and_covers() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(4..=14);
            let mut edges = Vec::new();
            for v in 1..n {
                edges.push((rng.random_range(0..v), v));
            }
            for _ in 0..rng.random_range(0..=2 * n) {
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                if a != b {
                    edges.push((a.min(b), a.max(b)));
                }
            }
            let g = graph(n, &edges);
            let (ch, ord) = chordal_extension(&g);
            for e in g.edges() {
                assert!(ch.has_edge(e.0, e.1));
            }
            let cliques = maximal_cliques(&ch, &ord).unwrap();
            let mut covered = vec![false; n];
            for c in &cliques {
                for &v in &c.members {
                    covered[v] = true;
                }
                for (a, b) in c.pairs() {
                    assert!(ch.has_edge(a, b), "clique members must be adjacent");
                }
            }
            assert!(covered.iter().all(|&c| c), "cliques must cover all vertices");
            // every original edge lies inside some clique
            for &(a, b) in g.edges() {
                assert!(cliques.iter().any(|c| {
                    c.members.binary_search(&a).is_ok() && c.members.binary_search(&b).is_ok()
                }));
            }
        }
    }

    #[test]
    fn cycle_reversal_flips_orientation() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        let c = &cycle_basis(&g)[0];
        let r = c.reversed();
        let mut fwd: Vec<_> = c.edges().collect();
        let rev: Vec<_> = r.edges().map(|(u, w)| (w, u)).collect();
        fwd.sort_unstable();
        let mut rev = rev;
        rev.sort_unstable();
        assert_eq!(fwd, rev);
    }
}
