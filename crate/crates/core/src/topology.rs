//! Backbone construction and static graph quantities.
//!
//! Station `(i, j)` of an `edge_len x edge_len` lattice sits at the planar
//! point `(i, j)` and has id `i * edge_len + j`. Its "right" neighbour is
//! `(i + 1, j)` and its "down" neighbour is `(i, j + 1)`.

use std::collections::{BTreeMap, VecDeque};
use std::io::{self, Write};

use rand::Rng;

use crate::error::{Error, Result};

/// Sentinel for "no path" in the hop table.
const UNREACHABLE: u8 = u8::MAX;

/// Largest supported lattice side; keeps every hop count below [`UNREACHABLE`].
pub const MAX_EDGE_LEN: usize = 128;

/// Undirected simple graph stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<u32>>,
}

impl Graph {
    /// Builds a simple graph on `n` nodes. Duplicate links collapse into one;
    /// self-loops are rejected.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidParameter(format!("link ({a}, {b}) references a node outside 0..{n}")));
            }
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop at node {a}")));
            }
            adjacency[a].push(b as u32);
            adjacency[b].push(a as u32);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { adjacency })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn link_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    /// All undirected links as `(low, high)` pairs in ascending order.
    pub fn links(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.link_count());
        for (a, list) in self.adjacency.iter().enumerate() {
            for &b in list {
                if (b as usize) > a {
                    out.push((a, b as usize));
                }
            }
        }
        out
    }

    /// Hop distances from `source` to every node; `None` where unreachable.
    pub fn bfs_from(&self, source: usize) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.node_count()];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            let d = dist[v].unwrap_or(0);
            for &w in &self.adjacency[v] {
                let w = w as usize;
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// All-pairs hop distances by one breadth-first search per node.
    pub fn distance_table(&self) -> Result<DistanceTable> {
        let n = self.node_count();
        let mut hops = vec![UNREACHABLE; n * n];
        let mut queue = VecDeque::with_capacity(n);
        for s in 0..n {
            let row = &mut hops[s * n..(s + 1) * n];
            row[s] = 0;
            queue.clear();
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                let d = row[v];
                for &w in &self.adjacency[v] {
                    let w = w as usize;
                    if row[w] == UNREACHABLE {
                        if d + 1 == UNREACHABLE {
                            return Err(Error::InvalidParameter(format!(
                                "hop distance from {s} exceeds {}",
                                UNREACHABLE - 1
                            )));
                        }
                        row[w] = d + 1;
                        queue.push_back(w);
                    }
                }
            }
            if let Some(t) = row.iter().position(|&h| h == UNREACHABLE) {
                return Err(Error::Disconnected { from: s, to: t });
            }
        }
        Ok(DistanceTable { n, hops })
    }

    pub fn is_connected(&self) -> bool {
        self.node_count() == 0 || self.bfs_from(0).iter().all(Option::is_some)
    }

    /// Shortest-path betweenness of every node, counting ordered source/target
    /// pairs and excluding endpoints. Brandes' dependency accumulation over the
    /// BFS shortest-path DAG of each source.
    pub fn betweenness(&self) -> Result<Vec<f64>> {
        let n = self.node_count();
        let mut centrality = vec![0.0; n];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![u32::MAX; n];
        let mut delta = vec![0.0f64; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::with_capacity(n);

        for s in 0..n {
            sigma.iter_mut().for_each(|x| *x = 0.0);
            dist.iter_mut().for_each(|x| *x = u32::MAX);
            delta.iter_mut().for_each(|x| *x = 0.0);
            order.clear();

            sigma[s] = 1.0;
            dist[s] = 0;
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                order.push(v);
                for &w in &self.adjacency[v] {
                    let w = w as usize;
                    if dist[w] == u32::MAX {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                    if dist[w] == dist[v] + 1 {
                        sigma[w] += sigma[v];
                    }
                }
            }
            if order.len() != n {
                let to = (0..n).find(|&t| dist[t] == u32::MAX).unwrap_or(0);
                return Err(Error::Disconnected { from: s, to });
            }

            // Predecessors of w are the neighbours one hop closer to s.
            for &w in order.iter().rev() {
                let coeff = (1.0 + delta[w]) / sigma[w];
                for &v in &self.adjacency[w] {
                    let v = v as usize;
                    if dist[v] + 1 == dist[w] {
                        delta[v] += sigma[v] * coeff;
                    }
                }
                if w != s {
                    centrality[w] += delta[w];
                }
            }
        }
        Ok(centrality)
    }

    /// Normalised histogram of node degrees, keyed by degree.
    pub fn degree_distribution(&self) -> BTreeMap<usize, f64> {
        let mut counts = BTreeMap::new();
        for list in &self.adjacency {
            *counts.entry(list.len()).or_insert(0usize) += 1;
        }
        let n = self.node_count().max(1) as f64;
        counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect()
    }

    /// Writes one line per node: `<id> <neighbor> <neighbor> ...`.
    pub fn write_adjacency<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (id, list) in self.adjacency.iter().enumerate() {
            write!(out, "{id}")?;
            for nb in list {
                write!(out, " {nb}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Dense all-pairs hop table, one byte per pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceTable {
    n: usize,
    hops: Vec<u8>,
}

impl DistanceTable {
    #[inline]
    pub fn get(&self, s: usize, t: usize) -> u32 {
        u32::from(self.hops[s * self.n + t])
    }

    /// Row of distances from `s`.
    #[inline]
    pub fn row(&self, s: usize) -> &[u8] {
        &self.hops[s * self.n..(s + 1) * self.n]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Station graph laid out on a square lattice.
#[derive(Debug, Clone)]
pub struct Backbone {
    edge_len: usize,
    graph: Graph,
    dist: Option<DistanceTable>,
}

impl Backbone {
    /// Square lattice with `edge_len` stations per side and unit links.
    pub fn build_lattice(edge_len: usize) -> Result<Self> {
        if edge_len < 2 {
            return Err(Error::InvalidParameter(format!("lattice edge length must be at least 2, got {edge_len}")));
        }
        if edge_len > MAX_EDGE_LEN {
            return Err(Error::InvalidParameter(format!(
                "lattice edge length {edge_len} exceeds the supported maximum of {MAX_EDGE_LEN}"
            )));
        }
        let point = |i: usize, j: usize| i * edge_len + j;
        let mut edges = Vec::with_capacity(2 * edge_len * (edge_len - 1));
        for i in 0..edge_len {
            for j in 0..edge_len {
                if i + 1 < edge_len {
                    edges.push((point(i, j), point(i + 1, j)));
                }
                if j + 1 < edge_len {
                    edges.push((point(i, j), point(i, j + 1)));
                }
            }
        }
        let graph = Graph::from_edges(edge_len * edge_len, edges)?;
        Ok(Self { edge_len, graph, dist: None })
    }

    /// Direction-based rewiring of this backbone's underlying lattice.
    ///
    /// Every station `(i, j)` replaces its right link, with probability `p`,
    /// by a link to a uniformly chosen `(x, j)` with `x > i`, and independently
    /// its down link by a link to a uniformly chosen `(i, y)` with `y > j`.
    /// Each rewired link stays in its row or column and points to a higher
    /// index, so every row and column remains connected. The result is
    /// rebuilt from the plain lattice of the same size; distances are cleared.
    pub fn apply_dbrs<R: Rng + ?Sized>(&self, p: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("rewiring probability must lie in [0, 1], got {p}")));
        }
        let e = self.edge_len;
        let point = |i: usize, j: usize| i * e + j;
        let mut edges = Vec::with_capacity(2 * e * (e - 1));
        for i in 0..e {
            for j in 0..e {
                if i + 1 < e {
                    let x = if rng.gen::<f64>() < p { rng.gen_range(i + 1..e) } else { i + 1 };
                    edges.push((point(i, j), point(x, j)));
                }
                if j + 1 < e {
                    let y = if rng.gen::<f64>() < p { rng.gen_range(j + 1..e) } else { j + 1 };
                    edges.push((point(i, j), point(i, y)));
                }
            }
        }
        let graph = Graph::from_edges(e * e, edges)?;
        Ok(Self { edge_len: e, graph, dist: None })
    }

    /// Fills the all-pairs hop table.
    pub fn compute_distances(mut self) -> Result<Self> {
        self.dist = Some(self.graph.distance_table()?);
        Ok(self)
    }

    pub fn edge_len(&self) -> usize {
        self.edge_len
    }

    pub fn station_count(&self) -> usize {
        self.edge_len * self.edge_len
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn distances(&self) -> Option<&DistanceTable> {
        self.dist.as_ref()
    }

    /// Hop distance between two stations, if the table has been computed.
    pub fn hops(&self, s: usize, t: usize) -> Option<u32> {
        self.dist.as_ref().map(|d| d.get(s, t))
    }

    pub fn station_id(&self, i: usize, j: usize) -> usize {
        i * self.edge_len + j
    }

    /// Planar position of a station.
    pub fn position(&self, station: usize) -> (f64, f64) {
        ((station / self.edge_len) as f64, (station % self.edge_len) as f64)
    }

    pub fn betweenness(&self) -> Result<Vec<f64>> {
        self.graph.betweenness()
    }

    pub fn degree_distribution(&self) -> BTreeMap<usize, f64> {
        self.graph.degree_distribution()
    }

    pub fn write_adjacency<W: Write>(&self, out: W) -> io::Result<()> {
        self.graph.write_adjacency(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::topology_rng;

    fn path3() -> Graph {
        Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn smallest_lattice() {
        let b = Backbone::build_lattice(2).unwrap();
        assert_eq!(b.station_count(), 4);
        assert_eq!(b.graph().link_count(), 4);
        assert!((0..4).all(|s| b.graph().degree(s) == 2));
    }

    #[test]
    fn lattice_3_degrees() {
        let b = Backbone::build_lattice(3).unwrap();
        assert_eq!(b.graph().degree(b.station_id(1, 1)), 4);
        for (i, j) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert_eq!(b.graph().degree(b.station_id(i, j)), 2);
        }
        assert_eq!(b.graph().degree(b.station_id(0, 1)), 3);
    }

    #[test]
    fn lattice_32_counts() {
        let b = Backbone::build_lattice(32).unwrap();
        assert_eq!(b.station_count(), 1024);
        assert_eq!(b.graph().link_count(), 1984);
        assert_eq!(b.position(b.station_id(3, 7)), (3.0, 7.0));
    }

    #[test]
    fn rejects_tiny_lattice() {
        assert!(matches!(Backbone::build_lattice(1), Err(Error::InvalidParameter(_))));
        assert!(matches!(Backbone::build_lattice(0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn dbrs_zero_is_identity() {
        let b = Backbone::build_lattice(16).unwrap();
        let r = b.apply_dbrs(0.0, &mut topology_rng(3)).unwrap();
        assert_eq!(r.graph(), b.graph());
    }

    #[test]
    fn dbrs_full_on_2x2_is_identity() {
        let b = Backbone::build_lattice(2).unwrap();
        let r = b.apply_dbrs(1.0, &mut topology_rng(11)).unwrap();
        assert_eq!(r.graph(), b.graph());
    }

    #[test]
    fn dbrs_rejects_bad_probability() {
        let b = Backbone::build_lattice(4).unwrap();
        assert!(b.apply_dbrs(1.5, &mut topology_rng(0)).is_err());
        assert!(b.apply_dbrs(-0.1, &mut topology_rng(0)).is_err());
    }

    #[test]
    fn dbrs_links_stay_in_row_or_column() {
        let b = Backbone::build_lattice(12).unwrap();
        let r = b.apply_dbrs(0.7, &mut topology_rng(8)).unwrap();
        for (a, c) in r.graph().links() {
            let (ai, aj) = (a / 12, a % 12);
            let (ci, cj) = (c / 12, c % 12);
            assert!(ai == ci || aj == cj, "link {a}-{c} leaves row and column");
        }
    }

    #[test]
    fn hops_on_lattices() {
        let b = Backbone::build_lattice(2).unwrap().compute_distances().unwrap();
        assert_eq!(b.hops(b.station_id(0, 0), b.station_id(1, 1)), Some(2));
        let b = Backbone::build_lattice(32).unwrap().compute_distances().unwrap();
        assert_eq!(b.hops(b.station_id(0, 0), b.station_id(31, 31)), Some(62));
        assert_eq!(b.hops(5, 5), Some(0));
    }

    #[test]
    fn distances_absent_until_computed() {
        let b = Backbone::build_lattice(3).unwrap();
        assert!(b.distances().is_none());
        assert_eq!(b.hops(0, 1), None);
    }

    #[test]
    fn disconnected_graph_errors() {
        let g = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        assert!(matches!(g.distance_table(), Err(Error::Disconnected { .. })));
        assert!(matches!(g.betweenness(), Err(Error::Disconnected { .. })));
        assert!(!g.is_connected());
    }

    #[test]
    fn betweenness_path_and_cycle() {
        let b = path3().betweenness().unwrap();
        assert_eq!(b, vec![0.0, 2.0, 0.0]);
        let c = Backbone::build_lattice(2).unwrap().betweenness().unwrap();
        for x in c {
            assert!((x - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degree_distribution_lattices() {
        let pk = Backbone::build_lattice(32).unwrap().degree_distribution();
        assert_eq!(pk.len(), 3);
        assert!((pk[&2] - 4.0 / 1024.0).abs() < 1e-15);
        assert!((pk[&3] - 120.0 / 1024.0).abs() < 1e-15);
        assert!((pk[&4] - 900.0 / 1024.0).abs() < 1e-15);
        let pk = Backbone::build_lattice(2).unwrap().degree_distribution();
        assert_eq!(pk.into_iter().collect::<Vec<_>>(), vec![(2, 1.0)]);
    }

    #[test]
    fn adjacency_dump_format() {
        let mut buf = Vec::new();
        path3().write_adjacency(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 1\n1 0 2\n2 1\n");
    }

    #[test]
    fn graph_rejects_bad_links() {
        assert!(Graph::from_edges(2, [(0, 0)]).is_err());
        assert!(Graph::from_edges(2, [(0, 2)]).is_err());
        let g = Graph::from_edges(2, [(0, 1), (1, 0)]).unwrap();
        assert_eq!(g.link_count(), 1);
    }
}
