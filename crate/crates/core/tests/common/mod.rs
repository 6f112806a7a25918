//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use hybridnet::Graph;
use rand::Rng;

pub const INF: u32 = u32::MAX;

/// All-pairs hop counts by Floyd-Warshall; `INF` where unreachable.
pub fn floyd_warshall(g: &Graph) -> Vec<Vec<u32>> {
    let n = g.node_count();
    let mut d = vec![vec![INF; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
        for &j in g.neighbors(i) {
            row[j as usize] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if d[i][k] == INF {
                continue;
            }
            for j in 0..n {
                if d[k][j] != INF && d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Betweenness by explicitly enumerating every shortest path between every
/// ordered pair, crediting interior nodes with their share of the paths.
pub fn brute_betweenness(g: &Graph) -> Vec<f64> {
    let n = g.node_count();
    let d = floyd_warshall(g);
    let mut b = vec![0.0; n];
    for s in 0..n {
        for t in 0..n {
            if s == t || d[s][t] == INF {
                continue;
            }
            let mut paths: Vec<Vec<usize>> = Vec::new();
            let mut stack = vec![vec![s]];
            while let Some(path) = stack.pop() {
                let last = *path.last().unwrap();
                if last == t {
                    paths.push(path);
                    continue;
                }
                for &q in g.neighbors(last) {
                    let q = q as usize;
                    if d[q][t] != INF && d[q][t] + 1 == d[last][t] {
                        let mut next = path.clone();
                        next.push(q);
                        stack.push(next);
                    }
                }
            }
            let share = 1.0 / paths.len() as f64;
            for p in &paths {
                for &v in &p[1..p.len() - 1] {
                    b[v] += share;
                }
            }
        }
    }
    b
}

/// Nearest station by scanning every site.
pub fn brute_nearest(x: f64, y: f64, edge_len: usize) -> usize {
    let mut best = (f64::INFINITY, 0);
    for id in 0..edge_len * edge_len {
        let (sx, sy) = ((id / edge_len) as f64, (id % edge_len) as f64);
        let dist = (sx - x).powi(2) + (sy - y).powi(2);
        if dist < best.0 {
            best = (dist, id);
        }
    }
    best.1
}

/// Erdos-Renyi style graph with `n` nodes and about `m` random links.
pub fn random_graph<R: Rng>(n: usize, m: usize, rng: &mut R) -> Graph {
    let edges: Vec<(usize, usize)> =
        (0..m).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).filter(|(a, b)| a != b).collect();
    Graph::from_edges(n, edges).unwrap()
}

/// Random spanning tree on `n` nodes plus `extra` random links.
pub fn random_connected_graph<R: Rng>(n: usize, extra: usize, rng: &mut R) -> Graph {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (v, rng.gen_range(0..v))).collect();
    edges.extend((0..extra).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).filter(|(a, b)| a != b));
    Graph::from_edges(n, edges).unwrap()
}
