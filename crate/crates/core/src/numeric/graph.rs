use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Undirected weighted graph stored as adjacency lists.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl WeightedGraph {
    pub fn new(n: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); n],
        }
    }

    /// Builds the graph from `(i, j, w)` edges; each edge is added in both directions.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut g = Self::new(n);
        for &(i, j, w) in edges {
            g.add_edge(i, j, w)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, i: usize, j: usize, w: f64) -> Result<()> {
        let n = self.len();
        if i >= n || j >= n {
            return Err(Error::Input(format!(
                "edge ({i}, {j}) references a node outside 0..{n}"
            )));
        }
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::Input(format!(
                "edge ({i}, {j}) has invalid weight {w}; weights must be finite and nonnegative"
            )));
        }
        self.adjacency[i].push((j, w));
        if i != j {
            self.adjacency[j].push((i, w));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbours(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn connected_components(&self) -> usize {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }

    /// Single-source Dijkstra; unreachable nodes get `+∞`.
    pub fn dijkstra(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.len()];
        dist[source] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Candidate {
            dist: 0.0,
            node: source,
        });
        while let Some(Candidate { dist: d, node: u }) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, w) in &self.adjacency[u] {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Candidate { dist: nd, node: v });
                }
            }
        }
        dist
    }
}

#[derive(Debug, PartialEq)]
struct Candidate {
    dist: f64,
    node: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All-pairs shortest path lengths over a nonnegative undirected graph.
pub fn shortest_paths(graph: &WeightedGraph) -> Matrix {
    let n = graph.len();
    let mut out = Matrix::zeros(n, n);
    for s in 0..n {
        out.row_mut(s).copy_from_slice(&graph.dijkstra(s));
    }
    // Dijkstra is exact, but summation order can differ by direction.
    for i in 0..n {
        for j in (i + 1)..n {
            let d = out[(i, j)].min(out[(j, i)]);
            out[(i, j)] = d;
            out[(j, i)] = d;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;

    #[test]
    fn small_graphs() {
        let g = WeightedGraph::from_edges(2, &[(0, 1, 2.5)]).unwrap();
        assert_eq!(shortest_paths(&g)[(0, 1)], 2.5);

        let g = WeightedGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 2.0)]).unwrap();
        let d = shortest_paths(&g);
        assert_eq!(d[(0, 2)], 3.0);
        assert_eq!(d[(2, 0)], 3.0);
        assert_eq!(d[(1, 1)], 0.0);

        let g = WeightedGraph::new(2);
        assert_eq!(shortest_paths(&g)[(0, 1)], f64::INFINITY);
        assert_eq!(g.connected_components(), 2);
    }

    #[test]
    fn negative_weight_rejected() {
        assert!(matches!(
            WeightedGraph::from_edges(2, &[(0, 1, -1.0)]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn triangle_inequality_on_random_graphs() {
        let mut rng = Rng::new(3, 0);
        for _ in 0..10 {
            let n = 25;
            let mut g = WeightedGraph::new(n);
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.uniform(0.0, 1.0) < 0.15 {
                        g.add_edge(i, j, rng.uniform(0.0, 3.0)).unwrap();
                    }
                }
            }
            let d = shortest_paths(&g);
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(d[(i, j)], d[(j, i)]);
                    for k in 0..n {
                        assert!(d[(i, k)] <= d[(i, j)] + d[(j, k)] + 1e-12);
                    }
                }
            }
        }
    }
}
