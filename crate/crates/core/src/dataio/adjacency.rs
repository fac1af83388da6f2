use crate::error::{Error, Result};
use crate::numerics::Tensor2;

/// Fixed `N x N` nonnegative adjacency with positive self-weights.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticGraph {
    weights: Tensor2,
}

impl StaticGraph {
    pub fn new(weights: Tensor2) -> Result<Self> {
        let n = weights.rows();
        if n == 0 || weights.cols() != n {
            return Err(Error::Data(format!(
                "adjacency must be square, got {}x{}",
                weights.rows(),
                weights.cols()
            )));
        }
        if weights.data().iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::Data("adjacency weights must be finite and nonnegative".into()));
        }
        if let Some(i) = (0..n).find(|&i| weights.get(i, i) <= 0.0) {
            return Err(Error::Data(format!("adjacency node {i} has no self-connection")));
        }
        Ok(Self { weights })
    }

    /// Binary graph from a boolean pattern; the diagonal is always set.
    pub fn from_pattern(n: usize, edge: impl Fn(usize, usize) -> bool) -> Result<Self> {
        Self::new(Tensor2::from_fn(n, n, |i, j| {
            if i == j || edge(i, j) {
                1.0
            } else {
                0.0
            }
        }))
    }

    pub fn n(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Tensor2 {
        &self.weights
    }

    /// 0/1 indicator of `A > 0`.
    pub fn support(&self) -> Tensor2 {
        self.weights.map(|w| if w > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.weights.get(i, j) > 0.0
    }

    /// Rows scaled to sum to one.
    pub fn row_normalized(&self) -> Tensor2 {
        let n = self.n();
        let mut out = self.weights.clone();
        for row in out.data_mut().chunks_mut(n) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|w| *w /= s);
        }
        out
    }

    /// Nodes whose only edge is the self-loop.
    pub fn isolated_nodes(&self) -> Vec<usize> {
        let n = self.n();
        (0..n)
            .filter(|&i| (0..n).all(|j| j == i || !self.has_edge(i, j)))
            .collect()
    }

    /// Binary union of several graphs' supports.
    pub fn union(graphs: &[StaticGraph]) -> Result<Self> {
        let n = graphs
            .first()
            .ok_or_else(|| Error::Data("union of zero graphs".into()))?
            .n();
        if graphs.iter().any(|g| g.n() != n) {
            return Err(Error::Data("union of graphs with different sizes".into()));
        }
        Self::from_pattern(n, |i, j| graphs.iter().any(|g| g.has_edge(i, j)))
    }
}

/// Thresholded Gaussian kernel over planar coordinates.
///
/// `A[i][j] = exp(-d(i,j)^2 / sigma^2)` where `sigma` is the population standard
/// deviation of the full `N x N` distance matrix (diagonal zeros included). Weights below `threshold` are
/// zeroed and the diagonal is 1. Fails when all coordinates coincide or when a
/// node ends up without neighbours.
pub fn build_static_adjacency(coords: &[[f64; 2]], threshold: f64) -> Result<StaticGraph> {
    let n = coords.len();
    if n < 2 {
        return Err(Error::Data(format!("adjacency needs at least 2 nodes, got {n}")));
    }
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::Config(format!("threshold must be in [0, 1), got {threshold}")));
    }
    let dist = |i: usize, j: usize| {
        let dx = coords[i][0] - coords[j][0];
        let dy = coords[i][1] - coords[j][1];
        (dx * dx + dy * dy).sqrt()
    };
    let mut pairs = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            pairs.push(dist(i, j));
        }
    }
    let mean = pairs.iter().sum::<f64>() / pairs.len() as f64;
    let var = pairs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / pairs.len() as f64;
    let sigma2 = var;
    if sigma2 <= 0.0 {
        return Err(Error::Data("all coordinates are identical".into()));
    }
    let weights = Tensor2::from_fn(n, n, |i, j| {
        if i == j {
            return 1.0;
        }
        let d = dist(i, j);
        let w = (-(d * d) / sigma2).exp();
        if w < threshold {
            0.0
        } else {
            w
        }
    });
    let graph = StaticGraph::new(weights)?;
    if let Some(&i) = graph.isolated_nodes().first() {
        return Err(Error::Data(format!(
            "node {i} has no neighbours at threshold {threshold}"
        )));
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_distance_gives_unit_weight() {
        let coords = [[0.0, 0.0], [0.0, 0.0], [3.0, 4.0]];
        let g = build_static_adjacency(&coords, 0.0).unwrap();
        assert_eq!(g.weights().get(0, 1), 1.0);
    }

    #[test]
    fn two_nodes_hand_kernel() {
        // Distance matrix {0, 3, 3, 0}: mean 1.5, population std 1.5, sigma^2 = 2.25.
        let g = build_static_adjacency(&[[0.0, 0.0], [3.0, 0.0]], 0.0).unwrap();
        let w = (-9.0f64 / 2.25).exp();
        assert_eq!(g.weights().get(0, 0), 1.0);
        assert!((g.weights().get(0, 1) - w).abs() < 1e-15);
        assert_eq!(g.weights().get(0, 1), g.weights().get(1, 0));

        // Three collinear points: entries {0,1,2,1,0,1,2,1,0}, mean 8/9, var 44/81.
        let g = build_static_adjacency(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], 0.0).unwrap();
        let sigma2 = 44.0 / 81.0;
        assert!((g.weights().get(0, 2) - (-4.0f64 / sigma2).exp()).abs() < 1e-15);
    }

    #[test]
    fn identical_coords_rejected() {
        assert!(build_static_adjacency(&[[1.0, 1.0]; 4], 0.1).is_err());
    }

    #[test]
    fn isolated_node_named() {
        let coords = [[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [50.0, 50.0]];
        let err = build_static_adjacency(&coords, 0.5).unwrap_err();
        assert!(err.to_string().contains("node 3"), "{err}");
    }

    #[test]
    fn raising_threshold_never_adds_edges() {
        let mut rng = crate::numerics::SeededRng::new(4);
        let coords: Vec<[f64; 2]> = (0..15).map(|_| [rng.uniform(), rng.uniform()]).collect();
        let lo = build_static_adjacency(&coords, 0.05).unwrap();
        for tau in [0.1, 0.2, 0.3] {
            if let Ok(hi) = build_static_adjacency(&coords, tau) {
                for i in 0..15 {
                    for j in 0..15 {
                        assert!(!hi.has_edge(i, j) || lo.has_edge(i, j));
                    }
                }
            }
        }
    }

    #[test]
    fn union_and_normalization() {
        let a = StaticGraph::from_pattern(3, |i, j| i + 1 == j).unwrap();
        let b = StaticGraph::from_pattern(3, |i, j| j + 1 == i).unwrap();
        let u = StaticGraph::union(&[a, b]).unwrap();
        assert!(u.has_edge(0, 1) && u.has_edge(1, 0) && !u.has_edge(0, 2));
        let r = u.row_normalized();
        for i in 0..3 {
            assert!((r.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
