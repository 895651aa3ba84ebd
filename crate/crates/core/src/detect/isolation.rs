//! Isolation forest over timeslot vectors.
//!
//! Trees isolate points by recursive random axis-aligned splits; anomalous
//! points need fewer splits. The per-point score is 2^(-E[h]/c(n)) where E[h]
//! is the average path length over the forest and c(n) the expected path
//! length of an unsuccessful BST search, so scores live in (0,1) and 0.5 marks
//! a point that behaves like the average.

use rand::Rng;

use crate::seed::seeded_rng;

const EULER_MASCHERONI: f64 = 0.577_215_664_9;

/// Expected path length c(n) of an unsuccessful search in a BST of n points.
/// c(0) = c(1) = 0 and c(2) = 1 exactly; larger n use the harmonic-number
/// approximation H(k) = ln k + gamma.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        n => {
            let nf = n as f64;
            2.0 * ((nf - 1.0).ln() + EULER_MASCHERONI) - 2.0 * (nf - 1.0) / nf
        }
    }
}

/// Anomaly score for a forest-averaged path length under subsample size n.
pub fn score_from_path_length(avg_path: f64, subsample: usize) -> f64 {
    2f64.powf(-avg_path / average_path_length(subsample))
}

enum Node {
    Split {
        attribute: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        size: usize,
    },
}

struct Tree {
    root: Node,
}

impl Tree {
    /// Grow one tree on a subsample. Splits pick an attribute uniformly at
    /// random and a split value uniform in that attribute's range within the
    /// node; growth stops at single points or at the height cap.
    fn grow(points: &[Vec<f64>], indices: Vec<usize>, height_cap: usize, rng: &mut impl Rng) -> Self {
        Tree {
            root: Self::grow_node(points, indices, 0, height_cap, rng),
        }
    }

    fn grow_node(
        points: &[Vec<f64>],
        indices: Vec<usize>,
        height: usize,
        height_cap: usize,
        rng: &mut impl Rng,
    ) -> Node {
        if indices.len() <= 1 || height >= height_cap {
            return Node::Leaf {
                size: indices.len(),
            };
        }
        let dims = points[indices[0]].len();
        let attribute = rng.random_range(0..dims);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in &indices {
            let v = points[i][attribute];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo == hi {
            // constant attribute in this node: no usable split here, give up
            // on this branch (the height cap bounds repeated bad luck)
            return Node::Leaf {
                size: indices.len(),
            };
        }
        let value = rng.random_range(lo..hi);
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            indices.into_iter().partition(|&i| points[i][attribute] < value);
        Node::Split {
            attribute,
            value,
            left: Box::new(Self::grow_node(points, left_idx, height + 1, height_cap, rng)),
            right: Box::new(Self::grow_node(points, right_idx, height + 1, height_cap, rng)),
        }
    }

    /// Path length for a point: edges traversed plus the c(size) adjustment at
    /// the reached leaf.
    fn path_length(&self, point: &[f64]) -> f64 {
        let mut node = &self.root;
        let mut depth = 0usize;
        loop {
            match node {
                Node::Leaf { size } => return depth as f64 + average_path_length(*size),
                Node::Split {
                    attribute,
                    value,
                    left,
                    right,
                } => {
                    node = if point[*attribute] < *value { left } else { right };
                    depth += 1;
                }
            }
        }
    }
}

/// Fit `n_trees` trees (per-tree seeds counter-derived from the master seed)
/// and score all points. Returns one score in (0,1) per point.
pub(crate) fn forest_scores(
    points: &[Vec<f64>],
    n_trees: usize,
    subsample: usize,
    seed: u64,
) -> Vec<f64> {
    let height_cap = (subsample as f64).log2().ceil() as usize;
    let trees: Vec<Tree> = (0..n_trees)
        .map(|k| {
            let mut rng = seeded_rng(seed, k as u64);
            let indices = sample_without_replacement(points.len(), subsample, &mut rng);
            Tree::grow(points, indices, height_cap, &mut rng)
        })
        .collect();

    points
        .iter()
        .map(|point| {
            let total: f64 = trees.iter().map(|tree| tree.path_length(point)).sum();
            score_from_path_length(total / n_trees as f64, subsample)
        })
        .collect()
}

fn sample_without_replacement(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    // partial Fisher-Yates: first k entries of a shuffle of 0..n
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizer_identities() {
        assert_eq!(average_path_length(0), 0.0);
        assert_eq!(average_path_length(1), 0.0);
        assert_eq!(average_path_length(2), 1.0);
        // c(256) from the harmonic approximation
        let c256 = 2.0 * (255f64.ln() + EULER_MASCHERONI) - 2.0 * 255.0 / 256.0;
        assert!((average_path_length(256) - c256).abs() < 1e-12);
        assert!(average_path_length(256) > average_path_length(16));
    }

    #[test]
    fn average_path_scores_one_half() {
        // E[h] = c(n) forces score 2^-1 = 0.5 exactly
        for &n in &[2usize, 16, 256, 1000] {
            assert_eq!(score_from_path_length(average_path_length(n), n), 0.5);
        }
    }

    #[test]
    fn subsample_is_unique_and_in_range() {
        let mut rng = seeded_rng(5, 0);
        let sample = sample_without_replacement(100, 40, &mut rng);
        assert_eq!(sample.len(), 40);
        let mut sorted = sample.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 40);
        assert!(sorted.iter().all(|&i| i < 100));
    }

    #[test]
    fn identical_points_score_one_half() {
        // a constant cloud is unsplittable: every path is c(n), so score 0.5
        let points = vec![vec![1.0, 1.0]; 32];
        let scores = forest_scores(&points, 50, 32, 3);
        for s in scores {
            assert!((s - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn scores_are_deterministic_given_seed() {
        let points: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![(i % 7) as f64, (i % 3) as f64])
            .collect();
        let a = forest_scores(&points, 30, 32, 42);
        let b = forest_scores(&points, 30, 32, 42);
        assert_eq!(a, b);
        let c = forest_scores(&points, 30, 32, 43);
        assert_ne!(a, c);
    }
}
