//! Density clustering of timeslot vectors. Only the noise/non-noise partition
//! matters downstream: noise timeslots are the anomalies.

use std::collections::VecDeque;

use super::DbscanParams;

/// Pairwise squared Euclidean distances, condensed upper triangle. Built once
/// per dataset and shared across parameter settings during grid search.
pub struct DistanceMatrix {
    n: usize,
    sq: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_points(points: &[Vec<f64>]) -> Self {
        let n = points.len();
        let mut sq = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                sq.push(squared_distance(&points[i], &points[j]));
            }
        }
        DistanceMatrix { n, sq }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn squared(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        // row a starts after the first a rows of the condensed triangle
        let offset = a * self.n - a * (a + 1) / 2;
        self.sq[offset + (b - a - 1)]
    }

    /// All points within `epsilon` of `i`, the point itself included.
    fn neighbors(&self, i: usize, eps_sq: f64) -> Vec<usize> {
        (0..self.n).filter(|&j| self.squared(i, j) <= eps_sq).collect()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Copy, PartialEq)]
enum Label {
    Unvisited,
    Noise,
    Cluster(usize),
}

/// Classic DBSCAN over a precomputed distance matrix. A point is core when its
/// closed epsilon-neighborhood holds at least `min_pts` points; noise points
/// are those in no cluster once expansion finishes. The returned vector is
/// `true` exactly for noise.
pub fn noise_flags(dists: &DistanceMatrix, params: &DbscanParams) -> Vec<bool> {
    let n = dists.len();
    let eps_sq = params.epsilon * params.epsilon;
    let mut labels = vec![Label::Unvisited; n];
    let mut cluster = 0usize;

    for p in 0..n {
        if labels[p] != Label::Unvisited {
            continue;
        }
        let neighborhood = dists.neighbors(p, eps_sq);
        if neighborhood.len() < params.min_pts {
            labels[p] = Label::Noise;
            continue;
        }
        cluster += 1;
        labels[p] = Label::Cluster(cluster);
        let mut queue: VecDeque<usize> = neighborhood.into();
        while let Some(q) = queue.pop_front() {
            match labels[q] {
                Label::Noise => {
                    // border point reached from a core point
                    labels[q] = Label::Cluster(cluster);
                }
                Label::Unvisited => {
                    labels[q] = Label::Cluster(cluster);
                    let reachable = dists.neighbors(q, eps_sq);
                    if reachable.len() >= params.min_pts {
                        queue.extend(reachable);
                    }
                }
                Label::Cluster(_) => {}
            }
        }
    }

    labels.iter().map(|l| *l == Label::Noise).collect()
}
