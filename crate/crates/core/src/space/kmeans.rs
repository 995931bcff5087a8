//! Lloyd's k-means with k-means++ seeding.

use crate::affordance::squared_distance;
use rand::Rng;

pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index of every input point; always the nearest centroid.
    pub assignment: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn seed_plus_plus<R: Rng>(points: &[&[f64]], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())].to_vec());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = d2.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // floating-point slack can walk past the last positive weight
            if d2[chosen] <= 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(0);
            }
            points[chosen].to_vec()
        } else {
            // every point already coincides with a centroid
            centroids[centroids.len() - 1].clone()
        };
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, &next));
        }
        centroids.push(next);
    }
    centroids
}

fn assign(points: &[&[f64]], centroids: &[Vec<f64>]) -> Vec<usize> {
    points.iter().map(|p| nearest(p, centroids)).collect()
}

/// Clusters `points` into `k` groups. Empty clusters keep their previous
/// centroid. `points` must be non-empty and share one dimensionality.
pub fn kmeans<R: Rng>(points: &[&[f64]], k: usize, max_iterations: usize, rng: &mut R) -> KMeans {
    assert!(!points.is_empty() && k > 0);
    let dims = points[0].len();
    let mut centroids = seed_plus_plus(points, k, rng);
    let mut assignment = assign(points, &centroids);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        iterations += 1;
        let mut sums = vec![vec![0.0; dims]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                centroids[c] = sums[c].iter().map(|s| s / n).collect();
            }
        }
        let next = assign(points, &centroids);
        if next == assignment {
            converged = true;
            break;
        }
        assignment = next;
    }
    KMeans {
        centroids,
        assignment,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separates_two_obvious_groups() {
        let data: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![0.0, 0.2],
            vec![9.0, 9.0],
            vec![9.1, 9.0],
        ];
        let refs: Vec<&[f64]> = data.iter().map(|v| v.as_slice()).collect();
        let km = kmeans(&refs, 2, MAX_ITERATIONS, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(km.converged);
        assert_eq!(km.assignment[0], km.assignment[1]);
        assert_eq!(km.assignment[0], km.assignment[2]);
        assert_eq!(km.assignment[3], km.assignment[4]);
        assert_ne!(km.assignment[0], km.assignment[3]);
    }

    #[test]
    fn identical_points_collapse_into_cluster_zero() {
        let data = vec![vec![4.0, 2.0]; 6];
        let refs: Vec<&[f64]> = data.iter().map(|v| v.as_slice()).collect();
        let km = kmeans(&refs, 3, MAX_ITERATIONS, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(km.assignment.iter().all(|&a| a == 0));
        assert_eq!(km.centroids[0], vec![4.0, 2.0]);
    }

    #[test]
    fn fewer_points_than_clusters() {
        let data = [vec![1.0], vec![5.0]];
        let refs: Vec<&[f64]> = data.iter().map(|v| v.as_slice()).collect();
        let km = kmeans(&refs, 4, MAX_ITERATIONS, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(km.centroids.len(), 4);
        assert_ne!(km.assignment[0], km.assignment[1]);
    }
}
