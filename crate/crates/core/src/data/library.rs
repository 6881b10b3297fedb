//! Trajectory library: Lloyd's k-means over flattened future trajectories.

use super::{DataError, Dataset};
use crate::geometry::Vec2;
use crate::rng::{seeded_rng, split_seed};
use rand::seq::SliceRandom;
use std::io::{BufRead, Read, Write};

/// K candidate futures in the robot frame, each `horizon` points long.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLibrary {
    pub centroids: Vec<Vec<Vec2>>,
    pub horizon: usize,
}

impl TrajectoryLibrary {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }
}

const MAX_ITERS: usize = 100;

/// Cluster the dataset's future trajectories into `k` centroids.
///
/// Initialization samples distinct examples; empty clusters are re-seeded
/// from the farthest point; the output is sorted lexicographically by final
/// point (then whole vector) so the library order is deterministic.
pub fn build_library(
    dataset: &Dataset,
    k: usize,
    seed: u64,
) -> Result<TrajectoryLibrary, DataError> {
    let n = dataset.examples.len();
    if k == 0 || k > n {
        return Err(DataError::BadClusterCount { k, max: n });
    }
    let horizon = dataset.meta.horizon;
    let dim = 2 * horizon;
    let points: Vec<Vec<f64>> = dataset
        .examples
        .iter()
        .map(|ex| {
            ex.future_positions
                .iter()
                .flat_map(|p| [p.x, p.y])
                .collect()
        })
        .collect();

    // Seeded init from distinct examples (distinct as vectors, so duplicated
    // trajectories cannot collapse two centroids at the start).
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeded_rng(split_seed(seed, "library-init"));
    order.shuffle(&mut rng);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    for &i in &order {
        if centroids.len() == k {
            break;
        }
        if !centroids.iter().any(|c| c == &points[i]) {
            centroids.push(points[i].clone());
        }
    }
    // Fewer distinct trajectories than k: fill with repeats; the empty
    // cluster rule spreads them out later if it can.
    let mut fill = 0usize;
    while centroids.len() < k {
        centroids.push(points[order[fill % n]].clone());
        fill += 1;
    }

    let mut assignment = vec![0usize; n];
    for _ in 0..MAX_ITERS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(p, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }

        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, v) in sums[assignment[i]].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in sums[c].iter_mut() {
                    *s /= counts[c] as f64;
                }
                centroids[c] = sums[c].clone();
            } else {
                // Re-seed an empty cluster from the farthest point.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(&points[a], &centroids[assignment[a]]);
                        let db = sq_dist(&points[b], &centroids[assignment[b]]);
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                centroids[c] = points[far].clone();
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut out: Vec<Vec<Vec2>> = centroids
        .iter()
        .map(|c| {
            (0..horizon)
                .map(|i| Vec2::new(c[2 * i], c[2 * i + 1]))
                .collect()
        })
        .collect();
    out.sort_by(|a, b| {
        let la = a.last().unwrap();
        let lb = b.last().unwrap();
        (la.x, la.y)
            .partial_cmp(&(lb.x, lb.y))
            .unwrap()
            .then_with(|| {
                for (pa, pb) in a.iter().zip(b.iter()) {
                    match (pa.x, pa.y).partial_cmp(&(pb.x, pb.y)).unwrap() {
                        std::cmp::Ordering::Equal => continue,
                        other => return other,
                    }
                }
                std::cmp::Ordering::Equal
            })
    });
    Ok(TrajectoryLibrary {
        centroids: out,
        horizon,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub const LIBRARY_MAGIC: &str = "offnav-library v1";

pub fn write_library(
    w: &mut impl Write,
    lib: &TrajectoryLibrary,
    header_comments: &[String],
) -> Result<(), DataError> {
    writeln!(w, "{LIBRARY_MAGIC}")?;
    for c in header_comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "k {}", lib.centroids.len())?;
    writeln!(w, "horizon {}", lib.horizon)?;
    writeln!(w, "data")?;
    for c in &lib.centroids {
        for p in c {
            w.write_all(&p.x.to_le_bytes())?;
            w.write_all(&p.y.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_library(r: &mut impl BufRead) -> Result<TrajectoryLibrary, DataError> {
    let mut line = String::new();
    let mut read_line = |r: &mut dyn BufRead| -> Result<String, DataError> {
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(DataError::Parse("unexpected end of header".into()));
            }
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Ok(t.to_string());
        }
    };
    if read_line(r)? != LIBRARY_MAGIC {
        return Err(DataError::Parse("unsupported library header".into()));
    }
    let k: usize = read_line(r)?
        .strip_prefix("k ")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| DataError::Parse("bad k line".into()))?;
    let horizon: usize = read_line(r)?
        .strip_prefix("horizon ")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| DataError::Parse("bad horizon line".into()))?;
    if read_line(r)? != "data" {
        return Err(DataError::Parse("missing data marker".into()));
    }
    let mut centroids = Vec::with_capacity(k);
    let mut buf = [0u8; 8];
    for _ in 0..k {
        let mut c = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let mut read = |r: &mut dyn Read| -> Result<f64, DataError> {
                r.read_exact(&mut buf)?;
                Ok(f64::from_le_bytes(buf))
            };
            let x = read(r)?;
            let y = read(r)?;
            c.push(Vec2::new(x, y));
        }
        centroids.push(c);
    }
    Ok(TrajectoryLibrary { centroids, horizon })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DatasetMeta, Example};
    use crate::world::Patch;

    /// Within-cluster sum of squares for a given assignment.
    fn wcss(points: &[Vec<f64>], centroids: &[Vec<f64>], assignment: &[usize]) -> f64 {
        points
            .iter()
            .zip(assignment.iter())
            .map(|(p, &a)| sq_dist(p, &centroids[a]))
            .sum()
    }

    fn dataset_from_futures(futures: Vec<Vec<Vec2>>) -> Dataset {
        let horizon = futures[0].len();
        let examples = futures
            .into_iter()
            .map(|future_positions| Example {
                past_positions: vec![Vec2::ZERO; 10],
                patch: Patch::zeros(2),
                future_positions,
            })
            .collect();
        Dataset {
            examples,
            meta: DatasetMeta {
                horizon,
                h_past: 10,
                f_tau: 5.0,
                patch_cells: 2,
                ..DatasetMeta::default()
            },
        }
    }

    fn straight(vx: f64) -> Vec<Vec2> {
        (1..=10).map(|i| Vec2::new(vx * 0.2 * i as f64, 0.0)).collect()
    }

    fn arc(vx: f64, vy: f64) -> Vec<Vec2> {
        (1..=10)
            .map(|i| Vec2::new(vx * 0.2 * i as f64, vy * 0.02 * (i * i) as f64))
            .collect()
    }

    #[test]
    fn two_distinct_trajectories_are_their_own_centroids() {
        let ds = dataset_from_futures(vec![straight(1.0), arc(0.5, 1.0)]);
        let lib = build_library(&ds, 2, 7).unwrap();
        assert_eq!(lib.len(), 2);
        let matches = |c: &Vec<Vec2>, t: &Vec<Vec2>| {
            c.iter().zip(t.iter()).all(|(a, b)| a.distance(*b) < 1e-12)
        };
        let t0 = straight(1.0);
        let t1 = arc(0.5, 1.0);
        assert!(
            (matches(&lib.centroids[0], &t0) && matches(&lib.centroids[1], &t1))
                || (matches(&lib.centroids[0], &t1) && matches(&lib.centroids[1], &t0))
        );
    }

    #[test]
    fn k_one_gives_arithmetic_mean() {
        let futures = vec![straight(1.0), straight(0.5), arc(1.0, -0.5)];
        let ds = dataset_from_futures(futures.clone());
        let lib = build_library(&ds, 1, 7).unwrap();
        assert_eq!(lib.len(), 1);
        for i in 0..10 {
            let mean = futures.iter().map(|f| f[i]).fold(Vec2::ZERO, |a, b| a + b) / 3.0;
            assert!(lib.centroids[0][i].distance(mean) < 1e-12);
        }
    }

    #[test]
    fn beats_random_assignment_oracle_on_wcss() {
        use rand::Rng;
        // 50 seeded random trajectories, k = 5; Lloyd's must beat the best
        // of 100 seeded random assignments.
        let mut rng = crate::rng::seeded_rng(123);
        let futures: Vec<Vec<Vec2>> = (0..50)
            .map(|_| {
                let vx: f64 = rng.gen_range(0.0..1.0);
                let vy: f64 = rng.gen_range(-0.5..0.5);
                (1..=10)
                    .map(|i| Vec2::new(vx * 0.2 * i as f64, vy * 0.02 * (i * i) as f64))
                    .collect()
            })
            .collect();
        let ds = dataset_from_futures(futures);
        let lib = build_library(&ds, 5, 7).unwrap();

        let points: Vec<Vec<f64>> = ds
            .examples
            .iter()
            .map(|e| e.future_positions.iter().flat_map(|p| [p.x, p.y]).collect())
            .collect();
        let centroids: Vec<Vec<f64>> = lib
            .centroids
            .iter()
            .map(|c| c.iter().flat_map(|p| [p.x, p.y]).collect())
            .collect();
        // Lloyd's WCSS under its own (nearest) assignment.
        let assignment: Vec<usize> = points
            .iter()
            .map(|p| {
                (0..5)
                    .min_by(|&a, &b| {
                        sq_dist(p, &centroids[a])
                            .partial_cmp(&sq_dist(p, &centroids[b]))
                            .unwrap()
                    })
                    .unwrap()
            })
            .collect();
        let lloyd = wcss(&points, &centroids, &assignment);

        for trial in 0..100 {
            let mut trial_rng = crate::rng::seeded_rng(1000 + trial);
            let assign: Vec<usize> = (0..points.len())
                .map(|_| trial_rng.gen_range(0..5))
                .collect();
            let mut sums = vec![vec![0.0; 20]; 5];
            let mut counts = vec![0usize; 5];
            for (p, &a) in points.iter().zip(assign.iter()) {
                counts[a] += 1;
                for (s, v) in sums[a].iter_mut().zip(p.iter()) {
                    *s += v;
                }
            }
            for (c, count) in counts.iter().enumerate() {
                if *count > 0 {
                    for s in sums[c].iter_mut() {
                        *s /= *count as f64;
                    }
                }
            }
            let random = wcss(&points, &sums, &assign);
            assert!(
                lloyd <= random + 1e-9,
                "random assignment beat Lloyd's: {lloyd} vs {random}"
            );
        }
    }

    #[test]
    fn rejects_bad_k() {
        let ds = dataset_from_futures(vec![straight(1.0)]);
        assert!(build_library(&ds, 0, 7).is_err());
        assert!(build_library(&ds, 2, 7).is_err());
    }

    #[test]
    fn output_order_is_deterministic() {
        let futures: Vec<Vec<Vec2>> = (0..30).map(|i| arc(0.5 + 0.01 * i as f64, 0.3)).collect();
        let ds = dataset_from_futures(futures);
        let a = build_library(&ds, 4, 9).unwrap();
        let b = build_library(&ds, 4, 9).unwrap();
        assert_eq!(a, b);
        for pair in a.centroids.windows(2) {
            let la = pair[0].last().unwrap();
            let lb = pair[1].last().unwrap();
            assert!((la.x, la.y) <= (lb.x, lb.y));
        }
    }

    #[test]
    fn library_round_trip() {
        let ds = dataset_from_futures(vec![straight(1.0), arc(0.5, 1.0), arc(0.8, -0.3)]);
        let lib = build_library(&ds, 3, 7).unwrap();
        let mut buf = Vec::new();
        write_library(&mut buf, &lib, &[]).unwrap();
        let back = read_library(&mut buf.as_slice()).unwrap();
        assert_eq!(lib, back);
    }
}
