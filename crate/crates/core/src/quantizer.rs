//! k-means codebook over groove vectors. The cluster id of a bar's groove
//! vector becomes its `GROOVING` token value.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::groove::{GrooveKind, GrooveVector};
use crate::tab::Bar;
use crate::{Error, Result};

pub const DEFAULT_K: usize = 32;
pub const MAX_ITERATIONS: usize = 100;
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub kind: GrooveKind,
    pub k: usize,
    pub seed: u64,
    pub centroids: Vec<Vec<f64>>,
}

/// Per-iteration record of a fit, kept for diagnostics and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    /// Objective after each assignment step.
    pub costs: Vec<f64>,
    /// Final cluster of every input point.
    pub assignments: Vec<usize>,
}

impl FitTrace {
    pub fn final_cost(&self) -> f64 {
        self.costs.last().copied().unwrap_or(0.0)
    }
}

pub fn fit(vectors: &[GrooveVector], k: usize, seed: u64) -> Result<Codebook> {
    fit_traced(vectors, k, seed).map(|(codebook, _)| codebook)
}

pub fn fit_traced(vectors: &[GrooveVector], k: usize, seed: u64) -> Result<(Codebook, FitTrace)> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::domain("cannot fit a codebook on zero vectors"))?;
    if let Some(odd) = vectors.iter().find(|v| v.kind != first.kind) {
        return Err(Error::domain(format!(
            "mixed groove kinds: {} and {}",
            first.kind, odd.kind
        )));
    }
    let points: Vec<&[f64]> = vectors.iter().map(|v| v.values.as_slice()).collect();
    let (centroids, trace) = lloyd(&points, k, seed)?;
    Ok((
        Codebook {
            kind: first.kind,
            k,
            seed,
            centroids,
        },
        trace,
    ))
}

/// Lloyd's algorithm with k-means++ seeding on raw points.
pub fn lloyd(points: &[&[f64]], k: usize, seed: u64) -> Result<(Vec<Vec<f64>>, FitTrace)> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    let dim = points
        .first()
        .ok_or_else(|| Error::domain("cannot fit on zero points"))?
        .len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    if points.iter().flat_map(|p| p.iter()).any(|x| !x.is_finite()) {
        return Err(Error::domain("non-finite component in input"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut costs = Vec::new();
    let (mut assignments, mut dists) = assign_all(points, &centroids);
    costs.push(dists.iter().sum::<f64>());

    for _ in 0..MAX_ITERATIONS {
        update_centroids(points, &assignments, &mut centroids);
        reseed_empty(points, &assignments, &mut dists, &mut centroids);
        let (next_assign, next_dists) = assign_all(points, &centroids);
        let cost: f64 = next_dists.iter().sum();
        let previous = *costs.last().expect("initial cost pushed");
        assignments = next_assign;
        dists = next_dists;
        costs.push(cost);
        if previous - cost < TOLERANCE {
            break;
        }
    }
    Ok((centroids, FitTrace { costs, assignments }))
}

fn plus_plus_init(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())].to_vec());
    let mut nearest: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            // Guard against rounding landing on a zero-weight tail point.
            if nearest[chosen] == 0.0 {
                chosen = nearest
                    .iter()
                    .rposition(|&d| d > 0.0)
                    .expect("total is positive");
            }
            chosen
        } else {
            // Fewer distinct points than k: duplicate centroids.
            rng.gen_range(0..points.len())
        };
        let centroid = points[pick].to_vec();
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &centroid));
        }
        centroids.push(centroid);
    }
    centroids
}

fn assign_all(points: &[&[f64]], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    points
        .par_iter()
        .map(|p| nearest_centroid(p, centroids))
        .unzip()
}

fn nearest_centroid(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (id, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (id, d);
        }
    }
    best
}

fn update_centroids(points: &[&[f64]], assignments: &[usize], centroids: &mut [Vec<f64>]) {
    let dim = centroids[0].len();
    let mut sums = vec![vec![0.0; dim]; centroids.len()];
    let mut counts = vec![0usize; centroids.len()];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p.iter()) {
            *s += x;
        }
    }
    for ((centroid, sum), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
        if n > 0 {
            for (c, s) in centroid.iter_mut().zip(sum) {
                *c = s / n as f64;
            }
        }
    }
}

/// Moves each empty cluster onto the point currently farthest from its own
/// centroid. Distinct empty clusters take distinct points.
fn reseed_empty(
    points: &[&[f64]],
    assignments: &[usize],
    dists: &mut [f64],
    centroids: &mut [Vec<f64>],
) {
    let mut counts = vec![0usize; centroids.len()];
    for &a in assignments {
        counts[a] += 1;
    }
    // Distances relative to the updated centroids.
    for ((d, p), &a) in dists.iter_mut().zip(points).zip(assignments) {
        *d = squared_distance(p, &centroids[a]);
    }
    for (id, &n) in counts.iter().enumerate() {
        if n > 0 {
            continue;
        }
        let (far, &d) = dists
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        if d <= 0.0 {
            continue;
        }
        centroids[id] = points[far].to_vec();
        dists[far] = 0.0;
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Codebook {
    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// Nearest centroid by squared Euclidean distance; ties go to the lowest id.
    pub fn assign(&self, vector: &[f64]) -> Result<usize> {
        if vector.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: vector.len(),
            });
        }
        Ok(nearest_centroid(vector, &self.centroids).0)
    }

    pub fn assign_vector(&self, vector: &GrooveVector) -> Result<usize> {
        if vector.kind != self.kind {
            return Err(Error::domain(format!(
                "codebook fitted on {} vectors, got {}",
                self.kind, vector.kind
            )));
        }
        self.assign(&vector.values)
    }

    pub fn assign_bar(&self, bar: &Bar) -> Result<usize> {
        self.assign(&GrooveVector::of(bar, self.kind).values)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.centroids.len() != self.k {
            return Err(Error::domain(format!(
                "codebook declares k={} but holds {} centroids",
                self.k,
                self.centroids.len()
            )));
        }
        let dim = self.kind.dim();
        for c in &self.centroids {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: c.len(),
                });
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::domain("non-finite centroid component"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("codebook serializes")
    }

    pub fn from_json(text: &str) -> Result<Codebook> {
        let codebook: Codebook = serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("codebook line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        codebook.validate()?;
        Ok(codebook)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Codebook> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Codebook::from_json(&text)
    }
}
