//! Uniform hash grid for fixed-radius and k-nearest queries on small-dimensional points.

use std::collections::HashMap;

/// Buckets point indices by `floor(coord / cell)` in every dimension.
///
/// Radius queries are exact for any metric that dominates the per-coordinate
/// difference (Euclidean, HyAB, ...); the grid only prunes candidates.
#[derive(Debug, Clone)]
pub struct HashGrid<const D: usize> {
    cell: f64,
    buckets: HashMap<[i64; D], Vec<usize>>,
}

impl<const D: usize> HashGrid<D> {
    pub fn new(points: &[[f64; D]], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell must be positive");
        let mut buckets: HashMap<[i64; D], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key_of(cell, p)).or_default().push(i);
        }
        Self { cell, buckets }
    }

    /// Like [`HashGrid::new`] but only indexes the given subset of `points`.
    pub fn from_subset(points: &[[f64; D]], ids: &[usize], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell must be positive");
        let mut buckets: HashMap<[i64; D], Vec<usize>> = HashMap::new();
        for &i in ids {
            buckets.entry(Self::key_of(cell, &points[i])).or_default().push(i);
        }
        Self { cell, buckets }
    }

    fn key_of(cell: f64, p: &[f64; D]) -> [i64; D] {
        let mut k = [0i64; D];
        for d in 0..D {
            k[d] = (p[d] / cell).floor() as i64;
        }
        k
    }

    fn for_each_in_cells(&self, center: [i64; D], reach: i64, mut f: impl FnMut(usize)) {
        let span = (2 * reach + 1) as usize;
        let total = span.pow(D as u32);
        let mut key = [0i64; D];
        for flat in 0..total {
            let mut rem = flat;
            for d in 0..D {
                key[d] = center[d] - reach + (rem % span) as i64;
                rem /= span;
            }
            if let Some(ids) = self.buckets.get(&key) {
                for &i in ids {
                    f(i);
                }
            }
        }
    }

    /// Appends to `out` every indexed point `j` with `dist(j) <= radius`, in ascending index order.
    pub fn within(
        &self,
        query: &[f64; D],
        radius: f64,
        dist: impl Fn(usize) -> f64,
        out: &mut Vec<usize>,
    ) {
        let start = out.len();
        let reach = (radius / self.cell).ceil() as i64;
        self.for_each_in_cells(Self::key_of(self.cell, query), reach, |j| {
            if dist(j) <= radius {
                out.push(j);
            }
        });
        out[start..].sort_unstable();
    }

    /// The `k` nearest indexed points to `query` by Euclidean distance, excluding `skip`.
    ///
    /// Returns `(index, distance)` sorted by distance then index.
    pub fn knn(&self, points: &[[f64; D]], query: &[f64; D], k: usize, skip: Option<usize>) -> Vec<(usize, f64)> {
        let total: usize = self.buckets.values().map(Vec::len).sum();
        let available = total - usize::from(skip.is_some());
        let k = k.min(available);
        if k == 0 {
            return Vec::new();
        }
        let center = Self::key_of(self.cell, query);
        let mut reach = 0i64;
        loop {
            let mut found: Vec<(usize, f64)> = Vec::new();
            self.for_each_in_cells(center, reach, |j| {
                if Some(j) != skip {
                    found.push((j, euclid(&points[j], query)));
                }
            });
            found.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            // Every point outside the searched block is at least `reach * cell` away.
            let guaranteed = reach as f64 * self.cell;
            if found.len() >= k && found[k - 1].1 <= guaranteed {
                found.truncate(k);
                return found;
            }
            if found.len() == available {
                found.truncate(k);
                return found;
            }
            reach += 1;
        }
    }
}

pub fn euclid<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for d in 0..D {
        let t = a[d] - b[d];
        s += t * t;
    }
    s.sqrt()
}
