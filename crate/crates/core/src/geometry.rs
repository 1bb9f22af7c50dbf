//! Coordinates, Euclidean distances and fixed-radius neighbor search.
//!
//! Neighborhoods are *open* balls everywhere in this crate: a point at a
//! distance of exactly `rho` is **not** a neighbor. The query point itself is
//! never reported either.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

/// Below this many points a neighbor query scans the whole set.
const LINEAR_SCAN_THRESHOLD: usize = 256;

/// Grid cells are enumerated over `3^d` neighbors, which stops paying off in
/// higher dimensions.
const MAX_GRID_DIM: usize = 4;

/// Euclidean distance between two coordinate slices of equal length.
#[inline]
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn coordinate_key(point: &[f64]) -> Vec<u64> {
    // adding 0.0 folds -0.0 into +0.0
    point.iter().map(|x| (x + 0.0).to_bits()).collect()
}

/// An ordered set of distinct points in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationSet {
    dim: usize,
    coords: Vec<f64>,
}

impl LocationSet {
    /// Builds a set from individual points, rejecting non-finite coordinates,
    /// ragged dimensions and exact duplicates.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        Self::with_dim(dim, points)
    }

    /// Like [`LocationSet::new`] but with an explicit dimension so that empty
    /// sets still carry one.
    pub fn with_dim(dim: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 && !points.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        let mut coords = Vec::with_capacity(dim * points.len());
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteCoordinate { index: i });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords)
    }

    /// Builds a set from row-major coordinates.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            if coords.is_empty() {
                return Ok(LocationSet { dim, coords });
            }
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if coords.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: coords.len() % dim,
            });
        }
        if let Some(pos) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteCoordinate { index: pos / dim });
        }
        let set = LocationSet { dim, coords };
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::with_capacity(set.len());
        for i in 0..set.len() {
            if let Some(&first) = seen.get(&coordinate_key(set.point(i))) {
                return Err(Error::DuplicateLocation { first, second: i });
            }
            seen.insert(coordinate_key(set.point(i)), i);
        }
        Ok(set)
    }

    pub fn empty(dim: usize) -> Self {
        LocationSet {
            dim,
            coords: Vec::new(),
        }
    }

    /// Regular grid with `per_side` points per axis spanning `[0, 1]^d`.
    pub fn unit_grid(per_side: usize, dim: usize) -> Self {
        let step = if per_side > 1 {
            1.0 / (per_side - 1) as f64
        } else {
            0.0
        };
        let n = per_side.pow(dim as u32);
        let mut coords = Vec::with_capacity(n * dim);
        for i in 0..n {
            let mut rest = i;
            for _ in 0..dim {
                coords.push((rest % per_side) as f64 * step);
                rest /= per_side;
            }
        }
        LocationSet { dim, coords }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.coords.len() / self.dim
        }
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim.max(1))
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.points().map(<[f64]>::to_vec).collect()
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        distance(self.point(i), self.point(j))
    }

    /// Index of a point with exactly these coordinates, if any.
    pub fn find(&self, point: &[f64]) -> Option<usize> {
        let key = coordinate_key(point);
        (0..self.len()).find(|&i| coordinate_key(self.point(i)) == key)
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> LocationSet {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        LocationSet {
            dim: self.dim,
            coords,
        }
    }

    /// Appends `other` after `self`. Fails if the union contains duplicates;
    /// the error reports `other`'s index and the clashing index in `self`.
    pub fn concat(&self, other: &LocationSet) -> Result<LocationSet> {
        if other.is_empty() {
            return Ok(self.clone());
        }
        if self.is_empty() {
            return Ok(other.clone());
        }
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let existing: HashMap<Vec<u64>, usize> = (0..self.len())
            .map(|i| (coordinate_key(self.point(i)), i))
            .collect();
        for j in 0..other.len() {
            if let Some(&i) = existing.get(&coordinate_key(other.point(j))) {
                return Err(Error::AlreadyPartitioned {
                    index: j,
                    existing: i,
                });
            }
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Ok(LocationSet {
            dim: self.dim,
            coords,
        })
    }

    /// Smallest pairwise Euclidean distance.
    pub fn min_separation(&self) -> Result<f64> {
        min_separation(self)
    }

    /// Indices `j` with `0 < |w_j - s| < rho`, ascending. Linear scan; build a
    /// [`RadiusIndex`] for repeated queries.
    pub fn radius_neighbors(&self, s: &[f64], rho: f64) -> Result<Vec<usize>> {
        check_radius(rho)?;
        if s.len() != self.dim && !self.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: s.len(),
            });
        }
        let r2 = rho * rho;
        Ok((0..self.len())
            .filter(|&j| {
                let d2 = squared_distance(self.point(j), s);
                d2 > 0.0 && d2 < r2 && d2.sqrt() < rho
            })
            .collect())
    }

    /// Largest pairwise distance (brute force).
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                best = best.max(self.dist(i, j));
            }
        }
        best
    }
}

pub(crate) fn check_radius(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidRadius(rho))
    }
}

/// Minimal separation distance `q`: a sweep over points sorted by the first
/// coordinate, pruning pairs whose first-coordinate gap already exceeds the
/// best distance found.
pub fn min_separation(set: &LocationSet) -> Result<f64> {
    let n = set.len();
    if n < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            found: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| set.point(a)[0].total_cmp(&set.point(b)[0]));
    let mut best2 = f64::INFINITY;
    for (k, &i) in order.iter().enumerate() {
        let xi = set.point(i)[0];
        for &j in &order[k + 1..] {
            let gap = set.point(j)[0] - xi;
            if gap * gap >= best2 {
                break;
            }
            best2 = best2.min(squared_distance(set.point(i), set.point(j)));
        }
    }
    Ok(best2.sqrt())
}

/// Fixed-radius neighbor search over a [`LocationSet`].
///
/// Uses a uniform hash grid with cell width `rho` once the set is large
/// enough, and a linear scan otherwise. Results never depend on which
/// strategy is active.
#[derive(Debug, Clone)]
pub struct RadiusIndex<'a> {
    set: &'a LocationSet,
    rho: f64,
    grid: Option<HashMap<Vec<i64>, Vec<usize>>>,
}

impl<'a> RadiusIndex<'a> {
    pub fn new(set: &'a LocationSet, rho: f64) -> Result<Self> {
        check_radius(rho)?;
        let use_grid = set.len() >= LINEAR_SCAN_THRESHOLD && set.dim() <= MAX_GRID_DIM;
        Ok(Self::build(set, rho, use_grid))
    }

    /// Forces the grid (or linear scan) regardless of size.
    pub fn with_strategy(set: &'a LocationSet, rho: f64, grid: bool) -> Result<Self> {
        check_radius(rho)?;
        Ok(Self::build(set, rho, grid))
    }

    fn build(set: &'a LocationSet, rho: f64, use_grid: bool) -> Self {
        let grid = use_grid.then(|| {
            let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
            for i in 0..set.len() {
                cells.entry(cell_of(set.point(i), rho)).or_default().push(i);
            }
            cells
        });
        RadiusIndex { set, rho, grid }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn set(&self) -> &LocationSet {
        self.set
    }

    /// Indices `j` with `0 < |w_j - s| < rho`, ascending.
    pub fn query(&self, s: &[f64]) -> Vec<usize> {
        let r2 = self.rho * self.rho;
        let keep = |j: usize| {
            let d2 = squared_distance(self.set.point(j), s);
            d2 > 0.0 && d2 < r2 && d2.sqrt() < self.rho
        };
        let Some(grid) = &self.grid else {
            return (0..self.set.len()).filter(|&j| keep(j)).collect();
        };
        let center = cell_of(s, self.rho);
        let dim = center.len();
        let mut out = Vec::new();
        let mut offset = vec![-1i64; dim];
        loop {
            let key: Vec<i64> = center.iter().zip(&offset).map(|(c, o)| c + o).collect();
            if let Some(members) = grid.get(&key) {
                out.extend(members.iter().copied().filter(|&j| keep(j)));
            }
            // odometer over {-1, 0, 1}^d
            let mut axis = 0;
            while axis < dim {
                offset[axis] += 1;
                if offset[axis] <= 1 {
                    break;
                }
                offset[axis] = -1;
                axis += 1;
            }
            if axis == dim {
                break;
            }
        }
        out.sort_unstable();
        out
    }

    /// Neighbors of the `i`-th point of the indexed set.
    pub fn neighbors_of(&self, i: usize) -> Vec<usize> {
        self.query(self.set.point(i))
    }
}

fn cell_of(p: &[f64], width: f64) -> Vec<i64> {
    p.iter().map(|x| (x / width).floor() as i64).collect()
}

/// Distinct-coordinate check for a collection of raw points.
pub fn all_distinct(points: &[Vec<f64>]) -> bool {
    let mut seen = HashSet::with_capacity(points.len());
    points.iter().all(|p| seen.insert(coordinate_key(p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(n: usize, dim: usize, seed: u64) -> LocationSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
            .collect();
        LocationSet::new(pts).unwrap()
    }

    fn brute_min(set: &LocationSet) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..set.len() {
            for j in i + 1..set.len() {
                best = best.min(set.dist(i, j));
            }
        }
        best
    }

    #[test]
    fn min_separation_examples() {
        let s = LocationSet::new(vec![vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(s.min_separation().unwrap(), 5.0);
        let g = LocationSet::unit_grid(2, 2);
        assert_eq!(g.min_separation().unwrap(), 1.0);
        let r = random_set(50, 2, 7);
        assert_eq!(r.min_separation().unwrap(), brute_min(&r));
    }

    #[test]
    fn min_separation_needs_two_points() {
        let s = LocationSet::new(vec![vec![0.5]]).unwrap();
        assert!(matches!(
            s.min_separation(),
            Err(Error::InsufficientPoints { found: 1, .. })
        ));
    }

    #[test]
    fn duplicates_and_bad_coordinates_rejected() {
        let dup = LocationSet::new(vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![-0.0, 1.0]]);
        assert!(matches!(
            dup,
            Err(Error::DuplicateLocation {
                first: 0,
                second: 2
            })
        ));
        assert!(LocationSet::new(vec![vec![0.0, f64::NAN]]).is_err());
        assert!(LocationSet::new(vec![vec![0.0, 1.0], vec![1.0]]).is_err());
    }

    #[test]
    fn open_ball_boundary() {
        let s = LocationSet::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(s.radius_neighbors(&[0.0, 0.0], 1.0).unwrap().is_empty());
        assert_eq!(s.radius_neighbors(&[0.0, 0.0], 1.01).unwrap(), vec![1]);
        assert!(s.radius_neighbors(&[0.0, 0.0], 0.0).is_err());
        assert!(s.radius_neighbors(&[0.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn grid_matches_linear_scan() {
        for dim in 1..=3 {
            let set = random_set(300, dim, 11 + dim as u64);
            let grid = RadiusIndex::with_strategy(&set, 0.2, true).unwrap();
            let scan = RadiusIndex::with_strategy(&set, 0.2, false).unwrap();
            for i in 0..set.len() {
                let oracle: Vec<usize> = (0..set.len())
                    .filter(|&j| {
                        let d = set.dist(i, j);
                        d > 0.0 && d < 0.2
                    })
                    .collect();
                assert_eq!(grid.neighbors_of(i), oracle);
                assert_eq!(scan.neighbors_of(i), oracle);
            }
        }
    }

    #[test]
    fn hundred_points_match_oracle() {
        let set = random_set(100, 2, 3);
        let idx = RadiusIndex::new(&set, 0.2).unwrap();
        for i in 0..set.len() {
            let oracle: Vec<usize> = (0..set.len())
                .filter(|&j| j != i && set.dist(i, j) < 0.2)
                .collect();
            assert_eq!(idx.neighbors_of(i), oracle);
        }
    }

    #[test]
    fn unit_grid_layout() {
        let g = LocationSet::unit_grid(3, 2);
        assert_eq!(g.len(), 9);
        assert_eq!(g.point(0), &[0.0, 0.0]);
        assert_eq!(g.point(1), &[0.5, 0.0]);
        assert_eq!(g.point(8), &[1.0, 1.0]);
    }

    #[test]
    fn concat_rejects_overlap() {
        let a = LocationSet::unit_grid(2, 2);
        let b = LocationSet::new(vec![vec![0.5, 0.5], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            a.concat(&b),
            Err(Error::AlreadyPartitioned { index: 1, existing: 3 })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn points(dim: usize) -> impl Strategy<Value = LocationSet> {
            prop::collection::vec(prop::collection::vec(0.0f64..1.0, dim), 2..60).prop_filter_map(
                "distinct",
                |pts| LocationSet::new(pts).ok(),
            )
        }

        proptest! {
            #[test]
            fn neighbor_symmetry(set in points(2), rho in 0.01f64..0.8) {
                let idx = RadiusIndex::with_strategy(&set, rho, true).unwrap();
                let lists: Vec<Vec<usize>> = (0..set.len()).map(|i| idx.neighbors_of(i)).collect();
                let q = set.min_separation().unwrap();
                for i in 0..set.len() {
                    for &j in &lists[i] {
                        prop_assert!(lists[j].contains(&i));
                        prop_assert!(q <= set.dist(i, j));
                    }
                }
            }

            #[test]
            fn index_strategy_irrelevant(set in points(3), rho in 0.01f64..0.8) {
                let grid = RadiusIndex::with_strategy(&set, rho, true).unwrap();
                let scan = RadiusIndex::with_strategy(&set, rho, false).unwrap();
                for i in 0..set.len() {
                    prop_assert_eq!(grid.neighbors_of(i), scan.neighbors_of(i));
                }
            }
        }
    }
}
