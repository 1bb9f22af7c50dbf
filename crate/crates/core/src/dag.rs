//! Radial neighbors directed acyclic graph.
//!
//! Nodes are ordered subset by subset (all of `D_1`, then `D_2`, ...), and by
//! ascending point index inside a subset. Every pair of locations closer than
//! `rho` is joined by exactly one edge, pointing from the earlier subset to the
//! later one. Nodes of `D_1` after the first additionally receive one edge from
//! their nearest earlier node, which keeps the first layer connected.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{squared_distance, LocationSet, RadiusIndex};
use crate::partition::{validate_partition, AlternatingPartition};

#[derive(Debug, Clone, PartialEq)]
pub struct RadialDag {
    rho: f64,
    /// Point index at each position.
    order: Vec<usize>,
    /// Position of each point index.
    position_of: Vec<usize>,
    /// Subset of the node at each position.
    layer: Vec<usize>,
    /// Compressed parent lists: positions `offsets[i]..offsets[i+1]`.
    offsets: Vec<usize>,
    parents: Vec<usize>,
    /// Locations in position order.
    ordered: LocationSet,
}

/// Builds the DAG for `p` over `locations`. The partition is re-validated.
pub fn build_dag(p: &AlternatingPartition, locations: &LocationSet) -> Result<RadialDag> {
    let report = validate_partition(p, locations)?;
    if let Some(&(i, j, d)) = report.violations.first() {
        return Err(Error::InvalidPartition(format!(
            "points {i} and {j} share a subset at distance {d} < {}",
            p.rho()
        )));
    }
    let rho = p.rho();
    let order: Vec<usize> = p.subsets().iter().flatten().copied().collect();
    let n = order.len();
    let mut position_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        position_of[i] = pos;
    }
    let layer: Vec<usize> = order.iter().map(|&i| p.subset_of(i)).collect();
    let first_layer_len = layer.iter().take_while(|&&l| l == 0).count();

    let index = RadiusIndex::new(locations, rho)?;
    let lists: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|pos| {
            let point = order[pos];
            if layer[pos] == 0 {
                if pos == 0 {
                    return Vec::new();
                }
                // nearest earlier node; ties resolve to the smaller position
                let here = locations.point(point);
                let mut best = (f64::INFINITY, 0);
                for (earlier, &q) in order[..pos.min(first_layer_len)].iter().enumerate() {
                    let d2 = squared_distance(here, locations.point(q));
                    if d2 < best.0 {
                        best = (d2, earlier);
                    }
                }
                return vec![best.1];
            }
            let mut ps: Vec<usize> = index
                .neighbors_of(point)
                .into_iter()
                .map(|j| position_of[j])
                .filter(|&q| layer[q] < layer[pos])
                .collect();
            ps.sort_unstable();
            ps
        })
        .collect();

    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut parents = Vec::new();
    for list in lists {
        parents.extend(list);
        offsets.push(parents.len());
    }
    let ordered = locations.select(&order);
    Ok(RadialDag {
        rho,
        order,
        position_of,
        layer,
        offsets,
        parents,
        ordered,
    })
}

impl RadialDag {
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Point index (into the partition's location set) at each position.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn position_of(&self, point: usize) -> usize {
        self.position_of[point]
    }

    pub fn layer(&self, position: usize) -> usize {
        self.layer[position]
    }

    /// Parent positions of the node at `position`, ascending.
    #[inline]
    pub fn parents(&self, position: usize) -> &[usize] {
        &self.parents[self.offsets[position]..self.offsets[position + 1]]
    }

    pub fn edge_count(&self) -> usize {
        self.parents.len()
    }

    /// Largest parent set size.
    pub fn max_parents(&self) -> usize {
        (0..self.len()).map(|i| self.parents(i).len()).max().unwrap_or(0)
    }

    /// Locations in position order.
    pub fn ordered_locations(&self) -> &LocationSet {
        &self.ordered
    }

    /// `true` when the first `other.len()` positions carry exactly `other`'s
    /// nodes and parent lists.
    pub fn extends(&self, other: &RadialDag) -> bool {
        let m = other.len();
        m <= self.len()
            && self.order[..m] == other.order[..]
            && self.offsets[..=m] == other.offsets[..]
            && self.parents[..self.offsets[m]] == other.parents[..]
    }

    /// Writes `child_position,parent_position` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["child_position", "parent_position"])?;
        for child in 0..self.len() {
            for &parent in self.parents(child) {
                w.write_record([child.to_string(), parent.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Training locations strictly within `rho` of a location outside the graph,
/// ascending training index.
pub fn prediction_parents(dag: &RadialDag, training: &LocationSet, s: &[f64]) -> Result<Vec<usize>> {
    if let Some(index) = training.find(s) {
        return Err(Error::LocationAlreadyObserved { index });
    }
    training.radius_neighbors(s, dag.rho())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::AlternatingPartition;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(n: usize, seed: u64) -> LocationSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        LocationSet::new(pts).unwrap()
    }

    fn dag_for(set: &LocationSet, rho: f64, seed: u64) -> RadialDag {
        let p = AlternatingPartition::new(set, rho, seed).unwrap();
        build_dag(&p, set).unwrap()
    }

    #[test]
    fn two_close_points() {
        let set = LocationSet::new(vec![vec![0.0, 0.0], vec![0.5, 0.0]]).unwrap();
        let dag = dag_for(&set, 1.0, 1);
        assert_eq!(dag.edge_count(), 1);
        assert!(dag.parents(0).is_empty());
        assert_eq!(dag.parents(1), &[0]);
    }

    #[test]
    fn radius_beyond_diameter_gives_complete_graph() {
        let set = random_set(25, 3);
        let dag = dag_for(&set, 2.0, 5);
        for i in 0..dag.len() {
            let expected: Vec<usize> = (0..i)
                .filter(|&j| dag.ordered_locations().dist(i, j) < 2.0)
                .collect();
            assert_eq!(expected, (0..i).collect::<Vec<_>>());
            assert_eq!(dag.parents(i), expected.as_slice());
        }
    }

    #[test]
    fn one_dimensional_chain() {
        let set = LocationSet::new(vec![vec![0.0], vec![0.3], vec![0.6], vec![0.9]]).unwrap();
        let dag = dag_for(&set, 0.4, 2);
        let mut edges = Vec::new();
        for c in 0..dag.len() {
            for &p in dag.parents(c) {
                let (a, b) = (dag.order()[p], dag.order()[c]);
                edges.push((a.min(b), a.max(b)));
            }
        }
        edges.sort_unstable();
        // pairs closer than 0.4 are exactly the consecutive ones
        let oracle: Vec<(usize, usize)> = (0..4)
            .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
            .filter(|&(i, j)| set.dist(i, j) < 0.4)
            .collect();
        assert_eq!(oracle, vec![(0, 1), (1, 2), (2, 3)]);
        // plus first-layer connectors, which join points at least rho apart
        for &(a, b) in &edges {
            assert!(oracle.contains(&(a, b)) || set.dist(a, b) >= 0.4);
        }
        for pair in &oracle {
            assert!(edges.contains(pair));
        }
    }

    #[test]
    fn radial_and_topological_properties() {
        let set = random_set(200, 9);
        let rho = 0.12;
        let dag = dag_for(&set, rho, 4);
        let loc = dag.ordered_locations();
        for i in 0..dag.len() {
            for &p in dag.parents(i) {
                assert!(p < i);
            }
            if dag.layer(i) == 0 && i > 0 {
                assert_eq!(dag.parents(i).len(), 1);
            }
            for j in 0..i {
                if loc.dist(i, j) < rho {
                    let forward = dag.parents(i).contains(&j);
                    let backward = dag.parents(j).contains(&i);
                    assert!(forward ^ backward, "pair ({j},{i})");
                }
            }
        }
    }

    #[test]
    fn first_layer_connector_is_nearest_earlier() {
        let set = random_set(80, 12);
        let dag = dag_for(&set, 0.05, 6);
        let loc = dag.ordered_locations();
        for i in 1..dag.len() {
            if dag.layer(i) != 0 {
                continue;
            }
            let nearest = (0..i)
                .min_by(|&a, &b| loc.dist(i, a).total_cmp(&loc.dist(i, b)))
                .unwrap();
            assert_eq!(dag.parents(i), &[nearest]);
        }
    }

    #[test]
    fn invalid_partition_rejected() {
        let set = LocationSet::new(vec![vec![0.0, 0.0], vec![0.1, 0.0]]).unwrap();
        let p = AlternatingPartition::from_subsets(set.clone(), vec![vec![0, 1]], 1.0).unwrap();
        assert!(build_dag(&p, &set).is_err());
    }

    #[test]
    fn prediction_parent_queries() {
        let train = LocationSet::new(vec![vec![0.0, 0.0]]).unwrap();
        let dag = dag_for(&train, 0.5, 1);
        assert!(prediction_parents(&dag, &train, &[0.5, 0.0]).unwrap().is_empty());
        assert_eq!(prediction_parents(&dag, &train, &[0.25, 0.0]).unwrap(), vec![0]);
        assert!(matches!(
            prediction_parents(&dag, &train, &[0.0, 0.0]),
            Err(Error::LocationAlreadyObserved { index: 0 })
        ));

        let train = random_set(100, 21);
        let dag = dag_for(&train, 0.15, 2);
        let queries = random_set(20, 22);
        for q in queries.points() {
            let oracle: Vec<usize> = (0..train.len())
                .filter(|&j| crate::geometry::distance(train.point(j), q) < 0.15)
                .collect();
            assert_eq!(prediction_parents(&dag, &train, q).unwrap(), oracle);
        }
    }

    #[test]
    fn csv_lists_every_edge() {
        let set = random_set(30, 1);
        let dag = dag_for(&set, 0.3, 1);
        let mut buf = Vec::new();
        dag.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), dag.edge_count() + 1);
        assert!(text.starts_with("child_position,parent_position"));
    }
}
