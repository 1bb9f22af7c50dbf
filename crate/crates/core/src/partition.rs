//! Alternating partitions: groups of locations in which any two members are
//! at least `rho` apart.
//!
//! Partitions are built one location set at a time. Training locations come
//! first; each later test set only appends to the last existing subset or to
//! fresh subsets, so earlier assignments are never revisited.

use std::collections::VecDeque;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{check_radius, LocationSet, RadiusIndex};

/// Seed used when the caller does not supply one.
pub const DEFAULT_PARTITION_SEED: u64 = 20_240_601;

/// One location set `T_k` absorbed into the partition.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSet {
    /// Point indices `start..end` in the partition's location set.
    pub start: usize,
    pub end: usize,
    /// Subsets that received at least one point of this set, ascending.
    pub touched_subsets: Vec<usize>,
    pub seed: u64,
}

impl SourceSet {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlternatingPartition {
    locations: LocationSet,
    rho: f64,
    subset_of: Vec<usize>,
    subsets: Vec<Vec<usize>>,
    sources: Vec<SourceSet>,
}

impl AlternatingPartition {
    /// Partition over no locations.
    pub fn empty(dim: usize, rho: f64) -> Result<Self> {
        check_radius(rho)?;
        Ok(AlternatingPartition {
            locations: LocationSet::empty(dim),
            rho,
            subset_of: Vec::new(),
            subsets: Vec::new(),
            sources: Vec::new(),
        })
    }

    /// Partitions a single (training) set.
    pub fn new(locations: &LocationSet, rho: f64, seed: u64) -> Result<Self> {
        let empty = Self::empty(locations.dim(), rho)?;
        extend_partition(&empty, locations, rho, seed)
    }

    /// Wraps an explicit assignment without checking separation; use
    /// [`validate_partition`] to inspect it. All points form a single source.
    pub fn from_subsets(locations: LocationSet, subsets: Vec<Vec<usize>>, rho: f64) -> Result<Self> {
        check_radius(rho)?;
        let n = locations.len();
        let mut subset_of = vec![usize::MAX; n];
        for (k, members) in subsets.iter().enumerate() {
            for &i in members {
                if i >= n {
                    return Err(Error::InvalidPartition(format!(
                        "subset {k} references point {i} but only {n} locations exist"
                    )));
                }
                if subset_of[i] != usize::MAX {
                    return Err(Error::InvalidPartition(format!(
                        "point {i} assigned to subsets {} and {k}",
                        subset_of[i]
                    )));
                }
                subset_of[i] = k;
            }
        }
        if let Some(i) = subset_of.iter().position(|&s| s == usize::MAX) {
            return Err(Error::InvalidPartition(format!("point {i} is unassigned")));
        }
        let mut subsets = subsets;
        for members in &mut subsets {
            members.sort_unstable();
        }
        let touched = (0..subsets.len()).filter(|&k| !subsets[k].is_empty()).collect();
        Ok(AlternatingPartition {
            locations,
            rho,
            subset_of,
            subsets,
            sources: vec![SourceSet {
                start: 0,
                end: n,
                touched_subsets: touched,
                seed: 0,
            }],
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// All partitioned locations, in the order the sets were added.
    pub fn locations(&self) -> &LocationSet {
        &self.locations
    }

    pub fn len(&self) -> usize {
        self.subset_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subset_of.is_empty()
    }

    /// Number of subsets `M`.
    pub fn subset_count(&self) -> usize {
        self.subsets.len()
    }

    /// Members of each subset, ascending point index.
    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn subset_of(&self, point: usize) -> usize {
        self.subset_of[point]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.subset_of
    }

    pub fn sources(&self) -> &[SourceSet] {
        &self.sources
    }

    /// Writes `point_index,subset_index` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["point_index", "subset_index"])?;
        for (i, s) in self.subset_of.iter().enumerate() {
            w.write_record([i.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`AlternatingPartition::write_csv`] back into
    /// subsets over `locations`.
    pub fn read_csv<R: Read>(reader: R, locations: LocationSet, rho: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut subsets: Vec<Vec<usize>> = Vec::new();
        for row in r.records() {
            let row = row?;
            let parse = |k: usize| -> Result<usize> {
                row.get(k)
                    .ok_or_else(|| Error::Parse("missing partition column".into()))?
                    .trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("partition csv: {e}")))
            };
            let (point, subset) = (parse(0)?, parse(1)?);
            if subsets.len() <= subset {
                subsets.resize(subset + 1, Vec::new());
            }
            subsets[subset].push(point);
        }
        Self::from_subsets(locations, subsets, rho)
    }
}

/// Sequentially extends `existing` with `new_set`.
///
/// Every new point goes to the lowest-numbered admissible subset among
/// `D_m..D_M`, where `m` is the last subset present before the call, or to a
/// fresh subset when all of them hold a point closer than `rho`. Points are
/// visited by a breadth-first sweep over the `rho`-neighborhood graph of the
/// new set, starting from seeded random picks.
pub fn extend_partition(
    existing: &AlternatingPartition,
    new_set: &LocationSet,
    rho: f64,
    seed: u64,
) -> Result<AlternatingPartition> {
    check_radius(rho)?;
    if new_set.is_empty() {
        return Ok(existing.clone());
    }
    if !existing.is_empty() && existing.rho != rho {
        return Err(Error::InvalidPartition(format!(
            "radius {rho} differs from the existing partition radius {}",
            existing.rho
        )));
    }
    if !existing.is_empty() && existing.locations.dim() != new_set.dim() {
        return Err(Error::DimensionMismatch {
            expected: existing.locations.dim(),
            found: new_set.dim(),
        });
    }
    let locations = existing.locations.concat(new_set)?;
    let offset = existing.len();
    let n_new = new_set.len();

    let mut subset_of = existing.subset_of.clone();
    subset_of.resize(offset + n_new, usize::MAX);
    let mut subsets = existing.subsets.clone();
    if subsets.is_empty() {
        subsets.push(Vec::new());
    }
    let first_open = subsets.len() - 1;

    let index = RadiusIndex::new(&locations, rho)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // A1: waiting points (local indices) with O(1) removal by swap.
    let mut waiting: Vec<usize> = (0..n_new).collect();
    let mut slot: Vec<usize> = (0..n_new).collect();
    let mut in_waiting = vec![true; n_new];
    let remove = |waiting: &mut Vec<usize>, slot: &mut Vec<usize>, in_waiting: &mut Vec<bool>, local: usize| {
        if !in_waiting[local] {
            return;
        }
        let at = slot[local];
        let last = *waiting.last().expect("non-empty");
        waiting.swap_remove(at);
        if last != local {
            slot[last] = at;
        }
        in_waiting[local] = false;
    };

    let assign = |global: usize, subset_of: &mut Vec<usize>, subsets: &mut Vec<Vec<usize>>| {
        let mut blocked = vec![false; subsets.len() - first_open];
        for j in index.neighbors_of(global) {
            let s = subset_of[j];
            if s != usize::MAX && s >= first_open {
                blocked[s - first_open] = true;
            }
        }
        let target = match blocked.iter().position(|b| !b) {
            Some(k) => first_open + k,
            None => {
                subsets.push(Vec::new());
                subsets.len() - 1
            }
        };
        subset_of[global] = target;
        subsets[target].push(global);
    };

    let mut queued = vec![false; n_new];
    let mut queue: VecDeque<usize> = VecDeque::new();
    while !waiting.is_empty() {
        let pick = waiting[rng.random_range(0..waiting.len())];
        remove(&mut waiting, &mut slot, &mut in_waiting, pick);
        let g = offset + pick;
        if subset_of[g] == usize::MAX {
            assign(g, &mut subset_of, &mut subsets);
        }
        for j in index.neighbors_of(g) {
            if j >= offset && in_waiting[j - offset] && !queued[j - offset] {
                queued[j - offset] = true;
                queue.push_back(j - offset);
            }
        }
        while let Some(local) = queue.pop_front() {
            remove(&mut waiting, &mut slot, &mut in_waiting, local);
            let g = offset + local;
            let neighbors = index.neighbors_of(g);
            // the open ball around g contains g itself plus its neighbors
            let mut ball: Vec<usize> = neighbors.iter().copied().filter(|&j| j >= offset).collect();
            ball.push(g);
            ball.sort_unstable();
            for s in ball {
                if subset_of[s] == usize::MAX {
                    assign(s, &mut subset_of, &mut subsets);
                }
            }
            for j in neighbors {
                if j >= offset && in_waiting[j - offset] && !queued[j - offset] {
                    queued[j - offset] = true;
                    queue.push_back(j - offset);
                }
            }
        }
    }

    for members in subsets.iter_mut().skip(first_open) {
        members.sort_unstable();
    }
    let touched_subsets = (first_open..subsets.len())
        .filter(|&k| subsets[k].iter().any(|&i| i >= offset))
        .collect();
    let mut sources = existing.sources.clone();
    sources.push(SourceSet {
        start: offset,
        end: offset + n_new,
        touched_subsets,
        seed,
    });
    Ok(AlternatingPartition {
        locations,
        rho,
        subset_of,
        subsets,
        sources,
    })
}

/// Outcome of [`validate_partition`].
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionReport {
    /// Pairs `(i, j, distance)` sharing a subset while closer than `rho`.
    pub violations: Vec<(usize, usize, f64)>,
    pub subset_count: usize,
    /// `sum_k sup_{s in T_k} |U(s, rho) ∩ T_k|`, counting `s` itself.
    pub subset_bound: usize,
    pub within_bound: bool,
}

impl PartitionReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty() && self.within_bound
    }
}

/// Checks the separation property of every subset and the subset-count bound.
pub fn validate_partition(
    p: &AlternatingPartition,
    locations: &LocationSet,
) -> Result<PartitionReport> {
    let n = locations.len();
    if p.len() != n {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} points but {} locations were given",
            p.len(),
            n
        )));
    }
    for (k, members) in p.subsets.iter().enumerate() {
        if let Some(&i) = members.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidPartition(format!(
                "subset {k} references point {i} but only {n} locations exist"
            )));
        }
    }
    let index = RadiusIndex::new(locations, p.rho)?;
    let mut violations = Vec::new();
    for i in 0..n {
        for j in index.neighbors_of(i) {
            if j > i && p.subset_of[i] == p.subset_of[j] {
                violations.push((i, j, locations.dist(i, j)));
            }
        }
    }
    let mut subset_bound = 0;
    for src in &p.sources {
        if src.is_empty() {
            continue;
        }
        let part = locations.select(&(src.start..src.end).collect::<Vec<_>>());
        let local = RadiusIndex::new(&part, p.rho)?;
        subset_bound += (0..part.len())
            .map(|i| local.neighbors_of(i).len() + 1)
            .max()
            .unwrap_or(0);
    }
    Ok(PartitionReport {
        violations,
        subset_count: p.subset_count(),
        subset_bound,
        within_bound: p.subset_count() <= subset_bound,
    })
}
