//! Joint posterior prediction at test locations.
//!
//! The training partition is extended by the test set, so test nodes can have
//! other test nodes among their parents and the predictive draws keep the
//! dependence between nearby test locations.

mod process;
mod response;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dag::{build_dag, RadialDag};
use crate::error::{Error, Result};
use crate::geometry::LocationSet;
use crate::inference::PosteriorDraws;
use crate::kernels::KernelSpec;
use crate::partition::{extend_partition, AlternatingPartition};
use crate::precision::conditional_row;

pub use process::RadialProcess;
pub use response::{response_predictive_moments, ResponsePredictor};

/// Extended partition and DAG over training and test locations.
#[derive(Debug, Clone)]
pub struct PredictionPlan {
    partition: AlternatingPartition,
    dag: RadialDag,
    n_train: usize,
    jitter: f64,
}

/// Extends `training` by `test` and builds the DAG over the union. Training
/// nodes keep their positions and parent lists.
pub fn build_prediction_plan(
    training: &AlternatingPartition,
    test: &LocationSet,
    seed: u64,
) -> Result<PredictionPlan> {
    let n_train = training.len();
    let partition = extend_partition(training, test, training.rho(), seed)?;
    let dag = build_dag(&partition, partition.locations())?;
    debug_assert!(dag.order()[..n_train].iter().all(|&i| i < n_train));
    Ok(PredictionPlan {
        partition,
        dag,
        n_train,
        jitter: 0.0,
    })
}

impl PredictionPlan {
    /// Jitter for the per-node parent blocks, used only if a factorization fails.
    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn dag(&self) -> &RadialDag {
        &self.dag
    }

    pub fn partition(&self) -> &AlternatingPartition {
        &self.partition
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    /// Number of locations added on top of the training set.
    pub fn n_test(&self) -> usize {
        self.dag.len() - self.n_train
    }

    /// Test locations (everything after the training set), in input order.
    pub fn test_locations(&self) -> LocationSet {
        let idx: Vec<usize> = (self.n_train..self.dag.len()).collect();
        self.partition.locations().select(&idx)
    }

    /// Parent positions of test location `t` (input order) in the extended DAG.
    pub fn test_parents(&self, t: usize) -> &[usize] {
        self.dag.parents(self.dag.position_of(self.n_train + t))
    }

    /// Appends another location set; existing structure is unchanged.
    pub fn extend(&self, more: &LocationSet, seed: u64) -> Result<PredictionPlan> {
        let partition = extend_partition(&self.partition, more, self.partition.rho(), seed)?;
        let dag = build_dag(&partition, partition.locations())?;
        Ok(PredictionPlan {
            partition,
            dag,
            n_train: self.n_train,
            jitter: self.jitter,
        })
    }

    /// Conditional coefficients and variances of every test node under `k`.
    pub fn conditionals(&self, k: &KernelSpec) -> Result<TestConditionals> {
        let loc = self.dag.ordered_locations();
        let rows = (self.n_train..self.dag.len())
            .into_par_iter()
            .map(|pos| {
                let parents: Vec<&[f64]> =
                    self.dag.parents(pos).iter().map(|&p| loc.point(p)).collect();
                conditional_row(k, loc.point(pos), &parents, 0.0, self.jitter, pos).map_err(|e| {
                    match e {
                        Error::SingularBlock { min_eigenvalue, .. } => Error::SingularBlock {
                            row: self.dag.order()[pos] - self.n_train,
                            min_eigenvalue,
                        },
                        other => other,
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TestConditionals {
            params: k.params(),
            rows,
        })
    }

    /// One joint draw at the test locations given training values in DAG
    /// position order. Output is in test input order.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        cond: &TestConditionals,
        z_train: &[f64],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if z_train.len() != self.n_train {
            return Err(Error::DimensionMismatch {
                expected: self.n_train,
                found: z_train.len(),
            });
        }
        let n = self.dag.len();
        let mut vals = Vec::with_capacity(n);
        vals.extend_from_slice(z_train);
        for (pos, (coef, d)) in (self.n_train..n).zip(&cond.rows) {
            let mean: f64 = self
                .dag
                .parents(pos)
                .iter()
                .zip(coef)
                .map(|(&p, &b)| b * vals[p])
                .sum();
            let e: f64 = rng.sample(StandardNormal);
            vals.push(mean + d.sqrt() * e);
        }
        let mut out = vec![0.0; n - self.n_train];
        for pos in self.n_train..n {
            out[self.dag.order()[pos] - self.n_train] = vals[pos];
        }
        Ok(out)
    }
}

/// Per-test-node regression coefficients and conditional variances, in
/// extended position order.
#[derive(Debug, Clone)]
pub struct TestConditionals {
    params: Vec<f64>,
    rows: Vec<(Vec<f64>, f64)>,
}

impl TestConditionals {
    pub fn variances(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.1)
    }
}

/// Reuses test conditionals while the kernel parameters stay the same.
#[derive(Debug, Default)]
pub struct ConditionalCache {
    current: Option<TestConditionals>,
    hits: usize,
    misses: usize,
}

impl ConditionalCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, plan: &PredictionPlan, k: &KernelSpec) -> Result<&TestConditionals> {
        let params = k.params();
        let fresh = match &self.current {
            Some(c) => c.params.iter().map(|v| v.to_bits()).ne(params.iter().map(|v| v.to_bits())),
            None => true,
        };
        if fresh {
            self.misses += 1;
            self.current = Some(plan.conditionals(k)?);
        } else {
            self.hits += 1;
        }
        Ok(self.current.as_ref().expect("filled above"))
    }

    /// `(hits, misses)`
    pub fn stats(&self) -> (usize, usize) {
        (self.hits, self.misses)
    }
}

/// Joint test draws for every stored latent draw of a latent-model chain.
/// `draws.latent` holds training values in training input order; each draw
/// uses `draws.kernel` with that iteration's variance and range. Returns
/// `(iteration, values)` pairs.
pub fn sample_prediction<R: Rng + ?Sized>(
    plan: &PredictionPlan,
    draws: &PosteriorDraws,
    rng: &mut R,
) -> Result<Vec<(usize, Vec<f64>)>> {
    if draws.latent.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut cache = ConditionalCache::new();
    let order = &plan.dag.order()[..plan.n_train];
    let mut out = Vec::with_capacity(draws.latent.len());
    for (iteration, z) in &draws.latent {
        if z.len() != plan.n_train {
            return Err(Error::DimensionMismatch {
                expected: plan.n_train,
                found: z.len(),
            });
        }
        let theta = draws.theta[*iteration - 1];
        let k = draws.kernel.with_theta(theta)?;
        let cond = cache.get(plan, &k)?;
        let z_pos: Vec<f64> = order.iter().map(|&i| z[i]).collect();
        out.push((*iteration, plan.sample(cond, &z_pos, rng)?));
    }
    Ok(out)
}
