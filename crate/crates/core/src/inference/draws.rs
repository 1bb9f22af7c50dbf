use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::Write;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Latent,
    Response,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Latent => "latent",
            ModelKind::Response => "response",
        }
    }
}

/// Counts for the kernel-parameter (and, in the response model, nugget)
/// update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AcceptanceStats {
    pub proposals: usize,
    pub accepted: usize,
    /// Proposals outside the prior support or with an unbuildable factor.
    pub rejected_outright: usize,
    /// Counts restricted to iterations at or after burn-in.
    pub post_burn_proposals: usize,
    pub post_burn_accepted: usize,
}

impl AcceptanceStats {
    pub(crate) fn record(&mut self, accepted: bool, outright: bool, post_burn: bool) {
        self.proposals += 1;
        self.accepted += accepted as usize;
        self.rejected_outright += outright as usize;
        if post_burn {
            self.post_burn_proposals += 1;
            self.post_burn_accepted += accepted as usize;
        }
    }

    pub fn rate(&self) -> f64 {
        ratio(self.accepted, self.proposals)
    }

    pub fn post_burn_rate(&self) -> f64 {
        ratio(self.post_burn_accepted, self.post_burn_proposals)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        f64::NAN
    } else {
        a as f64 / b as f64
    }
}

/// Joint draw at the test locations for one retained iteration, in test input
/// order. In the response model `latent` is the noisy spatial term.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDraw {
    pub iteration: usize,
    pub latent: Vec<f64>,
    pub response: Vec<f64>,
}

/// Output of one chain. Parameter vectors have one entry per iteration
/// `1..=l1`; latent and prediction draws only for retained iterations.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub model: ModelKind,
    /// Kernel at initialization; fixed shape parameters come from here.
    pub kernel: KernelSpec,
    pub beta: Vec<Vec<f64>>,
    pub sigma2: Vec<f64>,
    pub theta: Vec<[f64; 2]>,
    /// `(iteration, z)` with `z` in training input order.
    pub latent: Vec<(usize, Vec<f64>)>,
    pub predictions: Vec<PredictionDraw>,
    pub l1: usize,
    pub l2: usize,
    pub seed: u64,
    pub rho: f64,
    pub acceptance: AcceptanceStats,
    /// Conjugate-gradient iterations per sweep (latent model only).
    pub cg_iterations: Vec<usize>,
    pub config_hash: u64,
}

impl PosteriorDraws {
    pub(crate) fn new(model: ModelKind, kernel: KernelSpec, l1: usize, l2: usize, seed: u64, rho: f64, config: &impl std::fmt::Debug) -> Self {
        let mut h = DefaultHasher::new();
        format!("{config:?}").hash(&mut h);
        PosteriorDraws {
            model,
            kernel,
            beta: Vec::with_capacity(l1),
            sigma2: Vec::with_capacity(l1),
            theta: Vec::with_capacity(l1),
            latent: Vec::new(),
            predictions: Vec::new(),
            l1,
            l2,
            seed,
            rho,
            acceptance: AcceptanceStats::default(),
            cg_iterations: Vec::new(),
            config_hash: h.finish(),
        }
    }

    pub fn len(&self) -> usize {
        self.sigma2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma2.is_empty()
    }

    pub fn theta_names(&self) -> &'static [&'static str] {
        self.kernel.family().theta_names()
    }

    /// 0-based indices of iterations at or after burn-in.
    fn post_burn(&self) -> std::ops::Range<usize> {
        self.l2.saturating_sub(1).min(self.len())..self.len()
    }

    /// Posterior means of `(sigma2, theta_0, theta_1)` over iterations at or
    /// after burn-in.
    pub fn posterior_means(&self) -> Result<[f64; 3]> {
        let r = self.post_burn();
        if r.is_empty() {
            return Err(Error::EmptySamples);
        }
        let n = r.len() as f64;
        let mut m = [0.0; 3];
        for l in r {
            m[0] += self.sigma2[l];
            m[1] += self.theta[l][0];
            m[2] += self.theta[l][1];
        }
        Ok(m.map(|v| v / n))
    }

    /// Posterior mean of each coefficient over iterations at or after burn-in.
    pub fn beta_mean(&self) -> Result<Vec<f64>> {
        let r = self.post_burn();
        if r.is_empty() {
            return Err(Error::EmptySamples);
        }
        let p = self.beta.first().map_or(0, Vec::len);
        let n = r.len() as f64;
        let mut m = vec![0.0; p];
        for l in r {
            for (a, b) in m.iter_mut().zip(&self.beta[l]) {
                *a += b / n;
            }
        }
        Ok(m)
    }

    /// Post-burn draws of one parameter: `0` is `sigma2`, `1` and `2` the
    /// kernel variance and range.
    pub fn parameter_trace(&self, which: usize) -> Vec<f64> {
        self.post_burn()
            .map(|l| match which {
                0 => self.sigma2[l],
                1 => self.theta[l][0],
                _ => self.theta[l][1],
            })
            .collect()
    }

    /// Prediction draws as rows `draw x location`.
    pub fn prediction_matrix(&self, response: bool) -> Vec<Vec<f64>> {
        self.predictions
            .iter()
            .map(|d| if response { d.response.clone() } else { d.latent.clone() })
            .collect()
    }

    /// One row per iteration: `iteration,beta_0..,sigma2,theta_*`.
    pub fn write_params_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let p = self.beta.first().map_or(0, Vec::len);
        let mut header = vec!["iteration".to_string()];
        header.extend((0..p).map(|j| format!("beta_{j}")));
        header.push("sigma2".into());
        header.extend(self.theta_names().iter().map(|n| format!("theta_{n}")));
        w.write_record(&header)?;
        for l in 0..self.len() {
            let mut rec = vec![(l + 1).to_string()];
            rec.extend(self.beta[l].iter().map(|v| fmt(*v)));
            rec.push(fmt(self.sigma2[l]));
            rec.extend(self.theta[l].iter().map(|v| fmt(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `iteration,location_index,value` for each prediction draw.
    pub fn write_predictions_csv<W: Write>(&self, writer: W, response: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iteration", "location_index", "value"])?;
        for d in &self.predictions {
            let vals = if response { &d.response } else { &d.latent };
            for (i, v) in vals.iter().enumerate() {
                w.write_record([d.iteration.to_string(), i.to_string(), fmt(*v)])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `iteration,location_index,value` for the stored training latent draws.
    pub fn write_latent_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iteration", "location_index", "value"])?;
        for (it, z) in &self.latent {
            for (i, v) in z.iter().enumerate() {
                w.write_record([it.to_string(), i.to_string(), fmt(*v)])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `key = value` lines describing the run.
    pub fn write_metadata<W: Write>(&self, mut w: W) -> Result<()> {
        let a = &self.acceptance;
        writeln!(w, "model = {}", self.model.name())?;
        writeln!(w, "kernel = {}", self.kernel.family())?;
        writeln!(w, "kernel_params = {:?}", self.kernel.params())?;
        writeln!(w, "rho = {:.16e}", self.rho)?;
        writeln!(w, "seed = {}", self.seed)?;
        writeln!(w, "config_hash = {:016x}", self.config_hash)?;
        writeln!(w, "l1 = {}", self.l1)?;
        writeln!(w, "l2 = {}", self.l2)?;
        writeln!(w, "proposals = {}", a.proposals)?;
        writeln!(w, "accepted = {}", a.accepted)?;
        writeln!(w, "rejected_outright = {}", a.rejected_outright)?;
        writeln!(w, "acceptance_rate = {:.6}", a.rate())?;
        writeln!(w, "post_burn_acceptance_rate = {:.6}", a.post_burn_rate())?;
        if !self.cg_iterations.is_empty() {
            let n = self.cg_iterations.len() as f64;
            let mean = self.cg_iterations.iter().sum::<usize>() as f64 / n;
            let max = self.cg_iterations.iter().max().copied().unwrap_or(0);
            writeln!(w, "cg_iterations_mean = {mean:.3}")?;
            writeln!(w, "cg_iterations_max = {max}")?;
        }
        writeln!(w, "prediction_draws = {}", self.predictions.len())?;
        Ok(())
    }
}

pub(crate) fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}
