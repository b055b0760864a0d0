//! Channel knowledge map: per-cell expected SINR over the lattice.
//!
//! Each cell stores the Jensen lower bound of the expected SINR evaluated at
//! its center (in dB), whether it has been measured, the current estimate
//! (truth where measured, Kriging elsewhere), the Kriging variance and the
//! associated base station.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::grid::{GridIndex, GridSpec};

use crate::env::{linear_to_db, UrbanScenario};
use crate::error::{Error, Result};
use crate::kriging::{self, FittedModel, KrigingEngine, KrigingSettings};
use crate::vec3::Point3;

/// Expected SINR lower bound (dB) at `p` and the associated station (0-based).
///
/// Every station is tried as the serving one; the best ratio wins and ties go
/// to the lower index.
pub fn expected_sinr_db(scenario: &UrbanScenario, p: Point3) -> Result<(f64, usize)> {
    let rx = scenario.mean_received_mw(p)?;
    let (ratio, m) = best_sinr(&rx, scenario.radio.noise_mw());
    Ok((linear_to_db(ratio), m))
}

/// Max over `m` of `rx[m] / (sum_{m' != m} rx[m'] + noise)`, lowest index on ties.
pub fn best_sinr(rx: &[f64], noise_mw: f64) -> (f64, usize) {
    let total: f64 = rx.iter().sum();
    let mut best = (f64::NEG_INFINITY, 0);
    for (m, &s) in rx.iter().enumerate() {
        let ratio = s / (total - s + noise_mw);
        if ratio > best.0 {
            best = (ratio, m);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelKnowledgeMap {
    pub spec: GridSpec,
    pub gamma_th_db: f64,
    pub truth_sinr_db: Vec<f64>,
    pub measured: Vec<bool>,
    pub estimate_sinr_db: Vec<f64>,
    pub variance: Vec<f64>,
    /// Serving station per cell, 0-based.
    pub association: Vec<usize>,
}

impl ChannelKnowledgeMap {
    /// Ground-truth map: every cell evaluated at its center and marked measured.
    pub fn build_ground_truth(
        scenario: &UrbanScenario,
        spec: GridSpec,
        gamma_th_db: f64,
    ) -> Result<Self> {
        scenario.validate()?;
        let cells: Vec<(f64, usize)> = (0..spec.len())
            .into_par_iter()
            .map(|l| expected_sinr_db(scenario, spec.center_of(l)))
            .collect::<Result<_>>()?;
        let truth: Vec<f64> = cells.iter().map(|c| c.0).collect();
        Ok(ChannelKnowledgeMap {
            spec,
            gamma_th_db,
            estimate_sinr_db: truth.clone(),
            truth_sinr_db: truth,
            measured: vec![true; spec.len()],
            variance: vec![0.0; spec.len()],
            association: cells.iter().map(|c| c.1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.spec.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn measured_count(&self) -> usize {
        self.measured.iter().filter(|&&m| m).count()
    }

    /// Marks exactly `floor(fraction * len)` cells unmeasured, chosen by a
    /// seeded shuffle. Estimates at masked cells are left as they were; call
    /// [`KrigingEngine::complete`] (or use [`Self::mask_partial`]) to fill them.
    pub fn apply_mask(&self, missing_fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&missing_fraction) {
            return Err(Error::invalid("missing_fraction", "must lie in [0, 1)"));
        }
        let n_mask = (missing_fraction * self.len() as f64).floor() as usize;
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut out = self.clone();
        for &l in &order[..n_mask] {
            out.measured[l] = false;
        }
        Ok(out)
    }

    /// Partial map: masks cells, fits the semivariogram on the remaining
    /// measurements and fills the masked cells by Kriging.
    ///
    /// The fitted model is `None` when nothing was masked.
    pub fn mask_partial(
        &self,
        missing_fraction: f64,
        seed: u64,
        settings: &KrigingSettings,
    ) -> Result<(Self, Option<FittedModel>)> {
        let mut out = self.apply_mask(missing_fraction, seed)?;
        if out.measured.iter().all(|&m| m) {
            return Ok((out, None));
        }
        let fit = kriging::fit_from_map(&out, settings)?;
        let engine = KrigingEngine::new(fit.model, settings.neighborhood(), &out.spec);
        engine.complete(&mut out)?;
        Ok((out, Some(fit)))
    }

    /// Records a measurement: the cell's estimate becomes `value` and its variance 0.
    pub fn mark_measured(&mut self, linear: usize, value: f64) {
        self.measured[linear] = true;
        self.estimate_sinr_db[linear] = value;
        self.variance[linear] = 0.0;
    }

    /// Outage indicator: measured cells use the truth, unmeasured ones the estimate.
    pub fn is_outage(&self, idx: GridIndex) -> Result<bool> {
        self.spec.check(idx)?;
        Ok(self.outage_at(self.spec.linear(idx)))
    }

    #[inline]
    pub fn outage_at(&self, linear: usize) -> bool {
        let v = if self.measured[linear] {
            self.truth_sinr_db[linear]
        } else {
            self.estimate_sinr_db[linear]
        };
        v < self.gamma_th_db
    }

    pub fn outage_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|l| self.outage_at(l)).collect()
    }
}
