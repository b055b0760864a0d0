//! Synthetic urban radio environment.
//!
//! One realization of a statistical city (rectangular buildings placed at a
//! given density, Rayleigh-distributed heights) plus the ground base stations
//! and the deterministic link quantities the map is built from: large-scale
//! gain under a log-distance law with a LoS/NLoS switch, the vertical
//! beampattern of a downtilted uniform linear array, and unit-mean
//! exponential small-scale fading.
//!
//! Units: lengths in meters, powers in dBm, gains in dB.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::{self, Point3};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Floor applied to the linear array factor so exact array nulls stay finite in dB.
pub const ARRAY_FACTOR_FLOOR: f64 = 1e-3;

/// Axis-aligned box `[x_L, x_U] x [y_L, y_U] x [z_L, z_U]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: [f64; 2],
}

impl Bounds {
    pub fn new(x: [f64; 2], y: [f64; 2], z: [f64; 2]) -> Result<Self> {
        let b = Bounds { x, y, z };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (axis, r) in [('x', self.x), ('y', self.y), ('z', self.z)] {
            if !(r[0].is_finite() && r[1].is_finite()) || r[1] <= r[0] {
                return Err(Error::DegenerateBounds { axis });
            }
        }
        Ok(())
    }

    pub fn lower(&self) -> Point3 {
        [self.x[0], self.y[0], self.z[0]]
    }

    pub fn extent(&self) -> Point3 {
        [
            self.x[1] - self.x[0],
            self.y[1] - self.y[0],
            self.z[1] - self.z[0],
        ]
    }

    /// Ground footprint area in square kilometers.
    pub fn area_km2(&self) -> f64 {
        let e = self.extent();
        e[0] * e[1] * 1e-6
    }
}

/// Rectangular building standing on the ground plane (`z = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub height: f64,
}

impl Building {
    /// Whether `p` lies strictly inside the building volume.
    pub fn contains(&self, p: Point3) -> bool {
        p[0] > self.x[0]
            && p[0] < self.x[1]
            && p[1] > self.y[0]
            && p[1] < self.y[1]
            && p[2] > 0.0
            && p[2] < self.height
    }

    /// Exact test of the open segment `p`-`q` against the open box.
    ///
    /// Slab method on open intervals: touching a face, edge or roof is not
    /// an intersection.
    pub fn blocks(&self, p: Point3, q: Point3) -> bool {
        let lo = [self.x[0], self.y[0], 0.0];
        let hi = [self.x[1], self.y[1], self.height];
        let d = vec3::sub(q, p);
        let mut t_enter = 0.0_f64;
        let mut t_exit = 1.0_f64;
        for a in 0..3 {
            if d[a] == 0.0 {
                if !(p[a] > lo[a] && p[a] < hi[a]) {
                    return false;
                }
            } else {
                let t1 = (lo[a] - p[a]) / d[a];
                let t2 = (hi[a] - p[a]) / d[a];
                t_enter = t_enter.max(t1.min(t2));
                t_exit = t_exit.min(t1.max(t2));
            }
        }
        t_enter < t_exit
    }
}

/// Statistical city parameters: built-up area ratio, building density and
/// the Rayleigh scale of building heights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItuParams {
    pub alpha: f64,
    pub beta_per_km2: f64,
    pub gamma_m: f64,
}

impl Default for ItuParams {
    fn default() -> Self {
        ItuParams {
            alpha: 0.3,
            beta_per_km2: 300.0,
            gamma_m: 50.0,
        }
    }
}

impl ItuParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid("alpha", "must lie in (0, 1]"));
        }
        if !(self.beta_per_km2 >= 0.0 && self.beta_per_km2.is_finite()) {
            return Err(Error::invalid("beta_per_km2", "must be non-negative"));
        }
        if !(self.gamma_m > 0.0 && self.gamma_m.is_finite()) {
            return Err(Error::invalid("gamma_m", "must be positive"));
        }
        Ok(())
    }

    /// Side of the square footprint that gives the mean building area `alpha / beta`.
    pub fn footprint_side_m(&self) -> f64 {
        (self.alpha / self.beta_per_km2).sqrt() * 1000.0
    }
}

/// Draws one city realization.
///
/// The building count is Poisson with mean `beta * area_km2`, footprints are
/// squares of side `sqrt(alpha / beta)` placed uniformly inside the bounds
/// (overlap allowed), heights are Rayleigh with scale `gamma` truncated to `z_U`.
pub fn generate_buildings(params: &ItuParams, bounds: &Bounds, seed: u64) -> Result<Vec<Building>> {
    params.validate()?;
    bounds.validate()?;
    if params.beta_per_km2 == 0.0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = params.beta_per_km2 * bounds.area_km2();
    let count = Poisson::new(mean)
        .map_err(|e| Error::invalid("beta_per_km2", e.to_string()))?
        .sample(&mut rng) as usize;

    let side = params.footprint_side_m();
    let e = bounds.extent();
    let (wx, wy) = (side.min(e[0]), side.min(e[1]));
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let x0 = bounds.x[0] + rng.random::<f64>() * (e[0] - wx);
        let y0 = bounds.y[0] + rng.random::<f64>() * (e[1] - wy);
        let height = loop {
            // 1 - U lies in (0, 1], so the log is finite
            let u = 1.0 - rng.random::<f64>();
            let h = params.gamma_m * (-2.0 * u.ln()).sqrt();
            if h > 0.0 {
                break h.min(bounds.z[1]);
            }
        };
        out.push(Building {
            x: [x0, x0 + wx],
            y: [y0, y0 + wy],
            height,
        });
    }
    Ok(out)
}

/// True iff the open segment `p`-`q` crosses no building interior.
pub fn is_los(p: Point3, q: Point3, buildings: &[Building]) -> bool {
    !buildings.iter().any(|b| b.blocks(p, q))
}

/// Vertical antenna configuration of a base station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaConfig {
    pub n_elements: usize,
    pub downtilt_deg: f64,
    pub hpbw_deg: f64,
    pub null_floor_db: f64,
}

impl Default for AntennaConfig {
    fn default() -> Self {
        AntennaConfig {
            n_elements: 8,
            downtilt_deg: 10.0,
            hpbw_deg: 65.0,
            null_floor_db: 30.0,
        }
    }
}

impl AntennaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_elements == 0 {
            return Err(Error::invalid("n_elements", "must be at least 1"));
        }
        if !(self.hpbw_deg > 0.0 && self.hpbw_deg < 180.0) {
            return Err(Error::invalid("hpbw_deg", "must lie in (0, 180)"));
        }
        if !(self.null_floor_db > 0.0) {
            return Err(Error::invalid("null_floor_db", "must be positive"));
        }
        if !self.downtilt_deg.is_finite() {
            return Err(Error::invalid("downtilt_deg", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub position: Point3,
    pub tx_power_dbm: f64,
    #[serde(default)]
    pub antenna: AntennaConfig,
}

impl BaseStation {
    pub fn validate(&self) -> Result<()> {
        if !(self.position[2] > 0.0) || self.position.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("position", "height must be positive and coordinates finite"));
        }
        if !self.tx_power_dbm.is_finite() {
            return Err(Error::invalid("tx_power_dbm", "must be finite"));
        }
        self.antenna.validate()
    }
}

/// Carrier, noise and log-distance path-loss constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_dbm: f64,
    pub los_exponent: f64,
    pub nlos_exponent: f64,
    pub nlos_extra_loss_db: f64,
    pub ref_distance_m: f64,
    /// Loss at the reference distance; free-space (Friis) value when absent.
    pub ref_loss_db: Option<f64>,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            carrier_hz: 3e9,
            bandwidth_hz: 1e6,
            noise_dbm: -110.0,
            los_exponent: 2.2,
            nlos_exponent: 3.5,
            nlos_extra_loss_db: 20.0,
            ref_distance_m: 1.0,
            ref_loss_db: None,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_hz > 0.0) {
            return Err(Error::invalid("carrier_hz", "must be positive"));
        }
        if !self.noise_dbm.is_finite() {
            return Err(Error::invalid("noise_dbm", "must be finite"));
        }
        if !(self.ref_distance_m > 0.0) {
            return Err(Error::invalid("ref_distance_m", "must be positive"));
        }
        if !(self.los_exponent > 0.0 && self.nlos_exponent > 0.0) {
            return Err(Error::invalid("los_exponent", "path-loss exponents must be positive"));
        }
        if !(self.nlos_extra_loss_db >= 0.0) {
            return Err(Error::invalid("nlos_extra_loss_db", "must be non-negative"));
        }
        Ok(())
    }

    /// Path loss at the reference distance (dB).
    pub fn ref_loss(&self) -> f64 {
        self.ref_loss_db.unwrap_or_else(|| {
            20.0 * (4.0 * std::f64::consts::PI * self.ref_distance_m * self.carrier_hz
                / SPEED_OF_LIGHT)
                .log10()
        })
    }

    pub fn noise_mw(&self) -> f64 {
        dbm_to_mw(self.noise_dbm)
    }
}

/// Large-scale channel gain in dB from `bs` to `p`.
pub fn path_gain_db(bs: &BaseStation, p: Point3, los: bool, radio: &RadioConfig) -> Result<f64> {
    let d = vec3::dist(bs.position, p);
    if !(d > 0.0) {
        return Err(Error::CoincidentPoints("receiver at base-station position"));
    }
    let n = if los {
        radio.los_exponent
    } else {
        radio.nlos_exponent
    };
    let mut loss = radio.ref_loss() + 10.0 * n * (d / radio.ref_distance_m).log10();
    if !los {
        loss += radio.nlos_extra_loss_db;
    }
    Ok(-loss)
}

/// Elevation of `p` seen from `from`, in degrees above the horizon.
pub fn elevation_deg(from: Point3, p: Point3) -> f64 {
    let d = vec3::sub(p, from);
    d[2].atan2(d[0].hypot(d[1])).to_degrees()
}

/// Element pattern in dB for an angular offset from boresight.
pub fn element_gain_db(offset_deg: f64, antenna: &AntennaConfig) -> f64 {
    -(12.0 * (offset_deg / antenna.hpbw_deg).powi(2)).min(antenna.null_floor_db)
}

/// Linear power array factor `|sum_n exp(j n psi)|^2` of an `N`-element
/// half-wavelength ULA steered to `-downtilt`, peaking at `N^2`.
pub fn array_factor(elevation_deg: f64, antenna: &AntennaConfig) -> f64 {
    let n = antenna.n_elements as f64;
    let psi = std::f64::consts::PI
        * (elevation_deg.to_radians().sin() + antenna.downtilt_deg.to_radians().sin());
    let den = (psi / 2.0).sin();
    if den.abs() < 1e-12 {
        return n * n;
    }
    let num = (n * psi / 2.0).sin();
    (num / den).powi(2)
}

/// Beampattern gain in dB: element pattern plus array factor.
pub fn beam_gain_db(bs: &BaseStation, p: Point3) -> f64 {
    let el = elevation_deg(bs.position, p);
    let offset = el + bs.antenna.downtilt_deg;
    element_gain_db(offset, &bs.antenna)
        + 10.0 * array_factor(el, &bs.antenna).max(ARRAY_FACTOR_FLOOR).log10()
}

/// Small-scale fading model for instantaneous power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fading {
    /// Unit-mean exponential power (Rayleigh amplitude).
    #[default]
    Rayleigh,
    /// `h = 1` always.
    None,
}

impl Fading {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Fading::Rayleigh => sample_fading(rng),
            Fading::None => 1.0,
        }
    }
}

/// One draw of the unit-mean exponential power fading factor.
pub fn sample_fading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let h: f64 = Exp1.sample(rng);
        if h > 0.0 {
            return h;
        }
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Inputs from which a scenario is generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub bounds: Bounds,
    #[serde(default)]
    pub itu: ItuParams,
    pub stations: Vec<BaseStation>,
    #[serde(default)]
    pub radio: RadioConfig,
    pub seed: u64,
}

/// Ground-truth propagation world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrbanScenario {
    pub bounds: Bounds,
    pub buildings: Vec<Building>,
    pub stations: Vec<BaseStation>,
    pub radio: RadioConfig,
    pub seed: u64,
}

impl UrbanScenario {
    pub fn generate(cfg: &ScenarioConfig) -> Result<Self> {
        let buildings = generate_buildings(&cfg.itu, &cfg.bounds, cfg.seed)?;
        let s = UrbanScenario {
            bounds: cfg.bounds,
            buildings,
            stations: cfg.stations.clone(),
            radio: cfg.radio,
            seed: cfg.seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        self.radio.validate()?;
        if self.stations.is_empty() {
            return Err(Error::invalid("stations", "at least one base station is required"));
        }
        for bs in &self.stations {
            bs.validate()?;
        }
        for b in &self.buildings {
            if !(b.height > 0.0) || b.x[1] <= b.x[0] || b.y[1] <= b.y[0] {
                return Err(Error::invalid("buildings", "degenerate building"));
            }
        }
        Ok(())
    }

    /// Average received power `P_m * B_m * G_m` (mW) from every station at `p`.
    pub fn mean_received_mw(&self, p: Point3) -> Result<Vec<f64>> {
        self.stations
            .iter()
            .map(|bs| {
                let los = is_los(bs.position, p, &self.buildings);
                let gain = path_gain_db(bs, p, los, &self.radio)? + beam_gain_db(bs, p);
                Ok(dbm_to_mw(bs.tx_power_dbm + gain))
            })
            .collect()
    }
}
