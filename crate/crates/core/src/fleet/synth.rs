//! Synthetic fleets: metadata-linked RC parameters simulated under a bang-bang
//! thermostat.
//!
//! The thermostat reads the noisy indoor sensor at sample `t` and holds its
//! decision over `[t, t + δ)`. The HVAC inputs are therefore zero-order hold
//! while the outdoor temperature is interpolated linearly within a step, and
//! [`analytic_coeffs`] discretizes with the same mixed hold.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::HomeMetadata;
use crate::rcnet::{
    build_state_space, difference_coefficients, discretize_with_hold, initial_state, DiffCoeffs,
    InputHold, RcParams, MAX_ORDER,
};
use crate::seed::derive_seed;
use crate::timeseries::{
    read_controls_file, read_trace_file, write_controls_file, write_trace_file, ControlSeries,
    HvacMode, Trace, TraceColumns,
};
use crate::{Error, Result, SAMPLES_PER_DAY, STEP_SECONDS};

pub const FLEET_CONFIG_VERSION: u32 = 1;

/// Hold used by the generator for `(T_out, k_heat, k_cool)`.
pub const GENERATOR_HOLD: [InputHold; 3] = [InputHold::Linear, InputHold::Zero, InputHold::Zero];

/// Metadata-to-physics links. Units: kJ/°F, °F/kW, kW, seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParameterLinks {
    /// `C_n = interior_capacitance_base + interior_capacitance_per_sqft · floor_area`.
    pub interior_capacitance_base: f64,
    pub interior_capacitance_per_sqft: f64,
    /// Total envelope capacitance per ft², split evenly over `C_1..C_{n−1}`.
    pub envelope_capacitance_per_sqft: f64,
    /// `ΣR` for a home built in 1950, and its increase per later year.
    pub resistance_1950: f64,
    pub resistance_per_year: f64,
    /// Share of `ΣR` on the interior resistor `R_n`; the rest is split evenly.
    pub interior_resistance_share: f64,
    /// Steady-state lift ranges `Q·ΣR`, °F.
    pub heat_lift: [f64; 2],
    pub cool_lift: [f64; 2],
    /// Log-normal spread applied to every R and C independently.
    pub parameter_noise: f64,
}

impl Default for ParameterLinks {
    fn default() -> Self {
        ParameterLinks {
            interior_capacitance_base: 800.0,
            interior_capacitance_per_sqft: 0.2,
            envelope_capacitance_per_sqft: 10.0,
            resistance_1950: 1.5,
            resistance_per_year: 1.0 / 70.0,
            interior_resistance_share: 0.5,
            heat_lift: [50.0, 60.0],
            cool_lift: [25.0, 40.0],
            parameter_noise: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeasonProfile {
    pub name: String,
    pub start: DateTime<Utc>,
    pub days: usize,
    pub outdoor_mean: f64,
    pub daily_amplitude: f64,
    pub seasonal_amplitude: f64,
    pub seasonal_period_days: f64,
    pub weather_noise_std: f64,
    pub heat_setpoint_day: f64,
    pub heat_setpoint_night: f64,
    pub cool_setpoint_day: f64,
    pub cool_setpoint_night: f64,
    /// Day schedule covers `[day_start_hour, day_end_hour)` UTC.
    pub day_start_hour: u32,
    pub day_end_hour: u32,
    pub mode: HvacMode,
    /// Every R and C of the truth is scaled by `1 + parameter_factor` in this season.
    pub parameter_factor: f64,
}

impl Default for SeasonProfile {
    fn default() -> Self {
        SeasonProfile::winter()
    }
}

impl SeasonProfile {
    pub fn winter() -> Self {
        SeasonProfile {
            name: "winter".into(),
            start: Utc.with_ymd_and_hms(2018, 1, 1, 0, 0, 0).unwrap(),
            days: 90,
            outdoor_mean: 45.0,
            daily_amplitude: 8.0,
            seasonal_amplitude: 5.0,
            seasonal_period_days: 365.0,
            weather_noise_std: 1.0,
            heat_setpoint_day: 68.0,
            heat_setpoint_night: 64.0,
            cool_setpoint_day: 78.0,
            cool_setpoint_night: 80.0,
            day_start_hour: 6,
            day_end_hour: 22,
            mode: HvacMode::Auto,
            parameter_factor: 0.0,
        }
    }

    pub fn summer() -> Self {
        SeasonProfile {
            name: "summer".into(),
            start: Utc.with_ymd_and_hms(2018, 6, 15, 0, 0, 0).unwrap(),
            outdoor_mean: 80.0,
            heat_setpoint_day: 62.0,
            heat_setpoint_night: 60.0,
            cool_setpoint_day: 74.0,
            cool_setpoint_night: 77.0,
            ..SeasonProfile::winter()
        }
    }

    fn samples(&self) -> usize {
        self.days * SAMPLES_PER_DAY
    }

    fn is_day(&self, ts: DateTime<Utc>) -> bool {
        (self.day_start_hour..self.day_end_hour).contains(&ts.hour())
    }

    fn setpoints(&self, ts: DateTime<Utc>) -> (f64, f64) {
        if self.is_day(ts) {
            (self.heat_setpoint_day, self.cool_setpoint_day)
        } else {
            (self.heat_setpoint_night, self.cool_setpoint_night)
        }
    }

    /// Deterministic part of the outdoor temperature at sample `t` (may be
    /// negative for warm-up samples).
    fn outdoor_profile(&self, t: i64) -> f64 {
        let secs = t as f64 * STEP_SECONDS;
        let day = secs / 86_400.0;
        let hour = day.fract() * 24.0;
        let daily = self.daily_amplitude * (2.0 * std::f64::consts::PI * (hour - 9.0) / 24.0).sin();
        let seasonal = self.seasonal_amplitude
            * (2.0 * std::f64::consts::PI * day / self.seasonal_period_days).sin();
        self.outdoor_mean + daily + seasonal
    }

    fn validate(&self) -> Result<()> {
        if self.days == 0 {
            return Err(Error::Config(format!("season {} has no days", self.name)));
        }
        if self.day_start_hour > self.day_end_hour || self.day_end_hour > 24 {
            return Err(Error::Config(format!(
                "season {} has an invalid day schedule",
                self.name
            )));
        }
        if !(self.weather_noise_std >= 0.0
            && self.seasonal_period_days > 0.0
            && self.parameter_factor > -1.0)
        {
            return Err(Error::Config(format!(
                "season {} has invalid profile parameters",
                self.name
            )));
        }
        if self.heat_setpoint_day >= self.cool_setpoint_day
            || self.heat_setpoint_night >= self.cool_setpoint_night
        {
            return Err(Error::Config(format!(
                "season {}: heat setpoints must lie below cool setpoints",
                self.name
            )));
        }
        Ok(())
    }
}

/// Centre and half-widths of a planted group of homes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    pub floor_area: f64,
    pub year_built: i32,
    #[serde(default)]
    pub floor_area_spread: f64,
    #[serde(default)]
    pub year_built_spread: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FleetConfig {
    pub version: u32,
    pub homes: usize,
    pub order: usize,
    pub floor_area: [f64; 2],
    pub year_built: [i32; 2],
    /// Planted metadata groups. Empty samples metadata uniformly over the
    /// ranges; otherwise home `i` is drawn around archetype `i mod len`.
    pub archetypes: Vec<Archetype>,
    pub links: ParameterLinks,
    pub seasons: Vec<SeasonProfile>,
    /// Measurement noise on recorded `T_in`, °F.
    pub noise_std: f64,
    /// Thermostat deadband above the heat setpoint (below the cool setpoint).
    pub hysteresis: f64,
    pub id_prefix: String,
}

impl Default for FleetConfig {
    fn default() -> Self {
        FleetConfig {
            version: FLEET_CONFIG_VERSION,
            homes: 20,
            order: 2,
            floor_area: [800.0, 4000.0],
            year_built: [1950, 2020],
            archetypes: Vec::new(),
            links: ParameterLinks::default(),
            seasons: vec![SeasonProfile::winter()],
            noise_std: 0.05,
            hysteresis: 0.5,
            id_prefix: "home".into(),
        }
    }
}

/// Lifts outside this range are rejected.
const LIFT_RANGE: [f64; 2] = [20.0, 60.0];

impl FleetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != FLEET_CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported fleet config version {}",
                self.version
            )));
        }
        if self.homes == 0 {
            return Err(Error::Config("fleet needs at least one home".into()));
        }
        if !(1..=MAX_ORDER).contains(&self.order) {
            return Err(Error::Config(format!("order must be in 1..={MAX_ORDER}")));
        }
        let [a_lo, a_hi] = self.floor_area;
        if !(a_lo > 0.0 && a_lo <= a_hi && a_hi.is_finite()) {
            return Err(Error::Config(
                "floor area range must be positive and ordered".into(),
            ));
        }
        let [y_lo, y_hi] = self.year_built;
        if !(1800 <= y_lo && y_lo <= y_hi && y_hi <= 2100) {
            return Err(Error::Config(
                "year built range must be ordered within 1800..=2100".into(),
            ));
        }
        let l = &self.links;
        for (name, [lo, hi]) in [("heat", l.heat_lift), ("cool", l.cool_lift)] {
            if !(lo <= hi && lo >= LIFT_RANGE[0] && hi <= LIFT_RANGE[1]) {
                return Err(Error::Config(format!(
                    "{name} lift range [{lo}, {hi}] is unreachable; it must lie within [{}, {}] °F",
                    LIFT_RANGE[0], LIFT_RANGE[1]
                )));
            }
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(l.interior_capacitance_base >= 0.0
            && l.interior_capacitance_per_sqft >= 0.0
            && positive(l.interior_capacitance_base + l.interior_capacitance_per_sqft * a_lo)
            && positive(l.resistance_1950))
        {
            return Err(Error::Config(
                "capacitance and resistance links must be positive".into(),
            ));
        }
        if self.order > 1 && !positive(l.envelope_capacitance_per_sqft) {
            return Err(Error::Config(
                "envelope capacitance must be positive".into(),
            ));
        }
        if !(l.resistance_per_year >= 0.0 && l.parameter_noise >= 0.0) {
            return Err(Error::Config(
                "resistance slope and parameter noise must be non-negative".into(),
            ));
        }
        if self.order > 1
            && !(l.interior_resistance_share > 0.0 && l.interior_resistance_share < 1.0)
        {
            return Err(Error::Config(
                "interior resistance share must lie in (0, 1)".into(),
            ));
        }
        for a in &self.archetypes {
            let area_ok = a.floor_area_spread >= 0.0
                && a.floor_area - a.floor_area_spread >= a_lo
                && a.floor_area + a.floor_area_spread <= a_hi;
            let year_ok = a.year_built_spread >= 0
                && a.year_built - a.year_built_spread >= y_lo
                && a.year_built + a.year_built_spread <= y_hi;
            if !(area_ok && year_ok) {
                return Err(Error::Config(format!(
                    "archetype at ({}, {}) reaches outside the metadata ranges",
                    a.floor_area, a.year_built
                )));
            }
        }
        if self.seasons.is_empty() {
            return Err(Error::Config("fleet needs at least one season".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for s in &self.seasons {
            s.validate()?;
            if !names.insert(s.name.as_str()) {
                return Err(Error::Config(format!("duplicate season {}", s.name)));
            }
        }
        if !(self.noise_std >= 0.0 && self.hysteresis >= 0.0) {
            return Err(Error::Config(
                "noise and hysteresis must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonSettings {
    pub profile: SeasonProfile,
    /// Effective parameters during this season.
    pub truth: RcParams,
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticHome {
    pub metadata: HomeMetadata,
    pub truth: RcParams,
    pub seasons: Vec<SeasonSettings>,
}

#[derive(Debug, Clone)]
pub struct GeneratedHome {
    pub home: SyntheticHome,
    /// Season name to trace.
    pub traces: BTreeMap<String, Trace>,
    /// Season name to the control signals the generator's thermostat applied.
    pub controls: BTreeMap<String, ControlSeries>,
}

#[derive(Debug, Clone)]
pub struct SyntheticFleet {
    pub config: FleetConfig,
    pub seed: u64,
    pub homes: Vec<GeneratedHome>,
}

/// Exact difference coefficients of a generated home in a season.
pub fn analytic_coeffs(truth: &RcParams) -> Result<DiffCoeffs> {
    let ss = build_state_space(truth)?;
    let ds = discretize_with_hold(&ss, STEP_SECONDS, GENERATOR_HOLD)?;
    difference_coefficients(&ds, &ss)
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn sample_home(config: &FleetConfig, index: usize, rng: &mut ChaCha8Rng) -> Result<SyntheticHome> {
    let l = &config.links;
    let (area_range, year_range) = match config.archetypes.as_slice() {
        [] => (config.floor_area, config.year_built),
        list => {
            let a = &list[index % list.len()];
            (
                [
                    a.floor_area - a.floor_area_spread,
                    a.floor_area + a.floor_area_spread,
                ],
                [
                    a.year_built - a.year_built_spread,
                    a.year_built + a.year_built_spread,
                ],
            )
        }
    };
    let floor_area = uniform(rng, area_range);
    let year_built = if year_range[1] > year_range[0] {
        rng.random_range(year_range[0]..=year_range[1])
    } else {
        year_range[0]
    };
    let metadata = HomeMetadata {
        home_id: format!("{}{:03}", config.id_prefix, index),
        floor_area,
        year_built,
        province: None,
        city: None,
    };

    let spread =
        Normal::new(0.0, l.parameter_noise.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let jitter = |rng: &mut ChaCha8Rng| {
        if l.parameter_noise > 0.0 {
            spread.sample(rng).exp()
        } else {
            1.0
        }
    };
    let n = config.order;
    let total_r = l.resistance_1950 + l.resistance_per_year * f64::from(year_built - 1950).max(0.0);
    let mut resistances = Vec::with_capacity(n);
    let mut capacitances = Vec::with_capacity(n);
    for i in 0..n {
        let interior = i == n - 1;
        let r = if n == 1 {
            total_r
        } else if interior {
            total_r * l.interior_resistance_share
        } else {
            total_r * (1.0 - l.interior_resistance_share) / (n - 1) as f64
        };
        let c = if interior {
            l.interior_capacitance_base + l.interior_capacitance_per_sqft * floor_area
        } else {
            l.envelope_capacitance_per_sqft * floor_area / (n - 1) as f64
        };
        resistances.push(r * jitter(rng));
        capacitances.push(c * jitter(rng));
    }
    let sum_r: f64 = resistances.iter().sum();
    let q_heat = uniform(rng, l.heat_lift) / sum_r;
    let q_cool = uniform(rng, l.cool_lift) / sum_r;
    let truth = RcParams::new(resistances, capacitances, q_heat, q_cool)?;

    let seasons = config
        .seasons
        .iter()
        .map(|profile| {
            let f = 1.0 + profile.parameter_factor;
            SeasonSettings {
                profile: profile.clone(),
                truth: truth.scaled(f, f),
                noise_std: config.noise_std,
            }
        })
        .collect();
    Ok(SyntheticHome {
        metadata,
        truth,
        seasons,
    })
}

/// Warm-up before the recorded window, in samples.
const WARM_UP: usize = 2 * SAMPLES_PER_DAY;

fn simulate_season(
    home_id: &str,
    settings: &SeasonSettings,
    hysteresis: f64,
    seed: u64,
) -> Result<(Trace, ControlSeries)> {
    let profile = &settings.profile;
    let ss = build_state_space(&settings.truth)?;
    let ds = discretize_with_hold(&ss, STEP_SECONDS, GENERATOR_HOLD)?;
    let n = settings.truth.order;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weather =
        Normal::new(0.0, profile.weather_noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let sensor = Normal::new(0.0, settings.noise_std).map_err(|e| Error::Config(e.to_string()))?;

    let total = WARM_UP + profile.samples();
    let step = Duration::seconds(STEP_SECONDS as i64);
    let first = profile.start - step * WARM_UP as i32;
    let t_out: Vec<f64> = (0..=total)
        .map(|t| profile.outdoor_profile(t as i64 - WARM_UP as i64) + weather.sample(&mut rng))
        .collect();

    let (heat0, _) = profile.setpoints(first);
    let mut x = initial_state(n, heat0, t_out[0]);
    let mut heating = false;
    let mut cooling = false;
    let mut columns = TraceColumns::with_capacity(profile.samples());
    let mut controls = ControlSeries {
        k_heat: Vec::with_capacity(profile.samples()),
        k_cool: Vec::with_capacity(profile.samples()),
        conflicts: Vec::new(),
    };
    for t in 0..total {
        let ts = first + step * t as i32;
        let (sp_heat, sp_cool) = profile.setpoints(ts);
        let reading = x[n - 1] + sensor.sample(&mut rng);
        heating = profile.mode.heating_enabled()
            && (reading < sp_heat || (heating && reading < sp_heat + hysteresis));
        cooling = !heating
            && profile.mode.cooling_enabled()
            && (reading > sp_cool || (cooling && reading > sp_cool - hysteresis));
        if t >= WARM_UP {
            let occupied = if profile.is_day(ts) { 0.7 } else { 0.1 };
            let hour = f64::from(ts.hour()) + f64::from(ts.minute()) / 60.0;
            columns.t_in.push(Some(reading));
            columns.t_out.push(Some(t_out[t]));
            columns.t_setheat.push(Some(sp_heat));
            columns.t_setcool.push(Some(sp_cool));
            columns.hvac_mode.push(Some(profile.mode));
            columns.motion.push(Some(rng.random::<f64>() < occupied));
            columns.humidity.push(Some(
                (0.4 + 0.05 * (2.0 * std::f64::consts::PI * hour / 24.0).cos()).clamp(0.0, 1.0),
            ));
            controls.k_heat.push(heating);
            controls.k_cool.push(cooling);
        }
        let u_now = [
            t_out[t],
            f64::from(u8::from(heating)),
            f64::from(u8::from(cooling)),
        ];
        let u_next = [t_out[t + 1], u_now[1], u_now[2]];
        x = ds.advance(&x, &u_now, &u_next);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("generator diverged"));
        }
    }
    Ok((Trace::new(home_id, profile.start, columns)?, controls))
}

/// Generates the fleet. Home `i` samples its parameters from
/// `derive_seed(seed, "home", i)` and each season's trace from
/// `derive_seed(seed, "trace/{season}", i)`.
pub fn synth_fleet(config: &FleetConfig, seed: u64) -> Result<SyntheticFleet> {
    config.validate()?;
    let homes = (0..config.homes)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "home", i as u64));
            let home = sample_home(config, i, &mut rng)?;
            let mut traces = BTreeMap::new();
            let mut controls = BTreeMap::new();
            for s in &home.seasons {
                let trace_seed = derive_seed(seed, &format!("trace/{}", s.profile.name), i as u64);
                let (trace, k) =
                    simulate_season(&home.metadata.home_id, s, config.hysteresis, trace_seed)?;
                traces.insert(s.profile.name.clone(), trace);
                controls.insert(s.profile.name.clone(), k);
            }
            Ok(GeneratedHome {
                home,
                traces,
                controls,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticFleet {
        config: config.clone(),
        seed,
        homes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSeason {
    pub season: String,
    pub truth: Option<RcParams>,
    pub trace_path: PathBuf,
    /// Equipment states recorded alongside the trace, when known.
    #[serde(default)]
    pub controls_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHome {
    pub metadata: HomeMetadata,
    #[serde(default)]
    pub truth: Option<RcParams>,
    pub seasons: Vec<ManifestSeason>,
}

/// Home list, per-season trace files relative to the manifest, and truth
/// parameters for synthetic fleets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetManifest {
    pub version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub config: Option<FleetConfig>,
    pub homes: Vec<ManifestHome>,
}

impl FleetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let m: FleetManifest = serde_json::from_str(&text)?;
        if m.version != FLEET_CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported manifest version {}",
                m.version
            )));
        }
        Ok(m)
    }

    /// Directory holding the manifest, against which its paths resolve.
    pub fn base_dir(path: &Path) -> PathBuf {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    }

    /// Reads every trace the manifest lists; paths resolve against `base`.
    pub fn load_traces(&self, base: &Path) -> Result<Vec<BTreeMap<String, Trace>>> {
        self.homes
            .iter()
            .map(|h| {
                h.seasons
                    .iter()
                    .map(|s| {
                        Ok((
                            s.season.clone(),
                            read_trace_file(base.join(&s.trace_path), &h.metadata.home_id)?,
                        ))
                    })
                    .collect()
            })
            .collect()
    }

    /// Recorded controls per home and season, where the manifest lists them.
    pub fn load_controls(&self, base: &Path) -> Result<Vec<BTreeMap<String, ControlSeries>>> {
        self.homes
            .iter()
            .map(|h| {
                h.seasons
                    .iter()
                    .filter_map(|s| s.controls_path.as_ref().map(|p| (s, p)))
                    .map(|(s, p)| Ok((s.season.clone(), read_controls_file(base.join(p))?)))
                    .collect()
            })
            .collect()
    }
}

/// Writes `metadata.csv`, `traces/<home>_<season>.csv`,
/// `traces/<home>_<season>_controls.csv` and `manifest.json`.
pub fn write_fleet(fleet: &SyntheticFleet, dir: &Path) -> Result<FleetManifest> {
    std::fs::create_dir_all(dir.join("traces"))?;
    let metadata: Vec<HomeMetadata> = fleet
        .homes
        .iter()
        .map(|h| h.home.metadata.clone())
        .collect();
    super::write_metadata(&metadata, std::fs::File::create(dir.join("metadata.csv"))?)?;
    let mut homes = Vec::with_capacity(fleet.homes.len());
    for g in &fleet.homes {
        let id = &g.home.metadata.home_id;
        let mut seasons = Vec::new();
        for s in &g.home.seasons {
            let rel = PathBuf::from("traces").join(format!("{id}_{}.csv", s.profile.name));
            let controls =
                PathBuf::from("traces").join(format!("{id}_{}_controls.csv", s.profile.name));
            write_trace_file(&g.traces[&s.profile.name], dir.join(&rel))?;
            write_controls_file(&g.controls[&s.profile.name], dir.join(&controls))?;
            seasons.push(ManifestSeason {
                season: s.profile.name.clone(),
                truth: Some(s.truth.clone()),
                trace_path: rel,
                controls_path: Some(controls),
            });
        }
        homes.push(ManifestHome {
            metadata: g.home.metadata.clone(),
            truth: Some(g.home.truth.clone()),
            seasons,
        });
    }
    let manifest = FleetManifest {
        version: FLEET_CONFIG_VERSION,
        seed: Some(fleet.seed),
        config: Some(fleet.config.clone()),
        homes,
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rcnet::steady_state;
    use crate::timeseries::{derive_controls, Field};

    fn small(homes: usize, days: usize) -> FleetConfig {
        let mut c = FleetConfig {
            homes,
            ..FleetConfig::default()
        };
        c.seasons[0].days = days;
        c
    }

    #[test]
    fn deterministic_given_seed() {
        let a = synth_fleet(&small(2, 2), 11).unwrap();
        let b = synth_fleet(&small(2, 2), 11).unwrap();
        for (x, y) in a.homes.iter().zip(&b.homes) {
            assert_eq!(x.home, y.home);
            assert_eq!(x.traces, y.traces);
        }
        let c = synth_fleet(&small(2, 2), 12).unwrap();
        assert_ne!(a.homes[0].traces, c.homes[0].traces);
    }

    #[test]
    fn capacitance_grows_with_floor_area() {
        let mut c = small(30, 1);
        c.links.parameter_noise = 0.0;
        let f = synth_fleet(&c, 2).unwrap();
        let mut pairs: Vec<(f64, f64)> = f
            .homes
            .iter()
            .map(|h| (h.home.metadata.floor_area, h.home.truth.capacitances[1]))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(pairs.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn lifts_within_range() {
        let f = synth_fleet(&small(10, 1), 3).unwrap();
        for h in &f.homes {
            let lift = steady_state(&h.home.truth, 0.0, true, false);
            assert!((45.0 - 1e-9..=60.0 + 1e-9).contains(&lift), "{lift}");
        }
    }

    #[test]
    fn duty_cycles_inside_band() {
        let mut c = small(1, 2);
        c.noise_std = 0.0;
        let s = &mut c.seasons[0];
        s.weather_noise_std = 0.0;
        s.daily_amplitude = 0.0;
        s.seasonal_amplitude = 0.0;
        s.heat_setpoint_night = s.heat_setpoint_day;
        let f = synth_fleet(&c, 4).unwrap();
        let g = &f.homes[0];
        let k = &g.controls["winter"].k_heat;
        let on = k.iter().filter(|h| **h).count();
        assert!(on > 0 && on < k.len(), "heater never cycles");
        let t_in = g.traces["winter"].values(Field::TIn).unwrap();
        let sp = c.seasons[0].heat_setpoint_day;
        // every switch-on happens below the setpoint, every switch-off above the band
        for t in 1..k.len() {
            if k[t] && !k[t - 1] {
                assert!(t_in[t] < sp);
            }
            if !k[t] && k[t - 1] {
                assert!(t_in[t] >= sp + c.hysteresis);
            }
        }
    }

    #[test]
    fn derived_controls_mostly_agree() {
        let f = synth_fleet(&small(3, 5), 5).unwrap();
        for g in &f.homes {
            let trace = &g.traces["winter"];
            let derived = derive_controls(trace).unwrap();
            let truth = &g.controls["winter"];
            let agree = (0..truth.len())
                .filter(|&i| {
                    derived.k_heat[i] == truth.k_heat[i] && derived.k_cool[i] == truth.k_cool[i]
                })
                .count();
            assert!(
                agree as f64 >= 0.95 * truth.len() as f64,
                "{agree}/{}",
                truth.len()
            );
        }
    }

    #[test]
    fn archetypes_plant_metadata_groups() {
        let mut c = small(6, 1);
        c.archetypes = vec![
            Archetype {
                floor_area: 1000.0,
                year_built: 1960,
                floor_area_spread: 50.0,
                year_built_spread: 2,
            },
            Archetype {
                floor_area: 3500.0,
                year_built: 2010,
                floor_area_spread: 50.0,
                year_built_spread: 2,
            },
        ];
        let f = synth_fleet(&c, 8).unwrap();
        for (i, h) in f.homes.iter().enumerate() {
            let a = &c.archetypes[i % 2];
            assert!((h.home.metadata.floor_area - a.floor_area).abs() <= 50.0);
            assert!((h.home.metadata.year_built - a.year_built).abs() <= 2);
        }
        c.archetypes[0].floor_area = 790.0;
        assert!(matches!(synth_fleet(&c, 8), Err(Error::Config(_))));
    }

    #[test]
    fn unreachable_lift_is_a_config_error() {
        let mut c = small(1, 1);
        c.links.heat_lift = [10.0, 70.0];
        assert!(matches!(synth_fleet(&c, 0), Err(Error::Config(_))));
    }

    #[test]
    fn season_factor_scales_truth() {
        let mut c = small(1, 1);
        c.seasons.push(SeasonProfile {
            parameter_factor: 0.2,
            days: 1,
            ..SeasonProfile::summer()
        });
        let f = synth_fleet(&c, 6).unwrap();
        let h = &f.homes[0].home;
        assert!((h.seasons[1].truth.capacitances[0] / h.truth.capacitances[0] - 1.2).abs() < 1e-12);
        assert_eq!(h.seasons[0].truth, h.truth);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = synth_fleet(&small(2, 1), 7).unwrap();
        let m = write_fleet(&f, dir.path()).unwrap();
        let back = FleetManifest::load(dir.path().join("manifest.json")).unwrap();
        assert_eq!(back, m);
        let traces = back.load_traces(dir.path()).unwrap();
        assert_eq!(traces[1]["winter"], f.homes[1].traces["winter"]);
        let controls = back.load_controls(dir.path()).unwrap();
        assert_eq!(controls[0]["winter"], f.homes[0].controls["winter"]);
    }
}
