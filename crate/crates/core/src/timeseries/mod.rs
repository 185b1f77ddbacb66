//! Thermostat traces: ingestion, imputation, control derivation and the
//! lagged regression layout shared by every nRnC estimator.

mod controls;
mod csvio;
mod impute;
mod regression;

pub use controls::{
    derive_controls, read_controls, read_controls_file, write_controls, write_controls_file,
    ControlSeries,
};
pub use csvio::{ingest_trace, read_trace_file, write_trace, write_trace_file, TRACE_HEADER};
pub use impute::{impute, MAX_INTERPOLATED_GAP};
pub use regression::{
    build_regression, check_order, input_series, regression_for, RegressionDataset,
};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, SAMPLES_PER_DAY, STEP_SECONDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HvacMode {
    Off,
    Heat,
    Cool,
    Auto,
}

impl HvacMode {
    pub fn as_str(self) -> &'static str {
        match self {
            HvacMode::Off => "off",
            HvacMode::Heat => "heat",
            HvacMode::Cool => "cool",
            HvacMode::Auto => "auto",
        }
    }

    pub fn heating_enabled(self) -> bool {
        matches!(self, HvacMode::Heat | HvacMode::Auto)
    }

    pub fn cooling_enabled(self) -> bool {
        matches!(self, HvacMode::Cool | HvacMode::Auto)
    }
}

impl std::str::FromStr for HvacMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "off" => Ok(HvacMode::Off),
            "heat" => Ok(HvacMode::Heat),
            "cool" => Ok(HvacMode::Cool),
            "auto" => Ok(HvacMode::Auto),
            other => Err(format!("unknown hvac_mode `{other}`")),
        }
    }
}

/// Continuous channels of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    TIn,
    TOut,
    SetHeat,
    SetCool,
    Humidity,
}

impl Field {
    pub const ALL: [Field; 5] = [
        Field::TIn,
        Field::TOut,
        Field::SetHeat,
        Field::SetCool,
        Field::Humidity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::TIn => "t_in",
            Field::TOut => "t_out",
            Field::SetHeat => "t_setheat",
            Field::SetCool => "t_setcool",
            Field::Humidity => "humidity",
        }
    }
}

/// Raw per-sample columns; `None` marks a missing observation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceColumns {
    pub t_in: Vec<Option<f64>>,
    pub t_out: Vec<Option<f64>>,
    pub t_setheat: Vec<Option<f64>>,
    pub t_setcool: Vec<Option<f64>>,
    pub hvac_mode: Vec<Option<HvacMode>>,
    pub motion: Vec<Option<bool>>,
    pub humidity: Vec<Option<f64>>,
}

impl TraceColumns {
    pub fn with_capacity(n: usize) -> Self {
        TraceColumns {
            t_in: Vec::with_capacity(n),
            t_out: Vec::with_capacity(n),
            t_setheat: Vec::with_capacity(n),
            t_setcool: Vec::with_capacity(n),
            hvac_mode: Vec::with_capacity(n),
            motion: Vec::with_capacity(n),
            humidity: Vec::with_capacity(n),
        }
    }

    pub fn push_missing(&mut self) {
        self.t_in.push(None);
        self.t_out.push(None);
        self.t_setheat.push(None);
        self.t_setcool.push(None);
        self.hvac_mode.push(None);
        self.motion.push(None);
        self.humidity.push(None);
    }

    fn len(&self) -> usize {
        self.t_in.len()
    }

    fn lengths_agree(&self) -> bool {
        let n = self.len();
        [
            self.t_out.len(),
            self.t_setheat.len(),
            self.t_setcool.len(),
            self.hvac_mode.len(),
            self.motion.len(),
            self.humidity.len(),
        ]
        .iter()
        .all(|&l| l == n)
    }
}

/// A home's uniformly sampled 5-minute thermostat series.
///
/// Immutable once built. `long_gap` flags samples that were filled inside a
/// missing run longer than [`MAX_INTERPOLATED_GAP`]; regression rows touching
/// them are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    home_id: String,
    start: DateTime<Utc>,
    columns: TraceColumns,
    long_gap: Vec<bool>,
}

impl Trace {
    pub fn new(
        home_id: impl Into<String>,
        start: DateTime<Utc>,
        columns: TraceColumns,
    ) -> Result<Self> {
        let n = columns.len();
        Self::with_gaps(home_id, start, columns, vec![false; n])
    }

    pub(crate) fn with_gaps(
        home_id: impl Into<String>,
        start: DateTime<Utc>,
        columns: TraceColumns,
        long_gap: Vec<bool>,
    ) -> Result<Self> {
        if !columns.lengths_agree() || long_gap.len() != columns.len() {
            return Err(Error::Shape("trace columns have unequal lengths".into()));
        }
        if columns.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                available: columns.len(),
            });
        }
        Ok(Trace {
            home_id: home_id.into(),
            start,
            columns,
            long_gap,
        })
    }

    pub fn home_id(&self) -> &str {
        &self.home_id
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn step_seconds(&self) -> f64 {
        STEP_SECONDS
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn timestamp(&self, i: usize) -> DateTime<Utc> {
        self.start + Duration::seconds(STEP_SECONDS as i64 * i as i64)
    }

    pub fn columns(&self) -> &TraceColumns {
        &self.columns
    }

    pub fn long_gap(&self) -> &[bool] {
        &self.long_gap
    }

    pub fn field(&self, field: Field) -> &[Option<f64>] {
        match field {
            Field::TIn => &self.columns.t_in,
            Field::TOut => &self.columns.t_out,
            Field::SetHeat => &self.columns.t_setheat,
            Field::SetCool => &self.columns.t_setcool,
            Field::Humidity => &self.columns.humidity,
        }
    }

    /// Fully observed values of a continuous channel.
    pub fn values(&self, field: Field) -> Result<Vec<f64>> {
        self.field(field)
            .iter()
            .map(|v| v.ok_or(Error::Missing(field.name())))
            .collect()
    }

    pub fn modes(&self) -> Result<Vec<HvacMode>> {
        self.columns
            .hvac_mode
            .iter()
            .map(|m| m.ok_or(Error::Missing("hvac_mode")))
            .collect()
    }

    pub fn has_missing(&self) -> bool {
        let c = &self.columns;
        Field::ALL
            .iter()
            .any(|&f| self.field(f).iter().any(Option::is_none))
            || c.hvac_mode.iter().any(Option::is_none)
            || c.motion.iter().any(Option::is_none)
    }

    /// Contiguous sub-trace `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> Result<Trace> {
        let end = start + len;
        if end > self.len() {
            return Err(Error::InsufficientData {
                needed: end,
                available: self.len(),
            });
        }
        let c = &self.columns;
        let columns = TraceColumns {
            t_in: c.t_in[start..end].to_vec(),
            t_out: c.t_out[start..end].to_vec(),
            t_setheat: c.t_setheat[start..end].to_vec(),
            t_setcool: c.t_setcool[start..end].to_vec(),
            hvac_mode: c.hvac_mode[start..end].to_vec(),
            motion: c.motion[start..end].to_vec(),
            humidity: c.humidity[start..end].to_vec(),
        };
        Trace::with_gaps(
            self.home_id.clone(),
            self.timestamp(start),
            columns,
            self.long_gap[start..end].to_vec(),
        )
    }

    /// Chronological train/test split on whole days: the first `train_days`
    /// form the training trace and the following `test_days` the test trace.
    pub fn split(&self, train_days: usize, test_days: usize) -> Result<(Trace, Trace)> {
        let train = train_days * SAMPLES_PER_DAY;
        let test = test_days * SAMPLES_PER_DAY;
        if train + test > self.len() || train < 2 || test < 2 {
            return Err(Error::InsufficientData {
                needed: (train + test).max(4),
                available: self.len(),
            });
        }
        Ok((self.window(0, train)?, self.window(train, test)?))
    }
}

/// Free-function form of [`Trace::split`].
pub fn split(trace: &Trace, train_days: usize, test_days: usize) -> Result<(Trace, Trace)> {
    trace.split(train_days, test_days)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use chrono::TimeZone;

    pub fn start() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2018, 11, 1, 0, 0, 0).unwrap()
    }

    /// Complete trace with constant setpoints and mode.
    pub fn complete_trace(
        t_in: &[f64],
        t_out: &[f64],
        heat: f64,
        cool: f64,
        mode: HvacMode,
    ) -> Trace {
        let n = t_in.len();
        let columns = TraceColumns {
            t_in: t_in.iter().copied().map(Some).collect(),
            t_out: t_out.iter().copied().map(Some).collect(),
            t_setheat: vec![Some(heat); n],
            t_setcool: vec![Some(cool); n],
            hvac_mode: vec![Some(mode); n],
            motion: vec![Some(false); n],
            humidity: vec![Some(0.4); n],
        };
        Trace::new("h", start(), columns).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    fn flat(days: usize) -> Trace {
        let n = days * SAMPLES_PER_DAY;
        complete_trace(&vec![70.0; n], &vec![40.0; n], 68.0, 75.0, HvacMode::Auto)
    }

    #[test]
    fn split_ninety_days() {
        let (train, test) = flat(90).split(75, 15).unwrap();
        assert_eq!(train.len(), 21600);
        assert_eq!(test.len(), 4320);
        assert_eq!(test.start(), train.timestamp(train.len()));
    }

    #[test]
    fn split_two_days() {
        let (train, test) = flat(2).split(1, 1).unwrap();
        assert_eq!((train.len(), test.len()), (288, 288));
    }

    #[test]
    fn split_short_trace_fails() {
        assert!(matches!(
            flat(80).split(75, 15),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn trace_needs_two_samples() {
        let c = TraceColumns {
            t_in: vec![Some(1.0)],
            t_out: vec![Some(1.0)],
            t_setheat: vec![Some(1.0)],
            t_setcool: vec![Some(1.0)],
            hvac_mode: vec![Some(HvacMode::Off)],
            motion: vec![Some(false)],
            humidity: vec![Some(0.1)],
        };
        assert!(Trace::new("x", start(), c).is_err());
    }
}
