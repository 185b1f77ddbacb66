use std::io::{Read, Write};
use std::path::Path;

use super::{Field, Trace};
use crate::{Error, Result};

/// Binary HVAC activity per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlSeries {
    pub k_heat: Vec<bool>,
    pub k_cool: Vec<bool>,
    /// Samples where inverted setpoints made both rules fire; cooling was
    /// suppressed there.
    pub conflicts: Vec<usize>,
}

impl ControlSeries {
    pub fn len(&self) -> usize {
        self.k_heat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k_heat.is_empty()
    }

    pub fn heat(&self, i: usize) -> f64 {
        f64::from(u8::from(self.k_heat[i]))
    }

    pub fn cool(&self, i: usize) -> f64 {
        f64::from(u8::from(self.k_cool[i]))
    }
}

/// Heating is active below the heat setpoint in heat/auto mode, cooling above
/// the cool setpoint in cool/auto mode. Heating wins if both fire.
pub fn derive_controls(trace: &Trace) -> Result<ControlSeries> {
    let t_in = trace.values(Field::TIn)?;
    let heat_sp = trace.values(Field::SetHeat)?;
    let cool_sp = trace.values(Field::SetCool)?;
    let modes = trace.modes()?;

    let n = trace.len();
    let mut k_heat = Vec::with_capacity(n);
    let mut k_cool = Vec::with_capacity(n);
    let mut conflicts = Vec::new();
    for i in 0..n {
        let heat = t_in[i] < heat_sp[i] && modes[i].heating_enabled();
        let mut cool = t_in[i] > cool_sp[i] && modes[i].cooling_enabled();
        if heat && cool {
            cool = false;
            conflicts.push(i);
        }
        k_heat.push(heat);
        k_cool.push(cool);
    }
    Ok(ControlSeries {
        k_heat,
        k_cool,
        conflicts,
    })
}

/// Recorded equipment states as `k_heat,k_cool` rows of 0/1, one per sample.
pub fn write_controls<W: Write>(controls: &ControlSeries, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["k_heat", "k_cool"])?;
    for i in 0..controls.len() {
        w.write_record([
            u8::from(controls.k_heat[i]).to_string(),
            u8::from(controls.k_cool[i]).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_controls<R: Read>(source: R) -> Result<ControlSeries> {
    let mut reader = csv::Reader::from_reader(source);
    if reader.headers()?.iter().ne(["k_heat", "k_cool"]) {
        return Err(Error::Parse {
            line: 1,
            message: "expected header k_heat,k_cool".into(),
        });
    }
    let flag = |v: &str, line: usize| match v.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Parse {
            line,
            message: format!("expected 0 or 1, got {other:?}"),
        }),
    };
    let mut out = ControlSeries {
        k_heat: Vec::new(),
        k_cool: Vec::new(),
        conflicts: Vec::new(),
    };
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != 2 {
            return Err(Error::Parse {
                line,
                message: "expected 2 fields".into(),
            });
        }
        let (h, c) = (flag(&rec[0], line)?, flag(&rec[1], line)?);
        if h && c {
            return Err(Error::Parse {
                line,
                message: "heating and cooling both active".into(),
            });
        }
        out.k_heat.push(h);
        out.k_cool.push(c);
    }
    Ok(out)
}

pub fn write_controls_file(controls: &ControlSeries, path: impl AsRef<Path>) -> Result<()> {
    write_controls(controls, std::fs::File::create(path)?)
}

pub fn read_controls_file(path: impl AsRef<Path>) -> Result<ControlSeries> {
    read_controls(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::test_support::complete_trace;
    use crate::timeseries::HvacMode;
    use proptest::prelude::*;

    #[test]
    fn heating_rule() {
        let t = complete_trace(&[68.0, 68.0], &[30.0, 30.0], 70.0, 75.0, HvacMode::Heat);
        let c = derive_controls(&t).unwrap();
        assert_eq!((c.k_heat[0], c.k_cool[0]), (true, false));
    }

    #[test]
    fn cooling_rule() {
        let t = complete_trace(&[75.0, 75.0], &[90.0, 90.0], 68.0, 72.0, HvacMode::Auto);
        let c = derive_controls(&t).unwrap();
        assert_eq!((c.k_heat[0], c.k_cool[0]), (false, true));
    }

    #[test]
    fn off_mode_is_idle() {
        let t = complete_trace(&[50.0, 95.0], &[30.0, 30.0], 70.0, 72.0, HvacMode::Off);
        let c = derive_controls(&t).unwrap();
        assert!(c.k_heat.iter().chain(&c.k_cool).all(|k| !k));
    }

    #[test]
    fn mode_gates_each_rule() {
        let t = complete_trace(&[60.0, 60.0], &[30.0, 30.0], 70.0, 72.0, HvacMode::Cool);
        assert!(!derive_controls(&t).unwrap().k_heat[0]);
        let t = complete_trace(&[80.0, 80.0], &[30.0, 30.0], 70.0, 72.0, HvacMode::Heat);
        assert!(!derive_controls(&t).unwrap().k_cool[0]);
    }

    #[test]
    fn inverted_setpoints_heating_wins() {
        let t = complete_trace(&[71.0, 69.0], &[30.0, 30.0], 72.0, 70.0, HvacMode::Auto);
        let c = derive_controls(&t).unwrap();
        assert_eq!(c.k_heat, vec![true, true]);
        assert_eq!(c.k_cool, vec![false, false]);
        assert_eq!(c.conflicts, vec![0]);
    }

    #[test]
    fn controls_csv_round_trip() {
        let c = ControlSeries {
            k_heat: vec![true, false, false],
            k_cool: vec![false, false, true],
            conflicts: vec![],
        };
        let mut buf = Vec::new();
        write_controls(&c, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8_lossy(&buf),
            "k_heat,k_cool\n1,0\n0,0\n0,1\n"
        );
        assert_eq!(read_controls(&buf[..]).unwrap(), c);
        assert!(read_controls("k_heat,k_cool\n1,1\n".as_bytes()).is_err());
        assert!(read_controls("k_heat,k_cool\n2,0\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn never_heats_and_cools(
            t_in in proptest::collection::vec(50.0f64..90.0, 2..50),
            heat in 50.0f64..90.0,
            cool in 50.0f64..90.0,
        ) {
            let t = complete_trace(&t_in, &t_in, heat, cool, HvacMode::Auto);
            let c = derive_controls(&t).unwrap();
            prop_assert!(c.k_heat.iter().zip(&c.k_cool).all(|(h, k)| !(*h && *k)));
        }
    }
}
