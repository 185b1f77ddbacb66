use super::{Field, HvacMode, Trace, TraceColumns};
use crate::{Error, Result};

/// Longest missing run, in samples, that still feeds regression rows.
pub const MAX_INTERPOLATED_GAP: usize = 6;

/// Linear interpolation across interior gaps, constant extrapolation at the ends.
fn interpolate(values: &[Option<f64>], name: &'static str) -> Result<Vec<Option<f64>>> {
    let observed: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    let (&first, &last) = match (observed.first(), observed.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Unimputable(name)),
    };
    let mut out = values.to_vec();
    let head = values[first];
    let tail = values[last];
    out[..first].fill(head);
    out[last + 1..].fill(tail);
    for pair in observed.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b - a < 2 {
            continue;
        }
        let (ya, yb) = (values[a].unwrap(), values[b].unwrap());
        let span = (b - a) as f64;
        for (k, slot) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            let w = (k - a) as f64 / span;
            *slot = Some(ya + (yb - ya) * w);
        }
    }
    Ok(out)
}

/// Marks every sample inside a missing run longer than the limit.
fn mark_long_runs(values: &[Option<f64>], flags: &mut [bool]) {
    let mut i = 0;
    while i < values.len() {
        if values[i].is_some() {
            i += 1;
            continue;
        }
        let start = i;
        while i < values.len() && values[i].is_none() {
            i += 1;
        }
        if i - start > MAX_INTERPOLATED_GAP {
            flags[start..i].fill(true);
        }
    }
}

/// Fills every missing sample: continuous channels by linear interpolation,
/// motion with 0, HVAC mode by carrying the last observation forward.
pub fn impute(trace: &Trace) -> Result<Trace> {
    let c = trace.columns();
    let mut long_gap = trace.long_gap().to_vec();
    for field in [Field::TIn, Field::TOut, Field::SetHeat, Field::SetCool] {
        mark_long_runs(trace.field(field), &mut long_gap);
    }

    let first_mode = c
        .hvac_mode
        .iter()
        .flatten()
        .next()
        .copied()
        .unwrap_or(HvacMode::Off);
    let mut current = first_mode;
    let hvac_mode = c
        .hvac_mode
        .iter()
        .map(|m| {
            if let Some(m) = m {
                current = *m;
            }
            Some(current)
        })
        .collect();

    let columns = TraceColumns {
        t_in: interpolate(&c.t_in, "t_in")?,
        t_out: interpolate(&c.t_out, "t_out")?,
        t_setheat: interpolate(&c.t_setheat, "t_setheat")?,
        t_setcool: interpolate(&c.t_setcool, "t_setcool")?,
        hvac_mode,
        motion: c.motion.iter().map(|m| Some(m.unwrap_or(false))).collect(),
        humidity: interpolate(&c.humidity, "humidity")?,
    };
    Trace::with_gaps(trace.home_id(), trace.start(), columns, long_gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::test_support::start;
    use proptest::prelude::*;

    fn trace_with(
        t_in: Vec<Option<f64>>,
        t_out: Vec<Option<f64>>,
        motion: Vec<Option<bool>>,
    ) -> Trace {
        let n = t_in.len();
        let columns = TraceColumns {
            t_in,
            t_out,
            t_setheat: vec![Some(68.0); n],
            t_setcool: vec![Some(75.0); n],
            hvac_mode: vec![Some(HvacMode::Heat); n],
            motion,
            humidity: vec![Some(0.3); n],
        };
        Trace::new("h", start(), columns).unwrap()
    }

    #[test]
    fn midpoint_and_motion() {
        let t = trace_with(
            vec![Some(70.0), None, None, Some(73.0)],
            vec![Some(50.0), None, Some(54.0), Some(54.0)],
            vec![Some(true), None, None, Some(false)],
        );
        let t = impute(&t).unwrap();
        assert_eq!(t.values(Field::TOut).unwrap(), vec![50.0, 52.0, 54.0, 54.0]);
        assert_eq!(t.values(Field::TIn).unwrap(), vec![70.0, 71.0, 72.0, 73.0]);
        assert_eq!(
            t.columns().motion,
            vec![Some(true), Some(false), Some(false), Some(false)]
        );
        assert!(!t.has_missing());
    }

    #[test]
    fn ends_extrapolate_constant() {
        let t = trace_with(
            vec![None, Some(70.0), Some(71.0), None],
            vec![Some(1.0); 4],
            vec![Some(false); 4],
        );
        let t = impute(&t).unwrap();
        assert_eq!(t.values(Field::TIn).unwrap(), vec![70.0, 70.0, 71.0, 71.0]);
    }

    #[test]
    fn entirely_missing_field_is_unimputable() {
        let t = trace_with(vec![None; 3], vec![Some(1.0); 3], vec![None; 3]);
        assert!(matches!(impute(&t), Err(Error::Unimputable("t_in"))));
    }

    #[test]
    fn mode_carried_forward() {
        let mut t = trace_with(vec![Some(1.0); 4], vec![Some(1.0); 4], vec![None; 4]);
        t.columns.hvac_mode = vec![None, Some(HvacMode::Cool), None, Some(HvacMode::Off)];
        let t = impute(&t).unwrap();
        assert_eq!(
            t.modes().unwrap(),
            vec![
                HvacMode::Cool,
                HvacMode::Cool,
                HvacMode::Cool,
                HvacMode::Off
            ]
        );
    }

    #[test]
    fn long_runs_are_flagged() {
        let mut t_in = vec![Some(70.0); 20];
        for v in &mut t_in[3..10] {
            *v = None;
        }
        for v in &mut t_in[12..18] {
            *v = None;
        }
        let t = impute(&trace_with(t_in, vec![Some(1.0); 20], vec![None; 20])).unwrap();
        let flagged: Vec<usize> = (0..20).filter(|&i| t.long_gap()[i]).collect();
        assert_eq!(flagged, (3..10).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn impute_is_idempotent(
            vals in proptest::collection::vec(proptest::option::weighted(0.6, 0.0f64..100.0), 2..60)
        ) {
            prop_assume!(vals.iter().any(Option::is_some));
            let n = vals.len();
            let t = trace_with(vals.clone(), vals, vec![None; n]);
            let once = impute(&t).unwrap();
            let twice = impute(&once).unwrap();
            prop_assert!(!once.has_missing());
            prop_assert_eq!(once, twice);
        }
    }
}
