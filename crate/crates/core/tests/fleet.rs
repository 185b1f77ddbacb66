use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use rcid::estimators::{fit_bnn, one_step_rmse, posterior_to_coeffs, PriorConfig, TrainingConfig};
use rcid::fleet::{
    analytic_coeffs, assign, cluster_homes, synth_fleet, FleetConfig, HomeMetadata, SeasonProfile,
    DEFAULT_RESTARTS,
};
use rcid::timeseries::{build_regression, ControlSeries};
use rcid::SAMPLES_PER_DAY;

/// Mild weather with both heating and cooling in use.
fn shoulder() -> SeasonProfile {
    SeasonProfile {
        name: "shoulder".into(),
        outdoor_mean: 62.0,
        daily_amplitude: 15.0,
        heat_setpoint_day: 67.0,
        heat_setpoint_night: 64.0,
        cool_setpoint_day: 72.0,
        cool_setpoint_night: 75.0,
        ..SeasonProfile::winter()
    }
}

/// Worst relative error over coefficients above 5% of the largest, and the
/// worst excess of fitted over true one-step RMSE, across a shoulder fleet.
fn fleet_recovery(noise_std: f64) -> (f64, f64) {
    let cfg = FleetConfig {
        seasons: vec![shoulder()],
        noise_std,
        ..FleetConfig::default()
    };
    let fleet = synth_fleet(&cfg, 21).unwrap();
    assert_eq!(fleet.homes.len(), 20);
    let split = 75 * SAMPLES_PER_DAY;
    let mut worst_coeff: f64 = 0.0;
    let mut worst_rmse: f64 = 0.0;
    for (i, g) in fleet.homes.iter().enumerate() {
        let trace = &g.traces["shoulder"];
        let controls = &g.controls["shoulder"];
        let truth = analytic_coeffs(&g.home.seasons[0].truth).unwrap();
        let train = build_regression(
            &trace.window(0, split).unwrap(),
            &slice(controls, 0, split),
            2,
        )
        .unwrap();
        let test = build_regression(
            &trace.window(split - 2, trace.len() - split + 2).unwrap(),
            &slice(controls, split - 2, trace.len()),
            2,
        )
        .unwrap();
        let post = fit_bnn(
            &train,
            &PriorConfig::default(),
            &TrainingConfig::default(),
            i as u64,
        )
        .unwrap();
        let fitted = posterior_to_coeffs(&post);
        let tw = truth.to_weights();
        let fw = fitted.to_weights();
        let largest = tw.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        for (t, f) in tw.iter().zip(&fw).take(tw.len() - 1) {
            if t.abs() >= 0.05 * largest {
                worst_coeff = worst_coeff.max((f - t).abs() / t.abs());
            }
        }
        let r_fit = one_step_rmse(&fitted, &test).unwrap();
        let r_true = one_step_rmse(&truth, &test).unwrap();
        worst_rmse = worst_rmse.max(r_fit - r_true);
    }
    (worst_coeff, worst_rmse)
}

#[test]
fn bnn_recovers_noiseless_fleet_coefficients() {
    let (coeff, rmse) = fleet_recovery(0.0);
    assert!(
        coeff <= 0.05,
        "worst identifiable coefficient error {coeff}"
    );
    assert!(rmse <= 0.02, "fitted RMSE exceeds truth by {rmse}");
}

#[test]
fn bnn_matches_truth_rmse_under_measurement_noise() {
    // noisy lags attenuate the autoregressive weights by a few percent, but
    // the one-step forecasts stay at the noise floor
    let (_, rmse) = fleet_recovery(0.05);
    assert!(rmse <= 0.002, "fitted RMSE exceeds truth by {rmse}");
}

fn slice(c: &ControlSeries, from: usize, to: usize) -> ControlSeries {
    ControlSeries {
        k_heat: c.k_heat[from..to].to_vec(),
        k_cool: c.k_cool[from..to].to_vec(),
        conflicts: c
            .conflicts
            .iter()
            .filter(|&&i| (from..to).contains(&i))
            .map(|i| i - from)
            .collect(),
    }
}

fn blob_home(rng: &mut ChaCha8Rng, id: String, centre: (f64, f64)) -> HomeMetadata {
    let area = Normal::new(0.0, 120.0).unwrap();
    let year = Normal::new(0.0, 3.0).unwrap();
    HomeMetadata {
        home_id: id,
        floor_area: centre.0 + area.sample(rng),
        year_built: (centre.1 + year.sample(rng)).round() as i32,
        province: None,
        city: None,
    }
}

#[test]
fn new_homes_assign_to_their_planted_group() {
    let centres = [(1200.0, 1960.0), (2600.0, 1990.0), (4000.0, 2015.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let training: Vec<HomeMetadata> = (0..60)
        .map(|i| blob_home(&mut rng, format!("t{i}"), centres[i % 3]))
        .collect();
    let clustering = cluster_homes(&training, 3, 5, DEFAULT_RESTARTS).unwrap();
    let cluster_of_group: Vec<usize> = (0..3)
        .map(|g| clustering.assignments[&format!("t{g}")])
        .collect();
    let mut correct = 0;
    for i in 0..100 {
        let h = blob_home(&mut rng, format!("n{i}"), centres[i % 3]);
        correct += usize::from(assign(&h, &clustering) == cluster_of_group[i % 3]);
    }
    assert_eq!(correct, 100);
}
