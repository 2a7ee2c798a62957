//! End-to-end use of the public API: files in, convergence curves out.

use std::io::Write;
use std::ops::ControlFlow;

use gp_amis::harness::{run_experiment, ExperimentConfig, SamplerId};
use gp_amis::is::{run_adaptive, self_normalized_expectation, Adaptation, IsSettings, ProposalParams, Schedule};
use gp_amis::linalg::{stream_rng, Matrix, OpCounter, Vector};
use gp_amis::target::GaussianTarget;
use proptest::prelude::*;

fn regression_file(n: usize) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    for i in 0..n {
        let x = i as f64 / n as f64 * 4.0 - 2.0;
        let z = (i * 7 % n) as f64 / n as f64;
        writeln!(f, "{x},{z},{}", (1.5 * x).sin() + 0.3 * z + 0.05 * ((i * 13 % 5) as f64 - 2.0)).unwrap();
    }
    f
}

#[test]
fn importance_sampling_and_mcmc_agree_on_a_file_dataset() {
    let file = regression_file(25);
    let medians: Vec<f64> = ["amis", "mh-h", "ss"]
        .iter()
        .map(|s| {
            let cfg = ExperimentConfig::parse_text(&format!(
                "data.path = {}\nsampler.id = {s}\nrun.replicates = 3\nrun.budget = 20000\nrun.seed = 3\n\
                 is.iterations = 200\nis.base = 50\nis.slope = 0\nrun.grid_points = 30",
                file.path().display()
            ))
            .unwrap();
            let out = run_experiment(&cfg).unwrap();
            assert!(out.failures.is_empty(), "{s}: {:?}", out.failures);
            out.curve.last().unwrap().median
        })
        .collect();
    let lo = medians.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = medians.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(hi / lo - 1.0 < 0.05, "{medians:?}");
}

#[test]
fn amis_recovers_gaussian_moments_from_an_offset_start() {
    let target = GaussianTarget::new(
        Vector::from_vec(vec![1.0, -2.0]),
        &Matrix::from_row_slice(2, 2, &[0.5, 0.2, 0.2, 1.0]),
    )
    .unwrap();
    let gamma0 = ProposalParams::new(Vector::zeros(2), &(Matrix::identity(2, 2) * 4.0)).unwrap();
    let settings = IsSettings::new(Schedule::constant(30, 200).unwrap(), Adaptation::Amis);
    let store = run_adaptive(&target, &gamma0, &settings, &mut stream_rng(8, 0), &OpCounter::new(), |_| {
        ControlFlow::Continue(())
    })
    .unwrap();
    for i in 0..2 {
        let m = self_normalized_expectation(&store, |t| t[i]).unwrap();
        assert!((m - target.mean[i]).abs() < 0.05, "coordinate {i}: {m}");
    }
}

#[test]
fn missing_dataset_names_the_path() {
    let cfg = ExperimentConfig::parse_text("data.path = /no/such/data.csv").unwrap();
    let err = run_experiment(&cfg).unwrap_err();
    assert!(err.to_string().contains("/no/such/data.csv"), "{err}");
}

const SAMPLERS: &[&str] = &[
    "mh-i", "mh-d", "mh-h", "pm-mh", "hmc-i", "hmc-d", "hmc-h", "nuts-i", "nuts-h", "nutsda-d", "ss", "amis",
    "amis-d", "mamis", "mamis-d", "amis-mamis", "mamis-p", "pm-amis",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_text_round_trips(
        seed in any::<u64>(),
        replicates in 1usize..50,
        budget in 1u64..10_000_000,
        sampler in prop::sample::select(SAMPLERS),
        prior_sd in 0.1f64..10.0,
    ) {
        let mut c = ExperimentConfig::default();
        c.set("run.seed", &seed.to_string()).unwrap();
        c.set("run.replicates", &replicates.to_string()).unwrap();
        c.set("run.budget", &budget.to_string()).unwrap();
        c.set("sampler.id", sampler).unwrap();
        c.set("model.prior_sd", &prior_sd.to_string()).unwrap();
        let back = ExperimentConfig::parse_text(&c.to_text()).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(sampler.parse::<SamplerId>().unwrap().name(), sampler);
    }

    #[test]
    fn schedule_total_matches_closed_form(t in 1usize..200, base in 0usize..5000, slope in 0usize..2000) {
        prop_assume!(base + slope > 0);
        let s = Schedule::affine(t, base, slope).unwrap();
        prop_assert_eq!(s.total(), base * t + slope * t * (t + 1) / 2);
    }
}
