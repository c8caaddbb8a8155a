use nalgebra::DMatrix;
use pcplod::data::{EntryStatus, MaskedMatrix};
use pcplod::linalg::effective_rank;
use pcplod::prox::{project_feasible, psi_lod, FeasibleSet};
use pcplod::sim::{gen_dataset, NoiseKind, SimScenario};
use pcplod::solver::{solve, solve_frobenius, PcpConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn nonneg_low_rank(n: usize, p: usize, r: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let w = DMatrix::from_fn(n, r, |_, _| rng.random_range(0.0..2.0));
    let h = DMatrix::from_fn(r, p, |_, _| rng.random_range(0.0..2.0));
    w * h
}

/// Low rank plus clipped noise, with roughly `censor` of the entries below a
/// per-entry LOD and `missing` of them absent.
fn random_instance(seed: u64, n: usize, p: usize, censor: f64, missing: f64) -> MaskedMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = nonneg_low_rank(n, p, 2, &mut rng);
    let mut values = truth
        .map(|v| v + 0.1 * (rng.random::<f64>() - 0.5))
        .map(|v| v.max(0.0));
    let mut status = DMatrix::from_element(n, p, EntryStatus::Observed);
    let mut delta = DMatrix::zeros(n, p);
    for idx in 0..n * p {
        let u: f64 = rng.random();
        if u < censor {
            status[idx] = EntryStatus::BelowLod;
            delta[idx] = values[idx] + 0.5;
            values[idx] = f64::NAN;
        } else if u < censor + missing {
            status[idx] = EntryStatus::Missing;
            values[idx] = f64::NAN;
        }
    }
    MaskedMatrix::new(values, status, delta, pcplod::data::default_column_names(p)).unwrap()
}

fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn all_observed_reduces_to_frobenius_fit(seed in any::<u64>(), n in 8usize..30, p in 3usize..9) {
        let x = random_instance(seed, n, p, 0.0, 0.0);
        let cfg = PcpConfig::new(2.min(p));
        let lod = solve(&x, &cfg).unwrap();
        let frob = solve_frobenius(x.raw_values(), &cfg).unwrap();
        prop_assert!(rel_diff(&lod.low_rank, &frob.low_rank) <= 1e-8);
        prop_assert!(rel_diff(&lod.sparse, &frob.sparse) <= 1e-8);
    }

    #[test]
    fn solutions_are_feasible(seed in any::<u64>(), r in 1usize..4, censor in 0.0f64..0.6, missing in 0.0f64..0.1) {
        let x = random_instance(seed, 25, 6, censor, missing);
        let d = solve(&x, &PcpConfig::new(r)).unwrap();
        prop_assert!(d.low_rank.iter().all(|&v| v >= 0.0));
        prop_assert!(effective_rank(&d.low_rank) <= r);
        prop_assert!(d.effective_rank <= r);
        prop_assert!(d.objective.is_finite());
    }

    #[test]
    fn projection_lands_in_the_box(seed in any::<u64>(), censor in 0.0f64..0.7) {
        let x = random_instance(seed, 10, 4, censor, 0.1);
        let c = FeasibleSet::from_masked(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let y = DMatrix::from_fn(10, 4, |_, _| 6.0 * rng.random::<f64>() - 2.0);
        let proj = project_feasible(&y, &c);
        prop_assert_eq!(psi_lod(&proj, &c), 0.0);
        prop_assert!((psi_lod(&y, &c) - (&y - &proj).norm()).abs() <= 1e-12);
    }
}

#[test]
fn missing_entries_ignore_stored_values() {
    let x = random_instance(11, 30, 6, 0.2, 0.15);
    let (n, p) = x.shape();
    let mut filled = x.raw_values().clone();
    for i in 0..n {
        for j in 0..p {
            if x.status(i, j) != EntryStatus::Observed {
                filled[(i, j)] = 1e6 * (i + j + 1) as f64;
            }
        }
    }
    let y = MaskedMatrix::new(
        filled,
        x.status_matrix().clone(),
        x.delta_matrix().clone(),
        x.column_names().to_vec(),
    )
    .unwrap();
    let a = solve(&x, &PcpConfig::new(2)).unwrap();
    let b = solve(&y, &PcpConfig::new(2)).unwrap();
    assert_eq!(a.low_rank, b.low_rank);
    assert_eq!(a.sparse, b.sparse);
    assert_eq!(a.diagnostics.objective_trace, b.diagnostics.objective_trace);
}

/// Start of the first 100-iteration window whose mean exceeds that of the
/// window just before it.
fn first_windowed_rise(trace: &[f64]) -> Option<usize> {
    let window = 100;
    let means: Vec<f64> = trace
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect();
    (window..means.len()).find(|&k| means[k] > means[k - window] * (1.0 + 1e-9))
}

#[test]
fn windowed_objective_is_non_increasing() {
    for seed in 0..4 {
        let x = random_instance(100 + seed, 60, 8, 0.3, 0.05);
        let d = solve(&x, &PcpConfig::new(2)).unwrap();
        assert_eq!(
            first_windowed_rise(&d.diagnostics.objective_trace),
            None,
            "seed {seed}"
        );
    }
}

#[test]
fn windowed_objective_is_non_increasing_on_simulated_cells() {
    for noise in [NoiseKind::Low, NoiseKind::High, NoiseKind::Sparse] {
        for q in [0.25, 0.5, 0.75] {
            let ds = gen_dataset(&SimScenario::new(16, noise, q, 11)).unwrap();
            let d = solve(&ds.censored, &PcpConfig::new(4)).unwrap();
            assert_eq!(
                first_windowed_rise(&d.diagnostics.objective_trace),
                None,
                "{} q{q}",
                noise.name()
            );
        }
    }
}

#[test]
fn solve_is_deterministic() {
    let x = random_instance(5, 40, 8, 0.25, 0.05);
    let a = solve(&x, &PcpConfig::new(3)).unwrap();
    let b = solve(&x, &PcpConfig::new(3)).unwrap();
    assert_eq!(a.low_rank, b.low_rank);
    assert_eq!(a.sparse, b.sparse);
}
