//! Proximal kernels: soft-thresholding, the non-negative rank projection, and
//! the projection / distance / prox for the per-entry feasible set that encodes
//! the limit-of-detection penalty.
//!
//! The LOD penalty of a fitted matrix `Y = L + S` is the Frobenius distance from
//! `Y` to the set `C` where observed entries equal their measurement, censored
//! entries lie in `[0, δ]` and missing entries are free. Because `C` is a box,
//! the projection is an elementwise clamp and the prox of `t·dist(·, C)` has a
//! closed form.

use nalgebra::DMatrix;

use crate::data::{EntryStatus, MaskedMatrix};
use crate::error::{Error, Result};
use crate::linalg::rank_projection;

/// Per-entry feasible set derived from a masked matrix, stored as
/// column-major lower and upper bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    nrows: usize,
    ncols: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl FeasibleSet {
    pub fn from_masked(x: &MaskedMatrix) -> Self {
        let (n, p) = x.shape();
        let mut lower = Vec::with_capacity(n * p);
        let mut upper = Vec::with_capacity(n * p);
        for j in 0..p {
            for i in 0..n {
                let (lo, hi) = match x.status(i, j) {
                    EntryStatus::Observed => {
                        let v = x.observed(i, j).unwrap_or_default();
                        (v, v)
                    }
                    EntryStatus::BelowLod => (0.0, x.delta(i, j)),
                    EntryStatus::Missing => (f64::NEG_INFINITY, f64::INFINITY),
                };
                lower.push(lo);
                upper.push(hi);
            }
        }
        Self {
            nrows: n,
            ncols: p,
            lower,
            upper,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    fn check(&self, y: &DMatrix<f64>) {
        assert_eq!(
            y.shape(),
            self.shape(),
            "matrix and feasible set shapes differ"
        );
    }

    fn bounds(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.lower.iter().copied().zip(self.upper.iter().copied())
    }
}

/// Elementwise `sign(m)·max(|m| − tau, 0)`.
pub fn soft_threshold(m: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    debug_assert!(tau >= 0.0);
    m.map(|x| soft_threshold_scalar(x, tau))
}

#[inline]
pub fn soft_threshold_scalar(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// Alternates rank-`r` truncation and clipping at zero, `passes` times,
/// finishing with the clip. The result is non-negative; its rank is at most
/// `r` only when the last truncation produced no negative entries.
pub fn project_rank_nonneg(m: &DMatrix<f64>, r: usize, passes: usize) -> Result<DMatrix<f64>> {
    let k = m.nrows().min(m.ncols());
    if r == 0 || r > k {
        return Err(Error::Config(format!("rank {r} must be in 1..={k}")));
    }
    if passes == 0 {
        return Err(Error::Config(
            "at least one projection pass is required".into(),
        ));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(
            "rank projection input has non-finite entries".into(),
        ));
    }
    let mut out = m.clone();
    for _ in 0..passes {
        out = rank_projection(&out, r);
        out.apply(|x| *x = x.max(0.0));
    }
    Ok(out)
}

pub fn project_feasible(y: &DMatrix<f64>, c: &FeasibleSet) -> DMatrix<f64> {
    c.check(y);
    let mut out = y.clone();
    for (o, (lo, hi)) in out.as_mut_slice().iter_mut().zip(c.bounds()) {
        *o = o.clamp(lo, hi);
    }
    out
}

/// Frobenius distance from `y` to the feasible set.
pub fn psi_lod(y: &DMatrix<f64>, c: &FeasibleSet) -> f64 {
    c.check(y);
    y.as_slice()
        .iter()
        .zip(c.bounds())
        .map(|(&v, (lo, hi))| {
            let d = v - v.clamp(lo, hi);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Prox of `t·psi_lod(·, C)`: move `y` a distance `t` toward its projection,
/// or all the way when it is closer than `t`.
pub fn prox_mu_dist(y: &DMatrix<f64>, c: &FeasibleSet, t: f64) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(y.nrows(), y.ncols());
    prox_mu_dist_into(y, c, t, &mut out);
    out
}

/// [`prox_mu_dist`] writing into a preallocated matrix.
pub fn prox_mu_dist_into(y: &DMatrix<f64>, c: &FeasibleSet, t: f64, out: &mut DMatrix<f64>) {
    debug_assert!(t > 0.0);
    c.check(y);
    assert_eq!(out.shape(), y.shape());
    let d = psi_lod(y, c);
    let step = if d <= t { 1.0 } else { t / d };
    let pairs = out.as_mut_slice().iter_mut().zip(y.as_slice());
    for ((o, &v), (lo, hi)) in pairs.zip(c.bounds()) {
        let target = v.clamp(lo, hi);
        *o = if step == 1.0 {
            target
        } else {
            v + (target - v) * step
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn masked(
        values: &[f64],
        status: &[EntryStatus],
        delta: &[f64],
        n: usize,
        p: usize,
    ) -> MaskedMatrix {
        MaskedMatrix::new(
            DMatrix::from_row_slice(n, p, values),
            DMatrix::from_row_slice(n, p, status),
            DMatrix::from_row_slice(n, p, delta),
            crate::data::default_column_names(p),
        )
        .unwrap()
    }

    use EntryStatus::{BelowLod as B, Missing as M, Observed as O};

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold_scalar(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold_scalar(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold_scalar(0.0, 7.0), 0.0);
        assert_eq!(soft_threshold_scalar(-4.0, 1.5), -2.5);
    }

    #[test]
    fn projection_examples() {
        let x = masked(
            &[2.0, f64::NAN, f64::NAN],
            &[O, B, B],
            &[0.0, 2.0, 2.0],
            1,
            3,
        );
        let c = FeasibleSet::from_masked(&x);
        let y = DMatrix::from_row_slice(1, 3, &[5.0, 1.5, -0.5]);
        let p = project_feasible(&y, &c);
        assert_eq!(p.as_slice(), &[2.0, 1.5, 0.0]);
    }

    #[test]
    fn psi_reduces_to_frobenius_residual() {
        let x = masked(&[0.0, 0.0], &[O, O], &[0.0, 0.0], 1, 2);
        let c = FeasibleSet::from_masked(&x);
        let y = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        assert_eq!(psi_lod(&y, &c), 5.0);
    }

    #[test]
    fn psi_above_lod() {
        let x = masked(&[f64::NAN], &[B], &[2.0], 1, 1);
        let c = FeasibleSet::from_masked(&x);
        assert_eq!(psi_lod(&DMatrix::from_element(1, 1, 3.0), &c), 1.0);
    }

    #[test]
    fn psi_mixed_cases_hand_evaluated() {
        // observed residual 1, censored inside interval, censored at -2, missing
        let x = masked(
            &[1.0, f64::NAN, f64::NAN, f64::NAN],
            &[O, B, B, M],
            &[0.0, 2.0, 2.0, 0.0],
            2,
            2,
        );
        let c = FeasibleSet::from_masked(&x);
        let y = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, -2.0, 100.0]);
        assert!((psi_lod(&y, &c) - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn prox_examples() {
        let x = masked(&[0.0], &[O], &[0.0], 1, 1);
        let c = FeasibleSet::from_masked(&x);
        let z = prox_mu_dist(&DMatrix::from_element(1, 1, 5.0), &c, 2.0);
        assert!((z[(0, 0)] - 3.0).abs() < 1e-15);
        let feasible = DMatrix::from_element(1, 1, 0.0);
        assert_eq!(prox_mu_dist(&feasible, &c, 2.0), feasible);
    }

    fn random_instance(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, FeasibleSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; n * p];
        let mut status = vec![O; n * p];
        let mut delta = vec![0.0; n * p];
        for k in 0..n * p {
            let u: f64 = rng.random();
            if u < 0.4 {
                values[k] = rng.random_range(0.0..3.0);
            } else if u < 0.8 {
                status[k] = B;
                values[k] = f64::NAN;
                delta[k] = rng.random_range(0.1..2.0);
            } else {
                status[k] = M;
                values[k] = f64::NAN;
            }
        }
        let y = DMatrix::from_fn(n, p, |_, _| rng.random_range(-3.0..4.0));
        (
            y,
            FeasibleSet::from_masked(&masked(&values, &status, &delta, n, p)),
        )
    }

    /// Gradient descent on t·psi(Z) + ½‖Z − Y‖² from Y. The step is halved
    /// every 2000 iterations so the iterate settles even when the minimiser
    /// sits on the kink of the distance function.
    fn prox_oracle(y: &DMatrix<f64>, c: &FeasibleSet, t: f64) -> DMatrix<f64> {
        let mut z = y.clone();
        let mut step = 0.5;
        for stage in 0..32 {
            for _ in 0..2000 {
                let p = project_feasible(&z, c);
                let r = &z - &p;
                let d = r.norm();
                let mut g = &z - y;
                if d > 0.0 {
                    g += r * (t / d);
                }
                z -= g * step;
            }
            if stage > 2 {
                step *= 0.5;
            }
        }
        z
    }

    #[test]
    fn prox_matches_first_order_oracle() {
        for (seed, t) in [(1u64, 0.7), (2, 2.5), (3, 40.0)] {
            let (y, c) = random_instance(seed, 4, 4);
            let fast = prox_mu_dist(&y, &c, t);
            let slow = prox_oracle(&y, &c, t);
            assert!((fast - slow).norm() < 1e-6, "seed {seed}");
        }
    }

    #[test]
    fn rank_nonneg_keeps_feasible_inputs() {
        let u = DVector::from_vec(vec![1.0, 0.5, 2.0]);
        let v = DVector::from_vec(vec![0.2, 3.0]);
        let m = &u * v.transpose();
        let out = project_rank_nonneg(&m, 1, 1).unwrap();
        assert!((out - &m).norm() < 1e-10);
        let eye = DMatrix::<f64>::identity(2, 2);
        assert_eq!(project_rank_nonneg(&eye, 2, 1).unwrap(), eye);
    }

    /// Exhaustive search over σ·u·vᵀ with u, v on a non-negative grid of
    /// directions in the plane; σ is optimal in closed form for each pair.
    #[test]
    fn rank_nonneg_close_to_grid_optimum() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let steps = 2000;
        let mut best = f64::INFINITY;
        for a in 0..=steps {
            let ta = std::f64::consts::FRAC_PI_2 * a as f64 / steps as f64;
            let u = DVector::from_vec(vec![ta.cos(), ta.sin()]);
            for b in 0..=steps {
                let tb = std::f64::consts::FRAC_PI_2 * b as f64 / steps as f64;
                let v = DVector::from_vec(vec![tb.cos(), tb.sin()]);
                let sigma = (u.transpose() * &m * &v)[(0, 0)].max(0.0);
                let d = (&m - (&u * v.transpose()) * sigma).norm();
                best = best.min(d);
            }
        }
        let out = project_rank_nonneg(&m, 1, 1).unwrap();
        let ours = (&m - out).norm();
        assert!(ours <= best * 1.05, "ours {ours} oracle {best}");
    }

    #[test]
    fn rank_nonneg_rejects_bad_arguments() {
        let m = DMatrix::<f64>::identity(2, 2);
        assert!(project_rank_nonneg(&m, 3, 1).is_err());
        assert!(project_rank_nonneg(&m, 1, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn projection_idempotent_and_nonexpansive(seed in 0u64..10_000, shift in -2.0f64..2.0) {
            let (y1, c) = random_instance(seed, 5, 3);
            let y2 = y1.map(|v| v + shift * (v * 1.7).sin());
            let p1 = project_feasible(&y1, &c);
            let p2 = project_feasible(&y2, &c);
            prop_assert_eq!(project_feasible(&p1, &c), p1.clone());
            prop_assert!((&p1 - &p2).norm() <= (&y1 - &y2).norm() + 1e-12);
        }

        #[test]
        fn psi_zero_iff_feasible(seed in 0u64..10_000) {
            let (y, c) = random_instance(seed, 4, 4);
            let p = project_feasible(&y, &c);
            prop_assert_eq!(psi_lod(&p, &c), 0.0);
            prop_assert_eq!(psi_lod(&y, &c) == 0.0, p == y);
        }

        #[test]
        fn psi_equals_residual_norm_when_all_observed(
            data in proptest::collection::vec(0.0f64..10.0, 12),
            noise in proptest::collection::vec(-5.0f64..5.0, 12),
        ) {
            let x = MaskedMatrix::fully_observed(DMatrix::from_vec(3, 4, data.clone())).unwrap();
            let c = FeasibleSet::from_masked(&x);
            let y = DMatrix::from_vec(3, 4, data.iter().zip(&noise).map(|(a, b)| a + b).collect());
            let direct = (&y - x.raw_values()).norm();
            prop_assert!((psi_lod(&y, &c) - direct).abs() <= 1e-12 * (1.0 + direct));
        }

        /// Optimality: Z − Y + t·∂psi(Z) ∋ 0. Away from the set the
        /// subgradient is (Z − P(Z))/psi(Z); on the set Y − Z must be a normal
        /// direction of length ≤ t.
        #[test]
        fn prox_satisfies_optimality(seed in 0u64..10_000, t in 0.05f64..20.0) {
            let (y, c) = random_instance(seed, 4, 4);
            let z = prox_mu_dist(&y, &c, t);
            let pz = project_feasible(&z, &c);
            let d = (&z - &pz).norm();
            if d > 1e-12 {
                let residual = (&z - &y) + (&z - &pz) * (t / d);
                prop_assert!(residual.norm() < 1e-8);
            } else {
                prop_assert!((&y - &z).norm() <= t + 1e-8);
                // y − z must be normal to C at z: projecting z + ε(y − z) returns z
                let probe = &z + (&y - &z) * 1e-3;
                prop_assert!((project_feasible(&probe, &c) - &z).norm() < 1e-8);
            }
        }

        #[test]
        fn soft_threshold_properties(data in proptest::collection::vec(-10.0f64..10.0, 1..20), tau in 0.0f64..5.0) {
            let m = DMatrix::from_vec(1, data.len(), data);
            prop_assert_eq!(soft_threshold(&m, 0.0), m.clone());
            let s = soft_threshold(&m, tau);
            for (a, b) in s.iter().zip(m.iter()) {
                prop_assert!(a.abs() <= b.abs());
            }
        }

        #[test]
        fn rank_nonneg_output_is_nonnegative(seed in 0u64..10_000, passes in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = DMatrix::from_fn(6, 4, |_, _| rng.random_range(-1.0..2.0));
            let out = project_rank_nonneg(&m, 2, passes).unwrap();
            prop_assert!(out.iter().all(|&x| x >= 0.0));
        }
    }
}
