//! PCP-LOD solver.
//!
//! Minimises `λ‖S‖₁ + μ·ψ(L + S)` over non-negative `L` with rank at most `r`,
//! where `ψ` is the distance to the per-entry feasible set (observed value,
//! `[0, δ]` below the detection limit, anything when missing).
//!
//! The iteration splits `Z = L + S` and alternates closed-form steps:
//!
//! ```text
//! Z ← prox_{(μ/ρ)ψ}(L + S + U)
//! L ← clip₊(rank_r(Z − S − U))
//! S ← soft(Z − L − U, λ/ρ)
//! U ← U + L + S − Z
//! ```
//!
//! ρ is residual-balanced for a short burn-in and then increased
//! geometrically, which damps the oscillation introduced by the non-convex
//! `L` step. A final polish re-projects `L` onto non-negative rank-`r`
//! matrices.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use crate::data::{EntryStatus, MaskedMatrix};
use crate::error::{Error, Result};
use crate::linalg::{effective_rank, rank_projection_into};
use crate::prox::{
    project_rank_nonneg, prox_mu_dist_into, psi_lod, soft_threshold_scalar, FeasibleSet,
};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PcpConfig {
    /// Upper bound on the rank of `L`.
    pub rank: usize,
    /// Sparsity weight; `None` means `1/√n`.
    pub lambda: Option<f64>,
    /// Data-fit weight; `None` means `√(p/2)`.
    pub mu: Option<f64>,
    /// Initial coupling weight.
    pub rho: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub final_polish_passes: usize,
    /// Iterations during which ρ is residual-balanced. Zero disables it.
    pub balance_iters: usize,
    /// Per-iteration ρ multiplier after the balancing phase.
    pub rho_growth: f64,
}

impl PcpConfig {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            lambda: None,
            mu: None,
            rho: 1.0,
            tol: 1e-6,
            max_iter: 20_000,
            final_polish_passes: 10,
            balance_iters: 0,
            rho_growth: 1.005,
        }
    }

    pub fn with_rank(&self, rank: usize) -> Self {
        Self {
            rank,
            ..self.clone()
        }
    }

    pub fn lambda_for(&self, n: usize) -> f64 {
        self.lambda.unwrap_or_else(|| 1.0 / (n as f64).sqrt())
    }

    pub fn mu_for(&self, p: usize) -> f64 {
        self.mu.unwrap_or_else(|| (p as f64 / 2.0).sqrt())
    }

    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        let k = n.min(p);
        if self.rank == 0 || self.rank > k {
            return Err(Error::Config(format!(
                "rank {} must be in 1..={k} for a {n}x{p} matrix",
                self.rank
            )));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive("lambda", self.lambda_for(n))?;
        positive("mu", self.mu_for(p))?;
        positive("rho", self.rho)?;
        positive("tol", self.tol)?;
        if self.max_iter == 0 || self.final_polish_passes == 0 {
            return Err(Error::Config(
                "max_iter and final_polish_passes must be positive".into(),
            ));
        }
        if !(self.rho_growth.is_finite() && self.rho_growth >= 1.0) {
            return Err(Error::Config(format!(
                "rho_growth must be >= 1, got {}",
                self.rho_growth
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverDiagnostics {
    pub objective_trace: Vec<f64>,
    pub primal_residual_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub low_rank: DMatrix<f64>,
    pub sparse: DMatrix<f64>,
    pub effective_rank: usize,
    pub objective: f64,
    pub diagnostics: SolverDiagnostics,
}

impl Decomposition {
    pub fn iterations(&self) -> usize {
        self.diagnostics.iterations
    }

    pub fn converged(&self) -> bool {
        self.diagnostics.converged
    }
}

/// The data-fit term of the objective: a convex penalty with a cheap prox.
pub trait DataFit {
    fn shape(&self) -> (usize, usize);
    fn value(&self, y: &DMatrix<f64>) -> f64;
    /// Writes `argmin_z t·value(z) + ½‖z − y‖²` into `out`.
    fn prox_into(&self, y: &DMatrix<f64>, t: f64, out: &mut DMatrix<f64>);
    /// Starting point for `L + S`.
    fn warm_start(&self) -> DMatrix<f64>;
}

/// Distance to the LOD-aware feasible set.
pub struct LodFit {
    set: FeasibleSet,
    start: DMatrix<f64>,
}

impl LodFit {
    pub fn new(x: &MaskedMatrix) -> Self {
        // observed values, δ/2 when censored, column mean of those when missing
        let mut start = x.fill_unobserved(|s, d| match s {
            EntryStatus::BelowLod => d / 2.0,
            _ => 0.0,
        });
        let (n, p) = x.shape();
        for j in 0..p {
            let known: Vec<usize> = (0..n)
                .filter(|&i| x.status(i, j) != EntryStatus::Missing)
                .collect();
            if known.len() == n || known.is_empty() {
                continue;
            }
            let mean = known.iter().map(|&i| start[(i, j)]).sum::<f64>() / known.len() as f64;
            for i in 0..n {
                if x.status(i, j) == EntryStatus::Missing {
                    start[(i, j)] = mean;
                }
            }
        }
        Self {
            set: FeasibleSet::from_masked(x),
            start,
        }
    }
}

impl DataFit for LodFit {
    fn shape(&self) -> (usize, usize) {
        self.set.shape()
    }

    fn value(&self, y: &DMatrix<f64>) -> f64 {
        psi_lod(y, &self.set)
    }

    fn prox_into(&self, y: &DMatrix<f64>, t: f64, out: &mut DMatrix<f64>) {
        prox_mu_dist_into(y, &self.set, t, out);
    }

    fn warm_start(&self) -> DMatrix<f64> {
        self.start.clone()
    }
}

/// Plain `‖Y − X‖_F` against a fully observed matrix.
pub struct FrobeniusFit {
    target: DMatrix<f64>,
}

impl FrobeniusFit {
    pub fn new(target: DMatrix<f64>) -> Self {
        Self { target }
    }
}

impl DataFit for FrobeniusFit {
    fn shape(&self) -> (usize, usize) {
        self.target.shape()
    }

    fn value(&self, y: &DMatrix<f64>) -> f64 {
        y.iter()
            .zip(self.target.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    fn prox_into(&self, y: &DMatrix<f64>, t: f64, out: &mut DMatrix<f64>) {
        let d = self.value(y);
        let shrink = if d > t { 1.0 - t / d } else { 0.0 };
        out.zip_zip_apply(y, &self.target, |o, v, x| *o = x + (v - x) * shrink);
    }

    fn warm_start(&self) -> DMatrix<f64> {
        self.target.clone()
    }
}

/// `λ‖S‖₁ + μ·ψ(L + S)` when `L ≥ 0` with effective rank ≤ r, else +∞.
pub fn objective(
    low_rank: &DMatrix<f64>,
    sparse: &DMatrix<f64>,
    x: &MaskedMatrix,
    cfg: &PcpConfig,
) -> f64 {
    assert_eq!(low_rank.shape(), x.shape());
    assert_eq!(sparse.shape(), x.shape());
    if low_rank.iter().any(|&v| v < 0.0) || effective_rank(low_rank) > cfg.rank {
        return f64::INFINITY;
    }
    let (n, p) = x.shape();
    penalty(
        low_rank,
        sparse,
        &LodFit::new(x),
        cfg.lambda_for(n),
        cfg.mu_for(p),
    )
}

fn penalty<F: DataFit>(l: &DMatrix<f64>, s: &DMatrix<f64>, fit: &F, lambda: f64, mu: f64) -> f64 {
    lambda * s.iter().map(|v| v.abs()).sum::<f64>() + mu * fit.value(&(l + s))
}

#[derive(Default)]
struct Sums {
    primal: f64,
    change_l: f64,
    change_s: f64,
    norm_l: f64,
    norm_s: f64,
    abs_s: f64,
}

/// Solves PCP-LOD on a masked matrix.
pub fn solve(x: &MaskedMatrix, cfg: &PcpConfig) -> Result<Decomposition> {
    solve_with(&LodFit::new(x), cfg)
}

/// Solves the same problem with a plain Frobenius data fit on a complete matrix.
pub fn solve_frobenius(x: &DMatrix<f64>, cfg: &PcpConfig) -> Result<Decomposition> {
    solve_with(&FrobeniusFit::new(x.clone()), cfg)
}

pub fn solve_with<F: DataFit>(fit: &F, cfg: &PcpConfig) -> Result<Decomposition> {
    let started = Instant::now();
    let (n, p) = fit.shape();
    cfg.validate(n, p)?;
    let lambda = cfg.lambda_for(n);
    let mu = cfg.mu_for(p);
    let r = cfg.rank;

    let mut low_rank = project_rank_nonneg(&fit.warm_start(), r, 1)?;
    let mut sparse = DMatrix::zeros(n, p);
    let mut dual = DMatrix::zeros(n, p);
    let mut z = low_rank.clone();
    let mut z_prev = low_rank.clone();
    let mut next_l = DMatrix::zeros(n, p);
    let mut work = DMatrix::zeros(n, p);
    let mut rho = cfg.rho;

    let mut objective_trace = Vec::new();
    let mut primal_residual_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        std::mem::swap(&mut z, &mut z_prev);
        for (((w, &l), &s), &u) in work
            .as_mut_slice()
            .iter_mut()
            .zip(low_rank.as_slice())
            .zip(sparse.as_slice())
            .zip(dual.as_slice())
        {
            *w = l + s + u;
        }
        fit.prox_into(&work, mu / rho, &mut z);

        for (((w, &zk), &s), &u) in work
            .as_mut_slice()
            .iter_mut()
            .zip(z.as_slice())
            .zip(sparse.as_slice())
            .zip(dual.as_slice())
        {
            *w = zk - s - u;
        }
        rank_projection_into(&work, r, &mut next_l);

        let tau = lambda / rho;
        let mut sums = Sums::default();
        let cells = next_l
            .as_mut_slice()
            .iter_mut()
            .zip(z.as_slice())
            .zip(dual.as_mut_slice())
            .zip(low_rank.as_slice())
            .zip(sparse.as_mut_slice())
            .zip(work.as_mut_slice());
        for (((((l_slot, &zk), u), &l_old), s_slot), w) in cells {
            let l = l_slot.max(0.0);
            *l_slot = l;
            let s = soft_threshold_scalar(zk - l - *u, tau);
            let coupling = l + s - zk;
            *u += coupling;
            sums.primal += coupling * coupling;
            sums.change_l += (l - l_old) * (l - l_old);
            sums.change_s += (s - *s_slot) * (s - *s_slot);
            sums.norm_l += l * l;
            sums.norm_s += s * s;
            sums.abs_s += s.abs();
            *s_slot = s;
            *w = l + s;
        }
        std::mem::swap(&mut low_rank, &mut next_l);

        if !(sums.norm_l.is_finite() && sums.norm_s.is_finite()) {
            return Err(Error::Divergence {
                iteration: iterations,
                message: format!("non-finite iterate (rho = {rho})"),
            });
        }

        let change_l = sums.change_l.sqrt() / (1.0 + sums.norm_l.sqrt());
        let change_s = sums.change_s.sqrt() / (1.0 + sums.norm_s.sqrt());
        let primal = sums.primal.sqrt();
        objective_trace.push(lambda * sums.abs_s + mu * fit.value(&work));
        primal_residual_trace.push(primal);

        if change_l.max(change_s) < cfg.tol {
            converged = true;
            break;
        }

        if iterations <= cfg.balance_iters {
            let dual_residual = rho
                * z.as_slice()
                    .iter()
                    .zip(z_prev.as_slice())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
            if primal > 10.0 * dual_residual {
                rho *= 2.0;
                dual /= 2.0;
            } else if dual_residual > 10.0 * primal {
                rho /= 2.0;
                dual *= 2.0;
            }
        } else if cfg.rho_growth > 1.0 {
            rho *= cfg.rho_growth;
            dual /= cfg.rho_growth;
        }
    }

    let low_rank = polish(&low_rank, r, cfg.final_polish_passes)?;
    let mut result = Decomposition {
        effective_rank: effective_rank(&low_rank),
        objective: penalty(&low_rank, &sparse, fit, lambda, mu),
        low_rank,
        sparse,
        diagnostics: SolverDiagnostics {
            objective_trace,
            primal_residual_trace,
            iterations,
            converged,
            wall_time: Duration::ZERO,
        },
    };

    let zero = DMatrix::zeros(n, p);
    let trivial = penalty(&zero, &zero, fit, lambda, mu);
    if result.objective > trivial {
        result.low_rank = zero.clone();
        result.sparse = zero;
        result.effective_rank = 0;
        result.objective = trivial;
    }
    result.diagnostics.wall_time = started.elapsed();
    Ok(result)
}

const MAX_EXTRA_POLISH_PASSES: usize = 500;

/// Non-negative matrix of rank ≤ r close to `l`.
///
/// Runs `passes` alternating projections and continues while the final clip
/// still raises the rank. If that does not settle, falls back to the leading
/// rank-one component, whose factors are non-negative for a non-negative
/// matrix.
pub fn polish(l: &DMatrix<f64>, r: usize, passes: usize) -> Result<DMatrix<f64>> {
    let mut current = project_rank_nonneg(l, r, passes)?;
    for _ in 0..MAX_EXTRA_POLISH_PASSES {
        if effective_rank(&current) <= r {
            return Ok(current);
        }
        current = project_rank_nonneg(&current, r, 1)?;
    }
    if effective_rank(&current) <= r {
        return Ok(current);
    }
    Ok(rank_one_nonneg(&current))
}

fn rank_one_nonneg(m: &DMatrix<f64>) -> DMatrix<f64> {
    match crate::linalg::truncated_svd(m, 1) {
        Ok(t) if t.sigma[0] > 0.0 => {
            let sign = if t.u.column(0).sum() < 0.0 { -1.0 } else { 1.0 };
            let u = t.u.column(0).map(|v| (v * sign).max(0.0));
            let v = t.v.column(0).map(|v| (v * sign).max(0.0));
            (&u * v.transpose()) * t.sigma[0]
        }
        _ => DMatrix::zeros(m.nrows(), m.ncols()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, LogNormal};

    fn nonneg_low_rank(n: usize, p: usize, r: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = DMatrix::from_fn(n, r, |_, _| rng.random_range(0.0..2.0));
        let h = DMatrix::from_fn(r, p, |_, _| rng.random_range(0.0..2.0));
        w * h
    }

    #[test]
    fn objective_at_zero_is_scaled_norm() {
        // ‖X‖_F = 7
        let x =
            MaskedMatrix::fully_observed(DMatrix::from_row_slice(1, 3, &[2.0, 3.0, 6.0])).unwrap();
        let cfg = PcpConfig {
            lambda: Some(0.25),
            mu: Some(2.0),
            ..PcpConfig::new(1)
        };
        let zero = DMatrix::zeros(1, 3);
        assert!((objective(&zero, &zero, &x, &cfg) - 14.0).abs() < 1e-12);
    }

    #[test]
    fn objective_is_infinite_for_negative_low_rank() {
        let x = MaskedMatrix::fully_observed(DMatrix::from_element(2, 2, 1.0)).unwrap();
        let mut l = DMatrix::from_element(2, 2, 1.0);
        l[(0, 1)] = -0.1;
        assert_eq!(
            objective(&l, &DMatrix::zeros(2, 2), &x, &PcpConfig::new(2)),
            f64::INFINITY
        );
        let full_rank = DMatrix::<f64>::identity(2, 2);
        assert_eq!(
            objective(&full_rank, &DMatrix::zeros(2, 2), &x, &PcpConfig::new(1)),
            f64::INFINITY
        );
    }

    #[test]
    fn all_zero_input_gives_zero_solution() {
        let x = MaskedMatrix::fully_observed(DMatrix::zeros(6, 4)).unwrap();
        let d = solve(&x, &PcpConfig::new(2)).unwrap();
        assert!(d.low_rank.iter().all(|&v| v == 0.0));
        assert!(d.sparse.iter().all(|&v| v == 0.0));
        assert_eq!(d.objective, 0.0);
        assert!(d.converged());
    }

    #[test]
    fn exact_low_rank_is_recovered() {
        let truth = nonneg_low_rank(50, 8, 2, 3);
        let x = MaskedMatrix::fully_observed(truth.clone()).unwrap();
        let d = solve(&x, &PcpConfig::new(2)).unwrap();
        let rel = (&d.low_rank - &truth).norm() / truth.norm();
        let sparse_mass = d.sparse.iter().map(|v| v.abs()).sum::<f64>() / truth.iter().sum::<f64>();
        assert!(rel <= 1e-3, "relative error {rel}");
        assert!(sparse_mass <= 1e-3, "sparse mass {sparse_mass}");
        assert!(d.effective_rank <= 2);
    }

    /// Two patterns with distinct chemicals and one shared chemical, lognormal
    /// scores, and 20 spikes of +10 placed in distinct rows.
    fn spiked_patterns(seed: u64) -> (DMatrix<f64>, DMatrix<f64>, Vec<(usize, usize)>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = DMatrix::from_row_slice(
            2,
            8,
            &[
                1.0, 1.0, 1.0, 1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.0,
            ],
        );
        let scores = LogNormal::new(1.0, 0.5).unwrap();
        let w = DMatrix::from_fn(50, 2, |_, _| scores.sample(&mut rng));
        let base = w * h;
        let mut rows: Vec<usize> = (0..50).collect();
        rows.shuffle(&mut rng);
        let spikes: Vec<(usize, usize)> = rows[..20]
            .iter()
            .map(|&i| (i, rng.random_range(0..8)))
            .collect();
        let mut x = base.clone();
        for &(i, j) in &spikes {
            x[(i, j)] += 10.0;
        }
        (base, x, spikes)
    }

    #[test]
    fn planted_spikes_land_in_sparse() {
        for seed in [10, 11, 12] {
            let (base, x, spikes) = spiked_patterns(seed);
            let d = solve(
                &MaskedMatrix::fully_observed(x).unwrap(),
                &PcpConfig::new(2),
            )
            .unwrap();
            for &(i, j) in &spikes {
                assert!(
                    d.sparse[(i, j)] > 1.0,
                    "seed {seed}: spike at ({i}, {j}) = {}",
                    d.sparse[(i, j)]
                );
            }
            let rel = (&d.low_rank - &base).norm() / base.norm();
            assert!(rel <= 0.05, "seed {seed}: relative error {rel}");
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let x = MaskedMatrix::fully_observed(DMatrix::from_element(3, 2, 1.0)).unwrap();
        assert!(matches!(
            solve(&x, &PcpConfig::new(3)),
            Err(Error::Config(_))
        ));
        let cfg = PcpConfig {
            rho: 0.0,
            ..PcpConfig::new(1)
        };
        assert!(matches!(solve(&x, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn traces_have_one_entry_per_iteration() {
        let x = MaskedMatrix::fully_observed(nonneg_low_rank(20, 5, 2, 1)).unwrap();
        let d = solve(&x, &PcpConfig::new(2)).unwrap();
        assert_eq!(d.diagnostics.objective_trace.len(), d.iterations());
        assert_eq!(d.diagnostics.primal_residual_trace.len(), d.iterations());
    }

    #[test]
    fn polish_reaches_rank_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = DMatrix::from_fn(30, 6, |_, _| rng.random_range(-0.5..2.0));
        let out = polish(&m, 2, 10).unwrap();
        assert!(out.iter().all(|&v| v >= 0.0));
        assert!(effective_rank(&out) <= 2);
    }

    #[test]
    fn rank_one_fallback_is_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = DMatrix::from_fn(12, 5, |_, _| rng.random_range(0.0..2.0));
        let out = rank_one_nonneg(&m);
        assert!(out.iter().all(|&v| v >= 0.0));
        assert_eq!(effective_rank(&out), 1);
    }
}
