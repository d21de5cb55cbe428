//! Bayesian reconstruction of the joint 4x4 density matrix.
//!
//! The state is parameterised by a complex 4x4 matrix `M` (32 real numbers)
//! through `ρ = M M† / tr(M M†)`, which is a valid density matrix for every
//! nonzero `M`. Chains sample the posterior `π(m) ∝ L(ρ(m))` under a uniform
//! prior in `m`-space with Metropolis-Hastings updates and preconditioned
//! Crank-Nicolson proposals `m′ ~ N(√(1−β²)·m, β²·I)`. Because the prior is
//! uniform rather than the pCN Gaussian reference measure, the proposal
//! density ratio `q(m|m′)/q(m′|m) = exp((‖m′‖² − ‖m‖²)/2)` enters the
//! acceptance probability exactly.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entangle::{bell_fidelity_with_rotation, clip_to_state, concurrence, corrected_state, eof_from_concurrence, CoherenceSpec, LocalChannelSpec};
use crate::polopt::CountRecord;
use crate::qmat::{herm_eigvals, partial_transpose, ComplexMatrix, DensityMatrix, Subsystem};
use crate::{fmt17, Error, Result};

/// Number of real parameters (one complex 4x4 matrix).
pub const N_PARAMS: usize = 32;

/// Chain position with its cached log-posterior.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub m: [f64; N_PARAMS],
    pub log_post: f64,
}

/// Sampler configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub n_chains: usize,
    pub n_iter: u64,
    pub burn_in_fraction: f64,
    /// Initial pCN step size; adapted during burn-in, frozen afterwards.
    pub beta: f64,
    pub adapt_target: f64,
    pub seed: u64,
    /// Keep every `thin`-th post-burn-in sample.
    pub thin: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_chains: 6,
            n_iter: 1_000_000,
            burn_in_fraction: 0.10,
            beta: 0.05,
            adapt_target: 0.234,
            seed: 0,
            thin: 10,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 || self.n_iter == 0 || self.thin == 0 {
            return Err(Error::InvalidValue(
                "n_chains, n_iter and thin must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::InvalidValue("burn_in_fraction must be in [0, 1)".into()));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidValue("beta must be in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.adapt_target) {
            return Err(Error::InvalidValue("adapt_target must be in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn burn_in(&self) -> u64 {
        (self.n_iter as f64 * self.burn_in_fraction).floor() as u64
    }
}

/// `ρ = M M† / tr(M M†)` as a flat row-major 4x4.
fn rho_flat(m: &[f64; N_PARAMS]) -> [Complex64; 16] {
    let mut mm = [Complex64::ZERO; 16];
    let entry = |i: usize, j: usize| Complex64::new(m[2 * (4 * i + j)], m[2 * (4 * i + j) + 1]);
    let mut trace = 0.0;
    for i in 0..4 {
        for j in i..4 {
            let mut acc = Complex64::ZERO;
            for k in 0..4 {
                acc += entry(i, k) * entry(j, k).conj();
            }
            mm[4 * i + j] = acc;
            mm[4 * j + i] = acc.conj();
            if i == j {
                trace += acc.re;
            }
        }
    }
    for z in &mut mm {
        *z /= trace;
    }
    mm
}

/// Builds the density matrix `M M† / tr(M M†)` from a parameter vector.
pub fn rho_from_params(m: &[f64; N_PARAMS]) -> Result<DensityMatrix> {
    if m.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidValue("zero parameter vector".into()));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidValue("non-finite parameter".into()));
    }
    let flat = rho_flat(m);
    // M M† can underflow to zero for denormal-scale inputs.
    if !flat.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::InvalidValue(
            "parameter vector too small to normalise".into(),
        ));
    }
    Ok(DensityMatrix::new_unchecked(ComplexMatrix::new(
        4,
        4,
        flat.to_vec(),
    )?))
}

/// Log-posterior evaluator. Implemented by the count-record likelihood and
/// by test problems.
pub trait LogPostFn: Sync {
    fn log_post(&self, m: &[f64; N_PARAMS]) -> f64;
}

struct Group {
    effects: Vec<[Complex64; 16]>,
    counts: Vec<f64>,
}

/// Count records compiled into per-group flat effect tables for fast
/// repeated likelihood evaluation.
pub struct LikelihoodModel {
    groups: Vec<Group>,
}

impl LikelihoodModel {
    pub fn new(records: &[CountRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyRecords);
        }
        let mut grouped: BTreeMap<&str, Vec<&CountRecord>> = BTreeMap::new();
        for r in records {
            if r.effect.op.rows() != 4 || r.effect.op.cols() != 4 {
                return Err(Error::Dimension("likelihood needs 4x4 effects".into()));
            }
            grouped.entry(&r.effect.group_id.0).or_default().push(r);
        }
        let groups = grouped
            .into_values()
            .map(|records| Group {
                effects: records
                    .iter()
                    .map(|r| {
                        let mut e = [Complex64::ZERO; 16];
                        e.copy_from_slice(r.effect.op.data());
                        e
                    })
                    .collect(),
                counts: records.iter().map(|r| r.count as f64).collect(),
            })
            .collect();
        Ok(Self { groups })
    }

    /// `Σ_j N_j · ln p_j` with `p_j` the group-renormalised `tr(ξ_j ρ)`.
    /// Returns −∞ when a zero-probability cell has observed counts.
    pub fn log_likelihood_flat(&self, rho: &[Complex64; 16]) -> f64 {
        let max_group = self.groups.iter().map(|g| g.effects.len()).max().unwrap_or(0);
        let mut probs = vec![0.0_f64; max_group];
        let mut total = 0.0;
        for group in &self.groups {
            let n = group.effects.len();
            let mut sum = 0.0;
            for (slot, effect) in probs[..n].iter_mut().zip(&group.effects) {
                let mut acc = 0.0;
                for i in 0..4 {
                    for k in 0..4 {
                        let e = effect[4 * i + k];
                        let r = rho[4 * k + i];
                        acc += e.re * r.re - e.im * r.im;
                    }
                }
                let p = acc.max(0.0);
                *slot = p;
                sum += p;
            }
            if sum <= 0.0 {
                return f64::NEG_INFINITY;
            }
            for j in 0..n {
                let nj = group.counts[j];
                if nj == 0.0 {
                    continue;
                }
                let p = probs[j] / sum;
                if p <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                total += nj * p.max(1e-300).ln();
            }
        }
        total
    }
}

impl LogPostFn for LikelihoodModel {
    fn log_post(&self, m: &[f64; N_PARAMS]) -> f64 {
        self.log_likelihood_flat(&rho_flat(m))
    }
}

/// Group-renormalised log-likelihood of a state given count records.
pub fn log_likelihood(rho: &DensityMatrix, records: &[CountRecord]) -> Result<f64> {
    if rho.dim() != 4 {
        return Err(Error::Dimension("log_likelihood needs a 4x4 state".into()));
    }
    let model = LikelihoodModel::new(records)?;
    let mut flat = [Complex64::ZERO; 16];
    flat.copy_from_slice(rho.mat().data());
    Ok(model.log_likelihood_flat(&flat))
}

/// Closed form of the pCN proposal density ratio
/// `ln [q(m|m′)/q(m′|m)] = (‖m′‖² − ‖m‖²)/2`, independent of β.
pub fn pcn_log_q_ratio(current: &[f64; N_PARAMS], proposed: &[f64; N_PARAMS]) -> f64 {
    let n_new: f64 = proposed.iter().map(|x| x * x).sum();
    let n_old: f64 = current.iter().map(|x| x * x).sum();
    0.5 * (n_new - n_old)
}

/// One Metropolis-Hastings update with a pCN proposal. Returns the next
/// state and whether the proposal was accepted; on rejection the state is
/// the unchanged input.
pub fn pcn_step<T: LogPostFn>(
    target: &T,
    state: &ChainState,
    beta: f64,
    rng: &mut impl Rng,
) -> Result<(ChainState, bool)> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidValue(format!("beta {beta} outside (0, 1]")));
    }
    let shrink = (1.0 - beta * beta).sqrt();
    let mut proposed = [0.0_f64; N_PARAMS];
    for (p, x) in proposed.iter_mut().zip(&state.m) {
        let z: f64 = rng.sample(StandardNormal);
        *p = shrink * x + beta * z;
    }
    let log_post_new = target.log_post(&proposed);
    let log_alpha = (log_post_new - state.log_post + pcn_log_q_ratio(&state.m, &proposed)).min(0.0);
    let u: f64 = rng.random();
    if u.ln() < log_alpha {
        Ok((
            ChainState {
                m: proposed,
                log_post: log_post_new,
            },
            true,
        ))
    } else {
        Ok((state.clone(), false))
    }
}

/// Retained samples and diagnostics of one chain.
#[derive(Debug, Clone)]
pub struct ChainSamples {
    pub chain_id: usize,
    pub params: Vec<[f64; N_PARAMS]>,
    /// Iteration index (0-based) at which each sample was recorded.
    pub iterations: Vec<u64>,
    pub log_post: Vec<f64>,
    pub acceptance_post_burnin: f64,
    pub beta_final: f64,
    /// `(iteration, beta, window acceptance)` at each adaptation event.
    pub beta_trace: Vec<(u64, f64, f64)>,
    /// `(iteration, cumulative acceptance)` checkpoints.
    pub acceptance_trace: Vec<(u64, f64)>,
    pub warnings: Vec<String>,
}

/// Thinned posterior samples from all chains.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    pub chains: Vec<ChainSamples>,
    pub thin: u64,
    pub n_iter: u64,
    pub burn_in: u64,
}

impl PosteriorSamples {
    pub fn n_samples(&self) -> usize {
        self.chains.iter().map(|c| c.params.len()).sum()
    }

    pub fn iter_params(&self) -> impl Iterator<Item = &[f64; N_PARAMS]> {
        self.chains.iter().flat_map(|c| c.params.iter())
    }

    pub fn warnings(&self) -> Vec<String> {
        self.chains
            .iter()
            .flat_map(|c| c.warnings.iter().cloned())
            .collect()
    }
}

fn run_single_chain<T: LogPostFn>(target: &T, config: &ChainConfig, chain_id: usize) -> ChainSamples {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain_id as u64 + 1);

    let mut m = [0.0_f64; N_PARAMS];
    for x in &mut m {
        *x = rng.sample(StandardNormal);
    }
    let mut state = ChainState {
        log_post: target.log_post(&m),
        m,
    };

    let burn_in = config.burn_in();
    let n_keep = ((config.n_iter - burn_in) / config.thin) as usize;
    let mut samples = ChainSamples {
        chain_id,
        params: Vec::with_capacity(n_keep),
        iterations: Vec::with_capacity(n_keep),
        log_post: Vec::with_capacity(n_keep),
        acceptance_post_burnin: 0.0,
        beta_final: config.beta,
        beta_trace: Vec::new(),
        acceptance_trace: Vec::new(),
        warnings: Vec::new(),
    };

    let mut beta = config.beta;
    let mut window_accepted = 0u64;
    let mut accepted_total = 0u64;
    let mut accepted_post = 0u64;
    let checkpoint = (config.n_iter / 200).max(1);

    for iter in 0..config.n_iter {
        let (next, accepted) = pcn_step(target, &state, beta, &mut rng).expect("validated beta");
        state = next;
        if accepted {
            window_accepted += 1;
            accepted_total += 1;
            if iter >= burn_in {
                accepted_post += 1;
            }
        }
        if iter < burn_in && (iter + 1) % 100 == 0 {
            let acc = window_accepted as f64 / 100.0;
            beta = (beta * (0.01 * (acc - config.adapt_target)).exp()).clamp(1e-6, 1.0);
            samples.beta_trace.push((iter + 1, beta, acc));
            window_accepted = 0;
        }
        if iter >= burn_in {
            window_accepted = 0;
            if (iter + 1 - burn_in) % config.thin == 0 {
                samples.params.push(state.m);
                samples.iterations.push(iter);
                samples.log_post.push(state.log_post);
            }
        }
        if (iter + 1) % checkpoint == 0 {
            samples
                .acceptance_trace
                .push((iter + 1, accepted_total as f64 / (iter + 1) as f64));
        }
    }

    samples.beta_final = beta;
    let post_iters = config.n_iter - burn_in;
    samples.acceptance_post_burnin = if post_iters > 0 {
        accepted_post as f64 / post_iters as f64
    } else {
        0.0
    };
    if burn_in >= 100 {
        let tail: Vec<&(u64, f64, f64)> = samples.beta_trace.iter().rev().take(10).collect();
        let end_acc = tail.iter().map(|t| t.2).sum::<f64>() / tail.len() as f64;
        if !(0.05..=0.60).contains(&end_acc) {
            samples.warnings.push(format!(
                "chain {chain_id}: burn-in end acceptance {:.1}% outside [5%, 60%]",
                100.0 * end_acc
            ));
        }
    }
    samples
}

/// Runs `n_chains` independent chains from per-chain deterministic random
/// streams. Results are identical for a fixed seed regardless of thread
/// count or execution order.
pub fn run_chains(config: &ChainConfig, records: &[CountRecord]) -> Result<PosteriorSamples> {
    config.validate()?;
    let model = LikelihoodModel::new(records)?;
    run_chains_with(&model, config)
}

/// [`run_chains`] against an arbitrary log-posterior.
pub fn run_chains_with<T: LogPostFn>(target: &T, config: &ChainConfig) -> Result<PosteriorSamples> {
    config.validate()?;
    let chains: Vec<ChainSamples> = (0..config.n_chains)
        .into_par_iter()
        .map(|chain_id| run_single_chain(target, config, chain_id))
        .collect();
    Ok(PosteriorSamples {
        chains,
        thin: config.thin,
        n_iter: config.n_iter,
        burn_in: config.burn_in(),
    })
}

/// Gelman-Rubin statistic from between- and within-chain variances,
/// `R̂ = √(1 + B/(nW))`: exactly 1 for identical chains and always ≥ 1.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::InvalidValue(format!(
            "Gelman-Rubin needs at least 2 chains, got {}",
            chains.len()
        )));
    }
    let n = chains[0].len();
    if n < 10 {
        return Err(Error::InvalidValue("chains shorter than 10 samples".into()));
    }
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidValue("chains must have equal lengths".into()));
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within = chains.iter().map(|c| variance(c)).sum::<f64>() / chains.len() as f64;
    let between_over_n = variance(&means);
    if within == 0.0 {
        // Zero within-chain variance: identical constants give R̂ = 1,
        // separated constants diverge.
        return Ok(if between_over_n == 0.0 { 1.0 } else { f64::INFINITY });
    }
    Ok((1.0 + between_over_n / within).sqrt())
}

/// R̂ evaluated on growing chain prefixes, for convergence-evolution plots.
pub fn gelman_rubin_evolution(chains: &[Vec<f64>], n_points: usize) -> Result<Vec<(usize, f64)>> {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let mut out = Vec::new();
    for k in 1..=n_points {
        let len = (n * k) / n_points;
        if len < 10 {
            continue;
        }
        let prefixes: Vec<Vec<f64>> = chains.iter().map(|c| c[..len].to_vec()).collect();
        out.push((len, gelman_rubin(&prefixes)?));
    }
    Ok(out)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Normalised autocovariance `r(0..=max_lag)`, `r(0) = 1`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if series.len() <= max_lag {
        return Err(Error::InvalidValue(format!(
            "series length {} must exceed max_lag {max_lag}",
            series.len()
        )));
    }
    let n = series.len();
    let m = mean(series);
    let denom: f64 = series.iter().map(|x| (x - m) * (x - m)).sum();
    if denom == 0.0 {
        let mut out = vec![0.0; max_lag + 1];
        out[0] = 1.0;
        return Ok(out);
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        let cov: f64 = (0..n - lag)
            .map(|t| (series[t] - m) * (series[t + lag] - m))
            .sum();
        out.push(cov / denom);
    }
    Ok(out)
}

/// Effective sample size `n / (1 + 2 Σ r_k)`, truncating the sum at the
/// first non-positive autocorrelation.
pub fn effective_sample_size(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 3 {
        return n as f64;
    }
    let max_lag = (n / 2).min(1000);
    let Ok(r) = autocorrelation(series, max_lag) else {
        return n as f64;
    };
    let mut tau = 1.0;
    for rk in r.iter().skip(1) {
        if *rk <= 0.0 {
            break;
        }
        tau += 2.0 * rk;
    }
    n as f64 / tau
}

/// Scalar functionals evaluated per posterior sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarFunctional {
    LogPosterior,
    MinPtEig,
    BellFidelity,
    Concurrence,
    EntanglementOfFormation,
}

impl ScalarFunctional {
    pub fn name(self) -> &'static str {
        match self {
            ScalarFunctional::LogPosterior => "log_posterior",
            ScalarFunctional::MinPtEig => "min_pt_eigenvalue",
            ScalarFunctional::BellFidelity => "bell_fidelity",
            ScalarFunctional::Concurrence => "concurrence",
            ScalarFunctional::EntanglementOfFormation => "entanglement_of_formation",
        }
    }
}

/// Options for per-sample functional evaluation.
#[derive(Debug, Clone, Default)]
pub struct SummaryOptions {
    /// Photon-side rotation applied before Bell-fidelity evaluation.
    pub photon_rotation: Option<ComplexMatrix>,
    /// Electron-coherence correction applied to every sample.
    pub correction: Option<(CoherenceSpec, LocalChannelSpec)>,
    /// Histogram bin count.
    pub bins: usize,
}

impl SummaryOptions {
    pub fn bins_or_default(&self) -> usize {
        if self.bins == 0 {
            60
        } else {
            self.bins
        }
    }
}

fn eval_functional(
    m: &[f64; N_PARAMS],
    log_post: f64,
    functional: ScalarFunctional,
    opts: &SummaryOptions,
) -> Result<f64> {
    if functional == ScalarFunctional::LogPosterior {
        return Ok(log_post);
    }
    let rho = rho_from_params(m)?;
    let mat = match &opts.correction {
        Some((spec, channel)) => corrected_state(rho.mat(), spec, channel)?,
        None => rho.into_mat(),
    };
    match functional {
        ScalarFunctional::LogPosterior => unreachable!(),
        ScalarFunctional::MinPtEig => {
            let state = DensityMatrix::new_unchecked(mat);
            let pt = partial_transpose(&state, Subsystem::Second)?;
            Ok(herm_eigvals(&pt)?[0])
        }
        ScalarFunctional::BellFidelity => {
            let identity = ComplexMatrix::identity(2);
            let u = opts.photon_rotation.as_ref().unwrap_or(&identity);
            Ok(bell_fidelity_with_rotation(&mat, u))
        }
        ScalarFunctional::Concurrence => {
            let state = clip_to_state(&mat)?;
            concurrence(&state)
        }
        ScalarFunctional::EntanglementOfFormation => {
            let state = clip_to_state(&mat)?;
            Ok(eof_from_concurrence(concurrence(&state)?))
        }
    }
}

/// Histogram over `[lo, hi]` with uniform bins.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn build(values: &[f64], bins: usize) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut counts = vec![0u64; bins];
        if hi > lo {
            for v in values {
                let idx = (((v - lo) / (hi - lo)) * bins as f64) as usize;
                counts[idx.min(bins - 1)] += 1;
            }
        } else {
            counts[bins / 2] = values.len() as u64;
        }
        Self { lo, hi, counts }
    }

    pub fn bin_centres(&self) -> Vec<f64> {
        let n = self.counts.len();
        let width = if self.hi > self.lo {
            (self.hi - self.lo) / n as f64
        } else {
            0.0
        };
        (0..n).map(|i| self.lo + (i as f64 + 0.5) * width).collect()
    }
}

/// Mean, standard deviation and histogram of a per-sample functional.
#[derive(Debug, Clone)]
pub struct ScalarSummary {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
    pub histogram: Histogram,
}

/// Per-sample functional values in chain order.
pub fn functional_values(
    samples: &PosteriorSamples,
    functional: ScalarFunctional,
    opts: &SummaryOptions,
) -> Result<Vec<f64>> {
    if samples.n_samples() == 0 {
        return Err(Error::EmptySamples);
    }
    let per_chain = functional_series_per_chain(samples, functional, opts)?;
    Ok(per_chain.into_iter().flatten().collect())
}

/// Per-sample functional values grouped by chain.
pub fn functional_series_per_chain(
    samples: &PosteriorSamples,
    functional: ScalarFunctional,
    opts: &SummaryOptions,
) -> Result<Vec<Vec<f64>>> {
    samples
        .chains
        .par_iter()
        .map(|chain| {
            chain
                .params
                .iter()
                .zip(&chain.log_post)
                .map(|(m, lp)| eval_functional(m, *lp, functional, opts))
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

/// Summarises a functional over all retained samples.
pub fn posterior_summary(
    samples: &PosteriorSamples,
    functional: ScalarFunctional,
    opts: &SummaryOptions,
) -> Result<ScalarSummary> {
    let values = functional_values(samples, functional, opts)?;
    let m = mean(&values);
    let sd = if values.len() > 1 {
        variance(&values).sqrt()
    } else {
        0.0
    };
    Ok(ScalarSummary {
        mean: m,
        sd,
        n: values.len(),
        histogram: Histogram::build(&values, opts.bins_or_default()),
    })
}

/// Posterior mean state plus per-entry standard deviations (real parts in
/// `re`, imaginary parts in `im` of the returned matrix).
pub fn posterior_mean_matrix(samples: &PosteriorSamples) -> Result<(DensityMatrix, ComplexMatrix)> {
    if samples.n_samples() == 0 {
        return Err(Error::EmptySamples);
    }
    let n = samples.n_samples() as f64;
    let mut mean_acc = [Complex64::ZERO; 16];
    let mut sq_re = [0.0_f64; 16];
    let mut sq_im = [0.0_f64; 16];
    for m in samples.iter_params() {
        let flat = rho_flat(m);
        for (k, z) in flat.iter().enumerate() {
            mean_acc[k] += z;
            sq_re[k] += z.re * z.re;
            sq_im[k] += z.im * z.im;
        }
    }
    for z in &mut mean_acc {
        *z /= n;
    }
    let sd = ComplexMatrix::from_fn(4, 4, |i, j| {
        let k = 4 * i + j;
        let var_re = (sq_re[k] / n - mean_acc[k].re * mean_acc[k].re).max(0.0);
        let var_im = (sq_im[k] / n - mean_acc[k].im * mean_acc[k].im).max(0.0);
        Complex64::new(var_re.sqrt(), var_im.sqrt())
    });
    let mean_mat = ComplexMatrix::new(4, 4, mean_acc.to_vec())?;
    Ok((DensityMatrix::new_unchecked(mean_mat), sd))
}

/// Writes retained samples: one line per sample with the 32 parameters at
/// 17 significant digits, then the chain id and the iteration index.
pub fn write_samples<W: Write>(samples: &PosteriorSamples, w: &mut W) -> Result<()> {
    for chain in &samples.chains {
        for (m, iter) in chain.params.iter().zip(&chain.iterations) {
            let mut fields: Vec<String> = m.iter().map(|x| fmt17(*x)).collect();
            fields.push(chain.chain_id.to_string());
            fields.push(iter.to_string());
            writeln!(w, "{}", fields.join(" "))?;
        }
    }
    Ok(())
}

/// Reads the format written by [`write_samples`]. Log-posterior values are
/// not part of the sample file; they are restored as NaN.
pub fn read_samples<R: BufRead>(r: &mut R) -> Result<PosteriorSamples> {
    let mut by_chain: BTreeMap<usize, ChainSamples> = BTreeMap::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let err = |msg: &str| Error::Parse {
            path: "<samples>".into(),
            line: idx + 1,
            msg: msg.into(),
        };
        let fields: Vec<&str> = t.split_whitespace().collect();
        if fields.len() != N_PARAMS + 2 {
            return Err(err("expected 32 parameters, chain id, iteration"));
        }
        let mut m = [0.0_f64; N_PARAMS];
        for (slot, field) in m.iter_mut().zip(&fields[..N_PARAMS]) {
            *slot = field.parse().map_err(|_| err("bad parameter"))?;
        }
        let chain_id: usize = fields[N_PARAMS].parse().map_err(|_| err("bad chain id"))?;
        let iteration: u64 = fields[N_PARAMS + 1].parse().map_err(|_| err("bad iteration"))?;
        let chain = by_chain.entry(chain_id).or_insert_with(|| ChainSamples {
            chain_id,
            params: Vec::new(),
            iterations: Vec::new(),
            log_post: Vec::new(),
            acceptance_post_burnin: f64::NAN,
            beta_final: f64::NAN,
            beta_trace: Vec::new(),
            acceptance_trace: Vec::new(),
            warnings: Vec::new(),
        });
        chain.params.push(m);
        chain.iterations.push(iteration);
        chain.log_post.push(f64::NAN);
    }
    if by_chain.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(PosteriorSamples {
        chains: by_chain.into_values().collect(),
        thin: 0,
        n_iter: 0,
        burn_in: 0,
    })
}
