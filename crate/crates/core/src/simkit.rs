//! Synthetic experiment generator: count tables, scan tables, and raw event
//! streams drawn from a known ground-truth joint state, for oracle-based
//! validation of every analysis stage.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Normal, Poisson};

use crate::events::{Channel, DetectionEvent, EventSet};
use crate::mle::ScanCount;
use crate::polopt::{bin_centre, joint_effect_set, scan_effect_set, CountRecord, Detector, Side, WaveplateSetting};
use crate::qmat::{ComplexMatrix, DensityMatrix, PureState};
use crate::{Error, Result};

/// Ground truth of a simulated acquisition.
#[derive(Debug, Clone)]
pub struct ExperimentTruth {
    pub rho_true: DensityMatrix,
    /// Electron input-beam coherence; damps the electron off-diagonal
    /// blocks of `rho_true` when building the effectively sampled state.
    pub gamma_in: f64,
    /// `(w_L, w_R)`, must sum to 1.
    pub beam_weights: (f64, f64),
    /// Probability that an electron produces a detected photon.
    pub photon_prob: f64,
    /// Acquisition time per setting, seconds.
    pub exposure_s: f64,
    pub electron_rate_hz: f64,
    /// Uncorrelated photon background per detector, Hz.
    pub background_rate_hz: [f64; 2],
    /// Photon path delay per detector, ps.
    pub detector_delays_ps: [i64; 2],
    /// Gaussian timing jitter (1σ) applied to photon arrival times, ps.
    pub jitter_ps: f64,
    pub seed: u64,
}

impl ExperimentTruth {
    /// Defaults follow the experimental scales: 440 s exposure per setting
    /// and a 0.64/0.36 beam split; rates are desk-scale so that synthetic
    /// datasets stay tractable.
    pub fn new(rho_true: DensityMatrix) -> Self {
        Self {
            rho_true,
            gamma_in: 1.0,
            beam_weights: (0.64, 0.36),
            photon_prob: 1e-2,
            exposure_s: 440.0,
            electron_rate_hz: 2e5,
            background_rate_hz: [2e3, 2e3],
            detector_delays_ps: [100_000, 120_000],
            jitter_ps: 800.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if (self.beam_weights.0 + self.beam_weights.1 - 1.0).abs() > 1e-12
            || self.beam_weights.0 < 0.0
            || self.beam_weights.1 < 0.0
        {
            return Err(Error::InvalidValue("beam weights must be non-negative and sum to 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma_in) {
            return Err(Error::InvalidValue("gamma_in must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.photon_prob) {
            return Err(Error::InvalidValue("photon_prob must be in [0, 1]".into()));
        }
        if self.rho_true.dim() != 4 {
            return Err(Error::Dimension("rho_true must be 4x4".into()));
        }
        Ok(())
    }

    /// The effectively sampled state: electron off-diagonal blocks of
    /// `rho_true` damped by `gamma_in`. A Hadamard product with the
    /// positive matrix `[[1, γ],[γ, 1]] ⊗ J₂`, so positivity is preserved.
    pub fn effective_state(&self) -> DensityMatrix {
        damp_electron_coherence(&self.rho_true, self.gamma_in)
    }
}

/// Damps the electron off-diagonal blocks by `gamma`.
pub fn damp_electron_coherence(rho: &DensityMatrix, gamma: f64) -> DensityMatrix {
    let m = ComplexMatrix::from_fn(4, 4, |i, j| {
        let damp = if (i / 2) != (j / 2) { gamma } else { 1.0 };
        rho.mat()[(i, j)] * damp
    });
    DensityMatrix::new_unchecked(m)
}

/// Joint state of the photon-generation model: beam populations `w_l, w_r`
/// with conditional photon states `ρ_i = purity·|χᵢ⟩⟨χᵢ| + (1−purity)·I/2`
/// and a coherence block `coherence·√(w_l w_r)·|χ_L⟩⟨χ_R|`.
pub fn model_state(
    w_l: f64,
    chi_l: &PureState,
    chi_r: &PureState,
    photon_purity: f64,
    coherence: f64,
) -> Result<DensityMatrix> {
    if chi_l.dim() != 2 || chi_r.dim() != 2 {
        return Err(Error::Dimension("photon states must be qubits".into()));
    }
    if !(0.0..=1.0).contains(&w_l) || !(0.0..=1.0).contains(&photon_purity) || !(0.0..=1.0).contains(&coherence) {
        return Err(Error::InvalidValue("model_state arguments must lie in [0, 1]".into()));
    }
    let w_r = 1.0 - w_l;
    let kappa = coherence * (w_l * w_r).sqrt();
    let mut m = ComplexMatrix::zeros(4, 4);
    for i in 0..2 {
        for j in 0..2 {
            let pure_l = chi_l.amplitudes()[i] * chi_l.amplitudes()[j].conj();
            let pure_r = chi_r.amplitudes()[i] * chi_r.amplitudes()[j].conj();
            let mixed = if i == j { 0.5 } else { 0.0 };
            let block_l = pure_l * photon_purity + mixed * (1.0 - photon_purity);
            let block_r = pure_r * photon_purity + mixed * (1.0 - photon_purity);
            m.set(i, j, block_l * w_l);
            m.set(2 + i, 2 + j, block_r * w_r);
            let kap = chi_l.amplitudes()[i] * chi_r.amplitudes()[j].conj() * kappa;
            m.set(i, 2 + j, kap);
            m.set(2 + j, i, kap.conj());
        }
    }
    DensityMatrix::new(m)
}

/// Photon state with Bloch vector at polar angle `theta` in the x-z plane.
pub fn bloch_xz_state(theta_from_z: f64) -> PureState {
    PureState::new(vec![
        Complex64::new((0.5 * theta_from_z).cos(), 0.0),
        Complex64::new((0.5 * theta_from_z).sin(), 0.0),
    ])
    .expect("normalised by construction")
}

/// Fringe parameters predicted by the measurement model for one detector:
/// `(detector share, visibility, phase)` of
/// `p(d, φ) ∝ share·(1 + V·cos(φ + φ₀))`.
pub fn model_fringe(
    rho: &DensityMatrix,
    setting: WaveplateSetting,
    detector: Detector,
) -> Result<(f64, f64, f64)> {
    if rho.dim() != 4 {
        return Err(Error::Dimension("model_fringe needs a 4x4 state".into()));
    }
    let effect = crate::polopt::photon_effect(setting, detector)?;
    let block = |a: usize, b: usize| {
        ComplexMatrix::from_fn(2, 2, |i, j| rho.mat()[(2 * a + i, 2 * b + j)])
    };
    let diag_sum = &block(0, 0) + &block(1, 1);
    let share = effect.op.trace_product(&diag_sum).re;
    // Coherence term: with z = tr(E_d·⟨R|ρ|L⟩) the cell probability is
    // ∝ share + 2·Re(e^{−iφ}·z) = share·(1 + V·cos(φ − arg z)).
    let z = effect.op.trace_product(&block(1, 0));
    let visibility = 2.0 * z.norm() / share;
    let phase = (-z.im).atan2(z.re);
    Ok((share, visibility, phase))
}

/// Draws a multinomial split of `total` over `probs` (sequential binomial).
fn multinomial<R: Rng>(rng: &mut R, total: u64, probs: &[f64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(probs.len());
    let mut remaining = total;
    let mut prob_left: f64 = probs.iter().sum();
    for &p in &probs[..probs.len() - 1] {
        if remaining == 0 || prob_left <= 0.0 {
            out.push(0);
            continue;
        }
        let q = (p / prob_left).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, q)
            .map(|b| rng.sample(b))
            .unwrap_or(0);
        out.push(draw);
        remaining -= draw;
        prob_left -= p;
    }
    out.push(remaining);
    out
}

fn poisson_draw<R: Rng>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    rng.sample(Poisson::new(lambda).expect("positive lambda")) as u64
}

/// Simulates coincidence count tables for the fringe measurements: one
/// normalisation group per setting with `2K` cells, the group total drawn
/// Poisson with mean `exposure·electron_rate·photon_prob` and split
/// multinomially by the model probabilities.
pub fn simulate_counts(
    truth: &ExperimentTruth,
    settings: &[WaveplateSetting],
    n_bins: usize,
) -> Result<Vec<CountRecord>> {
    truth.validate()?;
    let rho = truth.effective_state();
    let mut rng = ChaCha8Rng::seed_from_u64(truth.seed);
    rng.set_stream(10);
    let mean_total = truth.exposure_s * truth.electron_rate_hz * truth.photon_prob;
    let mut out = Vec::new();
    for setting in settings {
        let effects = joint_effect_set(*setting, n_bins)?;
        let probs: Vec<f64> = effects
            .iter()
            .map(|e| e.op.trace_product(rho.mat()).re.max(0.0))
            .collect();
        let total = poisson_draw(&mut rng, mean_total);
        let counts = multinomial(&mut rng, total, &probs);
        for (effect, count) in effects.into_iter().zip(counts) {
            out.push(CountRecord { effect, count });
        }
    }
    Ok(out)
}

/// Simulates the single-beam scan protocol: per `(setting, side)` group the
/// total is Poisson with mean `exposure·electron_rate·photon_prob·w_side`
/// and the detector split is binomial with the conditional probability from
/// the scan effects.
pub fn simulate_scan(
    truth: &ExperimentTruth,
    grid: &[WaveplateSetting],
) -> Result<Vec<ScanCount>> {
    truth.validate()?;
    let rho = truth.effective_state();
    let mut rng = ChaCha8Rng::seed_from_u64(truth.seed);
    rng.set_stream(11);
    let mut out = Vec::new();
    for setting in grid {
        for side in [Side::L, Side::R] {
            let weight = match side {
                Side::L => truth.beam_weights.0,
                Side::R => truth.beam_weights.1,
            };
            let effects = scan_effect_set(*setting, side)?;
            let p: Vec<f64> = effects
                .iter()
                .map(|e| e.op.trace_product(rho.mat()).re.max(0.0))
                .collect();
            let group_p = p[0] + p[1];
            let total = poisson_draw(
                &mut rng,
                truth.exposure_s * truth.electron_rate_hz * truth.photon_prob * weight,
            );
            let n1 = if group_p > 0.0 && total > 0 {
                rng.sample(Binomial::new(total, (p[0] / group_p).clamp(0.0, 1.0)).expect("valid p"))
            } else {
                0
            };
            out.push(ScanCount {
                setting: *setting,
                detector: Detector::D1,
                side,
                count: n1,
            });
            out.push(ScanCount {
                setting: *setting,
                detector: Detector::D2,
                side,
                count: total - n1,
            });
        }
    }
    Ok(out)
}

/// Detector-plane geometry of the simulated interference pattern.
#[derive(Debug, Clone, Copy)]
pub struct EventSimOptions {
    pub pattern_width: u32,
    pub pattern_height: u32,
    pub fringe_period_px: f64,
    pub fringe_angle_rad: f64,
    /// Phase bins used to discretise the joint outcome before drawing the
    /// continuous within-bin phase.
    pub phase_bins: usize,
}

impl Default for EventSimOptions {
    fn default() -> Self {
        Self {
            pattern_width: 256,
            pattern_height: 256,
            fringe_period_px: 64.0,
            fringe_angle_rad: 0.0,
            phase_bins: 64,
        }
    }
}

/// Simulates raw event streams for one fringe acquisition. Electron
/// arrivals are a Poisson process; each electron draws a joint
/// `(detector, phase bin)` outcome from the measurement model, lands at a
/// detector position consistent with its fringe phase, and produces a
/// photon with probability `photon_prob` (time-shifted by the detector
/// delay and Gaussian jitter). Uniform background photons are added and all
/// streams are time-sorted.
pub fn simulate_events(
    truth: &ExperimentTruth,
    setting: WaveplateSetting,
    duration_s: f64,
    opts: &EventSimOptions,
    run_id: u64,
) -> Result<EventSet> {
    truth.validate()?;
    if opts.fringe_period_px <= 2.0 {
        return Err(Error::InvalidValue("fringe period too small".into()));
    }
    let rho = truth.effective_state();
    let effects = joint_effect_set(setting, opts.phase_bins)?;
    let mut cdf = Vec::with_capacity(effects.len());
    let mut acc = 0.0;
    for e in &effects {
        acc += e.op.trace_product(rho.mat()).re.max(0.0);
        cdf.push(acc);
    }
    let norm = acc;

    let mut rng = ChaCha8Rng::seed_from_u64(truth.seed);
    rng.set_stream(100 + run_id);

    let (w, h) = (opts.pattern_width as f64, opts.pattern_height as f64);
    let (sin_a, cos_a) = opts.fringe_angle_rad.sin_cos();
    // Fringe coordinate range over the detector rectangle.
    let corners = [
        (0.0, 0.0),
        (w - 1.0, 0.0),
        (0.0, h - 1.0),
        (w - 1.0, h - 1.0),
    ];
    let u_range = corners
        .iter()
        .map(|(x, y)| x * cos_a + y * sin_a)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), u| {
            (lo.min(u), hi.max(u))
        });
    let v_range = corners
        .iter()
        .map(|(x, y)| -x * sin_a + y * cos_a)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });

    let dphi = std::f64::consts::TAU / opts.phase_bins as f64;
    let jitter = Normal::new(0.0, truth.jitter_ps.max(0.0)).expect("non-negative sigma");
    let duration_ps = duration_s * 1e12;

    let mut set = EventSet::default();
    let mut t_ps = 0.0_f64;
    loop {
        t_ps += -rng.random::<f64>().ln() / truth.electron_rate_hz * 1e12;
        if t_ps > duration_ps {
            break;
        }
        // Joint (detector, bin) outcome.
        let u: f64 = rng.random::<f64>() * norm;
        let idx = cdf.partition_point(|&c| c < u).min(effects.len() - 1);
        let detector = if idx < opts.phase_bins {
            Detector::D1
        } else {
            Detector::D2
        };
        let bin = idx % opts.phase_bins;
        // Continuous phase within the bin.
        let phase = bin_centre(bin, opts.phase_bins) + (rng.random::<f64>() - 0.5) * dphi;
        // Position with fringe coordinate u ≡ phase/2π (mod one period).
        let period = opts.fringe_period_px;
        let frac = (phase / std::f64::consts::TAU).rem_euclid(1.0);
        let m_lo = ((u_range.0 / period) - frac).ceil() as i64;
        let m_hi = ((u_range.1 / period) - frac).floor() as i64;
        let mut pos = None;
        if m_hi >= m_lo {
            for _ in 0..32 {
                let m = rng.random_range(m_lo..=m_hi);
                let ucoord = (frac + m as f64) * period;
                let vcoord = v_range.0 + rng.random::<f64>() * (v_range.1 - v_range.0);
                let x = ucoord * cos_a - vcoord * sin_a;
                let y = ucoord * sin_a + vcoord * cos_a;
                if x >= 0.0 && x < w && y >= 0.0 && y < h {
                    pos = Some((x as u32, y as u32));
                    break;
                }
            }
        }
        let t_int = t_ps.round() as i64;
        set.electrons.push(DetectionEvent {
            channel: Channel::Electron,
            t_ps: t_int,
            pos,
        });
        if rng.random::<f64>() < truth.photon_prob {
            let delay = truth.detector_delays_ps[detector.index()];
            let jit: f64 = rng.sample(jitter);
            let tp = (t_ps + delay as f64 + jit).round().max(0.0) as i64;
            let (channel, stream) = match detector {
                Detector::D1 => (Channel::Photon1, &mut set.photons1),
                Detector::D2 => (Channel::Photon2, &mut set.photons2),
            };
            stream.push(DetectionEvent {
                channel,
                t_ps: tp,
                pos: None,
            });
        }
    }
    // Uncorrelated background photons, uniform in time.
    for (rate, channel) in [
        (truth.background_rate_hz[0], Channel::Photon1),
        (truth.background_rate_hz[1], Channel::Photon2),
    ] {
        if rate <= 0.0 {
            continue;
        }
        let mut t = 0.0_f64;
        loop {
            t += -rng.random::<f64>().ln() / rate * 1e12;
            if t > duration_ps {
                break;
            }
            let event = DetectionEvent {
                channel,
                t_ps: t.round() as i64,
                pos: None,
            };
            match channel {
                Channel::Photon1 => set.photons1.push(event),
                Channel::Photon2 => set.photons2.push(event),
                Channel::Electron => unreachable!(),
            }
        }
    }
    set.sort();
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{coincidence_histogram, extract_fringe, find_coincidence_window, fit_fringe, gated_pattern, subtract_timewindow_background};
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn tomography_settings() -> Vec<WaveplateSetting> {
        vec![
            WaveplateSetting::new(30.0, 28.0).unwrap(),
            WaveplateSetting::new(30.0, 95.0).unwrap(),
            WaveplateSetting::new(74.0, 80.0).unwrap(),
        ]
    }

    fn entangled_truth(seed: u64) -> ExperimentTruth {
        let chi_l = bloch_xz_state(0.5 * 121.0_f64.to_radians());
        let chi_r = bloch_xz_state(-0.5 * 121.0_f64.to_radians());
        let rho = model_state(0.64, &chi_l, &chi_r, 1.0, 1.0).unwrap();
        let mut truth = ExperimentTruth::new(rho);
        truth.gamma_in = 0.727;
        truth.seed = seed;
        truth
    }

    #[test]
    fn defaults_match_experimental_scales() {
        let truth = entangled_truth(0);
        assert_eq!(truth.exposure_s, 440.0);
        assert_eq!(truth.beam_weights, (0.64, 0.36));
    }

    #[test]
    fn effective_state_damps_coherence_linearly() {
        let truth = entangled_truth(0);
        let rho = truth.effective_state();
        let orig = &truth.rho_true;
        for i in 0..2 {
            for j in 0..2 {
                let damped = rho.mat()[(i, 2 + j)];
                let full = orig.mat()[(i, 2 + j)];
                assert!((damped - full * 0.727).norm() < 1e-15);
                assert_eq!(rho.mat()[(i, j)], orig.mat()[(i, j)]);
            }
        }
    }

    #[test]
    fn gamma_scales_model_visibility_linearly() {
        // No-sample configuration: both beams mark the photon identically,
        // so the fringe visibility equals the electron coherence exactly
        // (two-beam interference closed form with equal weights).
        let chi = bloch_xz_state(0.3);
        let rho = model_state(0.5, &chi, &chi, 1.0, 1.0).unwrap();
        let setting = WaveplateSetting::new(20.0, 40.0).unwrap();
        for gamma in [0.0_f64, 0.25, 0.5, 0.727, 1.0] {
            let damped = damp_electron_coherence(&rho, gamma);
            let (_, vis, _) = model_fringe(&damped, setting, Detector::D1).unwrap();
            assert!(
                (vis - gamma).abs() < 1e-12,
                "gamma {gamma}: visibility {vis}"
            );
        }

        // With which-path marking the scaling stays linear in gamma.
        let truth = entangled_truth(0);
        let setting = WaveplateSetting::new(30.0, 28.0).unwrap();
        let (_, v_full, _) = model_fringe(&truth.rho_true, setting, Detector::D1).unwrap();
        let (_, v_damped, _) = model_fringe(&truth.effective_state(), setting, Detector::D1).unwrap();
        assert!((v_damped - 0.727 * v_full).abs() < 1e-12);
    }

    #[test]
    fn simulate_counts_is_deterministic_and_scaled() {
        let mut truth = entangled_truth(7);
        truth.exposure_s = 5.0;
        let records = simulate_counts(&truth, &tomography_settings(), 16).unwrap();
        let again = simulate_counts(&truth, &tomography_settings(), 16).unwrap();
        assert_eq!(records.len(), 3 * 32);
        for (a, b) in records.iter().zip(&again) {
            assert_eq!(a.count, b.count);
        }
        let total: u64 = records.iter().map(|r| r.count).sum();
        let expected = 3.0 * truth.exposure_s * truth.electron_rate_hz * truth.photon_prob;
        assert!((total as f64 - expected).abs() < 5.0 * expected.sqrt());
    }

    #[test]
    fn simulate_counts_multinomial_statistics() {
        // Chi-square goodness of fit over 100 repetitions at the 1% level,
        // for a maximally mixed state (uniform cells) and the entangled
        // effective state (non-uniform cells).
        let k = 8;
        let settings = [WaveplateSetting::new(30.0, 95.0).unwrap()];
        for uniform in [true, false] {
            let mut expected_probs = vec![0.0; 2 * k];
            let mut observed = vec![0u64; 2 * k];
            let mut total = 0u64;
            for rep in 0..100 {
                let mut truth = if uniform {
                    ExperimentTruth::new(DensityMatrix::maximally_mixed(4))
                } else {
                    entangled_truth(0)
                };
                truth.exposure_s = 1.0;
                truth.seed = 1000 + rep;
                let records = simulate_counts(&truth, &settings, k).unwrap();
                for (i, r) in records.iter().enumerate() {
                    observed[i] += r.count;
                    total += r.count;
                }
                if rep == 0 {
                    let rho = truth.effective_state();
                    let probs: Vec<f64> = records
                        .iter()
                        .map(|r| r.effect.op.trace_product(rho.mat()).re)
                        .collect();
                    let norm: f64 = probs.iter().sum();
                    for (slot, p) in expected_probs.iter_mut().zip(probs) {
                        *slot = p / norm;
                    }
                }
            }
            let mut chi2 = 0.0;
            for (obs, p) in observed.iter().zip(&expected_probs) {
                let exp = total as f64 * p;
                chi2 += (*obs as f64 - exp) * (*obs as f64 - exp) / exp;
            }
            let df = (2 * k - 1) as f64;
            let threshold = ChiSquared::new(df).unwrap().inverse_cdf(0.99);
            assert!(
                chi2 < threshold,
                "uniform={uniform}: chi2 {chi2:.1} vs 1% threshold {threshold:.1}"
            );
        }
    }

    #[test]
    fn simulate_scan_aligned_state_hits_one_detector() {
        // Photon marginal |H⟩ for both sides at the (0°, 0°) setting:
        // every count lands on detector 1.
        let h = PureState::basis(2, 0);
        let rho = model_state(0.5, &h, &h, 1.0, 1.0).unwrap();
        let mut truth = ExperimentTruth::new(rho);
        truth.exposure_s = 1.0;
        let grid = [WaveplateSetting::new(0.0, 0.0).unwrap()];
        let counts = simulate_scan(&truth, &grid).unwrap();
        for c in &counts {
            if c.detector == Detector::D2 {
                assert_eq!(c.count, 0, "{c:?}");
            }
        }
        let total: u64 = counts.iter().map(|c| c.count).sum();
        assert!(total > 0);
    }

    #[test]
    fn simulate_scan_respects_beam_weights() {
        let mut truth = entangled_truth(3);
        truth.exposure_s = 50.0;
        let grid = [WaveplateSetting::new(30.0, 95.0).unwrap()];
        let counts = simulate_scan(&truth, &grid).unwrap();
        let left: u64 = counts
            .iter()
            .filter(|c| c.side == Side::L)
            .map(|c| c.count)
            .sum();
        let right: u64 = counts
            .iter()
            .filter(|c| c.side == Side::R)
            .map(|c| c.count)
            .sum();
        let ratio = left as f64 / (left + right) as f64;
        assert!((ratio - 0.64).abs() < 0.02, "left share {ratio}");
    }

    #[test]
    fn events_zero_background_zero_jitter_pairs_exactly() {
        let mut truth = entangled_truth(5);
        truth.background_rate_hz = [0.0, 0.0];
        truth.jitter_ps = 0.0;
        truth.photon_prob = 0.05;
        let setting = WaveplateSetting::new(30.0, 28.0).unwrap();
        let set = simulate_events(&truth, setting, 0.5, &EventSimOptions::default(), 0).unwrap();
        assert!(!set.photons1.is_empty() && !set.photons2.is_empty());
        let electron_times: std::collections::HashSet<i64> =
            set.electrons.iter().map(|e| e.t_ps).collect();
        for (photons, delay) in [(&set.photons1, 100_000i64), (&set.photons2, 120_000i64)] {
            for p in photons.iter() {
                assert!(
                    electron_times.contains(&(p.t_ps - delay)),
                    "photon at {} has no partner",
                    p.t_ps
                );
            }
        }
    }

    #[test]
    fn events_coincidence_peak_and_visibility_round_trip() {
        let mut truth = entangled_truth(11);
        truth.photon_prob = 0.02;
        truth.electron_rate_hz = 2e5;
        truth.background_rate_hz = [1e3, 1e3];
        let setting = WaveplateSetting::new(30.0, 95.0).unwrap();
        let opts = EventSimOptions::default();
        let set = simulate_events(&truth, setting, 4.0, &opts, 1).unwrap();

        let rho = truth.effective_state();
        for detector in [Detector::D1, Detector::D2] {
            let photons = set.photons(detector);
            let hist = coincidence_histogram(&set.electrons, photons, 1562, 500_000).unwrap();
            let window = find_coincidence_window(&hist).unwrap();
            let delay = truth.detector_delays_ps[detector.index()];
            assert!(window.0 <= delay && delay <= window.1, "window {window:?}");

            let shape = (
                opts.pattern_width as usize,
                opts.pattern_height as usize,
            );
            let corrected =
                subtract_timewindow_background(&set.electrons, photons, window, 10, shape)
                    .unwrap();
            let (hist, _) = extract_fringe(&corrected, 32).unwrap();
            let fit = fit_fringe(&hist).unwrap();
            let (_, model_vis, _) = model_fringe(&rho, setting, detector).unwrap();
            assert!(
                (fit.visibility - model_vis).abs() < 0.03,
                "{detector:?}: visibility {} vs model {model_vis}",
                fit.visibility
            );
        }
    }

    #[test]
    fn events_with_rotated_fringes_recover_visibility() {
        // Non-zero fringe orientation exercises the rotated position
        // sampling and the alignment stage of the extraction together.
        let mut truth = entangled_truth(21);
        truth.photon_prob = 0.08;
        truth.background_rate_hz = [0.0, 0.0];
        truth.jitter_ps = 0.0;
        let setting = WaveplateSetting::new(30.0, 95.0).unwrap();
        let opts = EventSimOptions {
            fringe_angle_rad: 10.0_f64.to_radians(),
            ..EventSimOptions::default()
        };
        let set = simulate_events(&truth, setting, 3.0, &opts, 6).unwrap();
        let rho = truth.effective_state();
        let shape = (opts.pattern_width as usize, opts.pattern_height as usize);
        let delay = truth.detector_delays_ps[0];
        let pattern = gated_pattern(
            &set.electrons,
            &set.photons1,
            (delay - 1000, delay + 1000),
            shape,
        )
        .unwrap();
        let (hist, geometry) = extract_fringe(&pattern, 32).unwrap();
        assert!(
            (geometry.angle_rad - opts.fringe_angle_rad).abs() < 0.01,
            "angle {} vs {}",
            geometry.angle_rad,
            opts.fringe_angle_rad
        );
        let fit = fit_fringe(&hist).unwrap();
        let (_, model_vis, _) = model_fringe(&rho, setting, Detector::D1).unwrap();
        assert!(
            (fit.visibility - model_vis).abs() < 0.03,
            "visibility {} vs model {model_vis}",
            fit.visibility
        );
    }

    #[test]
    fn events_deterministic_per_seed() {
        let truth = entangled_truth(5);
        let setting = WaveplateSetting::new(74.0, 80.0).unwrap();
        let opts = EventSimOptions::default();
        let a = simulate_events(&truth, setting, 0.05, &opts, 3).unwrap();
        let b = simulate_events(&truth, setting, 0.05, &opts, 3).unwrap();
        assert_eq!(a.electrons, b.electrons);
        assert_eq!(a.photons1, b.photons1);
        assert_eq!(a.photons2, b.photons2);
        let c = simulate_events(&truth, setting, 0.05, &opts, 4).unwrap();
        assert_ne!(a.electrons, c.electrons);
    }

    #[test]
    fn gated_pattern_visibility_tracks_effective_state() {
        // The marginal pattern of all electrons follows the phase marginal
        // of the model; check the gated pattern against the per-detector
        // model fringe at higher photon_prob for statistics.
        let mut truth = entangled_truth(13);
        truth.photon_prob = 0.1;
        truth.background_rate_hz = [0.0, 0.0];
        truth.jitter_ps = 100.0;
        let setting = WaveplateSetting::new(30.0, 28.0).unwrap();
        let opts = EventSimOptions::default();
        let set = simulate_events(&truth, setting, 2.0, &opts, 2).unwrap();
        let rho = truth.effective_state();
        let shape = (opts.pattern_width as usize, opts.pattern_height as usize);
        for detector in [Detector::D1, Detector::D2] {
            let photons = set.photons(detector);
            let delay = truth.detector_delays_ps[detector.index()];
            let pattern = gated_pattern(
                &set.electrons,
                photons,
                (delay - 2000, delay + 2000),
                shape,
            )
            .unwrap();
            let (hist, geometry) = extract_fringe(&pattern, 32).unwrap();
            assert!((geometry.period_px - 64.0).abs() < 1.0);
            let fit = fit_fringe(&hist).unwrap();
            let (_, model_vis, model_phase) = model_fringe(&rho, setting, detector).unwrap();
            assert!(
                (fit.visibility - model_vis).abs() < 0.03,
                "visibility {} vs {model_vis}",
                fit.visibility
            );
            let dphi = (fit.phase - model_phase).rem_euclid(std::f64::consts::TAU);
            let dphi = dphi.min(std::f64::consts::TAU - dphi);
            assert!(dphi < 0.02 * std::f64::consts::TAU, "phase {dphi}");
        }
    }
}
