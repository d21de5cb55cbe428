//! Coincidence-event processing: electron-photon arrival-time correlation,
//! coincidence-window selection, background subtraction, and fringe
//! extraction from gated detector patterns.
//!
//! Timestamps are integer picoseconds throughout.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::{Error, Result};

/// Default correlation histogram bin width.
pub const DEFAULT_BIN_WIDTH_PS: i64 = 1562;
/// Default correlation scan range (±500 ns).
pub const DEFAULT_RANGE_PS: i64 = 500_000;

/// Detection channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Electron,
    Photon1,
    Photon2,
}

impl Channel {
    pub fn label(self) -> &'static str {
        match self {
            Channel::Electron => "e",
            Channel::Photon1 => "p1",
            Channel::Photon2 => "p2",
        }
    }
}

/// One detector hit. Electron events may carry detector-plane coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionEvent {
    pub channel: Channel,
    pub t_ps: i64,
    pub pos: Option<(u32, u32)>,
}

/// Event streams split by channel, each sorted by timestamp.
#[derive(Debug, Clone, Default)]
pub struct EventSet {
    pub electrons: Vec<DetectionEvent>,
    pub photons1: Vec<DetectionEvent>,
    pub photons2: Vec<DetectionEvent>,
}

impl EventSet {
    pub fn photons(&self, detector: crate::polopt::Detector) -> &[DetectionEvent] {
        match detector {
            crate::polopt::Detector::D1 => &self.photons1,
            crate::polopt::Detector::D2 => &self.photons2,
        }
    }

    pub fn sort(&mut self) {
        self.electrons.sort_by_key(|e| e.t_ps);
        self.photons1.sort_by_key(|e| e.t_ps);
        self.photons2.sort_by_key(|e| e.t_ps);
    }
}

fn is_sorted(events: &[DetectionEvent]) -> bool {
    events.windows(2).all(|w| w[0].t_ps <= w[1].t_ps)
}

/// Histogram of photon−electron time differences.
#[derive(Debug, Clone)]
pub struct CoincidenceHistogram {
    pub bin_width_ps: i64,
    /// Offsets run over bin centres `k·bin_width` for `k ∈ [−k_max, k_max]`.
    pub k_max: i64,
    pub counts: Vec<u64>,
}

impl CoincidenceHistogram {
    pub fn offsets(&self) -> Vec<i64> {
        (-self.k_max..=self.k_max)
            .map(|k| k * self.bin_width_ps)
            .collect()
    }

    pub fn centre(&self, idx: usize) -> i64 {
        (idx as i64 - self.k_max) * self.bin_width_ps
    }
}

/// Counts photon−electron time differences within `±range_ps` using a
/// two-pointer sweep over the sorted streams.
pub fn coincidence_histogram(
    electrons: &[DetectionEvent],
    photons: &[DetectionEvent],
    bin_width_ps: i64,
    range_ps: i64,
) -> Result<CoincidenceHistogram> {
    if bin_width_ps <= 0 || range_ps <= 0 {
        return Err(Error::InvalidValue("bin width and range must be positive".into()));
    }
    if !is_sorted(electrons) || !is_sorted(photons) {
        return Err(Error::UnsortedEvents);
    }
    let k_max = range_ps / bin_width_ps;
    let mut counts = vec![0u64; (2 * k_max + 1) as usize];
    let half = bin_width_ps / 2;
    let reach = k_max * bin_width_ps + half;
    let mut lo = 0usize;
    for p in photons {
        while lo < electrons.len() && electrons[lo].t_ps < p.t_ps - reach {
            lo += 1;
        }
        for e in &electrons[lo..] {
            if e.t_ps > p.t_ps + reach {
                break;
            }
            let dt = p.t_ps - e.t_ps;
            let k = (dt + half).div_euclid(bin_width_ps);
            if k.abs() <= k_max {
                counts[(k + k_max) as usize] += 1;
            }
        }
    }
    Ok(CoincidenceHistogram {
        bin_width_ps,
        k_max,
        counts,
    })
}

fn median_count(counts: &[u64]) -> f64 {
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) as f64
    }
}

/// Selects the coincidence window: centred on the maximum bin and extended
/// while bins exceed the background mean plus 3√background. The background
/// level is the median bin content. Errors when no bin exceeds background
/// by 5σ.
pub fn find_coincidence_window(hist: &CoincidenceHistogram) -> Result<(i64, i64)> {
    if hist.counts.is_empty() {
        return Err(Error::InvalidValue("empty histogram".into()));
    }
    let bg = median_count(&hist.counts);
    let (peak_idx, peak) = hist
        .counts
        .iter()
        .enumerate()
        .max_by_key(|(_, &c)| c)
        .map(|(i, &c)| (i, c))
        .expect("nonempty");
    if (peak as f64) <= bg + 5.0 * bg.sqrt() {
        return Err(Error::NoCoincidencePeak);
    }
    let threshold = bg + 3.0 * bg.sqrt();
    let mut left = peak_idx;
    while left > 0 && hist.counts[left - 1] as f64 > threshold {
        left -= 1;
    }
    let mut right = peak_idx;
    while right + 1 < hist.counts.len() && hist.counts[right + 1] as f64 > threshold {
        right += 1;
    }
    let half = hist.bin_width_ps / 2;
    Ok((hist.centre(left) - half, hist.centre(right) + half))
}

/// Real-valued 2D detector pattern, row-major with `data[y·width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Pattern {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn at_mut(&mut self, x: usize, y: usize) -> &mut f64 {
        &mut self.data[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for y in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|x| format!("{}", self.at(x, y)))
                .collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }
}

/// Bins electrons coincident with any photon (time difference within
/// `[window.0, window.1)`) into a 2D pattern of the given shape. An electron
/// pairing with several photons is counted once per pair.
pub fn gated_pattern(
    electrons: &[DetectionEvent],
    photons: &[DetectionEvent],
    window: (i64, i64),
    shape: (usize, usize),
) -> Result<Pattern> {
    if !is_sorted(electrons) || !is_sorted(photons) {
        return Err(Error::UnsortedEvents);
    }
    if window.1 <= window.0 {
        return Err(Error::InvalidValue("empty coincidence window".into()));
    }
    let (width, height) = shape;
    let mut pattern = Pattern::zeros(width, height);
    let mut lo = 0usize;
    for p in photons {
        // dt = p − e ∈ [w0, w1)  ⇔  e ∈ (p − w1, p − w0].
        while lo < electrons.len() && electrons[lo].t_ps <= p.t_ps - window.1 {
            lo += 1;
        }
        for e in &electrons[lo..] {
            if e.t_ps > p.t_ps - window.0 {
                break;
            }
            if let Some((x, y)) = e.pos {
                let (x, y) = (x as usize, y as usize);
                if x < width && y < height {
                    *pattern.at_mut(x, y) += 1.0;
                }
            }
        }
    }
    Ok(pattern)
}

/// Places `n` background windows on the far side of the coincidence window:
/// one window-width guard gap above the upper edge, then contiguous tiles of
/// the same width.
pub fn background_windows(coincidence: (i64, i64), n: usize) -> Vec<(i64, i64)> {
    let width = coincidence.1 - coincidence.0;
    (0..n as i64)
        .map(|i| {
            (
                coincidence.1 + width * (i + 1),
                coincidence.1 + width * (i + 2),
            )
        })
        .collect()
}

/// Rejects background windows that overlap the coincidence window or each
/// other.
pub fn validate_background_windows(coincidence: (i64, i64), windows: &[(i64, i64)]) -> Result<()> {
    let mut all = windows.to_vec();
    all.push(coincidence);
    all.sort();
    for pair in all.windows(2) {
        if pair[1].0 < pair[0].1 {
            return Err(Error::OverlappingWindows);
        }
    }
    Ok(())
}

/// Subtracts the mean of the background patterns; negative values are noise
/// and are kept.
pub fn background_subtract(pattern: &Pattern, backgrounds: &[Pattern]) -> Result<Pattern> {
    let mut out = pattern.clone();
    if backgrounds.is_empty() {
        return Ok(out);
    }
    for b in backgrounds {
        if b.width != pattern.width || b.height != pattern.height {
            return Err(Error::Dimension("background pattern shape mismatch".into()));
        }
    }
    let scale = 1.0 / backgrounds.len() as f64;
    for b in backgrounds {
        for (o, v) in out.data.iter_mut().zip(&b.data) {
            *o -= v * scale;
        }
    }
    Ok(out)
}

/// Full background-corrected gated pattern: gate on the coincidence window,
/// average `n_background` off-peak windows of the same width, and subtract.
pub fn subtract_timewindow_background(
    electrons: &[DetectionEvent],
    photons: &[DetectionEvent],
    coincidence: (i64, i64),
    n_background: usize,
    shape: (usize, usize),
) -> Result<Pattern> {
    let windows = background_windows(coincidence, n_background);
    validate_background_windows(coincidence, &windows)?;
    let gated = gated_pattern(electrons, photons, coincidence, shape)?;
    let backgrounds: Vec<Pattern> = windows
        .iter()
        .map(|w| gated_pattern(electrons, photons, *w, shape))
        .collect::<Result<_>>()?;
    background_subtract(&gated, &backgrounds)
}

/// Fringe orientation and period estimated from the 2D discrete Fourier
/// transform of a pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeGeometry {
    /// Angle of the fringe wavevector from the +x axis, radians.
    pub angle_rad: f64,
    /// Fringe period in pixels.
    pub period_px: f64,
}

fn fft_2d(pattern: &Pattern) -> Vec<Complex64> {
    let (w, h) = (pattern.width, pattern.height);
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(w);
    let col_fft = planner.plan_fft_forward(h);
    let mut grid: Vec<Complex64> = pattern
        .data
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    for y in 0..h {
        row_fft.process(&mut grid[y * w..(y + 1) * w]);
    }
    let mut col = vec![Complex64::ZERO; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = grid[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            grid[y * w + x] = col[y];
        }
    }
    grid
}

fn signed_index(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Explained sum of squares of the least-squares fit of
/// `cos(2πf·r), sin(2πf·r)` to the mean-subtracted pattern. Maximal exactly
/// at the true fringe frequency (the conjugate spectral image is part of
/// the model, so it introduces no bias).
fn sinusoid_fit_power(pattern: &Pattern, mean: f64, fx: f64, fy: f64) -> f64 {
    let (w, h) = (pattern.width, pattern.height);
    let step_x = Complex64::from_polar(1.0, TAU * fx);
    let step_y = Complex64::from_polar(1.0, TAU * fy);
    let (mut cc, mut ss, mut cs, mut yc, mut ys) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut row_phase = Complex64::new(1.0, 0.0);
    for y in 0..h {
        let mut phase = row_phase;
        let row = &pattern.data[y * w..(y + 1) * w];
        for &value in row {
            let (c, s) = (phase.re, phase.im);
            let v = value - mean;
            cc += c * c;
            ss += s * s;
            cs += c * s;
            yc += v * c;
            ys += v * s;
            phase *= step_x;
        }
        row_phase *= step_y;
    }
    let det = cc * ss - cs * cs;
    if det.abs() < 1e-12 * (cc * ss).max(1e-300) {
        return if cc > 0.0 { yc * yc / cc } else { 0.0 };
    }
    (ss * yc * yc - 2.0 * cs * yc * ys + cc * ys * ys) / det
}

/// Estimates the dominant spatial frequency of the pattern: coarse 2D DFT
/// peak followed by a continuous-frequency refinement that maximises the
/// exact DTFT magnitude (no interpolation bias from spectral leakage).
/// Errors when no non-DC peak rises above 5× the median magnitude.
pub fn estimate_fringe_geometry(pattern: &Pattern) -> Result<FringeGeometry> {
    let (w, h) = (pattern.width, pattern.height);
    if w < 4 || h < 1 {
        return Err(Error::Dimension("pattern too small".into()));
    }
    let grid = fft_2d(pattern);
    let amp = |kx: usize, ky: usize| grid[ky * w + kx].norm();

    let mut amps: Vec<f64> = Vec::with_capacity(w * h - 1);
    let mut best = (0usize, 0usize, 0.0_f64);
    for ky in 0..h {
        for kx in 0..w {
            if kx == 0 && ky == 0 {
                continue;
            }
            let a = amp(kx, ky);
            amps.push(a);
            // Deterministic half-plane selection among the conjugate pair.
            let (sx, sy) = (signed_index(kx, w), signed_index(ky, h));
            let in_half = sx > 0 || (sx == 0 && sy > 0);
            if in_half && a > best.2 {
                best = (kx, ky, a);
            }
        }
    }
    amps.sort_by(f64::total_cmp);
    let median = amps[amps.len() / 2];
    if best.2 <= 0.0 || best.2 < 5.0 * median {
        return Err(Error::NoFringePeak);
    }

    let coarse = [
        signed_index(best.0, w) as f64 / w as f64,
        signed_index(best.1, h) as f64 / h as f64,
    ];
    let mean = pattern.sum() / (w * h) as f64;
    let objective = |f: &[f64; 2]| sinusoid_fit_power(pattern, mean, f[0], f[1]);
    let refined = simplex_max_2d(&objective, coarse, [0.25 / w as f64, 0.25 / h as f64]);
    // Keep the refinement local to the coarse bin.
    let drift_x = (refined[0] - coarse[0]).abs() * w as f64;
    let drift_y = (refined[1] - coarse[1]).abs() * h as f64;
    let (fx, fy) = if drift_x <= 1.5 && drift_y <= 1.5 {
        (refined[0], refined[1])
    } else {
        (coarse[0], coarse[1])
    };
    let freq = (fx * fx + fy * fy).sqrt();
    if freq <= 0.0 {
        return Err(Error::NoFringePeak);
    }
    Ok(FringeGeometry {
        angle_rad: fy.atan2(fx),
        period_px: 1.0 / freq,
    })
}

fn simplex_max_2d(f: &impl Fn(&[f64; 2]) -> f64, start: [f64; 2], step: [f64; 2]) -> [f64; 2] {
    let mut points = [
        start,
        [start[0] + step[0], start[1]],
        [start[0], start[1] + step[1]],
    ];
    let mut values: Vec<f64> = points.iter().map(f).collect();
    for _ in 0..400 {
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
        let (b, m, w) = (order[0], order[1], order[2]);
        if values[b] - values[w] <= 1e-13 * values[b].abs().max(1e-300) {
            break;
        }
        let centroid = [
            0.5 * (points[b][0] + points[m][0]),
            0.5 * (points[b][1] + points[m][1]),
        ];
        let reflect = [
            centroid[0] + (centroid[0] - points[w][0]),
            centroid[1] + (centroid[1] - points[w][1]),
        ];
        let fr = f(&reflect);
        if fr > values[b] {
            let expand = [
                centroid[0] + 2.0 * (reflect[0] - centroid[0]),
                centroid[1] + 2.0 * (reflect[1] - centroid[1]),
            ];
            let fe = f(&expand);
            if fe > fr {
                points[w] = expand;
                values[w] = fe;
            } else {
                points[w] = reflect;
                values[w] = fr;
            }
            continue;
        }
        if fr > values[m] {
            points[w] = reflect;
            values[w] = fr;
            continue;
        }
        let contract = [
            centroid[0] + 0.5 * (points[w][0] - centroid[0]),
            centroid[1] + 0.5 * (points[w][1] - centroid[1]),
        ];
        let fc = f(&contract);
        if fc > values[w] {
            points[w] = contract;
            values[w] = fc;
        } else {
            for i in 0..3 {
                if i == b {
                    continue;
                }
                points[i] = [
                    0.5 * (points[i][0] + points[b][0]),
                    0.5 * (points[i][1] + points[b][1]),
                ];
                values[i] = f(&points[i]);
            }
        }
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    points[order[0]]
}

/// Bilinear resampling of the pattern rotated by `−angle` about its centre,
/// together with the coverage weights (how much of each output pixel came
/// from inside the input).
pub fn resample_rotated(pattern: &Pattern, angle: f64) -> (Pattern, Pattern) {
    let (w, h) = (pattern.width, pattern.height);
    let mut out = Pattern::zeros(w, h);
    let mut cov = Pattern::zeros(w, h);
    if angle.abs() < 1e-12 {
        out.data.copy_from_slice(&pattern.data);
        cov.data.fill(1.0);
        return (out, cov);
    }
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (s, c) = angle.sin_cos();
    for y in 0..h {
        for x in 0..w {
            // Inverse map: rotate output coordinates by +angle.
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let sx = c * dx - s * dy + cx;
            let sy = s * dx + c * dy + cy;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let (tx, ty) = (sx - x0, sy - y0);
            let mut acc = 0.0;
            let mut weight = 0.0;
            for (ox, oy, wgt) in [
                (0.0, 0.0, (1.0 - tx) * (1.0 - ty)),
                (1.0, 0.0, tx * (1.0 - ty)),
                (0.0, 1.0, (1.0 - tx) * ty),
                (1.0, 1.0, tx * ty),
            ] {
                let xi = x0 + ox;
                let yi = y0 + oy;
                if xi >= 0.0 && xi < w as f64 && yi >= 0.0 && yi < h as f64 {
                    acc += wgt * pattern.at(xi as usize, yi as usize);
                    weight += wgt;
                }
            }
            *out.at_mut(x, y) = acc;
            *cov.at_mut(x, y) = weight;
        }
    }
    (out, cov)
}

/// Phase-binned fringe histogram. `phases` hold the coverage-weighted mean
/// pixel phase of each bin (bin centres for empty bins).
#[derive(Debug, Clone)]
pub struct PhaseHistogram {
    pub phases: Vec<f64>,
    pub values: Vec<f64>,
}

impl PhaseHistogram {
    pub fn n_bins(&self) -> usize {
        self.values.len()
    }

    /// Uniform-centre histogram over `[0, 2π)`.
    pub fn from_values(values: Vec<f64>) -> Self {
        let k = values.len();
        Self {
            phases: (0..k).map(|b| TAU * (b as f64 + 0.5) / k as f64).collect(),
            values,
        }
    }
}

/// Alignment-and-binning stage shared by both detector patterns: rotates
/// the pattern by `−geometry.angle_rad`, maps columns to phase with the
/// measured period, and sums into `n_bins` phase bins. Bin values are
/// normalised by relative coverage so that partial pixels at the rotated
/// borders do not bias the fringe shape.
pub fn extract_fringe_aligned(
    pattern: &Pattern,
    geometry: &FringeGeometry,
    n_bins: usize,
) -> Result<PhaseHistogram> {
    if n_bins < 8 {
        return Err(Error::InvalidValue(format!(
            "need at least 8 phase bins, got {n_bins}"
        )));
    }
    let (rotated, coverage) = resample_rotated(pattern, geometry.angle_rad);
    let mut values = vec![0.0_f64; n_bins];
    let mut covs = vec![0.0_f64; n_bins];
    let mut phase_acc = vec![0.0_f64; n_bins];
    for x in 0..rotated.width {
        let phase = (x as f64 / geometry.period_px).fract() * TAU;
        // Bins are centred on k·2π/K, matching the electron phase effects.
        let bin = ((phase / TAU) * n_bins as f64).round() as usize % n_bins;
        // Offset from the bin centre, wrap-safe for bin 0.
        let centre = TAU * bin as f64 / n_bins as f64;
        let mut offset = phase - centre;
        if offset > std::f64::consts::PI {
            offset -= TAU;
        }
        for y in 0..rotated.height {
            values[bin] += rotated.at(x, y);
            let cv = coverage.at(x, y);
            covs[bin] += cv;
            phase_acc[bin] += offset * cv;
        }
    }
    let mean_cov = covs.iter().sum::<f64>() / n_bins as f64;
    if mean_cov <= 0.0 {
        return Err(Error::DegenerateFit("zero coverage after rotation".into()));
    }
    let mut phases = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let centre = TAU * b as f64 / n_bins as f64;
        if covs[b] > 0.0 {
            values[b] *= mean_cov / covs[b];
            phases.push(centre + phase_acc[b] / covs[b]);
        } else {
            phases.push(centre);
        }
    }
    Ok(PhaseHistogram { phases, values })
}

/// Estimates geometry, aligns fringes vertically and bins by phase.
pub fn extract_fringe(pattern: &Pattern, n_bins: usize) -> Result<(PhaseHistogram, FringeGeometry)> {
    let geometry = estimate_fringe_geometry(pattern)?;
    Ok((extract_fringe_aligned(pattern, &geometry, n_bins)?, geometry))
}

/// Sinusoidal fringe fit result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeResult {
    /// Mean level `A` in counts.
    pub amplitude: f64,
    /// Fringe visibility `V ∈ [0, 1]` (up to fit noise).
    pub visibility: f64,
    /// Phase offset `φ₀` of `A(1 + V cos(φ + φ₀))`, radians.
    pub phase: f64,
    pub residual_rms: f64,
}

/// Closed-form least-squares fit of `y(φ) = A(1 + V cos(φ + φ₀))` by linear
/// regression on `{1, cos φ, sin φ}`.
pub fn fit_fringe(hist: &PhaseHistogram) -> Result<FringeResult> {
    let n = hist.values.len();
    if n < 8 {
        return Err(Error::InvalidValue(format!(
            "need at least 8 phase bins, got {n}"
        )));
    }
    let mut xtx = [[0.0_f64; 3]; 3];
    let mut xty = [0.0_f64; 3];
    for (phi, y) in hist.phases.iter().zip(&hist.values) {
        let row = [1.0, phi.cos(), phi.sin()];
        for i in 0..3 {
            for j in 0..3 {
                xtx[i][j] += row[i] * row[j];
            }
            xty[i] += row[i] * y;
        }
    }
    let beta = solve_3x3(xtx, xty)?;
    let a = beta[0];
    if a <= 0.0 {
        return Err(Error::DegenerateFit("non-positive mean level".into()));
    }
    let visibility = (beta[1] * beta[1] + beta[2] * beta[2]).sqrt() / a;
    let phase = (-beta[2]).atan2(beta[1]);
    let mut ss = 0.0;
    for (phi, y) in hist.phases.iter().zip(&hist.values) {
        let fit = beta[0] + beta[1] * phi.cos() + beta[2] * phi.sin();
        ss += (y - fit) * (y - fit);
    }
    Ok(FringeResult {
        amplitude: a,
        visibility,
        phase,
        residual_rms: (ss / n as f64).sqrt(),
    })
}

fn solve_3x3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Result<[f64; 3]> {
    let scale = a
        .iter()
        .flatten()
        .fold(0.0_f64, |acc, x| acc.max(x.abs()))
        .max(1e-300);
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        if a[pivot][col].abs() < 1e-12 * scale {
            return Err(Error::DegenerateFit("singular design matrix".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in 0..3 {
            if row == col {
                continue;
            }
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    Ok([b[0] / a[0][0], b[1] / a[1][1], b[2] / a[2][2]])
}

/// Parses newline-delimited events `channel,t_ps[,x,y]`, `channel ∈ {e,p1,p2}`.
/// Streams are sorted by timestamp on load.
pub fn parse_events(text: &str, path: &str) -> Result<EventSet> {
    let mut set = EventSet::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| Error::Parse {
            path: path.to_string(),
            line: idx + 1,
            msg: msg.to_string(),
        };
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 2 && parts.len() != 4 {
            return Err(err("expected channel,t_ps[,x,y]"));
        }
        let channel = match parts[0] {
            "e" => Channel::Electron,
            "p1" => Channel::Photon1,
            "p2" => Channel::Photon2,
            other => return Err(err(&format!("unknown channel {other:?}"))),
        };
        let t_ps: i64 = parts[1].parse().map_err(|_| err("bad timestamp"))?;
        if t_ps < 0 {
            return Err(err("negative timestamp"));
        }
        let pos = if parts.len() == 4 {
            Some((
                parts[2].parse().map_err(|_| err("bad x"))?,
                parts[3].parse().map_err(|_| err("bad y"))?,
            ))
        } else {
            None
        };
        let event = DetectionEvent { channel, t_ps, pos };
        match channel {
            Channel::Electron => set.electrons.push(event),
            Channel::Photon1 => set.photons1.push(event),
            Channel::Photon2 => set.photons2.push(event),
        }
    }
    set.sort();
    Ok(set)
}

pub fn events_to_string(set: &EventSet) -> String {
    let mut s = String::new();
    let mut write_event = |e: &DetectionEvent| {
        match e.pos {
            Some((x, y)) => {
                let _ = writeln!(s, "{},{},{},{}", e.channel.label(), e.t_ps, x, y);
            }
            None => {
                let _ = writeln!(s, "{},{}", e.channel.label(), e.t_ps);
            }
        }
    };
    for e in &set.electrons {
        write_event(e);
    }
    for e in &set.photons1 {
        write_event(e);
    }
    for e in &set.photons2 {
        write_event(e);
    }
    s
}
