//! Measurement-effect construction from experimental settings.
//!
//! Photon polarisation analysis is modelled in Jones calculus: light leaving
//! the collection fibre traverses a quarter-wave plate, then a half-wave
//! plate, then a polarising beam splitter whose output ports feed detectors
//! 1 (transmitted, `H`) and 2 (reflected, `V`). Electron interference is
//! modelled as a phase-binned two-path measurement. Joint effects are
//! tensor products, electron factor first (see [`crate::qmat`]).
//!
//! Conventions: waveplate fast axes are measured from horizontal,
//! `QWP(θ) = R(θ)·diag(1, i)·R(−θ)` and `HWP(θ) = R(θ)·diag(1, −1)·R(−θ)`
//! with `R` the standard counter-clockwise rotation.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::qmat::{herm_eigvals, tensor, ComplexMatrix};
use crate::{Error, Result};

/// Quarter- and half-wave plate angles in degrees, fast axis from horizontal.
/// Angles are interpreted modulo 180°.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveplateSetting {
    pub qwp_deg: f64,
    pub hwp_deg: f64,
}

impl WaveplateSetting {
    pub fn new(qwp_deg: f64, hwp_deg: f64) -> Result<Self> {
        if !qwp_deg.is_finite() || !hwp_deg.is_finite() {
            return Err(Error::InvalidValue("waveplate angle not finite".into()));
        }
        Ok(Self { qwp_deg, hwp_deg })
    }
}

/// Photon detector behind the polarising beam splitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    D1,
    D2,
}

impl Detector {
    pub fn index(self) -> usize {
        match self {
            Detector::D1 => 0,
            Detector::D2 => 1,
        }
    }

    pub fn label(self) -> u8 {
        match self {
            Detector::D1 => 1,
            Detector::D2 => 2,
        }
    }

    pub fn from_label(label: u8) -> Result<Self> {
        match label {
            1 => Ok(Detector::D1),
            2 => Ok(Detector::D2),
            other => Err(Error::InvalidValue(format!("detector {other}, expected 1 or 2"))),
        }
    }
}

/// Electron beam side in single-beam scan measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    L,
    R,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::L => 0,
            Side::R => 1,
        }
    }

    pub fn label(self) -> char {
        match self {
            Side::L => 'L',
            Side::R => 'R',
        }
    }

    pub fn from_label(s: &str) -> Result<Self> {
        match s {
            "L" | "l" => Ok(Side::L),
            "R" | "r" => Ok(Side::R),
            other => Err(Error::InvalidValue(format!("side {other:?}, expected L or R"))),
        }
    }
}

/// Electron context of a measurement effect: a phase bin of the dual-beam
/// interference pattern, or a fixed beam side in scan mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElectronContext {
    PhaseBin { bin: usize, n_bins: usize },
    Side(Side),
}

/// Experimental label of a measurement effect.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectLabel {
    pub setting: WaveplateSetting,
    pub detector: Detector,
    /// `None` for bare single-photon effects.
    pub context: Option<ElectronContext>,
}

/// Identifier of a normalisation group: counts within one group are treated
/// as draws from the distribution obtained by renormalising the group's
/// effect probabilities to sum to one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupId(pub String);

/// Positive operator labelled by its experimental setting.
#[derive(Debug, Clone)]
pub struct MeasurementEffect {
    pub op: ComplexMatrix,
    pub label: EffectLabel,
    pub group_id: GroupId,
}

impl MeasurementEffect {
    /// Validates positive semidefiniteness within 1e-10.
    pub fn new(op: ComplexMatrix, label: EffectLabel, group_id: GroupId) -> Result<Self> {
        let min_eig = herm_eigvals(&op)?[0];
        if min_eig < -1e-10 {
            return Err(Error::NotPositiveSemidefinite { min_eig });
        }
        Ok(Self { op, label, group_id })
    }

    /// Applies a detector-path efficiency scale. Scaled groups no longer sum
    /// to the identity; the group renormalisation in the likelihood absorbs
    /// the overall factor.
    pub fn scaled(mut self, efficiency: f64) -> Self {
        self.op = self.op.scale(Complex64::new(efficiency, 0.0));
        self
    }
}

/// One measurement effect together with its observed count.
#[derive(Debug, Clone)]
pub struct CountRecord {
    pub effect: MeasurementEffect,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveplateKind {
    Quarter,
    Half,
}

fn rotation(theta: f64) -> ComplexMatrix {
    let (s, c) = theta.sin_cos();
    ComplexMatrix::mat2([
        Complex64::new(c, 0.0),
        Complex64::new(-s, 0.0),
        Complex64::new(s, 0.0),
        Complex64::new(c, 0.0),
    ])
}

/// Jones matrix of an ideal waveplate with fast axis at `theta_deg` from
/// horizontal. The half-wave plate has determinant −1 in this convention.
pub fn waveplate_jones(kind: WaveplateKind, theta_deg: f64) -> Result<ComplexMatrix> {
    if !theta_deg.is_finite() {
        return Err(Error::InvalidValue("waveplate angle not finite".into()));
    }
    let theta = theta_deg.to_radians();
    let retard = match kind {
        WaveplateKind::Quarter => Complex64::I,
        WaveplateKind::Half => -Complex64::ONE,
    };
    let d = ComplexMatrix::mat2([Complex64::ONE, Complex64::ZERO, Complex64::ZERO, retard]);
    Ok(&(&rotation(theta) * &d) * &rotation(-theta))
}

/// Combined Jones matrix of the analysis optics (QWP first, then HWP).
pub fn analysis_unitary(setting: WaveplateSetting) -> Result<ComplexMatrix> {
    let q = waveplate_jones(WaveplateKind::Quarter, setting.qwp_deg)?;
    let h = waveplate_jones(WaveplateKind::Half, setting.hwp_deg)?;
    Ok(&h * &q)
}

fn photon_group_id(setting: WaveplateSetting) -> GroupId {
    GroupId(format!("photon:{}:{}", setting.qwp_deg, setting.hwp_deg))
}

/// Photon effect `E_d = W† P_d W` for detector `d`, with `P₁ = |H⟩⟨H|` and
/// `P₂ = |V⟩⟨V|`. The two effects of a setting sum to the identity.
pub fn photon_effect(setting: WaveplateSetting, detector: Detector) -> Result<MeasurementEffect> {
    let w = analysis_unitary(setting)?;
    let p = match detector {
        Detector::D1 => ComplexMatrix::mat2([
            Complex64::ONE,
            Complex64::ZERO,
            Complex64::ZERO,
            Complex64::ZERO,
        ]),
        Detector::D2 => ComplexMatrix::mat2([
            Complex64::ZERO,
            Complex64::ZERO,
            Complex64::ZERO,
            Complex64::ONE,
        ]),
    };
    let op = &(&w.adjoint() * &p) * &w;
    MeasurementEffect::new(
        op,
        EffectLabel {
            setting,
            detector,
            context: None,
        },
        photon_group_id(setting),
    )
}

/// Electron two-path phase effect for the bin centred at `phi`:
/// `(Δφ/2π)·v v†` with `v = (1, e^{iφ})ᵀ` and `Δφ = 2π/K`.
///
/// `phi` must be one of the bin centres `k·2π/K`, `k = 0..K`.
pub fn electron_phase_effect(phi: f64, n_bins: usize) -> Result<MeasurementEffect> {
    if n_bins < 3 {
        return Err(Error::InvalidValue(format!(
            "need at least 3 phase bins, got {n_bins}"
        )));
    }
    let dphi = TAU / n_bins as f64;
    let k = (phi / dphi).round();
    if !(0.0..n_bins as f64).contains(&k) || (phi - k * dphi).abs() > 1e-9 {
        return Err(Error::InvalidValue(format!(
            "phi {phi} is not a bin centre of the uniform {n_bins}-partition of [0, 2pi)"
        )));
    }
    electron_phase_effect_bin(k as usize, n_bins)
}

/// Same as [`electron_phase_effect`], addressed by bin index.
pub fn electron_phase_effect_bin(bin: usize, n_bins: usize) -> Result<MeasurementEffect> {
    if n_bins < 3 {
        return Err(Error::InvalidValue(format!(
            "need at least 3 phase bins, got {n_bins}"
        )));
    }
    if bin >= n_bins {
        return Err(Error::InvalidValue(format!("bin {bin} out of range for K={n_bins}")));
    }
    let phi = bin_centre(bin, n_bins);
    let weight = 1.0 / n_bins as f64;
    let e = Complex64::from_polar(1.0, phi);
    let op = ComplexMatrix::mat2([
        Complex64::new(weight, 0.0),
        Complex64::new(weight, 0.0) * e.conj(),
        Complex64::new(weight, 0.0) * e,
        Complex64::new(weight, 0.0),
    ]);
    MeasurementEffect::new(
        op,
        EffectLabel {
            setting: WaveplateSetting {
                qwp_deg: 0.0,
                hwp_deg: 0.0,
            },
            detector: Detector::D1,
            context: Some(ElectronContext::PhaseBin { bin, n_bins }),
        },
        GroupId(format!("ephase:{n_bins}")),
    )
}

/// Centre of phase bin `bin` in the uniform `n_bins`-partition of `[0, 2π)`.
pub fn bin_centre(bin: usize, n_bins: usize) -> f64 {
    TAU * bin as f64 / n_bins as f64
}

pub fn fringe_group_id(setting: WaveplateSetting, n_bins: usize) -> GroupId {
    GroupId(format!(
        "fringe:{}:{}:K{}",
        setting.qwp_deg, setting.hwp_deg, n_bins
    ))
}

pub fn scan_group_id(setting: WaveplateSetting, side: Side) -> GroupId {
    GroupId(format!(
        "scan:{}:{}:{}",
        side.label(),
        setting.qwp_deg,
        setting.hwp_deg
    ))
}

/// The complete joint effect set of one fringe measurement: `2K` effects
/// `ξ_{d,k} = electron_phase(φ_k) ⊗ photon(setting, d)` sharing one group.
/// Ordered detector-major: all `K` bins of detector 1, then detector 2.
pub fn joint_effect_set(setting: WaveplateSetting, n_bins: usize) -> Result<Vec<MeasurementEffect>> {
    joint_effect_set_with_efficiencies(setting, n_bins, [1.0, 1.0])
}

/// [`joint_effect_set`] with optional per-detector efficiency scales.
pub fn joint_effect_set_with_efficiencies(
    setting: WaveplateSetting,
    n_bins: usize,
    efficiencies: [f64; 2],
) -> Result<Vec<MeasurementEffect>> {
    let group = fringe_group_id(setting, n_bins);
    let mut out = Vec::with_capacity(2 * n_bins);
    for detector in [Detector::D1, Detector::D2] {
        let photon = photon_effect(setting, detector)?;
        for bin in 0..n_bins {
            let electron = electron_phase_effect_bin(bin, n_bins)?;
            let op = tensor(&electron.op, &photon.op)?;
            out.push(
                MeasurementEffect::new(
                    op,
                    EffectLabel {
                        setting,
                        detector,
                        context: Some(ElectronContext::PhaseBin { bin, n_bins }),
                    },
                    group.clone(),
                )?
                .scaled(efficiencies[detector.index()]),
            );
        }
    }
    Ok(out)
}

/// The two effects of one scan group, `ξ_d = |side⟩⟨side| ⊗ E_d`. They sum
/// to `|side⟩⟨side| ⊗ I`: probabilities are conditioned on the electron side
/// and counts within the group are binomial.
pub fn scan_effect_set(setting: WaveplateSetting, side: Side) -> Result<Vec<MeasurementEffect>> {
    scan_effect_set_with_efficiencies(setting, side, [1.0, 1.0])
}

/// [`scan_effect_set`] with optional per-detector efficiency scales.
pub fn scan_effect_set_with_efficiencies(
    setting: WaveplateSetting,
    side: Side,
    efficiencies: [f64; 2],
) -> Result<Vec<MeasurementEffect>> {
    let group = scan_group_id(setting, side);
    let mut proj = ComplexMatrix::zeros(2, 2);
    proj.set(side.index(), side.index(), Complex64::ONE);
    let mut out = Vec::with_capacity(2);
    for detector in [Detector::D1, Detector::D2] {
        let photon = photon_effect(setting, detector)?;
        let op = tensor(&proj, &photon.op)?;
        out.push(
            MeasurementEffect::new(
                op,
                EffectLabel {
                    setting,
                    detector,
                    context: Some(ElectronContext::Side(side)),
                },
                group.clone(),
            )?
            .scaled(efficiencies[detector.index()]),
        );
    }
    Ok(out)
}

/// One line of a settings file: `qwp_deg,hwp_deg,context` with context
/// `phase:K`, `side:L` or `side:R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettingRecord {
    pub setting: WaveplateSetting,
    pub context: SettingContext,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SettingContext {
    Phase { n_bins: usize },
    Side(Side),
}

pub fn parse_settings(text: &str, path: &str) -> Result<Vec<SettingRecord>> {
    let mut out = Vec::new();
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
        if parts.len() != 3 {
            return Err(err("expected qwp_deg,hwp_deg,context"));
        }
        let qwp: f64 = parts[0].parse().map_err(|_| err("bad qwp angle"))?;
        let hwp: f64 = parts[1].parse().map_err(|_| err("bad hwp angle"))?;
        let context = match parts[2].split_once(':') {
            Some(("phase", k)) => SettingContext::Phase {
                n_bins: k.parse().map_err(|_| err("bad phase bin count"))?,
            },
            Some(("side", s)) => SettingContext::Side(Side::from_label(s)?),
            _ => return Err(err("context must be phase:K or side:L|R")),
        };
        out.push(SettingRecord {
            setting: WaveplateSetting::new(qwp, hwp)?,
            context,
        });
    }
    Ok(out)
}

/// One line of a fringe count file:
/// `qwp_deg,hwp_deg,n_bins,detector,bin,count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeCount {
    pub setting: WaveplateSetting,
    pub n_bins: usize,
    pub detector: Detector,
    pub bin: usize,
    pub count: u64,
}

pub fn parse_fringe_counts(text: &str, path: &str) -> Result<Vec<FringeCount>> {
    let mut out = Vec::new();
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
        if parts.len() != 6 {
            return Err(err("expected qwp_deg,hwp_deg,n_bins,detector,bin,count"));
        }
        out.push(FringeCount {
            setting: WaveplateSetting::new(
                parts[0].parse().map_err(|_| err("bad qwp angle"))?,
                parts[1].parse().map_err(|_| err("bad hwp angle"))?,
            )?,
            n_bins: parts[2].parse().map_err(|_| err("bad bin count"))?,
            detector: Detector::from_label(parts[3].parse().map_err(|_| err("bad detector"))?)?,
            bin: parts[4].parse().map_err(|_| err("bad bin index"))?,
            count: parts[5].parse().map_err(|_| err("bad count"))?,
        });
    }
    Ok(out)
}

pub fn fringe_counts_to_string(counts: &[FringeCount]) -> String {
    let mut s = String::new();
    for c in counts {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.setting.qwp_deg,
            c.setting.hwp_deg,
            c.n_bins,
            c.detector.label(),
            c.bin,
            c.count
        ));
    }
    s
}

/// Builds joint count records from fringe count lines; missing cells of a
/// group contribute zero counts so the normalisation stays correct.
pub fn fringe_records(counts: &[FringeCount]) -> Result<Vec<CountRecord>> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(u64, u64, usize), Vec<&FringeCount>> = BTreeMap::new();
    for c in counts {
        groups
            .entry((
                c.setting.qwp_deg.to_bits(),
                c.setting.hwp_deg.to_bits(),
                c.n_bins,
            ))
            .or_default()
            .push(c);
    }
    let mut out = Vec::new();
    for ((qwp, hwp, n_bins), lines) in groups {
        let setting = WaveplateSetting::new(f64::from_bits(qwp), f64::from_bits(hwp))?;
        let effects = joint_effect_set(setting, n_bins)?;
        let mut cell_counts = vec![0u64; 2 * n_bins];
        for line in lines {
            if line.bin >= n_bins {
                return Err(Error::InvalidValue(format!(
                    "bin {} out of range for K={n_bins}",
                    line.bin
                )));
            }
            cell_counts[line.detector.index() * n_bins + line.bin] += line.count;
        }
        for (effect, count) in effects.into_iter().zip(cell_counts) {
            out.push(CountRecord { effect, count });
        }
    }
    Ok(out)
}

pub fn settings_to_string(records: &[SettingRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let ctx = match r.context {
            SettingContext::Phase { n_bins } => format!("phase:{n_bins}"),
            SettingContext::Side(side) => format!("side:{}", side.label()),
        };
        s.push_str(&format!(
            "{},{},{}\n",
            r.setting.qwp_deg, r.setting.hwp_deg, ctx
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::{random_density_matrix, DensityMatrix, PureState};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Strips the global phase difference and compares.
    fn eq_up_to_phase(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
        let mut phase = None;
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                if b[(i, j)].norm() > 1e-6 {
                    phase = Some(a[(i, j)] / b[(i, j)]);
                    break;
                }
            }
            if phase.is_some() {
                break;
            }
        }
        let phase = phase.expect("zero reference matrix");
        a.max_abs_diff(&b.scale(phase)) <= tol
    }

    #[test]
    fn qwp_at_zero_is_diag_one_i() {
        let q = waveplate_jones(WaveplateKind::Quarter, 0.0).unwrap();
        let expected = ComplexMatrix::mat2([Complex64::ONE, c(0.0, 0.0), c(0.0, 0.0), Complex64::I]);
        assert!(eq_up_to_phase(&q, &expected, 1e-15));
    }

    #[test]
    fn hwp_at_45_maps_h_to_v() {
        let h = waveplate_jones(WaveplateKind::Half, 45.0).unwrap();
        // Explicit product oracle: R(45)·diag(1,−1)·R(−45) = σx.
        let expected = crate::qmat::pauli(1);
        assert!(h.max_abs_diff(&expected) < 1e-15);
        let out = [h[(0, 0)], h[(1, 0)]];
        assert!(out[0].norm() < 1e-15 && (out[1].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hwp_twice_is_identity_and_det_minus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let theta: f64 = rng.random::<f64>() * 360.0 - 180.0;
            let h = waveplate_jones(WaveplateKind::Half, theta).unwrap();
            let hh = &h * &h;
            assert!(eq_up_to_phase(&hh, &ComplexMatrix::identity(2), 1e-13));
            let det = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)];
            assert!((det + Complex64::ONE).norm() < 1e-13);
            // Unitarity.
            let u = &h.adjoint() * &h;
            assert!(u.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-12);
        }
    }

    #[test]
    fn photon_effect_no_rotation_is_h_projector() {
        let setting = WaveplateSetting::new(0.0, 0.0).unwrap();
        let e1 = photon_effect(setting, Detector::D1).unwrap();
        let expected = ComplexMatrix::mat2([Complex64::ONE, c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(e1.op.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn photon_effect_hwp_22_5_matches_product_oracle() {
        let setting = WaveplateSetting::new(0.0, 22.5).unwrap();
        let e1 = photon_effect(setting, Detector::D1).unwrap();
        // Oracle: explicit matrix product W† P1 W, W = HWP(22.5°)·QWP(0°).
        let q = waveplate_jones(WaveplateKind::Quarter, 0.0).unwrap();
        let h = waveplate_jones(WaveplateKind::Half, 22.5).unwrap();
        let w = &h * &q;
        let p1 = ComplexMatrix::mat2([Complex64::ONE, c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let oracle = &(&w.adjoint() * &p1) * &w;
        assert!(e1.op.max_abs_diff(&oracle) < 1e-15);
        // QWP(0°) = diag(1, i) turns the would-be diagonal projector into the
        // circular one, ½[[1, i],[−i, 1]]; frozen from the oracle.
        let circ = ComplexMatrix::mat2([c(0.5, 0.0), c(0.0, 0.5), c(0.0, -0.5), c(0.5, 0.0)]);
        assert!(e1.op.max_abs_diff(&circ) < 1e-14);
    }

    #[test]
    fn photon_effects_sum_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let setting = WaveplateSetting::new(
                rng.random::<f64>() * 180.0,
                rng.random::<f64>() * 180.0,
            )
            .unwrap();
            let e1 = photon_effect(setting, Detector::D1).unwrap();
            let e2 = photon_effect(setting, Detector::D2).unwrap();
            let sum = &e1.op + &e2.op;
            assert!(sum.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-12);
            assert_eq!(e1.group_id, e2.group_id);
        }
    }

    #[test]
    fn photon_effect_hwp_mod_90_swaps_detectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let qwp = rng.random::<f64>() * 180.0;
            let hwp = rng.random::<f64>() * 180.0;
            let e1 = photon_effect(WaveplateSetting::new(qwp, hwp).unwrap(), Detector::D1).unwrap();
            let e2 = photon_effect(
                WaveplateSetting::new(qwp, hwp + 45.0).unwrap(),
                Detector::D2,
            )
            .unwrap();
            assert!(e1.op.max_abs_diff(&e2.op) < 1e-12);
        }
    }

    #[test]
    fn electron_phase_effect_closed_forms() {
        // φ = 0, K = 4: entries all 1/4, trace 1/2.
        let e = electron_phase_effect(0.0, 4).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((e.op[(i, j)] - c(0.25, 0.0)).norm() < 1e-15);
            }
        }
        assert!((e.op.trace().re - 0.5).abs() < 1e-15);

        // φ = π, K = 4: off-diagonal sign flips.
        let e = electron_phase_effect(std::f64::consts::PI, 4).unwrap();
        assert!((e.op[(0, 1)] + c(0.25, 0.0)).norm() < 1e-12);
        assert!((e.op[(1, 0)] + c(0.25, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn electron_phase_effects_sum_to_identity() {
        let mut sum = ComplexMatrix::zeros(2, 2);
        for k in 0..64 {
            sum = &sum + &electron_phase_effect_bin(k, 64).unwrap().op;
        }
        assert!(sum.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-12);
    }

    #[test]
    fn electron_phase_effect_rejects_off_centre_phi() {
        assert!(electron_phase_effect(0.1, 4).is_err());
        assert!(electron_phase_effect(0.0, 2).is_err());
    }

    #[test]
    fn joint_effects_complete_and_uniform_on_mixed_state() {
        let setting = WaveplateSetting::new(30.0, 28.0).unwrap();
        let k = 8;
        let effects = joint_effect_set(setting, k).unwrap();
        assert_eq!(effects.len(), 2 * k);
        let rho = DensityMatrix::maximally_mixed(4);
        for e in &effects {
            let p = e.op.trace_product(rho.mat()).re;
            assert!((p - 1.0 / (2.0 * k as f64)).abs() < 1e-13);
        }
    }

    #[test]
    fn joint_effects_bell_probabilities_match_brute_force() {
        // W = I setting: qwp 0, hwp 0. Probability of (detector 1, bin k)
        // for the Bell state follows the (1 + cos φ)/2 fringe.
        let setting = WaveplateSetting::new(0.0, 0.0).unwrap();
        let k = 16;
        let effects = joint_effect_set(setting, k).unwrap();
        let bell = DensityMatrix::from_pure(&PureState::bell_phi_plus());
        let probs: Vec<f64> = effects
            .iter()
            .map(|e| e.op.trace_product(bell.mat()).re)
            .collect();
        let total: f64 = probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        // At (0°, 0°) the photon measurement is in the H/V basis, which
        // carries full which-path information: fringes are flat at 1/(2K).
        for (i, p) in probs.iter().enumerate() {
            assert!((p - 1.0 / (2.0 * k as f64)).abs() < 1e-12, "cell {i}");
        }

        // An erasing setting (hwp 22.5°) restores full-visibility fringes
        // with opposite phase per detector. Expected cells derived by hand
        // from tr(ξρ): E₁ = ½[[1,i],[−i,1]] gives (1 + sin φ)/(2K).
        let setting = WaveplateSetting::new(0.0, 22.5).unwrap();
        let effects = joint_effect_set(setting, k).unwrap();
        let mut total = 0.0;
        for e in &effects {
            let Some(ElectronContext::PhaseBin { bin, .. }) = e.label.context else {
                panic!()
            };
            let phi = bin_centre(bin, k);
            let sign = match e.label.detector {
                Detector::D1 => 1.0,
                Detector::D2 => -1.0,
            };
            let p = e.op.trace_product(bell.mat()).re;
            total += p;
            let expected = (1.0 + sign * phi.sin()) / (2.0 * k as f64);
            assert!((p - expected).abs() < 1e-12);
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_effects_probabilities_sum_to_one_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let setting = WaveplateSetting::new(74.0, 80.0).unwrap();
        let effects = joint_effect_set(setting, 8).unwrap();
        for _ in 0..100 {
            let rho = random_density_matrix(&mut rng, 4);
            let total: f64 = effects
                .iter()
                .map(|e| e.op.trace_product(rho.mat()).re)
                .sum();
            assert!((total - 1.0).abs() < 1e-11);
        }
    }

    #[test]
    fn joint_effects_complete_for_random_settings() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let setting = WaveplateSetting::new(
                rng.random::<f64>() * 360.0 - 90.0,
                rng.random::<f64>() * 360.0 - 90.0,
            )
            .unwrap();
            for k in [8usize, 32] {
                let effects = joint_effect_set(setting, k).unwrap();
                let mut sum = ComplexMatrix::zeros(4, 4);
                for e in &effects {
                    sum = &sum + &e.op;
                }
                assert!(sum.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-11);
            }
        }
    }

    #[test]
    fn scan_effects_condition_on_side() {
        let setting = WaveplateSetting::new(0.0, 0.0).unwrap();
        let effects = scan_effect_set(setting, Side::L).unwrap();
        // |L,H⟩⟨L,H| gives probability 1 on detector 1, 0 on detector 2.
        let lh = DensityMatrix::from_pure(&PureState::basis(4, 0));
        assert!((effects[0].op.trace_product(lh.mat()).re - 1.0).abs() < 1e-14);
        assert!(effects[1].op.trace_product(lh.mat()).re.abs() < 1e-14);

        // State with zero R population: both R-side probabilities vanish.
        let effects_r = scan_effect_set(setting, Side::R).unwrap();
        for e in &effects_r {
            assert!(e.op.trace_product(lh.mat()).re.abs() < 1e-14);
        }
    }

    #[test]
    fn scan_effects_sum_to_identity_on_their_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let setting = WaveplateSetting::new(
                rng.random::<f64>() * 180.0,
                rng.random::<f64>() * 180.0,
            )
            .unwrap();
            for side in [Side::L, Side::R] {
                let effects = scan_effect_set(setting, side).unwrap();
                let sum = &effects[0].op + &effects[1].op;
                let mut proj = ComplexMatrix::zeros(2, 2);
                proj.set(side.index(), side.index(), Complex64::ONE);
                let support =
                    crate::qmat::tensor(&proj, &ComplexMatrix::identity(2)).unwrap();
                assert!(sum.max_abs_diff(&support) < 1e-12);
                assert_eq!(effects[0].group_id, effects[1].group_id);
            }
        }
    }

    #[test]
    fn scan_effects_match_partial_trace_reduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let setting = WaveplateSetting::new(30.0, 95.0).unwrap();
        let rho = random_density_matrix(&mut rng, 4);
        // Conditional photon state given side L: ⟨L|ρ|L⟩ normalised.
        let block = ComplexMatrix::from_fn(2, 2, |i, j| rho.mat()[(i, j)]);
        let pop = block.trace().re;
        let effects = scan_effect_set(setting, Side::L).unwrap();
        for (e, det) in effects.iter().zip([Detector::D1, Detector::D2]) {
            let joint_p = e.op.trace_product(rho.mat()).re;
            let photon = photon_effect(setting, det).unwrap();
            let reduced_p = photon.op.trace_product(&block).re;
            assert!((joint_p - reduced_p).abs() < 1e-13);
            assert!((joint_p / pop - reduced_p / pop).abs() < 1e-12);
        }
    }

    #[test]
    fn all_effects_positive_semidefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let setting = WaveplateSetting::new(
                rng.random::<f64>() * 180.0,
                rng.random::<f64>() * 180.0,
            )
            .unwrap();
            for e in joint_effect_set(setting, 8).unwrap() {
                let min = herm_eigvals(&e.op).unwrap()[0];
                assert!(min >= -1e-11);
            }
        }
    }

    #[test]
    fn detector_efficiency_scales_effects() {
        let setting = WaveplateSetting::new(30.0, 95.0).unwrap();
        let eta = [0.68, 0.76];
        let plain = joint_effect_set(setting, 8).unwrap();
        let scaled = joint_effect_set_with_efficiencies(setting, 8, eta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rho = random_density_matrix(&mut rng, 4);
        for (p, s) in plain.iter().zip(&scaled) {
            let factor = eta[p.label.detector.index()];
            assert!(s.op.max_abs_diff(&p.op.scale(c(factor, 0.0))) < 1e-15);
        }
        // Group renormalisation keeps the scaled set a valid distribution.
        let total: f64 = scaled
            .iter()
            .map(|e| e.op.trace_product(rho.mat()).re)
            .sum();
        let renorm: f64 = scaled
            .iter()
            .map(|e| e.op.trace_product(rho.mat()).re / total)
            .sum();
        assert!((renorm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn settings_file_round_trip() {
        let text = "30,28,phase:16\n0,10,side:L\n74, 80, side:R\n# comment\n";
        let records = parse_settings(text, "test").unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].context, SettingContext::Phase { n_bins: 16 });
        assert_eq!(records[2].context, SettingContext::Side(Side::R));
        let rt = parse_settings(&settings_to_string(&records), "rt").unwrap();
        assert_eq!(records, rt);
    }
}
