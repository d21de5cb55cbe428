//! Iterative maximum-likelihood reconstruction of single-qubit photon states
//! from scan count records.
//!
//! The estimator is the fixed point of the `ρ ← RρR / tr` iteration with
//! `R = Σ_j (N_j / tr(ξ_j ρ)) ξ_j`, started from the maximally mixed state.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::polopt::{photon_effect, CountRecord, Detector, Side, WaveplateSetting};
use crate::qmat::{herm_eigvals, pauli, ComplexMatrix, DensityMatrix};
use crate::{Error, Result};

/// Convergence threshold on the log-likelihood gain.
const LOGLIK_GAIN_TOL: f64 = 1e-10;
/// Iteration cap.
const MAX_ITERATIONS: usize = 10_000;

/// Pauli expectation triple of a qubit state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// Iteration trace of a reconstruction.
#[derive(Debug, Clone)]
pub struct MleReport {
    /// Log-likelihood after each iteration, starting with the initial state.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Log-likelihood `Σ_j N_j ln tr(ξ_j ρ)` with Kahan compensation.
fn log_likelihood(records: &[CountRecord], rho: &ComplexMatrix) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for r in records {
        if r.count == 0 {
            continue;
        }
        let p = r.effect.op.trace_product(rho).re.max(1e-300);
        let term = r.count as f64 * p.ln();
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Checks that the effects span the full space of Hermitian 2x2 operators.
fn check_span(records: &[CountRecord]) -> Result<()> {
    // Gram matrix of the effects in the (I, σx, σy, σz)/√2 basis.
    let basis: Vec<ComplexMatrix> = (0..4).map(pauli).collect();
    let mut coords = Vec::with_capacity(records.len());
    for r in records {
        let v: Vec<f64> = basis
            .iter()
            .map(|b| r.effect.op.trace_product(b).re * 0.5)
            .collect();
        coords.push(v);
    }
    let mut gram = ComplexMatrix::zeros(4, 4);
    for v in &coords {
        for i in 0..4 {
            for j in 0..4 {
                let g = gram[(i, j)] + Complex64::new(v[i] * v[j], 0.0);
                gram.set(i, j, g);
            }
        }
    }
    let eigs = herm_eigvals(&gram)?;
    let scale = eigs[3].max(1e-30);
    if eigs[0] / scale < 1e-12 {
        return Err(Error::IncompleteEffectSpan);
    }
    Ok(())
}

/// Maximum-likelihood qubit state from count records with 2x2 effects.
pub fn mle_qubit(records: &[CountRecord]) -> Result<(DensityMatrix, MleReport)> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    for r in records {
        if r.effect.op.rows() != 2 {
            return Err(Error::Dimension("mle_qubit needs 2x2 effects".into()));
        }
    }
    if records.iter().map(|r| r.count).sum::<u64>() == 0 {
        return Err(Error::ZeroTotalCounts);
    }
    check_span(records)?;

    let mut rho = DensityMatrix::maximally_mixed(2).into_mat();
    let mut loglik = log_likelihood(records, &rho);
    let mut trace = vec![loglik];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..MAX_ITERATIONS {
        iterations += 1;
        let mut r_op = ComplexMatrix::zeros(2, 2);
        for rec in records {
            if rec.count == 0 {
                continue;
            }
            let p = rec.effect.op.trace_product(&rho).re.max(1e-300);
            let w = Complex64::new(rec.count as f64 / p, 0.0);
            r_op = &r_op + &rec.effect.op.scale(w);
        }
        let next = &(&r_op * &rho) * &r_op;
        let tr = next.trace().re;
        if !(tr.is_finite() && tr > 0.0) {
            return Err(Error::NonConvergence("RρR trace degenerate".into()));
        }
        rho = next.scale(Complex64::new(1.0 / tr, 0.0));
        // Positivity and unit trace are preserved by construction; checked in
        // debug builds at every step.
        debug_assert!((rho.trace().re - 1.0).abs() < 1e-9);
        debug_assert!(herm_eigvals(&rho).map(|e| e[0] >= -1e-9).unwrap_or(false));
        let next_ll = log_likelihood(records, &rho);
        let gain = next_ll - loglik;
        assert!(
            gain >= -1e-12 * loglik.abs().max(1.0),
            "log-likelihood decreased by {gain:.3e}"
        );
        trace.push(next_ll);
        loglik = next_ll;
        if gain.abs() < LOGLIK_GAIN_TOL {
            converged = true;
            break;
        }
    }
    // Symmetrise round-off before validating.
    let sym = ComplexMatrix::from_fn(2, 2, |i, j| 0.5 * (rho[(i, j)] + rho[(j, i)].conj()));
    let tr = sym.trace().re;
    let state = DensityMatrix::new(sym.scale(Complex64::new(1.0 / tr, 0.0)))?;
    Ok((
        state,
        MleReport {
            loglik_trace: trace,
            iterations,
            converged,
        },
    ))
}

/// Pauli expectation values of a qubit state.
pub fn bloch(rho: &DensityMatrix) -> Result<BlochVector> {
    if rho.dim() != 2 {
        return Err(Error::Dimension("bloch needs a 2x2 state".into()));
    }
    let b = BlochVector {
        x: rho.mat().trace_product(&pauli(1)).re,
        y: rho.mat().trace_product(&pauli(2)).re,
        z: rho.mat().trace_product(&pauli(3)).re,
    };
    debug_assert!(b.norm() <= 1.0 + 1e-9);
    Ok(b)
}

/// Angle between two Bloch vectors in degrees.
pub fn bloch_angle(a: &BlochVector, b: &BlochVector) -> Result<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidValue("zero-norm Bloch vector".into()));
    }
    let dot = (a.x * b.x + a.y * b.y + a.z * b.z) / (na * nb);
    Ok(dot.clamp(-1.0, 1.0).acos().to_degrees())
}

/// One line of a scan count file: `qwp_deg,hwp_deg,detector,side,count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanCount {
    pub setting: WaveplateSetting,
    pub detector: Detector,
    pub side: Side,
    pub count: u64,
}

pub fn parse_scan_counts(text: &str, path: &str) -> Result<Vec<ScanCount>> {
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
        if parts.len() != 5 {
            return Err(err("expected qwp_deg,hwp_deg,detector,side,count"));
        }
        out.push(ScanCount {
            setting: WaveplateSetting::new(
                parts[0].parse().map_err(|_| err("bad qwp angle"))?,
                parts[1].parse().map_err(|_| err("bad hwp angle"))?,
            )?,
            detector: Detector::from_label(parts[2].parse().map_err(|_| err("bad detector"))?)?,
            side: Side::from_label(parts[3])?,
            count: parts[4].parse().map_err(|_| err("bad count"))?,
        });
    }
    Ok(out)
}

pub fn scan_counts_to_string(counts: &[ScanCount]) -> String {
    let mut s = String::new();
    for r in counts {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.setting.qwp_deg,
            r.setting.hwp_deg,
            r.detector.label(),
            r.side.label(),
            r.count
        ));
    }
    s
}

/// Aggregates raw scan lines (one per raster pixel) into per-(setting, side)
/// photon count records, the unit at which one state per side is
/// reconstructed.
pub fn aggregate_scan(counts: &[ScanCount], side: Side) -> Result<Vec<CountRecord>> {
    // Keyed on angle bit patterns: settings come from files or generators
    // with exactly repeating values.
    let mut groups: BTreeMap<(u64, u64, usize), u64> = BTreeMap::new();
    for c in counts.iter().filter(|c| c.side == side) {
        *groups
            .entry((
                c.setting.qwp_deg.to_bits(),
                c.setting.hwp_deg.to_bits(),
                c.detector.index(),
            ))
            .or_insert(0) += c.count;
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((qwp, hwp, det), count) in groups {
        let setting = WaveplateSetting::new(f64::from_bits(qwp), f64::from_bits(hwp))?;
        let detector = if det == 0 { Detector::D1 } else { Detector::D2 };
        out.push(CountRecord {
            effect: photon_effect(setting, detector)?,
            count,
        });
    }
    Ok(out)
}

/// Aggregates raw scan lines into joint 4x4 count records (one scan effect
/// group per `(setting, side)`), the form consumed by the Bayesian
/// reconstruction.
pub fn joint_scan_records(counts: &[ScanCount]) -> Result<Vec<CountRecord>> {
    let mut groups: BTreeMap<(u64, u64, usize), [u64; 2]> = BTreeMap::new();
    for c in counts {
        let entry = groups
            .entry((
                c.setting.qwp_deg.to_bits(),
                c.setting.hwp_deg.to_bits(),
                c.side.index(),
            ))
            .or_insert([0, 0]);
        entry[c.detector.index()] += c.count;
    }
    let mut out = Vec::new();
    for ((qwp, hwp, side_idx), group_counts) in groups {
        let setting = WaveplateSetting::new(f64::from_bits(qwp), f64::from_bits(hwp))?;
        let side = if side_idx == 0 { Side::L } else { Side::R };
        let effects = crate::polopt::scan_effect_set(setting, side)?;
        for (effect, count) in effects.into_iter().zip(group_counts) {
            out.push(CountRecord { effect, count });
        }
    }
    Ok(out)
}
