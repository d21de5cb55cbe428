//! Entanglement certification and state-quality metrics for the joint
//! electron-photon state: Peres-Horodecki minimum eigenvalue, Wootters
//! concurrence, entanglement of formation, Bell fidelity optimised over
//! photon-side local unitaries, and the electron-coherence correction map.

use num_complex::Complex64;

use crate::qmat::{herm_eig, herm_eigvals, partial_transpose, pauli, tensor, ComplexMatrix, DensityMatrix, Subsystem};
use crate::{Error, Result};

/// Smallest eigenvalue of the partially transposed state. Negative iff the
/// two-qubit state is entangled.
pub fn ppt_min_eigenvalue(rho: &DensityMatrix) -> Result<f64> {
    let pt = partial_transpose(rho, Subsystem::Second)?;
    Ok(herm_eigvals(&pt)?[0])
}

/// Negativity `−2·min(0, ppt_min_eigenvalue)`.
pub fn negativity(rho: &DensityMatrix) -> Result<f64> {
    Ok(-2.0 * ppt_min_eigenvalue(rho)?.min(0.0))
}

/// Wootters concurrence from the spin-flip construction:
/// `max(0, λ₁−λ₂−λ₃−λ₄)` with `λᵢ` the descending square roots of the
/// eigenvalues of `ρ·(σy⊗σy)ρ*(σy⊗σy)`.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    if rho.dim() != 4 {
        return Err(Error::Dimension("concurrence needs a 4x4 state".into()));
    }
    let yy = tensor(&pauli(2), &pauli(2))?;
    let flipped = &(&yy * &rho.mat().conj()) * &yy;
    // ρ·ρ̃ is not Hermitian; use the isospectral Hermitian form √ρ ρ̃ √ρ.
    let s = rho.sqrt()?;
    let m = &(&s * &flipped) * &s;
    let eigs = herm_eigvals(&m)?;
    let mut lambdas: Vec<f64> = eigs.iter().map(|e| e.max(0.0).sqrt()).collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0))
}

fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Entanglement of formation as a function of concurrence.
pub fn eof_from_concurrence(c: f64) -> f64 {
    let c = c.clamp(0.0, 1.0);
    binary_entropy(0.5 * (1.0 + (1.0 - c * c).max(0.0).sqrt()))
}

/// Entanglement of formation `h((1+√(1−C²))/2)`.
pub fn entanglement_of_formation(rho: &DensityMatrix) -> Result<f64> {
    Ok(eof_from_concurrence(concurrence(rho)?))
}

/// Photon-side rotation `U(α,θ,φ) = Rz(α)·Ry(θ)·Rz(φ)` (covers SU(2) up to
/// an irrelevant global phase).
pub fn rotation_unitary(alpha: f64, theta: f64, phi: f64) -> ComplexMatrix {
    let (ct, st) = ((0.5 * theta).cos(), (0.5 * theta).sin());
    let ea = Complex64::from_polar(1.0, -0.5 * alpha);
    let ep = Complex64::from_polar(1.0, -0.5 * phi);
    // Rz(a)·Ry(t)·Rz(p)
    ComplexMatrix::mat2([
        ea * ep * ct,
        -ea * ep.conj() * st,
        ea.conj() * ep * st,
        ea.conj() * ep.conj() * ct,
    ])
}

/// Fidelity `⟨Φ⁺|(I⊗U) X (I⊗U)†|Φ⁺⟩` of an arbitrary Hermitian operator `X`
/// after rotating the photon basis by `U`.
pub fn bell_fidelity_with_rotation(x: &ComplexMatrix, u: &ComplexMatrix) -> f64 {
    // (I⊗U)†|Φ⁺⟩ has components conj(U[a,i])/√2 at index (a,i).
    let w = [
        u[(0, 0)].conj(),
        u[(0, 1)].conj(),
        u[(1, 0)].conj(),
        u[(1, 1)].conj(),
    ];
    let mut acc = Complex64::ZERO;
    for i in 0..4 {
        for j in 0..4 {
            acc += w[i].conj() * x[(i, j)] * w[j];
        }
    }
    0.5 * acc.re
}

/// Maximises the Bell-state fidelity over photon-side unitaries with the
/// default 16³ coarse grid.
pub fn bell_fidelity_opt(rho: &DensityMatrix) -> Result<(f64, ComplexMatrix)> {
    bell_fidelity_opt_with_grid(rho.mat(), 16)
}

/// Grid-then-simplex maximisation of the rotated Bell fidelity of a
/// Hermitian unit-trace operator. A denser grid never returns a lower value.
pub fn bell_fidelity_opt_with_grid(x: &ComplexMatrix, grid_n: usize) -> Result<(f64, ComplexMatrix)> {
    if x.rows() != 4 {
        return Err(Error::Dimension("Bell fidelity needs a 4x4 operator".into()));
    }
    let f = |p: &[f64; 3]| bell_fidelity_with_rotation(x, &rotation_unitary(p[0], p[1], p[2]));

    // Coarse grid over (α, θ, φ) ∈ [0,2π) × [0,π] × [0,2π).
    let tau = std::f64::consts::TAU;
    let mut starts: Vec<([f64; 3], f64)> = Vec::new();
    for ia in 0..grid_n {
        for it in 0..grid_n {
            for ip in 0..grid_n {
                let p = [
                    tau * ia as f64 / grid_n as f64,
                    std::f64::consts::PI * it as f64 / (grid_n - 1).max(1) as f64,
                    tau * ip as f64 / grid_n as f64,
                ];
                starts.push((p, f(&p)));
            }
        }
    }
    starts.sort_by(|a, b| b.1.total_cmp(&a.1));

    let mut best = starts[0];
    for (p0, _) in starts.iter().take(3) {
        let (p, val) = nelder_mead_max(&f, *p0, 0.5 * tau / grid_n as f64)?;
        if val > best.1 {
            best = (p, val);
        }
    }
    Ok((best.1, rotation_unitary(best.0[0], best.0[1], best.0[2])))
}

/// Nelder-Mead maximisation in three dimensions.
fn nelder_mead_max(
    f: &impl Fn(&[f64; 3]) -> f64,
    start: [f64; 3],
    step: f64,
) -> Result<([f64; 3], f64)> {
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    simplex.push((start, f(&start)));
    for k in 0..3 {
        let mut p = start;
        p[k] += step;
        simplex.push((p, f(&p)));
    }
    for _ in 0..2000 {
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        if simplex[0].1 - simplex[3].1 < 1e-12 {
            return Ok(simplex[0]);
        }
        let centroid = {
            let mut c = [0.0; 3];
            for (p, _) in &simplex[..3] {
                for k in 0..3 {
                    c[k] += p[k] / 3.0;
                }
            }
            c
        };
        let worst = simplex[3];
        let mut reflect = [0.0; 3];
        for k in 0..3 {
            reflect[k] = centroid[k] + ALPHA * (centroid[k] - worst.0[k]);
        }
        let fr = f(&reflect);
        if fr > simplex[0].1 {
            let mut expand = [0.0; 3];
            for k in 0..3 {
                expand[k] = centroid[k] + GAMMA * (reflect[k] - centroid[k]);
            }
            let fe = f(&expand);
            simplex[3] = if fe > fr { (expand, fe) } else { (reflect, fr) };
            continue;
        }
        if fr > simplex[2].1 {
            simplex[3] = (reflect, fr);
            continue;
        }
        let mut contract = [0.0; 3];
        for k in 0..3 {
            contract[k] = centroid[k] + RHO * (worst.0[k] - centroid[k]);
        }
        let fc = f(&contract);
        if fc > worst.1 {
            simplex[3] = (contract, fc);
            continue;
        }
        for i in 1..4 {
            let mut p = [0.0; 3];
            for k in 0..3 {
                p[k] = simplex[0].0[k] + SIGMA * (simplex[i].0[k] - simplex[0].0[k]);
            }
            simplex[i] = (p, f(&p));
        }
    }
    simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
    if simplex[0].1 - simplex[3].1 < 1e-9 {
        Ok(simplex[0])
    } else {
        Err(Error::NonConvergence(format!(
            "simplex spread {:.3e} above 1e-9 after 2000 iterations",
            simplex[0].1 - simplex[3].1
        )))
    }
}

/// Electron input-beam description `ρ_in = [[a, c],[c̄, b]]`.
#[derive(Debug, Clone, Copy)]
pub struct CoherenceSpec {
    pub a: f64,
    pub b: f64,
    pub c: Complex64,
}

impl CoherenceSpec {
    pub fn new(a: f64, b: f64, c: Complex64) -> Result<Self> {
        if a < 0.0 || b < 0.0 || (a + b - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidValue(format!(
                "beam populations a={a}, b={b} must be non-negative and sum to 1"
            )));
        }
        if c.norm() > (a * b).sqrt() + 1e-12 {
            return Err(Error::InvalidValue(format!(
                "|c| = {} exceeds sqrt(ab) = {}",
                c.norm(),
                (a * b).sqrt()
            )));
        }
        Ok(Self { a, b, c })
    }

    /// Builds the spec from populations and the degree of coherence
    /// `γ = |c|/√(ab)` with real positive `c`.
    pub fn from_gamma(a: f64, gamma: f64) -> Result<Self> {
        let b = 1.0 - a;
        Self::new(a, b, Complex64::new(gamma * (a * b).sqrt(), 0.0))
    }

    /// Degree of coherence `|c|/√(ab)`.
    pub fn gamma(&self) -> f64 {
        self.c.norm() / (self.a * self.b).sqrt()
    }
}

/// Known action of the photon-generation channel on the beam populations:
/// `𝓔(|L⟩⟨L|) = |L⟩⟨L| ⊗ ρ₀` and `𝓔(|R⟩⟨R|) = |R⟩⟨R| ⊗ ρ₁`.
#[derive(Debug, Clone)]
pub struct LocalChannelSpec {
    pub rho0: DensityMatrix,
    pub rho1: DensityMatrix,
}

impl LocalChannelSpec {
    pub fn new(rho0: DensityMatrix, rho1: DensityMatrix) -> Result<Self> {
        if rho0.dim() != 2 || rho1.dim() != 2 {
            return Err(Error::Dimension("channel states must be 2x2".into()));
        }
        Ok(Self { rho0, rho1 })
    }

    /// `|side⟩⟨side| ⊗ ρ_side` as a 4x4 operator.
    fn population_term(&self, side: usize) -> ComplexMatrix {
        let mut proj = ComplexMatrix::zeros(2, 2);
        proj.set(side, side, Complex64::ONE);
        let rho = if side == 0 { &self.rho0 } else { &self.rho1 };
        tensor(&proj, rho.mat()).expect("2x2 factors")
    }
}

/// Inverts the effect of imperfect electron-beam coherence on a measured
/// expectation value: subtract the population terms, rescale the coherent
/// remainder by `c′/c` with `c′ = √(ab)` (and `a′ = a`, `b′ = b`), and add
/// the population terms back.
///
/// All traces of Hermitian operators are real, so a complex `c` contributes
/// only through `Re(c′/c)`.
pub fn coherence_correct(
    measured: f64,
    spec: &CoherenceSpec,
    channel: &LocalChannelSpec,
    observable: &ComplexMatrix,
) -> Result<f64> {
    if observable.rows() != 4 || !observable.is_square() {
        return Err(Error::Dimension("observable must be 4x4".into()));
    }
    if spec.c.norm() == 0.0 {
        return Err(Error::ZeroCoherence);
    }
    let t0 = observable.trace_product(&channel.population_term(0)).re;
    let t1 = observable.trace_product(&channel.population_term(1)).re;
    let c_prime = (spec.a * spec.b).sqrt();
    let k = (Complex64::new(c_prime, 0.0) / spec.c).re;
    Ok((measured - spec.a * t0 - spec.b * t1) * k + spec.a * t0 + spec.b * t1)
}

/// The corrected expectation functional as an operator map:
/// `tr(𝒪 ρ_corr) = coherence_correct(tr(𝒪 ρ), …)` for every Hermitian `𝒪`.
/// The result is Hermitian with unit trace but not necessarily positive.
pub fn corrected_state(
    rho: &ComplexMatrix,
    spec: &CoherenceSpec,
    channel: &LocalChannelSpec,
) -> Result<ComplexMatrix> {
    if rho.rows() != 4 || !rho.is_square() {
        return Err(Error::Dimension("state must be 4x4".into()));
    }
    if spec.c.norm() == 0.0 {
        return Err(Error::ZeroCoherence);
    }
    let c_prime = (spec.a * spec.b).sqrt();
    let k = (Complex64::new(c_prime, 0.0) / spec.c).re;
    let p0 = channel.population_term(0);
    let p1 = channel.population_term(1);
    let mut out = rho.scale(Complex64::new(k, 0.0));
    out = &out + &p0.scale(Complex64::new(spec.a * (1.0 - k), 0.0));
    out = &out + &p1.scale(Complex64::new(spec.b * (1.0 - k), 0.0));
    Ok(out)
}

/// Clips negative eigenvalues and renormalises; used to turn a corrected
/// posterior-mean operator back into a valid state before optimising the
/// photon rotation on it.
pub fn clip_to_state(x: &ComplexMatrix) -> Result<DensityMatrix> {
    let (vals, vecs) = herm_eig(x)?;
    let n = x.rows();
    let clipped: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 0.0 {
        return Err(Error::NotPositiveSemidefinite { min_eig: vals[0] });
    }
    let mut out = ComplexMatrix::zeros(n, n);
    for k in 0..n {
        let w = clipped[k] / total;
        if w == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                let v = out[(i, j)] + Complex64::new(w, 0.0) * vecs[(i, k)] * vecs[(j, k)].conj();
                out.set(i, j, v);
            }
        }
    }
    DensityMatrix::new(out)
}
