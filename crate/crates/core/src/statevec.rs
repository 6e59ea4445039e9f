//! Dense complex linear algebra over the four-dimensional single-photon
//! two-qubit Hilbert space.
//!
//! Vectors are stored in the physical basis order `|Rv⟩, |Lv⟩, |Lh⟩, |Rh⟩`.
//! State equality is always phase-insensitive: two states describe the same
//! ray when `|⟨a|b⟩| = 1`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::rng::RandomStream;

/// Hilbert-space dimension.
pub const DIM: usize = 4;

/// Tolerance for unitarity, Hermiticity and orthonormality checks.
pub const ALGEBRA_TOL: f64 = 1e-12;

/// Tolerance for probability sums.
pub const PROBABILITY_TOL: f64 = 1e-10;

/// Tolerance for normalization of vectors handed in from outside.
pub const NORM_TOL: f64 = 1e-12;

const MIN_DRAW_NORM: f64 = 1e-8;

pub type ComplexAmplitude = Complex64;

const ZERO: ComplexAmplitude = Complex64::new(0.0, 0.0);
const ONE: ComplexAmplitude = Complex64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("amplitudes contain a non-finite value")]
    NonFinite,
    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("vectors are not orthonormal (max deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("operator is not a Hermitian idempotent projector (max deviation {0:e})")]
    NotAProjector(f64),
}

/// Normalized 4-component state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateVector {
    amps: [ComplexAmplitude; DIM],
}

impl StateVector {
    /// Accepts amplitudes that are already normalized within [`NORM_TOL`].
    pub fn new(amps: [ComplexAmplitude; DIM]) -> Result<Self, StateError> {
        Self::with_tolerance(amps, NORM_TOL)
    }

    /// Accepts amplitudes normalized within `tol`, without rescaling them.
    pub fn with_tolerance(amps: [ComplexAmplitude; DIM], tol: f64) -> Result<Self, StateError> {
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(StateError::NonFinite);
        }
        let n = norm_sqr(&amps);
        if (n - 1.0).abs() > tol {
            return Err(StateError::NotNormalized(n));
        }
        Ok(Self { amps })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(amps: [ComplexAmplitude; DIM]) -> Result<Self, StateError> {
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(StateError::NonFinite);
        }
        let n = norm_sqr(&amps).sqrt();
        if n == 0.0 {
            return Err(StateError::ZeroVector);
        }
        Ok(Self {
            amps: amps.map(|a| a / n),
        })
    }

    /// Computational unit vector `e_{index+1}`.
    pub fn unit(index: usize) -> Self {
        let mut amps = [ZERO; DIM];
        amps[index] = ONE;
        Self { amps }
    }

    pub fn amplitudes(&self) -> &[ComplexAmplitude; DIM] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amps)
    }

    /// Multiplies by a global phase (or any unit-modulus factor).
    pub fn with_phase(&self, phase: ComplexAmplitude) -> Self {
        Self {
            amps: self.amps.map(|a| a * phase),
        }
    }

    /// Phase-insensitive equality: `| |⟨self|other⟩| - 1 | <= tol`.
    pub fn same_ray(&self, other: &StateVector, tol: f64) -> bool {
        (inner(self, other).norm() - 1.0).abs() <= tol
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.amps.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{:.6}{:+.6}i", a.re, a.im)?;
        }
        write!(f, ")")
    }
}

fn norm_sqr(amps: &[ComplexAmplitude; DIM]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

/// `⟨a|b⟩`, conjugate-linear in `a`.
pub fn inner(a: &StateVector, b: &StateVector) -> ComplexAmplitude {
    a.amps.iter().zip(b.amps.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// `|⟨outcome|state⟩|²`, clamped to `[0, 1]`.
pub fn born_probability(state: &StateVector, outcome: &StateVector) -> f64 {
    inner(outcome, state).norm_sqr().clamp(0.0, 1.0)
}

/// Dense 4×4 complex matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Operator {
    entries: [[ComplexAmplitude; DIM]; DIM],
}

impl Operator {
    pub fn from_entries(entries: [[ComplexAmplitude; DIM]; DIM]) -> Self {
        Self { entries }
    }

    pub fn zero() -> Self {
        Self {
            entries: [[ZERO; DIM]; DIM],
        }
    }

    pub fn identity() -> Self {
        let mut op = Self::zero();
        for i in 0..DIM {
            op.entries[i][i] = ONE;
        }
        op
    }

    /// `|a⟩⟨b|`
    pub fn outer(a: &StateVector, b: &StateVector) -> Self {
        let mut op = Self::zero();
        for i in 0..DIM {
            for j in 0..DIM {
                op.entries[i][j] = a.amps[i] * b.amps[j].conj();
            }
        }
        op
    }

    /// Orthogonal projector onto the span of mutually orthonormal `states`.
    pub fn projector_onto<'a>(states: impl IntoIterator<Item = &'a StateVector>) -> Self {
        states.into_iter().fold(Self::zero(), |acc, s| acc + Self::outer(s, s))
    }

    /// Operator whose columns are the given vectors.
    pub fn from_columns(columns: &[StateVector; DIM]) -> Self {
        let mut op = Self::zero();
        for (j, col) in columns.iter().enumerate() {
            for i in 0..DIM {
                op.entries[i][j] = col.amps[i];
            }
        }
        op
    }

    pub fn entries(&self) -> &[[ComplexAmplitude; DIM]; DIM] {
        &self.entries
    }

    pub fn entry(&self, row: usize, col: usize) -> ComplexAmplitude {
        self.entries[row][col]
    }

    pub fn column(&self, col: usize) -> [ComplexAmplitude; DIM] {
        std::array::from_fn(|i| self.entries[i][col])
    }

    pub fn adjoint(&self) -> Self {
        let mut op = Self::zero();
        for i in 0..DIM {
            for j in 0..DIM {
                op.entries[i][j] = self.entries[j][i].conj();
            }
        }
        op
    }

    pub fn scale(&self, factor: ComplexAmplitude) -> Self {
        Self {
            entries: self.entries.map(|row| row.map(|x| x * factor)),
        }
    }

    /// Raw (unnormalized) image of `state`.
    pub fn apply(&self, state: &StateVector) -> [ComplexAmplitude; DIM] {
        std::array::from_fn(|i| (0..DIM).map(|j| self.entries[i][j] * state.amps[j]).sum())
    }

    /// `⟨state|self|state⟩`, real part.
    pub fn expectation(&self, state: &StateVector) -> f64 {
        let image = self.apply(state);
        state
            .amps
            .iter()
            .zip(image.iter())
            .map(|(a, b)| a.conj() * b)
            .sum::<ComplexAmplitude>()
            .re
    }

    pub fn trace(&self) -> ComplexAmplitude {
        (0..DIM).map(|i| self.entries[i][i]).sum()
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        (*self - *other).max_abs()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// `max |(U U†) - I|`
    pub fn unitarity_deviation(&self) -> f64 {
        (*self * self.adjoint()).max_abs_diff(&Self::identity())
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    /// `max(|P² - P|, |P - P†|)`
    pub fn projector_deviation(&self) -> f64 {
        (*self * *self).max_abs_diff(self).max(self.hermiticity_deviation())
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_deviation() <= tol
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_deviation() <= tol
    }

    pub fn is_projector(&self, tol: f64) -> bool {
        self.projector_deviation() <= tol
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        let mut out = self;
        for i in 0..DIM {
            for j in 0..DIM {
                out.entries[i][j] += rhs.entries[i][j];
            }
        }
        out
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        let mut out = self;
        for i in 0..DIM {
            for j in 0..DIM {
                out.entries[i][j] -= rhs.entries[i][j];
            }
        }
        out
    }
}

impl Mul for Operator {
    type Output = Operator;
    fn mul(self, rhs: Operator) -> Operator {
        let mut out = Operator::zero();
        for i in 0..DIM {
            for j in 0..DIM {
                out.entries[i][j] = (0..DIM).map(|k| self.entries[i][k] * rhs.entries[k][j]).sum();
            }
        }
        out
    }
}

/// Four mutually orthonormal states.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrthonormalBasis {
    states: [StateVector; DIM],
}

impl OrthonormalBasis {
    pub fn new(states: [StateVector; DIM]) -> Result<Self, StateError> {
        let basis = Self { states };
        let dev = basis.orthonormality_deviation();
        if dev > ALGEBRA_TOL {
            return Err(StateError::NotOrthonormal(dev));
        }
        Ok(basis)
    }

    /// `e1..e4`.
    pub fn computational() -> Self {
        Self {
            states: std::array::from_fn(StateVector::unit),
        }
    }

    /// Basis formed by the columns of a unitary operator.
    pub fn from_unitary_columns(op: &Operator) -> Result<Self, StateError> {
        let states = (0..DIM)
            .map(|j| StateVector::with_tolerance(op.column(j), ALGEBRA_TOL))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(states.try_into().expect("four columns"))
    }

    pub fn states(&self) -> &[StateVector; DIM] {
        &self.states
    }

    pub fn state(&self, index: usize) -> &StateVector {
        &self.states[index]
    }

    /// `max |⟨s_i|s_j⟩ - δ_ij|`
    pub fn orthonormality_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..DIM {
            for j in 0..DIM {
                let expected = if i == j { ONE } else { ZERO };
                dev = dev.max((inner(&self.states[i], &self.states[j]) - expected).norm());
            }
        }
        dev
    }

    /// `Σ_k |s_k⟩⟨s_k|`
    pub fn completeness_sum(&self) -> Operator {
        Operator::projector_onto(self.states.iter())
    }

    /// Born probabilities of `state` over the basis, in index order.
    pub fn probabilities(&self, state: &StateVector) -> [f64; DIM] {
        std::array::from_fn(|k| born_probability(state, &self.states[k]))
    }
}

/// Inverse-CDF sample over `probs` (clamped to `[0,1]` and renormalized).
pub(crate) fn sample_index(probs: &[f64], rng: &mut RandomStream) -> usize {
    let clamped: Vec<f64> = probs.iter().map(|p| p.clamp(0.0, 1.0)).collect();
    let total: f64 = clamped.iter().sum();
    let u = rng.uniform() * total;
    let mut cumulative = 0.0;
    for (k, p) in clamped.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return k;
        }
    }
    // u landed on the rounding gap at the top; take the last outcome that can occur
    clamped.iter().rposition(|&p| p > 0.0).unwrap_or(clamped.len() - 1)
}

/// Projective measurement in `basis`; returns the outcome index and the
/// collapsed state (the basis vector itself).
pub fn measure(state: &StateVector, basis: &OrthonormalBasis, rng: &mut RandomStream) -> (usize, StateVector) {
    let probs = basis.probabilities(state);
    let k = sample_index(&probs, rng);
    (k, basis.states[k])
}

/// Two-outcome measurement `{P, I-P}`. Returns the outcome, the collapsed
/// state, and the probability of the `true` branch.
pub fn project(
    state: &StateVector,
    projector: &Operator,
    rng: &mut RandomStream,
) -> Result<(bool, StateVector, f64), StateError> {
    let dev = projector.projector_deviation();
    if dev > ALGEBRA_TOL {
        return Err(StateError::NotAProjector(dev));
    }
    let p = projector.expectation(state).clamp(0.0, 1.0);
    let outcome = rng.uniform() < p;
    let image = projector.apply(state);
    let collapsed = if outcome {
        image
    } else {
        std::array::from_fn(|i| state.amps[i] - image[i])
    };
    Ok((outcome, StateVector::normalized(collapsed)?, p))
}

fn gaussian_amplitude(rng: &mut RandomStream) -> ComplexAmplitude {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im)
}

/// Gram–Schmidt over `columns` in order (two passes per vector). Returns
/// `None` when an intermediate vector has norm below `1e-8`.
pub fn gram_schmidt(columns: [[ComplexAmplitude; DIM]; DIM]) -> Option<OrthonormalBasis> {
    let mut done: Vec<StateVector> = Vec::with_capacity(DIM);
    for col in columns {
        let mut v = col;
        for _ in 0..2 {
            for q in &done {
                let overlap: ComplexAmplitude = q.amps.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
                for (x, a) in v.iter_mut().zip(&q.amps) {
                    *x -= overlap * a;
                }
            }
        }
        if norm_sqr(&v).sqrt() < MIN_DRAW_NORM {
            return None;
        }
        done.push(StateVector::normalized(v).ok()?);
    }
    Some(OrthonormalBasis {
        states: done.try_into().ok()?,
    })
}

/// Complex Gaussian vector (independent standard normal real and imaginary parts).
pub fn gaussian_amplitudes(rng: &mut RandomStream) -> [ComplexAmplitude; DIM] {
    std::array::from_fn(|_| gaussian_amplitude(rng))
}

/// Haar-random basis: Gram–Schmidt over the columns of a complex Gaussian
/// matrix, redrawing if any intermediate vector is nearly degenerate.
pub fn random_orthonormal_basis(rng: &mut RandomStream) -> OrthonormalBasis {
    loop {
        let columns: [[ComplexAmplitude; DIM]; DIM] = std::array::from_fn(|_| gaussian_amplitudes(rng));
        if let Some(basis) = gram_schmidt(columns) {
            return basis;
        }
    }
}

/// Uniformly random pure state (normalized complex Gaussian vector).
pub fn random_state(rng: &mut RandomStream) -> StateVector {
    loop {
        let amps = gaussian_amplitudes(rng);
        if norm_sqr(&amps).sqrt() >= MIN_DRAW_NORM {
            return StateVector::normalized(amps).expect("nonzero vector");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> ComplexAmplitude {
        Complex64::new(re, im)
    }

    #[test]
    fn inner_of_unit_vectors() {
        let e1 = StateVector::unit(0);
        let e2 = StateVector::unit(1);
        assert_eq!(inner(&e1, &e1), c(1.0, 0.0));
        assert_eq!(inner(&e1, &e2), c(0.0, 0.0));
    }

    #[test]
    fn inner_is_conjugate_linear_in_first_argument() {
        let s = StateVector::normalized([c(1.0, 1.0), c(0.0, 2.0), c(-1.0, 0.5), c(0.3, 0.0)]).unwrap();
        let t = StateVector::normalized([c(0.0, 1.0), c(1.0, 0.0), c(0.0, 0.0), c(2.0, -1.0)]).unwrap();
        let phase = c(0.0, 1.0);
        let lhs = inner(&s.with_phase(phase), &t);
        assert!((lhs - phase.conj() * inner(&s, &t)).norm() < 1e-15);
    }

    #[test]
    fn self_overlap_is_one() {
        let mut rng = RandomStream::from_seed(1);
        let psi = random_state(&mut rng);
        assert!((born_probability(&psi, &psi) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_unnormalized_and_nonfinite() {
        assert!(matches!(
            StateVector::new([c(1.0, 0.0), c(1.0, 0.0), ZERO, ZERO]),
            Err(StateError::NotNormalized(_))
        ));
        assert_eq!(
            StateVector::new([c(f64::NAN, 0.0), ZERO, ZERO, ZERO]),
            Err(StateError::NonFinite)
        );
        assert_eq!(StateVector::normalized([ZERO; DIM]), Err(StateError::ZeroVector));
    }

    #[test]
    fn eigenstate_measures_with_certainty() {
        let basis = OrthonormalBasis::computational();
        let mut rng = RandomStream::from_seed(3);
        for _ in 0..100 {
            let (k, collapsed) = measure(&StateVector::unit(2), &basis, &mut rng);
            assert_eq!(k, 2);
            assert_eq!(collapsed, StateVector::unit(2));
        }
    }

    #[test]
    fn zero_amplitude_outcome_never_occurs() {
        let psi = StateVector::normalized([ZERO, c(1.0, 0.0), c(0.0, 1.0), c(1.0, 1.0)]).unwrap();
        let basis = OrthonormalBasis::computational();
        let mut rng = RandomStream::from_seed(4);
        for _ in 0..10_000 {
            assert_ne!(measure(&psi, &basis, &mut rng).0, 0);
        }
    }

    #[test]
    fn sample_index_guards_rounding_artifacts() {
        let mut rng = RandomStream::from_seed(5);
        for _ in 0..1000 {
            let k = sample_index(&[-1e-17, 0.5, 0.5 + 1e-16, 0.0], &mut rng);
            assert!(k == 1 || k == 2);
        }
    }

    fn p_right() -> Operator {
        Operator::projector_onto([StateVector::unit(0), StateVector::unit(3)].iter())
    }

    #[test]
    fn project_keeps_eigenstates() {
        let mut rng = RandomStream::from_seed(6);
        let rv = StateVector::unit(0);
        let (outcome, collapsed, p) = project(&rv, &p_right(), &mut rng).unwrap();
        assert!(outcome);
        assert!((p - 1.0).abs() < 1e-15);
        assert!(collapsed.same_ray(&rv, 1e-10));

        let ls = StateVector::normalized([ZERO, c(1.0, 0.0), c(1.0, 0.0), ZERO]).unwrap();
        let (outcome, collapsed, p) = project(&ls, &p_right(), &mut rng).unwrap();
        assert!(!outcome);
        assert_eq!(p, 0.0);
        assert!(collapsed.same_ray(&ls, 1e-10));
    }

    #[test]
    fn project_superposition_half_and_half() {
        let psi = StateVector::normalized([c(1.0, 0.0), c(1.0, 0.0), ZERO, ZERO]).unwrap();
        let mut rng = RandomStream::from_seed(8);
        let n = 100_000;
        let mut hits = 0;
        for _ in 0..n {
            let (outcome, collapsed, p) = project(&psi, &p_right(), &mut rng).unwrap();
            assert!((p - 0.5).abs() < 1e-15);
            if outcome {
                hits += 1;
                assert!(collapsed.same_ray(&StateVector::unit(0), 1e-12));
            } else {
                assert!(collapsed.same_ray(&StateVector::unit(1), 1e-12));
            }
        }
        let sigma = (0.25 / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - 0.5).abs() < 3.0 * sigma);
    }

    #[test]
    fn project_rejects_non_projector() {
        let mut rng = RandomStream::from_seed(9);
        let not_p = Operator::identity().scale(c(0.5, 0.0));
        assert!(matches!(
            project(&StateVector::unit(0), &not_p, &mut rng),
            Err(StateError::NotAProjector(_))
        ));
    }

    #[test]
    fn random_basis_is_orthonormal_and_seed_dependent() {
        let mut rng = RandomStream::from_seed(10);
        for _ in 0..1000 {
            let b = random_orthonormal_basis(&mut rng);
            assert!(b.orthonormality_deviation() < ALGEBRA_TOL);
        }
        let a = random_orthonormal_basis(&mut RandomStream::from_seed(1));
        let b = random_orthonormal_basis(&mut RandomStream::from_seed(2));
        assert_ne!(a, b);
    }

    #[test]
    fn random_state_is_normalized_and_seed_dependent() {
        let a = random_state(&mut RandomStream::from_seed(1));
        let b = random_state(&mut RandomStream::from_seed(2));
        assert!((a.norm_sqr() - 1.0).abs() < 1e-12);
        assert!(!a.same_ray(&b, 1e-6));
    }

    #[test]
    fn operator_algebra_basics() {
        let h = Operator::from_entries([
            [ZERO, c(0.0, 1.0), ZERO, ZERO],
            [c(0.0, -1.0), ZERO, ZERO, ZERO],
            [ZERO, ZERO, ZERO, c(1.0, 0.0)],
            [ZERO, ZERO, c(1.0, 0.0), ZERO],
        ]);
        assert!(h.is_hermitian(1e-15));
        assert!(h.is_unitary(1e-15));
        assert!((h * h).max_abs_diff(&Operator::identity()) < 1e-15);
        assert!(p_right().is_projector(1e-15));
        assert_eq!(p_right().trace(), c(2.0, 0.0));
    }
}
