//! Eavesdropper models and the analytic security functionals.
//!
//! Every strategy is described as a quantum instrument: for an incoming
//! state it yields a list of branches, each with a probability, an
//! observation and the state forwarded to Bob. The analytic error rate,
//! the pre-key leakage and the post-key posterior all work off that one
//! description.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::rng::RandomStream;
use crate::scheme::{self, BasisPair, BitValue, SchemeParams};
use crate::statevec::{
    self, born_probability, gaussian_amplitudes, gram_schmidt, ComplexAmplitude, Operator, OrthonormalBasis,
    StateError, StateVector, ALGEBRA_TOL, DIM,
};

/// Likelihoods at or below this are treated as impossible.
pub const LIKELIHOOD_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversaryError {
    #[error("invalid QND projector: {0}")]
    InvalidProjector(StateError),
    #[error("forwarded state {index} is invalid: {source}")]
    InvalidForwardState { index: usize, source: StateError },
    #[error("scheme {0} has no nondemolition backdoor")]
    NoBackdoor(SchemeParams),
    #[error("records, key and truth are misaligned: {0}")]
    Misaligned(String),
    #[error("invalid strategy specification {0:?}")]
    BadSpec(String),
    #[error("operation requires an eavesdropper that observes the photons")]
    NoObservations,
}

/// What Eve sends on after measuring in `{|E_k⟩}`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Forwarding {
    /// The detected basis state `|E_k⟩` itself.
    AsDetected,
    /// A prescribed state `F_k` per outcome `k`.
    Fixed([StateVector; DIM]),
}

/// How [`random_strategy`] chooses forwarded states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ForwardingMode {
    AsDetected,
    RandomFixed,
}

impl ForwardingMode {
    pub fn name(self) -> &'static str {
        match self {
            ForwardingMode::AsDetected => "as-detected",
            ForwardingMode::RandomFixed => "random-fixed",
        }
    }
}

impl fmt::Display for ForwardingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ForwardingMode {
    type Err = AdversaryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "as-detected" => Ok(ForwardingMode::AsDetected),
            "random-fixed" | "fixed" => Ok(ForwardingMode::RandomFixed),
            _ => Err(AdversaryError::BadSpec(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum EveStrategy {
    None,
    InterceptResend {
        measurement: OrthonormalBasis,
        forwarding: Forwarding,
    },
    Qnd {
        projector: Operator,
    },
}

/// Eve's classical record of one interaction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Observation {
    Outcome(usize),
    Projector(bool),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EveRecord {
    pub position: u32,
    pub observation: Observation,
    pub forwarded: StateVector,
}

/// One branch of Eve's instrument.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Branch {
    pub probability: f64,
    pub forwarded: StateVector,
}

impl EveStrategy {
    pub fn intercept_resend(measurement: OrthonormalBasis, forwarding: Forwarding) -> Result<Self, AdversaryError> {
        if let Forwarding::Fixed(states) = &forwarding {
            for (index, s) in states.iter().enumerate() {
                StateVector::new(*s.amplitudes())
                    .map_err(|source| AdversaryError::InvalidForwardState { index, source })?;
            }
        }
        Ok(EveStrategy::InterceptResend {
            measurement,
            forwarding,
        })
    }

    pub fn qnd(projector: Operator) -> Result<Self, AdversaryError> {
        let dev = projector.projector_deviation();
        if dev > ALGEBRA_TOL {
            return Err(AdversaryError::InvalidProjector(StateError::NotAProjector(dev)));
        }
        Ok(EveStrategy::Qnd { projector })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EveStrategy::None => "none",
            EveStrategy::InterceptResend { .. } => "intercept-resend",
            EveStrategy::Qnd { .. } => "qnd",
        }
    }

    fn forwarded_for(&self, k: usize) -> StateVector {
        match self {
            EveStrategy::InterceptResend {
                measurement,
                forwarding: Forwarding::AsDetected,
            } => *measurement.state(k),
            EveStrategy::InterceptResend {
                forwarding: Forwarding::Fixed(states),
                ..
            } => states[k],
            _ => unreachable!("only intercept-resend has indexed outcomes"),
        }
    }

    /// `P(observation | state)`.
    pub fn likelihood(&self, observation: Observation, state: &StateVector) -> f64 {
        match (self, observation) {
            (EveStrategy::InterceptResend { measurement, .. }, Observation::Outcome(k)) => {
                born_probability(state, measurement.state(k))
            }
            (EveStrategy::Qnd { projector }, Observation::Projector(hit)) => {
                let p = projector.expectation(state).clamp(0.0, 1.0);
                if hit {
                    p
                } else {
                    1.0 - p
                }
            }
            _ => 0.0,
        }
    }

    /// Branches of the instrument applied to `state`; zero-probability
    /// projector branches are dropped.
    pub(crate) fn branches(&self, state: &StateVector) -> Vec<Branch> {
        match self {
            EveStrategy::None => vec![Branch {
                probability: 1.0,
                forwarded: *state,
            }],
            EveStrategy::InterceptResend { measurement, .. } => (0..DIM)
                .map(|k| Branch {
                    probability: born_probability(state, measurement.state(k)),
                    forwarded: self.forwarded_for(k),
                })
                .collect(),
            EveStrategy::Qnd { projector } => {
                let image = projector.apply(state);
                let rest: [ComplexAmplitude; DIM] = std::array::from_fn(|i| state.amplitudes()[i] - image[i]);
                let p = projector.expectation(state).clamp(0.0, 1.0);
                [(p, image), (1.0 - p, rest)]
                    .into_iter()
                    .filter(|(prob, _)| *prob > LIKELIHOOD_TOL)
                    .filter_map(|(prob, amps)| {
                        StateVector::normalized(amps).ok().map(|forwarded| Branch {
                            probability: prob,
                            forwarded,
                        })
                    })
                    .collect()
            }
        }
    }

    /// The distinct observations this strategy can produce.
    pub fn observation_alphabet(&self) -> Vec<Observation> {
        match self {
            EveStrategy::None => Vec::new(),
            EveStrategy::InterceptResend { .. } => (0..DIM).map(Observation::Outcome).collect(),
            EveStrategy::Qnd { .. } => vec![Observation::Projector(true), Observation::Projector(false)],
        }
    }
}

/// Apply the strategy to one photon in flight.
pub fn eve_intercept(
    position: u32,
    state: &StateVector,
    strategy: &EveStrategy,
    rng: &mut RandomStream,
) -> (StateVector, Option<EveRecord>) {
    let (observation, forwarded) = match strategy {
        EveStrategy::None => return (*state, None),
        EveStrategy::InterceptResend { measurement, .. } => {
            let (k, _) = statevec::measure(state, measurement, rng);
            (Observation::Outcome(k), strategy.forwarded_for(k))
        }
        EveStrategy::Qnd { projector } => {
            let (hit, collapsed, _) = statevec::project(state, projector, rng).expect("validated at construction");
            (Observation::Projector(hit), collapsed)
        }
    };
    (
        forwarded,
        Some(EveRecord {
            position,
            observation,
            forwarded,
        }),
    )
}

/// Bob's error probability when `forwarded` arrives for a photon Alice
/// prepared as `(bit, cipher)`, averaged over his fair basis choice.
fn bob_error(bases: &BasisPair, bit: BitValue, cipher: usize, forwarded: &StateVector) -> f64 {
    let on_b = born_probability(forwarded, bases.b().state(cipher));
    let on_c = born_probability(forwarded, bases.c().state(cipher));
    match bit {
        BitValue::Plus => 0.5 * (1.0 - on_b) + 0.5 * on_c,
        BitValue::Minus => 0.5 * (1.0 - on_c) + 0.5 * on_b,
    }
}

/// Exact control-bit error rate induced by `strategy`, averaged over
/// Alice's eight equiprobable signal states, Eve's instrument and Bob's
/// basis choice.
pub fn analytic_error_rate(strategy: &EveStrategy, bases: &BasisPair) -> f64 {
    if matches!(strategy, EveStrategy::None) {
        return 0.0;
    }
    let mut total = 0.0;
    for bit in [BitValue::Plus, BitValue::Minus] {
        for n in 0..DIM {
            let prepared = bases.signal_state(bit, n);
            for branch in strategy.branches(prepared) {
                total += branch.probability * bob_error(bases, bit, n, &branch.forwarded);
            }
        }
    }
    total / 8.0
}

/// Closed form for forward-as-detected interception in basis `{|E_k⟩}`:
/// `1/2 − (1/16) Σ_n Σ_k (|⟨E_k|B_n⟩|² − |⟨E_k|C_n⟩|²)²`.
pub fn as_detected_error_rate(measurement: &OrthonormalBasis, bases: &BasisPair) -> f64 {
    let mut sum = 0.0;
    for n in 0..DIM {
        for e in measurement.states() {
            let d = born_probability(bases.b().state(n), e) - born_probability(bases.c().state(n), e);
            sum += d * d;
        }
    }
    0.5 - sum / 16.0
}

/// Lower bound on the intercept-resend error rate,
/// `(1/4)(1 − a1⁴ − a2⁴ − a3⁴)`.
pub fn error_bound(params: &SchemeParams) -> f64 {
    0.25 * (1.0 - params.sum_fourth_powers())
}

/// Measure in the `B` basis and forward what was found.
pub fn optimal_strategy(bases: &BasisPair) -> EveStrategy {
    EveStrategy::InterceptResend {
        measurement: *bases.b(),
        forwarding: Forwarding::AsDetected,
    }
}

/// Haar-random measurement basis, with random forwarded states in
/// [`ForwardingMode::RandomFixed`].
pub fn random_strategy(rng: &mut RandomStream, mode: ForwardingMode) -> EveStrategy {
    let measurement = statevec::random_orthonormal_basis(rng);
    let forwarding = match mode {
        ForwardingMode::AsDetected => Forwarding::AsDetected,
        ForwardingMode::RandomFixed => Forwarding::Fixed(std::array::from_fn(|_| statevec::random_state(rng))),
    };
    EveStrategy::InterceptResend {
        measurement,
        forwarding,
    }
}

/// Nondemolition attack on a backdoored scheme.
pub fn qnd_strategy(params: &SchemeParams) -> Result<EveStrategy, AdversaryError> {
    let door = scheme::qnd_vulnerability(params).ok_or(AdversaryError::NoBackdoor(*params))?;
    EveStrategy::qnd(door.projector)
}

/// Total-variation distance between Eve's observation distributions for
/// `+` and `−` photons before the key is announced.
pub fn prekey_leakage(strategy: &EveStrategy, bases: &BasisPair) -> f64 {
    let alphabet = strategy.observation_alphabet();
    let distribution = |bit: BitValue| -> Vec<f64> {
        alphabet
            .iter()
            .map(|&obs| {
                (0..DIM)
                    .map(|n| strategy.likelihood(obs, bases.signal_state(bit, n)))
                    .sum::<f64>()
                    / DIM as f64
            })
            .collect()
    };
    let plus = distribution(BitValue::Plus);
    let minus = distribution(BitValue::Minus);
    0.5 * plus.iter().zip(&minus).map(|(p, m)| (p - m).abs()).sum::<f64>()
}

/// Outcome of Eve's post-announcement inference.
#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryReport {
    pub recovered_bits: Vec<BitValue>,
    pub correct_fraction: f64,
    /// Fraction of positions whose posterior was exactly degenerate.
    pub certain_fraction: f64,
    /// Positions with equal likelihoods, resolved to `+`.
    pub ties: usize,
}

impl RecoveryReport {
    fn empty() -> Self {
        Self {
            recovered_bits: Vec::new(),
            correct_fraction: 0.0,
            certain_fraction: 0.0,
            ties: 0,
        }
    }
}

/// Bayesian decoding of Eve's records once the cipher sequence is public.
/// Record `i` must describe position `i` of `key` and `bits_truth`.
pub fn post_key_recover(
    records: &[EveRecord],
    key: &[u8],
    bits_truth: &[BitValue],
    bases: &BasisPair,
    strategy: &EveStrategy,
) -> Result<RecoveryReport, AdversaryError> {
    if records.is_empty() {
        return Ok(RecoveryReport::empty());
    }
    if records.len() != key.len() || key.len() != bits_truth.len() {
        return Err(AdversaryError::Misaligned(format!(
            "{} records, {} ciphers, {} truth bits",
            records.len(),
            key.len(),
            bits_truth.len()
        )));
    }
    let mut recovered = Vec::with_capacity(records.len());
    let (mut correct, mut certain, mut ties) = (0usize, 0usize, 0usize);
    for (i, record) in records.iter().enumerate() {
        if record.position as usize != i {
            return Err(AdversaryError::Misaligned(format!(
                "record {} carries position {}",
                i, record.position
            )));
        }
        let cipher = key[i] as usize;
        if cipher >= DIM {
            return Err(AdversaryError::Misaligned(format!("cipher {} at {}", cipher, i)));
        }
        let l_plus = strategy.likelihood(record.observation, bases.signal_state(BitValue::Plus, cipher));
        let l_minus = strategy.likelihood(record.observation, bases.signal_state(BitValue::Minus, cipher));
        let bit = if (l_plus - l_minus).abs() <= LIKELIHOOD_TOL {
            ties += 1;
            BitValue::Plus
        } else if l_plus > l_minus {
            BitValue::Plus
        } else {
            BitValue::Minus
        };
        if (l_plus <= LIKELIHOOD_TOL) != (l_minus <= LIKELIHOOD_TOL) {
            certain += 1;
        }
        if bit == bits_truth[i] {
            correct += 1;
        }
        recovered.push(bit);
    }
    let n = records.len() as f64;
    Ok(RecoveryReport {
        recovered_bits: recovered,
        correct_fraction: correct as f64 / n,
        certain_fraction: certain as f64 / n,
        ties,
    })
}

/// Result of the derivative-free falsification search.
#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub best_rate: f64,
    pub best_strategy: EveStrategy,
    pub evaluations: usize,
}

/// Random-perturbation coordinate descent over Eve's measurement basis and
/// her four forwarded states. The first restart starts at
/// [`optimal_strategy`]; the rest start from random fixed-forwarding
/// strategies. Only probes the bound, it does not claim an optimum.
pub fn search_min_error_rate(bases: &BasisPair, restarts: usize, rng: &mut RandomStream) -> SearchOutcome {
    const MAX_ITER: usize = 400;
    const MIN_STEP: f64 = 1e-4;

    let mut best: Option<(f64, OrthonormalBasis, [StateVector; DIM])> = None;
    let mut evaluations = 0;
    for restart in 0..restarts {
        let (mut basis, mut fwd) = if restart == 0 {
            (*bases.b(), *bases.b().states())
        } else {
            (
                statevec::random_orthonormal_basis(rng),
                std::array::from_fn(|_| statevec::random_state(rng)),
            )
        };
        let eval = |basis: &OrthonormalBasis, fwd: &[StateVector; DIM]| {
            analytic_error_rate(
                &EveStrategy::InterceptResend {
                    measurement: *basis,
                    forwarding: Forwarding::Fixed(*fwd),
                },
                bases,
            )
        };
        let mut rate = eval(&basis, &fwd);
        evaluations += 1;
        let mut step = 0.3;
        let mut iter = 0;
        while iter < MAX_ITER && step > MIN_STEP {
            let mut improved = false;
            for coord in 0..=DIM {
                iter += 1;
                let (cand_basis, cand_fwd) = if coord == 0 {
                    let cols: [[ComplexAmplitude; DIM]; DIM] = std::array::from_fn(|j| {
                        let g = gaussian_amplitudes(rng);
                        std::array::from_fn(|i| basis.state(j).amplitudes()[i] + g[i] * step)
                    });
                    match gram_schmidt(cols) {
                        Some(b) => (b, fwd),
                        None => continue,
                    }
                } else {
                    let k = coord - 1;
                    let g = gaussian_amplitudes(rng);
                    let amps = std::array::from_fn(|i| fwd[k].amplitudes()[i] + g[i] * step);
                    let Ok(s) = StateVector::normalized(amps) else { continue };
                    let mut f = fwd;
                    f[k] = s;
                    (basis, f)
                };
                let cand = eval(&cand_basis, &cand_fwd);
                evaluations += 1;
                if cand < rate {
                    rate = cand;
                    basis = cand_basis;
                    fwd = cand_fwd;
                    improved = true;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if best.as_ref().is_none_or(|(r, _, _)| rate < *r) {
            best = Some((rate, basis, fwd));
        }
    }
    let (best_rate, basis, fwd) = best.expect("at least one restart");
    SearchOutcome {
        best_rate,
        best_strategy: EveStrategy::InterceptResend {
            measurement: basis,
            forwarding: Forwarding::Fixed(fwd),
        },
        evaluations,
    }
}

/// Strategy as written in configuration files and on the command line:
/// `none | optimal | qnd | random:<seed> | random-fixed:<seed>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EveSpec {
    None,
    Optimal,
    Qnd,
    Random(u64),
    RandomFixed(u64),
}

impl EveSpec {
    pub fn resolve(&self, bases: &BasisPair) -> Result<EveStrategy, AdversaryError> {
        Ok(match *self {
            EveSpec::None => EveStrategy::None,
            EveSpec::Optimal => optimal_strategy(bases),
            EveSpec::Qnd => qnd_strategy(bases.params())?,
            EveSpec::Random(seed) => random_strategy(&mut RandomStream::from_seed(seed), ForwardingMode::AsDetected),
            EveSpec::RandomFixed(seed) => {
                random_strategy(&mut RandomStream::from_seed(seed), ForwardingMode::RandomFixed)
            }
        })
    }
}

impl FromStr for EveSpec {
    type Err = AdversaryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let seed = |rest: &str| {
            rest.trim()
                .parse::<u64>()
                .map_err(|_| AdversaryError::BadSpec(s.to_string()))
        };
        match t.as_str() {
            "none" => Ok(EveSpec::None),
            "optimal" => Ok(EveSpec::Optimal),
            "qnd" => Ok(EveSpec::Qnd),
            _ => {
                if let Some(rest) = t.strip_prefix("random-fixed:") {
                    Ok(EveSpec::RandomFixed(seed(rest)?))
                } else if let Some(rest) = t.strip_prefix("random:") {
                    Ok(EveSpec::Random(seed(rest)?))
                } else {
                    Err(AdversaryError::BadSpec(s.to_string()))
                }
            }
        }
    }
}

impl fmt::Display for EveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EveSpec::None => f.write_str("none"),
            EveSpec::Optimal => f.write_str("optimal"),
            EveSpec::Qnd => f.write_str("qnd"),
            EveSpec::Random(s) => write!(f, "random:{s}"),
            EveSpec::RandomFixed(s) => write!(f, "random-fixed:{s}"),
        }
    }
}
