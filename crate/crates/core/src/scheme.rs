//! The coding scheme: the rotation matrix `A`, the `B`/`C` basis pair,
//! Bob's outcome probability table, the concealment check and the search
//! for nondemolition backdoors.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

use crate::rng::RandomStream;
use crate::statevec::{born_probability, ComplexAmplitude, Operator, OrthonormalBasis, StateVector, ALGEBRA_TOL, DIM};

/// Threshold below which an entry of `A` counts as structurally zero.
pub const SUPPORT_TOL: f64 = 1e-12;

/// Parameters with a magnitude below this are flagged as near-vulnerable.
pub const NEAR_ZERO_ADVISORY: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("scheme parameters must be finite")]
    NonFinite,
    #[error("a1² + a2² + a3² = {0} (must be 1 within 1e-12)")]
    NotNormalized(f64),
    #[error("unknown scheme preset {0:?} (expected \"optimal\" or \"simple\")")]
    UnknownPreset(String),
}

/// Bit value carried by one photon. `Plus` is binary 1, `Minus` binary 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BitValue {
    Plus,
    Minus,
}

impl BitValue {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            BitValue::Plus
        } else {
            BitValue::Minus
        }
    }

    pub fn as_bit(self) -> bool {
        self == BitValue::Plus
    }

    pub fn flipped(self) -> Self {
        match self {
            BitValue::Plus => BitValue::Minus,
            BitValue::Minus => BitValue::Plus,
        }
    }
}

impl fmt::Display for BitValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BitValue::Plus => "+",
            BitValue::Minus => "-",
        })
    }
}

/// Which of Bob's two measurement bases was used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BasisChoice {
    B,
    C,
}

impl BasisChoice {
    /// The bit whose states form this basis.
    pub fn native_bit(self) -> BitValue {
        match self {
            BasisChoice::B => BitValue::Plus,
            BasisChoice::C => BitValue::Minus,
        }
    }
}

/// The real triple `(a1, a2, a3)` on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeParams {
    a: [f64; 3],
}

impl SchemeParams {
    pub fn new(a1: f64, a2: f64, a3: f64) -> Result<Self, SchemeError> {
        if ![a1, a2, a3].iter().all(|x| x.is_finite()) {
            return Err(SchemeError::NonFinite);
        }
        let sum = a1 * a1 + a2 * a2 + a3 * a3;
        if (sum - 1.0).abs() > ALGEBRA_TOL {
            return Err(SchemeError::NotNormalized(sum));
        }
        Ok(Self { a: [a1, a2, a3] })
    }

    /// The fully symmetric choice `a_i = 1/√3`.
    pub fn optimal() -> Self {
        let x = 1.0 / 3f64.sqrt();
        Self { a: [x, x, x] }
    }

    /// `a1 = a2 = 1/√2`, `a3 = 0`; needs no spatial/polarization entanglement.
    pub fn simple() -> Self {
        Self {
            a: [FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0],
        }
    }

    pub fn preset(name: &str) -> Result<Self, SchemeError> {
        match name.trim().to_ascii_lowercase().as_str() {
            "optimal" => Ok(Self::optimal()),
            "simple" => Ok(Self::simple()),
            other => Err(SchemeError::UnknownPreset(other.to_string())),
        }
    }

    /// Uniform draw on the unit sphere.
    pub fn random(rng: &mut RandomStream) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        loop {
            let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-8 {
                return Self { a: v.map(|x| x / n) };
            }
        }
    }

    pub fn a1(&self) -> f64 {
        self.a[0]
    }

    pub fn a2(&self) -> f64 {
        self.a[1]
    }

    pub fn a3(&self) -> f64 {
        self.a[2]
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.a
    }

    pub fn sum_fourth_powers(&self) -> f64 {
        self.a.iter().map(|x| x.powi(4)).sum()
    }

    /// Some `|a_i|` is small enough that the scheme is close to the
    /// backdoored family.
    pub fn near_vulnerable(&self) -> bool {
        self.a.iter().any(|x| x.abs() < NEAR_ZERO_ADVISORY)
    }
}

impl fmt::Display for SchemeParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.a[0], self.a[1], self.a[2])
    }
}

impl FromStr for SchemeParams {
    type Err = SchemeError;

    /// Accepts a preset name or a comma-separated triple `a1,a2,a3`.
    fn from_str(s: &str) -> Result<Self, SchemeError> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() == 3 {
            let nums: Result<Vec<f64>, _> = parts.iter().map(|p| p.parse::<f64>()).collect();
            if let Ok(n) = nums {
                return Self::new(n[0], n[1], n[2]);
            }
        }
        Self::preset(s)
    }
}

/// `A = i·M` with `M` the real antisymmetric matrix built from `(a1,a2,a3)`.
pub fn build_matrix_a(params: &SchemeParams) -> Operator {
    let [a1, a2, a3] = params.a;
    let m = [
        [0.0, a1, a2, a3],
        [-a1, 0.0, a3, -a2],
        [-a2, -a3, 0.0, a1],
        [-a3, a2, -a1, 0.0],
    ];
    Operator::from_entries(m.map(|row| row.map(|x| Complex64::new(0.0, x))))
}

/// Spatial mode of the photon.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Spatial {
    R,
    L,
}

/// Polarization of the photon.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarization {
    V,
    H,
}

/// Position of the tensor-product state `spatial ⊗ polarization` in the
/// storage order `|Rv⟩, |Lv⟩, |Lh⟩, |Rh⟩`.
pub fn physical_index(spatial: Spatial, pol: Polarization) -> usize {
    // tensor index 2·spatial + polarization with R=0/L=1, v=0/h=1
    const TENSOR_TO_STORAGE: [usize; 4] = [0, 3, 1, 2];
    let tensor = 2 * (spatial as usize) + pol as usize;
    TENSOR_TO_STORAGE[tensor]
}

/// Photon in `spatial` with polarization amplitudes `(v, h)`.
pub fn physical_state(spatial: Spatial, v: ComplexAmplitude, h: ComplexAmplitude) -> StateVector {
    let mut amps = [Complex64::new(0.0, 0.0); DIM];
    amps[physical_index(spatial, Polarization::V)] = v;
    amps[physical_index(spatial, Polarization::H)] = h;
    StateVector::normalized(amps).expect("nonzero polarization amplitudes")
}

/// `spatial ⊗ |s⟩`, `|s⟩ = (|v⟩ + |h⟩)/√2`.
pub fn symmetric_state(spatial: Spatial) -> StateVector {
    let one = Complex64::new(1.0, 0.0);
    physical_state(spatial, one, one)
}

/// `spatial ⊗ |a⟩`, `|a⟩ = (|v⟩ − |h⟩)/√2`.
pub fn antisymmetric_state(spatial: Spatial) -> StateVector {
    let one = Complex64::new(1.0, 0.0);
    physical_state(spatial, one, -one)
}

/// Display labels of the `B` basis states.
pub const B_LABELS: [&str; DIM] = ["Rv", "Lv", "Lh", "Rh"];

/// Bob's two measurement bases together with the matrix linking them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasisPair {
    b: OrthonormalBasis,
    c: OrthonormalBasis,
    a: Operator,
    params: SchemeParams,
}

/// `B` = the physical product states, `C_m = Σ_n B_n A_nm`.
pub fn build_bases(params: &SchemeParams) -> BasisPair {
    let a = build_matrix_a(params);
    let b = OrthonormalBasis::computational();
    let c_states: [StateVector; DIM] = std::array::from_fn(|m| {
        let mut amps = [Complex64::new(0.0, 0.0); DIM];
        for (n, b_n) in b.states().iter().enumerate() {
            for (i, amp) in amps.iter_mut().enumerate() {
                *amp += b_n.amplitudes()[i] * a.entry(n, m);
            }
        }
        StateVector::with_tolerance(amps, ALGEBRA_TOL).expect("columns of a unitary are normalized")
    });
    let c = OrthonormalBasis::new(c_states).expect("A is unitary");
    BasisPair {
        b,
        c,
        a,
        params: *params,
    }
}

impl BasisPair {
    pub fn b(&self) -> &OrthonormalBasis {
        &self.b
    }

    pub fn c(&self) -> &OrthonormalBasis {
        &self.c
    }

    pub fn matrix_a(&self) -> &Operator {
        &self.a
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn basis(&self, choice: BasisChoice) -> &OrthonormalBasis {
        match choice {
            BasisChoice::B => &self.b,
            BasisChoice::C => &self.c,
        }
    }

    /// `|n_+⟩ = |B_n⟩`, `|n_−⟩ = |C_n⟩`.
    pub fn signal_state(&self, bit: BitValue, cipher: usize) -> &StateVector {
        match bit {
            BitValue::Plus => self.b.state(cipher),
            BitValue::Minus => self.c.state(cipher),
        }
    }

    /// `max_n |⟨B_n|C_n⟩|`
    pub fn same_index_overlap(&self) -> f64 {
        (0..DIM)
            .map(|n| crate::statevec::inner(self.b.state(n), self.c.state(n)).norm())
            .fold(0.0, f64::max)
    }
}

/// Row/column index of `(bit, cipher)` in a [`ProbabilityTable`].
fn table_row(bit: BitValue, cipher: usize) -> usize {
    match bit {
        BitValue::Plus => cipher,
        BitValue::Minus => DIM + cipher,
    }
}

fn table_col(choice: BasisChoice, index: usize) -> usize {
    match choice {
        BasisChoice::B => index,
        BasisChoice::C => DIM + index,
    }
}

/// Bob's outcome probabilities: rows `1_+..4_+, 1_−..4_−`, columns
/// `B_1..B_4, C_1..C_4`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbabilityTable {
    entries: [[f64; 2 * DIM]; 2 * DIM],
}

impl ProbabilityTable {
    pub fn entry(&self, bit: BitValue, cipher: usize, choice: BasisChoice, index: usize) -> f64 {
        self.entries[table_row(bit, cipher)][table_col(choice, index)]
    }

    pub fn rows(&self) -> &[[f64; 2 * DIM]; 2 * DIM] {
        &self.entries
    }

    /// The closed-form pattern in terms of `a_i²`.
    pub fn symbolic(params: &SchemeParams) -> Self {
        let [s1, s2, s3] = params.a.map(|x| x * x);
        let cross = [
            [0.0, s1, s2, s3],
            [s1, 0.0, s3, s2],
            [s2, s3, 0.0, s1],
            [s3, s2, s1, 0.0],
        ];
        let mut entries = [[0.0; 2 * DIM]; 2 * DIM];
        for n in 0..DIM {
            entries[n][n] = 1.0;
            entries[DIM + n][DIM + n] = 1.0;
            for m in 0..DIM {
                entries[n][DIM + m] = cross[n][m];
                entries[DIM + n][m] = cross[n][m];
            }
        }
        Self { entries }
    }

    pub fn max_abs_diff(&self, other: &ProbabilityTable) -> f64 {
        self.entries
            .iter()
            .flatten()
            .zip(other.entries.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    /// Largest deviation of any half-row sum from 1.
    pub fn row_sum_deviation(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|row| [row[..DIM].iter().sum::<f64>(), row[DIM..].iter().sum::<f64>()])
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

pub fn probability_table(bases: &BasisPair) -> ProbabilityTable {
    let mut entries = [[0.0; 2 * DIM]; 2 * DIM];
    for bit in [BitValue::Plus, BitValue::Minus] {
        for n in 0..DIM {
            let prepared = bases.signal_state(bit, n);
            for choice in [BasisChoice::B, BasisChoice::C] {
                for m in 0..DIM {
                    entries[table_row(bit, n)][table_col(choice, m)] =
                        born_probability(prepared, bases.basis(choice).state(m));
                }
            }
        }
    }
    ProbabilityTable { entries }
}

/// `(1/4) Σ_n |n_bit⟩⟨n_bit|`
pub fn concealment_density(bases: &BasisPair, bit: BitValue) -> Operator {
    let states = (0..DIM).map(|n| bases.signal_state(bit, n));
    Operator::projector_onto(states).scale(Complex64::new(0.25, 0.0))
}

/// A nondemolition measurement that leaves every signal state undisturbed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QndBackdoor {
    pub pattern: [bool; DIM],
    pub projector: Operator,
}

impl QndBackdoor {
    pub fn pattern_bits(&self) -> [u8; DIM] {
        self.pattern.map(u8::from)
    }
}

impl fmt::Display for QndBackdoor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.pattern_bits();
        write!(f, "({},{},{},{})", p[0], p[1], p[2], p[3])
    }
}

/// Searches eigenvalue patterns `λ ∈ {0,1}⁴` for a projector
/// `Σ_{λ_n=1} |B_n⟩⟨B_n|` that also has every `C_m` as an eigenstate.
///
/// A pattern and its complement define the same measurement, so only the
/// representatives with `λ_1 = 1` are returned, lowest binary value first
/// (`λ_1` most significant).
pub fn qnd_vulnerability(params: &SchemeParams) -> Option<QndBackdoor> {
    let a = build_matrix_a(params);
    let supports: Vec<Vec<usize>> = (0..DIM)
        .map(|m| (0..DIM).filter(|&n| a.entry(n, m).norm() > SUPPORT_TOL).collect())
        .collect();
    let bases = build_bases(params);
    (1u8..15)
        .map(|v| -> [bool; DIM] { std::array::from_fn(|n| v & (1 << (DIM - 1 - n)) != 0) })
        .filter(|pattern| pattern[0])
        .find(|pattern| {
            supports
                .iter()
                .all(|support| support.iter().all(|&n| pattern[n] == pattern[support[0]]))
        })
        .map(|pattern| QndBackdoor {
            pattern,
            projector: Operator::projector_onto((0..DIM).filter(|&n| pattern[n]).map(|n| bases.b().state(n))),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevec::inner;

    fn i() -> ComplexAmplitude {
        Complex64::new(0.0, 1.0)
    }

    #[test]
    fn rejects_unnormalized_params() {
        assert!(matches!(
            SchemeParams::new(0.9, 0.3, 0.1),
            Err(SchemeError::NotNormalized(_))
        ));
        assert_eq!(SchemeParams::new(f64::NAN, 0.0, 0.0), Err(SchemeError::NonFinite));
        assert!(SchemeParams::new(1.0, 0.0, 0.0).is_ok());
    }

    #[test]
    fn parses_presets_and_triples() {
        assert_eq!("optimal".parse::<SchemeParams>().unwrap(), SchemeParams::optimal());
        assert_eq!("Simple".parse::<SchemeParams>().unwrap(), SchemeParams::simple());
        assert_eq!(
            "1, 0, 0".parse::<SchemeParams>().unwrap(),
            SchemeParams::new(1.0, 0.0, 0.0).unwrap()
        );
        assert!(matches!(
            "bogus".parse::<SchemeParams>(),
            Err(SchemeError::UnknownPreset(_))
        ));
    }

    #[test]
    fn matrix_a_layout() {
        let p = SchemeParams::optimal();
        let a = build_matrix_a(&p);
        assert_eq!(a.entry(0, 1), i() * p.a1());
        assert_eq!(a.entry(1, 0), -i() * p.a1());
        for n in 0..DIM {
            assert_eq!(a.entry(n, n).norm(), 0.0);
        }
        assert!((a * a).max_abs_diff(&Operator::identity()) < 1e-12);
        assert!(a.is_hermitian(1e-15));
    }

    #[test]
    fn b_basis_is_the_physical_product_basis() {
        use Polarization::*;
        use Spatial::*;
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let bases = build_bases(&SchemeParams::optimal());
        let expected = [(R, V), (L, V), (L, H), (R, H)];
        for (n, (s, p)) in expected.into_iter().enumerate() {
            let (v, h) = if p == V { (one, zero) } else { (zero, one) };
            assert_eq!(*bases.b().state(n), physical_state(s, v, h));
        }
    }

    #[test]
    fn simple_c_basis_is_polarization_rotated() {
        use Spatial::*;
        let bases = build_bases(&SchemeParams::simple());
        let expected = [
            symmetric_state(L).with_phase(-i()),
            symmetric_state(R).with_phase(i()),
            antisymmetric_state(R).with_phase(i()),
            antisymmetric_state(L).with_phase(-i()),
        ];
        for (n, e) in expected.iter().enumerate() {
            assert!(bases.c().state(n).same_ray(e, 1e-12), "C_{}", n + 1);
            // phases are kept exactly as produced by B·A
            let d: f64 = bases
                .c()
                .state(n)
                .amplitudes()
                .iter()
                .zip(e.amplitudes())
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max);
            assert!(d < 1e-15, "C_{} phase", n + 1);
        }
    }

    #[test]
    fn same_index_states_are_orthogonal() {
        for p in [SchemeParams::optimal(), SchemeParams::simple()] {
            let bases = build_bases(&p);
            for n in 0..DIM {
                assert!(inner(bases.b().state(n), bases.c().state(n)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn table_entries_match_known_values() {
        let p = SchemeParams::optimal();
        let t = probability_table(&build_bases(&p));
        assert!((t.entry(BitValue::Plus, 2, BasisChoice::C, 0) - p.a2().powi(2)).abs() < 1e-12);
        assert!(t.entry(BitValue::Minus, 3, BasisChoice::B, 3).abs() < 1e-12);
        assert!((t.entry(BitValue::Plus, 1, BasisChoice::B, 1) - 1.0).abs() < 1e-12);
        assert!((t.entry(BitValue::Plus, 0, BasisChoice::C, 1) - 1.0 / 3.0).abs() < 1e-12);

        let s = probability_table(&build_bases(&SchemeParams::simple()));
        assert!((s.entry(BitValue::Plus, 1, BasisChoice::C, 0) - 0.5).abs() < 1e-12);
        assert!(s.row_sum_deviation() < 1e-12);
    }

    #[test]
    fn concealment_is_maximally_mixed() {
        let bases = build_bases(&SchemeParams::simple());
        let quarter = Operator::identity().scale(Complex64::new(0.25, 0.0));
        let plus = concealment_density(&bases, BitValue::Plus);
        let minus = concealment_density(&bases, BitValue::Minus);
        assert!(plus.max_abs_diff(&quarter) < 1e-12);
        assert!(minus.max_abs_diff(&quarter) < 1e-12);
        assert!((plus - minus).max_abs() < 1e-12);
    }

    #[test]
    fn simple_scheme_has_right_left_backdoor() {
        let door = qnd_vulnerability(&SchemeParams::simple()).expect("backdoor");
        assert_eq!(door.pattern_bits(), [1, 0, 0, 1]);
        let p_r = Operator::projector_onto(
            [
                StateVector::unit(physical_index(Spatial::R, Polarization::V)),
                StateVector::unit(physical_index(Spatial::R, Polarization::H)),
            ]
            .iter(),
        );
        assert!(door.projector.max_abs_diff(&p_r) < 1e-15);
    }

    #[test]
    fn optimal_scheme_has_no_backdoor() {
        assert!(qnd_vulnerability(&SchemeParams::optimal()).is_none());
    }

    #[test]
    fn permutation_scheme_has_a_backdoor() {
        let door = qnd_vulnerability(&SchemeParams::new(1.0, 0.0, 0.0).unwrap()).unwrap();
        assert!(door.pattern[0]);
        assert!(door.pattern.iter().any(|x| !x));
    }

    #[test]
    fn near_zero_advisory() {
        assert!(SchemeParams::simple().near_vulnerable());
        assert!(!SchemeParams::optimal().near_vulnerable());
    }
}
