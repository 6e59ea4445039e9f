//! Experiment runners: random-strategy sweeps, scheme verification,
//! uniformity tests and the nondemolition scan.

use std::fmt::{self, Write as _};
use std::io::{self, Write};

use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::adversary::{
    analytic_error_rate, error_bound, eve_intercept, optimal_strategy, random_strategy, EveStrategy, ForwardingMode,
    Observation,
};
use crate::protocol::{run_session, SessionConfig, SessionError};
use crate::rng::RandomStream;
use crate::scheme::{
    build_bases, concealment_density, probability_table, qnd_vulnerability, BitValue, ProbabilityTable, QndBackdoor,
    SchemeError, SchemeParams,
};
use crate::statevec::{ComplexAmplitude, Operator, ALGEBRA_TOL, DIM, PROBABILITY_TOL};

/// Rates may undercut the bound by at most this much before counting as a violation.
pub const BOUND_SLACK: f64 = 1e-9;

/// Significance level for the chi-square uniformity tests.
pub const CHI_SQUARE_ALPHA: f64 = 0.001;

pub const CSV_HEADER: &str = "strategy_id,forwarding_mode,analytic_rate,empirical_rate,bound";

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("strategy {0} produces no observations")]
    NoObservations(&'static str),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("csv line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub strategy_id: usize,
    pub forwarding_mode: ForwardingMode,
    pub analytic_rate: f64,
    pub empirical_rate: Option<f64>,
    /// Number of control bits behind `empirical_rate`.
    pub empirical_controls: usize,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub n_strategies: usize,
    pub min_rate: f64,
    pub mean_rate: f64,
    pub bound: f64,
    pub violations: usize,
}

impl fmt::Display for SweepSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "strategies={} min_rate={:.6} mean_rate={:.6} bound={:.6} violations={}",
            self.n_strategies, self.min_rate, self.mean_rate, self.bound, self.violations
        )
    }
}

pub fn summarize(rows: &[SweepRow], bound: f64) -> SweepSummary {
    let n = rows.len();
    let min_rate = rows.iter().map(|r| r.analytic_rate).fold(f64::INFINITY, f64::min);
    let mean_rate = rows.iter().map(|r| r.analytic_rate).sum::<f64>() / n.max(1) as f64;
    SweepSummary {
        n_strategies: n,
        min_rate,
        mean_rate,
        bound,
        violations: rows.iter().filter(|r| r.analytic_rate < bound - BOUND_SLACK).count(),
    }
}

/// Estimates a strategy's control-bit error rate by running a session with
/// roughly `control_bits` control frames. Returns `(rate, controls)`.
pub fn empirical_error_rate(
    params: &SchemeParams,
    strategy: &EveStrategy,
    control_bits: usize,
    seed: u64,
) -> Result<(f64, usize), AnalysisError> {
    // 90% control density: one message bit per ~9 controls
    let control_fraction = 0.9;
    let message_len = control_bits.div_ceil(72).max(1);
    let mut rng = RandomStream::substream(seed, 0);
    let message: Vec<u8> = (0..message_len).map(|_| rng.below(256) as u8).collect();
    let mut config = SessionConfig::new(*params, message, seed);
    config.control_fraction = control_fraction;
    let t = run_session(&config, strategy)?;
    Ok((t.error_report.error_rate, t.error_report.control_total))
}

/// Evaluates `n` random strategies drawn from per-strategy substreams of
/// `seed`; rows come back in draw order regardless of scheduling.
pub fn sweep_strategies(
    params: &SchemeParams,
    n: usize,
    mode: ForwardingMode,
    seed: u64,
    empirical_bits: Option<usize>,
) -> Result<(Vec<SweepRow>, SweepSummary), AnalysisError> {
    let bases = build_bases(params);
    let bound = error_bound(params);
    let rows: Result<Vec<SweepRow>, AnalysisError> = (0..n)
        .into_par_iter()
        .map(|id| {
            let mut rng = RandomStream::substream(seed, id as u64);
            let strategy = random_strategy(&mut rng, mode);
            let analytic_rate = analytic_error_rate(&strategy, &bases);
            let (empirical_rate, empirical_controls) = match empirical_bits {
                Some(bits) => {
                    let session_seed = rng.next_seed();
                    let (rate, controls) = empirical_error_rate(params, &strategy, bits, session_seed)?;
                    (Some(rate), controls)
                }
                None => (None, 0),
            };
            Ok(SweepRow {
                strategy_id: id,
                forwarding_mode: mode,
                analytic_rate,
                empirical_rate,
                empirical_controls,
                bound,
            })
        })
        .collect();
    let rows = rows?;
    let summary = summarize(&rows, bound);
    Ok((rows, summary))
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv<W: Write>(rows: &[SweepRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.strategy_id,
            r.forwarding_mode,
            fmt_float(r.analytic_rate),
            r.empirical_rate.map(fmt_float).unwrap_or_default(),
            fmt_float(r.bound)
        )?;
    }
    Ok(())
}

/// Parses CSV produced by [`write_csv`]. `empirical_controls` is not part of
/// the format and comes back as zero.
pub fn parse_csv(text: &str) -> Result<Vec<SweepRow>, AnalysisError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => {
            return Err(AnalysisError::Csv {
                line: 1,
                reason: "missing header".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let err = |reason: String| AnalysisError::Csv { line: i + 1, reason };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(err(format!("expected 5 fields, got {}", fields.len())));
            }
            let float = |s: &str| s.parse::<f64>().map_err(|e| err(e.to_string()));
            Ok(SweepRow {
                strategy_id: fields[0]
                    .parse()
                    .map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
                forwarding_mode: fields[1].parse().map_err(|_| err(format!("mode {:?}", fields[1])))?,
                analytic_rate: float(fields[2])?,
                empirical_rate: if fields[3].is_empty() {
                    None
                } else {
                    Some(float(fields[3])?)
                },
                empirical_controls: 0,
                bound: float(fields[4])?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Holds, but flags a known weakness.
    Advisory,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub status: CheckStatus,
    pub max_deviation: Option<f64>,
    pub detail: String,
}

impl Check {
    fn tolerance(name: &'static str, deviation: f64, tol: f64) -> Self {
        Self {
            name,
            status: if deviation <= tol {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            max_deviation: Some(deviation),
            detail: format!("tolerance {tol:e}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeReport {
    pub input: [f64; 3],
    pub checks: Vec<Check>,
    pub backdoor: Option<QndBackdoor>,
}

impl SchemeReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for SchemeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scheme ({}, {}, {})", self.input[0], self.input[1], self.input[2])?;
        for c in &self.checks {
            let status = match c.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Advisory => "ADVISORY",
            };
            let dev = c.max_deviation.map(|d| format!(" max_dev={d:.3e}")).unwrap_or_default();
            writeln!(f, "  [{status}] {}{dev} ({})", c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Runs every structural check on `(a1, a2, a3)`. Invalid parameters yield
/// a report with the failed normalization check only.
pub fn verify_scheme(a1: f64, a2: f64, a3: f64) -> SchemeReport {
    let input = [a1, a2, a3];
    let params = match SchemeParams::new(a1, a2, a3) {
        Ok(p) => p,
        Err(e) => {
            let deviation = match e {
                SchemeError::NotNormalized(sum) => Some((sum - 1.0).abs()),
                _ => None,
            };
            return SchemeReport {
                input,
                checks: vec![Check {
                    name: "normalization",
                    status: CheckStatus::Fail,
                    max_deviation: deviation,
                    detail: e.to_string(),
                }],
                backdoor: None,
            };
        }
    };
    let norm_dev = (input.iter().map(|x| x * x).sum::<f64>() - 1.0).abs();
    let bases = build_bases(&params);
    let a = bases.matrix_a();
    let quarter = Operator::identity().scale(ComplexAmplitude::new(0.25, 0.0));
    let table = probability_table(&bases);
    let zero_diag = (0..DIM).map(|n| a.entry(n, n).norm()).fold(0.0, f64::max);
    let bound = error_bound(&params);
    let optimal_rate = analytic_error_rate(&optimal_strategy(&bases), &bases);

    let mut checks = vec![
        Check::tolerance("normalization", norm_dev, ALGEBRA_TOL),
        Check::tolerance("A unitary", a.unitarity_deviation(), ALGEBRA_TOL),
        Check::tolerance("A hermitian", a.hermiticity_deviation(), ALGEBRA_TOL),
        Check::tolerance("A zero diagonal", zero_diag, ALGEBRA_TOL),
        Check::tolerance("<B_n|C_n> = 0", bases.same_index_overlap(), ALGEBRA_TOL),
        Check::tolerance(
            "B completeness",
            bases.b().completeness_sum().max_abs_diff(&Operator::identity()),
            ALGEBRA_TOL,
        ),
        Check::tolerance(
            "C completeness",
            bases.c().completeness_sum().max_abs_diff(&Operator::identity()),
            ALGEBRA_TOL,
        ),
        Check::tolerance(
            "concealment",
            concealment_density(&bases, BitValue::Plus)
                .max_abs_diff(&quarter)
                .max(concealment_density(&bases, BitValue::Minus).max_abs_diff(&quarter)),
            ALGEBRA_TOL,
        ),
        Check::tolerance(
            "probability table pattern",
            table.max_abs_diff(&ProbabilityTable::symbolic(&params)),
            ALGEBRA_TOL,
        ),
        Check::tolerance("probability table row sums", table.row_sum_deviation(), PROBABILITY_TOL),
        Check {
            detail: format!("bound {bound:.6}, B-basis attack {optimal_rate:.6}"),
            ..Check::tolerance("error bound attained", (optimal_rate - bound).abs(), ALGEBRA_TOL)
        },
    ];
    let backdoor = qnd_vulnerability(&params);
    checks.push(match &backdoor {
        Some(door) => Check {
            name: "QND backdoor",
            status: CheckStatus::Advisory,
            max_deviation: None,
            detail: format!("nondemolition measurement with pattern {door}"),
        },
        None => Check {
            name: "QND backdoor",
            status: CheckStatus::Pass,
            max_deviation: None,
            detail: "none".into(),
        },
    });
    if params.near_vulnerable() && backdoor.is_none() {
        checks.push(Check {
            name: "near-zero parameter",
            status: CheckStatus::Advisory,
            max_deviation: None,
            detail: "some |a_i| < 1e-3; close to a backdoored scheme".into(),
        });
    }
    SchemeReport {
        input,
        checks,
        backdoor,
    }
}

/// Upper-tail p-value of Pearson's chi-square statistic for `counts`
/// against `expected` probabilities. Zero-probability cells are skipped.
pub fn chi_square_p_value(counts: &[usize], expected: &[f64]) -> f64 {
    let total: usize = counts.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0;
    for (&c, &p) in counts.iter().zip(expected) {
        if p <= 0.0 {
            continue;
        }
        let e = p * total as f64;
        stat += (c as f64 - e).powi(2) / e;
        cells += 1;
    }
    if cells < 2 {
        return 1.0;
    }
    ChiSquared::new((cells - 1) as f64)
        .expect("positive degrees of freedom")
        .sf(stat)
}

pub const MIN_UNIFORMITY_SAMPLES: usize = 10_000;

/// Chi-square test of a sampler of Eve's observations, once for `+` photons
/// and once for `−` photons, against the distribution `expected`.
pub fn uniformity_from_sampler<F>(
    samples: usize,
    expected: &[f64],
    rng: &mut RandomStream,
    mut sampler: F,
) -> Result<(f64, f64), AnalysisError>
where
    F: FnMut(BitValue, &mut RandomStream) -> usize,
{
    if samples < MIN_UNIFORMITY_SAMPLES {
        return Err(AnalysisError::TooFewSamples {
            min: MIN_UNIFORMITY_SAMPLES,
            got: samples,
        });
    }
    let mut p_values = [0.0; 2];
    for (slot, bit) in [BitValue::Plus, BitValue::Minus].into_iter().enumerate() {
        let mut counts = vec![0usize; expected.len()];
        for _ in 0..samples {
            counts[sampler(bit, rng)] += 1;
        }
        p_values[slot] = chi_square_p_value(&counts, expected);
    }
    Ok((p_values[0], p_values[1]))
}

/// Simulates Eve's observations on random-cipher photons carrying a fixed
/// bit and tests them against the distribution she would see from the
/// maximally mixed state (uniform over four outcomes for intercept-resend).
pub fn uniformity_test(
    strategy: &EveStrategy,
    params: &SchemeParams,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64), AnalysisError> {
    let bases = build_bases(params);
    let (expected, index_of): (Vec<f64>, fn(Observation) -> usize) = match strategy {
        EveStrategy::None => return Err(AnalysisError::NoObservations("none")),
        EveStrategy::InterceptResend { .. } => (vec![0.25; DIM], |o| match o {
            Observation::Outcome(k) => k,
            Observation::Projector(_) => unreachable!(),
        }),
        EveStrategy::Qnd { projector } => {
            let p = projector.trace().re / DIM as f64;
            (vec![p, 1.0 - p], |o| match o {
                Observation::Projector(hit) => usize::from(!hit),
                Observation::Outcome(_) => unreachable!(),
            })
        }
    };
    let mut rng = RandomStream::from_seed(seed);
    uniformity_from_sampler(samples, &expected, &mut rng, |bit, rng| {
        let cipher = rng.below(DIM);
        let (_, record) = eve_intercept(0, bases.signal_state(bit, cipher), strategy, rng);
        index_of(record.expect("observing strategy").observation)
    })
}

/// One grid point of the nondemolition scan.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanPoint {
    pub params: SchemeParams,
    pub backdoor: Option<QndBackdoor>,
    /// Some `a_i` is exactly zero at this grid point.
    pub on_edge: bool,
}

/// Scans the `(a1², a2², a3²)` simplex on a grid with `k` points per side,
/// `a_i² = w_i / (k - 1)` for nonnegative integers `w1 + w2 + w3 = k - 1`.
pub fn qnd_scan(k: usize) -> Vec<ScanPoint> {
    assert!(k >= 2, "grid needs at least two points per side");
    let steps = k - 1;
    let mut points = Vec::new();
    for w1 in 0..=steps {
        for w2 in 0..=(steps - w1) {
            let w3 = steps - w1 - w2;
            let a = |w: usize| (w as f64 / steps as f64).sqrt();
            let params = SchemeParams::new(a(w1), a(w2), a(w3)).expect("grid point on the sphere");
            points.push(ScanPoint {
                params,
                backdoor: qnd_vulnerability(&params),
                on_edge: w1 == 0 || w2 == 0 || w3 == 0,
            });
        }
    }
    points
}

/// Renders scheme parameters and pattern as a CSV line for the scan output.
pub fn scan_csv_line(point: &ScanPoint) -> String {
    let mut s = String::new();
    let [a1, a2, a3] = point.params.as_array();
    let _ = write!(
        s,
        "{},{},{},{},{}",
        fmt_float(a1),
        fmt_float(a2),
        fmt_float(a3),
        u8::from(point.backdoor.is_some()),
        point.backdoor.map(|d| d.to_string()).unwrap_or_default()
    );
    s
}

/// Largest deviation of any signal state from being an eigenstate of the
/// backdoor projector; zero when the measurement disturbs nothing.
pub fn backdoor_is_silent(params: &SchemeParams, door: &QndBackdoor) -> f64 {
    let bases = build_bases(params);
    let mut worst: f64 = 0.0;
    for basis in [bases.b(), bases.c()] {
        for s in basis.states() {
            let image = door.projector.apply(s);
            let weight: f64 = image.iter().map(|x| x.norm_sqr()).sum();
            // eigenvalue 0 or 1: the image is either zero or the state itself
            let dev = if weight < 0.5 {
                weight.sqrt()
            } else {
                image
                    .iter()
                    .zip(s.amplitudes())
                    .map(|(x, y)| (x - y).norm())
                    .fold(0.0, f64::max)
            };
            worst = worst.max(dev);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_counts_violations() {
        let row = |rate| SweepRow {
            strategy_id: 0,
            forwarding_mode: ForwardingMode::AsDetected,
            analytic_rate: rate,
            empirical_rate: None,
            empirical_controls: 0,
            bound: 0.125,
        };
        let s = summarize(&[row(0.2), row(0.125 - 1e-10), row(0.1)], 0.125);
        assert_eq!(s.violations, 1);
        assert_eq!(s.min_rate, 0.1);
        assert!((s.mean_rate - (0.425 - 1e-10) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn optimal_strategy_row_meets_bound() {
        let p = SchemeParams::optimal();
        let bases = build_bases(&p);
        let rate = analytic_error_rate(&optimal_strategy(&bases), &bases);
        let rows = vec![SweepRow {
            strategy_id: 0,
            forwarding_mode: ForwardingMode::AsDetected,
            analytic_rate: rate,
            empirical_rate: None,
            empirical_controls: 0,
            bound: error_bound(&p),
        }];
        let s = summarize(&rows, error_bound(&p));
        assert!((s.min_rate - s.bound).abs() < 1e-12);
        assert_eq!(s.violations, 0);
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let (rows, _) = sweep_strategies(&SchemeParams::simple(), 20, ForwardingMode::RandomFixed, 3, None).unwrap();
        let mut first = Vec::new();
        write_csv(&rows, &mut first).unwrap();
        let parsed = parse_csv(std::str::from_utf8(&first).unwrap()).unwrap();
        let mut second = Vec::new();
        write_csv(&parsed, &mut second).unwrap();
        assert_eq!(first, second);
        for (a, b) in rows.iter().zip(&parsed) {
            assert_eq!(a.analytic_rate.to_bits(), b.analytic_rate.to_bits());
        }
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(parse_csv("nope\n").is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\n1,as-detected,0.1\n")).is_err());
    }

    #[test]
    fn verify_presets() {
        let r = verify_scheme(1.0 / 3f64.sqrt(), 1.0 / 3f64.sqrt(), 1.0 / 3f64.sqrt());
        assert!(r.passed());
        assert!(r.checks.iter().all(|c| c.status == CheckStatus::Pass), "{r}");
        assert!(r.backdoor.is_none());

        let s = SchemeParams::simple();
        let r = verify_scheme(s.a1(), s.a2(), s.a3());
        assert!(r.passed());
        let advisories: Vec<_> = r.checks.iter().filter(|c| c.status != CheckStatus::Pass).collect();
        assert_eq!(advisories.len(), 1);
        assert_eq!(advisories[0].name, "QND backdoor");
        assert_eq!(r.backdoor.unwrap().pattern_bits(), [1, 0, 0, 1]);
    }

    #[test]
    fn verify_reports_normalization_failure() {
        let r = verify_scheme(0.9, 0.3, 0.5);
        assert!(!r.passed());
        assert_eq!(r.checks.len(), 1);
        assert_eq!(r.checks[0].name, "normalization");
        assert!((r.checks[0].max_deviation.unwrap() - 0.15).abs() < 1e-12);
    }

    #[test]
    fn chi_square_detects_bias() {
        let mut rng = RandomStream::from_seed(1);
        let (p_plus, p_minus) = uniformity_from_sampler(20_000, &[0.25; 4], &mut rng, |_, rng| {
            if rng.bernoulli(0.3) {
                0
            } else {
                rng.below(4)
            }
        })
        .unwrap();
        assert!(p_plus < CHI_SQUARE_ALPHA && p_minus < CHI_SQUARE_ALPHA);
    }

    #[test]
    fn chi_square_accepts_fair_sampler() {
        let mut rng = RandomStream::from_seed(2);
        let (p_plus, p_minus) = uniformity_from_sampler(20_000, &[0.25; 4], &mut rng, |_, rng| rng.below(4)).unwrap();
        assert!(p_plus > CHI_SQUARE_ALPHA && p_minus > CHI_SQUARE_ALPHA);
    }

    #[test]
    fn uniformity_requires_enough_samples() {
        let bases = build_bases(&SchemeParams::optimal());
        assert!(matches!(
            uniformity_test(&optimal_strategy(&bases), &SchemeParams::optimal(), 100, 1),
            Err(AnalysisError::TooFewSamples { .. })
        ));
        assert!(matches!(
            uniformity_test(&EveStrategy::None, &SchemeParams::optimal(), 10_000, 1),
            Err(AnalysisError::NoObservations(_))
        ));
    }

    #[test]
    fn scan_flags_exactly_the_edges() {
        let points = qnd_scan(7);
        assert_eq!(points.len(), 28);
        for p in &points {
            assert_eq!(p.backdoor.is_some(), p.on_edge, "{}", p.params);
            if let Some(door) = &p.backdoor {
                assert!(backdoor_is_silent(&p.params, door) < 1e-10);
            }
        }
    }
}
