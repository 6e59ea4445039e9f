#![allow(dead_code)]

use detcomm::protocol::{BasisChoice, Verdict};
use detcomm::statevec::random_state;
use detcomm::transport::{Message, ReportedOutcome};
use detcomm::RandomStream;

/// A random message of a random type, with payload sizes up to `max_len`.
pub fn random_message(rng: &mut RandomStream, max_len: usize) -> Message {
    let len = rng.below(max_len + 1);
    match rng.below(6) {
        0 => Message::Photon {
            position: rng.next_seed() as u32,
            state: random_state(rng),
        },
        1 => Message::ControlPositions((0..len).map(|_| rng.next_seed() as u32).collect()),
        2 => Message::OutcomeReport(
            (0..len)
                .map(|_| ReportedOutcome {
                    basis: if rng.coin() { BasisChoice::B } else { BasisChoice::C },
                    index: rng.below(4) as u8,
                    lost: rng.bernoulli(0.1),
                })
                .collect(),
        ),
        3 => Message::ErrorVerdict {
            error_rate: rng.uniform(),
            verdict: if rng.coin() { Verdict::Pass } else { Verdict::Abort },
        },
        4 => Message::KeyAnnounce((0..len).map(|_| rng.below(4) as u8).collect()),
        _ => Message::Abort,
    }
}

/// `n` random bytes.
pub fn random_bytes(rng: &mut RandomStream, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.below(256) as u8).collect()
}
