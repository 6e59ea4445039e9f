//! Simulation and security analysis of deterministic single-photon
//! two-qubit direct communication with a publicly announced key.
//!
//! Alice encodes each message bit as one of eight states of a photon's
//! spatial and polarization degrees of freedom, chosen by a secret cipher
//! index. Bob measures in a random one of two bases; once transmission is
//! over Alice discloses control positions, Bob reports his outcomes there,
//! and if the error rate is low Alice announces the cipher key so Bob can
//! decode the rest.
//!
//! ```
//! use detcomm::adversary::EveStrategy;
//! use detcomm::protocol::{run_session, SessionConfig};
//! use detcomm::scheme::SchemeParams;
//!
//! let config = SessionConfig::new(SchemeParams::optimal(), b"hi".to_vec(), 7);
//! let transcript = run_session(&config, &EveStrategy::None).unwrap();
//! assert!(transcript.decodes_to(b"hi"));
//! ```

pub mod adversary;
pub mod analysis;
pub mod cli;
pub mod config;
pub mod protocol;
pub mod rng;
pub mod scheme;
pub mod statevec;
pub mod transport;

pub use adversary::{EveSpec, EveStrategy};
pub use protocol::{run_session, SessionConfig, Transcript};
pub use rng::RandomStream;
pub use scheme::{build_bases, BasisPair, SchemeParams};
pub use statevec::{OrthonormalBasis, StateVector};
