//! Desk-scale simulator for a (k, n)-threshold universal quantum
//! homomorphic encryption protocol.
//!
//! A client encrypts single-qubit plaintexts with rotation keys, k of n
//! evaluation servers jointly apply a universal gate set on the ciphertext
//! while chaining partial-decryption functions, and the client recovers
//! the evaluated plaintext via a blinded final-decryption handshake.
//! Every run is verified against a direct-evaluation oracle.
//!
//! Module map:
//! - [`linalg`]: dense complex matrices, the U/E operator calculus, and
//!   the blinding-equation solver.
//! - [`state`]: partitioned statevector register with decoy measurement.
//! - [`gates`]: the universal gate set, program parsing and profiling.
//! - [`keygen`]: threshold key material and per-server shares.
//! - [`protocol`]: encryption, partial decryption, and the decryption
//!   tuple calculus.
//! - [`party`]: message-driven client/evaluator state machines.
//! - [`harness`]: scenario runner, oracle, and security statistics.

pub mod error;
pub mod gates;
pub mod harness;
pub mod keygen;
pub mod linalg;
pub mod party;
pub mod protocol;
pub mod state;

pub use error::{Error, Result};
pub use linalg::{Angle, ComplexMatrix, DEFAULT_TOL};
pub use state::{QubitId, Statevector};
