//! Library surface of the `qhe` command: scenario-file handling and the
//! randomized sweep, shared between the binary and its tests.

pub mod scenario_file;
pub mod sweep;

pub const EXIT_PASS: u8 = 0;
pub const EXIT_FIDELITY: u8 = 1;
pub const EXIT_COMPROMISED: u8 = 2;
pub const EXIT_PARSE: u8 = 3;
