//! Library half of the `gru-pfg` binary: command implementations, config
//! parsing and run manifests. The binary in `main.rs` is a thin argument
//! parser over these.

pub mod commands;
pub mod config;
pub mod manifest;

/// Stable exit codes: 2 usage/argument errors, 3 data/schema/checkpoint
/// errors, 4 numeric divergence.
pub fn exit_code(error: &gru_pfg::Error) -> i32 {
    use gru_pfg::Error;
    match error {
        Error::Spec(_) => 2,
        Error::NonFinite(_) | Error::Divergence { .. } | Error::Determinism(_) => 4,
        _ => 3,
    }
}
