//! Command-line orchestration of the headline-driven forecasting pipeline.

pub mod config;
pub mod output;
pub mod pipeline;

pub use config::{InputError, RunConfig};

/// Exit code for an error chain: 2 for unusable input, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let input = err.chain().any(|cause| {
        cause.downcast_ref::<InputError>().is_some()
            || cause
                .downcast_ref::<textcast_core::Error>()
                .is_some_and(textcast_core::Error::is_input_error)
    });
    if input {
        2
    } else {
        1
    }
}
