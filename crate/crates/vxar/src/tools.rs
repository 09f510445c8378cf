//! `asm` and `run`: the decoder author's tools.

use std::path::Path;

use vxa_isa::{assemble, validate_image};
use vxa_vm::{Status, SyscallBinding, Vm};

use crate::engine::vm_config;
use crate::{CliError, ExtractPolicy, EXIT_OK, EXIT_TRAP_BASE};

/// Assembles `source` into a VXE image at `out`; returns the image size.
pub fn asm(source: &Path, out: &Path) -> Result<usize, CliError> {
    let text = std::fs::read_to_string(source).map_err(|e| CliError::io(source, e))?;
    let image = assemble(&text).map_err(|e| CliError::Usage(format!("{}: {e}", source.display())))?;
    let bytes = image.to_bytes();
    std::fs::write(out, &bytes).map_err(|e| CliError::io(out, e))?;
    Ok(bytes.len())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunResult {
    pub status: Status,
    pub output: Vec<u8>,
    pub diagnostics: Vec<u8>,
    pub instret: u64,
}

/// Runs an image once as a filter over `input`.
pub fn run_image(image: &[u8], input: Vec<u8>, policy: &ExtractPolicy) -> Result<RunResult, CliError> {
    let image = validate_image(image).map_err(|e| CliError::Usage(format!("invalid image: {e}")))?;
    let binding = SyscallBinding::new(input).verbose(policy.verbose);
    let mut vm = Vm::new(&image, vm_config(policy), binding).map_err(|e| CliError::Usage(e.to_string()))?;
    let status = vm.run().map_err(|e| CliError::Usage(e.to_string()))?;
    let instret = vm.instret();
    let binding = vm.into_binding();
    Ok(RunResult { status, diagnostics: binding.diagnostics().to_vec(), output: binding.into_output(), instret })
}

/// `Exited(n)` maps to the low byte of `n`, a finished stream to 0, and a
/// trap to 70 plus the trap kind's ordinal.
pub fn exit_status(status: Status) -> u8 {
    match status {
        Status::Exited(n) => n as u8,
        Status::StreamDone | Status::Running => EXIT_OK,
        Status::Trapped(t) => EXIT_TRAP_BASE + t.kind.ordinal(),
    }
}
