/// The guest's only I/O channels: fd 0 reads the bound input stream, fd 1
/// appends to the decoded output and fd 2 to the diagnostic sink. Diagnostics
/// are kept only in verbose mode.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SyscallBinding {
    input: Vec<u8>,
    cursor: usize,
    output: Vec<u8>,
    diagnostics: Vec<u8>,
    verbose: bool,
}

impl SyscallBinding {
    pub fn new(input: impl Into<Vec<u8>>) -> SyscallBinding {
        SyscallBinding { input: input.into(), ..SyscallBinding::default() }
    }

    pub fn verbose(mut self, verbose: bool) -> SyscallBinding {
        self.verbose = verbose;
        self
    }

    pub fn is_verbose(&self) -> bool {
        self.verbose
    }

    /// Bytes of input not yet read by the guest.
    pub fn remaining_input(&self) -> &[u8] {
        &self.input[self.cursor..]
    }

    pub fn bytes_consumed(&self) -> usize {
        self.cursor
    }

    pub fn output(&self) -> &[u8] {
        &self.output
    }

    pub fn diagnostics(&self) -> &[u8] {
        &self.diagnostics
    }

    pub fn into_output(self) -> Vec<u8> {
        self.output
    }

    pub(crate) fn read_into(&mut self, dst: &mut [u8]) -> usize {
        let n = dst.len().min(self.input.len() - self.cursor);
        dst[..n].copy_from_slice(&self.input[self.cursor..self.cursor + n]);
        self.cursor += n;
        n
    }

    pub(crate) fn write_output(&mut self, data: &[u8]) {
        self.output.extend_from_slice(data);
    }

    pub(crate) fn write_diagnostic(&mut self, data: &[u8]) {
        if self.verbose {
            self.diagnostics.extend_from_slice(data);
        }
    }
}
