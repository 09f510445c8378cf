//! The `vxar` archiver. Commands are library functions returning reports so
//! they can be tested without spawning the binary; `main.rs` only parses
//! arguments and prints.
//!
//! Built without the `vm` feature this is a baseline reader: it lists every
//! entry and extracts stored (method 0) entries, and reports everything else
//! as unsupported.

use std::fmt;
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;
use vxa_container::ContainerError;

pub mod extract;
pub mod list;
pub mod paths;

#[cfg(feature = "vm")]
pub mod add;
#[cfg(feature = "vm")]
pub mod bench;
#[cfg(feature = "vm")]
pub mod engine;
#[cfg(feature = "vm")]
pub mod tools;

/// Process exit statuses. `EXIT_TRAP_BASE + kind ordinal` is used by `run`.
pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_CORRUPT_ARCHIVE: u8 = 2;
pub const EXIT_INTEGRITY: u8 = 3;
pub const EXIT_TRAP_BASE: u8 = 70;

pub const DEFAULT_FUEL: u64 = 1 << 33;
pub const DEFAULT_MEM_LIMIT: u64 = 1 << 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExtractPolicy {
    /// Run the attached decoder on stored entries too.
    pub decode_all: bool,
    /// Host decoders for methods 8 and 9 instead of the archived ones.
    pub allow_native_fastpath: bool,
    /// Keep one VM per decoder across entries, resuming after `done`.
    pub reuse_vm: bool,
    /// Print decoder diagnostics (fd 2).
    pub verbose: bool,
    pub fuel: u64,
    pub mem_limit: u64,
    /// Decode every guest instruction every time (`--no-cache`).
    pub no_cache: bool,
}

impl Default for ExtractPolicy {
    fn default() -> Self {
        ExtractPolicy {
            decode_all: false,
            allow_native_fastpath: false,
            reuse_vm: false,
            verbose: false,
            fuel: DEFAULT_FUEL,
            mem_limit: DEFAULT_MEM_LIMIT,
            no_cache: false,
        }
    }
}

/// Errors that stop a command outright.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Archive(#[from] ContainerError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> CliError {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Archive(e) if e.is_corruption() => EXIT_CORRUPT_ARCHIVE,
            _ => EXIT_USAGE,
        }
    }
}

/// Why one entry failed to extract or verify. Each variant has a stable
/// class name, shown by `test` and in JSON reports.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EntryFailure {
    /// Decoded bytes do not match the recorded checksum.
    Crc { expected: u32, found: u32 },
    /// Decoded length differs from the recorded size.
    Size { expected: u64, found: u64 },
    /// The decoder rejected its input and exited with a nonzero status.
    DecoderReported { code: u32, message: String },
    /// The decoder violated the sandbox or ran out of fuel.
    Trap { kind: &'static str, ordinal: u8, pc: u32, vaddr: u32 },
    /// The decoder pseudo-file is missing, damaged or not a valid image.
    DecoderDamaged(String),
    /// A host decoder rejected the stream.
    HostDecode(String),
    /// This build cannot decode the entry.
    Unsupported(String),
    /// The entry's stored bytes could not be read or written out.
    Io(String),
    /// Named on the command line but not in the archive.
    NotFound,
    /// Archive structure outside any single entry is damaged.
    Archive(String),
}

impl EntryFailure {
    pub fn class(&self) -> &'static str {
        match self {
            EntryFailure::Crc { .. } => "crc-mismatch",
            EntryFailure::Size { .. } => "size-mismatch",
            EntryFailure::DecoderReported { .. } => "decoder-error",
            EntryFailure::Trap { .. } => "trap",
            EntryFailure::DecoderDamaged(_) => "decoder-damaged",
            EntryFailure::HostDecode(_) => "host-decode",
            EntryFailure::Unsupported(_) => "unsupported",
            EntryFailure::Io(_) => "io",
            EntryFailure::NotFound => "not-found",
            EntryFailure::Archive(_) => "corrupt-archive",
        }
    }
}

impl fmt::Display for EntryFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntryFailure::Crc { expected, found } => write!(f, "CRC mismatch: expected {expected:08x}, got {found:08x}"),
            EntryFailure::Size { expected, found } => write!(f, "size mismatch: expected {expected} bytes, got {found}"),
            EntryFailure::DecoderReported { code, message } if message.is_empty() => write!(f, "decoder exited with status {code}"),
            EntryFailure::DecoderReported { code, message } => {
                write!(f, "decoder exited with status {code}: {}", message.trim_end())
            }
            EntryFailure::Trap { kind, pc, vaddr, .. } => write!(f, "decoder trapped: {kind} at pc {pc:#010x} (address {vaddr:#010x})"),
            EntryFailure::DecoderDamaged(m) => write!(f, "decoder unusable: {m}"),
            EntryFailure::HostDecode(m) => write!(f, "host decoder: {m}"),
            EntryFailure::Unsupported(m) => write!(f, "unsupported: {m}"),
            EntryFailure::Io(m) => write!(f, "{m}"),
            EntryFailure::NotFound => f.write_str("no such entry"),
            EntryFailure::Archive(m) => write!(f, "{m}"),
        }
    }
}

/// How an entry's bytes were produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodePath {
    /// Stored bytes, no decoder run.
    Stored,
    /// The archived decoder in the VM.
    Vm,
    /// A host decoder (`--native`, or the built-in vxflate for entries
    /// without a decoder reference).
    Host,
}

/// Which operation is decoding. `test` never takes a host shortcut and
/// always runs decoders attached to stored entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    Extract,
    Test,
}

/// Bytes of one entry in the form extraction writes.
#[derive(Clone, Debug)]
pub struct Decoded {
    pub bytes: Vec<u8>,
    pub path: DecodePath,
    pub instret: Option<u64>,
}

/// One row of an extract or test report.
#[derive(Clone, Debug, Serialize)]
pub struct EntryOutcome {
    pub name: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<DecodePath>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Guest instructions retired, when the VM ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instret: Option<u64>,
}

impl EntryOutcome {
    pub fn pass(name: &str, path: DecodePath, instret: Option<u64>) -> EntryOutcome {
        EntryOutcome { name: name.to_string(), ok: true, path: Some(path), class: None, error: None, instret }
    }

    pub fn fail(name: &str, failure: &EntryFailure) -> EntryOutcome {
        EntryOutcome {
            name: name.to_string(),
            ok: false,
            path: None,
            class: Some(failure.class()),
            error: Some(failure.to_string()),
            instret: None,
        }
    }
}

/// Exit status for a command that processed entries individually.
pub fn aggregate_exit(outcomes: &[EntryOutcome]) -> u8 {
    if outcomes.iter().all(|o| o.ok) {
        EXIT_OK
    } else {
        EXIT_INTEGRITY
    }
}
