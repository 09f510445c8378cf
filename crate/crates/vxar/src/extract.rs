//! `extract` and `test`. Both walk the central directory, decode each entry
//! and check its CRC; failures are recorded per entry and processing
//! continues.

use std::path::Path;

use vxa_container::{Archive, Entry};

use crate::paths::output_path;
use crate::{DecodePath, EntryFailure, EntryOutcome, ExtractPolicy, Purpose};

#[cfg(feature = "vm")]
type Backend<'a> = crate::engine::Engine<'a>;

/// Without the VM only stored bytes can be produced.
#[cfg(not(feature = "vm"))]
struct Backend<'a> {
    archive: &'a Archive,
    policy: ExtractPolicy,
}

#[cfg(not(feature = "vm"))]
use {crate::Decoded, vxa_container::METHOD_STORE};

#[cfg(not(feature = "vm"))]
impl<'a> Backend<'a> {
    fn new(archive: &'a Archive, policy: ExtractPolicy) -> Backend<'a> {
        Backend { archive, policy }
    }

    fn decode_entry(&mut self, entry: &Entry, purpose: Purpose) -> Result<Decoded, EntryFailure> {
        let needs_vm = entry.method() != METHOD_STORE
            || (entry.vxa().is_some() && (purpose == Purpose::Test || self.policy.decode_all));
        if needs_vm {
            return Err(EntryFailure::Unsupported("decoding needs the VM, which this build lacks".into()));
        }
        let stored = self.archive.read_entry_stream(entry).map_err(|e| EntryFailure::Io(e.to_string()))?;
        let found = vxa_container::crc32(stored);
        if found != entry.crc32() {
            return Err(EntryFailure::Crc { expected: entry.crc32(), found });
        }
        Ok(Decoded { bytes: stored.to_vec(), path: DecodePath::Stored, instret: None })
    }
}

fn select<'a>(archive: &'a Archive, names: &[String]) -> Vec<Result<&'a Entry, String>> {
    if names.is_empty() {
        return archive.entries().iter().map(Ok).collect();
    }
    names.iter().map(|n| archive.entry(n).ok_or_else(|| n.clone())).collect()
}

/// Extracts the named entries (all when `names` is empty) under `out_dir`.
/// An entry is written only after its CRC checks out.
pub fn extract_archive(archive: &Archive, names: &[String], out_dir: &Path, policy: ExtractPolicy) -> Vec<EntryOutcome> {
    let mut backend = Backend::new(archive, policy);
    let mut outcomes = Vec::new();
    for selected in select(archive, names) {
        let entry = match selected {
            Ok(e) => e,
            Err(name) => {
                outcomes.push(EntryOutcome::fail(&name, &EntryFailure::NotFound));
                continue;
            }
        };
        let result = output_path(out_dir, &entry.name)
            .ok_or_else(|| EntryFailure::Io(format!("refusing unsafe entry name `{}`", entry.name)))
            .and_then(|dest| {
                let decoded = backend.decode_entry(entry, Purpose::Extract)?;
                write_file(&dest, &decoded.bytes)?;
                Ok(decoded)
            });
        outcomes.push(match result {
            Ok(d) => EntryOutcome::pass(&entry.name, d.path, d.instret),
            Err(f) => EntryOutcome::fail(&entry.name, &f),
        });
    }
    outcomes
}

fn write_file(dest: &Path, bytes: &[u8]) -> Result<(), EntryFailure> {
    let io = |e: std::io::Error| EntryFailure::Io(format!("{}: {e}", dest.display()));
    if let Some(parent) = dest.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    std::fs::write(dest, bytes).map_err(io)
}

/// Verifies every entry with its archived decoder, then every decoder: each
/// pseudo-file found among the local headers and each offset an entry
/// points at.
pub fn test_archive(archive: &Archive, policy: ExtractPolicy) -> Vec<EntryOutcome> {
    let policy = ExtractPolicy { allow_native_fastpath: false, decode_all: true, ..policy };
    let mut backend = Backend::new(archive, policy);
    let mut outcomes: Vec<EntryOutcome> = archive
        .entries()
        .iter()
        .map(|entry| match backend.decode_entry(entry, Purpose::Test) {
            Ok(d) => EntryOutcome::pass(&entry.name, d.path, d.instret),
            Err(f) => EntryOutcome::fail(&entry.name, &f),
        })
        .collect();
    let pseudo = match archive.pseudo_files() {
        Ok(pseudo) => pseudo.into_iter().map(|r| r.offset).collect(),
        Err(e) => {
            outcomes.push(EntryOutcome::fail("<local headers>", &EntryFailure::Archive(e.to_string())));
            Vec::new()
        }
    };
    #[cfg(feature = "vm")]
    {
        let referenced = archive.entries().iter().filter_map(|e| e.vxa()).map(|v| v.decoder_offset);
        let offsets: std::collections::BTreeSet<u64> = pseudo.into_iter().chain(referenced).collect();
        for offset in offsets {
            let name = format!("<decoder @{offset}>");
            outcomes.push(match backend.image(offset) {
                Ok(_) => EntryOutcome::pass(&name, DecodePath::Stored, None),
                Err(f) => EntryOutcome::fail(&name, &f),
            });
        }
    }
    #[cfg(not(feature = "vm"))]
    let _ = pseudo;
    outcomes
}
