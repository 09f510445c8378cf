//! `add`: recognize, encode, verify in the VM, write.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use vxa_codecs::{codec, recognize, CodecDescriptor, CodecKind, Disposition};
use vxa_container::{ArchiveWriter, DecodedInfo, EntryOptions, VxaExtension, METHOD_STORE};
use vxa_isa::{validate_image, ExecutableImage};

use crate::engine::{run_guest, vm_config};
use crate::paths::collect_inputs;
use crate::{CliError, ExtractPolicy};

#[derive(Clone, Debug, Default)]
pub struct AddOptions {
    /// Force this codec instead of recognition.
    pub codec: Option<String>,
    /// VM limits for write-time verification.
    pub policy: ExtractPolicy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AddedEntry {
    pub name: String,
    pub codec: Option<&'static str>,
    pub method: u16,
    pub input_size: u64,
    pub stored_size: u64,
    /// Guest instructions spent verifying, if a decoder ran.
    pub verify_instret: Option<u64>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct AddReport {
    pub added: Vec<AddedEntry>,
    pub failed: Vec<(String, String)>,
}

/// What goes into the archive for one file.
struct Prepared {
    method: u16,
    payload: Vec<u8>,
    codec: Option<&'static CodecDescriptor>,
    decoded: Option<DecodedInfo>,
    verify_instret: Option<u64>,
}

/// Adds files to an archive, one at a time. Decoder images are parsed once
/// per codec.
pub struct Adder<W: Write> {
    writer: ArchiveWriter<W>,
    options: AddOptions,
    images: HashMap<&'static str, ExecutableImage>,
    names: HashSet<String>,
    pub report: AddReport,
}

impl<W: Write> Adder<W> {
    pub fn new(out: W, options: AddOptions) -> Result<Adder<W>, CliError> {
        if let Some(name) = &options.codec {
            codec(name).map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(Adder {
            writer: ArchiveWriter::new(out),
            options,
            images: HashMap::new(),
            names: HashSet::new(),
            report: AddReport::default(),
        })
    }

    /// Adds one file. Failures specific to this file are recorded in the
    /// report; only I/O errors on the archive itself are returned.
    pub fn add(&mut self, name: &str, data: &[u8]) -> Result<(), CliError> {
        if !self.names.insert(name.to_string()) {
            self.report.failed.push((name.to_string(), "duplicate entry name".into()));
            return Ok(());
        }
        let prepared = match self.prepare(name, data) {
            Ok(p) => p,
            Err(msg) => {
                self.report.failed.push((name.to_string(), msg));
                return Ok(());
            }
        };
        let decoder = match prepared.codec {
            Some(c) => {
                let offset = self.writer.write_decoder_pseudofile(c.decoder_image)?;
                Some(VxaExtension { decoder_offset: offset, codec_name: c.tag() })
            }
            None => None,
        };
        let options = EntryOptions { decoder, decoded: prepared.decoded };
        self.writer.write_entry(name, prepared.method, data, &prepared.payload, options)?;
        self.report.added.push(AddedEntry {
            name: name.to_string(),
            codec: prepared.codec.map(|c| c.name),
            method: prepared.method,
            input_size: data.len() as u64,
            stored_size: prepared.payload.len() as u64,
            verify_instret: prepared.verify_instret,
        });
        Ok(())
    }

    pub fn finish(mut self) -> Result<(W, AddReport), CliError> {
        self.writer.finish()?;
        Ok((self.writer.into_inner(), self.report))
    }

    fn prepare(&mut self, name: &str, data: &[u8]) -> Result<Prepared, String> {
        let (c, disposition) = match &self.options.codec {
            Some(forced) => {
                let c = codec(forced).map_err(|e| e.to_string())?;
                let d = match c.kind {
                    CodecKind::Full => Disposition::CompressWithCodec,
                    CodecKind::Redec if c.recognizes(data, name) => Disposition::StorePrecompressed,
                    CodecKind::Redec => return Err(format!("input is not a {} stream", c.name)),
                };
                (Some(c), d)
            }
            None => {
                let r = recognize(data, name);
                (r.codec, r.disposition)
            }
        };
        let plain = Prepared { method: METHOD_STORE, payload: data.to_vec(), codec: None, decoded: None, verify_instret: None };
        match (c, disposition) {
            (Some(c), Disposition::CompressWithCodec) => {
                let encode = c.encode.ok_or_else(|| format!("codec {} has no encoder", c.name))?;
                let payload = encode(data).map_err(|e| format!("{}: {e}", c.name))?;
                if payload.len() >= data.len() {
                    return Ok(plain);
                }
                let host = (c.host_decode)(&payload, data.len() as u64).map_err(|e| format!("{} host decoder: {e}", c.name))?;
                if host != data {
                    return Err(format!("{}: host decoder does not reproduce the input", c.name));
                }
                let run = self.verify(c, &payload)?;
                if run.0 != data {
                    return Err(format!("{}: archived decoder does not reproduce the input", c.name));
                }
                Ok(Prepared { method: c.method, payload, codec: Some(c), decoded: None, verify_instret: Some(run.1) })
            }
            (Some(c), Disposition::StorePrecompressed) => {
                let host = (c.host_decode)(data, data.len() as u64).map_err(|e| format!("{} host decoder: {e}", c.name))?;
                let run = self.verify(c, data)?;
                if run.0 != host {
                    return Err(format!("{}: archived decoder disagrees with the host decoder", c.name));
                }
                let decoded = DecodedInfo { size: host.len() as u64, crc32: vxa_container::crc32(&host) };
                Ok(Prepared { method: METHOD_STORE, payload: data.to_vec(), codec: Some(c), decoded: Some(decoded), verify_instret: Some(run.1) })
            }
            _ => Ok(plain),
        }
    }

    /// Decodes `payload` with the codec's bundled decoder in the VM.
    fn verify(&mut self, c: &'static CodecDescriptor, payload: &[u8]) -> Result<(Vec<u8>, u64), String> {
        if !self.images.contains_key(c.name) {
            let img = validate_image(c.decoder_image).map_err(|e| format!("{} decoder image: {e}", c.name))?;
            self.images.insert(c.name, img);
        }
        let policy = &self.options.policy;
        let run = run_guest(&self.images[c.name], payload, vm_config(policy), policy.verbose)
            .map_err(|f| format!("{}: write-time verification failed: {f}", c.name))?;
        if policy.verbose && !run.diagnostics.is_empty() {
            eprint!("{}", String::from_utf8_lossy(&run.diagnostics));
        }
        Ok((run.output, run.instret))
    }
}

/// Creates `archive` from the given files and directories.
pub fn add_paths(archive: &Path, inputs: &[PathBuf], options: AddOptions) -> Result<AddReport, CliError> {
    let files = collect_inputs(inputs)?;
    let out = File::create(archive).map_err(|e| CliError::io(archive, e))?;
    let mut adder = Adder::new(BufWriter::new(out), options)?;
    let own = std::fs::canonicalize(archive).ok();
    for (path, name) in files {
        if own.is_some() && std::fs::canonicalize(&path).ok() == own {
            continue;
        }
        match std::fs::read(&path) {
            Ok(data) => adder.add(&name, &data)?,
            Err(e) => adder.report.failed.push((name, format!("{}: {e}", path.display()))),
        }
    }
    let (out, report) = adder.finish()?;
    out.into_inner().map_err(|e| CliError::io(archive, e.into_error()))?.sync_all().map_err(|e| CliError::io(archive, e))?;
    Ok(report)
}
