//! Running decoders: archived guest decoders in the VM, and the host fast
//! paths. Shared by `add` (write-time verification), `extract`, `test` and
//! `bench`.

use std::collections::HashMap;
use std::sync::Arc;

use vxa_container::{Archive, Entry, METHOD_RLE, METHOD_STORE, METHOD_VXFLATE};
use vxa_isa::{validate_image, ExecutableImage};
use vxa_vm::{CacheMode, Status, SyscallBinding, Vm, VmConfig};

use crate::{DecodePath, Decoded, EntryFailure, ExtractPolicy, Purpose};

/// Result of one guest decode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GuestRun {
    pub output: Vec<u8>,
    pub diagnostics: Vec<u8>,
    pub instret: u64,
}

pub fn vm_config(policy: &ExtractPolicy) -> VmConfig {
    VmConfig {
        mem_limit: policy.mem_limit,
        fuel: policy.fuel,
        cache: if policy.no_cache { CacheMode::Disabled } else { CacheMode::Linked },
    }
}

/// Runs `image` over `input` in a fresh VM.
pub fn run_guest(image: &ExecutableImage, input: &[u8], config: VmConfig, verbose: bool) -> Result<GuestRun, EntryFailure> {
    let binding = SyscallBinding::new(input).verbose(verbose);
    let mut vm = Vm::new(image, config, binding).map_err(|e| EntryFailure::DecoderDamaged(e.to_string()))?;
    let status = vm.run().map_err(|e| EntryFailure::DecoderDamaged(e.to_string()))?;
    let instret = vm.instret();
    let binding = vm.into_binding();
    conclude(status, binding, instret)
}

fn conclude(status: Status, binding: SyscallBinding, instret: u64) -> Result<GuestRun, EntryFailure> {
    match status {
        Status::StreamDone | Status::Exited(0) => Ok(GuestRun {
            diagnostics: binding.diagnostics().to_vec(),
            output: binding.into_output(),
            instret,
        }),
        Status::Exited(code) => Err(EntryFailure::DecoderReported {
            code,
            message: String::from_utf8_lossy(binding.diagnostics()).into_owned(),
        }),
        Status::Trapped(t) => Err(EntryFailure::Trap { kind: t.kind.name(), ordinal: t.kind.ordinal(), pc: t.pc, vaddr: t.vaddr }),
        Status::Running => unreachable!("run returned while still running"),
    }
}

/// Decodes entries of one archive. Decoder images are parsed once per
/// pseudo-file; with `reuse_vm` each decoder also keeps its VM between
/// entries.
pub struct Engine<'a> {
    archive: &'a Archive,
    policy: ExtractPolicy,
    images: HashMap<u64, Arc<ExecutableImage>>,
    sessions: HashMap<u64, Vm>,
}

impl<'a> Engine<'a> {
    pub fn new(archive: &'a Archive, policy: ExtractPolicy) -> Engine<'a> {
        Engine { archive, policy, images: HashMap::new(), sessions: HashMap::new() }
    }

    pub fn image(&mut self, offset: u64) -> Result<Arc<ExecutableImage>, EntryFailure> {
        if let Some(img) = self.images.get(&offset) {
            return Ok(img.clone());
        }
        let bytes = self.archive.decoder_image_at(offset).map_err(|e| EntryFailure::DecoderDamaged(e.to_string()))?;
        let img = Arc::new(validate_image(&bytes).map_err(|e| EntryFailure::DecoderDamaged(e.to_string()))?);
        self.images.insert(offset, img.clone());
        Ok(img)
    }

    /// Runs the decoder at `offset` over `input`.
    pub fn run_decoder(&mut self, offset: u64, input: &[u8]) -> Result<GuestRun, EntryFailure> {
        let verbose = self.policy.verbose;
        let binding = SyscallBinding::new(input).verbose(verbose);
        let mut vm = match self.sessions.remove(&offset) {
            Some(mut vm) => {
                vm.rebind(binding).map_err(|e| EntryFailure::DecoderDamaged(e.to_string()))?;
                vm
            }
            None => {
                let image = self.image(offset)?;
                Vm::new(&image, vm_config(&self.policy), binding).map_err(|e| EntryFailure::DecoderDamaged(e.to_string()))?
            }
        };
        let before = vm.instret();
        let status = vm.run().map_err(|e| EntryFailure::DecoderDamaged(e.to_string()))?;
        let instret = vm.instret() - before;
        if self.policy.reuse_vm && status == Status::StreamDone {
            // Park the machine at the instruction after `done`; the next
            // entry's rebind drops this stream's binding.
            let binding = vm.binding().clone();
            self.sessions.insert(offset, vm);
            return conclude(status, binding, instret);
        }
        conclude(status, vm.into_binding(), instret)
    }

    /// Decodes `entry` according to the policy and checks size and CRC.
    pub fn decode_entry(&mut self, entry: &Entry, purpose: Purpose) -> Result<Decoded, EntryFailure> {
        let stored = self.archive.read_entry_stream(entry).map_err(|e| EntryFailure::Io(e.to_string()))?;
        let vxa = entry.vxa();
        let method = entry.method();
        if method == METHOD_STORE {
            check(stored, entry.uncompressed_size(), entry.crc32())?;
            let Some(vxa) = vxa.filter(|_| purpose == Purpose::Test || self.policy.decode_all) else {
                return Ok(Decoded { bytes: stored.to_vec(), path: DecodePath::Stored, instret: None });
            };
            let run = self.run_decoder(vxa.decoder_offset, stored)?;
            if let Some(info) = entry.decoded() {
                check(&run.output, info.size, info.crc32)?;
            }
            return Ok(Decoded { bytes: run.output, path: DecodePath::Vm, instret: Some(run.instret) });
        }
        let host = match vxa {
            None if method == METHOD_VXFLATE => true,
            Some(_) if purpose == Purpose::Extract && self.policy.allow_native_fastpath => native_available(method),
            _ => false,
        };
        let decoded = if host {
            let bytes = host_decode(method, stored, entry.uncompressed_size())?;
            Decoded { bytes, path: DecodePath::Host, instret: None }
        } else {
            let vxa = vxa.ok_or_else(|| EntryFailure::Unsupported(format!("method {method:#06x} without a decoder")))?;
            let run = self.run_decoder(vxa.decoder_offset, stored)?;
            Decoded { bytes: run.output, path: DecodePath::Vm, instret: Some(run.instret) }
        };
        check(&decoded.bytes, entry.uncompressed_size(), entry.crc32())?;
        Ok(decoded)
    }
}

/// Checks decoded bytes against a recorded size and CRC.
pub fn check(bytes: &[u8], size: u64, crc: u32) -> Result<(), EntryFailure> {
    if bytes.len() as u64 != size {
        return Err(EntryFailure::Size { expected: size, found: bytes.len() as u64 });
    }
    let found = vxa_container::crc32(bytes);
    if found != crc {
        return Err(EntryFailure::Crc { expected: crc, found });
    }
    Ok(())
}

fn native_available(method: u16) -> bool {
    cfg!(feature = "native") && matches!(method, METHOD_VXFLATE | METHOD_RLE)
}

fn host_decode(method: u16, stream: &[u8], size: u64) -> Result<Vec<u8>, EntryFailure> {
    let result = match method {
        METHOD_VXFLATE => vxa_codecs::vxflate::decode(stream, size),
        #[cfg(feature = "native")]
        METHOD_RLE => vxa_codecs::rle::decode(stream, size),
        _ => return Err(EntryFailure::Unsupported(format!("no host decoder for method {method:#06x}"))),
    };
    result.map_err(|e| EntryFailure::HostDecode(e.to_string()))
}
