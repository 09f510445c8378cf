//! `bench`: guest decode cost per entry, cache speedup, native comparison and
//! decoder storage overhead.

use std::time::{Duration, Instant};

use serde::Serialize;
use vxa_container::Archive;
use vxa_vm::VmConfig;

use crate::engine::{run_guest, vm_config, GuestRun};
use crate::{CliError, EntryFailure, ExtractPolicy};

#[derive(Clone, Debug, Serialize)]
pub struct EntryBench {
    pub name: String,
    pub codec: String,
    pub stored_size: u64,
    pub output_size: u64,
    pub instret: u64,
    /// Output and instret identical across every run, cached or not.
    pub deterministic: bool,
    /// Fastest run with the fragment cache.
    pub vm_seconds: f64,
    /// Fastest run decoding every instruction every time.
    pub no_cache_seconds: f64,
    pub cache_speedup: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub native_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vm_native_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecoderBench {
    pub offset: u64,
    pub image_size: u64,
    pub compressed_size: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub archive_size: u64,
    pub repetitions: u32,
    pub entries: Vec<EntryBench>,
    pub decoders: Vec<DecoderBench>,
    /// Sum of compressed decoder images.
    pub decoder_bytes: u64,
    /// `decoder_bytes` as a percentage of the archive size.
    pub overhead_percent: f64,
}

/// Times `repetitions` fresh-VM decodes of every entry that has a decoder.
pub fn bench(archive: &Archive, repetitions: u32, policy: &ExtractPolicy) -> Result<BenchReport, CliError> {
    let reps = repetitions.max(1);
    let decoders: Vec<DecoderBench> = archive
        .pseudo_files()?
        .into_iter()
        .map(|r| DecoderBench { offset: r.offset, image_size: r.header.uncompressed_size, compressed_size: r.header.compressed_size })
        .collect();
    let decoder_bytes = decoders.iter().map(|d| d.compressed_size).sum();
    let mut entries = Vec::new();
    for entry in archive.entries() {
        let Some(vxa) = entry.vxa() else { continue };
        let stream = archive.read_entry_stream(entry)?;
        let mut row = EntryBench {
            name: entry.name.clone(),
            codec: vxa.codec(),
            stored_size: stream.len() as u64,
            output_size: 0,
            instret: 0,
            deterministic: false,
            vm_seconds: 0.0,
            no_cache_seconds: 0.0,
            cache_speedup: 0.0,
            native_seconds: None,
            vm_native_ratio: None,
            error: None,
        };
        if let Err(f) = bench_entry(archive, vxa.decoder_offset, stream, entry.uncompressed_size(), reps, policy, &mut row) {
            row.error = Some(f.to_string());
        }
        entries.push(row);
    }
    let archive_size = archive.len();
    Ok(BenchReport {
        archive_size,
        repetitions: reps,
        entries,
        decoders,
        decoder_bytes,
        overhead_percent: 100.0 * decoder_bytes as f64 / archive_size.max(1) as f64,
    })
}

fn timed(image: &vxa_isa::ExecutableImage, stream: &[u8], config: VmConfig) -> Result<(GuestRun, Duration), EntryFailure> {
    let start = Instant::now();
    let run = run_guest(image, stream, config, false)?;
    Ok((run, start.elapsed()))
}

fn bench_entry(
    archive: &Archive,
    decoder_offset: u64,
    stream: &[u8],
    #[cfg_attr(not(feature = "native"), allow(unused_variables))] size: u64,
    reps: u32,
    policy: &ExtractPolicy,
    row: &mut EntryBench,
) -> Result<(), EntryFailure> {
    let bytes = archive.decoder_image_at(decoder_offset).map_err(|e| EntryFailure::DecoderDamaged(e.to_string()))?;
    let image = vxa_isa::validate_image(&bytes).map_err(|e| EntryFailure::DecoderDamaged(e.to_string()))?;
    let cached = VmConfig { cache: vxa_vm::CacheMode::Linked, ..vm_config(policy) };
    let uncached = VmConfig { cache: vxa_vm::CacheMode::Disabled, ..cached };

    let (first, mut best) = timed(&image, stream, cached)?;
    let mut deterministic = true;
    for _ in 1..reps {
        let (run, t) = timed(&image, stream, cached)?;
        deterministic &= run == first;
        best = best.min(t);
    }
    let mut best_uncached = Duration::MAX;
    for _ in 0..reps {
        let (run, t) = timed(&image, stream, uncached)?;
        deterministic &= run == first;
        best_uncached = best_uncached.min(t);
    }
    row.output_size = first.output.len() as u64;
    row.instret = first.instret;
    row.deterministic = deterministic;
    row.vm_seconds = best.as_secs_f64();
    row.no_cache_seconds = best_uncached.as_secs_f64();
    row.cache_speedup = row.no_cache_seconds / row.vm_seconds.max(1e-9);

    #[cfg(feature = "native")]
    if let Ok(c) = vxa_codecs::codec(&row.codec) {
        let mut best_native = Duration::MAX;
        for _ in 0..reps {
            let start = Instant::now();
            let out = (c.host_decode)(stream, size);
            best_native = best_native.min(start.elapsed());
            if out.as_deref().ok() != Some(first.output.as_slice()) {
                row.error = Some("host decoder disagrees with the archived decoder".into());
            }
        }
        row.native_seconds = Some(best_native.as_secs_f64());
        row.vm_native_ratio = Some(row.vm_seconds / best_native.as_secs_f64().max(1e-9));
    }
    Ok(())
}

pub fn render(report: &BenchReport) -> String {
    let mut out = format!(
        "{:<24} {:>12} {:>6} {:>10} {:>10} {:>8} {:>10} {:>8}\n",
        "name", "instret", "det", "vm s", "nocache s", "speedup", "native s", "vm/nat"
    );
    for e in &report.entries {
        if let Some(err) = &e.error {
            out += &format!("{:<24} error: {err}\n", e.name);
            continue;
        }
        out += &format!(
            "{:<24} {:>12} {:>6} {:>10.4} {:>10.4} {:>7.1}x {:>10} {:>8}\n",
            e.name,
            e.instret,
            if e.deterministic { "OK" } else { "DIFF" },
            e.vm_seconds,
            e.no_cache_seconds,
            e.cache_speedup,
            e.native_seconds.map_or("-".into(), |s| format!("{s:.4}")),
            e.vm_native_ratio.map_or("-".into(), |r| format!("{r:.1}")),
        );
    }
    for d in &report.decoders {
        out += &format!("decoder @{}: {} bytes, {} compressed\n", d.offset, d.image_size, d.compressed_size);
    }
    out += &format!(
        "decoders: {} of {} archive bytes ({:.2}%)\n",
        report.decoder_bytes, report.archive_size, report.overhead_percent
    );
    out
}
