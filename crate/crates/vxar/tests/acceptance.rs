//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vxa_codecs::{bundled_decoder, pcm1, vxflate, vxsf, CodecKind, REGISTRY};
use vxa_container::{Archive, ArchiveWriter, EntryOptions, METHOD_STORE, METHOD_VXFLATE};
use vxa_isa::{assemble, validate_image, ExecutableImage};
use vxa_vm::{CacheMode, Status, SyscallBinding, TrapKind, Vm, VmConfig};
use vxar::add::{AddOptions, Adder};
use vxar::engine::{run_guest, Engine};
use vxar::extract::test_archive;
use vxar::{ExtractPolicy, Purpose};

type Verdict = Result<String, String>;

fn main() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("round-trip correctness", round_trip),
        ("differential decoding", differential),
        ("sandbox containment", containment),
        ("determinism", determinism),
        ("amortization", amortization),
        ("compression sanity", compression),
        ("corruption detection", corruption),
        ("baseline-reader compatibility", baseline),
    ];
    let mut failed = 0;
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|n| n.trim().parse().ok()).collect());
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("criterion {}: PASS {name} ({detail}; {secs:.1}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({why}; {secs:.1}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(why())
    }
}

// ---- corpus -------------------------------------------------------------

fn random_bytes(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    let mut v = vec![0; n];
    rng.fill_bytes(&mut v);
    v
}

const LINES: [&str; 12] = [
    "The archive carries its own decoders, so old files stay readable.\n",
    "Each decoder runs in a small sandboxed virtual machine.\n",
    "Decoders read the encoded stream on stdin and write raw data to stdout.\n",
    "Only five system calls exist: read, write, exit, setperm and done.\n",
    "A decoder stored once serves every file that uses its codec.\n",
    "Readers that ignore the extension still list every file.\n",
    "Stored entries extract without running any guest code at all.\n",
    "Fragments of guest code are decoded once and then cached.\n",
    "Direct branches between fragments are patched to jump straight through.\n",
    "Fuel bounds how long a hostile decoder may spin.\n",
    "No page is ever writable and executable at the same time.\n",
    "Checksums over the decoded bytes catch corrupted entries.\n",
];

fn repetitive_text(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(n + 80);
    while out.len() < n {
        out.extend_from_slice(LINES[rng.gen_range(0..LINES.len())].as_bytes());
    }
    out.truncate(n);
    out
}

/// `seconds` of a 440 Hz tone, 44.1 kHz mono 16-bit.
fn sine_wav(seconds: usize) -> Vec<u8> {
    let samples: Vec<i16> = (0..44_100 * seconds)
        .map(|n| ((n as f64 * 440.0 * std::f64::consts::TAU / 44_100.0).sin() * 16_000.0).round() as i16)
        .collect();
    pcm1::make_wav(1, 44_100, &samples)
}

fn small_file(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let n = rng.gen_range(0..=4096);
    match rng.gen_range(0..3) {
        0 => random_bytes(rng, n),
        1 => repetitive_text(rng, n),
        _ => {
            let run = rng.gen_range(1..40);
            (0..n).map(|i| b"ab\0"[(i / run) % 3]).collect()
        }
    }
}

/// Relative path -> contents.
fn corpus() -> BTreeMap<String, Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut files = BTreeMap::new();
    files.insert("random.bin".to_string(), random_bytes(&mut rng, 1 << 20));
    files.insert("repetitive.txt".to_string(), repetitive_text(&mut rng, 1 << 20));
    files.insert("sine.wav".to_string(), sine_wav(10));
    for i in 0..500 {
        files.insert(format!("small/{:02}/f{i:03}.dat", i % 17), small_file(&mut rng));
    }
    files
}

fn write_tree(root: &Path, files: &BTreeMap<String, Vec<u8>>) {
    for (name, data) in files {
        let p = root.join(name);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, data).unwrap();
    }
}

fn vxar_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vxar"))
}

fn run(mut cmd: Command) -> Output {
    cmd.stdin(Stdio::null());
    cmd.output().expect("spawn")
}

fn describe(o: &Output) -> String {
    format!("status {:?}, stderr: {}", o.status, String::from_utf8_lossy(&o.stderr).lines().take(5).collect::<Vec<_>>().join(" | "))
}

fn build_archive(files: &[(String, Vec<u8>)]) -> Archive {
    let mut adder = Adder::new(Vec::new(), AddOptions::default()).unwrap();
    for (name, data) in files {
        adder.add(name, data).unwrap();
    }
    let (bytes, report) = adder.finish().unwrap();
    assert!(report.failed.is_empty(), "{:?}", report.failed);
    Archive::from_bytes(bytes).unwrap()
}

// ---- 1 -------------------------------------------------------------------

fn round_trip() -> Verdict {
    let files = corpus();
    let dir = tempfile::tempdir().unwrap();
    write_tree(&dir.path().join("corpus"), &files);
    let mut add = vxar_bin();
    add.current_dir(dir.path()).args(["add", "c.vxa", "corpus"]);
    let o = run(add);
    ensure(o.status.success(), || format!("add failed: {}", describe(&o)))?;
    let mut extract = vxar_bin();
    extract.current_dir(dir.path()).args(["extract", "c.vxa", "-C", "out"]);
    let o = run(extract);
    ensure(o.status.success(), || format!("extract failed: {}", describe(&o)))?;

    let archive = Archive::open(dir.path().join("c.vxa")).unwrap();
    ensure(archive.entries().len() == files.len(), || format!("{} entries for {} files", archive.entries().len(), files.len()))?;
    let mut methods = BTreeMap::new();
    for e in archive.entries() {
        *methods.entry(e.method()).or_insert(0) += 1;
    }
    let mut bad = Vec::new();
    for (name, data) in &files {
        match std::fs::read(dir.path().join("out/corpus").join(name)) {
            Ok(got) if &got == data => {}
            _ => bad.push(name.clone()),
        }
    }
    ensure(bad.is_empty(), || format!("{} files differ, first {}", bad.len(), bad[0]))?;
    Ok(format!("{} files byte-exact, methods {methods:?}", files.len()))
}

// ---- 2 -------------------------------------------------------------------

fn diff_config() -> VmConfig {
    VmConfig { mem_limit: 4 << 20, fuel: 1 << 32, cache: CacheMode::Linked }
}

fn guest(image: &ExecutableImage, stream: &[u8]) -> Result<Vec<u8>, Status> {
    let mut vm = Vm::new(image, diff_config(), SyscallBinding::new(stream)).unwrap();
    match vm.run().unwrap() {
        Status::StreamDone | Status::Exited(0) => Ok(vm.into_binding().into_output()),
        s => Err(s),
    }
}

fn random_signal(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let channels = rng.gen_range(1..=2u16);
    let frames = rng.gen_range(0..3000usize);
    let kind = rng.gen_range(0..5);
    let (f, amp) = (rng.gen_range(0.001..0.3), rng.gen_range(0.0..32767.0));
    let samples: Vec<i16> = (0..frames * channels as usize)
        .map(|i| match kind {
            0 => rng.gen(),
            1 => ((i as f64 * f).sin() * amp) as i16,
            2 => if rng.gen_bool(0.5) { i16::MIN } else { i16::MAX },
            3 => rng.gen_range(-8..8),
            _ => (((i as f64 * f).sin() * amp) as i16).saturating_add(rng.gen_range(-50..50)),
        })
        .collect();
    pcm1::make_wav(channels, rng.gen_range(8000..96_000), &samples)
}

fn random_data(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let n = rng.gen_range(0..2500);
    match rng.gen_range(0..5) {
        0 => random_bytes(rng, n),
        1 => repetitive_text(rng, n),
        2 => {
            let alphabet = rng.gen_range(1..=4u8);
            (0..n).map(|_| rng.gen_range(0..alphabet)).collect()
        }
        3 => {
            let mut v = Vec::new();
            while v.len() < n {
                let len = rng.gen_range(1..400);
                v.extend(std::iter::repeat(rng.gen::<u8>()).take(len));
            }
            v
        }
        _ => {
            let len = rng.gen_range(1..64);
            let seed = random_bytes(rng, len);
            (0..n).map(|i| seed[i % seed.len()] ^ (rng.gen_ratio(1, 50) as u8)).collect()
        }
    }
}

const DIFF_CASES: usize = 10_000;

fn differential() -> Verdict {
    let mut summary = Vec::new();
    for c in REGISTRY.iter() {
        let image = validate_image(c.decoder_image).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(c.method) ^ 0xd1ff);
        let mut bytes = 0usize;
        for case in 0..DIFF_CASES {
            let (raw, stream) = match (c.name, c.kind) {
                ("pcm1", _) => {
                    let wav = random_signal(&mut rng);
                    let enc = pcm1::encode(&wav).unwrap();
                    (wav, enc)
                }
                (_, CodecKind::Redec) => {
                    let raw = random_data(&mut rng);
                    let sf = vxsf::compress(&raw);
                    (raw, sf)
                }
                _ => {
                    let raw = random_data(&mut rng);
                    let enc = (c.encode.unwrap())(&raw).unwrap();
                    (raw, enc)
                }
            };
            let size = if c.kind == CodecKind::Redec { stream.len() as u64 } else { raw.len() as u64 };
            let host = (c.host_decode)(&stream, size).map_err(|e| format!("{}: host rejects case {case}: {e}", c.name))?;
            ensure(host == raw, || format!("{}: host oracle is lossy on case {case}", c.name))?;
            let out = guest(&image, &stream).map_err(|s| format!("{}: guest {s:?} on case {case}", c.name))?;
            ensure(out == host, || format!("{}: guest and host differ on case {case}", c.name))?;
            bytes += raw.len();
        }
        summary.push(format!("{} {DIFF_CASES} cases/{bytes} bytes", c.name));
    }
    Ok(summary.join(", "))
}

// ---- 3 -------------------------------------------------------------------

const SANDBOX_MEM: u64 = 4 << 20;
const SANDBOX_FUEL: u64 = 100_000;

enum Expect {
    Trap(TrapKind),
    Exit(u32),
}

fn adversarial() -> Vec<(&'static str, String, Expect)> {
    use Expect::*;
    use TrapKind::*;
    vec![
        ("oob-load", ".entry s\ns: MOVI r1, 0x7ffffff0\nLDW r0, [r1+0]\nSYS 0\n".into(), Trap(OutOfBounds)),
        ("oob-store", ".entry s\ns: MOVI r1, 0x400000\nSTB r0, [r1+0]\nSYS 0\n".into(), Trap(OutOfBounds)),
        ("oob-wrap", ".entry s\ns: MOVI r1, 0xfffffffe\nLDW r0, [r1+0]\nSYS 0\n".into(), Trap(OutOfBounds)),
        ("store-to-text", ".entry s\ns: MOVI r1, s\nSTW r0, [r1+0]\nSYS 0\n".into(), Trap(PermissionFault)),
        ("read-into-text", ".entry s\ns: MOVI r0, 0\nMOVI r1, s\nMOVI r2, 4\nSYS 1\nSYS 0\n".into(), Trap(PermissionFault)),
        ("jump-to-data", ".entry s\ns: MOVI r1, d\nJMPR r1\n.data\nd: .byte 0x50, 0\n".into(), Trap(PermissionFault)),
        ("jump-to-unmapped", ".entry s\ns: MOVI r1, 0x20000\nJMPR r1\n".into(), Trap(PermissionFault)),
        ("mid-instruction-jump", ".entry s\ns: MOVI r1, 0x1001\nJMPR r1\n".into(), Trap(InvalidInstruction)),
        ("invalid-opcode", ".entry s\ns: MOVI r0, 0\n.byte 0xff, 0xff\n".into(), Trap(InvalidInstruction)),
        ("divide-by-zero", ".entry s\ns: MOVI r1, 5\nDIVU r1, r2\nSYS 0\n".into(), Trap(DivideByZero)),
        // setperm must refuse W|X and leave the page unmapped, so the jump faults.
        (
            "wx-setperm",
            "
            .entry s
            s:  MOVI r0, 0x10000
                MOVI r1, 4096
                MOVI r2, 7
                SYS 3
                MOVI r3, -1
                BNE r0, r3, s
                MOVI r1, 0x10000
                JMPR r1
            "
            .into(),
            Trap(PermissionFault),
        ),
        // Code written into a writable page never becomes executable.
        (
            "execute-written-page",
            "
            .entry s
            s:  MOVI r0, 0x10000
                MOVI r1, 4096
                MOVI r2, 3
                SYS 3
                MOVI r1, 0x10000
                MOVI r2, 0x50
                STW r2, [r1+0]
                JMPR r1
            "
            .into(),
            Trap(PermissionFault),
        ),
        ("wx-setperm-result", ".entry s\ns: MOVI r0, 0x10000\nMOVI r1, 4096\nMOVI r2, 7\nSYS 3\nSYS 0\n".into(), Exit(u32::MAX)),
        ("bad-fd-write", ".entry s\ns: MOVI r0, 9\nMOVI r1, s\nMOVI r2, 4\nSYS 2\nSYS 0\n".into(), Exit(u32::MAX)),
        ("bad-fd-read", ".entry s\ns: MOVI r0, 1\nMOVI r1, 0x10000\nMOVI r2, 4\nSYS 1\nSYS 0\n".into(), Exit(u32::MAX)),
        ("infinite-loop", ".entry s\ns: JMP s\n".into(), Trap(FuelExhausted)),
        ("bad-syscall", ".entry s\ns: SYS 9\n".into(), Trap(BadSyscall)),
        ("stack-overflow", ".entry f\nf: CALL f\n".into(), Trap(StackFault)),
        ("stack-underflow", ".entry s\ns: RET\n".into(), Trap(StackFault)),
    ]
}

fn expected_exit(e: &Expect) -> i32 {
    match e {
        Expect::Trap(k) => 70 + i32::from(k.ordinal()),
        Expect::Exit(n) => (*n & 0xff) as i32,
    }
}

fn valgrind_available() -> bool {
    Command::new("valgrind").arg("--version").output().is_ok_and(|o| o.status.success())
}

fn containment() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cases = adversarial();
    let instrumented = valgrind_available();
    for (name, src, expect) in &cases {
        let image = assemble(src).map_err(|e| format!("{name}: {e}"))?;
        for cache in [CacheMode::Disabled, CacheMode::Unlinked, CacheMode::Linked] {
            let config = VmConfig { mem_limit: SANDBOX_MEM, fuel: SANDBOX_FUEL, cache };
            let mut vm = Vm::new(&image, config, SyscallBinding::new(&b"abcd"[..])).unwrap();
            let status = vm.run().unwrap();
            let ok = match (expect, status) {
                (Expect::Trap(k), Status::Trapped(t)) => t.kind == *k,
                (Expect::Exit(n), Status::Exited(m)) => *n == m,
                _ => false,
            };
            ensure(ok, || format!("{name}: got {status:?} with {cache:?}"))?;
        }

        let path = dir.path().join(format!("{name}.vxe"));
        std::fs::write(&path, image.to_bytes()).unwrap();
        let mut cmd = if instrumented {
            let mut c = Command::new("valgrind");
            c.args(["-q", "--error-exitcode=99", "--leak-check=no"]).arg(env!("CARGO_BIN_EXE_vxar"));
            c
        } else {
            vxar_bin()
        };
        cmd.arg("run").arg(&path).args(["--mem-limit", &SANDBOX_MEM.to_string(), "--fuel", &SANDBOX_FUEL.to_string()]);
        let o = run(cmd);
        ensure(o.status.code() == Some(expected_exit(expect)), || format!("{name}: {}", describe(&o)))?;
    }
    let tool = if instrumented { "each also under valgrind memcheck, zero errors" } else { "valgrind unavailable, run uninstrumented" };
    ensure(instrumented, || format!("{} images classified, but {tool}", cases.len()))?;
    Ok(format!("{} images classified exactly in all cache modes, {tool}", cases.len()))
}

// ---- 4 -------------------------------------------------------------------

fn determinism() -> Verdict {
    let files: Vec<_> = corpus().into_iter().collect();
    let archive = build_archive(&files);
    let mut images = BTreeMap::new();
    let mut checked = 0;
    for e in archive.entries() {
        let Some(vxa) = e.vxa() else { continue };
        let image = images
            .entry(vxa.decoder_offset)
            .or_insert_with(|| validate_image(&archive.decoder_image_at(vxa.decoder_offset).unwrap()).unwrap());
        let stream = archive.read_entry_stream(e).unwrap();
        let linked = VmConfig { cache: CacheMode::Linked, ..VmConfig::default() };
        let first = run_guest(image, stream, linked, true).map_err(|f| format!("{}: {f}", e.name))?;
        for _ in 1..5 {
            let again = run_guest(image, stream, linked, true).unwrap();
            ensure(again == first, || format!("{}: repeated decode differs", e.name))?;
        }
        for cache in [CacheMode::Disabled, CacheMode::Unlinked] {
            let other = run_guest(image, stream, VmConfig { cache, ..linked }, true).unwrap();
            ensure(other == first, || format!("{}: {cache:?} differs from the fragment cache", e.name))?;
        }
        checked += 1;
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.vxa");
    std::fs::write(&path, archive.bytes()).unwrap();
    let mut outs = Vec::new();
    for flag in [None, Some("--no-cache")] {
        let mut cmd = vxar_bin();
        cmd.args(["test", "--json"]).arg(&path).args(flag);
        let o = run(cmd);
        ensure(o.status.success(), || describe(&o))?;
        let mut rows: Vec<serde_json::Value> = serde_json::from_slice(&o.stdout).unwrap();
        rows.iter_mut().for_each(|r| drop(r.as_object_mut().unwrap().remove("path")));
        outs.push(rows);
    }
    ensure(outs[0] == outs[1], || "`test` reports differ with --no-cache".into())?;
    Ok(format!("{checked} decoded entries x5 identical, uncached and unlinked identical"))
}

// ---- 5 -------------------------------------------------------------------

fn bench_json(path: &Path, reps: u32) -> Result<serde_json::Value, String> {
    let mut cmd = vxar_bin();
    cmd.arg("bench").arg(path).args(["--json", "--repetitions", &reps.to_string()]);
    let o = run(cmd);
    ensure(o.status.success(), || describe(&o))?;
    serde_json::from_slice(&o.stdout).map_err(|e| e.to_string())
}

fn amortization() -> Verdict {
    let image_stored = vxflate::encode(bundled_decoder("vxflate").unwrap()).len() as u64;
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut percents = Vec::new();
    for n in [1usize, 10, 100] {
        let files: Vec<_> = (0..n).map(|i| (format!("doc{i}.txt"), repetitive_text(&mut rng, 8192))).collect();
        let archive = build_archive(&files);
        ensure(archive.entries().iter().all(|e| e.method() == METHOD_VXFLATE), || format!("N={n}: not all vxflate"))?;
        let pseudo = archive.pseudo_files().unwrap();
        ensure(pseudo.len() == 1, || format!("N={n}: {} pseudo-files", pseudo.len()))?;

        // The same entries without any decoder: the difference is one
        // pseudo-file plus the per-entry pointer extensions.
        let mut plain = ArchiveWriter::new(Vec::new());
        for e in archive.entries() {
            let raw = &files.iter().find(|(name, _)| *name == e.name).unwrap().1;
            plain
                .write_entry(&e.name, e.method(), raw, archive.read_entry_stream(e).unwrap(), EntryOptions::default())
                .unwrap();
        }
        plain.finish().unwrap();
        let plain_len = plain.into_inner().len() as u64;
        let pointer_bytes = 2 * 20 * n as u64;
        let decoder_bytes = archive.len() - plain_len - pointer_bytes;
        let record = 34 + image_stored;
        ensure(decoder_bytes == record, || format!("N={n}: decoders cost {decoder_bytes} bytes, expected {record}"))?;

        let path = dir.path().join(format!("n{n}.vxa"));
        std::fs::write(&path, archive.bytes()).unwrap();
        let report = bench_json(&path, 1)?;
        ensure(report["decoder_bytes"] == image_stored, || format!("N={n}: bench reports {}", report["decoder_bytes"]))?;
        percents.push(report["overhead_percent"].as_f64().unwrap());
    }
    ensure(percents.windows(2).all(|w| w[1] < w[0]), || format!("overhead not shrinking: {percents:?}"))?;

    let text = repetitive_text(&mut ChaCha8Rng::seed_from_u64(0x5eed), 1 << 20);
    let archive = build_archive(&[("repetitive.txt".into(), text)]);
    let path = dir.path().join("big.vxa");
    std::fs::write(&path, archive.bytes()).unwrap();
    let report = bench_json(&path, 3)?;
    let row = &report["entries"][0];
    let speedup = row["cache_speedup"].as_f64().unwrap();
    ensure(speedup >= 2.0, || format!("fragment cache speedup {speedup:.2}x < 2x"))?;
    Ok(format!(
        "one {image_stored}-byte decoder, overhead {:.3}% -> {:.3}% -> {:.4}%, cache speedup {speedup:.1}x, vm/native {:.0}x",
        percents[0],
        percents[1],
        percents[2],
        row["vm_native_ratio"].as_f64().unwrap_or(f64::NAN)
    ))
}

// ---- 6 -------------------------------------------------------------------

fn compression() -> Verdict {
    let text = repetitive_text(&mut ChaCha8Rng::seed_from_u64(0x5eed), 1 << 20);
    let wav = sine_wav(10);
    let archive = build_archive(&[("repetitive.txt".into(), text.clone()), ("sine.wav".into(), wav.clone())]);
    let t = archive.entry("repetitive.txt").unwrap();
    let w = archive.entry("sine.wav").unwrap();
    ensure(t.vxa().map(|v| v.codec()).as_deref() == Some("vxflate"), || "text not vxflate".into())?;
    ensure(w.vxa().map(|v| v.codec()).as_deref() == Some("pcm1"), || "wav not pcm1".into())?;
    let text_ratio = t.compressed_size() as f64 / text.len() as f64;
    let wav_ratio = w.compressed_size() as f64 / wav.len() as f64;
    ensure(text_ratio < 0.2, || format!("vxflate ratio {text_ratio:.3}"))?;
    ensure(wav_ratio < 0.7, || format!("pcm1 ratio {wav_ratio:.3}"))?;

    let mut engine = Engine::new(&archive, ExtractPolicy::default());
    let decoded = engine.decode_entry(w, Purpose::Extract).map_err(|f| f.to_string())?;
    ensure(decoded.bytes == wav, || "pcm1 guest output differs from the WAV".into())?;
    let host = pcm1::decode(archive.read_entry_stream(w).unwrap(), wav.len() as u64).map_err(|e| e.to_string())?;
    ensure(host == wav, || "pcm1 host output differs from the WAV".into())?;
    Ok(format!("vxflate {text_ratio:.3}, pcm1 {wav_ratio:.3} lossless"))
}

// ---- 7 -------------------------------------------------------------------

const PAYLOAD_CLASSES: [&str; 4] = ["crc-mismatch", "size-mismatch", "decoder-error", "trap"];

type Failures = Vec<(String, &'static str)>;

#[derive(Debug, PartialEq)]
enum Flip {
    /// `test` failed; the failing items and their classes.
    Detected(Failures),
    /// The archive no longer opens.
    Unreadable,
    /// `test` passed and every entry and decoder still decodes to the
    /// original bytes.
    NoOp,
    /// `test` passed although something decodes differently.
    Missed,
}

fn classify(bytes: Vec<u8>, original: &Archive, originals: &[(String, Vec<u8>)]) -> Flip {
    let Ok(archive) = Archive::from_bytes(bytes) else { return Flip::Unreadable };
    let outcomes = test_archive(&archive, ExtractPolicy::default());
    let failed: Failures = outcomes.iter().filter(|o| !o.ok).map(|o| (o.name.clone(), o.class.unwrap())).collect();
    if !failed.is_empty() {
        return Flip::Detected(failed);
    }
    let same_entries = archive.entries().len() == originals.len()
        && originals.iter().all(|(name, raw)| {
            archive.entry(name).is_some_and(|e| {
                Engine::new(&archive, ExtractPolicy { decode_all: true, ..ExtractPolicy::default() })
                    .decode_entry(e, Purpose::Test)
                    .is_ok_and(|d| &d.bytes == raw)
            })
        });
    let same_decoders = original
        .pseudo_files()
        .unwrap()
        .iter()
        .all(|p| archive.decoder_image_at(p.offset).ok() == original.decoder_image_at(p.offset).ok());
    if same_entries && same_decoders {
        Flip::NoOp
    } else {
        Flip::Missed
    }
}

#[derive(Default, Debug)]
struct Tally {
    flips: usize,
    caught: usize,
    unexpected: Vec<(u64, Failures)>,
    noop: Vec<u64>,
    missed: Vec<u64>,
}

/// Flips every bit of `range` in turn. `expected` judges the failures `test`
/// reports; `open_ok` allows the archive to stop opening altogether.
fn sweep(
    archive: &Archive,
    originals: &[(String, Vec<u8>)],
    range: std::ops::Range<u64>,
    expected: &dyn Fn(&Failures) -> bool,
    open_ok: bool,
) -> Tally {
    let mut t = Tally::default();
    for bit in range.start * 8..range.end * 8 {
        let mut bytes = archive.bytes().to_vec();
        bytes[(bit / 8) as usize] ^= 1 << (bit % 8);
        t.flips += 1;
        match classify(bytes, archive, originals) {
            Flip::Detected(f) if expected(&f) => t.caught += 1,
            Flip::Detected(f) => t.unexpected.push((bit, f)),
            Flip::Unreadable if open_ok => t.caught += 1,
            Flip::Unreadable => t.unexpected.push((bit, vec![("<open>".into(), "corrupt-archive")])),
            Flip::NoOp => t.noop.push(bit),
            Flip::Missed => t.missed.push(bit),
        }
    }
    t
}

fn corruption() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let samples: Vec<i16> = (0..600).map(|n| ((n as f64 * 0.0627).sin() * 5000.0) as i16).collect();
    let originals: Vec<(String, Vec<u8>)> = vec![
        ("notes.txt".into(), repetitive_text(&mut rng, 600)),
        ("more.txt".into(), repetitive_text(&mut rng, 300)),
        ("tone.wav".into(), pcm1::make_wav(1, 44_100, &samples)),
    ];
    let archive = build_archive(&originals);
    ensure(test_archive(&archive, ExtractPolicy::default()).iter().all(|o| o.ok), || "pristine archive fails".into())?;
    let text = archive.entry("notes.txt").unwrap();
    let wav = archive.entry("tone.wav").unwrap();
    ensure(wav.method() != METHOD_STORE, || "tone.wav was not compressed".into())?;
    let text_decoder = text.vxa().unwrap().decoder_offset;
    let pseudo = archive.pseudo_files().unwrap().into_iter().find(|p| p.offset == text_decoder).unwrap();
    let users: Vec<String> =
        archive.entries().iter().filter(|e| e.vxa().map(|v| v.decoder_offset) == Some(text_decoder)).map(|e| e.name.clone()).collect();
    let decoder_item = format!("<decoder @{text_decoder}>");
    let end = archive.end_record();

    let payload_only = |name: &'static str| {
        move |f: &Failures| f.len() == 1 && f[0].0 == name && PAYLOAD_CLASSES.contains(&f[0].1)
    };
    let users_fail = |f: &Failures| {
        users.iter().all(|u| f.iter().any(|(n, c)| n == u && ["decoder-damaged", "trap"].contains(c)))
            // A damaged header also stops the walk over local headers, which
            // then reports instead of the decoder itself.
            && f.iter().any(|(n, c)| (*n == decoder_item && *c == "decoder-damaged") || *c == "corrupt-archive")
            && f.iter().all(|(n, c)| users.contains(n) || *n == decoder_item || *c == "corrupt-archive")
    };
    let any = |f: &Failures| !f.is_empty();
    let text_payload = payload_only("notes.txt");
    let wav_payload = payload_only("tone.wav");
    let regions: [(&str, std::ops::Range<u64>, &dyn Fn(&Failures) -> bool, bool); 4] = [
        ("vxflate payload", text.data_offset..text.data_offset + text.compressed_size(), &text_payload, false),
        ("pcm1 payload", wav.data_offset..wav.data_offset + wav.compressed_size(), &wav_payload, false),
        ("pseudo-file", pseudo.offset..pseudo.data_offset + pseudo.header.compressed_size, &users_fail, false),
        ("central directory", end.cd_offset..end.cd_offset + end.cd_size, &any, true),
    ];

    let dir = tempfile::tempdir().unwrap();
    let mut details = Vec::new();
    let mut problems = Vec::new();
    for (label, range, expected, open_ok) in regions {
        let t = sweep(&archive, &originals, range.clone(), expected, open_ok);
        if let Some((bit, f)) = t.unexpected.first() {
            problems.push(format!("{label}: {} flips reported unexpectedly, e.g. bit {bit}: {f:?}", t.unexpected.len()));
        }
        if let Some(bit) = t.missed.first() {
            problems.push(format!("{label}: {} flips change content undetected, e.g. bit {bit}", t.missed.len()));
        }
        if let Some(bit) = t.noop.first() {
            problems.push(format!("{label}: {} flips pass `test` decoding to identical bytes, e.g. bit {bit}", t.noop.len()));
        }
        details.push(format!("{label} {}/{}", t.caught, t.flips));

        // One flip per region through the command line: nonzero exit, no signal.
        let mut bytes = archive.bytes().to_vec();
        bytes[(range.start + (range.end - range.start) / 2) as usize] ^= 0x10;
        let path = dir.path().join("flipped.vxa");
        std::fs::write(&path, &bytes).unwrap();
        let mut cmd = vxar_bin();
        cmd.arg("test").arg(&path);
        let o = run(cmd);
        let expected_exit: &[i32] = if open_ok { &[2, 3] } else { &[3] };
        if !o.status.code().is_some_and(|c| expected_exit.contains(&c)) {
            problems.push(format!("{label}: `vxar test` {}", describe(&o)));
        }
    }
    let summary = format!("single-bit flips caught: {}", details.join(", "));
    if problems.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; {}", problems.join("; ")))
    }
}

// ---- 8 -------------------------------------------------------------------

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn baseline() -> Verdict {
    let root = workspace_root();
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let target = root.join("target/baseline-reader");
    let o = Command::new(&cargo)
        .current_dir(&root)
        .args(["build", "--quiet", "-p", "vxar", "--no-default-features", "--target-dir"])
        .arg(&target)
        .output()
        .unwrap();
    ensure(o.status.success(), || format!("baseline build failed: {}", describe(&o)))?;
    let o = Command::new(&cargo)
        .current_dir(&root)
        .args(["tree", "-p", "vxar", "--no-default-features", "-e", "normal", "--prefix", "none"])
        .output()
        .unwrap();
    ensure(o.status.success(), || format!("cargo tree failed: {}", describe(&o)))?;
    let tree = String::from_utf8_lossy(&o.stdout);
    let leaked: Vec<_> = ["vxa-vm", "vxa-isa", "vxa-codecs"].into_iter().filter(|c| tree.contains(c)).collect();
    ensure(leaked.is_empty(), || format!("baseline build depends on {leaked:?}"))?;
    let exe = target.join("debug").join(format!("vxar{}", std::env::consts::EXE_SUFFIX));

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let raw = repetitive_text(&mut rng, 5000);
    let files: Vec<(String, Vec<u8>)> = vec![
        ("plain/noise.bin".into(), random_bytes(&mut rng, 3000)),
        ("plain/empty".into(), Vec::new()),
        ("docs/readme.txt".into(), repetitive_text(&mut rng, 20_000)),
        ("tone.wav".into(), sine_wav(1)),
        ("packed.vxsf".into(), vxsf::compress(&raw)),
        ("plain/tiny".into(), b"x".to_vec()),
    ];
    let archive = build_archive(&files);
    let stored: Vec<_> = archive.entries().iter().filter(|e| e.method() == METHOD_STORE).map(|e| e.name.clone()).collect();
    ensure(stored.len() == 4, || format!("expected 4 stored entries, got {stored:?}"))?;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.vxa");
    std::fs::write(&path, archive.bytes()).unwrap();

    let o = run({
        let mut c = Command::new(&exe);
        c.arg("list").arg(&path).arg("--json");
        c
    });
    ensure(o.status.success(), || format!("baseline list: {}", describe(&o)))?;
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&o.stdout).unwrap();
    let mut listed: Vec<_> = rows.iter().map(|r| r["name"].as_str().unwrap().to_string()).collect();
    let mut names: Vec<_> = files.iter().map(|(n, _)| n.clone()).collect();
    listed.sort();
    names.sort();
    ensure(listed == names, || format!("baseline lists {listed:?}"))?;

    let out = dir.path().join("out");
    let o = run({
        let mut c = Command::new(&exe);
        c.arg("extract").arg(&path).arg("-C").arg(&out);
        c
    });
    ensure(o.status.code() == Some(3), || format!("baseline extract: {}", describe(&o)))?;
    for (name, data) in &files {
        let got = std::fs::read(out.join(name)).ok();
        if stored.contains(name) {
            ensure(got.as_ref() == Some(data), || format!("stored entry {name} not extracted exactly"))?;
        } else {
            ensure(got.is_none(), || format!("compressed entry {name} written without decoding"))?;
        }
    }
    Ok(format!(
        "no VM or codec crates linked, all {} entries listed, {} stored entries extracted exactly",
        files.len(),
        stored.len()
    ))
}
