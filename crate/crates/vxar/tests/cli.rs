use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use vxa_codecs::{pcm1, rle, vxflate, vxsf};
use vxa_container::{Archive, ArchiveWriter, EntryOptions, METHOD_RLE, METHOD_SPECIAL, METHOD_STORE, METHOD_VXFLATE};
use vxar::add::{add_paths, AddOptions, Adder};
use vxar::extract::{extract_archive, test_archive};
use vxar::{DecodePath, ExtractPolicy};

fn vxar(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vxar")).args(args.iter().map(|a| a.as_ref())).output().unwrap()
}

fn vxar_stdin(args: &[&dyn AsRef<std::ffi::OsStr>], stdin: &[u8]) -> Output {
    use std::io::Write;
    let mut child = Command::new(env!("CARGO_BIN_EXE_vxar"))
        .args(args.iter().map(|a| a.as_ref()))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin).unwrap();
    child.wait_with_output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, data: &[u8]) -> PathBuf {
    let p = dir.join(name);
    std::fs::create_dir_all(p.parent().unwrap()).unwrap();
    std::fs::write(&p, data).unwrap();
    p
}

fn build(files: &[(&str, Vec<u8>)], codec: Option<&str>) -> Archive {
    let mut adder = Adder::new(Vec::new(), AddOptions { codec: codec.map(str::to_string), ..AddOptions::default() }).unwrap();
    for (name, data) in files {
        adder.add(name, data).unwrap();
    }
    let (bytes, report) = adder.finish().unwrap();
    assert!(report.failed.is_empty(), "{:?}", report.failed);
    Archive::from_bytes(bytes).unwrap()
}

fn text(i: usize) -> Vec<u8> {
    format!("file {i}: the quick brown fox jumps over the lazy dog. ").repeat(20 + i).into_bytes()
}

fn sine_wav(frames: usize) -> Vec<u8> {
    let samples: Vec<i16> = (0..frames).map(|i| ((i as f64 * 0.0627).sin() * 9000.0) as i16).collect();
    pcm1::make_wav(1, 44100, &samples)
}

#[test]
fn ten_text_files_share_one_decoder() {
    let files: Vec<_> = (0..10).map(|i| (format!("t{i}.txt"), text(i))).collect();
    let files: Vec<_> = files.iter().map(|(n, d)| (n.as_str(), d.clone())).collect();
    let a = build(&files, None);
    assert_eq!(a.entries().len(), 10);
    assert!(a.entries().iter().all(|e| e.method() == METHOD_VXFLATE));
    assert_eq!(a.pseudo_files().unwrap().len(), 1);
}

#[test]
fn precompressed_input_is_stored_unchanged() {
    let raw = text(3);
    let sf = vxsf::compress(&raw);
    let a = build(&[("x.vxsf", sf.clone())], None);
    let e = &a.entries()[0];
    assert_eq!(e.method(), METHOD_STORE);
    assert_eq!(a.read_entry_stream(e).unwrap(), sf.as_slice());
    assert_eq!(e.vxa().unwrap().codec(), "vxsf");
    assert_eq!(e.decoded().unwrap().size, raw.len() as u64);

    let dir = tempfile::tempdir().unwrap();
    let out = extract_archive(&a, &[], dir.path(), ExtractPolicy::default());
    assert!(out[0].ok && out[0].path == Some(DecodePath::Stored));
    assert_eq!(std::fs::read(dir.path().join("x.vxsf")).unwrap(), sf);

    let policy = ExtractPolicy { decode_all: true, ..ExtractPolicy::default() };
    let out = extract_archive(&a, &[], dir.path(), policy);
    assert!(out[0].ok && out[0].path == Some(DecodePath::Vm));
    assert_eq!(std::fs::read(dir.path().join("x.vxsf")).unwrap(), raw);
}

#[test]
fn wav_input_uses_the_special_method() {
    let wav = sine_wav(10_000);
    let a = build(&[("s.wav", wav.clone())], None);
    let e = &a.entries()[0];
    assert_eq!(e.method(), METHOD_SPECIAL);
    assert_eq!(e.vxa().unwrap().codec(), "pcm1");
    let dir = tempfile::tempdir().unwrap();
    assert!(extract_archive(&a, &[], dir.path(), ExtractPolicy::default())[0].ok);
    assert_eq!(std::fs::read(dir.path().join("s.wav")).unwrap(), wav);
}

#[test]
fn incompressible_input_is_stored_plain() {
    use rand::{RngCore, SeedableRng};
    let mut noise = vec![0u8; 5000];
    rand_chacha::ChaCha8Rng::seed_from_u64(5).fill_bytes(&mut noise);
    let a = build(&[("n.bin", noise.clone())], None);
    let e = &a.entries()[0];
    assert_eq!((e.method(), e.vxa()), (METHOD_STORE, None));
    assert!(a.pseudo_files().unwrap().is_empty());
}

#[test]
fn native_and_archived_decoders_agree() {
    let runs: Vec<u8> = (0..4000u32).map(|i| b"abcd"[(i / 37 % 4) as usize]).collect();
    let files: Vec<(&str, Vec<u8>)> = vec![("a", runs.repeat(2)), ("b", runs)];
    for codec in ["vxflate", "rle"] {
        let a = build(&files, Some(codec));
        let method = if codec == "rle" { METHOD_RLE } else { METHOD_VXFLATE };
        let vm_dir = tempfile::tempdir().unwrap();
        let native_dir = tempfile::tempdir().unwrap();
        let vm = extract_archive(&a, &[], vm_dir.path(), ExtractPolicy::default());
        let native = ExtractPolicy { allow_native_fastpath: true, ..ExtractPolicy::default() };
        let host = extract_archive(&a, &[], native_dir.path(), native);
        for (v, h) in vm.iter().zip(&host) {
            assert!(v.ok && h.ok);
            assert_eq!(v.path, Some(DecodePath::Vm));
            assert_eq!(h.path, Some(DecodePath::Host));
        }
        for (name, data) in &files {
            assert_eq!(a.entry(name).unwrap().method(), method);
            assert_eq!(&std::fs::read(vm_dir.path().join(name)).unwrap(), data);
            assert_eq!(&std::fs::read(native_dir.path().join(name)).unwrap(), data);
        }
    }
}

#[test]
fn reused_vm_decodes_several_streams_with_one_load() {
    let files: Vec<(&str, Vec<u8>)> = vec![("a", b"aaaaabbbbbbbbc".repeat(30)), ("b", vec![7; 1000]), ("c", b"q".repeat(5))];
    let a = build(&files, Some("rle"));
    let dir = tempfile::tempdir().unwrap();
    let policy = ExtractPolicy { reuse_vm: true, ..ExtractPolicy::default() };
    assert!(extract_archive(&a, &[], dir.path(), policy).iter().all(|o| o.ok));
    for (name, data) in &files {
        let host = rle::decode(&rle::encode(data), data.len() as u64).unwrap();
        assert_eq!(std::fs::read(dir.path().join(name)).unwrap(), host);
    }
}

#[test]
fn test_flags_the_damaged_entry_only() {
    let files: Vec<(&str, Vec<u8>)> = vec![("a", text(1)), ("b", text(2)), ("c", b"tiny".to_vec())];
    let a = build(&files, None);
    assert!(test_archive(&a, ExtractPolicy::default()).iter().all(|o| o.ok));

    let b = a.entry("b").unwrap();
    let mut bytes = a.bytes().to_vec();
    bytes[(b.data_offset + b.compressed_size() / 2) as usize] ^= 0x20;
    let damaged = Archive::from_bytes(bytes).unwrap();
    let out = test_archive(&damaged, ExtractPolicy::default());
    let failed: Vec<_> = out.iter().filter(|o| !o.ok).map(|o| o.name.as_str()).collect();
    assert_eq!(failed, ["b"]);
    let class = out.iter().find(|o| o.name == "b").unwrap().class.unwrap();
    assert!(["crc-mismatch", "size-mismatch", "decoder-error"].contains(&class), "{class}");

    let mut bytes = a.bytes().to_vec();
    let c = a.entry("c").unwrap();
    bytes[c.data_offset as usize] ^= 1;
    let out = test_archive(&Archive::from_bytes(bytes).unwrap(), ExtractPolicy::default());
    let c = out.iter().find(|o| o.name == "c").unwrap();
    assert_eq!(c.class, Some("crc-mismatch"));
}

#[test]
fn damaged_decoder_fails_every_user() {
    let files: Vec<(&str, Vec<u8>)> = vec![("a", text(1)), ("b", text(2)), ("w.wav", sine_wav(3000))];
    let a = build(&files, None);
    let pseudo = a.pseudo_files().unwrap();
    let vxflate_rec = pseudo.iter().find(|p| Some(p.offset) == a.entry("a").unwrap().vxa().map(|v| v.decoder_offset)).unwrap();
    let mut bytes = a.bytes().to_vec();
    bytes[(vxflate_rec.data_offset + 1) as usize] ^= 0x04;
    let out = test_archive(&Archive::from_bytes(bytes).unwrap(), ExtractPolicy::default());
    for o in &out {
        let uses_it = o.name == "a" || o.name == "b" || o.name == format!("<decoder @{}>", vxflate_rec.offset);
        assert_eq!(!o.ok, uses_it, "{o:?}");
        if uses_it {
            assert!(["decoder-damaged", "trap"].contains(&o.class.unwrap()), "{o:?}");
        }
    }
}

#[test]
fn hostile_entry_names_are_not_extracted() {
    let mut w = ArchiveWriter::new(Vec::new());
    w.write_entry("../escape", METHOD_STORE, b"x", b"x", EntryOptions::default()).unwrap();
    w.write_entry("/abs", METHOD_STORE, b"y", b"y", EntryOptions::default()).unwrap();
    w.write_entry("fine/ok", METHOD_STORE, b"z", b"z", EntryOptions::default()).unwrap();
    w.finish().unwrap();
    let a = Archive::from_bytes(w.into_inner()).unwrap();
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("out");
    let out = extract_archive(&a, &[], &dir, ExtractPolicy::default());
    let ok: Vec<_> = out.iter().map(|o| o.ok).collect();
    assert_eq!(ok, [false, false, true]);
    assert!(!root.path().join("escape").exists());
    assert_eq!(std::fs::read(dir.join("fine/ok")).unwrap(), b"z");
}

#[test]
fn command_line_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    write(&input, "a.txt", &text(4));
    write(&input, "sub/b.txt", b"b");
    write(&input, "s.wav", &sine_wav(5000));
    let archive = dir.path().join("x.vxa");
    let o = Command::new(env!("CARGO_BIN_EXE_vxar")).current_dir(dir.path()).args(["add", "x.vxa", "in"]).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let o = vxar(&[&"list", &archive]);
    let listing = String::from_utf8(o.stdout).unwrap();
    assert_eq!(listing.lines().count(), 4);
    assert!(listing.contains("in/sub/b.txt"));
    assert!(!listing.contains("<decoder"));
    let o = vxar(&[&"list", &archive, &"--show-pseudo", &"--json"]);
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let pseudo: Vec<_> = rows.as_array().unwrap().iter().filter(|r| r["pseudo"] == true).collect();
    assert_eq!(pseudo.len(), 2);
    assert!(pseudo.iter().all(|r| r["name"] == ""));

    let out = dir.path().join("out");
    let o = vxar(&[&"extract", &archive, &"-C", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["a.txt", "sub/b.txt", "s.wav"] {
        let original = std::fs::read(input.join(name)).unwrap();
        let got = std::fs::read(out.join("in").join(name)).unwrap();
        assert_eq!(got, original, "{name}");
    }

    let o = vxar(&[&"test", &archive, &"--json"]);
    assert_eq!(code(&o), 0);
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(rows.as_array().unwrap().iter().all(|r| r["ok"] == true));

    let o = vxar(&[&"bench", &archive, &"--repetitions", &"2", &"--json"]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["entries"].as_array().unwrap().iter().all(|e| e["deterministic"] == true));
    assert_eq!(report["decoders"].as_array().unwrap().len(), 2);
}

#[test]
fn empty_archive_lists_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let archive = dir.path().join("e.vxa");
    let mut w = ArchiveWriter::new(Vec::new());
    w.finish().unwrap();
    std::fs::write(&archive, w.into_inner()).unwrap();
    let o = vxar(&[&"list", &archive]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 1);
    let o = vxar(&[&"list", &archive, &"--json"]);
    assert_eq!(serde_json::from_slice::<serde_json::Value>(&o.stdout).unwrap(), serde_json::json!([]));
}

#[test]
fn exit_statuses() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&vxar(&[&"frobnicate"])), 1);
    assert_eq!(code(&vxar(&[&"list"])), 1);
    assert_eq!(code(&vxar(&[&"list", &dir.path().join("missing.vxa")])), 1);
    let junk = write(dir.path(), "junk.vxa", b"definitely not an archive");
    assert_eq!(code(&vxar(&[&"list", &junk])), 2);
    assert_eq!(code(&vxar(&[&"test", &junk])), 2);

    let good = dir.path().join("g.vxa");
    let src = write(dir.path(), "g.txt", &text(2));
    assert_eq!(code(&vxar(&[&"add", &good, &src])), 0);
    let mut bytes = std::fs::read(&good).unwrap();
    let a = Archive::from_bytes(bytes.clone()).unwrap();
    let e = &a.entries()[0];
    bytes[(e.data_offset + 3) as usize] ^= 0x80;
    let bad = write(dir.path(), "bad.vxa", &bytes);
    let o = vxar(&[&"test", &bad]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAILED"));
    assert_eq!(code(&vxar(&[&"extract", &bad, &"-C", &dir.path().join("o")])), 3);
    assert_eq!(code(&vxar(&[&"extract", &good, &"nope", &"-C", &dir.path().join("o")])), 3);
}

#[test]
fn asm_and_run() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(dir.path(), "exit.s", b".entry s\ns: MOVI r0, 0\n   SYS 0\n");
    let img = dir.path().join("exit.vxe");
    assert_eq!(code(&vxar(&[&"asm", &src, &"-o", &img])), 0);
    assert_eq!(code(&vxar_stdin(&[&"run", &img], b"")), 0);

    let spin = write(dir.path(), "spin.s", b".entry s\ns: JMP s\n");
    let spin_img = dir.path().join("spin.vxe");
    assert_eq!(code(&vxar(&[&"asm", &spin, &"-o", &spin_img])), 0);
    let o = vxar_stdin(&[&"run", &spin_img, &"--fuel", &"10"], b"");
    assert_eq!(code(&o), 75);
    assert!(String::from_utf8_lossy(&o.stderr).contains("fuel-exhausted"));

    let bad = write(dir.path(), "bad.s", b".entry s\ns: FROB r0\n");
    let o = vxar(&[&"asm", &bad, &"-o", &img]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    let rle_img = write(dir.path(), "rle.vxe", vxa_codecs::bundled_decoder("rle").unwrap());
    let data = b"aaaaaaaaaaaaaaaabbbbbbbbcd".repeat(40);
    let o = vxar_stdin(&[&"run", &rle_img], &rle::encode(&data));
    assert_eq!(code(&o), 0);
    assert_eq!(o.stdout, data);

    let vxf_img = write(dir.path(), "vxflate.vxe", vxa_codecs::bundled_decoder("vxflate").unwrap());
    let o = vxar_stdin(&[&"run", &vxf_img, &"--verbose"], &[0x01, 0x00, 0x00]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("corrupt stream"));
    let o = vxar_stdin(&[&"run", &vxf_img], &vxflate::encode(b"hello"));
    assert_eq!(o.stdout, b"hello");
}

#[test]
fn add_reports_failures_per_file() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "in/ok.txt", &text(1));
    let archive = dir.path().join("x.vxa");
    let report = add_paths(&archive, &[good.clone()], AddOptions { codec: Some("vxsf".into()), ..AddOptions::default() }).unwrap();
    assert_eq!(report.failed.len(), 1);
    assert!(report.failed[0].1.contains("not a vxsf stream"));
    let report = add_paths(&archive, &[good.clone(), good], AddOptions::default()).unwrap();
    assert_eq!((report.added.len(), report.failed.len()), (1, 1));
    assert!(add_paths(&archive, &[dir.path().join("in")], AddOptions { codec: Some("zip".into()), ..AddOptions::default() }).is_err());
}
