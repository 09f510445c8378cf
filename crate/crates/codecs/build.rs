//! Assembles the guest decoders in `guest/` into VXE images.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::{env, fs};

const DECODERS: [&str; 4] = ["vxflate", "vxsf", "rle", "pcm1"];

fn main() {
    let out_dir = PathBuf::from(env::var_os("OUT_DIR").unwrap());
    let mut index = String::new();
    for name in DECODERS {
        let src_path = format!("guest/{name}.s");
        println!("cargo:rerun-if-changed={src_path}");
        let source = fs::read_to_string(&src_path).unwrap_or_else(|e| panic!("{src_path}: {e}"));
        let image = vxa_isa::assemble(&source).unwrap_or_else(|e| panic!("{src_path}: {e}"));
        let bytes = image.to_bytes();
        vxa_isa::validate_image(&bytes).unwrap_or_else(|e| panic!("{src_path}: {e}"));
        let dest = out_dir.join(format!("{name}.vxe"));
        fs::write(&dest, bytes).unwrap();
        writeln!(
            index,
            "pub const {}: &[u8] = include_bytes!({:?});",
            name.to_uppercase(),
            dest.display().to_string()
        )
        .unwrap();
    }
    fs::write(out_dir.join("guest_images.rs"), index).unwrap();
}
