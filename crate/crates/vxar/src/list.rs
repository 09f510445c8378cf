//! `list`: the central directory, optionally merged with the pseudo-files
//! found by walking local headers.

use serde::Serialize;
use vxa_container::{Archive, ContainerError, EntryHeader, METHOD_RLE, METHOD_SPECIAL, METHOD_STORE, METHOD_VXFLATE};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ListRow {
    pub name: String,
    pub pseudo: bool,
    pub offset: u64,
    pub method: u16,
    pub method_name: &'static str,
    pub compressed_size: u64,
    pub uncompressed_size: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub codec: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoder_offset: Option<u64>,
}

pub fn method_name(method: u16) -> &'static str {
    match method {
        METHOD_STORE => "store",
        METHOD_VXFLATE => "vxflate",
        METHOD_RLE => "rle",
        METHOD_SPECIAL => "special",
        _ => "unknown",
    }
}

fn row(name: String, pseudo: bool, offset: u64, h: &EntryHeader) -> ListRow {
    let vxa = h.vxa();
    ListRow {
        name,
        pseudo,
        offset,
        method: h.method,
        method_name: method_name(h.method),
        compressed_size: h.compressed_size,
        uncompressed_size: h.uncompressed_size,
        codec: vxa.map(|v| v.codec()),
        decoder_offset: vxa.map(|v| v.decoder_offset),
    }
}

/// Actual entries in central-directory order. With `show_pseudo`, decoder
/// pseudo-files are added and all rows are ordered by archive offset.
pub fn list(archive: &Archive, show_pseudo: bool) -> Result<Vec<ListRow>, ContainerError> {
    let mut rows: Vec<ListRow> = archive
        .entries()
        .iter()
        .map(|e| row(e.name.clone(), false, e.local_header_offset, &e.header))
        .collect();
    if show_pseudo {
        for rec in archive.pseudo_files()? {
            rows.push(row(String::new(), true, rec.offset, &rec.header));
        }
        rows.sort_by_key(|r| r.offset);
    }
    Ok(rows)
}

pub fn render(rows: &[ListRow]) -> String {
    let mut out = format!("{:>10} {:>10} {:<8} {:<8} {}\n", "size", "stored", "method", "codec", "name");
    for r in rows {
        let name = if r.pseudo { format!("<decoder @{}>", r.offset) } else { r.name.clone() };
        out += &format!(
            "{:>10} {:>10} {:<8} {:<8} {}\n",
            r.uncompressed_size,
            r.compressed_size,
            r.method_name,
            r.codec.as_deref().unwrap_or("-"),
            name
        );
    }
    out
}
