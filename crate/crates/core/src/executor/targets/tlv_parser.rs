//! A relaxed type-length-value decoder with a pretty-printer, loosely shaped
//! like BER: a tag byte whose [`TAG_MASK`] bit marks a constructed
//! (nested) value, then a short-form length byte or a long-form length
//! (`0x80 | n` followed by `n` big-endian length bytes). Lengths that run
//! past the end are clamped rather than rejected.
//!
//! Seeded bug: below [`SAFE_DEPTH`] levels of nesting the printer switches to
//! a compact layout that keeps the length in a one-byte column table; a
//! long-form length above 255 indexes past it and panics.

use std::borrow::Cow;

use crate::executor::{Recorder, Target, TargetOutcome};
use crate::site;

pub const TAG_MASK: u8 = 0x20;
pub const SAFE_DEPTH: usize = 16;

const ARTIFACT: &[u8] = b"\x7fELF\x01\x01\x01\x00\x00\x00\x00\x00\x00\x00\x00\x00\
\x55\x89\xe5\x83\xec\x28\xc7\x45\xf4\x00\x00\x00\x00\
BOOLEAN\x00INTEGER\x00OCTET STRING\x00NULL\x00UTF8String\x00SEQUENCE\x00\
[APPLICATION %u]\x00[CONTEXT %u]\x00[PRIVATE %u]\x00\
<truncated>\x00bad length\x00\x90\x90\xc9\xc3";

#[derive(Debug, Default, Clone, Copy)]
pub struct TlvParser;

fn depth_site(depth: usize) -> u64 {
    site!("tlv.depth") ^ (depth as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

struct Printer {
    columns: [u8; 256],
}

impl Printer {
    fn element(&mut self, depth: usize, length: usize, rec: &mut Recorder) {
        if depth > SAFE_DEPTH {
            rec.visit(site!("tlv.print.compact"));
            self.columns[length] = depth as u8;
        } else {
            rec.visit(site!("tlv.print.indent"));
        }
    }
}

fn parse_primitive(tag: u8, value: &[u8], rec: &mut Recorder) {
    match tag & 0x1f {
        0x01 => {
            rec.visit(site!("tlv.bool"));
            if value.len() == 1 && value[0] != 0 {
                rec.visit(site!("tlv.bool.true"));
            }
        }
        0x02 => {
            rec.visit(site!("tlv.int"));
            match value.len() {
                0 => rec.visit(site!("tlv.int.empty")),
                1..=4 => rec.visit(site!("tlv.int.small")),
                _ => rec.visit(site!("tlv.int.big")),
            }
            if value.first().is_some_and(|&b| b & 0x80 != 0) {
                rec.visit(site!("tlv.int.negative"));
            }
        }
        0x04 | 0x0c => {
            rec.visit(site!("tlv.string"));
            if value.iter().all(u8::is_ascii_graphic) {
                rec.visit(site!("tlv.string.printable"));
            }
        }
        0x05 => {
            rec.visit(site!("tlv.null"));
            if !value.is_empty() {
                rec.visit(site!("tlv.null.nonempty"));
            }
        }
        0x1f => rec.visit(site!("tlv.tag.extended")),
        _ => rec.visit(site!("tlv.other")),
    }
}

/// Decodes the elements in `buf`. Returns `false` on a malformed header.
fn parse_elements(buf: &[u8], depth: usize, printer: &mut Printer, rec: &mut Recorder) -> bool {
    rec.visit(depth_site(depth));
    let mut pos = 0;
    while pos < buf.len() {
        rec.visit(site!("tlv.element"));
        let tag = buf[pos];
        pos += 1;
        match tag >> 6 {
            0 => rec.visit(site!("tlv.class.universal")),
            1 => rec.visit(site!("tlv.class.application")),
            2 => rec.visit(site!("tlv.class.context")),
            _ => rec.visit(site!("tlv.class.private")),
        }
        let Some(&first) = buf.get(pos) else {
            rec.visit(site!("tlv.truncated"));
            return false;
        };
        pos += 1;
        let length = if first & 0x80 == 0 {
            rec.visit(site!("tlv.len.short"));
            first as usize
        } else {
            rec.visit(site!("tlv.len.long"));
            let n = (first & 0x7f) as usize;
            if n == 0 || n > 4 || pos + n > buf.len() {
                rec.visit(site!("tlv.len.bad"));
                return false;
            }
            let value = buf[pos..pos + n]
                .iter()
                .fold(0usize, |acc, &b| (acc << 8) | b as usize);
            pos += n;
            if value > u8::MAX as usize {
                rec.visit(site!("tlv.len.wide"));
            }
            value
        };
        printer.element(depth, length, rec);
        let end = pos.saturating_add(length).min(buf.len());
        if end - pos < length {
            rec.visit(site!("tlv.len.clamped"));
        }
        let value = &buf[pos..end];
        pos = end;
        if tag & TAG_MASK == TAG_MASK {
            rec.visit(site!("tlv.constructed"));
            if !parse_elements(value, depth + 1, printer, rec) {
                rec.visit(site!("tlv.nested.error"));
                return false;
            }
        } else {
            parse_primitive(tag, value, rec);
        }
    }
    true
}

impl Target for TlvParser {
    fn name(&self) -> &str {
        "tlv_parser"
    }

    fn run(&self, input: &[u8], rec: &mut Recorder) -> TargetOutcome {
        rec.visit(site!("tlv.start"));
        let mut printer = Printer { columns: [0; 256] };
        if parse_elements(input, 0, &mut printer, rec) {
            rec.visit(site!("tlv.ok"));
        } else {
            rec.visit(site!("tlv.error"));
        }
        TargetOutcome::Ok
    }

    fn artifact(&self) -> Option<Cow<'_, [u8]>> {
        Some(Cow::Borrowed(ARTIFACT))
    }
}

#[cfg(test)]
pub(crate) fn nested(depth: usize, inner: &[u8]) -> Vec<u8> {
    let mut msg = inner.to_vec();
    for _ in 0..depth {
        let mut outer = vec![0x30, msg.len().min(0x7f) as u8];
        outer.extend_from_slice(&msg);
        msg = outer;
    }
    msg
}
