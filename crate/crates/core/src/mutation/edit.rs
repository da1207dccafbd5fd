//! Fully-resolved byte edits. Everything random about a mutation has been
//! decided by the time an [`Edit`] exists, so applying one is deterministic.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Endian {
    Little,
    Big,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Edit {
    /// Flip one bit. Bit 0 is the most significant bit of byte 0.
    FlipBit { bit: usize },
    /// Store the low `width` bytes of `value`.
    Store {
        offset: usize,
        width: usize,
        value: u32,
        endian: Endian,
    },
    /// Wrapping add of `delta` to the `width`-byte integer at `offset`.
    Add {
        offset: usize,
        width: usize,
        delta: i32,
        endian: Endian,
    },
    XorByte { offset: usize, mask: u8 },
    Insert { offset: usize, bytes: Vec<u8> },
    Delete { offset: usize, len: usize },
    Overwrite { offset: usize, bytes: Vec<u8> },
    /// Left the input unchanged, e.g. because growing it would exceed the
    /// size limit.
    Nothing,
}

fn read(buf: &[u8], offset: usize, width: usize, endian: Endian) -> u32 {
    let bytes = &buf[offset..offset + width];
    match endian {
        Endian::Little => bytes
            .iter()
            .rev()
            .fold(0u32, |acc, &b| (acc << 8) | b as u32),
        Endian::Big => bytes.iter().fold(0u32, |acc, &b| (acc << 8) | b as u32),
    }
}

fn write(buf: &mut [u8], offset: usize, width: usize, value: u32, endian: Endian) {
    let dst = &mut buf[offset..offset + width];
    for (i, b) in dst.iter_mut().enumerate() {
        let shift = match endian {
            Endian::Little => 8 * i,
            Endian::Big => 8 * (width - 1 - i),
        };
        *b = (value >> shift) as u8;
    }
}

impl Edit {
    /// Applies the edit in place. Offsets must be valid for `buf`.
    pub fn apply(&self, buf: &mut Vec<u8>) {
        match *self {
            Edit::FlipBit { bit } => buf[bit / 8] ^= 0x80 >> (bit % 8),
            Edit::Store {
                offset,
                width,
                value,
                endian,
            } => write(buf, offset, width, value, endian),
            Edit::Add {
                offset,
                width,
                delta,
                endian,
            } => {
                let v = read(buf, offset, width, endian).wrapping_add(delta as u32);
                write(buf, offset, width, v, endian);
            }
            Edit::XorByte { offset, mask } => buf[offset] ^= mask,
            Edit::Insert { offset, ref bytes } => {
                buf.splice(offset..offset, bytes.iter().copied());
            }
            Edit::Delete { offset, len } => {
                buf.drain(offset..offset + len);
            }
            Edit::Overwrite { offset, ref bytes } => {
                buf[offset..offset + bytes.len()].copy_from_slice(bytes);
            }
            Edit::Nothing => {}
        }
    }

    pub fn is_nothing(&self) -> bool {
        matches!(self, Edit::Nothing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn applied(edit: Edit, input: &[u8]) -> Vec<u8> {
        let mut buf = input.to_vec();
        edit.apply(&mut buf);
        buf
    }

    #[test]
    fn bit_order_is_msb_first() {
        assert_eq!(applied(Edit::FlipBit { bit: 0 }, &[0x00]), [0x80]);
        assert_eq!(applied(Edit::FlipBit { bit: 7 }, &[0x00]), [0x01]);
        assert_eq!(applied(Edit::FlipBit { bit: 9 }, &[0, 0]), [0, 0x40]);
    }

    #[test]
    fn add_wraps() {
        let add = |delta, width, endian, input: &[u8]| {
            applied(
                Edit::Add {
                    offset: 0,
                    width,
                    delta,
                    endian,
                },
                input,
            )
        };
        assert_eq!(add(1, 1, Endian::Little, &[0xff]), [0x00]);
        assert_eq!(add(-1, 1, Endian::Little, &[0x00]), [0xff]);
        assert_eq!(add(1, 2, Endian::Little, &[0xff, 0x00]), [0x00, 0x01]);
        assert_eq!(add(1, 2, Endian::Big, &[0x00, 0xff]), [0x01, 0x00]);
        assert_eq!(add(1, 4, Endian::Big, &[0xff; 4]), [0; 4]);
    }

    #[test]
    fn store_respects_width_and_endianness() {
        let store = |value, width, endian| {
            applied(
                Edit::Store {
                    offset: 1,
                    width,
                    value,
                    endian,
                },
                &[9, 9, 9, 9, 9],
            )
        };
        assert_eq!(store(0x1234, 2, Endian::Little), [9, 0x34, 0x12, 9, 9]);
        assert_eq!(store(0x1234, 2, Endian::Big), [9, 0x12, 0x34, 9, 9]);
        assert_eq!(store(0xdeadbeef, 1, Endian::Big), [9, 0xef, 9, 9, 9]);
    }

    #[test]
    fn block_edits() {
        let x = b"XXXXXXXXXX";
        assert_eq!(
            applied(
                Edit::Overwrite {
                    offset: 0,
                    bytes: b"REQUEST".to_vec()
                },
                x
            ),
            b"REQUESTXXX"
        );
        assert_eq!(
            applied(
                Edit::Insert {
                    offset: 2,
                    bytes: b"ab".to_vec()
                },
                b"0123"
            ),
            b"01ab23"
        );
        assert_eq!(applied(Edit::Delete { offset: 1, len: 2 }, b"0123"), b"03");
        assert_eq!(applied(Edit::Nothing, b"0123"), b"0123");
    }
}
