//! Built-in instrumented targets with seeded bugs.

mod keyword_server;
mod spin_hang;
mod tlv_parser;

pub use keyword_server::{KeywordServer, KEYWORDS, LAYOUT_LIMIT, MAX_PAGES};
pub use spin_hang::{SpinHang, MAGIC};
pub use tlv_parser::{TlvParser, SAFE_DEPTH, TAG_MASK};

use super::Target;
use crate::error::{Error, Result};

pub const BUILTIN_TARGETS: [&str; 3] = ["keyword_server", "tlv_parser", "spin_hang"];

pub fn builtin_target(name: &str) -> Result<Box<dyn Target>> {
    match name {
        "keyword_server" => Ok(Box::new(KeywordServer)),
        "tlv_parser" => Ok(Box::new(TlvParser)),
        "spin_hang" => Ok(Box::new(SpinHang)),
        _ => Err(Error::UnknownTarget(name.to_string())),
    }
}
