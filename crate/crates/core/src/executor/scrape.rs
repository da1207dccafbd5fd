use std::collections::HashMap;

use crate::mutation::Dictionary;

/// Shortest printable run kept as a token.
pub const MIN_TOKEN_LEN: usize = 4;

/// Most tokens kept; longer tokens win.
pub const MAX_TOKENS: usize = 512;

fn printable(b: u8) -> bool {
    b == b'\t' || (0x20..=0x7e).contains(&b)
}

/// Extracts string constants: maximal runs of printable bytes at least
/// [`MIN_TOKEN_LEN`] long, deduplicated, longest first (ties keep first
/// appearance), at most [`MAX_TOKENS`].
pub fn scrape_dictionary(bytes: &[u8]) -> Dictionary {
    let mut first_seen: HashMap<&[u8], usize> = HashMap::new();
    for run in bytes.split(|&b| !printable(b)) {
        if run.len() >= MIN_TOKEN_LEN {
            let next = first_seen.len();
            first_seen.entry(run).or_insert(next);
        }
    }
    let mut tokens: Vec<(&[u8], usize)> = first_seen.into_iter().collect();
    tokens.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(&b.1)));
    tokens.truncate(MAX_TOKENS);
    Dictionary::new(tokens.into_iter().map(|(t, _)| t.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_keywords_between_binary_noise() {
        let d = scrape_dictionary(b"\x7fELF\x01\x00REQUEST\x00\x90QUERY\x00ab\x00");
        assert!(d.contains(b"REQUEST"));
        assert!(d.contains(b"QUERY"));
        assert!(!d.contains(b"\x7fELF"));
        assert!(!d.contains(b"ab"));
    }

    #[test]
    fn binary_only_gives_empty_dictionary() {
        assert!(scrape_dictionary(&[0x00, 0xff, 0x41, 0x42, 0x43, 0x01, 0x90]).is_empty());
        assert!(scrape_dictionary(b"").is_empty());
    }

    #[test]
    fn deduplicates() {
        let d = scrape_dictionary(b"SEND\x00SEND\x00SEND\x00");
        assert_eq!(d.tokens(), &[b"SEND".to_vec()]);
    }

    #[test]
    fn orders_by_length_and_caps() {
        let d = scrape_dictionary(b"SEND\x00VISUALIZE\x00QUERY\x00TEST\x00");
        let got: Vec<&[u8]> = d.tokens().iter().map(|t| t.as_slice()).collect();
        assert_eq!(got, [&b"VISUALIZE"[..], b"QUERY", b"SEND", b"TEST"]);

        let mut blob = Vec::new();
        for i in 0..600 {
            blob.extend_from_slice(format!("tok{i:04}").as_bytes());
            blob.push(0);
        }
        blob.extend_from_slice(b"a much longer token\x00");
        let d = scrape_dictionary(&blob);
        assert_eq!(d.len(), MAX_TOKENS);
        assert_eq!(d.tokens()[0], b"a much longer token");
    }
}
