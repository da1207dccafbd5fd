//! A line-oriented content server. Every line must start with one of the
//! command keywords; anything else hits the error handler and ends the
//! session. This is a behavioral model of a small text protocol server, not
//! a port of any particular program.
//!
//! Seeded bug: `VISUALIZE` lays out every stored page plus one extra slot
//! once at least two pages were sent and their payload exceeds
//! [`LAYOUT_LIMIT`] bytes. The extra slot is empty, and unwrapping it
//! panics.

use std::borrow::Cow;

use crate::executor::{Recorder, Target, TargetOutcome};
use crate::site;

pub const MAX_PAGES: usize = 8;
pub const LAYOUT_LIMIT: usize = 32;

pub const KEYWORDS: [&str; 5] = ["SEND", "QUERY", "INTERACT", "VISUALIZE", "REQUEST"];

const ARTIFACT: &[u8] = b"\x7fELF\x02\x01\x01\x00\x00\x00\x00\x00\x00\x00\x00\x00\
\x02\x00\x3e\x00\x01\x00\x00\x00\x10\x11\x40\x00\x00\x00\x00\x00\
SEND\x00QUERY\x00INTERACT\x00VISUALIZE\x00REQUEST\x00\
edit\x00delete\x00link\x00fetch\x00list\x00stat\x00\
\x48\x89\xe5\x41\x57\x41\x56\x53\x48\x83\xec\x18\
unknown command\x00page store full\x00no such page\x00\
%s %d\n\x00content-server v1.2\x00\
\x00\x00\x00\xc3\x90\x90\x0f\x1f\x40\x00";

#[derive(Debug, Default, Clone, Copy)]
pub struct KeywordServer;

#[derive(Default)]
struct Session {
    pages: [Option<Vec<u8>>; MAX_PAGES],
    used: usize,
    sends: usize,
    payload: usize,
    links: usize,
    last: Option<usize>,
}

/// One edge per ordered pair of consecutive commands.
fn transition_site(prev: Option<usize>, cur: usize) -> u64 {
    let prev = prev.map_or(0, |p| p as u64 + 1);
    site!("kw.transition") ^ (prev * 8 + cur as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn parse_index(arg: &[u8]) -> Option<usize> {
    if arg.is_empty() || arg.len() > 3 || !arg.iter().all(u8::is_ascii_digit) {
        return None;
    }
    std::str::from_utf8(arg).ok()?.parse().ok()
}

fn split_word(s: &[u8]) -> (&[u8], &[u8]) {
    match s.iter().position(|&b| b == b' ') {
        Some(i) => (&s[..i], &s[i + 1..]),
        None => (s, &[]),
    }
}

impl Session {
    fn send(&mut self, data: &[u8], rec: &mut Recorder) {
        rec.visit(site!("kw.send"));
        if data.is_empty() {
            rec.visit(site!("kw.send.empty"));
            return;
        }
        if self.used == MAX_PAGES {
            rec.visit(site!("kw.send.full"));
            return;
        }
        match data.len() {
            1..=3 => rec.visit(site!("kw.send.tiny")),
            4..=15 => rec.visit(site!("kw.send.small")),
            _ => rec.visit(site!("kw.send.large")),
        }
        if data[0] == b'/' {
            rec.visit(site!("kw.send.path"));
        }
        if data.iter().any(|b| b.is_ascii_uppercase()) {
            rec.visit(site!("kw.send.caps"));
        }
        self.pages[self.used] = Some(data.to_vec());
        self.used += 1;
        self.sends += 1;
        self.payload += data.len();
    }

    fn query(&mut self, arg: &[u8], rec: &mut Recorder) {
        rec.visit(site!("kw.query"));
        let Some(idx) = parse_index(arg) else {
            rec.visit(site!("kw.query.bad"));
            return;
        };
        match self.pages.get(idx) {
            None => rec.visit(site!("kw.query.range")),
            Some(None) => rec.visit(site!("kw.query.missing")),
            Some(Some(page)) => {
                rec.visit(site!("kw.query.found"));
                if page.len() > 8 {
                    rec.visit(site!("kw.query.long"));
                }
            }
        }
    }

    fn interact(&mut self, arg: &[u8], rec: &mut Recorder) {
        rec.visit(site!("kw.interact"));
        let (index, action) = split_word(arg);
        let Some(idx) = parse_index(index).filter(|&i| i < self.used) else {
            rec.visit(site!("kw.interact.bad"));
            return;
        };
        let (verb, rest) = split_word(action);
        match verb {
            b"edit" => {
                rec.visit(site!("kw.interact.edit"));
                if let Some(page) = self.pages[idx].as_mut() {
                    page.extend_from_slice(rest);
                    self.payload += rest.len();
                }
            }
            b"delete" => {
                rec.visit(site!("kw.interact.delete"));
                if self.pages[idx].take().is_some() {
                    rec.visit(site!("kw.interact.deleted"));
                }
            }
            b"link" => {
                rec.visit(site!("kw.interact.link"));
                self.links += 1;
                if self.links > 2 {
                    rec.visit(site!("kw.interact.many_links"));
                }
            }
            _ => rec.visit(site!("kw.interact.unknown")),
        }
    }

    fn visualize(&mut self, rec: &mut Recorder) {
        rec.visit(site!("kw.vis"));
        if self.used == 0 {
            rec.visit(site!("kw.vis.none"));
            return;
        }
        for page in self.pages[..self.used].iter().flatten() {
            rec.visit(site!("kw.vis.page"));
            if page.len() > 16 {
                rec.visit(site!("kw.vis.wide"));
            }
        }
        if self.sends < 2 {
            return;
        }
        rec.visit(site!("kw.vis.multi"));
        if self.payload <= LAYOUT_LIMIT / 2 {
            return;
        }
        rec.visit(site!("kw.vis.big"));
        if self.payload > LAYOUT_LIMIT {
            // The layout reserves one column past the last page.
            let columns = self.used + 1;
            let mut width = 0;
            for slot in &self.pages[..columns.min(MAX_PAGES)] {
                width += slot.as_ref().unwrap().len();
            }
            if columns > MAX_PAGES {
                width += self.pages[columns - 1].as_ref().map_or(0, Vec::len);
            }
            if width > 0 {
                rec.visit(site!("kw.vis.layout"));
            }
        }
    }

    fn request(&mut self, arg: &[u8], rec: &mut Recorder) {
        rec.visit(site!("kw.request"));
        let (method, rest) = split_word(arg);
        match method {
            b"fetch" => {
                rec.visit(site!("kw.request.fetch"));
                if parse_index(rest).is_some_and(|i| i < self.used) {
                    rec.visit(site!("kw.request.fetch.hit"));
                }
            }
            b"list" => {
                rec.visit(site!("kw.request.list"));
                for _ in 0..self.used {
                    rec.visit(site!("kw.request.list.item"));
                }
            }
            b"stat" => {
                rec.visit(site!("kw.request.stat"));
                if self.payload > 64 {
                    rec.visit(site!("kw.request.stat.heavy"));
                }
            }
            _ => rec.visit(site!("kw.request.unknown")),
        }
    }
}

impl Target for KeywordServer {
    fn name(&self) -> &str {
        "keyword_server"
    }

    fn run(&self, input: &[u8], rec: &mut Recorder) -> TargetOutcome {
        rec.visit(site!("kw.start"));
        let mut session = Session::default();
        for line in input.split(|&b| b == b'\n') {
            rec.visit(site!("kw.recv"));
            if line.is_empty() {
                rec.visit(site!("kw.blank"));
                continue;
            }
            let Some(keyword) = KEYWORDS.iter().find(|k| line.starts_with(k.as_bytes())) else {
                rec.visit(site!("kw.error"));
                return TargetOutcome::Ok;
            };
            let kind = KEYWORDS.iter().position(|k| k == keyword).expect("matched keyword");
            rec.visit(transition_site(session.last, kind));
            session.last = Some(kind);
            let rest = &line[keyword.len()..];
            let arg = rest.strip_prefix(b" ").unwrap_or(rest);
            match *keyword {
                "SEND" => session.send(arg, rec),
                "QUERY" => session.query(arg, rec),
                "INTERACT" => session.interact(arg, rec),
                "VISUALIZE" => session.visualize(rec),
                _ => session.request(arg, rec),
            }
        }
        rec.visit(site!("kw.end"));
        TargetOutcome::Ok
    }

    fn artifact(&self) -> Option<Cow<'_, [u8]>> {
        Some(Cow::Borrowed(ARTIFACT))
    }
}
