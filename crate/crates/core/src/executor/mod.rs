//! In-process execution of fuzz targets.
//!
//! A target is a plain function over the input bytes that reports control
//! flow through a [`Recorder`]. Panics inside the target become crashes and
//! runaway executions become hangs; neither stops the campaign.
//!
//! External targets implement [`Target`]: call [`Recorder::visit`] with a
//! stable block identifier at every instrumentation point, keep no state
//! between calls, and return [`TargetOutcome::Failed`] (or panic) when an
//! internal check fails.

mod scrape;
pub mod targets;

use std::any::Any;
use std::borrow::Cow;
use std::cell::{Cell, RefCell};
use std::panic::{self, AssertUnwindSafe};
use std::sync::Once;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::coverage::{edge_index, TraceObservation, DEFAULT_MAP_SIZE};
use crate::error::{Error, Result};
use crate::mutation::{Dictionary, MAX_INPUT};

pub use scrape::{scrape_dictionary, MAX_TOKENS, MIN_TOKEN_LEN};

/// Default per-execution budget.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_millis(50);

/// Instrumentation events per virtual microsecond.
pub const VISITS_PER_VIRTUAL_US: u64 = 16;

/// Identifier for an instrumentation site, hashed from its name at compile
/// time.
#[macro_export]
macro_rules! site {
    ($name:expr) => {{
        const ID: u64 = $crate::hash::fnv1a($name);
        ID
    }};
}

/// What a target reports when it returns normally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetOutcome {
    Ok,
    /// An internal consistency check failed.
    Failed(String),
}

pub trait Target: Send + Sync {
    fn name(&self) -> &str;

    /// Runs one input. Must be deterministic and free of side effects that
    /// outlive the call.
    fn run(&self, input: &[u8], rec: &mut Recorder) -> TargetOutcome;

    /// Bytes standing in for the program image, scraped for dictionary
    /// tokens.
    fn artifact(&self) -> Option<Cow<'_, [u8]>> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrashKind {
    /// The target panicked (the in-process analog of a fatal signal).
    Panic(String),
    /// The target returned [`TargetOutcome::Failed`].
    Assertion(String),
}

impl CrashKind {
    pub fn message(&self) -> &str {
        match self {
            CrashKind::Panic(m) | CrashKind::Assertion(m) => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecStatus {
    Ok,
    Crash(CrashKind),
    Hang,
}

impl ExecStatus {
    pub fn is_crash(&self) -> bool {
        matches!(self, ExecStatus::Crash(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionResult {
    pub status: ExecStatus,
    pub trace: TraceObservation,
    /// Microseconds, wall-clock or virtual depending on the timing mode.
    pub duration_us: u64,
    /// Instrumentation events during the run.
    pub visits: u64,
}

/// How execution time is measured.
///
/// `Virtual` derives time from the number of instrumentation events, which
/// keeps energy assignment, hang detection and stats rows reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimingMode {
    Wall,
    #[default]
    Virtual,
}

/// Payload used to unwind out of a target that ran past its budget.
struct HangSignal;

thread_local! {
    static IN_TARGET: Cell<bool> = const { Cell::new(false) };
    static PANIC_MESSAGE: RefCell<Option<String>> = const { RefCell::new(None) };
}

static HOOK: Once = Once::new();

/// Silences the default panic report while a target runs on this thread and
/// keeps the message for the crash record instead.
fn install_panic_hook() {
    HOOK.call_once(|| {
        let previous = panic::take_hook();
        panic::set_hook(Box::new(move |info| {
            if IN_TARGET.with(Cell::get) {
                let msg = match info.location() {
                    Some(loc) => format!("{} at {}:{}", payload_message(info.payload()), loc.file(), loc.line()),
                    None => payload_message(info.payload()),
                };
                PANIC_MESSAGE.with(|m| *m.borrow_mut() = Some(msg));
            } else {
                previous(info);
            }
        }));
    });
}

fn payload_message(payload: &(dyn Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

/// Per-execution edge recorder handed to targets.
pub struct Recorder {
    counts: Vec<u8>,
    touched: Vec<u32>,
    prev: u64,
    visits: u64,
    visit_limit: u64,
    deadline: Option<Instant>,
}

impl std::fmt::Debug for Recorder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Recorder")
            .field("map_size", &self.counts.len())
            .field("touched", &self.touched.len())
            .field("visits", &self.visits)
            .finish()
    }
}

impl Recorder {
    fn new(map_size: usize) -> Self {
        Recorder {
            counts: vec![0; map_size],
            touched: Vec::new(),
            prev: 0,
            visits: 0,
            visit_limit: u64::MAX,
            deadline: None,
        }
    }

    /// Records a transition from the previously visited block into `block`.
    #[inline]
    pub fn visit(&mut self, block: u64) {
        let idx = edge_index(self.prev, block, self.counts.len());
        let cell = &mut self.counts[idx];
        if *cell == 0 {
            self.touched.push(idx as u32);
        }
        *cell = cell.saturating_add(1);
        self.prev = block;
        self.visits += 1;
        if self.visits > self.visit_limit {
            panic::resume_unwind(Box::new(HangSignal));
        }
        if self.visits & 0xfff == 0 {
            if let Some(deadline) = self.deadline {
                if Instant::now() >= deadline {
                    panic::resume_unwind(Box::new(HangSignal));
                }
            }
        }
    }

    pub fn visits(&self) -> u64 {
        self.visits
    }

    fn reset(&mut self, visit_limit: u64, deadline: Option<Instant>) {
        for &i in &self.touched {
            self.counts[i as usize] = 0;
        }
        self.touched.clear();
        self.prev = 0;
        self.visits = 0;
        self.visit_limit = visit_limit;
        self.deadline = deadline;
    }

    fn take_trace(&mut self) -> TraceObservation {
        self.touched.sort_unstable();
        let hits = self
            .touched
            .iter()
            .map(|&i| (i, self.counts[i as usize]))
            .collect();
        TraceObservation::from_sorted(hits)
    }
}

/// Runs targets with a reusable recorder.
#[derive(Debug)]
pub struct Executor {
    recorder: Recorder,
    timeout: Duration,
    timing: TimingMode,
}

impl Executor {
    pub fn new(map_size: usize, timeout: Duration, timing: TimingMode) -> Result<Self> {
        if map_size == 0 || !map_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "map size {map_size} is not a power of two"
            )));
        }
        if timeout.is_zero() {
            return Err(Error::Config("timeout must be positive".into()));
        }
        install_panic_hook();
        Ok(Executor {
            recorder: Recorder::new(map_size),
            timeout,
            timing,
        })
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn timing(&self) -> TimingMode {
        self.timing
    }

    /// Runs `input` through `target` with a fresh trace.
    ///
    /// Target panics become [`ExecStatus::Crash`] and budget overruns
    /// [`ExecStatus::Hang`]. Oversized inputs are a harness fault.
    pub fn execute(&mut self, target: &dyn Target, input: &[u8]) -> Result<ExecutionResult> {
        if input.len() > MAX_INPUT {
            return Err(Error::Harness(format!(
                "input of {} bytes exceeds the {MAX_INPUT}-byte limit",
                input.len()
            )));
        }
        let timeout_us = self.timeout.as_micros().min(u64::MAX as u128) as u64;
        let (limit, deadline) = match self.timing {
            TimingMode::Virtual => (timeout_us.saturating_mul(VISITS_PER_VIRTUAL_US), None),
            TimingMode::Wall => (u64::MAX, Some(Instant::now() + self.timeout)),
        };
        self.recorder.reset(limit, deadline);

        let started = Instant::now();
        IN_TARGET.with(|f| f.set(true));
        let rec = &mut self.recorder;
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| target.run(input, rec)));
        IN_TARGET.with(|f| f.set(false));
        let elapsed = started.elapsed();

        let mut status = match outcome {
            Ok(TargetOutcome::Ok) => ExecStatus::Ok,
            Ok(TargetOutcome::Failed(msg)) => ExecStatus::Crash(CrashKind::Assertion(msg)),
            Err(payload) if payload.is::<HangSignal>() => ExecStatus::Hang,
            Err(payload) => {
                let msg = PANIC_MESSAGE
                    .with(|m| m.borrow_mut().take())
                    .unwrap_or_else(|| payload_message(payload.as_ref()));
                ExecStatus::Crash(CrashKind::Panic(msg))
            }
        };

        let visits = self.recorder.visits();
        let duration_us = match self.timing {
            TimingMode::Virtual => 1 + visits / VISITS_PER_VIRTUAL_US,
            TimingMode::Wall => elapsed.as_micros().max(1) as u64,
        };
        if duration_us > timeout_us && status == ExecStatus::Ok {
            status = ExecStatus::Hang;
        }
        Ok(ExecutionResult {
            status,
            trace: self.recorder.take_trace(),
            duration_us,
            visits,
        })
    }
}

impl Default for Executor {
    fn default() -> Self {
        Executor::new(DEFAULT_MAP_SIZE, DEFAULT_TIMEOUT, TimingMode::default())
            .expect("default executor configuration is valid")
    }
}

/// Dictionary scraped from the target's artifact, if it has one.
pub fn target_dictionary(target: &dyn Target) -> Dictionary {
    target
        .artifact()
        .map(|a| scrape_dictionary(&a))
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed;

    impl Target for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }

        fn run(&self, input: &[u8], rec: &mut Recorder) -> TargetOutcome {
            rec.visit(site!("fixed.entry"));
            for &b in input {
                match b {
                    b'p' => panic!("boom"),
                    b'f' => return TargetOutcome::Failed("check".into()),
                    b'l' => loop {
                        rec.visit(site!("fixed.loop"));
                    },
                    _ => rec.visit(site!("fixed.byte")),
                }
            }
            TargetOutcome::Ok
        }
    }

    #[test]
    fn classifies_outcomes() {
        let mut exec = Executor::default();
        let ok = exec.execute(&Fixed, b"ab").unwrap();
        assert_eq!(ok.status, ExecStatus::Ok);
        assert_eq!(ok.visits, 3);
        // start->entry, entry->byte and byte->byte
        assert_eq!(ok.trace.len(), 3);

        let crash = exec.execute(&Fixed, b"ap").unwrap();
        match crash.status {
            ExecStatus::Crash(CrashKind::Panic(msg)) => assert!(msg.contains("boom"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(!crash.trace.is_empty());

        let failed = exec.execute(&Fixed, b"f").unwrap();
        assert_eq!(
            failed.status,
            ExecStatus::Crash(CrashKind::Assertion("check".into()))
        );

        let hang = exec.execute(&Fixed, b"l").unwrap();
        assert_eq!(hang.status, ExecStatus::Hang);
        assert!(hang.visits > DEFAULT_TIMEOUT.as_micros() as u64 * VISITS_PER_VIRTUAL_US);
    }

    #[test]
    fn wall_clock_hang_detection() {
        let mut exec = Executor::new(1 << 10, Duration::from_millis(5), TimingMode::Wall).unwrap();
        let started = Instant::now();
        let res = exec.execute(&Fixed, b"l").unwrap();
        assert_eq!(res.status, ExecStatus::Hang);
        assert!(started.elapsed() < Duration::from_secs(5));
        assert_eq!(exec.execute(&Fixed, b"x").unwrap().status, ExecStatus::Ok);
    }

    #[test]
    fn traces_are_fresh_and_repeatable() {
        let mut exec = Executor::default();
        let a = exec.execute(&Fixed, b"xyz").unwrap();
        exec.execute(&Fixed, b"p").unwrap();
        let b = exec.execute(&Fixed, b"xyz").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oversized_input_is_a_harness_fault() {
        let mut exec = Executor::default();
        let big = vec![0u8; MAX_INPUT + 1];
        assert!(matches!(exec.execute(&Fixed, &big), Err(Error::Harness(_))));
    }

    #[test]
    fn rejects_bad_configuration() {
        assert!(Executor::new(1000, DEFAULT_TIMEOUT, TimingMode::Virtual).is_err());
        assert!(Executor::new(1024, Duration::ZERO, TimingMode::Virtual).is_err());
    }
}
