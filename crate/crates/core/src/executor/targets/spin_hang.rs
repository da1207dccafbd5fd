//! Loops forever when the input starts with [`MAGIC`]; used to exercise
//! hang detection.

use crate::executor::{Recorder, Target, TargetOutcome};
use crate::site;

pub const MAGIC: u8 = 0xfe;

#[derive(Debug, Default, Clone, Copy)]
pub struct SpinHang;

impl Target for SpinHang {
    fn name(&self) -> &str {
        "spin_hang"
    }

    fn run(&self, input: &[u8], rec: &mut Recorder) -> TargetOutcome {
        rec.visit(site!("spin.start"));
        if input.first() == Some(&MAGIC) {
            loop {
                rec.visit(site!("spin.loop"));
            }
        }
        if input.len() > 1 {
            rec.visit(site!("spin.long"));
        }
        TargetOutcome::Ok
    }
}
