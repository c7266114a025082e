use alloc::vec::Vec;

use super::StepChoice;

/// Chooses which enabled step fires next.
pub trait ScheduleSource {
    /// Index into `enabled` (never empty), or `None` to stop.
    fn pick(&mut self, enabled: &[StepChoice]) -> Option<usize>;
}

impl<S: ScheduleSource + ?Sized> ScheduleSource for &mut S {
    fn pick(&mut self, enabled: &[StepChoice]) -> Option<usize> {
        (**self).pick(enabled)
    }
}

/// Always the first enabled step: evolutions before actions, lowest ticket
/// first.
#[derive(Clone, Copy, Debug, Default)]
pub struct FirstEnabled;

impl ScheduleSource for FirstEnabled {
    fn pick(&mut self, _: &[StepChoice]) -> Option<usize> {
        Some(0)
    }
}

/// Replays a recorded sequence of choices; stops at the end or when the
/// recorded choice is not enabled.
#[derive(Clone, Debug, Default)]
pub struct Replay {
    choices: Vec<StepChoice>,
    pos: usize,
    diverged: bool,
}

impl Replay {
    pub fn new(choices: Vec<StepChoice>) -> Replay {
        Replay { choices, pos: 0, diverged: false }
    }

    /// True if a recorded choice was not enabled when its turn came.
    pub fn diverged(&self) -> bool {
        self.diverged
    }

    pub fn finished(&self) -> bool {
        self.pos == self.choices.len()
    }
}

impl ScheduleSource for Replay {
    fn pick(&mut self, enabled: &[StepChoice]) -> Option<usize> {
        let want = self.choices.get(self.pos)?;
        match enabled.iter().position(|c| c == want) {
            Some(i) => {
                self.pos += 1;
                Some(i)
            }
            None => {
                self.diverged = true;
                None
            }
        }
    }
}

/// Picks by a caller-supplied function, e.g. a seeded RNG.
pub struct PickWith<F>(pub F);

impl<F: FnMut(&[StepChoice]) -> Option<usize>> ScheduleSource for PickWith<F> {
    fn pick(&mut self, enabled: &[StepChoice]) -> Option<usize> {
        (self.0)(enabled)
    }
}
