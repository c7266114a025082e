use alloc::collections::{BTreeMap, BTreeSet};

use crate::syntax::Name;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lock {
    Read(usize),
    /// Exclusive; the owner may read and write.
    Write(u64),
}

/// Names a task wants to read and write.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LockRequest {
    pub owner: u64,
    pub reads: BTreeSet<Name>,
    pub writes: BTreeSet<Name>,
}

impl LockRequest {
    /// The same owner and writes, no reads.
    pub fn writes_only(&self) -> LockRequest {
        LockRequest { owner: self.owner, reads: BTreeSet::new(), writes: self.writes.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LockConflict {
    pub name: Name,
    pub holder: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LockTable {
    held: BTreeMap<Name, Lock>,
}

impl LockTable {
    pub fn new() -> LockTable {
        LockTable::default()
    }

    pub fn get(&self, name: &str) -> Option<Lock> {
        self.held.get(name).copied()
    }

    /// Takes every lock of `req` or none of them.
    pub fn try_acquire(&mut self, req: &LockRequest) -> Result<(), LockConflict> {
        let mut next = self.held.clone();
        for w in &req.writes {
            match next.get(w) {
                None => {
                    next.insert(w.clone(), Lock::Write(req.owner));
                }
                Some(Lock::Write(o)) if *o == req.owner => {}
                Some(Lock::Write(o)) => return Err(LockConflict { name: w.clone(), holder: Some(*o) }),
                Some(Lock::Read(_)) => return Err(LockConflict { name: w.clone(), holder: None }),
            }
        }
        for r in &req.reads {
            match next.get_mut(r) {
                None => {
                    next.insert(r.clone(), Lock::Read(1));
                }
                Some(Lock::Read(n)) => *n += 1,
                Some(Lock::Write(o)) if *o == req.owner => {}
                Some(Lock::Write(o)) => return Err(LockConflict { name: r.clone(), holder: Some(*o) }),
            }
        }
        self.held = next;
        Ok(())
    }

    /// Can all requests hold their locks at the same time?
    pub fn compatible<'a>(reqs: impl IntoIterator<Item = &'a LockRequest>) -> bool {
        let mut t = LockTable::new();
        reqs.into_iter().all(|r| t.try_acquire(r).is_ok())
    }
}
