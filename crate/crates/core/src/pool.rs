//! Index-ordered parallel map over a fixed worker pool.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use parking_lot::Mutex;

use crate::error::Result;

/// Computes `f(0..n)` on `workers` threads and returns the results in index
/// order, so the output does not depend on scheduling. The first error stops
/// the remaining work.
pub fn parallel_map<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                if r.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                slots.lock()[i] = Some(r);
            });
        }
    });
    let mut out = Vec::with_capacity(n);
    for slot in slots.into_inner() {
        match slot {
            Some(r) => out.push(r?),
            // skipped after an earlier failure, which the loop reports first
            None => continue,
        }
    }
    Ok(out)
}
