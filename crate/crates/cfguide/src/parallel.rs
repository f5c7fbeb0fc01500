//! Minimal bounded parallel map over an index range, used for fan-out to
//! classifiers and generators without pulling in a thread-pool dependency.

use std::sync::atomic::{AtomicUsize, Ordering};

/// Applies `work` to every index in `0..len` using at most `workers`
/// threads, returning results in index order. `workers <= 1` runs inline on
/// the caller's thread.
///
/// Workers pull indices from a shared counter and stash `(index, value)`
/// pairs locally; outputs land in pre-assigned slots, so the result is
/// independent of scheduling. A panic in `work` propagates to the caller.
pub(crate) fn map_indexed<T, F>(len: usize, workers: usize, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if workers <= 1 || len <= 1 {
        return (0..len).map(work).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<T>> = (0..len).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers.min(len))
            .map(|_| {
                scope.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= len {
                            return local;
                        }
                        local.push((i, work(i)));
                    }
                })
            })
            .collect();
        for handle in handles {
            match handle.join() {
                Ok(local) => {
                    for (i, value) in local {
                        slots[i] = Some(value);
                    }
                }
                Err(payload) => std::panic::resume_unwind(payload),
            }
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every index visited"))
        .collect()
}
