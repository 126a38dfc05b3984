//! Fixed-partition fan-out over scoped threads.
//!
//! Work is always cut into the same pieces and results come back in piece
//! order, so the thread count never changes a result.

use std::thread;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "HYPGEO_THREADS";

pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Evaluates `f(0), …, f(n − 1)` on up to [`worker_count`] threads and
/// returns the results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = worker_count().min(n);
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let f = &f;
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| s.spawn(move || (w..n).step_by(workers).map(|i| (i, f(i))).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            for (i, v) in h.join().expect("worker panicked") {
                slots[i] = Some(v);
            }
        }
    });
    slots.into_iter().map(|v| v.expect("every index computed")).collect()
}

/// Splits `0..len` into `parts` contiguous ranges of near-equal size,
/// dropping empty ones.
pub fn partition(len: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    (0..parts)
        .map(|p| (p * len / parts)..((p + 1) * len / parts))
        .filter(|r| !r.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_in_order() {
        let v = map_indexed(37, |i| i * i);
        assert_eq!(v, (0..37).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn partition_covers_range() {
        let p = partition(10, 4);
        assert_eq!(p, vec![0..2, 2..5, 5..7, 7..10]);
        assert_eq!(partition(2, 4), vec![0..1, 1..2]);
    }
}
