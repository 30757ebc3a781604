//! Order-preserving parallel map over scoped threads.

use crate::error::Result;

/// Jobs from `BRIDGECAT_JOBS`, else 1.
pub fn default_jobs() -> usize {
    std::env::var("BRIDGECAT_JOBS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or(1)
}

/// `f` over `items` on up to `jobs` threads; results keep input order and
/// the first error in input order is returned.
pub fn map<T: Sync, U: Send>(items: &[T], jobs: usize, f: impl Fn(usize, &T) -> Result<U> + Sync) -> Result<Vec<U>> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().enumerate().map(|(i, x)| f(i, x)).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let f = &f;
    let parts: Vec<Vec<Result<U>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                scope.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(k, x)| f(c * chunk + k, x))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    parts.into_iter().flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn order_is_independent_of_jobs() {
        let items: Vec<u64> = (0..37).collect();
        let one = map(&items, 1, |i, x| Ok(i as u64 * 100 + x * x)).unwrap();
        for jobs in [2, 3, 8, 64] {
            assert_eq!(map(&items, jobs, |i, x| Ok(i as u64 * 100 + x * x)).unwrap(), one);
        }
        assert!(map(&[] as &[u64], 4, |_, x| Ok(*x)).unwrap().is_empty());
    }

    #[test]
    fn first_error_wins() {
        let items: Vec<u64> = (0..10).collect();
        let r = map(&items, 3, |i, _| {
            if i >= 4 {
                Err(Error::InvalidArgument(format!("{i}")))
            } else {
                Ok(i)
            }
        });
        assert_eq!(
            r.unwrap_err().to_string(),
            Error::InvalidArgument("4".into()).to_string()
        );
    }
}
