//! Bounded retry loop shared by every validated LLM call.

/// Result of one attempt.
#[derive(Debug)]
pub enum Attempt<T, F> {
    Done(T),
    /// Recoverable failure; try again if attempts remain.
    Retry(F),
    /// Failure that another attempt cannot fix.
    Abort(F),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exhausted<F> {
    pub attempts: u32,
    /// Why the final attempt failed.
    pub last: F,
    pub aborted: bool,
}

/// Runs `attempt` (with the 1-based attempt number) until it succeeds,
/// aborts, or `theta` attempts have been made. `theta` is at least 1.
pub fn bounded<T, F: std::fmt::Debug>(theta: u32, mut attempt: impl FnMut(u32) -> Attempt<T, F>) -> Result<T, Exhausted<F>> {
    let theta = theta.max(1);
    let mut n = 1;
    loop {
        match attempt(n) {
            Attempt::Done(value) => return Ok(value),
            Attempt::Abort(last) => {
                return Err(Exhausted {
                    attempts: n,
                    last,
                    aborted: true,
                })
            }
            Attempt::Retry(last) if n >= theta => {
                return Err(Exhausted {
                    attempts: n,
                    last,
                    aborted: false,
                })
            }
            Attempt::Retry(reason) => {
                tracing::debug!(attempt = n, ?reason, "retrying");
            }
        }
        n += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn succeeds_on_attempt_k_iff_k_within_theta() {
        for theta in 1..=3u32 {
            for k in 1..=4u32 {
                let mut calls = 0;
                let r = bounded(theta, |n| {
                    calls += 1;
                    if n == k {
                        Attempt::Done(n)
                    } else {
                        Attempt::<u32, &str>::Retry("bad")
                    }
                });
                if k <= theta {
                    assert_eq!(r, Ok(k));
                    assert_eq!(calls, k);
                } else {
                    assert_eq!(r.unwrap_err().attempts, theta);
                    assert_eq!(calls, theta);
                }
            }
        }
    }

    #[test]
    fn abort_stops_immediately() {
        let r: Result<(), _> = bounded(3, |_| Attempt::Abort("refused"));
        let e = r.unwrap_err();
        assert!(e.aborted);
        assert_eq!(e.attempts, 1);
    }
}
