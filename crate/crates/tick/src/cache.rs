//! Window cache for inference reads.
//!
//! Estimation windows slide forward a little between requests, so almost
//! every bar a request needs was read by the previous one. The cache keeps,
//! per symbol, one contiguous range of sealed minutes (minutes that can no
//! longer change) and only asks the backing store for what lies outside it.
//! The range grows to at most `retention` around the latest request.

use std::collections::HashMap;

use cryptovar_core::{EpochMillis, TwapBar, DAY_MS};

/// Twice the longest default lookback, so HAR windows and their
/// neighbours stay resident.
pub const DEFAULT_RETENTION_MS: EpochMillis = 32 * DAY_MS;

#[derive(Debug, Clone)]
struct Span {
    from: EpochMillis,
    to: EpochMillis,
    bars: Vec<TwapBar>,
}

impl Span {
    fn slice(&self, from: EpochMillis, to: EpochMillis) -> &[TwapBar] {
        let lo = self.bars.partition_point(|b| b.minute < from);
        let hi = self.bars.partition_point(|b| b.minute < to);
        &self.bars[lo..hi.max(lo)]
    }
}

#[derive(Debug)]
pub struct InferenceCache {
    spans: HashMap<String, Span>,
    retention: EpochMillis,
    hits: u64,
    fetches: u64,
}

impl Default for InferenceCache {
    fn default() -> Self {
        Self::with_retention(DEFAULT_RETENTION_MS)
    }
}

impl InferenceCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keeps at most `retention` of sealed minutes per symbol, or the
    /// last request if that is longer.
    pub fn with_retention(retention: EpochMillis) -> Self {
        InferenceCache {
            spans: HashMap::new(),
            retention: retention.max(0),
            hits: 0,
            fetches: 0,
        }
    }

    /// Bars of `sym` in `[from, to)`. Minutes before `sealed_before` may be
    /// served from and stored in the cache; later ones always go to
    /// `fetch(from, to)`.
    pub fn get<E>(
        &mut self,
        sym: &str,
        from: EpochMillis,
        to: EpochMillis,
        sealed_before: EpochMillis,
        mut fetch: impl FnMut(EpochMillis, EpochMillis) -> Result<Vec<TwapBar>, E>,
    ) -> Result<Vec<TwapBar>, E> {
        if from >= to {
            return Ok(Vec::new());
        }
        let cap = to.min(sealed_before).max(from);
        let mut out = Vec::new();
        if cap > from {
            let before = self.fetches;
            let span = match self.spans.remove(sym) {
                // Usable only if it overlaps or touches the sealed part.
                Some(s) if s.from <= cap && s.to >= from => {
                    let mut s = s;
                    if from < s.from {
                        let mut left = self.fetch(&mut fetch, from, s.from)?;
                        left.append(&mut s.bars);
                        s.bars = left;
                        s.from = from;
                    }
                    if cap > s.to {
                        let right = self.fetch(&mut fetch, s.to, cap)?;
                        s.bars.extend(right);
                        s.to = cap;
                    }
                    if self.fetches == before {
                        self.hits += 1;
                    }
                    s
                }
                _ => Span {
                    from,
                    to: cap,
                    bars: self.fetch(&mut fetch, from, cap)?,
                },
            };
            out.extend_from_slice(span.slice(from, cap));
            // Bound memory with a retention window that contains this request.
            let keep_from = span.from.max(cap - self.retention).min(from);
            let keep_to = span.to.min(keep_from + self.retention).max(cap);
            let trimmed = if (keep_from, keep_to) == (span.from, span.to) {
                span
            } else {
                Span {
                    from: keep_from,
                    to: keep_to,
                    bars: span.slice(keep_from, keep_to).to_vec(),
                }
            };
            self.spans.insert(sym.to_string(), trimmed);
        }
        if to > cap {
            out.extend(self.fetch(&mut fetch, cap, to)?);
        }
        Ok(out)
    }

    fn fetch<E>(
        &mut self,
        f: &mut impl FnMut(EpochMillis, EpochMillis) -> Result<Vec<TwapBar>, E>,
        from: EpochMillis,
        to: EpochMillis,
    ) -> Result<Vec<TwapBar>, E> {
        self.fetches += 1;
        f(from, to)
    }

    /// Forgets everything (e.g. after a partition was rewritten).
    pub fn clear(&mut self) {
        self.spans.clear();
    }

    /// Range currently held for `sym`.
    pub fn coverage(&self, sym: &str) -> Option<(EpochMillis, EpochMillis)> {
        self.spans.get(sym).map(|s| (s.from, s.to))
    }

    /// Requests whose sealed part came from the cache without a fetch
    /// outside it.
    pub fn hits(&self) -> u64 {
        self.hits
    }

    /// Calls made to the backing store.
    pub fn fetches(&self) -> u64 {
        self.fetches
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cryptovar_core::MINUTE_MS;
    use proptest::prelude::*;

    fn store(from: EpochMillis, to: EpochMillis) -> Vec<TwapBar> {
        let first = (from + MINUTE_MS - 1).div_euclid(MINUTE_MS);
        let last = (to + MINUTE_MS - 1).div_euclid(MINUTE_MS);
        (first.max(0)..last.min(1000)).map(|m| TwapBar::new("x", m * MINUTE_MS, 100.0 + m as f64, 1)).collect()
    }

    #[test]
    fn sliding_window_fetches_only_the_edge() {
        let mut c = InferenceCache::with_retention(100 * MINUTE_MS);
        let mut calls = Vec::new();
        let mut f = |a, b| {
            calls.push((a, b));
            Ok::<_, ()>(store(a, b))
        };
        let w = 100 * MINUTE_MS;
        let a = c.get("x", 0, w, 1000 * MINUTE_MS, &mut f).unwrap();
        assert_eq!(a, store(0, w));
        let b = c.get("x", 5 * MINUTE_MS, w + 5 * MINUTE_MS, 1000 * MINUTE_MS, &mut f).unwrap();
        assert_eq!(b, store(5 * MINUTE_MS, w + 5 * MINUTE_MS));
        assert_eq!(calls, vec![(0, w), (w, w + 5 * MINUTE_MS)]);
        assert_eq!(c.coverage("x"), Some((5 * MINUTE_MS, w + 5 * MINUTE_MS)));
    }

    #[test]
    fn unsealed_tail_is_never_cached() {
        let mut c = InferenceCache::new();
        let mut n = 0;
        let mut f = |a, b| {
            n += 1;
            Ok::<_, ()>(store(a, b))
        };
        let sealed = 50 * MINUTE_MS;
        let got = c.get("x", 0, 60 * MINUTE_MS, sealed, &mut f).unwrap();
        assert_eq!(got, store(0, 60 * MINUTE_MS));
        assert_eq!(c.coverage("x"), Some((0, sealed)));
        c.get("x", 0, 60 * MINUTE_MS, sealed, &mut f).unwrap();
        assert_eq!(n, 3);
    }

    #[test]
    fn revisiting_earlier_windows_is_free() {
        let mut c = InferenceCache::new();
        let mut n = 0;
        let mut f = |a, b| {
            n += 1;
            Ok::<_, ()>(store(a, b))
        };
        let m = MINUTE_MS;
        for (a, b) in [(300, 400), (100, 350), (150, 250), (300, 400), (100, 400)] {
            assert_eq!(c.get("x", a * m, b * m, 1000 * m, &mut f).unwrap(), store(a * m, b * m));
        }
        // The first read and the left extension; the rest is served from memory.
        assert_eq!(n, 2);
        assert_eq!(c.coverage("x"), Some((100 * m, 400 * m)));
    }

    proptest! {
        #[test]
        fn always_equals_direct_read(
            retention in 1i64..600,
            reqs in prop::collection::vec((0i64..900, 1i64..200, 0i64..1000), 1..30),
        ) {
            let mut c = InferenceCache::with_retention(retention * MINUTE_MS);
            for (start, len, sealed) in reqs {
                let (from, to) = (start * MINUTE_MS, (start + len) * MINUTE_MS);
                let got = c.get("x", from, to, sealed * MINUTE_MS, |a, b| Ok::<_, ()>(store(a, b))).unwrap();
                prop_assert_eq!(got, store(from, to));
                // Requests past the sealed boundary leave the cache alone.
                if let (true, Some((a, b))) = (sealed * MINUTE_MS > from, c.coverage("x")) {
                    prop_assert!(b - a <= (retention * MINUTE_MS).max(to - from));
                    prop_assert!(a <= from);
                }
            }
        }
    }
}
