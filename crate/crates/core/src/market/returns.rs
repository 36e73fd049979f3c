use serde::{Deserialize, Serialize};

use super::{MarketError, Result, Symbol, TwapBar};
use crate::{EpochMillis, MINUTE_MS};

/// Log returns `ln(P_t / P_{t-interval})` on a fixed sampling grid.
///
/// `timestamps[k]` is the minute of the later bar of the pair. Pairs broken
/// by missing bars are dropped, never filled, so consecutive timestamps may
/// be further apart than one interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub sym: Symbol,
    pub interval_minutes: u32,
    pub timestamps: Vec<EpochMillis>,
    pub values: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(
        sym: impl Into<Symbol>,
        interval_minutes: u32,
        timestamps: Vec<EpochMillis>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(MarketError::Contract(format!(
                "{} timestamps for {} values",
                timestamps.len(),
                values.len()
            )));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MarketError::Contract("timestamps not strictly increasing".into()));
        }
        Ok(ReturnSeries {
            sym: sym.into(),
            interval_minutes,
            timestamps,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn interval_ms(&self) -> EpochMillis {
        self.interval_minutes as EpochMillis * MINUTE_MS
    }

    /// Sub-series with timestamps in `[from, to)`.
    pub fn slice_time(&self, from: EpochMillis, to: EpochMillis) -> ReturnSeries {
        let lo = self.timestamps.partition_point(|&t| t < from);
        let hi = self.timestamps.partition_point(|&t| t < to);
        ReturnSeries {
            sym: self.sym.clone(),
            interval_minutes: self.interval_minutes,
            timestamps: self.timestamps[lo..hi].to_vec(),
            values: self.values[lo..hi].to_vec(),
        }
    }

    /// Sub-series whose interval ends fall in `(from, to]`.
    pub fn window(&self, from: EpochMillis, to: EpochMillis) -> ReturnSeries {
        self.slice_time(from + 1, to + 1)
    }
}

/// Samples minute bars on the `interval`-minute UTC grid and takes log
/// differences between grid points exactly one interval apart.
pub fn log_returns(bars: &[TwapBar], interval_minutes: u32) -> Result<ReturnSeries> {
    if interval_minutes == 0 {
        return Err(MarketError::Contract("interval must be positive".into()));
    }
    let sym: Symbol = bars.first().map(|b| b.sym.clone()).unwrap_or_else(|| "".into());
    let step = interval_minutes as EpochMillis * MINUTE_MS;
    let mut timestamps = Vec::with_capacity(bars.len() / interval_minutes as usize + 1);
    let mut values = Vec::with_capacity(timestamps.capacity());
    let mut prev: Option<&TwapBar> = None;
    let mut last_minute = EpochMillis::MIN;
    for bar in bars {
        if bar.sym != sym {
            return Err(MarketError::Contract(format!(
                "mixed symbols {} and {}",
                sym, bar.sym
            )));
        }
        if bar.minute <= last_minute {
            return Err(MarketError::Contract(format!(
                "bars not sorted at {}",
                bar.minute
            )));
        }
        last_minute = bar.minute;
        if bar.minute.rem_euclid(step) != 0 {
            continue;
        }
        if !(bar.twap.is_finite() && bar.twap > 0.0) {
            return Err(MarketError::Domain {
                time: bar.minute,
                price: bar.twap,
            });
        }
        if let Some(p) = prev {
            if bar.minute - p.minute == step {
                timestamps.push(bar.minute);
                values.push((bar.twap / p.twap).ln());
            }
        }
        prev = Some(bar);
    }
    Ok(ReturnSeries {
        sym,
        interval_minutes,
        timestamps,
        values,
    })
}

/// Inner join of two return series on timestamp.
pub fn align(a: &ReturnSeries, b: &ReturnSeries) -> (Vec<EpochMillis>, Vec<f64>, Vec<f64>) {
    let (mut i, mut j) = (0, 0);
    let cap = a.len().min(b.len());
    let (mut ts, mut va, mut vb) = (
        Vec::with_capacity(cap),
        Vec::with_capacity(cap),
        Vec::with_capacity(cap),
    );
    while i < a.len() && j < b.len() {
        match a.timestamps[i].cmp(&b.timestamps[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                ts.push(a.timestamps[i]);
                va.push(a.values[i]);
                vb.push(b.values[j]);
                i += 1;
                j += 1;
            }
        }
    }
    (ts, va, vb)
}

/// Inner join of any number of series: the timestamps present in all of
/// them and one value column per input.
pub fn align_all(series: &[ReturnSeries]) -> (Vec<EpochMillis>, Vec<Vec<f64>>) {
    let Some(first) = series.first() else {
        return (Vec::new(), Vec::new());
    };
    let mut ts = first.timestamps.clone();
    for s in &series[1..] {
        let (mut i, mut j, mut kept) = (0, 0, Vec::with_capacity(ts.len()));
        while i < ts.len() && j < s.len() {
            match ts[i].cmp(&s.timestamps[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    kept.push(ts[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        ts = kept;
    }
    let cols = series
        .iter()
        .map(|s| {
            let mut j = 0;
            ts.iter()
                .map(|&t| {
                    while s.timestamps[j] < t {
                        j += 1;
                    }
                    s.values[j]
                })
                .collect()
        })
        .collect();
    (ts, cols)
}
