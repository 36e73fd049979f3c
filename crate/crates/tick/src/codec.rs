//! Line-delimited JSON wire format shared by feed files and the recovery
//! log. A log line is a feed line plus a `seq` field.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use cryptovar_core::Tick;

use crate::error::{Result, TickError};

/// A tick with the sequence number assigned at ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub tick: Tick,
}

pub fn encode_tick(t: &Tick) -> String {
    serde_json::to_string(t).expect("ticks always serialize")
}

pub fn decode_tick(line: &str) -> std::result::Result<Tick, serde_json::Error> {
    serde_json::from_str(line)
}

pub fn encode_record(r: &FeedRecord) -> String {
    serde_json::to_string(r).expect("records always serialize")
}

pub fn decode_record(line: &str) -> std::result::Result<FeedRecord, serde_json::Error> {
    serde_json::from_str(line)
}

/// Ticks of a feed file, one per non-blank line.
pub fn read_feed<R: BufRead>(reader: R) -> impl Iterator<Item = Result<Tick>> {
    reader.lines().enumerate().filter_map(|(i, line)| match line {
        Err(e) => Some(Err(TickError::Codec {
            line: i + 1,
            message: e.to_string(),
        })),
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(decode_tick(&l).map_err(|e| TickError::Codec {
            line: i + 1,
            message: e.to_string(),
        })),
    })
}

pub fn write_feed<W: Write>(mut w: W, ticks: &[Tick]) -> std::io::Result<()> {
    for t in ticks {
        w.write_all(encode_tick(t).as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn option_tick() -> Tick {
        let mut t = Tick::new("BTC-29DEC23-30000-C", 1_700_000_000_123, 0.0412);
        t.index_price = Some(30_123.5);
        t.delta = Some(0.52);
        t.gamma = Some(1.1e-4);
        t.theta = Some(-35.0);
        t.implied_vol = Some(0.61);
        t
    }

    #[test]
    fn record_is_feed_line_plus_seq() {
        let t = option_tick();
        let line = encode_record(&FeedRecord { seq: 42, tick: t.clone() });
        assert!(line.contains("\"seq\":42"));
        assert!(line.contains("2023-11-14T22:13:20.123Z"));
        // A log line also parses as a plain feed line.
        assert_eq!(decode_tick(&line).unwrap(), t);
        assert_eq!(decode_record(&line).unwrap(), FeedRecord { seq: 42, tick: t });
    }

    #[test]
    fn feed_round_trip_skips_blank_lines() {
        let ticks = vec![option_tick(), Tick::new("btc_usd", 1_700_000_000_000, 30_000.25)];
        let mut buf = Vec::new();
        write_feed(&mut buf, &ticks).unwrap();
        buf.extend_from_slice(b"\n\n");
        let back: Vec<Tick> = read_feed(&buf[..]).collect::<Result<_>>().unwrap();
        assert_eq!(back, ticks);
    }

    #[test]
    fn bad_line_reports_its_number() {
        let text = format!("{}\nnot json\n", encode_tick(&option_tick()));
        let out: Vec<_> = read_feed(text.as_bytes()).collect();
        assert!(out[0].is_ok());
        assert!(matches!(out[1], Err(TickError::Codec { line: 2, .. })));
    }

    #[test]
    fn floats_survive_exactly() {
        let t = Tick::new("eth_usd", 0, 0.1 + 0.2);
        assert_eq!(decode_tick(&encode_tick(&t)).unwrap().mark_price.to_bits(), (0.1f64 + 0.2).to_bits());
    }

    proptest::proptest! {
        #[test]
        fn any_finite_price_round_trips(bits in proptest::prelude::any::<u64>()) {
            let p = f64::from_bits(bits);
            proptest::prop_assume!(p.is_finite());
            let r = FeedRecord { seq: 1, tick: Tick::new("btc_usd", 0, p) };
            let back = decode_record(&encode_record(&r)).unwrap();
            proptest::prop_assert_eq!(back.tick.mark_price.to_bits(), p.to_bits());
        }
    }
}
