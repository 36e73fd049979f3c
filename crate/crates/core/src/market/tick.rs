use serde::{Deserialize, Serialize};

use crate::EpochMillis;

/// One timestamped market-data record for an instrument or an index.
///
/// For index records `mark_price` carries the index level. Greeks are per
/// contract in USD terms: `delta` in units of the underlying, `gamma` per
/// USD of underlying move, `theta` in USD per day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tick {
    pub instrument: String,
    #[serde(with = "iso8601")]
    pub time: EpochMillis,
    pub mark_price: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bid: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ask: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub open_interest: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub implied_vol: Option<f64>,
}

impl Tick {
    pub fn new(instrument: impl Into<String>, time: EpochMillis, mark_price: f64) -> Self {
        Tick {
            instrument: instrument.into(),
            time,
            mark_price,
            index_price: None,
            bid: None,
            ask: None,
            last: None,
            open_interest: None,
            delta: None,
            gamma: None,
            theta: None,
            implied_vol: None,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.mark_price.is_finite() && self.mark_price > 0.0 && !self.instrument.is_empty()
    }
}

/// Serde adapter for ISO-8601 UTC timestamps with millisecond precision.
pub mod iso8601 {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{de, Deserialize, Deserializer, Serializer};

    use crate::EpochMillis;

    pub fn format(ms: EpochMillis) -> String {
        DateTime::<Utc>::from_timestamp_millis(ms)
            .map(|t| t.to_rfc3339_opts(SecondsFormat::Millis, true))
            .unwrap_or_default()
    }

    pub fn parse(s: &str) -> Result<EpochMillis, chrono::ParseError> {
        Ok(DateTime::parse_from_rfc3339(s)?.with_timezone(&Utc).timestamp_millis())
    }

    pub fn serialize<S: Serializer>(ms: &EpochMillis, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(*ms))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<EpochMillis, D::Error> {
        let raw = <&str>::deserialize(d)?;
        parse(raw).map_err(de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_keeps_millis() {
        let mut t = Tick::new("BTC-29DEC23-30000-C", 1_690_243_200_123, 0.05);
        t.delta = Some(0.5);
        t.implied_vol = Some(0.45);
        let line = serde_json::to_string(&t).unwrap();
        assert!(line.contains("\"2023-07-25T00:00:00.123Z\""), "{line}");
        assert!(!line.contains("bid"));
        let back: Tick = serde_json::from_str(&line).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn validity() {
        assert!(Tick::new("btc_usd", 0, 1.0).is_valid());
        assert!(!Tick::new("btc_usd", 0, 0.0).is_valid());
        assert!(!Tick::new("btc_usd", 0, f64::NAN).is_valid());
    }
}
