use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use super::{MarketError, Result};
use crate::EpochMillis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstrumentKind {
    Index,
    Future,
    Option,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionType {
    Call,
    Put,
}

/// A tradable product or an underlying index.
///
/// Derivative ids follow `CRYPTO-DDMMMYY` for futures and
/// `CRYPTO-DDMMMYY-STRIKE-C|P` for options; index ids are `crypto_usd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instrument {
    pub id: String,
    /// Upper-case crypto code, e.g. `BTC`.
    pub underlying: String,
    pub kind: InstrumentKind,
    pub maturity: Option<NaiveDate>,
    pub strike: Option<f64>,
    pub option_type: Option<OptionType>,
}

/// Index symbol for an underlying code: `BTC` -> `btc_usd`.
pub fn index_symbol(underlying: &str) -> String {
    format!("{}_usd", underlying.to_ascii_lowercase())
}

const MONTHS: [&str; 12] = [
    "JAN", "FEB", "MAR", "APR", "MAY", "JUN", "JUL", "AUG", "SEP", "OCT", "NOV", "DEC",
];

/// Options and futures expire at 08:00 UTC on the maturity date.
const EXPIRY_HOUR_UTC: u32 = 8;

impl Instrument {
    pub fn parse(id: &str) -> Result<Self> {
        let err = |segment: &str, reason: &str| MarketError::Parse {
            input: id.to_string(),
            segment: segment.to_string(),
            reason: reason.to_string(),
        };
        if id.is_empty() {
            return Err(err("", "is empty"));
        }
        if let Some(code) = id.strip_suffix("_usd") {
            let underlying = parse_crypto(code).ok_or_else(|| err(code, "is not a crypto code"))?;
            return Ok(Instrument {
                id: id.to_string(),
                underlying,
                kind: InstrumentKind::Index,
                maturity: None,
                strike: None,
                option_type: None,
            });
        }

        let parts: Vec<&str> = id.split('-').collect();
        if parts.len() != 2 && parts.len() != 4 {
            return Err(err(id, &format!("has {} segments, expected 2 or 4", parts.len())));
        }
        let underlying =
            parse_crypto(parts[0]).ok_or_else(|| err(parts[0], "is not a crypto code"))?;
        let maturity =
            parse_maturity(parts[1]).ok_or_else(|| err(parts[1], "is not a DDMMMYY date"))?;
        if parts.len() == 2 {
            return Ok(Instrument {
                id: id.to_string(),
                underlying,
                kind: InstrumentKind::Future,
                maturity: Some(maturity),
                strike: None,
                option_type: None,
            });
        }
        let strike: f64 = parts[2]
            .parse()
            .map_err(|_| err(parts[2], "is not a number"))?;
        if !(strike.is_finite() && strike > 0.0) {
            return Err(err(parts[2], "is not a positive strike"));
        }
        let option_type = match parts[3] {
            "C" => OptionType::Call,
            "P" => OptionType::Put,
            other => return Err(err(other, "is not C or P")),
        };
        Ok(Instrument {
            id: id.to_string(),
            underlying,
            kind: InstrumentKind::Option,
            maturity: Some(maturity),
            strike: Some(strike),
            option_type: Some(option_type),
        })
    }

    pub fn future(underlying: &str, maturity: NaiveDate) -> Self {
        let mut inst = Instrument {
            id: String::new(),
            underlying: underlying.to_ascii_uppercase(),
            kind: InstrumentKind::Future,
            maturity: Some(maturity),
            strike: None,
            option_type: None,
        };
        inst.id = inst.format_id();
        inst
    }

    pub fn option(
        underlying: &str,
        maturity: NaiveDate,
        strike: f64,
        option_type: OptionType,
    ) -> Self {
        let mut inst = Instrument {
            id: String::new(),
            underlying: underlying.to_ascii_uppercase(),
            kind: InstrumentKind::Option,
            maturity: Some(maturity),
            strike: Some(strike),
            option_type: Some(option_type),
        };
        inst.id = inst.format_id();
        inst
    }

    pub fn index(underlying: &str) -> Self {
        Instrument {
            id: index_symbol(underlying),
            underlying: underlying.to_ascii_uppercase(),
            kind: InstrumentKind::Index,
            maturity: None,
            strike: None,
            option_type: None,
        }
    }

    /// Canonical id. Days are not zero-padded (`5JAN24`), strikes print
    /// without a trailing `.0`.
    pub fn format_id(&self) -> String {
        match self.kind {
            InstrumentKind::Index => index_symbol(&self.underlying),
            InstrumentKind::Future => {
                format!("{}-{}", self.underlying, format_maturity(self.maturity_or_epoch()))
            }
            InstrumentKind::Option => {
                let cp = match self.option_type {
                    Some(OptionType::Put) => "P",
                    _ => "C",
                };
                format!(
                    "{}-{}-{}-{}",
                    self.underlying,
                    format_maturity(self.maturity_or_epoch()),
                    self.strike.unwrap_or_default(),
                    cp
                )
            }
        }
    }

    fn maturity_or_epoch(&self) -> NaiveDate {
        self.maturity.unwrap_or_default()
    }

    /// Symbol of the index this instrument is written on.
    pub fn index_sym(&self) -> String {
        index_symbol(&self.underlying)
    }

    /// Expiry instant (08:00 UTC on the maturity date), if any.
    pub fn expiry_ms(&self) -> Option<EpochMillis> {
        self.maturity.map(|d| {
            Utc.from_utc_datetime(
                &d.and_time(NaiveTime::from_hms_opt(EXPIRY_HOUR_UTC, 0, 0).unwrap()),
            )
            .timestamp_millis()
        })
    }

    pub fn is_option(&self) -> bool {
        self.kind == InstrumentKind::Option
    }
}

impl fmt::Display for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

impl FromStr for Instrument {
    type Err = MarketError;

    fn from_str(s: &str) -> Result<Self> {
        Instrument::parse(s)
    }
}

fn parse_crypto(code: &str) -> Option<String> {
    let ok = !code.is_empty() && code.chars().all(|c| c.is_ascii_alphanumeric());
    ok.then(|| code.to_ascii_uppercase())
}

fn parse_maturity(token: &str) -> Option<NaiveDate> {
    if !token.is_ascii() || token.len() < 6 || token.len() > 7 {
        return None;
    }
    let day_len = token.len() - 5;
    let day: u32 = token[..day_len].parse().ok()?;
    let month = MONTHS.iter().position(|m| *m == &token[day_len..day_len + 3])? as u32 + 1;
    let year: i32 = token[day_len + 3..].parse().ok()?;
    NaiveDate::from_ymd_opt(2000 + year, month, day)
}

fn format_maturity(d: NaiveDate) -> String {
    format!(
        "{}{}{:02}",
        d.day(),
        MONTHS[d.month0() as usize],
        d.year().rem_euclid(100)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_future() {
        let i = Instrument::parse("BTC-29DEC23").unwrap();
        assert_eq!(i.kind, InstrumentKind::Future);
        assert_eq!(i.underlying, "BTC");
        assert_eq!(i.maturity, NaiveDate::from_ymd_opt(2023, 12, 29));
        assert_eq!(i.strike, None);
        assert_eq!(i.index_sym(), "btc_usd");
    }

    #[test]
    fn parses_call_option() {
        let i = Instrument::parse("ETH-29DEC23-2000-C").unwrap();
        assert_eq!(i.kind, InstrumentKind::Option);
        assert_eq!(i.underlying, "ETH");
        assert_eq!(i.strike, Some(2000.0));
        assert_eq!(i.option_type, Some(OptionType::Call));
        assert_eq!(i.maturity, NaiveDate::from_ymd_opt(2023, 12, 29));
    }

    #[test]
    fn parses_index() {
        let i = Instrument::parse("eth_usd").unwrap();
        assert_eq!(i.kind, InstrumentKind::Index);
        assert_eq!(i.underlying, "ETH");
        assert!(i.maturity.is_none());
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", "BTC--X", "BTC", "BTC-32DEC23", "BTC-29XYZ23", "BTC-29DEC23-0-C",
            "BTC-29DEC23-abc-C", "BTC-29DEC23-100-X", "-29DEC23", "_usd"]
        {
            assert!(Instrument::parse(bad).is_err(), "{bad}");
        }
        match Instrument::parse("BTC-29DEC23--5-C") {
            Err(MarketError::Parse { .. }) => {}
            other => panic!("{other:?}"),
        }
        match Instrument::parse("BTC-29DEC23-0-C") {
            Err(MarketError::Parse { segment, .. }) => assert_eq!(segment, "0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_digit_day() {
        let i = Instrument::parse("BTC-5JAN24").unwrap();
        assert_eq!(i.maturity, NaiveDate::from_ymd_opt(2024, 1, 5));
        assert_eq!(i.format_id(), "BTC-5JAN24");
    }

    #[test]
    fn expiry_is_eight_utc() {
        let i = Instrument::parse("BTC-29DEC23").unwrap();
        let t = chrono::DateTime::from_timestamp_millis(i.expiry_ms().unwrap()).unwrap();
        assert_eq!(t.to_rfc3339(), "2023-12-29T08:00:00+00:00");
    }

    proptest! {
        #[test]
        fn canonical_ids_round_trip(
            day in 1u32..=28, month in 1u32..=12, year in 20i32..40,
            strike in 1u32..200_000, call in any::<bool>(), eth in any::<bool>(),
        ) {
            let d = NaiveDate::from_ymd_opt(2000 + year, month, day).unwrap();
            let u = if eth { "ETH" } else { "BTC" };
            let ot = if call { OptionType::Call } else { OptionType::Put };
            for inst in [Instrument::future(u, d), Instrument::option(u, d, strike as f64, ot), Instrument::index(u)] {
                let back = Instrument::parse(&inst.id).unwrap();
                prop_assert_eq!(&back, &inst);
                prop_assert_eq!(back.format_id(), inst.id.clone());
            }
        }
    }
}
