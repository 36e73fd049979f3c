//! Market-data plumbing for the VaR engine.
//!
//! Ticks enter through a [`Tickerplant`], which numbers them, appends them
//! to a recovery log and then hands each batch to its subscribers: the
//! minute-TWAP tables, the latest-value cache and the streaming store.
//! Finished days move to a date-partitioned columnar store ([`Hdb`]).
//! [`TickEngine`] wires all of it together and serves the estimator.

mod cache;
mod codec;
mod engine;
mod error;
mod hdb;
mod latest;
mod recovery;
mod stream;
mod tables;
mod tickerplant;

pub use cache::InferenceCache;
pub use codec::{decode_record, decode_tick, encode_record, encode_tick, read_feed, write_feed, FeedRecord};
pub use engine::{EngineOptions, PersistReport, QueryStats, TickEngine};
pub use error::{Result, TickError};
pub use hdb::{date_dir_name, Hdb, PartitionManifest};
pub use latest::LatestCache;
pub use recovery::{read_log, truncate_log, LogReplay, RecoveryLog};
pub use stream::{vol_surface, Olhc, StreamStore, SurfacePoint, DEFAULT_STREAM_HORIZON_MS};
pub use tables::{TableKind, TwapTable, TwapTables};
pub use tickerplant::{Ack, ChannelSubscriber, Subscriber, Tickerplant};
