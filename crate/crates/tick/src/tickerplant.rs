//! Sequencing, logging and fan-out.

use std::sync::mpsc::Sender;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use cryptovar_core::Tick;

use crate::codec::FeedRecord;
use crate::error::{Result, TickError};
use crate::recovery::RecoveryLog;

/// Receives every published batch, in publish order.
pub trait Subscriber: Send {
    fn on_batch(&mut self, batch: &[FeedRecord]);
}

impl<F: FnMut(&[FeedRecord]) + Send> Subscriber for F {
    fn on_batch(&mut self, batch: &[FeedRecord]) {
        self(batch)
    }
}

/// Forwards batches to a channel; a closed receiver is ignored.
pub struct ChannelSubscriber(pub Sender<Arc<[FeedRecord]>>);

impl Subscriber for ChannelSubscriber {
    fn on_batch(&mut self, batch: &[FeedRecord]) {
        let _ = self.0.send(batch.into());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    /// Sequence numbers `first..=last`; `None` for an empty batch.
    pub first_seq: Option<u64>,
    pub last_seq: Option<u64>,
    pub count: usize,
}

pub struct Tickerplant {
    next_seq: u64,
    log: Option<RecoveryLog>,
    subscribers: Vec<(String, Box<dyn Subscriber>)>,
}

impl Tickerplant {
    pub fn new(log: Option<RecoveryLog>) -> Self {
        Tickerplant {
            next_seq: 1,
            log,
            subscribers: Vec::new(),
        }
    }

    pub fn attach_log(&mut self, log: RecoveryLog) {
        self.log = Some(log);
    }

    pub fn subscribe(&mut self, name: impl Into<String>, s: Box<dyn Subscriber>) {
        self.subscribers.push((name.into(), s));
    }

    pub fn unsubscribe(&mut self, name: &str) -> bool {
        let before = self.subscribers.len();
        self.subscribers.retain(|(n, _)| n != name);
        before != self.subscribers.len()
    }

    pub fn subscriber_names(&self) -> Vec<&str> {
        self.subscribers.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Numbers the ticks, logs them and delivers the batch to every
    /// subscriber. Nothing is delivered if the log write fails.
    pub fn publish(&mut self, ticks: Vec<Tick>) -> Result<Ack> {
        if ticks.is_empty() {
            return Ok(Ack {
                first_seq: None,
                last_seq: None,
                count: 0,
            });
        }
        let first = self.next_seq;
        let batch: Vec<FeedRecord> = ticks
            .into_iter()
            .enumerate()
            .map(|(i, tick)| FeedRecord {
                seq: first + i as u64,
                tick,
            })
            .collect();
        if let Some(log) = &mut self.log {
            log.append(&batch).map_err(TickError::LogRejected)?;
        }
        self.next_seq = first + batch.len() as u64;
        self.deliver(&batch);
        Ok(Ack {
            first_seq: Some(first),
            last_seq: Some(self.next_seq - 1),
            count: batch.len(),
        })
    }

    /// Delivers already-logged records (recovery); sequencing resumes after
    /// the last one.
    pub fn redeliver(&mut self, batch: &[FeedRecord]) {
        if let Some(last) = batch.last() {
            self.next_seq = self.next_seq.max(last.seq + 1);
            self.deliver(batch);
        }
    }

    fn deliver(&mut self, batch: &[FeedRecord]) {
        for (_, s) in &mut self.subscribers {
            s.on_batch(batch);
        }
    }
}
