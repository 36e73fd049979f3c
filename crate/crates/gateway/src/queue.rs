//! Bounded per-connection frame queue. Producers never wait: when the queue
//! is full the oldest frame is dropped and the consumer is told how many
//! were lost before its next frame.

use std::collections::VecDeque;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Notify;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub channel: String,
    pub seq: u64,
    pub data: Value,
}

#[derive(Debug, Default)]
struct Inner {
    frames: VecDeque<Frame>,
    next_seq: u64,
    dropped: u64,
    last_dropped_seq: u64,
    closed: bool,
}

#[derive(Debug)]
pub struct FrameQueue {
    capacity: usize,
    inner: Mutex<Inner>,
    notify: Notify,
}

impl FrameQueue {
    pub fn new(capacity: usize) -> Self {
        FrameQueue {
            capacity: capacity.max(1),
            inner: Mutex::new(Inner {
                next_seq: 1,
                ..Inner::default()
            }),
            notify: Notify::new(),
        }
    }

    /// Enqueues a frame and returns its sequence number.
    pub fn push(&self, channel: &str, data: Value) -> u64 {
        let mut q = self.inner.lock().unwrap();
        let seq = q.next_seq;
        q.next_seq += 1;
        if q.frames.len() == self.capacity {
            let old = q.frames.pop_front().expect("queue is full");
            q.dropped += 1;
            q.last_dropped_seq = old.seq;
        }
        q.frames.push_back(Frame {
            channel: channel.to_string(),
            seq,
            data,
        });
        drop(q);
        self.notify.notify_one();
        seq
    }

    /// Everything queued, preceded by a `gap` frame if frames were dropped
    /// since the last drain. The gap frame carries the last lost `seq`.
    pub fn drain(&self) -> Vec<Frame> {
        let mut q = self.inner.lock().unwrap();
        let mut out = Vec::with_capacity(q.frames.len() + 1);
        if q.dropped > 0 {
            out.push(Frame {
                channel: "gap".into(),
                seq: q.last_dropped_seq,
                data: json!({ "dropped": q.dropped }),
            });
            q.dropped = 0;
        }
        out.extend(q.frames.drain(..));
        out
    }

    pub fn close(&self) {
        self.inner.lock().unwrap().closed = true;
        self.notify.notify_one();
    }

    pub fn is_closed(&self) -> bool {
        self.inner.lock().unwrap().closed
    }

    /// Resolves once something was pushed since the last wait.
    pub async fn ready(&self) {
        self.notify.notified().await
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
