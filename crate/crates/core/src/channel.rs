//! Bounded local channels with zero-copy handoff and fan-out.
//!
//! A channel has one [`Sender`] and one or more [`Receiver`]s, each receiver
//! owning its own bounded FIFO. Sending moves the [`Message`] into the queue;
//! with several subscribers every queue gets a handle to the same sealed
//! payload, so all receivers observe the same [`AllocId`](crate::AllocId) and
//! the storage is freed when the last handle drops.
//!
//! ```text
//!             ┌──────────────┐
//!   Sender ──▶│ queue (cap)  │──▶ Receiver 0
//!         │   └──────────────┘
//!         │   ┌──────────────┐
//!         └──▶│ queue (cap)  │──▶ Receiver 1   (fan_out_subscribe)
//!             └──────────────┘
//! ```

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::now_ns;
use crate::message::Message;

pub const DEFAULT_CAPACITY: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverflowPolicy {
    /// Sender waits for space.
    #[default]
    Block,
    /// Oldest queued message is evicted to make room.
    DropOldest,
}

impl FromStr for OverflowPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "block" => Ok(OverflowPolicy::Block),
            "drop_oldest" | "drop-oldest" => Ok(OverflowPolicy::DropOldest),
            _ => Err(format!("unknown overflow policy `{s}`")),
        }
    }
}

/// How an input port consumes from its channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncMode {
    /// Port gates firing; one message per firing, FIFO.
    #[default]
    Blocking,
    /// Port never gates firing; supplies the newest queued message, if any.
    NonBlocking,
}

/// Whether a send hands off the payload or copies it first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransferMode {
    #[default]
    ZeroCopy,
    /// Deep-copies the payload on every send. A deliberately pessimized
    /// baseline for copy-vs-handoff measurements.
    Copy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendResult {
    Accepted,
    AcceptedWithDrop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ChannelError {
    #[error("channel capacity must be at least 1")]
    InvalidCapacity,
    #[error("channel closed")]
    ChannelClosed,
    #[error("subscriptions are closed once the channel has started delivering")]
    SubscriptionClosed,
}

#[derive(Debug, Clone, Copy)]
pub struct ChannelOptions {
    pub capacity: usize,
    pub policy: OverflowPolicy,
    pub transfer: TransferMode,
}

impl Default for ChannelOptions {
    fn default() -> Self {
        ChannelOptions {
            capacity: DEFAULT_CAPACITY,
            policy: OverflowPolicy::Block,
            transfer: TransferMode::ZeroCopy,
        }
    }
}

struct QueueState {
    items: VecDeque<Message>,
    sender_closed: bool,
    receiver_closed: bool,
}

struct Queue {
    capacity: usize,
    policy: OverflowPolicy,
    state: Mutex<QueueState>,
    readable: Condvar,
    writable: Condvar,
    dropped: AtomicU64,
    discarded: AtomicU64,
    delivered: AtomicU64,
}

impl Queue {
    fn new(capacity: usize, policy: OverflowPolicy) -> Result<Arc<Self>, ChannelError> {
        if capacity == 0 {
            return Err(ChannelError::InvalidCapacity);
        }
        Ok(Arc::new(Queue {
            capacity,
            policy,
            state: Mutex::new(QueueState {
                items: VecDeque::with_capacity(capacity),
                sender_closed: false,
                receiver_closed: false,
            }),
            readable: Condvar::new(),
            writable: Condvar::new(),
            dropped: AtomicU64::new(0),
            discarded: AtomicU64::new(0),
            delivered: AtomicU64::new(0),
        }))
    }

    fn lock(&self) -> MutexGuard<'_, QueueState> {
        // A panic while holding the lock leaves the queue itself consistent.
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Returns whether an older message was evicted.
    fn push(&self, msg: Message) -> Result<bool, ChannelError> {
        let mut st = self.lock();
        let mut evicted = false;
        loop {
            if st.receiver_closed {
                return Err(ChannelError::ChannelClosed);
            }
            if st.items.len() < self.capacity {
                break;
            }
            match self.policy {
                OverflowPolicy::Block => {
                    st = self.writable.wait(st).unwrap_or_else(|e| e.into_inner());
                }
                OverflowPolicy::DropOldest => {
                    st.items.pop_front();
                    self.dropped.fetch_add(1, Ordering::Relaxed);
                    evicted = true;
                }
            }
        }
        st.items.push_back(msg);
        drop(st);
        self.readable.notify_one();
        Ok(evicted)
    }

    fn close_sender(&self) {
        self.lock().sender_closed = true;
        self.readable.notify_all();
    }

    fn close_receiver(&self) {
        let stale = {
            let mut st = self.lock();
            st.receiver_closed = true;
            std::mem::take(&mut st.items)
        };
        self.writable.notify_all();
        drop(stale);
    }
}

/// Producing end of a channel.
pub struct Sender {
    queues: Vec<Arc<Queue>>,
    transfer: TransferMode,
    started: bool,
}

/// Consuming end of one subscriber queue.
pub struct Receiver {
    queue: Arc<Queue>,
}

/// Cross-context handle for monitoring or force-closing one queue.
#[derive(Clone)]
pub struct ChannelControl {
    queue: Arc<Queue>,
}

/// Creates a channel with a zero-copy sender.
pub fn channel(
    capacity: usize,
    policy: OverflowPolicy,
) -> Result<(Sender, Receiver), ChannelError> {
    channel_with(ChannelOptions {
        capacity,
        policy,
        ..ChannelOptions::default()
    })
}

pub fn channel_with(opts: ChannelOptions) -> Result<(Sender, Receiver), ChannelError> {
    let queue = Queue::new(opts.capacity, opts.policy)?;
    let sender = Sender {
        queues: vec![queue.clone()],
        transfer: opts.transfer,
        started: false,
    };
    Ok((sender, Receiver { queue }))
}

impl Sender {
    /// Adds a subscriber with the same capacity and policy as the first queue.
    pub fn subscribe(&mut self) -> Result<Receiver, ChannelError> {
        let (capacity, policy) = (self.queues[0].capacity, self.queues[0].policy);
        self.subscribe_with(capacity, policy)
    }

    /// Adds a subscriber with its own queue parameters.
    pub fn subscribe_with(
        &mut self,
        capacity: usize,
        policy: OverflowPolicy,
    ) -> Result<Receiver, ChannelError> {
        if self.started {
            return Err(ChannelError::SubscriptionClosed);
        }
        let queue = Queue::new(capacity, policy)?;
        self.queues.push(queue.clone());
        Ok(Receiver { queue })
    }

    /// Freezes the subscriber set; the first send does this implicitly.
    pub fn seal_subscriptions(&mut self) {
        self.started = true;
    }

    pub fn subscriber_count(&self) -> usize {
        self.queues.len()
    }

    /// Enqueues `msg` on every live subscriber queue.
    ///
    /// Stamps `sent_ns` and seals the payload. Under [`OverflowPolicy::Block`]
    /// this waits for space; under [`OverflowPolicy::DropOldest`] it evicts
    /// and reports [`SendResult::AcceptedWithDrop`]. Fails with
    /// [`ChannelError::ChannelClosed`] only when no subscriber is left.
    pub fn send(&mut self, mut msg: Message) -> Result<SendResult, ChannelError> {
        self.started = true;
        msg.sent_ns = now_ns();
        if self.transfer == TransferMode::Copy {
            msg.payload = msg.payload.deep_copy();
        }
        msg.payload.seal();

        let last = self.queues.len() - 1;
        let mut msg = Some(msg);
        let mut delivered = false;
        let mut evicted = false;
        for (i, queue) in self.queues.iter().enumerate() {
            let m = if i == last {
                msg.take().expect("moved once")
            } else {
                msg.as_ref().expect("still owned").clone()
            };
            match queue.push(m) {
                Ok(e) => {
                    delivered = true;
                    evicted |= e;
                }
                Err(ChannelError::ChannelClosed) => {}
                Err(e) => return Err(e),
            }
        }
        match (delivered, evicted) {
            (false, _) => Err(ChannelError::ChannelClosed),
            (true, false) => Ok(SendResult::Accepted),
            (true, true) => Ok(SendResult::AcceptedWithDrop),
        }
    }

    /// True when every subscriber has gone away.
    pub fn is_closed(&self) -> bool {
        self.queues.iter().all(|q| q.lock().receiver_closed)
    }

    pub fn dropped_count(&self) -> u64 {
        self.queues
            .iter()
            .map(|q| q.dropped.load(Ordering::Relaxed))
            .sum()
    }

    pub fn controls(&self) -> Vec<ChannelControl> {
        self.queues
            .iter()
            .map(|q| ChannelControl { queue: q.clone() })
            .collect()
    }
}

impl Drop for Sender {
    fn drop(&mut self) {
        for q in &self.queues {
            q.close_sender();
        }
    }
}

impl fmt::Debug for Sender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Sender")
            .field("subscribers", &self.queues.len())
            .field("transfer", &self.transfer)
            .finish()
    }
}

impl Receiver {
    /// Waits for the next message in FIFO order.
    pub fn recv(&self) -> Result<Message, ChannelError> {
        let mut st = self.queue.lock();
        loop {
            if let Some(m) = st.items.pop_front() {
                drop(st);
                self.took(1);
                return Ok(m);
            }
            if st.sender_closed {
                return Err(ChannelError::ChannelClosed);
            }
            st = self
                .queue
                .readable
                .wait(st)
                .unwrap_or_else(|e| e.into_inner());
        }
    }

    /// Next message if one is queued. `Err` only once the sender is gone
    /// and the queue is drained.
    pub fn try_recv(&self) -> Result<Option<Message>, ChannelError> {
        let mut st = self.queue.lock();
        match st.items.pop_front() {
            Some(m) => {
                drop(st);
                self.took(1);
                Ok(Some(m))
            }
            None if st.sender_closed => Err(ChannelError::ChannelClosed),
            None => Ok(None),
        }
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Result<Option<Message>, ChannelError> {
        if self.wait_ready(timeout)? {
            self.try_recv()
        } else {
            Ok(None)
        }
    }

    /// Newest queued message; older queued messages are discarded.
    pub fn recv_latest(&self) -> Result<Option<Message>, ChannelError> {
        let mut st = self.queue.lock();
        let n = st.items.len();
        if n == 0 {
            return if st.sender_closed {
                Err(ChannelError::ChannelClosed)
            } else {
                Ok(None)
            };
        }
        let newest = st.items.pop_back();
        let stale = std::mem::take(&mut st.items);
        drop(st);
        self.took(n);
        self.queue
            .discarded
            .fetch_add(n as u64 - 1, Ordering::Relaxed);
        drop(stale);
        Ok(newest)
    }

    /// Receives according to the port's synchronization mode: blocking FIFO
    /// or non-blocking newest-available.
    pub fn recv_mode(&self, mode: SyncMode) -> Result<Option<Message>, ChannelError> {
        match mode {
            SyncMode::Blocking => self.recv().map(Some),
            SyncMode::NonBlocking => self.recv_latest(),
        }
    }

    /// Waits until a message is queued. Returns `Ok(false)` on timeout.
    pub fn wait_ready(&self, timeout: Duration) -> Result<bool, ChannelError> {
        let deadline = Instant::now() + timeout;
        let mut st = self.queue.lock();
        loop {
            if !st.items.is_empty() {
                return Ok(true);
            }
            if st.sender_closed {
                return Err(ChannelError::ChannelClosed);
            }
            let now = Instant::now();
            if now >= deadline {
                return Ok(false);
            }
            st = self
                .queue
                .readable
                .wait_timeout(st, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    fn took(&self, n: usize) {
        self.queue.delivered.fetch_add(n as u64, Ordering::Relaxed);
        self.queue.writable.notify_one();
    }

    pub fn len(&self) -> usize {
        self.queue.lock().items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.queue.capacity
    }

    pub fn policy(&self) -> OverflowPolicy {
        self.queue.policy
    }

    /// True once the sender is gone and nothing is left to read.
    pub fn is_exhausted(&self) -> bool {
        let st = self.queue.lock();
        st.sender_closed && st.items.is_empty()
    }

    pub fn dropped_count(&self) -> u64 {
        self.queue.dropped.load(Ordering::Relaxed)
    }

    pub fn control(&self) -> ChannelControl {
        ChannelControl {
            queue: self.queue.clone(),
        }
    }
}

impl Drop for Receiver {
    fn drop(&mut self) {
        self.queue.close_receiver();
    }
}

impl fmt::Debug for Receiver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Receiver")
            .field("capacity", &self.queue.capacity)
            .field("policy", &self.queue.policy)
            .finish()
    }
}

impl ChannelControl {
    pub fn len(&self) -> usize {
        self.queue.lock().items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dropped_count(&self) -> u64 {
        self.queue.dropped.load(Ordering::Relaxed)
    }

    /// Messages discarded by newest-available reads.
    pub fn discarded_count(&self) -> u64 {
        self.queue.discarded.load(Ordering::Relaxed)
    }

    pub fn delivered_count(&self) -> u64 {
        self.queue.delivered.load(Ordering::Relaxed)
    }

    /// Closes both ends and discards queued messages; blocked senders and
    /// receivers return [`ChannelError::ChannelClosed`].
    pub fn abort(&self) {
        let stale = {
            let mut st = self.queue.lock();
            st.sender_closed = true;
            st.receiver_closed = true;
            std::mem::take(&mut st.items)
        };
        self.queue.readable.notify_all();
        self.queue.writable.notify_all();
        drop(stale);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{FrameSpec, PixelFormat};
    use crate::message::make_frame;
    use std::thread;

    fn msg(seq: u64) -> Message {
        make_frame(
            FrameSpec::new(2, 2, PixelFormat::Gray8).unwrap(),
            seq,
            seq as u8,
        )
        .unwrap()
    }

    #[test]
    fn create_and_reject_zero_capacity() {
        let (tx, rx) = channel(8, OverflowPolicy::Block).unwrap();
        assert_eq!(rx.len(), 0);
        assert_eq!(tx.dropped_count(), 0);
        assert!(channel(1, OverflowPolicy::DropOldest).is_ok());
        assert_eq!(
            channel(0, OverflowPolicy::Block).unwrap_err(),
            ChannelError::InvalidCapacity
        );
    }

    #[test]
    fn send_to_empty() {
        let (mut tx, rx) = channel(8, OverflowPolicy::Block).unwrap();
        assert_eq!(tx.send(msg(0)).unwrap(), SendResult::Accepted);
        assert_eq!(rx.len(), 1);
    }

    #[test]
    fn drop_oldest_evicts() {
        let (mut tx, rx) = channel(1, OverflowPolicy::DropOldest).unwrap();
        tx.send(msg(0)).unwrap();
        assert_eq!(tx.send(msg(1)).unwrap(), SendResult::AcceptedWithDrop);
        assert_eq!(tx.dropped_count(), 1);
        assert_eq!(rx.len(), 1);
        assert_eq!(rx.recv().unwrap().seq, 1);
    }

    #[test]
    fn send_after_receiver_closed() {
        let (mut tx, rx) = channel(8, OverflowPolicy::Block).unwrap();
        drop(rx);
        assert_eq!(tx.send(msg(0)).unwrap_err(), ChannelError::ChannelClosed);
    }

    #[test]
    fn fifo_and_nonblocking_empty() {
        let (mut tx, rx) = channel(8, OverflowPolicy::Block).unwrap();
        assert!(rx.try_recv().unwrap().is_none());
        tx.send(msg(1)).unwrap();
        tx.send(msg(2)).unwrap();
        assert_eq!(rx.recv().unwrap().seq, 1);
        assert_eq!(rx.recv_mode(SyncMode::Blocking).unwrap().unwrap().seq, 2);
        assert!(rx.recv_mode(SyncMode::NonBlocking).unwrap().is_none());
    }

    #[test]
    fn alloc_id_survives_transfer() {
        let (mut tx, rx) = channel(8, OverflowPolicy::Block).unwrap();
        let m = msg(0);
        let id = m.alloc_id();
        tx.send(m).unwrap();
        let got = rx.recv().unwrap();
        assert_eq!(got.alloc_id(), id);
        assert!(got.payload.is_sealed());
        assert_eq!(got.payload.bytes_copied_out(), 0);
    }

    #[test]
    fn copy_transfer_changes_identity() {
        let (mut tx, rx) = channel_with(ChannelOptions {
            transfer: TransferMode::Copy,
            ..Default::default()
        })
        .unwrap();
        let m = msg(0);
        let id = m.alloc_id();
        let keep = m.payload.clone();
        tx.send(m).unwrap();
        let got = rx.recv().unwrap();
        assert_ne!(got.alloc_id(), id);
        assert_eq!(got.payload.as_slice(), keep.as_slice());
        assert_eq!(keep.bytes_copied_out(), 4);
    }

    #[test]
    fn closed_sender_drains_then_errors() {
        let (mut tx, rx) = channel(8, OverflowPolicy::Block).unwrap();
        tx.send(msg(0)).unwrap();
        drop(tx);
        assert_eq!(rx.recv().unwrap().seq, 0);
        assert_eq!(rx.recv().unwrap_err(), ChannelError::ChannelClosed);
        assert_eq!(rx.try_recv().unwrap_err(), ChannelError::ChannelClosed);
        assert!(rx.is_exhausted());
    }

    #[test]
    fn latest_discards_stale() {
        let (mut tx, rx) = channel(8, OverflowPolicy::Block).unwrap();
        for s in 0..3 {
            tx.send(msg(s)).unwrap();
        }
        assert_eq!(rx.recv_latest().unwrap().unwrap().seq, 2);
        assert!(rx.is_empty());
        assert_eq!(rx.control().discarded_count(), 2);
    }

    #[test]
    fn fan_out_shares_payload() {
        let (mut tx, rx0) = channel(8, OverflowPolicy::Block).unwrap();
        let rx1 = tx.subscribe().unwrap();
        let m = msg(4);
        let id = m.alloc_id();
        tx.send(m).unwrap();
        let a = rx0.recv().unwrap();
        let b = rx1.recv().unwrap();
        assert_eq!(a.alloc_id(), id);
        assert_eq!(b.alloc_id(), id);
        assert_eq!(a.payload.as_slice(), b.payload.as_slice());
        assert_eq!(a.payload.share_count(), 2);
        drop(a);
        assert_eq!(b.payload.share_count(), 1);
    }

    #[test]
    fn subscribe_after_start_rejected() {
        let (mut tx, _rx) = channel(8, OverflowPolicy::Block).unwrap();
        tx.send(msg(0)).unwrap();
        assert_eq!(
            tx.subscribe().unwrap_err(),
            ChannelError::SubscriptionClosed
        );

        let (mut tx, _rx) = channel(8, OverflowPolicy::Block).unwrap();
        tx.seal_subscriptions();
        assert_eq!(
            tx.subscribe().unwrap_err(),
            ChannelError::SubscriptionClosed
        );
    }

    #[test]
    fn fan_out_skips_closed_subscriber() {
        let (mut tx, rx0) = channel(1, OverflowPolicy::Block).unwrap();
        let rx1 = tx.subscribe().unwrap();
        drop(rx0);
        assert_eq!(tx.send(msg(0)).unwrap(), SendResult::Accepted);
        assert_eq!(rx1.recv().unwrap().seq, 0);
        assert!(!tx.is_closed());
        drop(rx1);
        assert!(tx.is_closed());
        assert_eq!(tx.send(msg(1)).unwrap_err(), ChannelError::ChannelClosed);
    }

    #[test]
    fn blocking_send_waits_for_space() {
        let (mut tx, rx) = channel(1, OverflowPolicy::Block).unwrap();
        tx.send(msg(0)).unwrap();
        let h = thread::spawn(move || {
            tx.send(msg(1)).unwrap();
            tx
        });
        thread::sleep(Duration::from_millis(20));
        assert_eq!(rx.recv().unwrap().seq, 0);
        let _tx = h.join().unwrap();
        assert_eq!(rx.recv().unwrap().seq, 1);
    }

    #[test]
    fn abort_unblocks_sender() {
        let (mut tx, rx) = channel(1, OverflowPolicy::Block).unwrap();
        tx.send(msg(0)).unwrap();
        let ctl = rx.control();
        let h = thread::spawn(move || tx.send(msg(1)));
        thread::sleep(Duration::from_millis(20));
        ctl.abort();
        assert_eq!(h.join().unwrap().unwrap_err(), ChannelError::ChannelClosed);
        assert_eq!(rx.recv().unwrap_err(), ChannelError::ChannelClosed);
    }

    #[test]
    fn wait_ready_times_out() {
        let (_tx, rx) = channel(1, OverflowPolicy::Block).unwrap();
        assert!(!rx.wait_ready(Duration::from_millis(5)).unwrap());
        assert!(rx.recv_timeout(Duration::from_millis(5)).unwrap().is_none());
    }
}
