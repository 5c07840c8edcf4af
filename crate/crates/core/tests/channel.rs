use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use proptest::prelude::*;
use xrpipe_core::{
    channel, channel_with, make_frame, ChannelError, ChannelOptions, FrameSpec, Message,
    OverflowPolicy, PixelFormat, SendResult, TransferMode,
};

fn small(seq: u64) -> Message {
    make_frame(
        FrameSpec::new(4, 1, PixelFormat::Gray8).unwrap(),
        seq,
        seq as u8,
    )
    .unwrap()
}

/// Spin for a pseudo-random handful of iterations to perturb interleavings.
fn jitter(x: u8) {
    for _ in 0..(x as u32 * 50) {
        std::hint::spin_loop();
    }
    if x.is_multiple_of(7) {
        thread::yield_now();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fifo_under_random_schedules(
        capacity in 1usize..6,
        send_delays in proptest::collection::vec(any::<u8>(), 1..200),
        recv_delays in proptest::collection::vec(any::<u8>(), 1..50),
    ) {
        let n = send_delays.len() as u64;
        let (mut tx, rx) = channel(capacity, OverflowPolicy::Block).unwrap();
        let producer = thread::spawn(move || {
            for (seq, d) in send_delays.into_iter().enumerate() {
                jitter(d);
                tx.send(small(seq as u64)).unwrap();
            }
        });
        let mut got = Vec::new();
        while let Ok(m) = rx.recv() {
            jitter(recv_delays[got.len() % recv_delays.len()]);
            got.push(m.seq);
        }
        producer.join().unwrap();
        prop_assert_eq!(got, (0..n).collect::<Vec<_>>());
    }
}

#[test]
fn bounded_under_stress() {
    for capacity in [1, 3, 8] {
        let (mut tx, rx) = channel(capacity, OverflowPolicy::Block).unwrap();
        let ctl = rx.control();
        let done = Arc::new(AtomicBool::new(false));
        let monitor = {
            let done = Arc::clone(&done);
            thread::spawn(move || {
                let mut max = 0;
                while !done.load(Ordering::Relaxed) {
                    max = max.max(ctl.len());
                }
                max
            })
        };
        let producer = thread::spawn(move || {
            for seq in 0..20_000 {
                tx.send(small(seq)).unwrap();
            }
        });
        let mut count = 0u64;
        while let Ok(m) = rx.recv() {
            assert_eq!(m.seq, count);
            assert!(rx.len() <= capacity);
            count += 1;
        }
        producer.join().unwrap();
        done.store(true, Ordering::Relaxed);
        assert!(monitor.join().unwrap() <= capacity);
        assert_eq!(count, 20_000);
    }
}

#[test]
fn capacity_zero_is_rejected() {
    assert_eq!(
        channel(0, OverflowPolicy::Block).unwrap_err(),
        ChannelError::InvalidCapacity
    );
    assert!(channel(1, OverflowPolicy::DropOldest).is_ok());
}

#[test]
fn drop_oldest_keeps_newest() {
    let (mut tx, rx) = channel(1, OverflowPolicy::DropOldest).unwrap();
    assert_eq!(tx.send(small(0)).unwrap(), SendResult::Accepted);
    assert_eq!(tx.send(small(1)).unwrap(), SendResult::AcceptedWithDrop);
    assert_eq!(tx.dropped_count(), 1);
    assert_eq!(rx.len(), 1);
    assert_eq!(rx.recv().unwrap().seq, 1);

    // A fast producer never blocks and the consumer sees an ordered subset.
    let (mut tx, rx) = channel(2, OverflowPolicy::DropOldest).unwrap();
    for seq in 0..1000 {
        tx.send(small(seq)).unwrap();
    }
    drop(tx);
    let seen: Vec<u64> = std::iter::from_fn(|| rx.recv().ok())
        .map(|m| m.seq)
        .collect();
    assert_eq!(seen, [998, 999]);
}

#[test]
fn closed_endpoints() {
    let (mut tx, rx) = channel(4, OverflowPolicy::Block).unwrap();
    tx.send(small(0)).unwrap();
    drop(tx);
    assert_eq!(rx.recv().unwrap().seq, 0);
    assert_eq!(rx.recv().unwrap_err(), ChannelError::ChannelClosed);

    let (mut tx, rx) = channel(4, OverflowPolicy::Block).unwrap();
    drop(rx);
    assert_eq!(tx.send(small(0)).unwrap_err(), ChannelError::ChannelClosed);
}

#[test]
fn blocked_sender_wakes_when_receiver_leaves() {
    let (mut tx, rx) = channel(1, OverflowPolicy::Block).unwrap();
    tx.send(small(0)).unwrap();
    let h = thread::spawn(move || tx.send(small(1)));
    thread::sleep(Duration::from_millis(50));
    drop(rx);
    assert_eq!(h.join().unwrap().unwrap_err(), ChannelError::ChannelClosed);
}

#[test]
fn fan_out_shares_one_allocation() {
    let (mut tx, a) = channel(4, OverflowPolicy::Block).unwrap();
    let b = tx.subscribe().unwrap();
    let m = small(0);
    let id = m.alloc_id();
    let bytes = m.payload.to_vec();
    tx.send(m).unwrap();
    let (ma, mb) = (a.recv().unwrap(), b.recv().unwrap());
    assert_eq!(ma.alloc_id(), id);
    assert_eq!(mb.alloc_id(), id);
    assert_eq!(ma.payload.as_slice(), bytes);
    assert_eq!(mb.payload.as_slice(), bytes);
    assert_eq!(ma.payload.share_count(), 2);
    drop(mb);
    assert_eq!(ma.payload.share_count(), 1);
    assert_eq!(ma.payload.bytes_copied_out(), 0);

    assert_eq!(
        tx.subscribe().unwrap_err(),
        ChannelError::SubscriptionClosed
    );
}

#[test]
fn fan_out_survives_one_subscriber_leaving() {
    let (mut tx, a) = channel(2, OverflowPolicy::Block).unwrap();
    let b = tx.subscribe().unwrap();
    drop(b);
    for seq in 0..2 {
        tx.send(small(seq)).unwrap();
    }
    assert_eq!(a.recv().unwrap().seq, 0);
    drop(a);
    assert_eq!(tx.send(small(2)).unwrap_err(), ChannelError::ChannelClosed);
}

#[test]
fn sent_payloads_are_copy_on_write() {
    let (mut tx, rx) = channel(2, OverflowPolicy::Block).unwrap();
    let mut m = small(0);
    m.payload.get_mut().unwrap()[0] = 99;
    let id = m.alloc_id();
    tx.send(m).unwrap();
    let mut got = rx.recv().unwrap();
    assert!(got.payload.is_sealed());
    assert!(got.payload.get_mut().is_none());
    assert_eq!(got.payload[0], 99);
    got.payload.make_mut()[0] = 1;
    assert_ne!(got.alloc_id(), id);
    assert_eq!(got.payload[0], 1);
}

#[test]
fn timestamps_and_identity() {
    let (mut tx, rx) = channel(1, OverflowPolicy::Block).unwrap();
    let m = small(0);
    let (id, created) = (m.alloc_id(), m.created_ns);
    tx.send(m).unwrap();
    let got = rx.recv().unwrap();
    assert_eq!(got.alloc_id(), id);
    assert_eq!(got.created_ns, created);
    assert!(got.created_ns <= got.sent_ns);
}

#[test]
fn copy_mode_gives_fresh_identity() {
    let (mut tx, rx) = channel_with(ChannelOptions {
        transfer: TransferMode::Copy,
        ..ChannelOptions::default()
    })
    .unwrap();
    let m = small(0);
    let id = m.alloc_id();
    tx.send(m).unwrap();
    let got = rx.recv().unwrap();
    assert_ne!(got.alloc_id(), id);
    assert_eq!(got.payload.as_slice(), [0, 0, 0, 0]);
}
