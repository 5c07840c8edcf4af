//! Thread scheduling helpers.

use std::io;

/// Moves the calling thread to `SCHED_FIFO` at `priority`.
///
/// Needs `CAP_SYS_NICE` or a matching `RLIMIT_RTPRIO`; callers are expected
/// to carry on at normal priority when this fails.
pub fn set_realtime(priority: i32) -> io::Result<()> {
    let param = libc::sched_param {
        sched_priority: priority,
    };
    // SAFETY: pid 0 targets the calling thread and `param` outlives the call.
    let rc = unsafe { libc::sched_setscheduler(0, libc::SCHED_FIFO, &param) };
    if rc == 0 {
        Ok(())
    } else {
        Err(io::Error::last_os_error())
    }
}

/// Priority used for consumer threads in the benchmarks.
pub const CONSUMER_PRIORITY: i32 = 10;

/// Best-effort [`set_realtime`] that logs instead of failing.
pub fn try_realtime(priority: i32) -> bool {
    match set_realtime(priority) {
        Ok(()) => true,
        Err(e) => {
            log::debug!("realtime priority unavailable: {e}");
            false
        }
    }
}
