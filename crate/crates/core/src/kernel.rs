//! Kernels, ports, and the firing rule.
//!
//! A [`KernelInstance`] wraps a user [`Kernel`] with its bound channels. It
//! fires only when every [`SyncMode::Blocking`] input has a message queued;
//! [`SyncMode::NonBlocking`] inputs contribute their newest queued message,
//! or nothing, and never gate firing. Output sequence numbers are assigned
//! per port, starting at 0.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::channel::{ChannelError, OverflowPolicy, Receiver, SendResult, Sender, SyncMode};
use crate::kernels::LatencyLog;
use crate::message::Message;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortSpec {
    pub name: String,
    pub direction: Direction,
    /// Meaningful for input ports only.
    pub sync_mode: SyncMode,
    /// Policy for channels created on the output side.
    pub overflow_policy: OverflowPolicy,
}

impl PortSpec {
    pub fn input(name: &str) -> Self {
        PortSpec {
            name: name.to_string(),
            direction: Direction::In,
            sync_mode: SyncMode::Blocking,
            overflow_policy: OverflowPolicy::Block,
        }
    }

    pub fn output(name: &str) -> Self {
        PortSpec {
            name: name.to_string(),
            direction: Direction::Out,
            ..PortSpec::input(name)
        }
    }

    pub fn with_sync(mut self, mode: SyncMode) -> Self {
        self.sync_mode = mode;
        self
    }

    pub fn with_policy(mut self, policy: OverflowPolicy) -> Self {
        self.overflow_policy = policy;
        self
    }
}

/// Cause reported by a kernel's step function.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct KernelFailure(pub String);

impl From<String> for KernelFailure {
    fn from(s: String) -> Self {
        KernelFailure(s)
    }
}

impl From<&str> for KernelFailure {
    fn from(s: &str) -> Self {
        KernelFailure(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("kernel `{kernel}` failed: {cause}")]
    Failed { kernel: String, cause: String },
    #[error("kernel `{kernel}` is not running")]
    NotRunning { kernel: String },
    #[error("kernel `{kernel}` has no {direction:?} port `{port}`")]
    UnknownPort {
        kernel: String,
        port: String,
        direction: Direction,
    },
}

/// What a step asks of the runtime afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    /// The kernel will produce nothing further (e.g. a source hit its budget).
    Done,
}

/// A compute unit. Implementations hold only their own state; the runtime
/// owns the channels.
pub trait Kernel: Send {
    fn type_name(&self) -> &'static str;

    fn ports(&self) -> Vec<PortSpec>;

    fn step(&mut self, io: &mut StepIo) -> Result<Flow, KernelFailure>;

    /// Latency records, for sink kernels.
    fn latency_log(&self) -> Option<&LatencyLog> {
        None
    }
}

/// Inputs gathered for one firing and outputs produced by it.
#[derive(Debug, Default)]
pub struct StepIo {
    inputs: Vec<(String, Option<Message>)>,
    outputs: Vec<(String, Vec<Message>)>,
}

impl StepIo {
    pub fn new<I, O>(inputs: I, output_ports: O) -> Self
    where
        I: IntoIterator<Item = (String, Option<Message>)>,
        O: IntoIterator<Item = String>,
    {
        StepIo {
            inputs: inputs.into_iter().collect(),
            outputs: output_ports.into_iter().map(|p| (p, Vec::new())).collect(),
        }
    }

    pub fn input(&self, port: &str) -> Option<&Message> {
        self.inputs
            .iter()
            .find(|(name, _)| name == port)
            .and_then(|(_, m)| m.as_ref())
    }

    pub fn take(&mut self, port: &str) -> Option<Message> {
        self.inputs
            .iter_mut()
            .find(|(name, _)| name == port)
            .and_then(|(_, m)| m.take())
    }

    pub fn emit(&mut self, port: &str, msg: Message) -> Result<(), KernelFailure> {
        match self.outputs.iter_mut().find(|(name, _)| name == port) {
            Some((_, out)) => {
                out.push(msg);
                Ok(())
            }
            None => Err(KernelFailure(format!(
                "emit on unknown output port `{port}`"
            ))),
        }
    }

    /// Messages emitted so far on `port` during this step.
    pub fn emitted(&self, port: &str) -> &[Message] {
        self.outputs
            .iter()
            .find(|(p, _)| p == port)
            .map(|(_, m)| m.as_slice())
            .unwrap_or(&[])
    }

    pub fn into_outputs(self) -> Vec<(String, Vec<Message>)> {
        self.outputs
    }
}

/// Messages produced by one firing, grouped by output port.
#[derive(Debug, Default)]
pub struct Emitted {
    pub ports: Vec<(String, Vec<Message>)>,
}

impl Emitted {
    pub fn port(&self, name: &str) -> &[Message] {
        self.ports
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn total(&self) -> usize {
        self.ports.iter().map(|(_, v)| v.len()).sum()
    }
}

#[derive(Debug)]
pub enum StepOutcome {
    Fired(Emitted),
    /// The kernel fired for the last time.
    Finished(Emitted),
    /// A blocking input had nothing queued; nothing was consumed.
    Starved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Lifecycle {
    Created,
    Running,
    Stopped,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct KernelCounters {
    pub fired: u64,
    pub messages_in: u64,
    pub messages_out: u64,
    /// Messages evicted from this kernel's output queues.
    pub drops: u64,
}

struct InputBinding {
    spec: PortSpec,
    rx: Option<Receiver>,
}

struct OutputBinding {
    spec: PortSpec,
    next_seq: u64,
    tx: Option<Sender>,
}

/// Shared run flags for kernels driven by [`KernelInstance::run`].
#[derive(Debug, Clone, Default)]
pub struct RunControl {
    /// Sources stop emitting once set.
    pub stop: Arc<AtomicBool>,
    /// Every kernel gives up waiting once set.
    pub abort: Arc<AtomicBool>,
    /// Per-source cap on emitted frames.
    pub frame_limit: Option<u64>,
}

/// Why [`KernelInstance::run`] returned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum RunEnd {
    /// Source budget exhausted or the stop flag was raised.
    Completed,
    /// A blocking input will never deliver again.
    InputsClosed,
    /// Every consumer of an output went away.
    DownstreamClosed,
    Aborted,
    Failed(String),
}

const POLL: Duration = Duration::from_millis(20);

pub struct KernelInstance {
    name: String,
    kernel: Box<dyn Kernel>,
    inputs: Vec<InputBinding>,
    outputs: Vec<OutputBinding>,
    lifecycle: Lifecycle,
    counters: KernelCounters,
    failure: Option<KernelError>,
}

impl KernelInstance {
    pub fn new(name: impl Into<String>, kernel: Box<dyn Kernel>) -> Self {
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for spec in kernel.ports() {
            match spec.direction {
                Direction::In => inputs.push(InputBinding { spec, rx: None }),
                Direction::Out => outputs.push(OutputBinding {
                    spec,
                    next_seq: 0,
                    tx: None,
                }),
            }
        }
        KernelInstance {
            name: name.into(),
            kernel,
            inputs,
            outputs,
            lifecycle: Lifecycle::Created,
            counters: KernelCounters::default(),
            failure: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn type_name(&self) -> &'static str {
        self.kernel.type_name()
    }

    pub fn kernel(&self) -> &dyn Kernel {
        self.kernel.as_ref()
    }

    pub fn lifecycle(&self) -> Lifecycle {
        self.lifecycle
    }

    pub fn counters(&self) -> KernelCounters {
        self.counters
    }

    pub fn failure(&self) -> Option<&KernelError> {
        self.failure.as_ref()
    }

    pub fn is_source(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn is_sink(&self) -> bool {
        self.outputs.is_empty()
    }

    /// Binds a receiver to an input port, overriding the port's sync mode.
    pub fn bind_input(
        &mut self,
        port: &str,
        rx: Receiver,
        mode: SyncMode,
    ) -> Result<(), KernelError> {
        let name = self.name.clone();
        let binding = self
            .inputs
            .iter_mut()
            .find(|b| b.spec.name == port)
            .ok_or_else(|| KernelError::UnknownPort {
                kernel: name,
                port: port.to_string(),
                direction: Direction::In,
            })?;
        binding.spec.sync_mode = mode;
        binding.rx = Some(rx);
        Ok(())
    }

    pub fn bind_output(&mut self, port: &str, tx: Sender) -> Result<(), KernelError> {
        let name = self.name.clone();
        let binding = self
            .outputs
            .iter_mut()
            .find(|b| b.spec.name == port)
            .ok_or_else(|| KernelError::UnknownPort {
                kernel: name,
                port: port.to_string(),
                direction: Direction::Out,
            })?;
        binding.tx = Some(tx);
        Ok(())
    }

    pub fn start(&mut self) {
        if self.lifecycle == Lifecycle::Created {
            for out in &mut self.outputs {
                if let Some(tx) = out.tx.as_mut() {
                    tx.seal_subscriptions();
                }
            }
            self.lifecycle = Lifecycle::Running;
        }
    }

    /// Stops the kernel and releases its channels, closing them for peers.
    pub fn stop(&mut self) {
        self.counters.drops = self
            .outputs
            .iter()
            .filter_map(|o| o.tx.as_ref())
            .map(Sender::dropped_count)
            .sum();
        for out in &mut self.outputs {
            out.tx = None;
        }
        for inp in &mut self.inputs {
            inp.rx = None;
        }
        self.lifecycle = Lifecycle::Stopped;
    }

    /// One non-blocking attempt to fire.
    pub fn step(&mut self) -> Result<StepOutcome, KernelError> {
        if self.lifecycle != Lifecycle::Running {
            return Err(KernelError::NotRunning {
                kernel: self.name.clone(),
            });
        }
        let gated = self
            .inputs
            .iter()
            .filter(|b| b.spec.sync_mode == SyncMode::Blocking)
            .all(|b| b.rx.as_ref().is_some_and(|rx| !rx.is_empty()));
        if !gated {
            return Ok(StepOutcome::Starved);
        }

        let mut gathered = Vec::with_capacity(self.inputs.len());
        for b in &self.inputs {
            let msg = match (&b.rx, b.spec.sync_mode) {
                (Some(rx), SyncMode::Blocking) => match rx.try_recv() {
                    Ok(Some(m)) => Some(m),
                    // Only an abort can empty a checked queue under us.
                    _ => return Ok(StepOutcome::Starved),
                },
                (Some(rx), SyncMode::NonBlocking) => rx.recv_latest().ok().flatten(),
                (None, _) => None,
            };
            gathered.push((b.spec.name.clone(), msg));
        }
        self.counters.messages_in += gathered.iter().filter(|(_, m)| m.is_some()).count() as u64;

        let mut io = StepIo::new(gathered, self.outputs.iter().map(|o| o.spec.name.clone()));
        let flow = match self.kernel.step(&mut io) {
            Ok(flow) => flow,
            Err(cause) => {
                let err = KernelError::Failed {
                    kernel: self.name.clone(),
                    cause: cause.0,
                };
                self.failure = Some(err.clone());
                self.stop();
                return Err(err);
            }
        };

        let mut emitted = Emitted {
            ports: io.into_outputs(),
        };
        for (port, msgs) in &mut emitted.ports {
            let out = self
                .outputs
                .iter_mut()
                .find(|o| &o.spec.name == port)
                .expect("StepIo only accepts declared outputs");
            for m in msgs.iter_mut() {
                m.seq = out.next_seq;
                out.next_seq += 1;
            }
        }
        self.counters.fired += 1;
        self.counters.messages_out += emitted.total() as u64;
        Ok(match flow {
            Flow::Continue => StepOutcome::Fired(emitted),
            Flow::Done => StepOutcome::Finished(emitted),
        })
    }

    /// Sends emitted messages on their bound output channels. Messages for
    /// unbound ports are discarded.
    pub fn dispatch(&mut self, emitted: Emitted) -> Result<(), ChannelError> {
        for (port, msgs) in emitted.ports {
            let Some(out) = self.outputs.iter_mut().find(|o| o.spec.name == port) else {
                continue;
            };
            let Some(tx) = out.tx.as_mut() else { continue };
            for m in msgs {
                match tx.send(m)? {
                    SendResult::Accepted | SendResult::AcceptedWithDrop => {}
                }
            }
        }
        Ok(())
    }

    /// Drives the kernel on the calling thread until it completes, its
    /// inputs close, its consumers vanish, it fails, or `ctl.abort` is set.
    /// The kernel is stopped on return.
    pub fn run(&mut self, ctl: &RunControl) -> RunEnd {
        self.start();
        let end = self.run_loop(ctl);
        self.stop();
        end
    }

    fn run_loop(&mut self, ctl: &RunControl) -> RunEnd {
        let source = self.is_source();
        loop {
            if ctl.abort.load(Ordering::Relaxed) {
                return RunEnd::Aborted;
            }
            if source {
                if ctl.stop.load(Ordering::Relaxed) {
                    return RunEnd::Completed;
                }
                if ctl.frame_limit.is_some_and(|n| self.counters.fired >= n) {
                    return RunEnd::Completed;
                }
            }
            match self.wait_inputs(ctl) {
                Ok(true) => {}
                Ok(false) => continue,
                Err(end) => return end,
            }
            match self.step() {
                Ok(StepOutcome::Fired(e)) => {
                    if self.dispatch(e).is_err() {
                        return RunEnd::DownstreamClosed;
                    }
                }
                Ok(StepOutcome::Finished(e)) => {
                    if self.dispatch(e).is_err() {
                        return RunEnd::DownstreamClosed;
                    }
                    return RunEnd::Completed;
                }
                Ok(StepOutcome::Starved) => {}
                Err(e) => return RunEnd::Failed(e.to_string()),
            }
        }
    }

    /// `Ok(true)` when the firing rule is satisfied, `Ok(false)` on a poll
    /// timeout.
    fn wait_inputs(&self, ctl: &RunControl) -> Result<bool, RunEnd> {
        let blocking: Vec<&Receiver> = self
            .inputs
            .iter()
            .filter(|b| b.spec.sync_mode == SyncMode::Blocking)
            .filter_map(|b| b.rx.as_ref())
            .collect();
        if blocking.is_empty() {
            if self.inputs.is_empty() {
                return Ok(true);
            }
            // Only non-blocking inputs: fire whenever any of them has data.
            let live: Vec<&Receiver> = self
                .inputs
                .iter()
                .filter_map(|b| b.rx.as_ref())
                .filter(|rx| !rx.is_exhausted())
                .collect();
            if live.is_empty() {
                return Err(RunEnd::InputsClosed);
            }
            if live.iter().any(|rx| !rx.is_empty()) {
                return Ok(true);
            }
            return match live[0].wait_ready(POLL) {
                Ok(ready) => Ok(ready),
                Err(_) => Ok(false),
            };
        }
        for rx in blocking {
            loop {
                match rx.wait_ready(POLL) {
                    Ok(true) => break,
                    Ok(false) => {
                        if ctl.abort.load(Ordering::Relaxed) {
                            return Err(RunEnd::Aborted);
                        }
                    }
                    Err(_) => return Err(RunEnd::InputsClosed),
                }
            }
        }
        Ok(true)
    }
}

impl std::fmt::Debug for KernelInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelInstance")
            .field("name", &self.name)
            .field("type", &self.kernel.type_name())
            .field("lifecycle", &self.lifecycle)
            .field("counters", &self.counters)
            .finish()
    }
}
