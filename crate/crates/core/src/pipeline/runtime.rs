//! Instantiating a validated config for one role and driving it.

use std::collections::HashMap;
use std::fmt;
use std::net::SocketAddr;
use std::str::FromStr;
use std::sync::atomic::Ordering;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{EdgeDecl, EdgeKind, PipelineConfig, Placement};
use super::registry::KernelRegistry;
use super::report::{KernelReport, LinkDirection, LinkReport, RunReport, SinkReport};
use super::validate::{validate_config, ValidationError};
use crate::channel::{
    channel, ChannelControl, ChannelError, OverflowPolicy, Receiver, Sender, DEFAULT_CAPACITY,
};
use crate::kernel::{KernelError, KernelInstance, RunControl, RunEnd};
use crate::params::ParamError;
use crate::remote::{
    loopback_for, LinkConfig, LinkError, LinkListener, LinkReceiver, LinkRole, LinkSender,
    LinkShutdown, RemoteLink,
};

/// Which kernels this process hosts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Client,
    Server,
    /// Both sides in one process; remote edges still cross a loopback link.
    All,
}

impl Role {
    pub fn hosts(self, placement: Placement) -> bool {
        matches!(
            (self, placement),
            (Role::All, _) | (Role::Client, Placement::Client) | (Role::Server, Placement::Server)
        )
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Client => "client",
            Role::Server => "server",
            Role::All => "all",
        })
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "client" => Ok(Role::Client),
            "server" => Ok(Role::Server),
            "all" => Ok(Role::All),
            _ => Err(format!(
                "unknown role `{s}` (expected client, server or all)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<ValidationError>),
    #[error("kernel `{kernel}`: {source}")]
    Params {
        kernel: String,
        #[source]
        source: ParamError,
    },
    #[error("edge {edge}: {source}")]
    Link {
        edge: String,
        #[source]
        source: LinkError,
    },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, Copy)]
pub struct RuntimeOptions {
    pub accept_timeout: Duration,
    pub handshake_timeout: Duration,
    /// Grace period after stop before everything is aborted.
    pub drain: Duration,
}

impl Default for RuntimeOptions {
    fn default() -> Self {
        RuntimeOptions {
            accept_timeout: Duration::from_secs(60),
            handshake_timeout: Duration::from_secs(10),
            drain: Duration::from_secs(2),
        }
    }
}

/// When to stop the sources.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunLimit {
    pub duration: Option<Duration>,
    /// Per-source cap on emitted frames.
    pub frames: Option<u64>,
}

struct Hosted {
    instance: KernelInstance,
    placement: Placement,
}

struct PendingLink {
    edge: String,
    link: LinkConfig,
    listener: Option<LinkListener>,
    /// Set when this process also dials (role ALL, or the client side).
    connect_to: Option<String>,
    outbound: Option<Receiver>,
    inbound: Option<Sender>,
}

/// Kernels built and channels wired; listeners bound but no peer yet.
pub struct PreparedPipeline {
    role: Role,
    opts: RuntimeOptions,
    kernels: Vec<Hosted>,
    links: Vec<PendingLink>,
    controls: Vec<ChannelControl>,
}

enum Pump {
    Out {
        edge: String,
        rx: Receiver,
        link: LinkSender,
    },
    In {
        edge: String,
        link: LinkReceiver,
        tx: Sender,
    },
}

/// Every link established; ready to run.
pub struct RunningPipeline {
    role: Role,
    opts: RuntimeOptions,
    kernels: Vec<Hosted>,
    pumps: Vec<Pump>,
    controls: Vec<ChannelControl>,
    shutdowns: Vec<LinkShutdown>,
}

/// Validates, builds and connects in one go.
pub fn instantiate(
    cfg: &PipelineConfig,
    registry: &KernelRegistry,
    role: Role,
) -> Result<RunningPipeline, PipelineError> {
    prepare(cfg, registry, role, RuntimeOptions::default())?.connect()
}

/// Validates the config, builds the kernels this role hosts, wires local
/// channels and binds listeners for remote edges.
pub fn prepare(
    cfg: &PipelineConfig,
    registry: &KernelRegistry,
    role: Role,
    opts: RuntimeOptions,
) -> Result<PreparedPipeline, PipelineError> {
    validate_config(cfg, registry).map_err(PipelineError::Invalid)?;

    let mut kernels = Vec::new();
    let mut index = HashMap::new();
    for k in cfg.kernels.iter().filter(|k| role.hosts(k.placement)) {
        let kernel = registry
            .build(&k.kernel_type, &k.params)
            .expect("validated type")
            .map_err(|source| PipelineError::Params {
                kernel: k.name.clone(),
                source,
            })?;
        index.insert(k.name.clone(), kernels.len());
        kernels.push(Hosted {
            instance: KernelInstance::new(k.name.clone(), kernel),
            placement: k.placement,
        });
    }

    // One fan-out hub per driven output port, in first-use order.
    let mut hubs: Vec<((String, String), Sender)> = Vec::new();
    let mut subscribe = |kernel: &str, port: &str, cap: usize, policy: OverflowPolicy| {
        let key = (kernel.to_string(), port.to_string());
        match hubs.iter_mut().find(|(k, _)| *k == key) {
            Some((_, tx)) => tx.subscribe_with(cap, policy),
            None => {
                let (tx, rx) = channel(cap, policy)?;
                hubs.push((key, tx));
                Ok(rx)
            }
        }
    };

    let mut controls = Vec::new();
    let mut links = Vec::new();
    for e in &cfg.edges {
        let from = index.get(&e.from.kernel).copied();
        let to = index.get(&e.to.kernel).copied();
        match e.kind {
            EdgeKind::Local => {
                let (Some(_), Some(to)) = (from, to) else {
                    continue;
                };
                let rx = subscribe(&e.from.kernel, &e.from.port, e.capacity, e.overflow_policy)?;
                kernels[to]
                    .instance
                    .bind_input(&e.to.port, rx, e.sync_mode)?;
            }
            EdgeKind::Remote => {
                if from.is_none() && to.is_none() {
                    continue;
                }
                let outbound = match from {
                    Some(_) => Some(subscribe(
                        &e.from.kernel,
                        &e.from.port,
                        DEFAULT_CAPACITY,
                        OverflowPolicy::Block,
                    )?),
                    None => None,
                };
                let inbound = match to {
                    Some(to) => {
                        let (tx, rx) = channel(DEFAULT_CAPACITY, OverflowPolicy::Block)?;
                        kernels[to]
                            .instance
                            .bind_input(&e.to.port, rx, e.sync_mode)?;
                        Some(tx)
                    }
                    None => None,
                };
                links.push(pending_link(e, role, &opts, outbound, inbound)?);
            }
        }
    }

    for ((kernel, port), tx) in hubs {
        controls.extend(tx.controls());
        kernels[index[&kernel]].instance.bind_output(&port, tx)?;
    }
    for l in &links {
        if let Some(tx) = &l.inbound {
            controls.extend(tx.controls());
        }
    }

    Ok(PreparedPipeline {
        role,
        opts,
        kernels,
        links,
        controls,
    })
}

fn pending_link(
    e: &EdgeDecl,
    role: Role,
    opts: &RuntimeOptions,
    outbound: Option<Receiver>,
    inbound: Option<Sender>,
) -> Result<PendingLink, PipelineError> {
    let edge = e.label();
    let transport = e
        .transport
        .as_ref()
        .expect("parser requires transport on remote edges");
    let link_err = |source| PipelineError::Link {
        edge: edge.clone(),
        source,
    };
    let (listener, connect_to) = match role {
        Role::Server => (
            Some(LinkListener::bind(transport.listen_addr()).map_err(link_err)?),
            None,
        ),
        Role::Client => (None, Some(transport.connect_addr())),
        Role::All => {
            let addr = transport.listen.as_deref().unwrap_or("127.0.0.1:0");
            let listener = LinkListener::bind(addr).map_err(link_err)?;
            let dial = loopback_for(listener.local_addr().map_err(link_err)?);
            (Some(listener), Some(dial.to_string()))
        }
    };
    let mut link = LinkConfig::new(LinkRole::Listen, "", e.codec);
    link.accept_timeout = opts.accept_timeout;
    link.handshake_timeout = opts.handshake_timeout;
    Ok(PendingLink {
        edge,
        link,
        listener,
        connect_to,
        outbound,
        inbound,
    })
}

/// Accepted and dialed ends of one remote edge.
type LinkEnds = (Option<RemoteLink>, Option<RemoteLink>);

impl PreparedPipeline {
    pub fn role(&self) -> Role {
        self.role
    }

    /// Bound listen addresses, one per remote edge this side accepts.
    pub fn listen_addrs(&self) -> Vec<(String, SocketAddr)> {
        self.links
            .iter()
            .filter_map(|l| {
                let addr = l.listener.as_ref()?.local_addr().ok()?;
                Some((l.edge.clone(), addr))
            })
            .collect()
    }

    /// Establishes every remote link concurrently.
    pub fn connect(self) -> Result<RunningPipeline, PipelineError> {
        let mut links = self.links;
        let results: Vec<Result<LinkEnds, PipelineError>> = thread::scope(|s| {
            let handles: Vec<_> = links
                .iter_mut()
                .map(|l| {
                    let accept = l.listener.take().map(|listener| {
                        let cfg = l.link.clone();
                        s.spawn(move || listener.accept(&cfg))
                    });
                    let dial = l.connect_to.as_ref().map(|addr| {
                        let mut cfg = l.link.clone();
                        cfg.role = LinkRole::Connect;
                        cfg.address = addr.clone();
                        s.spawn(move || crate::remote::link_establish(&cfg))
                    });
                    (l.edge.clone(), accept, dial)
                })
                .collect();
            handles
                .into_iter()
                .map(|(edge, accept, dial)| {
                    let join =
                        |h: Option<thread::ScopedJoinHandle<'_, Result<RemoteLink, LinkError>>>| {
                            h.map(|h| h.join().expect("link thread panicked"))
                                .transpose()
                        };
                    let accepted = join(accept);
                    let dialed = join(dial);
                    match (accepted, dialed) {
                        (Ok(a), Ok(d)) => Ok((a, d)),
                        (Err(source), _) | (_, Err(source)) => {
                            Err(PipelineError::Link { edge, source })
                        }
                    }
                })
                .collect()
        });

        let mut pumps = Vec::new();
        let mut shutdowns = Vec::new();
        for (l, res) in links.into_iter().zip(results) {
            let (accepted, dialed) = res?;
            info!("edge {}: link up", l.edge);
            // Data flows from the dialing end to the accepting end when both
            // live here; otherwise this side's single link carries it.
            let (send_link, recv_link) = match (accepted, dialed) {
                (Some(a), Some(d)) => (Some(d), Some(a)),
                (Some(a), None) => (None, Some(a)),
                (None, Some(d)) => (Some(d), None),
                (None, None) => unreachable!("every pending link has an end"),
            };
            let (send_link, recv_link) = match (l.outbound.is_some(), l.inbound.is_some()) {
                (true, true) => (send_link, recv_link),
                (true, false) => (send_link.or(recv_link), None),
                (false, true) => (None, recv_link.or(send_link)),
                (false, false) => (None, None),
            };
            if let (Some(rx), Some(link)) = (l.outbound, send_link) {
                let (tx_half, _unused) = link.split();
                if let Ok(h) = tx_half.shutdown_handle() {
                    shutdowns.push(h);
                }
                pumps.push(Pump::Out {
                    edge: l.edge.clone(),
                    rx,
                    link: tx_half,
                });
            }
            if let (Some(tx), Some(link)) = (l.inbound, recv_link) {
                let (_unused, rx_half) = link.split();
                if let Ok(h) = rx_half.shutdown_handle() {
                    shutdowns.push(h);
                }
                pumps.push(Pump::In {
                    edge: l.edge,
                    link: rx_half,
                    tx,
                });
            }
        }

        Ok(RunningPipeline {
            role: self.role,
            opts: self.opts,
            kernels: self.kernels,
            pumps,
            controls: self.controls,
            shutdowns,
        })
    }
}

enum Task {
    Kernel(JoinHandle<(KernelInstance, RunEnd)>, Placement),
    Pump(JoinHandle<LinkReport>),
}

impl Task {
    fn is_finished(&self) -> bool {
        match self {
            Task::Kernel(h, _) => h.is_finished(),
            Task::Pump(h) => h.is_finished(),
        }
    }
}

impl RunningPipeline {
    pub fn role(&self) -> Role {
        self.role
    }

    pub fn kernel_names(&self) -> Vec<&str> {
        self.kernels.iter().map(|k| k.instance.name()).collect()
    }

    /// Runs every hosted kernel and link pump on its own thread until they
    /// all finish, or until `limit.duration` elapses plus the drain window,
    /// after which remaining work is aborted.
    pub fn run_for(self, limit: RunLimit) -> RunReport {
        let ctl = RunControl {
            frame_limit: limit.frames,
            ..RunControl::default()
        };
        if limit.duration == Some(Duration::ZERO) {
            ctl.stop.store(true, Ordering::SeqCst);
        }
        let started = Instant::now();

        let mut tasks = Vec::new();
        for Hosted {
            mut instance,
            placement,
        } in self.kernels
        {
            let ctl = ctl.clone();
            let name = instance.name().to_string();
            let h = thread::Builder::new()
                .name(format!("k:{name}"))
                .spawn(move || {
                    let end = instance.run(&ctl);
                    debug!("kernel {} ended: {:?}", instance.name(), end);
                    (instance, end)
                })
                .expect("spawn kernel thread");
            tasks.push(Task::Kernel(h, placement));
        }
        for pump in self.pumps {
            let h = thread::Builder::new()
                .name("link".into())
                .spawn(move || run_pump(pump))
                .expect("spawn link thread");
            tasks.push(Task::Pump(h));
        }

        let all_done = |tasks: &[Task]| tasks.iter().all(Task::is_finished);
        let deadline = limit.duration.map(|d| started + d);
        while !all_done(&tasks) && deadline.is_none_or(|d| Instant::now() < d) {
            thread::sleep(Duration::from_millis(2));
        }
        ctl.stop.store(true, Ordering::SeqCst);
        let drain_end = Instant::now() + self.opts.drain;
        while !all_done(&tasks) && Instant::now() < drain_end {
            thread::sleep(Duration::from_millis(2));
        }
        let aborted = !all_done(&tasks);
        if aborted {
            warn!("drain window elapsed; aborting remaining kernels and links");
            ctl.abort.store(true, Ordering::SeqCst);
            for c in &self.controls {
                c.abort();
            }
            for s in &self.shutdowns {
                s.shutdown();
            }
        }

        let mut report = RunReport {
            role: self.role,
            elapsed_s: 0.0,
            aborted,
            kernels: Vec::new(),
            sinks: Vec::new(),
            links: Vec::new(),
        };
        for t in tasks {
            match t {
                Task::Kernel(h, placement) => {
                    let (instance, end) = h.join().expect("kernel thread panicked");
                    if let Some(log) = instance.kernel().latency_log() {
                        report
                            .sinks
                            .push(SinkReport::from_log(instance.name(), log));
                    }
                    report.kernels.push(KernelReport {
                        name: instance.name().to_string(),
                        kernel_type: instance.type_name().to_string(),
                        placement,
                        counters: instance.counters(),
                        failure: instance.failure().map(ToString::to_string),
                        end,
                    });
                }
                Task::Pump(h) => report.links.push(h.join().expect("link thread panicked")),
            }
        }
        report.elapsed_s = started.elapsed().as_secs_f64();
        report
    }
}

fn run_pump(pump: Pump) -> LinkReport {
    match pump {
        Pump::Out { edge, rx, mut link } => {
            let mut messages = 0;
            let mut error = None;
            while let Ok(m) = rx.recv() {
                match link.send(&m) {
                    Ok(_) => messages += 1,
                    Err(e) => {
                        error = Some(e.to_string());
                        break;
                    }
                }
            }
            drop(rx);
            link.close();
            LinkReport {
                edge,
                direction: LinkDirection::Send,
                messages,
                bytes: Some(link.bytes_sent()),
                error,
            }
        }
        Pump::In {
            edge,
            mut link,
            mut tx,
        } => {
            let mut messages = 0;
            let mut error = None;
            loop {
                match link.recv() {
                    Ok(m) => {
                        if tx.send(m).is_err() {
                            break;
                        }
                        messages += 1;
                    }
                    Err(LinkError::LinkClosed) => break,
                    Err(e) => {
                        error = Some(e.to_string());
                        break;
                    }
                }
            }
            LinkReport {
                edge,
                direction: LinkDirection::Recv,
                messages,
                bytes: None,
                error,
            }
        }
    }
}
