//! Reliable, ordered remote links over TCP.
//!
//! Both ends send a HELLO header immediately after the TCP connection is up
//! and read the peer's HELLO before any DATA. A peer that sends anything
//! else first, or speaks another protocol version, gets disconnected.
//! Closing a link sends BYE; the receiving side reports [`LinkError::LinkClosed`]
//! after the last DATA frame.

use std::io::{self, BufReader, BufWriter, ErrorKind, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::codec::CodecId;
use super::serialize::{data_header, decode_data};
use super::wire::{MsgType, WireError, WireHeader, HEADER_LEN};
use crate::clock::now_ns;
use crate::message::Message;

/// Upper bound on a single encoded payload accepted from a peer.
pub const MAX_PAYLOAD_LEN: usize = 1 << 28;

pub const CONNECT_ATTEMPTS: u32 = 10;
pub const CONNECT_RETRY_INTERVAL: Duration = Duration::from_millis(100);

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("invalid address `{0}` (expected host:port)")]
    InvalidAddress(String),
    #[error("timed out connecting to {0}")]
    ConnectTimeout(String),
    #[error("connection refused by {0}")]
    ConnectRefused(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("link closed")]
    LinkClosed,
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkRole {
    Listen,
    Connect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkState {
    Connected,
    Closed,
}

#[derive(Debug, Clone)]
pub struct LinkConfig {
    pub role: LinkRole,
    pub address: String,
    pub codec: CodecId,
    pub connect_attempts: u32,
    pub retry_interval: Duration,
    pub accept_timeout: Duration,
    pub handshake_timeout: Duration,
}

impl LinkConfig {
    pub fn new(role: LinkRole, address: impl Into<String>, codec: CodecId) -> Self {
        LinkConfig {
            role,
            address: address.into(),
            codec,
            connect_attempts: CONNECT_ATTEMPTS,
            retry_interval: CONNECT_RETRY_INTERVAL,
            accept_timeout: Duration::from_secs(60),
            handshake_timeout: Duration::from_secs(10),
        }
    }
}

/// Resolves `host:port` with a decimal port.
pub fn parse_address(addr: &str) -> Result<SocketAddr, LinkError> {
    let invalid = || LinkError::InvalidAddress(addr.to_string());
    let (host, port) = addr.rsplit_once(':').ok_or_else(invalid)?;
    if host.is_empty() || port.is_empty() || !port.bytes().all(|b| b.is_ascii_digit()) {
        return Err(invalid());
    }
    port.parse::<u16>().map_err(|_| invalid())?;
    addr.to_socket_addrs()
        .map_err(|_| invalid())?
        .next()
        .ok_or_else(invalid)
}

/// Dialable form of a bound address: an unspecified host becomes loopback.
pub fn loopback_for(mut addr: SocketAddr) -> SocketAddr {
    if addr.ip().is_unspecified() {
        addr.set_ip(match addr {
            SocketAddr::V4(_) => std::net::Ipv4Addr::LOCALHOST.into(),
            SocketAddr::V6(_) => std::net::Ipv6Addr::LOCALHOST.into(),
        });
    }
    addr
}

pub fn link_establish(cfg: &LinkConfig) -> Result<RemoteLink, LinkError> {
    match cfg.role {
        LinkRole::Listen => LinkListener::bind(&cfg.address)?.accept(cfg),
        LinkRole::Connect => connect(cfg),
    }
}

/// A bound listening socket awaiting its single peer.
#[derive(Debug)]
pub struct LinkListener {
    listener: TcpListener,
}

impl LinkListener {
    pub fn bind(address: &str) -> Result<Self, LinkError> {
        let addr = parse_address(address)?;
        let listener = TcpListener::bind(addr)?;
        debug!("listening on {}", listener.local_addr()?);
        Ok(LinkListener { listener })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, LinkError> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts one peer within `cfg.accept_timeout` and performs the handshake.
    pub fn accept(self, cfg: &LinkConfig) -> Result<RemoteLink, LinkError> {
        let deadline = Instant::now() + cfg.accept_timeout;
        self.listener.set_nonblocking(true)?;
        let stream = loop {
            match self.listener.accept() {
                Ok((stream, _)) => break stream,
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Err(LinkError::ConnectTimeout(self.local_addr()?.to_string()));
                    }
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(e.into()),
            }
        };
        stream.set_nonblocking(false)?;
        RemoteLink::handshake(stream, cfg)
    }
}

fn connect(cfg: &LinkConfig) -> Result<RemoteLink, LinkError> {
    let addr = parse_address(&cfg.address)?;
    let mut refused = true;
    for attempt in 0..cfg.connect_attempts.max(1) {
        if attempt > 0 {
            thread::sleep(cfg.retry_interval);
        }
        match TcpStream::connect_timeout(&addr, cfg.retry_interval.max(Duration::from_millis(500)))
        {
            Ok(stream) => return RemoteLink::handshake(stream, cfg),
            Err(e) => {
                debug!("connect {addr} attempt {attempt}: {e}");
                refused &= e.kind() == ErrorKind::ConnectionRefused;
            }
        }
    }
    if refused {
        Err(LinkError::ConnectRefused(cfg.address.clone()))
    } else {
        Err(LinkError::ConnectTimeout(cfg.address.clone()))
    }
}

/// One established, handshaken connection.
#[derive(Debug)]
pub struct RemoteLink {
    tx: LinkSender,
    rx: LinkReceiver,
    peer: SocketAddr,
}

impl RemoteLink {
    fn handshake(stream: TcpStream, cfg: &LinkConfig) -> Result<Self, LinkError> {
        stream.set_nodelay(true)?;
        let peer = stream.peer_addr()?;
        let mut writer = stream.try_clone()?;
        writer.write_all(&WireHeader::control(MsgType::Hello, cfg.codec).encode())?;

        stream.set_read_timeout(Some(cfg.handshake_timeout))?;
        let mut buf = [0u8; HEADER_LEN];
        let mut reader = &stream;
        let greeting = reader
            .read_exact(&mut buf)
            .map_err(|e| match e.kind() {
                ErrorKind::UnexpectedEof => LinkError::LinkClosed,
                _ => e.into(),
            })
            .and_then(|_| Ok(WireHeader::decode(&buf)?));
        let greeting = match greeting {
            Ok(h) if h.msg_type == MsgType::Hello => h,
            Ok(h) => {
                let _ = stream.shutdown(Shutdown::Both);
                return Err(LinkError::ProtocolViolation(format!(
                    "expected HELLO, got {:?}",
                    h.msg_type
                )));
            }
            Err(e) => {
                let _ = stream.shutdown(Shutdown::Both);
                return Err(e);
            }
        };
        stream.set_read_timeout(None)?;
        debug!("link up with {peer} (peer codec {})", greeting.codec);

        Ok(RemoteLink {
            tx: LinkSender {
                stream: BufWriter::with_capacity(1 << 16, writer),
                codec: cfg.codec,
                state: LinkState::Connected,
                bytes_sent: 0,
            },
            rx: LinkReceiver {
                stream: BufReader::with_capacity(1 << 16, stream),
                state: LinkState::Connected,
            },
            peer,
        })
    }

    pub fn peer_addr(&self) -> SocketAddr {
        self.peer
    }

    pub fn state(&self) -> LinkState {
        match (self.tx.state, self.rx.state) {
            (LinkState::Connected, LinkState::Connected) => LinkState::Connected,
            _ => LinkState::Closed,
        }
    }

    pub fn send(&mut self, m: &Message) -> Result<usize, LinkError> {
        self.tx.send(m)
    }

    pub fn recv(&mut self) -> Result<Message, LinkError> {
        self.rx.recv()
    }

    pub fn close(&mut self) {
        self.tx.close();
    }

    /// Splits into independently owned send and receive halves.
    pub fn split(self) -> (LinkSender, LinkReceiver) {
        (self.tx, self.rx)
    }
}

/// Sending half of a link.
#[derive(Debug)]
pub struct LinkSender {
    stream: BufWriter<TcpStream>,
    codec: CodecId,
    state: LinkState,
    bytes_sent: u64,
}

impl LinkSender {
    /// Writes one DATA frame. Returns the bytes put on the wire.
    pub fn send(&mut self, m: &Message) -> Result<usize, LinkError> {
        if self.state == LinkState::Closed {
            return Err(LinkError::LinkClosed);
        }
        let encoded;
        let body: &[u8] = match self.codec {
            CodecId::Raw => &m.payload,
            CodecId::Rle => {
                encoded = self.codec.encode(&m.payload);
                &encoded
            }
        };
        let header = data_header(m, self.codec, body.len())?;
        let res = self
            .stream
            .write_all(&header.encode())
            .and_then(|_| self.stream.write_all(body))
            .and_then(|_| self.stream.flush());
        if let Err(e) = res {
            self.state = LinkState::Closed;
            return Err(match e.kind() {
                ErrorKind::BrokenPipe | ErrorKind::ConnectionReset => LinkError::LinkClosed,
                _ => e.into(),
            });
        }
        let n = HEADER_LEN + body.len();
        self.bytes_sent += n as u64;
        Ok(n)
    }

    pub fn codec(&self) -> CodecId {
        self.codec
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    /// Sends BYE and half-closes the connection. Idempotent.
    pub fn close(&mut self) {
        if self.state == LinkState::Closed {
            return;
        }
        self.state = LinkState::Closed;
        let bye = WireHeader::control(MsgType::Bye, self.codec).encode();
        let _ = self
            .stream
            .write_all(&bye)
            .and_then(|_| self.stream.flush());
        let _ = self.stream.get_ref().shutdown(Shutdown::Write);
    }

    /// Handle that can tear the connection down from another context.
    pub fn shutdown_handle(&self) -> Result<LinkShutdown, LinkError> {
        Ok(LinkShutdown(self.stream.get_ref().try_clone()?))
    }
}

impl Drop for LinkSender {
    fn drop(&mut self) {
        self.close();
    }
}

/// Receiving half of a link.
#[derive(Debug)]
pub struct LinkReceiver {
    stream: BufReader<TcpStream>,
    state: LinkState,
}

impl LinkReceiver {
    /// Reads the next DATA frame. `sent_ns` on the returned message is the
    /// local arrival time.
    pub fn recv(&mut self) -> Result<Message, LinkError> {
        if self.state == LinkState::Closed {
            return Err(LinkError::LinkClosed);
        }
        let res = self.read_frame();
        if res.is_err() {
            self.state = LinkState::Closed;
        }
        res
    }

    fn read_frame(&mut self) -> Result<Message, LinkError> {
        let mut buf = [0u8; HEADER_LEN];
        self.stream.read_exact(&mut buf).map_err(eof_is_closed)?;
        let header = WireHeader::decode(&buf)?;
        match header.msg_type {
            MsgType::Data => {}
            MsgType::Bye => return Err(LinkError::LinkClosed),
            MsgType::Hello => {
                return Err(LinkError::ProtocolViolation("HELLO after handshake".into()))
            }
        }
        let len = header.payload_len as usize;
        if len > MAX_PAYLOAD_LEN {
            return Err(LinkError::ProtocolViolation(format!(
                "payload of {len} bytes exceeds limit"
            )));
        }
        let mut body = vec![0u8; len];
        self.stream.read_exact(&mut body).map_err(eof_is_closed)?;
        let mut m = decode_data(&header, body)?;
        m.sent_ns = now_ns();
        Ok(m)
    }

    pub fn shutdown_handle(&self) -> Result<LinkShutdown, LinkError> {
        Ok(LinkShutdown(self.stream.get_ref().try_clone()?))
    }
}

fn eof_is_closed(e: io::Error) -> LinkError {
    match e.kind() {
        ErrorKind::UnexpectedEof | ErrorKind::ConnectionReset => LinkError::LinkClosed,
        _ => e.into(),
    }
}

/// Forcefully closes a link from any context.
#[derive(Debug)]
pub struct LinkShutdown(TcpStream);

impl LinkShutdown {
    pub fn shutdown(&self) {
        let _ = self.0.shutdown(Shutdown::Both);
    }
}
