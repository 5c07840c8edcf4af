//! Deployment configuration documents (TOML).
//!
//! ```toml
//! [[kernels]]
//! name = "cam"
//! type = "SyntheticFrameSource"
//! placement = "client"
//! params = { resolution = "720p", frames = 1000 }
//!
//! [[edges]]
//! from = "cam.out"
//! to = "gray.in"
//! kind = "remote"
//! codec = "rle"
//! transport = { listen = "0.0.0.0:7001", connect = "10.0.0.2:7001" }
//! ```
//!
//! See `docs/config.md` for the full schema.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

use crate::channel::{OverflowPolicy, SyncMode, DEFAULT_CAPACITY};
use crate::params::Params;
use crate::remote::CodecId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Client,
    Server,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Placement::Client => "client",
            Placement::Server => "server",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Local,
    Remote,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelDecl {
    pub name: String,
    pub kernel_type: String,
    pub placement: Placement,
    pub params: Params,
}

/// `kernel.port`
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Endpoint {
    pub kernel: String,
    pub port: String,
}

impl Endpoint {
    pub fn parse(s: &str) -> Option<Self> {
        let (kernel, port) = s.rsplit_once('.')?;
        if kernel.is_empty() || port.is_empty() {
            return None;
        }
        Some(Endpoint {
            kernel: kernel.to_string(),
            port: port.to_string(),
        })
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.kernel, self.port)
    }
}

/// Addresses for a remote edge. The server side listens, the client side
/// connects; either address stands in for the other when only one is given.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transport {
    pub listen: Option<String>,
    pub connect: Option<String>,
}

impl Transport {
    pub fn listen_addr(&self) -> &str {
        self.listen
            .as_deref()
            .or(self.connect.as_deref())
            .expect("parser guarantees one address")
    }

    /// Address to dial; an unspecified listen host becomes loopback.
    pub fn connect_addr(&self) -> String {
        match (&self.connect, &self.listen) {
            (Some(c), _) => c.clone(),
            (None, Some(l)) => match l.rsplit_once(':') {
                Some(("0.0.0.0", port)) => format!("127.0.0.1:{port}"),
                Some(("[::]", port)) => format!("[::1]:{port}"),
                _ => l.clone(),
            },
            (None, None) => unreachable!("parser guarantees one address"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDecl {
    pub from: Endpoint,
    pub to: Endpoint,
    pub kind: EdgeKind,
    pub sync_mode: SyncMode,
    /// Remote edges only.
    pub codec: CodecId,
    /// Remote edges only.
    pub transport: Option<Transport>,
    /// Local edges only.
    pub capacity: usize,
    /// Local edges only.
    pub overflow_policy: OverflowPolicy,
}

impl EdgeDecl {
    pub fn local(from: &str, to: &str) -> Self {
        EdgeDecl {
            from: Endpoint::parse(from).expect("kernel.port"),
            to: Endpoint::parse(to).expect("kernel.port"),
            kind: EdgeKind::Local,
            sync_mode: SyncMode::Blocking,
            codec: CodecId::Raw,
            transport: None,
            capacity: DEFAULT_CAPACITY,
            overflow_policy: OverflowPolicy::Block,
        }
    }

    pub fn label(&self) -> String {
        format!("{} -> {}", self.from, self.to)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineConfig {
    pub kernels: Vec<KernelDecl>,
    pub edges: Vec<EdgeDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        message: String,
    },
    #[error("duplicate kernel name `{0}`")]
    DuplicateName(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    kernels: Vec<Spanned<RawKernel>>,
    #[serde(default)]
    edges: Vec<Spanned<RawEdge>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    name: String,
    #[serde(rename = "type")]
    kernel_type: String,
    placement: Placement,
    #[serde(default)]
    params: Params,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    from: String,
    to: String,
    kind: EdgeKind,
    sync_mode: Option<SyncMode>,
    codec: Option<CodecId>,
    transport: Option<Transport>,
    capacity: Option<usize>,
    overflow_policy: Option<OverflowPolicy>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl PipelineConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        parse_config(&text)
    }

    pub fn kernel(&self, name: &str) -> Option<&KernelDecl> {
        self.kernels.iter().find(|k| k.name == name)
    }
}

impl std::str::FromStr for PipelineConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_config(s)
    }
}

/// Parses a config and applies defaults: capacity 8, `block`, `blocking`, `raw`.
pub fn parse_config(text: &str) -> Result<PipelineConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;

    let mut seen = HashSet::new();
    let mut kernels = Vec::with_capacity(raw.kernels.len());
    for k in raw.kernels {
        let k = k.into_inner();
        if !seen.insert(k.name.clone()) {
            return Err(ConfigError::DuplicateName(k.name));
        }
        kernels.push(KernelDecl {
            name: k.name,
            kernel_type: k.kernel_type,
            placement: k.placement,
            params: k.params,
        });
    }

    let mut edges = Vec::with_capacity(raw.edges.len());
    for spanned in raw.edges {
        let line = Some(line_of(text, spanned.span().start));
        let e = spanned.into_inner();
        let fail = |message: String| ConfigError::Parse { line, message };
        let endpoint = |s: &str| {
            Endpoint::parse(s)
                .ok_or_else(|| fail(format!("endpoint `{s}` is not of the form kernel.port")))
        };
        let (from, to) = (endpoint(&e.from)?, endpoint(&e.to)?);
        match e.kind {
            EdgeKind::Local => {
                if e.codec.is_some() || e.transport.is_some() {
                    return Err(fail(format!(
                        "edge {from} -> {to}: `codec` and `transport` apply to remote edges only"
                    )));
                }
            }
            EdgeKind::Remote => {
                if e.capacity.is_some() || e.overflow_policy.is_some() {
                    return Err(fail(format!(
                        "edge {from} -> {to}: `capacity` and `overflow_policy` apply to local edges only"
                    )));
                }
                match &e.transport {
                    Some(Transport {
                        listen: None,
                        connect: None,
                    })
                    | None => {
                        return Err(fail(format!(
                            "remote edge {from} -> {to} needs `transport` with `listen` and/or `connect`"
                        )))
                    }
                    Some(_) => {}
                }
            }
        }
        let capacity = e.capacity.unwrap_or(DEFAULT_CAPACITY);
        if capacity == 0 {
            return Err(fail(format!(
                "edge {from} -> {to}: capacity must be at least 1"
            )));
        }
        edges.push(EdgeDecl {
            from,
            to,
            kind: e.kind,
            sync_mode: e.sync_mode.unwrap_or_default(),
            codec: e.codec.unwrap_or_default(),
            transport: e.transport,
            capacity,
            overflow_policy: e.overflow_policy.unwrap_or_default(),
        });
    }

    Ok(PipelineConfig { kernels, edges })
}
