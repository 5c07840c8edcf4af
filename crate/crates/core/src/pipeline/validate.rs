//! Static checks on a deployment config.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use super::config::{EdgeKind, PipelineConfig, Placement};
use super::registry::KernelRegistry;
use crate::kernel::{Direction, PortSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    PlacementViolation,
    EdgeKindMismatch,
    NotADag,
    UnknownKernelType,
    DanglingPort,
    PortMultiplyDriven,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 6] = [
        ErrorCode::PlacementViolation,
        ErrorCode::EdgeKindMismatch,
        ErrorCode::NotADag,
        ErrorCode::UnknownKernelType,
        ErrorCode::DanglingPort,
        ErrorCode::PortMultiplyDriven,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::PlacementViolation => "PLACEMENT_VIOLATION",
            ErrorCode::EdgeKindMismatch => "EDGE_KIND_MISMATCH",
            ErrorCode::NotADag => "NOT_A_DAG",
            ErrorCode::UnknownKernelType => "UNKNOWN_KERNEL_TYPE",
            ErrorCode::DanglingPort => "DANGLING_PORT",
            ErrorCode::PortMultiplyDriven => "PORT_MULTIPLY_DRIVEN",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationError {
    pub code: ErrorCode,
    pub message: String,
}

impl ValidationError {
    fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ValidationError {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ValidationError {}

fn has_port(ports: &[PortSpec], name: &str, dir: Direction) -> bool {
    ports.iter().any(|p| p.name == name && p.direction == dir)
}

/// Returns every violation found, in a stable order.
pub fn validate_config(
    cfg: &PipelineConfig,
    registry: &KernelRegistry,
) -> Result<(), Vec<ValidationError>> {
    use ErrorCode::*;
    let mut errs = Vec::new();

    // name -> (placement, ports if the type is known)
    let mut kernels: HashMap<&str, (Placement, Option<&[PortSpec]>)> = HashMap::new();
    for k in &cfg.kernels {
        let ports = registry.ports(&k.kernel_type);
        match ports {
            None => errs.push(ValidationError::new(
                UnknownKernelType,
                format!("kernel `{}` has unknown type `{}`", k.name, k.kernel_type),
            )),
            Some(ports) => {
                let has_in = ports.iter().any(|p| p.direction == Direction::In);
                let has_out = ports.iter().any(|p| p.direction == Direction::Out);
                if k.placement != Placement::Client && (!has_in || !has_out) {
                    let role = if has_in { "sink" } else { "source" };
                    errs.push(ValidationError::new(
                        PlacementViolation,
                        format!("{role} kernel `{}` must be placed on the client", k.name),
                    ));
                }
            }
        }
        kernels.insert(&k.name, (k.placement, ports));
    }

    let mut in_degree: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    let mut out_used: BTreeSet<(&str, &str)> = BTreeSet::new();
    let mut graph: BTreeMap<&str, Vec<&str>> = BTreeMap::new();

    for e in &cfg.edges {
        let label = e.label();
        let mut ends_ok = true;
        for (ep, dir) in [(&e.from, Direction::Out), (&e.to, Direction::In)] {
            let side = if dir == Direction::Out {
                "output"
            } else {
                "input"
            };
            match kernels.get(ep.kernel.as_str()) {
                None => {
                    ends_ok = false;
                    errs.push(ValidationError::new(
                        DanglingPort,
                        format!("edge {label} references unknown kernel `{}`", ep.kernel),
                    ));
                }
                Some((_, Some(ports))) if !has_port(ports, &ep.port, dir) => {
                    ends_ok = false;
                    errs.push(ValidationError::new(
                        DanglingPort,
                        format!("edge {label}: `{ep}` is not an {side} port"),
                    ));
                }
                Some(_) => {}
            }
        }
        if !ends_ok {
            continue;
        }
        *in_degree.entry((&e.to.kernel, &e.to.port)).or_default() += 1;
        out_used.insert((&e.from.kernel, &e.from.port));
        graph.entry(&e.from.kernel).or_default().push(&e.to.kernel);

        let (pf, _) = kernels[e.from.kernel.as_str()];
        let (pt, _) = kernels[e.to.kernel.as_str()];
        let want = if pf == pt {
            EdgeKind::Local
        } else {
            EdgeKind::Remote
        };
        if e.kind != want {
            let kind = |k: EdgeKind| {
                if k == EdgeKind::Local {
                    "local"
                } else {
                    "remote"
                }
            };
            errs.push(ValidationError::new(
                EdgeKindMismatch,
                format!(
                    "edge {label} joins {pf} and {pt} kernels and must be {}, not {}",
                    kind(want),
                    kind(e.kind)
                ),
            ));
        }
    }

    for k in &cfg.kernels {
        let Some((_, Some(ports))) = kernels.get(k.name.as_str()) else {
            continue;
        };
        for p in ports.iter() {
            let key = (k.name.as_str(), p.name.as_str());
            match p.direction {
                Direction::In => match in_degree.get(&key).copied().unwrap_or(0) {
                    0 => errs.push(ValidationError::new(
                        DanglingPort,
                        format!("input port `{}.{}` is not connected", k.name, p.name),
                    )),
                    1 => {}
                    n => errs.push(ValidationError::new(
                        PortMultiplyDriven,
                        format!("input port `{}.{}` is driven by {n} edges", k.name, p.name),
                    )),
                },
                Direction::Out => {
                    if !out_used.contains(&key) {
                        errs.push(ValidationError::new(
                            DanglingPort,
                            format!("output port `{}.{}` is not connected", k.name, p.name),
                        ));
                    }
                }
            }
        }
    }

    let cyclic = cycle_members(
        &cfg.kernels
            .iter()
            .map(|k| k.name.as_str())
            .collect::<Vec<_>>(),
        &graph,
    );
    if !cyclic.is_empty() {
        errs.push(ValidationError::new(
            NotADag,
            format!("kernels {} form a cycle", cyclic.join(", ")),
        ));
    }

    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

/// Kernels left over after Kahn's algorithm: members of, or downstream of,
/// a cycle.
fn cycle_members<'a>(nodes: &[&'a str], graph: &BTreeMap<&'a str, Vec<&'a str>>) -> Vec<&'a str> {
    let mut indeg: BTreeMap<&str, usize> = nodes.iter().map(|n| (*n, 0)).collect();
    for targets in graph.values() {
        for t in targets {
            *indeg.entry(t).or_default() += 1;
        }
    }
    let mut ready: Vec<&str> = indeg
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(n, _)| *n)
        .collect();
    while let Some(n) = ready.pop() {
        for t in graph.get(n).into_iter().flatten() {
            let d = indeg.get_mut(t).expect("every target counted");
            *d -= 1;
            if *d == 0 {
                ready.push(t);
            }
        }
        indeg.remove(n);
    }
    indeg.into_keys().collect()
}
