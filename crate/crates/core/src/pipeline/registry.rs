//! Kernel type names to port layouts and factories.

use std::collections::BTreeMap;
use std::fmt;

use crate::kernel::{Kernel, PortSpec};
use crate::kernels::{
    Combiner, Grayscale, LatencySink, Passthrough, SourceParams, SyntheticFrameSource,
};
use crate::params::{ParamError, Params};

pub type KernelFactory = Box<dyn Fn(&Params) -> Result<Box<dyn Kernel>, ParamError> + Send + Sync>;

struct Entry {
    ports: Vec<PortSpec>,
    factory: KernelFactory,
}

#[derive(Default)]
pub struct KernelRegistry {
    types: BTreeMap<String, Entry>,
}

impl KernelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The five built-in kernel types.
    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        r.register(
            SyntheticFrameSource::TYPE,
            SyntheticFrameSource::ports(),
            |p| {
                Ok(Box::new(SyntheticFrameSource::new(
                    SourceParams::from_params(p)?,
                )))
            },
        );
        r.register(Passthrough::TYPE, Passthrough::ports(), |p| {
            p.expect_only(&[])?;
            Ok(Box::new(Passthrough))
        });
        r.register(Grayscale::TYPE, Grayscale::ports(), |p| {
            p.expect_only(&[])?;
            Ok(Box::new(Grayscale))
        });
        r.register(Combiner::TYPE, Combiner::ports(), |p| {
            p.expect_only(&[])?;
            Ok(Box::new(Combiner))
        });
        r.register(LatencySink::TYPE, LatencySink::ports(), |p| {
            Ok(Box::new(LatencySink::from_params(p)?))
        });
        r
    }

    /// Adds or replaces a type. `ports` must match what the factory's
    /// kernels report.
    pub fn register<F>(&mut self, type_name: &str, ports: Vec<PortSpec>, factory: F)
    where
        F: Fn(&Params) -> Result<Box<dyn Kernel>, ParamError> + Send + Sync + 'static,
    {
        self.types.insert(
            type_name.to_string(),
            Entry {
                ports,
                factory: Box::new(factory),
            },
        );
    }

    pub fn contains(&self, type_name: &str) -> bool {
        self.types.contains_key(type_name)
    }

    pub fn ports(&self, type_name: &str) -> Option<&[PortSpec]> {
        self.types.get(type_name).map(|e| e.ports.as_slice())
    }

    /// `None` for an unknown type.
    pub fn build(
        &self,
        type_name: &str,
        params: &Params,
    ) -> Option<Result<Box<dyn Kernel>, ParamError>> {
        self.types.get(type_name).map(|e| (e.factory)(params))
    }

    pub fn type_names(&self) -> impl Iterator<Item = &str> {
        self.types.keys().map(String::as_str)
    }
}

impl fmt::Debug for KernelRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.types.keys()).finish()
    }
}
