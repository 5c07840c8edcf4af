use crate::kernel::{Flow, Kernel, KernelFailure, PortSpec, StepIo};

/// Forwards `in` to `out` untouched; on local bindings the payload handle moves through.
#[derive(Debug, Default)]
pub struct Passthrough;

impl Passthrough {
    pub const TYPE: &'static str = "Passthrough";

    pub fn ports() -> Vec<PortSpec> {
        vec![PortSpec::input("in"), PortSpec::output("out")]
    }
}

impl Kernel for Passthrough {
    fn type_name(&self) -> &'static str {
        Self::TYPE
    }

    fn ports(&self) -> Vec<PortSpec> {
        Self::ports()
    }

    fn step(&mut self, io: &mut StepIo) -> Result<Flow, KernelFailure> {
        if let Some(m) = io.take("in") {
            io.emit("out", m)?;
        }
        Ok(Flow::Continue)
    }
}
