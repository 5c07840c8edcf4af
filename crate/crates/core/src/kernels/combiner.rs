use crate::channel::SyncMode;
use crate::kernel::{Flow, Kernel, KernelFailure, PortSpec, StepIo};
use crate::message::CombineTag;

/// Two-input kernel: `a` gates firing, `b` is sampled if present.
///
/// The output carries `a`'s payload and records which `b` (if any) was
/// seen at firing time.
#[derive(Debug, Default)]
pub struct Combiner;

impl Combiner {
    pub const TYPE: &'static str = "Combiner";

    pub fn ports() -> Vec<PortSpec> {
        vec![
            PortSpec::input("a"),
            PortSpec::input("b").with_sync(SyncMode::NonBlocking),
            PortSpec::output("out"),
        ]
    }
}

impl Kernel for Combiner {
    fn type_name(&self) -> &'static str {
        Self::TYPE
    }

    fn ports(&self) -> Vec<PortSpec> {
        Self::ports()
    }

    fn step(&mut self, io: &mut StepIo) -> Result<Flow, KernelFailure> {
        let partner_seq = io.take("b").map(|b| b.seq);
        if let Some(mut a) = io.take("a") {
            a.combine = Some(CombineTag { partner_seq });
            io.emit("out", a)?;
        }
        Ok(Flow::Continue)
    }
}
