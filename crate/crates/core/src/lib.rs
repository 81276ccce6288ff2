//! Rehosting toolkit core: the firmware IR, MMIO analysis, instrumentation
//! passes, link planning, a deterministic VM and a greybox fuzzer.

pub mod fir;
pub mod fuzz;
pub mod linkplan;
pub mod mmio;
pub mod transforms;
pub mod vm;
