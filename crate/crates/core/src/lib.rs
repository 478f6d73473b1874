//! Toolchain for a tiny-CNN neural co-processor (NCP).
//!
//! - [`ir`] builds quantized EtinyNet-style graphs out of linear depthwise
//!   blocks and accounts for parameter and feature sizes.
//! - [`isa`] is the 13-instruction, 128-bit instruction set with its binary
//!   and text forms.
//! - [`compiler`] fuses, places and lowers a graph into a program plus a
//!   weight image.
//! - [`sim`] executes programs on a byte-accurate tensor memory with a
//!   cycle and energy model.
//! - [`oracle`] is a scalar reference interpreter used to check the
//!   compiler and simulator bit for bit.
//! - [`host`] covers the MCU side: pre/post-processing, the bus model and
//!   system-level accounting, plus the file-level pipeline used by the CLI.

pub mod compiler;
pub mod host;
pub mod ir;
pub mod isa;
pub mod layout;
pub mod oracle;
pub mod sim;
