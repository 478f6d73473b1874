//! Image transfer bound and frame-level throughput/energy accounting.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::HostError;
use crate::ir::TensorShape;
use crate::sim::Summary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Sdio,
    Spi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusSpec {
    pub kind: BusKind,
    /// bits per second
    pub bandwidth: f64,
}

impl BusSpec {
    pub const SDIO: BusSpec = BusSpec { kind: BusKind::Sdio, bandwidth: 500e6 };
    pub const SPI: BusSpec = BusSpec { kind: BusKind::Spi, bandwidth: 100e6 };

    pub fn new(kind: BusKind, bandwidth: f64) -> Result<Self, HostError> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(HostError::Config(format!("bus bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Self { kind, bandwidth })
    }

    pub fn from_name(name: &str) -> Result<Self, HostError> {
        match name.to_ascii_lowercase().as_str() {
            "sdio" => Ok(Self::SDIO),
            "spi" => Ok(Self::SPI),
            _ => Err(HostError::Config(format!("unknown bus {name:?}, expected sdio or spi"))),
        }
    }
}

/// Frames per second the bus can deliver for 8-bit images of `image`.
pub fn fps_bound(image: TensorShape, bus: &BusSpec) -> f64 {
    bus.bandwidth / (image.h * image.w * image.c * 8) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemProfile {
    pub ncp: Summary,
    pub image: TensorShape,
    pub bus: BusSpec,
    /// MCU pre/post-processing time per frame, seconds.
    pub mcu_overhead: f64,
    /// MCU power, watts.
    pub mcu_power: f64,
}

impl SystemProfile {
    pub fn new(ncp: Summary, image: TensorShape, bus: BusSpec) -> Self {
        Self { ncp, image, bus, mcu_overhead: 0.0, mcu_power: 0.0 }
    }

    /// NCP average power in watts, from the energy model.
    pub fn ncp_power(&self) -> f64 {
        self.ncp.avg_power_mw * 1e-3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub compute_latency_s: f64,
    pub transfer_s: f64,
    pub frame_time_s: f64,
    pub bus_fps: f64,
    pub fps: f64,
    pub ncp_power_mw: f64,
    pub energy_per_frame_mj: f64,
    /// Frames/s/mJ
    pub processing_efficiency: f64,
    pub mcu_power_mw: f64,
    pub mcu_energy_per_frame_mj: f64,
}

/// Transfer and compute overlap (double-buffered), MCU time adds on top.
pub fn system_report(p: &SystemProfile) -> SystemReport {
    let bus_fps = fps_bound(p.image, &p.bus);
    let compute = p.ncp.latency_s;
    let transfer = 1.0 / bus_fps;
    let frame_time = compute.max(transfer) + p.mcu_overhead;
    let fps = 1.0 / frame_time;
    let energy_mj = p.ncp_power() * compute * 1e3;
    SystemReport {
        compute_latency_s: compute,
        transfer_s: transfer,
        frame_time_s: frame_time,
        bus_fps,
        fps,
        ncp_power_mw: p.ncp.avg_power_mw,
        energy_per_frame_mj: energy_mj,
        processing_efficiency: if energy_mj > 0.0 { fps / energy_mj } else { f64::INFINITY },
        mcu_power_mw: p.mcu_power * 1e3,
        mcu_energy_per_frame_mj: p.mcu_power * frame_time * 1e3,
    }
}

impl fmt::Display for SystemReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "compute latency   {:.4} ms", self.compute_latency_s * 1e3)?;
        writeln!(f, "image transfer    {:.4} ms ({:.1} FPS bus bound)", self.transfer_s * 1e3, self.bus_fps)?;
        writeln!(f, "frame time        {:.4} ms", self.frame_time_s * 1e3)?;
        writeln!(f, "sustained         {:.1} FPS", self.fps)?;
        writeln!(f, "NCP power         {:.2} mW", self.ncp_power_mw)?;
        writeln!(f, "NCP energy/frame  {:.4} mJ", self.energy_per_frame_mj)?;
        writeln!(f, "efficiency        {:.1} Frames/s/mJ", self.processing_efficiency)?;
        write!(f, "MCU               {:.2} mW, {:.4} mJ/frame", self.mcu_power_mw, self.mcu_energy_per_frame_mj)
    }
}
