//! End-to-end flows behind the `ncp` subcommands.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{system_report, BusSpec, HostError, SystemProfile, SystemReport};
use crate::compiler::{compile, BlobKind, TmSpec, WeightImage};
use crate::ir::{build_backbone, BackboneConfig, Blob, BnParams, GraphDocument, QuantizedGraph, WeightInit};
use crate::isa::{Bank, Program};
use crate::oracle::{compare, ref_run, Mismatch, RefTensor};
use crate::sim::{calibrate, run, ArchParams, EnergyCoeffs, Summary, TraceStats};

/// NCP average power the bundled energy coefficients are calibrated to, watts.
pub const CALIBRATION_POWER_W: f64 = 73.6e-3;

pub fn read_file(path: &Path) -> Result<Vec<u8>, HostError> {
    std::fs::read(path).map_err(|e| HostError::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HostError> {
    std::fs::write(path, bytes).map_err(|e| HostError::io(path, e))
}

pub fn load_document(path: &Path) -> Result<GraphDocument, HostError> {
    let text = String::from_utf8(read_file(path)?).map_err(|_| HostError::Config(format!("{} is not UTF-8", path.display())))?;
    Ok(GraphDocument::from_json(&text)?)
}

/// Builds the graph a document describes. Weights come from `seed` (or the
/// document's own seed, else 0); a `weights` path, resolved against
/// `base_dir`, then overrides them blob by blob.
pub fn document_graph(doc: &GraphDocument, base_dir: &Path, seed: Option<u64>) -> Result<QuantizedGraph, HostError> {
    let seed = seed.or(doc.seed).unwrap_or(0);
    let mut g = build_backbone(&doc.effective_config(), WeightInit::fan_in(seed))?;
    if let Some(w) = &doc.weights {
        let img = WeightImage::from_bytes(&read_file(&base_dir.join(w))?)?;
        apply_weight_image(&mut g, &img)?;
    }
    Ok(g)
}

/// Replaces the graph's parameter blobs with those stored in `img`.
pub fn apply_weight_image(g: &mut QuantizedGraph, img: &WeightImage) -> Result<(), HostError> {
    for b in &img.manifest.blobs {
        let bank = match b.bank {
            Bank::B2 => &img.bank2,
            Bank::B3 => &img.bank3,
            other => return Err(HostError::Config(format!("blob {} placed in {other}", b.id))),
        };
        let at = b.word_off as usize * crate::isa::WORD_BYTES;
        let bytes = bank
            .get(at..at + b.byte_len)
            .ok_or_else(|| HostError::Config(format!("blob {} runs past the end of {}", b.id, b.bank)))?;
        let slot = g
            .blobs
            .get_mut(b.id)
            .ok_or_else(|| HostError::Config(format!("weight image has blob {} the graph lacks", b.id)))?;
        match (slot, b.kind) {
            (Blob::Weights(w), BlobKind::Weights) if w.data.len() == bytes.len() => {
                w.data = bytes.iter().map(|&v| v as i8).collect();
            }
            (Blob::Bn(p), BlobKind::Bn) if p.channels() * BnParams::BYTES_PER_CHANNEL == bytes.len() => {
                *p = BnParams::from_bytes(bytes)?;
            }
            _ => return Err(HostError::Config(format!("blob {} does not match the graph's kind or size", b.id))),
        }
    }
    Ok(())
}

pub fn random_input(g: &QuantizedGraph, seed: u64) -> RefTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RefTensor::new(g.input, (0..g.input.bytes()).map(|_| rng.gen()).collect())
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output: RefTensor,
    pub stats: TraceStats,
}

/// Loads `image` into a fresh TM, runs `program` and reads the output tensor.
pub fn run_program(
    program: &Program,
    image: &WeightImage,
    input: &RefTensor,
    arch: &ArchParams,
    coeffs: &EnergyCoeffs,
) -> Result<RunOutcome, HostError> {
    let want = image.manifest.input.shape;
    if input.shape != want {
        return Err(HostError::Config(format!("input is {}, program expects {}", input.shape, want)));
    }
    let tm = image.prepare(&input.data)?;
    let (tm, stats) = run(program, tm, arch, coeffs)?;
    let output = RefTensor::new(image.manifest.output.shape, image.read_output(&tm)?);
    Ok(RunOutcome { output, stats })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub elements: usize,
    pub mismatches: usize,
    pub first: Option<Mismatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub results: Vec<SeedResult>,
}

impl CheckReport {
    pub fn passed(&self) -> usize {
        self.results.iter().filter(|r| r.mismatches == 0).count()
    }

    pub fn all_exact(&self) -> bool {
        self.passed() == self.results.len()
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in self.results.iter().filter(|r| r.mismatches > 0) {
            write!(f, "seed {}: {} of {} bytes differ", r.seed, r.mismatches, r.elements)?;
            if let Some(m) = &r.first {
                write!(f, ", first at c={} y={} x={}: expected {} got {}", m.c, m.y, m.x, m.expected, m.actual)?;
            }
            writeln!(f)?;
        }
        write!(f, "{}/{} bit-exact", self.passed(), self.results.len())
    }
}

/// Compiles and simulates `g` on `input`, then compares with the reference interpreter.
pub fn check_graph(g: &QuantizedGraph, input: &RefTensor, seed: u64) -> Result<SeedResult, HostError> {
    let c = compile(g, &TmSpec::default())?;
    let got = run_program(&c.program, &c.image, input, &ArchParams::default(), &EnergyCoeffs::default())?;
    let want = ref_run(g, input)?;
    let bytes: Vec<u8> = got.output.data.iter().map(|&v| v as u8).collect();
    let rep = compare(&want, &bytes, crate::isa::Layout::PixelMajor);
    Ok(SeedResult { seed, elements: rep.elements, mismatches: rep.mismatches, first: rep.first })
}

/// Equivalence sweep over `seeds` weight/input draws of one configuration,
/// run in parallel and reported in seed order.
pub fn check_config(cfg: &BackboneConfig, seeds: u64) -> Result<CheckReport, HostError> {
    let results = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let g = build_backbone(cfg, WeightInit::fan_in(seed))?;
            check_graph(&g, &random_input(&g, seed), seed)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CheckReport { results })
}

/// Summary of one simulated run of `g` on an all-zero input.
pub fn profile(g: &QuantizedGraph, arch: &ArchParams, coeffs: &EnergyCoeffs) -> Result<Summary, HostError> {
    let c = compile(g, &TmSpec::default())?;
    let input = RefTensor::zeros(g.input);
    Ok(run_program(&c.program, &c.image, &input, arch, coeffs)?.stats.summary)
}

pub fn bench(g: &QuantizedGraph, bus: BusSpec, coeffs: &EnergyCoeffs) -> Result<(Summary, SystemReport), HostError> {
    let s = profile(g, &ArchParams::default(), coeffs)?;
    let r = system_report(&SystemProfile::new(s, g.input, bus));
    Ok((s, r))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Calibration {
    pub coefficients: EnergyCoeffs,
    pub target_mw: f64,
    pub latency_s: f64,
    pub cycles: u64,
}

/// Scales [`EnergyCoeffs::NOMINAL`] so the default backbone averages `target_w`.
/// Unit counts do not depend on weight values, so zero weights suffice.
pub fn calibrate_default(target_w: f64) -> Result<Calibration, HostError> {
    let g = build_backbone(&BackboneConfig::etinynet(), WeightInit::Zeros)?;
    let c = compile(&g, &TmSpec::default())?;
    let out = run_program(&c.program, &c.image, &RefTensor::zeros(g.input), &ArchParams::default(), &EnergyCoeffs::NOMINAL)?;
    let s = &out.stats;
    let coefficients = calibrate(&EnergyCoeffs::NOMINAL, &s.totals, s.summary.latency_s, target_w)?;
    Ok(Calibration { coefficients, target_mw: target_w * 1e3, latency_s: s.summary.latency_s, cycles: s.summary.cycles })
}
