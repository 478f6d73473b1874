use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use ncp::compiler::{compile, TmSpec, WeightImage};
use ncp::host::pipeline::{bench, check_config, document_graph, load_document, read_file, run_program, write_file};
use ncp::host::{preprocess, system_report, BusSpec, Normalize, RgbImage, SystemProfile};
use ncp::isa::{assemble, disassemble, validate, Program, Severity};
use ncp::sim::{ArchParams, EnergyCoeffs};

#[derive(Parser)]
#[command(name = "ncp", version, about = "Compile, assemble and simulate programs for the NCP co-processor")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Bus {
    Sdio,
    Spi,
}

#[derive(Subcommand)]
enum Cmd {
    /// Lower a graph document to a program and a weight image.
    Compile {
        graph: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(short, long)]
        weights: PathBuf,
        /// Print the memory placement report.
        #[arg(long)]
        report: bool,
        /// Weight seed, overriding the document's.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Assemble text into a binary program.
    Asm {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print a binary program as assembly text.
    Disasm {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a program on a PPM image and print the output tensor.
    Run {
        program: PathBuf,
        weights: PathBuf,
        image: PathBuf,
        /// Print one line per executed instruction.
        #[arg(long)]
        trace: bool,
        /// Print the run summary as JSON.
        #[arg(long)]
        stats: bool,
        /// Energy coefficient file (defaults to the bundled calibration).
        #[arg(long)]
        energy: Option<PathBuf>,
        /// Also write the output as an NCPT tensor file.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Compare simulator and reference interpreter over seeded weights and inputs.
    Check {
        graph: PathBuf,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// System-level throughput and efficiency of a graph.
    Bench {
        graph: PathBuf,
        #[arg(long, value_enum, default_value = "sdio")]
        bus: Bus,
        /// MCU time per frame, seconds.
        #[arg(long, default_value_t = 0.0)]
        mcu_overhead: f64,
        /// MCU power, watts.
        #[arg(long, default_value_t = 0.0)]
        mcu_power: f64,
        #[arg(long)]
        energy: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

fn base_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn energy(path: &Option<PathBuf>) -> Result<EnergyCoeffs> {
    match path {
        Some(p) => {
            let text = String::from_utf8(read_file(p)?).context("energy file is not UTF-8")?;
            Ok(EnergyCoeffs::from_json(&text)?)
        }
        None => Ok(EnergyCoeffs::default()),
    }
}

fn load_program(path: &Path) -> Result<Program> {
    Program::from_bytes(&read_file(path)?).with_context(|| format!("reading {}", path.display()))
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Compile { graph, output, weights, report, seed } => {
            let doc = load_document(&graph)?;
            let g = document_graph(&doc, base_dir(&graph), seed)?;
            let tm = TmSpec::default();
            let c = compile(&g, &tm)?;
            write_file(&output, &c.program.to_bytes()?)?;
            write_file(&weights, &c.image.to_bytes())?;
            if report {
                print!("{}", c.report(&tm));
            }
            eprintln!("{} instructions, {} parameter bytes", c.program.len(), c.image.bank2.len() + c.image.bank3.len());
        }
        Cmd::Asm { input, output } => {
            let text = String::from_utf8(read_file(&input)?).context("assembly source is not UTF-8")?;
            let p = assemble(&text)?;
            let diags = validate(&p);
            for d in &diags {
                eprintln!("{}: {d}", input.display());
            }
            if diags.iter().any(|d| d.severity == Severity::Error) {
                bail!("{} failed validation", input.display());
            }
            write_file(&output, &p.to_bytes()?)?;
        }
        Cmd::Disasm { input, output } => {
            let text = disassemble(&load_program(&input)?);
            match output {
                Some(o) => write_file(&o, text.as_bytes())?,
                None => print!("{text}"),
            }
        }
        Cmd::Run { program, weights, image, trace, stats, energy: e, save } => {
            let p = load_program(&program)?;
            let w = WeightImage::from_bytes(&read_file(&weights)?)?;
            let x = preprocess(&RgbImage::load(&image)?, &Normalize::default())?;
            let out = run_program(&p, &w, &x, &ArchParams::default(), &energy(&e)?)?;
            if trace {
                print!("{}", out.stats.trace_lines());
            }
            if stats {
                println!("{}", out.stats.summary_json());
            }
            let s = out.output.shape;
            println!("output {}x{}x{}", s.h, s.w, s.c);
            for row in out.output.data.chunks(16) {
                println!("{}", row.iter().map(|v| format!("{v:4}")).collect::<String>());
            }
            if let Some(path) = save {
                write_file(&path, &out.output.to_bytes())?;
            }
        }
        Cmd::Check { graph, seeds } => {
            let doc = load_document(&graph)?;
            let report = check_config(&doc.effective_config(), seeds)?;
            println!("{report}");
            if !report.all_exact() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Cmd::Bench { graph, bus, mcu_overhead, mcu_power, energy: e, json } => {
            let doc = load_document(&graph)?;
            let g = document_graph(&doc, base_dir(&graph), None)?;
            let bus = match bus {
                Bus::Sdio => BusSpec::SDIO,
                Bus::Spi => BusSpec::SPI,
            };
            let (summary, _) = bench(&g, bus, &energy(&e)?)?;
            let mut profile = SystemProfile::new(summary, g.input, bus);
            profile.mcu_overhead = mcu_overhead;
            profile.mcu_power = mcu_power;
            let r = system_report(&profile);
            if json {
                println!("{}", serde_json::to_string_pretty(&r)?);
            } else {
                println!("{r}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
