//! Text assembly for NCP programs.
//!
//! One instruction per line, `#` starts a comment. Operands are written
//! `name=bank:word_off:layout` (banks `bi b0 b1 b2 b3 bo`, layouts `p i`),
//! shape fields as `ih= iw= ic= oc= k= s=`, and the bare flags `bn` and
//! `relu`. Labels are `name:` and jump targets `@name`.
//!
//! ```text
//! loop:
//!   conv dst=b1:0:p src=bi:0:p w=b3:0:i par=b3:4000:i ih=256 iw=256 ic=3 oc=8 k=3 s=2 bn relu
//!   jump @loop
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write;

use thiserror::Error;

use super::{encode, Bank, Instruction, IsaError, Layout, Opcode, OperandDesc, ParUse, Program, MAX_PROGRAM_LEN};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct AsmError {
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, AsmError> {
    Err(AsmError { line, message: message.into() })
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_operand(line: usize, text: &str) -> Result<OperandDesc, AsmError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() < 2 || parts.len() > 3 {
        return err(line, format!("operand `{text}` is not bank:word_off[:layout]"));
    }
    let bank = Bank::from_name(parts[0]).ok_or_else(|| AsmError {
        line,
        message: format!("unknown bank `{}`", parts[0]),
    })?;
    let word_off: u16 = parts[1]
        .parse()
        .map_err(|_| AsmError { line, message: format!("bad word offset `{}`", parts[1]) })?;
    let layout = match parts.get(2).copied() {
        None | Some("p") => Layout::PixelMajor,
        Some("i") => Layout::Interleaved,
        Some(other) => return err(line, format!("unknown layout `{other}`")),
    };
    Ok(OperandDesc { bank, word_off, layout })
}

fn parse_number(line: usize, key: &str, value: &str) -> Result<u16, AsmError> {
    value
        .parse()
        .map_err(|_| AsmError { line, message: format!("`{key}` expects an integer, got `{value}`") })
}

enum Target {
    Label(String),
    Pc(u16),
}

struct Pending {
    line: usize,
    ins: Instruction,
    target: Option<Target>,
}

fn parse_instruction(line: usize, mnemonic: &str, args: &[&str]) -> Result<Pending, AsmError> {
    let opcode = Opcode::from_mnemonic(&mnemonic.to_ascii_lowercase())
        .ok_or_else(|| AsmError { line, message: format!("unknown mnemonic `{mnemonic}`") })?;
    let mut ins = Instruction::empty(opcode);
    let mut target = None;
    let mut seen = BTreeSet::new();
    for arg in args {
        if opcode == Opcode::Jump {
            if target.is_some() {
                return err(line, "jump takes exactly one target");
            }
            target = Some(match arg.strip_prefix('@') {
                Some(name) if is_ident(name) => Target::Label(name.to_string()),
                Some(pc) => Target::Pc(parse_number(line, "jump", pc)?),
                None => match arg.strip_prefix("target=") {
                    Some(pc) => Target::Pc(parse_number(line, "target", pc)?),
                    None => return err(line, format!("bad jump target `{arg}`")),
                },
            });
            continue;
        }
        let (key, value) = match arg.split_once('=') {
            Some((k, v)) => (k, Some(v)),
            None => (*arg, None),
        };
        let canonical_key = match key {
            "src0" => "src",
            "src1" => "w",
            k => k,
        };
        if !seen.insert(canonical_key.to_string()) {
            return err(line, format!("duplicate argument `{key}`"));
        }
        match (canonical_key, value) {
            ("bn", None) => ins.bn_en = true,
            ("relu", None) => ins.relu_en = true,
            ("dst", Some(v)) => ins.dst = parse_operand(line, v)?,
            ("src", Some(v)) => ins.src0 = parse_operand(line, v)?,
            ("w", Some(v)) => ins.src1 = parse_operand(line, v)?,
            ("par", Some(v)) => ins.par = parse_operand(line, v)?,
            ("ih", Some(v)) => ins.ih = parse_number(line, key, v)?,
            ("iw", Some(v)) => ins.iw = parse_number(line, key, v)?,
            ("ic", Some(v)) => ins.ic = parse_number(line, key, v)?,
            ("oc", Some(v)) => ins.oc = parse_number(line, key, v)?,
            ("s", Some(v)) => ins.stride = parse_number(line, key, v)?.min(255) as u8,
            ("k", Some(v)) => {
                if opcode != Opcode::Conv {
                    return err(line, "`k` only applies to conv");
                }
                match v {
                    "1" => ins.k3 = false,
                    "3" => ins.k3 = true,
                    _ => return err(line, format!("kernel size must be 1 or 3, got `{v}`")),
                }
            }
            _ => return err(line, format!("unknown argument `{arg}` for {opcode}")),
        }
    }
    if opcode == Opcode::Jump && target.is_none() {
        return err(line, "jump needs a target");
    }
    if opcode == Opcode::Conv && !seen.contains("k") {
        return err(line, "conv needs `k=1` or `k=3`");
    }
    Ok(Pending { line, ins, target })
}

pub fn assemble(text: &str) -> Result<Program, AsmError> {
    let mut labels: HashMap<String, usize> = HashMap::new();
    let mut pending: Vec<Pending> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let code = raw.split('#').next().unwrap_or("");
        let mut tokens: Vec<&str> = code.split_whitespace().collect();
        while let Some(first) = tokens.first() {
            let Some(name) = first.strip_suffix(':') else { break };
            if !is_ident(name) {
                return err(line, format!("bad label `{name}`"));
            }
            if labels.insert(name.to_string(), pending.len()).is_some() {
                return err(line, format!("label `{name}` defined twice"));
            }
            tokens.remove(0);
        }
        let Some((mnemonic, args)) = tokens.split_first() else { continue };
        pending.push(parse_instruction(line, mnemonic, args)?);
    }
    if pending.len() > MAX_PROGRAM_LEN {
        return err(pending[MAX_PROGRAM_LEN].line, "program exceeds 65536 instructions");
    }
    let mut instructions = Vec::with_capacity(pending.len());
    for p in pending {
        let mut ins = p.ins;
        match p.target {
            Some(Target::Label(name)) => {
                let pc = *labels
                    .get(&name)
                    .ok_or_else(|| AsmError { line: p.line, message: format!("undefined label `{name}`") })?;
                ins.jump_target = u16::try_from(pc).map_err(|_| AsmError {
                    line: p.line,
                    message: format!("label `{name}` beyond 16-bit PC range"),
                })?;
            }
            Some(Target::Pc(pc)) => ins.jump_target = pc,
            None => {}
        }
        encode(&ins).map_err(|e: IsaError| AsmError { line: p.line, message: e.to_string() })?;
        instructions.push(ins);
    }
    Ok(Program::new(instructions))
}

fn format_instruction(ins: &Instruction, program_len: usize, out: &mut String) {
    let f = ins.opcode.fields();
    out.push_str(ins.opcode.mnemonic());
    if ins.opcode == Opcode::Jump {
        if (ins.jump_target as usize) < program_len {
            let _ = write!(out, " @L{}", ins.jump_target);
        } else {
            let _ = write!(out, " @{}", ins.jump_target);
        }
        return;
    }
    if f.dst {
        let _ = write!(out, " dst={}", ins.dst);
    }
    if f.src0 {
        let _ = write!(out, " src={}", ins.src0);
    }
    if f.src1 {
        let key = if ins.opcode == Opcode::Add { "src1" } else { "w" };
        let _ = write!(out, " {key}={}", ins.src1);
    }
    let par = match f.par {
        ParUse::Always => true,
        ParUse::WhenBn => ins.bn_en,
        ParUse::Never => false,
    };
    if par {
        let _ = write!(out, " par={}", ins.par);
    }
    if f.shape {
        let _ = write!(out, " ih={} iw={} ic={}", ins.ih, ins.iw, ins.ic);
    }
    if f.oc {
        let _ = write!(out, " oc={}", ins.oc);
    }
    if f.k3 {
        let _ = write!(out, " k={}", if ins.k3 { 3 } else { 1 });
    }
    if f.stride {
        let _ = write!(out, " s={}", ins.stride);
    }
    if ins.bn_en {
        out.push_str(" bn");
    }
    if ins.relu_en {
        out.push_str(" relu");
    }
}

/// Canonical text: lowercase mnemonics, fixed argument order, and an `L<pc>:`
/// label before every jump target. Targets past the end stay numeric (`@<pc>`).
pub fn disassemble(p: &Program) -> String {
    let targets: BTreeSet<u16> = p
        .instructions
        .iter()
        .filter(|i| i.opcode == Opcode::Jump)
        .map(|i| i.jump_target)
        .collect();
    let mut out = String::new();
    for (pc, ins) in p.instructions.iter().enumerate() {
        if targets.contains(&(pc as u16)) {
            let _ = writeln!(out, "L{pc}:");
        }
        format_instruction(ins, p.len(), &mut out);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONV_LINE: &str =
        "conv dst=b1:0:p src=bi:0:p w=b3:0:i par=b3:4000:i ih=256 iw=256 ic=3 oc=8 k=3 s=2 bn relu";

    #[test]
    fn single_end() {
        let p = assemble("end").unwrap();
        assert_eq!(p.instructions, [Instruction::end()]);
        assert_eq!(disassemble(&p), "end\n");
    }

    #[test]
    fn conv_example_fields() {
        let p = assemble(CONV_LINE).unwrap();
        let ins = p.instructions[0];
        assert_eq!(ins.opcode, Opcode::Conv);
        assert!(ins.bn_en && ins.relu_en && ins.k3);
        assert_eq!(ins.stride, 2);
        assert_eq!((ins.ih, ins.iw, ins.ic, ins.oc), (256, 256, 3, 8));
        assert_eq!(ins.par, OperandDesc::new(Bank::B3, 4000, Layout::Interleaved));
        assert_eq!(disassemble(&p), format!("{CONV_LINE}\n"));
    }

    #[test]
    fn labels_resolve() {
        let text = "end\nsup\nloop:\n  jump @loop  # spin\n";
        let p = assemble(text).unwrap();
        assert_eq!(p.instructions[2], Instruction::jump(2));
        let inline = assemble("a: b: end\njump @b").unwrap();
        assert_eq!(inline.instructions[1], Instruction::jump(0));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = assemble("end\nfrob").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(e.message.contains("unknown mnemonic"));
        let e = assemble("jump @nowhere").unwrap_err();
        assert!(e.message.contains("undefined label"));
        let e = assemble("relu dst=b0:0:p src=b1:0:p ih=300 iw=1 ic=1").unwrap_err();
        assert!(e.message.contains("out of range"), "{e}");
        let e = assemble("relu dst=bz:0:p").unwrap_err();
        assert!(e.message.contains("unknown bank"));
        let e = assemble("relu dst=b0:0:p dst=b0:1:p").unwrap_err();
        assert!(e.message.contains("duplicate"));
        let e = assemble("end\n\nconv dst=b0:0:p src=bi:0:p w=b2:0:p ih=4 iw=4 ic=1 oc=1 s=1").unwrap_err();
        assert_eq!(e.line, 3);
    }

    #[test]
    fn disassembly_round_trips_jumps() {
        let p = Program::new(vec![Instruction::jump(2), Instruction::sup(), Instruction::end()]);
        let text = disassemble(&p);
        assert_eq!(text, "jump @L2\nsup\nL2:\nend\n");
        assert_eq!(assemble(&text).unwrap(), p);
    }
}
