use std::collections::VecDeque;
use std::fmt;

use super::{encoding::check_canonical, Bank, Opcode, Program, WORD_BYTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub pc: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        match self.pc {
            Some(pc) => write!(f, "{level} at pc {pc}: {}", self.message),
            None => write!(f, "{level}: {}", self.message),
        }
    }
}

fn diag(severity: Severity, pc: Option<usize>, message: impl Into<String>) -> Diagnostic {
    Diagnostic { severity, pc, message: message.into() }
}

/// Static checks over control flow and operand placement.
pub fn validate(p: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let n = p.len();
    if n == 0 {
        out.push(diag(Severity::Error, None, "missing terminator: program is empty"));
        return out;
    }

    for (pc, ins) in p.instructions.iter().enumerate() {
        if let Err(e) = check_canonical(ins) {
            out.push(diag(Severity::Error, Some(pc), e.to_string()));
            continue;
        }
        if ins.opcode == Opcode::Jump && ins.jump_target as usize >= n {
            out.push(diag(
                Severity::Error,
                Some(pc),
                format!("jump out of range: target {} in a {n}-instruction program", ins.jump_target),
            ));
        }
        if !ins.opcode.is_neural() {
            continue;
        }
        let (oh, ow, _) = ins.output_shape();
        if oh > 256 || ow > 256 {
            out.push(diag(Severity::Error, Some(pc), format!("output shape {oh}x{ow} exceeds 256x256")));
        }
        if ins.dst.bank == Bank::I {
            out.push(diag(Severity::Error, Some(pc), "bank misuse: instruction writes BankI"));
        } else if ins.dst.bank.is_weight_bank() {
            out.push(diag(Severity::Error, Some(pc), format!("bank misuse: instruction writes weight bank {}", ins.dst.bank)));
        }
        for (name, desc, bytes) in ins.operand_extents() {
            if (name == "par" || (name == "src1" && ins.opcode != Opcode::Add)) && !desc.bank.is_weight_bank() {
                out.push(diag(
                    Severity::Error,
                    Some(pc),
                    format!("bank misuse: {name} must live in b2 or b3, found {}", desc.bank),
                ));
            }
            let words = bytes.div_ceil(WORD_BYTES);
            if desc.word_off as usize + words > desc.bank.words() {
                out.push(diag(
                    Severity::Error,
                    Some(pc),
                    format!(
                        "bank overrun: {name} needs {words} words at {} in {} ({} words)",
                        desc.word_off,
                        desc.bank,
                        desc.bank.words()
                    ),
                ));
            }
        }
    }

    // reachability from PC 0; `sup` resumes at the next instruction
    let mut reached = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    let mut terminator = false;
    while let Some(pc) = queue.pop_front() {
        if reached[pc] {
            continue;
        }
        reached[pc] = true;
        let ins = &p.instructions[pc];
        let next = match ins.opcode {
            Opcode::End => {
                terminator = true;
                None
            }
            Opcode::Jump => Some(ins.jump_target as usize).filter(|&t| t < n),
            Opcode::Sup => {
                terminator = true;
                Some(pc + 1)
            }
            _ => Some(pc + 1),
        };
        match next {
            Some(t) if t == n && ins.opcode != Opcode::Jump => out.push(diag(
                Severity::Error,
                Some(pc),
                "missing terminator: execution falls off the end of the program",
            )),
            Some(t) if t < n => queue.push_back(t),
            _ => {}
        }
    }
    if !terminator {
        out.push(diag(Severity::Warning, None, "no reachable end/sup"));
    }
    let mut pc = 0;
    while pc < n {
        if reached[pc] {
            pc += 1;
            continue;
        }
        let start = pc;
        while pc < n && !reached[pc] {
            pc += 1;
        }
        out.push(diag(Severity::Warning, Some(start), format!("unreachable code: pc {start}..{}", pc - 1)));
    }
    out
}
