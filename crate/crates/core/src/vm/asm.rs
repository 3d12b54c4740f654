//! Text assembler and a small builder for generating programs from Rust.
//!
//! Syntax, one instruction per line:
//!
//! ```text
//! ; comment (also #)
//! loop:           ; label definition
//!     PUSH 0x10   ; decimal or 0x-prefixed immediate
//!     JZ done     ; jump targets are labels or absolute indices
//!     JMP loop
//! done:
//!     HALT
//! ```

use std::collections::HashMap;

use thiserror::Error;

use super::isa::{Instruction, Opcode, Program};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmError {
    #[error("line {line}: unknown mnemonic `{text}`")]
    UnknownMnemonic { line: usize, text: String },
    #[error("line {line}: {op} needs an operand")]
    MissingOperand { line: usize, op: Opcode },
    #[error("line {line}: {op} takes no operand")]
    UnexpectedOperand { line: usize, op: Opcode },
    #[error("line {line}: bad number `{text}`")]
    BadNumber { line: usize, text: String },
    #[error("line {line}: label `{label}` defined twice")]
    DuplicateLabel { line: usize, label: String },
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
}

enum Target {
    Resolved(u64),
    Label(String),
}

/// Accumulates instructions with symbolic jump targets.
#[derive(Default)]
pub struct ProgramBuilder {
    code: Vec<(Opcode, Target)>,
    labels: HashMap<String, u64>,
    fresh: usize,
}

impl ProgramBuilder {
    pub fn new() -> ProgramBuilder {
        ProgramBuilder::default()
    }

    /// Index of the next instruction.
    pub fn here(&self) -> u64 {
        self.code.len() as u64
    }

    pub fn op(&mut self, op: Opcode) -> &mut Self {
        self.code.push((op, Target::Resolved(0)));
        self
    }

    pub fn ops(&mut self, ops: &[Opcode]) -> &mut Self {
        for &op in ops {
            self.op(op);
        }
        self
    }

    pub fn push(&mut self, v: u64) -> &mut Self {
        self.code.push((Opcode::Push, Target::Resolved(v)));
        self
    }

    /// Pushes the word stored at `addr`.
    pub fn load_at(&mut self, addr: u64) -> &mut Self {
        self.push(addr).op(Opcode::Load)
    }

    /// Pops a value and stores it at `addr`.
    pub fn store_at(&mut self, addr: u64) -> &mut Self {
        self.push(addr).op(Opcode::Store)
    }

    pub fn jmp(&mut self, label: &str) -> &mut Self {
        self.code
            .push((Opcode::Jmp, Target::Label(label.to_string())));
        self
    }

    pub fn jz(&mut self, label: &str) -> &mut Self {
        self.code
            .push((Opcode::Jz, Target::Label(label.to_string())));
        self
    }

    /// Defines `label` at the next instruction. Panics on redefinition,
    /// which is a bug in the generating code.
    pub fn label(&mut self, label: &str) -> &mut Self {
        let at = self.here();
        if self.labels.insert(label.to_string(), at).is_some() {
            panic!("label `{label}` defined twice");
        }
        self
    }

    /// A label name not used before, for generated control flow.
    pub fn fresh_label(&mut self, stem: &str) -> String {
        self.fresh += 1;
        format!("{stem}#{}", self.fresh)
    }

    pub fn build(self) -> Result<Program, AsmError> {
        let mut out = Vec::with_capacity(self.code.len());
        for (op, target) in self.code {
            let imm = match target {
                Target::Resolved(v) => v,
                Target::Label(l) => *self.labels.get(&l).ok_or(AsmError::UndefinedLabel(l))?,
            };
            out.push(Instruction::new(op, imm));
        }
        Ok(Program::new(out))
    }
}

fn parse_number(text: &str, line: usize) -> Result<u64, AsmError> {
    let parsed = match text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(&hex.replace('_', ""), 16),
        None => text.replace('_', "").parse(),
    };
    parsed.map_err(|_| AsmError::BadNumber {
        line,
        text: text.to_string(),
    })
}

/// Assembles program text. Jump validity is left to
/// [`validate_program`](super::isa::validate_program).
pub fn assemble(source: &str) -> Result<Program, AsmError> {
    let mut b = ProgramBuilder::new();
    for (i, raw) in source.lines().enumerate() {
        let line = i + 1;
        let text = raw.split([';', '#']).next().unwrap_or("").trim();
        let mut rest = text;
        if let Some((label, tail)) = text.split_once(':') {
            let label = label.trim();
            if b.labels.contains_key(label) {
                return Err(AsmError::DuplicateLabel {
                    line,
                    label: label.to_string(),
                });
            }
            b.label(label);
            rest = tail.trim();
        }
        let mut words = rest.split_whitespace();
        let Some(mnemonic) = words.next() else {
            continue;
        };
        let op: Opcode = mnemonic.parse().map_err(|_| AsmError::UnknownMnemonic {
            line,
            text: mnemonic.to_string(),
        })?;
        let operand = words.next();
        if let Some(extra) = words.next() {
            return Err(AsmError::BadNumber {
                line,
                text: extra.to_string(),
            });
        }
        match (op.takes_immediate(), operand) {
            (false, None) => {
                b.op(op);
            }
            (false, Some(_)) => return Err(AsmError::UnexpectedOperand { line, op }),
            (true, None) => return Err(AsmError::MissingOperand { line, op }),
            (true, Some(arg)) => {
                let is_number = arg.starts_with(|c: char| c.is_ascii_digit());
                match (op, is_number) {
                    (Opcode::Push, _) | (_, true) => {
                        let v = parse_number(arg, line)?;
                        b.code.push((op, Target::Resolved(v)));
                    }
                    _ => {
                        b.code.push((op, Target::Label(arg.to_string())));
                    }
                }
            }
        }
    }
    b.build()
}

/// Renders a program in the syntax accepted by [`assemble`].
pub fn disassemble(p: &Program) -> String {
    let mut out = String::new();
    for ins in p.instructions() {
        if ins.op.takes_immediate() {
            out.push_str(&format!("{} {}\n", ins.op, ins.imm));
        } else {
            out.push_str(&format!("{}\n", ins.op));
        }
    }
    out
}
