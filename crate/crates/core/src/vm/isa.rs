use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::codec::{canonical_decode, canonical_encode, DecodeError, Encode, Reader};

/// Hard cap on program length.
pub const MAX_PROGRAM_LEN: usize = 65536;

macro_rules! opcodes {
    ($($name:ident = $byte:expr, $mnemonic:expr, $imm:expr;)*) => {
        /// The fixed instruction set. Every opcode retires in exactly one step.
        #[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
        #[repr(u8)]
        pub enum Opcode {
            $($name = $byte,)*
        }

        impl Opcode {
            pub const ALL: &'static [Opcode] = &[$(Opcode::$name,)*];

            pub fn from_byte(b: u8) -> Option<Opcode> {
                match b {
                    $($byte => Some(Opcode::$name),)*
                    _ => None,
                }
            }

            pub fn mnemonic(self) -> &'static str {
                match self {
                    $(Opcode::$name => $mnemonic,)*
                }
            }

            /// Whether the instruction reads its immediate.
            pub fn takes_immediate(self) -> bool {
                match self {
                    $(Opcode::$name => $imm,)*
                }
            }
        }

        impl FromStr for Opcode {
            type Err = ();
            fn from_str(s: &str) -> Result<Opcode, ()> {
                match s.to_ascii_uppercase().as_str() {
                    $($mnemonic => Ok(Opcode::$name),)*
                    _ => Err(()),
                }
            }
        }
    };
}

opcodes! {
    Halt = 0x00, "HALT", false;
    Push = 0x01, "PUSH", true;
    Pop = 0x02, "POP", false;
    Dup = 0x03, "DUP", false;
    Swap = 0x04, "SWAP", false;
    Load = 0x05, "LOAD", false;
    Store = 0x06, "STORE", false;
    Add = 0x10, "ADD", false;
    Sub = 0x11, "SUB", false;
    Mul = 0x12, "MUL", false;
    Div = 0x13, "DIV", false;
    Mod = 0x14, "MOD", false;
    And = 0x15, "AND", false;
    Or = 0x16, "OR", false;
    Xor = 0x17, "XOR", false;
    Shl = 0x18, "SHL", false;
    Shr = 0x19, "SHR", false;
    Lt = 0x1a, "LT", false;
    Eq = 0x1b, "EQ", false;
    Not = 0x1c, "NOT", false;
    Jmp = 0x20, "JMP", true;
    Jz = 0x21, "JZ", true;
    InputLen = 0x30, "INPUTLEN", false;
    Rand = 0x31, "RAND", false;
    Eval = 0x32, "EVAL", false;
}

impl Opcode {
    /// Opcodes that only make sense inside a searcher.
    pub fn searcher_only(self) -> bool {
        matches!(self, Opcode::Rand | Opcode::Eval)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Instruction {
    pub op: Opcode,
    pub imm: u64,
}

impl Instruction {
    pub const fn new(op: Opcode, imm: u64) -> Instruction {
        Instruction { op, imm }
    }
    pub const fn op(op: Opcode) -> Instruction {
        Instruction { op, imm: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("program has {0} instructions, limit is {MAX_PROGRAM_LEN}")]
    TooLong(usize),
    #[error("instruction {index}: unknown opcode byte {byte:#04x}")]
    UnknownOpcode { index: usize, byte: u8 },
    #[error("instruction {index}: jump target {target} out of range")]
    JumpOutOfRange { index: usize, target: u64 },
    #[error("instruction {index}: {op} takes no immediate")]
    UnexpectedImmediate { index: usize, op: Opcode },
    #[error("instruction {index}: {op} is not allowed in an evaluator")]
    ForbiddenInEvaluator { index: usize, op: Opcode },
    #[error("malformed program binary: {0}")]
    Malformed(DecodeError),
}

/// A validated-on-demand list of instructions.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Program {
    instructions: Vec<Instruction>,
}

impl Program {
    pub fn new(instructions: Vec<Instruction>) -> Program {
        Program { instructions }
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Binary format: `u32` count, then per instruction one opcode byte and
    /// an 8-byte big-endian immediate.
    pub fn to_binary(&self) -> Vec<u8> {
        // the tag byte is not part of the file format
        let mut bytes = canonical_encode(self).expect("program length checked by caller");
        bytes.remove(0);
        bytes
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Program, ProgramError> {
        // Scan opcodes first so an unknown byte is reported with its index.
        let mut r = Reader::new(bytes);
        let count = r.u32().map_err(ProgramError::Malformed)? as usize;
        if count > MAX_PROGRAM_LEN {
            return Err(ProgramError::TooLong(count));
        }
        for index in 0..count {
            let byte = r.u8().map_err(ProgramError::Malformed)?;
            if Opcode::from_byte(byte).is_none() {
                return Err(ProgramError::UnknownOpcode { index, byte });
            }
            r.take(8).map_err(ProgramError::Malformed)?;
        }
        let mut tagged = Vec::with_capacity(bytes.len() + 1);
        tagged.push(<Program as Encode>::TAG);
        tagged.extend_from_slice(bytes);
        canonical_decode::<Program>(&tagged).map_err(ProgramError::Malformed)
    }

    pub fn uses_searcher_opcodes(&self) -> bool {
        self.instructions.iter().any(|i| i.op.searcher_only())
    }
}

/// Accepts iff every jump lands inside the program and only jumps and PUSH
/// carry immediates. Reports the first offending instruction.
pub fn validate_program(p: &Program) -> Result<(), ProgramError> {
    if p.len() > MAX_PROGRAM_LEN {
        return Err(ProgramError::TooLong(p.len()));
    }
    for (index, ins) in p.instructions().iter().enumerate() {
        match ins.op {
            Opcode::Jmp | Opcode::Jz => {
                if ins.imm >= p.len() as u64 {
                    return Err(ProgramError::JumpOutOfRange {
                        index,
                        target: ins.imm,
                    });
                }
            }
            Opcode::Push => {}
            op => {
                if ins.imm != 0 {
                    return Err(ProgramError::UnexpectedImmediate { index, op });
                }
            }
        }
    }
    Ok(())
}

/// [`validate_program`] plus the evaluator-only restriction: no RAND or EVAL,
/// so that evaluation stays a pure function of (candidate, ctx).
pub fn validate_evaluator(p: &Program) -> Result<(), ProgramError> {
    validate_program(p)?;
    match p.instructions().iter().position(|i| i.op.searcher_only()) {
        Some(index) => Err(ProgramError::ForbiddenInEvaluator {
            index,
            op: p.instructions()[index].op,
        }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_program_is_valid() {
        assert_eq!(validate_program(&Program::default()), Ok(()));
    }

    #[test]
    fn far_jump_reported_at_its_index() {
        let p = Program::new(vec![
            Instruction::new(Opcode::Push, 1),
            Instruction::new(Opcode::Jmp, 1_000_000_000),
            Instruction::op(Opcode::Halt),
        ]);
        assert_eq!(
            validate_program(&p),
            Err(ProgramError::JumpOutOfRange {
                index: 1,
                target: 1_000_000_000
            })
        );
    }

    #[test]
    fn rand_rejected_in_evaluator_only() {
        let p = Program::new(vec![
            Instruction::op(Opcode::Rand),
            Instruction::op(Opcode::Halt),
        ]);
        assert!(validate_program(&p).is_ok());
        assert!(matches!(
            validate_evaluator(&p),
            Err(ProgramError::ForbiddenInEvaluator {
                index: 0,
                op: Opcode::Rand
            })
        ));
    }

    #[test]
    fn binary_layout_and_unknown_opcode() {
        let p = Program::new(vec![
            Instruction::new(Opcode::Push, 0x0102),
            Instruction::op(Opcode::Halt),
        ]);
        let bin = p.to_binary();
        assert_eq!(bin.len(), 4 + 2 * 9);
        assert_eq!(&bin[..4], &[0, 0, 0, 2]);
        assert_eq!(bin[4], Opcode::Push as u8);
        assert_eq!(&bin[5..13], &[0, 0, 0, 0, 0, 0, 1, 2]);
        assert_eq!(Program::from_binary(&bin).unwrap(), p);

        let mut bad = bin.clone();
        bad[13] = 0xee;
        assert_eq!(
            Program::from_binary(&bad),
            Err(ProgramError::UnknownOpcode {
                index: 1,
                byte: 0xee
            })
        );
    }

    #[test]
    fn mnemonics_round_trip() {
        for &op in Opcode::ALL {
            assert_eq!(op.mnemonic().parse::<Opcode>(), Ok(op));
            assert_eq!(Opcode::from_byte(op as u8), Some(op));
        }
    }
}
