//! Byte opcodes and per-problem opcode tables.
//!
//! A genome is a sequence of one-byte opcodes in depth-first prefix order.
//! Each problem carries its own table mapping byte values to names, arities
//! and evaluation semantics. Terminals occupy the low byte values, functions
//! follow them, so a table of n opcodes uses bytes 0..n.

use crate::error::{Error, Result};

/// One tree node. The byte indexes the active [`OpcodeTable`].
pub type Opcode = u8;

/// What an opcode computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Semantics {
    /// Input variable column `i` of the test suite.
    Var(u8),
    /// Constant palette entry `i` (numeric problems only).
    Const(u8),
    Add,
    Sub,
    Mul,
    /// Protected division: returns 1.0 where |denominator| < 1e-9.
    Pdiv,
    And,
    Or,
    Nand,
    Nor,
}

/// Lane representation used when evaluating a problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneMode {
    /// One f64 per test case.
    Numeric,
    /// One bit per test case, 64 cases per u64 word.
    Packed,
}

/// Direction of the fitness ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitnessOrder {
    /// Numeric problems: fitness is a summed absolute error.
    Minimize,
    /// Packed problems: fitness is a hit count.
    Maximize,
}

impl FitnessOrder {
    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            FitnessOrder::Minimize => a < b,
            FitnessOrder::Maximize => a > b,
        }
    }
}

/// Opcode metadata for one problem. Terminals first, then functions.
#[derive(Debug, Clone)]
pub struct OpcodeTable {
    names: Vec<String>,
    arity: Vec<u8>,
    sem: Vec<Semantics>,
    terminals: Vec<Opcode>,
    functions: Vec<Opcode>,
    /// Constant palette values, indexed by `Semantics::Const`.
    pub consts: Vec<f64>,
    pub mode: LaneMode,
}

impl OpcodeTable {
    fn build(entries: Vec<(String, u8, Semantics)>, consts: Vec<f64>, mode: LaneMode) -> Self {
        assert!(entries.len() <= 256, "opcode table exceeds one byte");
        let mut t = OpcodeTable {
            names: Vec::new(),
            arity: Vec::new(),
            sem: Vec::new(),
            terminals: Vec::new(),
            functions: Vec::new(),
            consts,
            mode,
        };
        for (i, (name, arity, sem)) in entries.into_iter().enumerate() {
            if arity == 0 {
                t.terminals.push(i as Opcode);
            } else {
                t.functions.push(i as Opcode);
            }
            t.names.push(name);
            t.arity.push(arity);
            t.sem.push(sem);
        }
        t
    }

    /// Symbolic regression table: one terminal per variable, the constant
    /// palette, then ADD SUB MUL PDIV.
    pub fn regression(var_names: &[&str], consts: Vec<f64>) -> Self {
        let mut entries: Vec<(String, u8, Semantics)> = Vec::new();
        for (i, v) in var_names.iter().enumerate() {
            entries.push((v.to_string(), 0, Semantics::Var(i as u8)));
        }
        for i in 0..consts.len() {
            entries.push((format!("C{i}"), 0, Semantics::Const(i as u8)));
        }
        entries.push(("ADD".into(), 2, Semantics::Add));
        entries.push(("SUB".into(), 2, Semantics::Sub));
        entries.push(("MUL".into(), 2, Semantics::Mul));
        entries.push(("PDIV".into(), 2, Semantics::Pdiv));
        Self::build(entries, consts, LaneMode::Numeric)
    }

    /// Boolean 6-multiplexer table: address lines A0 A1, data lines D0..D3,
    /// then AND OR NAND NOR.
    pub fn boolean_mux6() -> Self {
        let entries = vec![
            ("A0".to_string(), 0, Semantics::Var(0)),
            ("A1".to_string(), 0, Semantics::Var(1)),
            ("D0".to_string(), 0, Semantics::Var(2)),
            ("D1".to_string(), 0, Semantics::Var(3)),
            ("D2".to_string(), 0, Semantics::Var(4)),
            ("D3".to_string(), 0, Semantics::Var(5)),
            ("AND".to_string(), 2, Semantics::And),
            ("OR".to_string(), 2, Semantics::Or),
            ("NAND".to_string(), 2, Semantics::Nand),
            ("NOR".to_string(), 2, Semantics::Nor),
        ];
        Self::build(entries, Vec::new(), LaneMode::Packed)
    }

    /// Number of opcodes in the table.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, op: Opcode) -> bool {
        (op as usize) < self.names.len()
    }

    pub fn arity(&self, op: Opcode) -> u8 {
        self.arity[op as usize]
    }

    pub fn is_function(&self, op: Opcode) -> bool {
        self.arity[op as usize] > 0
    }

    pub fn semantics(&self, op: Opcode) -> Semantics {
        self.sem[op as usize]
    }

    pub fn name(&self, op: Opcode) -> &str {
        &self.names[op as usize]
    }

    pub fn terminals(&self) -> &[Opcode] {
        &self.terminals
    }

    pub fn functions(&self) -> &[Opcode] {
        &self.functions
    }

    /// Look an opcode up by its dump name.
    pub fn parse_name(&self, s: &str) -> Result<Opcode> {
        self.names
            .iter()
            .position(|n| n == s)
            .map(|i| i as Opcode)
            .ok_or_else(|| Error::Parse(format!("unknown opcode name {s:?}")))
    }

    pub fn fitness_order(&self) -> FitnessOrder {
        match self.mode {
            LaneMode::Numeric => FitnessOrder::Minimize,
            LaneMode::Packed => FitnessOrder::Maximize,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_table_layout() {
        let t = OpcodeTable::regression(&["x"], vec![0.5, -0.25]);
        assert_eq!(t.len(), 7);
        assert_eq!(t.terminals().len(), 3);
        assert_eq!(t.functions().len(), 4);
        assert_eq!(t.name(0), "x");
        assert_eq!(t.name(3), "ADD");
        assert_eq!(t.arity(3), 2);
        assert_eq!(t.arity(0), 0);
        assert_eq!(t.semantics(2), Semantics::Const(1));
        assert_eq!(t.fitness_order(), FitnessOrder::Minimize);
    }

    #[test]
    fn mux6_table_layout() {
        let t = OpcodeTable::boolean_mux6();
        assert_eq!(t.len(), 10);
        assert_eq!(t.terminals().len(), 6);
        assert_eq!(t.parse_name("NAND").unwrap(), 8);
        assert_eq!(t.mode, LaneMode::Packed);
        assert_eq!(t.fitness_order(), FitnessOrder::Maximize);
    }

    #[test]
    fn unknown_name_is_parse_error() {
        let t = OpcodeTable::boolean_mux6();
        assert!(t.parse_name("XOR").is_err());
    }
}
