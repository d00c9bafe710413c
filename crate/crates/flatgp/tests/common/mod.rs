//! Reference implementations the integration tests score the engine against.
//! Everything here trades speed for obviousness: recursive structures, one
//! case at a time, brute-force enumeration. None of it shares code with the
//! crate's scan-based interpreter or splice paths.

#![allow(dead_code)]

use flatgp::ops::{OpcodeTable, Semantics};
use flatgp::suite::{SuiteData, TestSuite};

/// Ordinary recursive tree, parsed independently from the byte format.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf(Semantics),
    Op(Semantics, Box<Node>, Box<Node>),
}

/// Recursive-descent parse of one prefix-order subtree starting at `*pos`.
pub fn parse_at(table: &OpcodeTable, ops: &[u8], pos: &mut usize) -> Node {
    let op = ops[*pos];
    *pos += 1;
    let sem = table.semantics(op);
    match table.arity(op) {
        0 => Node::Leaf(sem),
        2 => {
            let a = parse_at(table, ops, pos);
            let b = parse_at(table, ops, pos);
            Node::Op(sem, Box::new(a), Box::new(b))
        }
        n => panic!("unexpected arity {n}"),
    }
}

/// Parse a whole genome; panics unless every byte is consumed exactly once.
pub fn parse(table: &OpcodeTable, ops: &[u8]) -> Node {
    let mut pos = 0;
    let node = parse_at(table, ops, &mut pos);
    assert_eq!(pos, ops.len(), "parse consumed {pos} of {} bytes", ops.len());
    node
}

impl Node {
    pub fn size(&self) -> usize {
        match self {
            Node::Leaf(_) => 1,
            Node::Op(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf(_) => 1,
            Node::Op(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Scalar evaluation of one numeric case.
    pub fn eval_num(&self, table: &OpcodeTable, vars: &[f64]) -> f64 {
        match self {
            Node::Leaf(Semantics::Var(i)) => vars[*i as usize],
            Node::Leaf(Semantics::Const(i)) => table.consts[*i as usize],
            Node::Op(sem, a, b) => {
                let x = a.eval_num(table, vars);
                let y = b.eval_num(table, vars);
                match sem {
                    Semantics::Add => x + y,
                    Semantics::Sub => x - y,
                    Semantics::Mul => x * y,
                    Semantics::Pdiv => {
                        if y.abs() < 1e-9 {
                            1.0
                        } else {
                            x / y
                        }
                    }
                    other => panic!("numeric eval of {other:?}"),
                }
            }
            Node::Leaf(other) => panic!("numeric leaf {other:?}"),
        }
    }

    /// Scalar evaluation of one boolean case.
    pub fn eval_bool(&self, vars: &[bool]) -> bool {
        match self {
            Node::Leaf(Semantics::Var(i)) => vars[*i as usize],
            Node::Op(sem, a, b) => {
                let x = a.eval_bool(vars);
                let y = b.eval_bool(vars);
                match sem {
                    Semantics::And => x & y,
                    Semantics::Or => x | y,
                    Semantics::Nand => !(x & y),
                    Semantics::Nor => !(x | y),
                    other => panic!("boolean eval of {other:?}"),
                }
            }
            Node::Leaf(other) => panic!("boolean leaf {other:?}"),
        }
    }
}

/// Per-case numeric outputs of a genome.
pub fn scalar_outputs(table: &OpcodeTable, suite: &TestSuite, ops: &[u8]) -> Vec<f64> {
    let SuiteData::Numeric { vars, .. } = &suite.data else { panic!("numeric suite expected") };
    let node = parse(table, ops);
    (0..suite.n_cases)
        .map(|c| {
            let case: Vec<f64> = vars.iter().map(|col| col[c]).collect();
            node.eval_num(table, &case)
        })
        .collect()
}

/// Summed absolute error, accumulated in case order like the engine, with
/// the same non-finite canonicalization.
pub fn scalar_fitness_num(table: &OpcodeTable, suite: &TestSuite, ops: &[u8]) -> f64 {
    let SuiteData::Numeric { targets, .. } = &suite.data else { panic!("numeric suite expected") };
    let outs = scalar_outputs(table, suite, ops);
    let mut sum = 0.0;
    for (o, t) in outs.iter().zip(targets) {
        sum += (o - t).abs();
    }
    if sum.is_finite() {
        sum
    } else {
        f64::INFINITY
    }
}

/// Per-case boolean outputs of a packed-problem genome.
pub fn scalar_outputs_bool(table: &OpcodeTable, suite: &TestSuite, ops: &[u8]) -> Vec<bool> {
    let SuiteData::Packed { vars, .. } = &suite.data else { panic!("packed suite expected") };
    let node = parse(table, ops);
    (0..suite.n_cases)
        .map(|c| {
            let case: Vec<bool> =
                vars.iter().map(|col| (col[c / 64] >> (c % 64)) & 1 == 1).collect();
            node.eval_bool(&case)
        })
        .collect()
}

/// Hit count of a packed-problem genome against its suite targets.
pub fn scalar_fitness_bool(table: &OpcodeTable, suite: &TestSuite, ops: &[u8]) -> f64 {
    let SuiteData::Packed { targets, .. } = &suite.data else { panic!("packed suite expected") };
    let outs = scalar_outputs_bool(table, suite, ops);
    let mut hits = 0usize;
    for (c, o) in outs.iter().enumerate() {
        let t = (targets[c / 64] >> (c % 64)) & 1 == 1;
        if *o == t {
            hits += 1;
        }
    }
    hits as f64
}

/// First-principles 6-multiplexer: two address bits select one of four data
/// bits. Input layout matches the packed suite: case index bit 0..1 are the
/// address lines, bits 2..5 the data lines.
pub fn mux6_truth(case: u64) -> bool {
    let a0 = case & 1;
    let a1 = (case >> 1) & 1;
    let data = [(case >> 2) & 1, (case >> 3) & 1, (case >> 4) & 1, (case >> 5) & 1];
    data[(2 * a1 + a0) as usize] == 1
}

/// Upper critical value of the chi-square distribution by the
/// Wilson-Hilferty cube approximation; `z` is the standard-normal quantile
/// of the desired upper tail (2.3263 for p = 0.01).
pub fn chi2_critical(df: f64, z: f64) -> f64 {
    let a = 2.0 / (9.0 * df);
    df * (1.0 - a + z * a.sqrt()).powi(3)
}
