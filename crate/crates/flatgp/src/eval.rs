//! Batch interpreter: evaluates a flattened tree over every fitness case at
//! once.
//!
//! Numeric suites run one f64 lane per case; packed suites run 64 boolean
//! cases per u64 word. A single forward scan of the prefix bytes drives an
//! explicit frame stack: visiting a function pushes a frame, visiting a
//! terminal produces a lane buffer and then folds completed subtrees into
//! their parent frames. Operators write their result into the first
//! argument's buffer, so a tree of depth d needs exactly d live lane buffers
//! at its deepest moment; the evaluator tracks that high-water mark and
//! rejects trees whose depth exceeds the configured bound instead of growing
//! without limit.
//!
//! Buffers are recycled through [`EvalScratch`] so steady-state evaluation
//! allocates nothing.

use crate::error::{Error, Result};
use crate::ops::{FitnessOrder, OpcodeTable, Semantics};
use crate::suite::{SuiteData, TestSuite};

/// Reusable lane-buffer pool, one per worker thread.
#[derive(Debug, Default)]
pub struct EvalScratch {
    num_spares: Vec<Vec<f64>>,
    bit_spares: Vec<Vec<u64>>,
    /// Deepest lane-buffer stack seen by the most recent evaluation.
    pub hwm: usize,
}

impl EvalScratch {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Root lanes of an evaluated tree, for callers that want raw outputs rather
/// than a fitness (oracle tests, debugging).
#[derive(Debug, Clone, PartialEq)]
pub enum Lanes {
    Numeric(Vec<f64>),
    Packed(Vec<u64>),
}

/// One mode of lane arithmetic. Implementations are zero-sized tags; all
/// dispatch happens at monomorphization time so the per-node loops stay
/// branch-free over the mode.
pub(crate) trait Lane {
    type Buf: Clone + PartialEq + Send;

    fn take_spare(scratch: &mut EvalScratch) -> Option<Self::Buf>;
    fn give_spare(scratch: &mut EvalScratch, buf: Self::Buf);
    fn alloc(suite: &TestSuite) -> Self::Buf;
    /// Fill `out` with the terminal's lanes.
    fn terminal(sem: Semantics, table: &OpcodeTable, suite: &TestSuite, out: &mut Self::Buf);
    /// `a = op(a, b)` over every lane.
    fn apply(sem: Semantics, a: &mut Self::Buf, b: &Self::Buf, suite: &TestSuite);
    /// Case count and rms magnitude of the differing cases (0, 0.0 if equal).
    fn disruption(a: &Self::Buf, b: &Self::Buf, suite: &TestSuite) -> (usize, f64);
    fn fitness(root: &Self::Buf, suite: &TestSuite) -> f64;
}

pub(crate) struct NumericLane;
pub(crate) struct PackedLane;

fn numeric_suite(suite: &TestSuite) -> (&[Vec<f64>], &[f64]) {
    match &suite.data {
        SuiteData::Numeric { vars, targets } => (vars, targets),
        SuiteData::Packed { .. } => unreachable!("numeric lanes over packed suite"),
    }
}

fn packed_suite(suite: &TestSuite) -> (&[Vec<u64>], &[u64], u64) {
    match &suite.data {
        SuiteData::Packed { vars, targets, tail_mask } => (vars, targets, *tail_mask),
        SuiteData::Numeric { .. } => unreachable!("packed lanes over numeric suite"),
    }
}

impl Lane for NumericLane {
    type Buf = Vec<f64>;

    fn take_spare(scratch: &mut EvalScratch) -> Option<Vec<f64>> {
        scratch.num_spares.pop()
    }

    fn give_spare(scratch: &mut EvalScratch, buf: Vec<f64>) {
        scratch.num_spares.push(buf);
    }

    fn alloc(suite: &TestSuite) -> Vec<f64> {
        vec![0.0; suite.n_cases]
    }

    fn terminal(sem: Semantics, table: &OpcodeTable, suite: &TestSuite, out: &mut Vec<f64>) {
        let (vars, _) = numeric_suite(suite);
        match sem {
            Semantics::Var(i) => out.copy_from_slice(&vars[i as usize]),
            Semantics::Const(i) => out.fill(table.consts[i as usize]),
            _ => unreachable!("terminal with function semantics"),
        }
    }

    fn apply(sem: Semantics, a: &mut Vec<f64>, b: &Vec<f64>, _suite: &TestSuite) {
        match sem {
            Semantics::Add => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
            Semantics::Sub => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x -= y;
                }
            }
            Semantics::Mul => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x *= y;
                }
            }
            Semantics::Pdiv => {
                // protected division: near-zero denominator yields 1.0
                for (x, y) in a.iter_mut().zip(b) {
                    *x = if y.abs() < 1e-9 { 1.0 } else { *x / y };
                }
            }
            _ => unreachable!("numeric apply of boolean op"),
        }
    }

    fn disruption(a: &Vec<f64>, b: &Vec<f64>, _suite: &TestSuite) -> (usize, f64) {
        let mut count = 0usize;
        let mut sq = 0.0f64;
        for (x, y) in a.iter().zip(b) {
            if x != y {
                count += 1;
                let d = x - y;
                sq += d * d;
            }
        }
        if count == 0 {
            (0, 0.0)
        } else {
            (count, (sq / count as f64).sqrt())
        }
    }

    fn fitness(root: &Vec<f64>, suite: &TestSuite) -> f64 {
        let (_, targets) = numeric_suite(suite);
        let mut sum = 0.0f64;
        for (x, t) in root.iter().zip(targets) {
            sum += (x - t).abs();
        }
        // canonical worst for overflow/NaN so ordering stays total
        if sum.is_finite() {
            sum
        } else {
            f64::INFINITY
        }
    }

}

impl Lane for PackedLane {
    type Buf = Vec<u64>;

    fn take_spare(scratch: &mut EvalScratch) -> Option<Vec<u64>> {
        scratch.bit_spares.pop()
    }

    fn give_spare(scratch: &mut EvalScratch, buf: Vec<u64>) {
        scratch.bit_spares.push(buf);
    }

    fn alloc(suite: &TestSuite) -> Vec<u64> {
        vec![0; suite.words()]
    }

    fn terminal(sem: Semantics, _table: &OpcodeTable, suite: &TestSuite, out: &mut Vec<u64>) {
        let (vars, _, _) = packed_suite(suite);
        match sem {
            Semantics::Var(i) => out.copy_from_slice(&vars[i as usize]),
            _ => unreachable!("packed terminal must be a variable"),
        }
    }

    fn apply(sem: Semantics, a: &mut Vec<u64>, b: &Vec<u64>, suite: &TestSuite) {
        let (_, _, tail_mask) = packed_suite(suite);
        match sem {
            Semantics::And => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x &= y;
                }
            }
            Semantics::Or => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x |= y;
                }
            }
            Semantics::Nand => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x = !(*x & y);
                }
            }
            Semantics::Nor => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x = !(*x | y);
                }
            }
            _ => unreachable!("packed apply of numeric op"),
        }
        // dead bits past n_cases must stay zero after negating ops
        if let Some(last) = a.last_mut() {
            *last &= tail_mask;
        }
    }

    fn disruption(a: &Vec<u64>, b: &Vec<u64>, _suite: &TestSuite) -> (usize, f64) {
        let mut count = 0u32;
        for (x, y) in a.iter().zip(b) {
            count += (x ^ y).count_ones();
        }
        // every differing boolean case differs by exactly one unit
        if count == 0 {
            (0, 0.0)
        } else {
            (count as usize, 1.0)
        }
    }

    fn fitness(root: &Vec<u64>, suite: &TestSuite) -> f64 {
        let (_, targets, tail_mask) = packed_suite(suite);
        let mut hits = 0u32;
        let last = root.len() - 1;
        for (w, (x, t)) in root.iter().zip(targets).enumerate() {
            let mask = if w == last { tail_mask } else { u64::MAX };
            hits += (!(x ^ t) & mask).count_ones();
        }
        hits as f64
    }

}

/// Evaluate `ops` (a whole tree or a subtree slice) and return its root
/// lanes. `max_depth` bounds the frame stack; the updated high-water mark
/// lands in `scratch.hwm`.
pub(crate) fn eval_subtree<L: Lane>(
    table: &OpcodeTable,
    suite: &TestSuite,
    ops: &[u8],
    max_depth: usize,
    scratch: &mut EvalScratch,
) -> Result<L::Buf> {
    struct Frame<B> {
        sem: Semantics,
        first: Option<B>,
    }

    let mut frames: Vec<Frame<L::Buf>> = Vec::new();
    let mut hwm = 0usize;
    let mut result: Option<L::Buf> = None;

    for (i, &op) in ops.iter().enumerate() {
        if result.is_some() {
            return Err(Error::MalformedGenome(format!(
                "subtree complete before byte {i} of {}",
                ops.len()
            )));
        }
        if !table.contains(op) {
            return Err(Error::MalformedGenome(format!("unknown opcode {op:#04x} at {i}")));
        }
        let sem = table.semantics(op);
        if table.is_function(op) {
            // node depth is the frame count after pushing
            if frames.len() + 1 > max_depth {
                return Err(Error::StackBound { need: frames.len() + 1, max: max_depth });
            }
            frames.push(Frame { sem, first: None });
            continue;
        }
        let depth = frames.len() + 1;
        if depth > max_depth {
            return Err(Error::StackBound { need: depth, max: max_depth });
        }
        hwm = hwm.max(depth);
        let mut done = match L::take_spare(scratch) {
            Some(b) => b,
            None => L::alloc(suite),
        };
        L::terminal(sem, table, suite, &mut done);
        // fold completed subtrees upward
        loop {
            match frames.last_mut() {
                None => {
                    result = Some(done);
                    break;
                }
                Some(f) if f.first.is_none() => {
                    f.first = Some(done);
                    break;
                }
                Some(_) => {
                    let f = frames.pop().unwrap();
                    let mut a = f.first.unwrap();
                    L::apply(f.sem, &mut a, &done, suite);
                    L::give_spare(scratch, done);
                    done = a;
                }
            }
        }
    }

    scratch.hwm = hwm;
    result.ok_or_else(|| {
        Error::MalformedGenome(format!("tree truncated: {} open frames at end", frames.len()))
    })
}

/// Outcome of a full evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOutcome {
    pub fitness: f64,
    /// opcode * case evaluations performed
    pub executed_ops: u64,
}

/// Evaluate a complete tree over the whole suite and score it. Every node
/// runs on every case, so `executed_ops = ops.len() * n_cases`.
pub fn eval_tree(
    table: &OpcodeTable,
    suite: &TestSuite,
    ops: &[u8],
    max_depth: usize,
    scratch: &mut EvalScratch,
) -> Result<EvalOutcome> {
    let fitness = match suite.mode() {
        crate::ops::LaneMode::Numeric => {
            let root = eval_subtree::<NumericLane>(table, suite, ops, max_depth, scratch)?;
            let f = NumericLane::fitness(&root, suite);
            NumericLane::give_spare(scratch, root);
            f
        }
        crate::ops::LaneMode::Packed => {
            let root = eval_subtree::<PackedLane>(table, suite, ops, max_depth, scratch)?;
            let f = PackedLane::fitness(&root, suite);
            PackedLane::give_spare(scratch, root);
            f
        }
    };
    Ok(EvalOutcome { fitness, executed_ops: (ops.len() * suite.n_cases) as u64 })
}

/// Evaluate a tree and return its raw root lanes (oracle and test surface).
pub fn eval_lanes(
    table: &OpcodeTable,
    suite: &TestSuite,
    ops: &[u8],
    max_depth: usize,
) -> Result<Lanes> {
    let mut scratch = EvalScratch::new();
    Ok(match suite.mode() {
        crate::ops::LaneMode::Numeric => Lanes::Numeric(eval_subtree::<NumericLane>(
            table, suite, ops, max_depth, &mut scratch,
        )?),
        crate::ops::LaneMode::Packed => Lanes::Packed(eval_subtree::<PackedLane>(
            table, suite, ops, max_depth, &mut scratch,
        )?),
    })
}

/// Perfect score for a suite, if one exists: packed suites max out at one hit
/// per case; numeric error has no finite floor worth naming, so `None`.
pub fn perfect_fitness(suite: &TestSuite) -> Option<f64> {
    match suite.mode() {
        crate::ops::LaneMode::Numeric => None,
        crate::ops::LaneMode::Packed => Some(suite.n_cases as f64),
    }
}

/// Ordering direction for a suite's fitness values.
pub fn fitness_order(suite: &TestSuite) -> FitnessOrder {
    match suite.mode() {
        crate::ops::LaneMode::Numeric => FitnessOrder::Minimize,
        crate::ops::LaneMode::Packed => FitnessOrder::Maximize,
    }
}
