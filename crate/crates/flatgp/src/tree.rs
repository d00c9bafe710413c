//! Flattened prefix-order trees.
//!
//! A tree is a `&[u8]` of opcodes in depth-first prefix order. Subtrees are
//! contiguous runs, so extraction and splicing are plain byte copies. Buffers
//! may hold junk past the genome length; nothing here reads past `ops.len()`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ops::{Opcode, OpcodeTable};

/// Size and depth limits shared by construction and breeding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructureParams {
    /// Hard cap on genome length; also the buffer size in the pool.
    pub max_tree_size: usize,
    /// Ramped initialization depth range, inclusive.
    pub init_depth: (usize, usize),
    /// Upper bound used to size evaluation stacks. Depth never exceeds
    /// tree length, so the tree size cap is a safe estimate.
    pub max_depth_estimate: usize,
}

impl StructureParams {
    pub fn new(max_tree_size: usize, init_depth: (usize, usize)) -> Self {
        StructureParams {
            max_tree_size,
            init_depth,
            max_depth_estimate: max_tree_size,
        }
    }
}

/// Check the arity-consistency invariant: starting from one needed token,
/// each node consumes one and adds its arity; the count must reach zero
/// exactly at the end of the genome.
pub fn validate(table: &OpcodeTable, ops: &[u8]) -> Result<()> {
    if ops.is_empty() {
        return Err(Error::MalformedGenome("empty genome".into()));
    }
    let mut need: usize = 1;
    for (i, &op) in ops.iter().enumerate() {
        if need == 0 {
            return Err(Error::MalformedGenome(format!(
                "tree complete at node {i} but {} bytes remain",
                ops.len() - i
            )));
        }
        if !table.contains(op) {
            return Err(Error::MalformedGenome(format!("unknown opcode {op} at {i}")));
        }
        need = need - 1 + table.arity(op) as usize;
    }
    if need != 0 {
        return Err(Error::MalformedGenome(format!("{need} subtrees missing at end of genome")));
    }
    Ok(())
}

/// Length of the subtree rooted at `index`. Linear scan: the subtree ends
/// where the needed-token count returns to zero.
pub fn subtree_extent(table: &OpcodeTable, ops: &[u8], index: usize) -> Result<usize> {
    if index >= ops.len() {
        return Err(Error::Bounds { index, len: ops.len() });
    }
    let mut need: usize = 1;
    let mut j = index;
    while need > 0 {
        if j >= ops.len() {
            return Err(Error::MalformedGenome(format!("subtree at {index} runs past genome end")));
        }
        need = need - 1 + table.arity(ops[j]) as usize;
        j += 1;
    }
    Ok(j - index)
}

/// Height of the tree: a lone terminal has depth 1.
pub fn tree_depth(table: &OpcodeTable, ops: &[u8]) -> usize {
    // stack holds the pending-argument count of each open function node,
    // so its length is the nesting depth of the node being visited
    let mut stack: Vec<u8> = Vec::new();
    let mut max_depth = 0;
    for &op in ops {
        let depth = stack.len() + 1;
        if depth > max_depth {
            max_depth = depth;
        }
        let arity = table.arity(op);
        if arity > 0 {
            stack.push(arity);
        } else {
            // a completed subtree closes enclosing nodes whose last
            // argument it was
            while let Some(top) = stack.last_mut() {
                *top -= 1;
                if *top == 0 {
                    stack.pop();
                } else {
                    break;
                }
            }
        }
    }
    max_depth
}

/// Tree construction method for one ramped-half-and-half individual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowMethod {
    /// Every branch reaches exactly the target depth.
    Full,
    /// Node kinds are drawn uniformly from the whole table, so branches may
    /// stop early; depth is an upper bound.
    Grow,
}

fn random_tree_into(
    rng: &mut impl Rng,
    table: &OpcodeTable,
    method: GrowMethod,
    depth: usize,
    out: &mut Vec<u8>,
) {
    let op: Opcode = if depth <= 1 {
        table.terminals()[rng.gen_range(0..table.terminals().len())]
    } else {
        match method {
            GrowMethod::Full => table.functions()[rng.gen_range(0..table.functions().len())],
            GrowMethod::Grow => {
                let pick = rng.gen_range(0..table.len());
                pick as Opcode
            }
        }
    };
    out.push(op);
    for _ in 0..table.arity(op) {
        random_tree_into(rng, table, method, depth - 1, out);
    }
}

/// One construction attempt with no size limit; the caller judges the fit.
/// Fragment growth needs this because its retry budget counts whole draws.
pub(crate) fn random_tree_once(
    rng: &mut impl Rng,
    table: &OpcodeTable,
    method: GrowMethod,
    depth: usize,
) -> Vec<u8> {
    debug_assert!(depth >= 1);
    let mut out = Vec::new();
    random_tree_into(rng, table, method, depth, &mut out);
    out
}

/// Build one random tree of at most `max_size` nodes. Oversized draws are
/// retried a bounded number of times, then construction fails.
pub fn random_tree(
    rng: &mut impl Rng,
    table: &OpcodeTable,
    method: GrowMethod,
    depth: usize,
    max_size: usize,
) -> Result<Vec<u8>> {
    if depth == 0 {
        return Err(Error::InitFailure("target depth must be at least 1".into()));
    }
    let mut out = Vec::new();
    for _ in 0..50 {
        out.clear();
        random_tree_into(rng, table, method, depth, &mut out);
        if out.len() <= max_size {
            return Ok(out);
        }
    }
    Err(Error::InitFailure(format!(
        "no tree of depth {depth} fit in {max_size} nodes after 50 tries"
    )))
}

/// Ramped half-and-half initialization: depths cycle over the configured
/// range, methods alternate full/grow.
pub fn ramped_population(
    rng: &mut impl Rng,
    table: &OpcodeTable,
    m: usize,
    params: &StructureParams,
) -> Result<Vec<Vec<u8>>> {
    let (lo, hi) = params.init_depth;
    if lo < 1 || hi < lo {
        return Err(Error::Config(format!("bad init depth range [{lo}, {hi}]")));
    }
    let span = hi - lo + 1;
    let mut pop = Vec::with_capacity(m);
    for i in 0..m {
        let depth = lo + (i / 2) % span;
        let method = if i % 2 == 0 { GrowMethod::Full } else { GrowMethod::Grow };
        pop.push(random_tree(rng, table, method, depth, params.max_tree_size)?);
    }
    Ok(pop)
}

/// Pick a crossover site with the standard 90/10 bias: with probability
/// `p_function` an internal node when one exists, otherwise a leaf.
/// A lone terminal is always site 0 and consumes no randomness.
pub fn pick_site(rng: &mut impl Rng, table: &OpcodeTable, ops: &[u8], p_function: f64) -> usize {
    if ops.len() == 1 {
        return 0;
    }
    let want_function = rng.gen::<f64>() < p_function;
    // roughly half the nodes of an arity-2 tree are functions, so rejection
    // sampling settles fast; fall back to an explicit scan if it does not
    for _ in 0..256 {
        let i = rng.gen_range(0..ops.len());
        if table.is_function(ops[i]) == want_function {
            return i;
        }
    }
    let matches: Vec<usize> = (0..ops.len())
        .filter(|&i| table.is_function(ops[i]) == want_function)
        .collect();
    if matches.is_empty() {
        return rng.gen_range(0..ops.len());
    }
    matches[rng.gen_range(0..matches.len())]
}

/// Pick a leaf site uniformly. Used when oversize redraws are exhausted.
pub fn pick_leaf_site(rng: &mut impl Rng, table: &OpcodeTable, ops: &[u8]) -> usize {
    if ops.len() == 1 {
        return 0;
    }
    for _ in 0..256 {
        let i = rng.gen_range(0..ops.len());
        if !table.is_function(ops[i]) {
            return i;
        }
    }
    let leaves: Vec<usize> = (0..ops.len()).filter(|&i| !table.is_function(ops[i])).collect();
    leaves[rng.gen_range(0..leaves.len())]
}

/// Render a genome as space-separated opcode names in prefix order.
pub fn format_tree(table: &OpcodeTable, ops: &[u8]) -> String {
    let mut s = String::new();
    for (i, &op) in ops.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(table.name(op));
    }
    s
}

/// Parse the dump format back into bytes and validate the result.
pub fn parse_tree(table: &OpcodeTable, s: &str) -> Result<Vec<u8>> {
    let mut ops = Vec::new();
    for tok in s.split_whitespace() {
        ops.push(table.parse_name(tok)?);
    }
    validate(table, &ops)?;
    Ok(ops)
}
