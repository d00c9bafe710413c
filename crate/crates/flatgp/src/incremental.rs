//! Incremental child evaluation.
//!
//! A child is a mother tree with one subtree replaced, so its outputs can
//! only differ from the mother's where the replacement's effect survives the
//! climb to the root. This module evaluates the inserted fragment and the
//! excised subtree over all cases, then walks the site's ancestor chain from
//! the innermost node outward. At each level it evaluates the untouched
//! sibling once, combines it with both the old and new running outputs, and
//! compares them lane by lane. The moment every case agrees the child is
//! known to score exactly like a tree that produces the mother's outputs at
//! that node, and since everything above is shared, the climb stops. If the
//! replacement was invisible at the site itself the child simply inherits
//! the mother's fitness.
//!
//! Lane comparison uses plain f64 equality. NaN compares unequal to itself,
//! which errs toward climbing further, never toward a wrong inherit.
//!
//! `executed_ops` counts every lane operation actually performed: the
//! fragment, the excised subtree, each sibling once, and two combining nodes
//! per level climbed (old side and new side), all multiplied by the case
//! count. An invisible replacement therefore costs fragment plus excised,
//! and a climb that reaches the root costs a little more than evaluating the
//! child from scratch; the saving comes entirely from climbs that stop
//! early, which converged populations make overwhelmingly common.

use crate::error::{Error, Result};
use crate::eval::{eval_subtree, EvalScratch, Lane, NumericLane, PackedLane};
use crate::ops::{LaneMode, OpcodeTable};
use crate::suite::TestSuite;
use crate::tree::subtree_extent;

/// One step of the climb: how many cases still differ after combining at
/// this level, and the rms magnitude of those differences (1.0 per differing
/// case in packed mode). Level 0 compares the fragment against the excised
/// subtree at the site itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisruptionLevel {
    pub disrupted: usize,
    pub rms: f64,
}

/// Per-child record of how far a replacement's effect propagated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DisruptionTrace {
    pub levels: Vec<DisruptionLevel>,
    /// true when the climb consumed every ancestor and scored the child at
    /// the root; false when some level converged and the mother's fitness
    /// was inherited
    pub reached_root: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalOutcome {
    pub fitness: f64,
    /// child scored identically to its mother and inherited her fitness
    pub inherited: bool,
    /// opcode * case evaluations spent scoring the child, comparison
    /// stream included
    pub executed_ops: u64,
    pub trace: DisruptionTrace,
}

/// Ancestors of `site`, innermost first, each with the argument position
/// (0 or 1) through which the path to `site` descends.
///
/// A forward scan keeps a stack of open function nodes with their remaining
/// argument counts; when the scan reaches `site` the stack is exactly the
/// ancestor chain.
pub fn ancestors_of(table: &OpcodeTable, ops: &[u8], site: usize) -> Result<Vec<(usize, u8)>> {
    if site >= ops.len() {
        return Err(Error::Bounds { index: site, len: ops.len() });
    }
    let mut open: Vec<(usize, u8, u8)> = Vec::new(); // (index, arity, args remaining)
    for (i, &op) in ops.iter().enumerate() {
        if i == site {
            let mut chain: Vec<(usize, u8)> = open
                .iter()
                .map(|&(idx, arity, remaining)| (idx, arity - remaining))
                .collect();
            chain.reverse();
            return Ok(chain);
        }
        if !table.contains(op) {
            return Err(Error::MalformedGenome(format!("unknown opcode {op:#04x} at {i}")));
        }
        let arity = table.arity(op);
        if arity > 0 {
            open.push((i, arity, arity));
        } else {
            // a completed subtree consumes one pending argument above it,
            // cascading when it was the last
            loop {
                match open.last_mut() {
                    None => break,
                    Some(top) => {
                        top.2 -= 1;
                        if top.2 == 0 {
                            open.pop();
                        } else {
                            break;
                        }
                    }
                }
            }
        }
    }
    unreachable!("site bounds checked above");
}

struct Climb<'a> {
    table: &'a OpcodeTable,
    suite: &'a TestSuite,
    mother: &'a [u8],
    site: usize,
    old_extent: usize,
    fragment: &'a [u8],
    mother_fitness: f64,
    max_depth: usize,
}

fn climb<L: Lane>(c: Climb<'_>, scratch: &mut EvalScratch) -> Result<IncrementalOutcome> {
    let n = c.suite.n_cases as u64;
    let mut executed = (c.fragment.len() + c.old_extent) as u64 * n;
    let mut trace = DisruptionTrace::default();

    let mut new_out = eval_subtree::<L>(c.table, c.suite, c.fragment, c.max_depth, scratch)?;
    let mut old_out = eval_subtree::<L>(
        c.table,
        c.suite,
        &c.mother[c.site..c.site + c.old_extent],
        c.max_depth,
        scratch,
    )?;

    let (mut disrupted, mut rms) = L::disruption(&new_out, &old_out, c.suite);
    trace.levels.push(DisruptionLevel { disrupted, rms });

    if disrupted > 0 {
        let chain = ancestors_of(c.table, c.mother, c.site)?;
        let mut path_start = c.site;
        let mut path_extent = c.old_extent;
        for (anc, arg) in chain {
            let (sib_start, sib_extent) = if arg == 1 {
                (anc + 1, path_start - (anc + 1))
            } else {
                let s = path_start + path_extent;
                (s, subtree_extent(c.table, c.mother, s)?)
            };
            let sib = eval_subtree::<L>(
                c.table,
                c.suite,
                &c.mother[sib_start..sib_start + sib_extent],
                c.max_depth,
                scratch,
            )?;
            executed += (sib_extent as u64 + 2) * n;

            let sem = c.table.semantics(c.mother[anc]);
            if arg == 0 {
                L::apply(sem, &mut new_out, &sib, c.suite);
                L::apply(sem, &mut old_out, &sib, c.suite);
                L::give_spare(scratch, sib);
            } else {
                let mut new_a = sib.clone();
                let mut old_a = sib;
                L::apply(sem, &mut new_a, &new_out, c.suite);
                L::apply(sem, &mut old_a, &old_out, c.suite);
                L::give_spare(scratch, std::mem::replace(&mut new_out, new_a));
                L::give_spare(scratch, std::mem::replace(&mut old_out, old_a));
            }

            let d = L::disruption(&new_out, &old_out, c.suite);
            disrupted = d.0;
            rms = d.1;
            trace.levels.push(DisruptionLevel { disrupted, rms });
            path_start = anc;
            path_extent = 1 + path_extent + sib_extent;
            if disrupted == 0 {
                break;
            }
        }
        if disrupted > 0 {
            // climbed past the root: new_out is the child's root output
            debug_assert_eq!(path_start, 0);
            debug_assert_eq!(path_extent, c.mother.len());
            let fitness = L::fitness(&new_out, c.suite);
            L::give_spare(scratch, new_out);
            L::give_spare(scratch, old_out);
            trace.reached_root = true;
            return Ok(IncrementalOutcome { fitness, inherited: false, executed_ops: executed, trace });
        }
    }

    L::give_spare(scratch, new_out);
    L::give_spare(scratch, old_out);
    Ok(IncrementalOutcome {
        fitness: c.mother_fitness,
        inherited: true,
        executed_ops: executed,
        trace,
    })
}

/// Score the child defined by replacing `mother[site .. site+old_extent]`
/// with `fragment`, without materializing its bytes.
#[allow(clippy::too_many_arguments)]
pub fn eval_incremental(
    table: &OpcodeTable,
    suite: &TestSuite,
    mother: &[u8],
    site: usize,
    old_extent: usize,
    fragment: &[u8],
    mother_fitness: f64,
    max_depth: usize,
    scratch: &mut EvalScratch,
) -> Result<IncrementalOutcome> {
    debug_assert_eq!(subtree_extent(table, mother, site)?, old_extent);
    let c = Climb {
        table,
        suite,
        mother,
        site,
        old_extent,
        fragment,
        mother_fitness,
        max_depth,
    };
    match suite.mode() {
        LaneMode::Numeric => climb::<NumericLane>(c, scratch),
        LaneMode::Packed => climb::<PackedLane>(c, scratch),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::OpcodeTable;
    use crate::suite::{SuiteData, TestSuite};

    fn reg_table() -> OpcodeTable {
        OpcodeTable::regression(&["x"], vec![0.5, -0.25, 1.0, 2.0, -1.0])
    }

    fn toy_suite(xs: Vec<f64>) -> TestSuite {
        let targets = xs.iter().map(|x| x + 1.0).collect();
        TestSuite {
            n_cases: xs.len(),
            var_names: vec!["x".into()],
            data: SuiteData::Numeric { vars: vec![xs], targets },
        }
    }

    #[test]
    fn ancestor_chain_matches_hand_walk() {
        let t = reg_table();
        let add = t.parse_name("ADD").unwrap();
        let mul = t.parse_name("MUL").unwrap();
        let x = t.parse_name("x").unwrap();
        // ADD x MUL x x
        let ops = [add, x, mul, x, x];
        assert_eq!(ancestors_of(&t, &ops, 0).unwrap(), vec![]);
        assert_eq!(ancestors_of(&t, &ops, 1).unwrap(), vec![(0, 0)]);
        assert_eq!(ancestors_of(&t, &ops, 2).unwrap(), vec![(0, 1)]);
        assert_eq!(ancestors_of(&t, &ops, 3).unwrap(), vec![(2, 0), (0, 1)]);
        assert_eq!(ancestors_of(&t, &ops, 4).unwrap(), vec![(2, 1), (0, 1)]);
        assert!(ancestors_of(&t, &ops, 5).is_err());
    }

    #[test]
    fn identical_fragment_inherits_at_level_zero() {
        let t = reg_table();
        let s = toy_suite(vec![0.25, -0.75, 0.5]);
        let add = t.parse_name("ADD").unwrap();
        let x = t.parse_name("x").unwrap();
        let mother = [add, x, x];
        let out = eval_incremental(&t, &s, &mother, 1, 1, &[x], 123.5, 64, &mut EvalScratch::new())
            .unwrap();
        assert!(out.inherited);
        assert_eq!(out.fitness, 123.5);
        assert_eq!(out.trace.levels, vec![DisruptionLevel { disrupted: 0, rms: 0.0 }]);
        assert!(!out.trace.reached_root);
        assert_eq!(out.executed_ops, 6); // fragment + excised: 2 nodes * 3 cases
    }

    #[test]
    fn root_replacement_scores_fragment_directly() {
        let t = reg_table();
        let s = toy_suite(vec![0.25, -0.75]);
        let add = t.parse_name("ADD").unwrap();
        let x = t.parse_name("x").unwrap();
        let c2 = t.parse_name("C2").unwrap(); // 1.0
        let mother = [add, x, x];
        // replace whole tree with ADD x C2 = x + 1 = target exactly
        let out = eval_incremental(
            &t, &s, &mother, 0, 3, &[add, x, c2], 55.0, 64, &mut EvalScratch::new(),
        )
        .unwrap();
        assert!(!out.inherited);
        assert!(out.trace.reached_root);
        assert_eq!(out.fitness, 0.0);
        // fragment (3) + excised whole mother (3), 2 cases
        assert_eq!(out.executed_ops, 12);
        assert_eq!(out.trace.levels.len(), 1);
    }

    #[test]
    fn masked_replacement_inherits_after_one_level() {
        let t = reg_table();
        let s = toy_suite(vec![0.5, -1.0, 0.125]);
        let mul = t.parse_name("MUL").unwrap();
        let sub = t.parse_name("SUB").unwrap();
        let x = t.parse_name("x").unwrap();
        let c2 = t.parse_name("C2").unwrap(); // 1.0
        // mother: MUL (SUB x x) C2  -> always 0
        let mother = [mul, sub, x, x, c2];
        // replace C2 (site 4, extent 1) with x: MUL (SUB x x) x is still 0
        // everywhere, but the site outputs differ, so one climb is needed.
        let out =
            eval_incremental(&t, &s, &mother, 4, 1, &[x], 7.25, 64, &mut EvalScratch::new())
                .unwrap();
        assert!(out.inherited);
        assert_eq!(out.fitness, 7.25);
        assert_eq!(out.trace.levels.len(), 2);
        assert!(out.trace.levels[0].disrupted > 0);
        assert_eq!(out.trace.levels[1].disrupted, 0);
        // fragment (1) + excised (1) + sibling SUB x x (3) + two combines
        // = 7 nodes * 3 cases
        assert_eq!(out.executed_ops, 21);
    }

    #[test]
    fn full_climb_costs_child_plus_comparison_stream() {
        let t = reg_table();
        let s = toy_suite(vec![0.5, -1.0, 0.25, 0.75]);
        let add = t.parse_name("ADD").unwrap();
        let mul = t.parse_name("MUL").unwrap();
        let x = t.parse_name("x").unwrap();
        let c3 = t.parse_name("C3").unwrap(); // 2.0
        // mother: ADD x MUL x x; replace site 3 (x) with C3
        let mother = [add, x, mul, x, x];
        let out =
            eval_incremental(&t, &s, &mother, 3, 1, &[c3], 1.0, 64, &mut EvalScratch::new())
                .unwrap();
        assert!(!out.inherited);
        assert!(out.trace.reached_root);
        // fragment (1) + excised (1) + two levels of sibling x plus two
        // combines (3 each) = 8 nodes * 4 cases
        assert_eq!(out.executed_ops, 32);
        assert_eq!(out.trace.levels.len(), 3);
        // disrupted case counts never grow on the way up
        for w in out.trace.levels.windows(2) {
            assert!(w[1].disrupted <= w[0].disrupted);
        }
    }

    #[test]
    fn packed_inherit_on_equal_words() {
        let t = OpcodeTable::boolean_mux6();
        let s = TestSuite::mux6();
        let and = t.parse_name("AND").unwrap();
        let or = t.parse_name("OR").unwrap();
        let a0 = t.parse_name("A0").unwrap();
        // mother: AND A0 A0; replace site 1 with OR A0 A0 (same outputs)
        let mother = [and, a0, a0];
        let out = eval_incremental(
            &t, &s, &mother, 1, 1, &[or, a0, a0], 40.0, 64, &mut EvalScratch::new(),
        )
        .unwrap();
        assert!(out.inherited);
        assert_eq!(out.fitness, 40.0);
        assert_eq!(out.trace.levels[0].disrupted, 0);
    }
}
