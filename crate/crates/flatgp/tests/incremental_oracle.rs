//! Recipe-based child scoring must agree exactly with materializing the
//! child and evaluating it from scratch, for every replacement shape.

mod common;

use flatgp::breed::splice_copy;
use flatgp::eval::{eval_tree, EvalScratch};
use flatgp::incremental::{ancestors_of, eval_incremental};
use flatgp::ops::OpcodeTable;
use flatgp::suite::TestSuite;
use flatgp::tree::{random_tree, subtree_extent, validate, GrowMethod};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAX_DEPTH: usize = 8192;

struct Sample {
    mother: Vec<u8>,
    site: usize,
    excised: usize,
    fragment: Vec<u8>,
}

fn random_child(rng: &mut ChaCha8Rng, table: &OpcodeTable) -> Sample {
    let mdepth = 3 + rng.gen_range(0..5);
    let mother = random_tree(rng, table, GrowMethod::Grow, mdepth, 4000).unwrap();
    let site = rng.gen_range(0..mother.len());
    let excised = subtree_extent(table, &mother, site).unwrap();
    // half the fragments are fresh subtrees, half come out of another tree,
    // the way crossover donates them
    let fragment = if rng.gen_bool(0.5) {
        let depth = 1 + rng.gen_range(0..4);
        random_tree(rng, table, GrowMethod::Grow, depth, 4000).unwrap()
    } else {
        let fdepth = 3 + rng.gen_range(0..4);
        let father = random_tree(rng, table, GrowMethod::Grow, fdepth, 4000).unwrap();
        let fsite = rng.gen_range(0..father.len());
        let fext = subtree_extent(table, &father, fsite).unwrap();
        father[fsite..fsite + fext].to_vec()
    };
    Sample { mother, site, excised, fragment }
}

fn check_problem(table: &OpcodeTable, suite: &TestSuite, seed: u64, rounds: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scratch = EvalScratch::new();
    let mut buf = vec![0u8; 16384];
    let mut inherited = 0usize;
    for i in 0..rounds {
        let s = random_child(&mut rng, table);
        let mother_fitness =
            eval_tree(table, suite, &s.mother, MAX_DEPTH, &mut scratch).unwrap().fitness;
        let out = eval_incremental(
            table,
            suite,
            &s.mother,
            s.site,
            s.excised,
            &s.fragment,
            mother_fitness,
            MAX_DEPTH,
            &mut scratch,
        )
        .unwrap();

        let n = splice_copy(&mut buf, &s.mother, s.site, s.excised, &s.fragment);
        validate(table, &buf[..n]).unwrap();
        let full = eval_tree(table, suite, &buf[..n], MAX_DEPTH, &mut scratch).unwrap();
        assert_eq!(
            out.fitness, full.fitness,
            "sample {i}: site {} excised {} frag {}",
            s.site, s.excised, s.fragment.len()
        );

        if out.inherited {
            inherited += 1;
            assert_eq!(out.fitness, mother_fitness);
            assert!(!out.trace.reached_root);
            assert_eq!(out.trace.levels.last().unwrap().disrupted, 0);
        } else {
            assert!(out.trace.reached_root);
            assert!(out.trace.levels.iter().all(|l| l.disrupted > 0));
        }
        // the disrupted-case count can only shrink while climbing
        for w in out.trace.levels.windows(2) {
            assert!(w[1].disrupted <= w[0].disrupted);
        }
        // a climb covers at most every ancestor of the site
        let max_levels = 1 + ancestors_of(table, &s.mother, s.site).unwrap().len();
        assert!(out.trace.levels.len() <= max_levels);
    }
    // random subtrees do collide sometimes; an equivalence suite where they
    // never did would not be exercising the inherit path
    assert!(inherited > rounds / 100, "only {inherited} of {rounds} inherited");
}

#[test]
fn numeric_children_score_like_their_materialized_tree() {
    let table = OpcodeTable::regression(&["x"], vec![0.5, -0.25, 1.0, 2.0, -1.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let suite = TestSuite::sextic(&mut rng, 48).unwrap();
    check_problem(&table, &suite, 32, 6000);
}

#[test]
fn packed_children_score_like_their_materialized_tree() {
    let table = OpcodeTable::boolean_mux6();
    let suite = TestSuite::mux6();
    check_problem(&table, &suite, 33, 6000);
}

#[test]
fn ancestor_chain_matches_extent_oracle() {
    let table = OpcodeTable::regression(&["x"], vec![0.5, -0.25, 1.0, 2.0, -1.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..500 {
        let ops = random_tree(&mut rng, &table, GrowMethod::Grow, 6, 4000).unwrap();
        let site = rng.gen_range(0..ops.len());
        // an ancestor is any earlier node whose subtree spans the site;
        // later starts sit deeper in the tree
        let mut expect: Vec<(usize, u8)> = (0..site)
            .filter(|&a| a + subtree_extent(&table, &ops, a).unwrap() > site)
            .map(|a| {
                let first_end = a + 1 + subtree_extent(&table, &ops, a + 1).unwrap();
                (a, u8::from(site >= first_end))
            })
            .collect();
        expect.sort_by(|x, y| y.0.cmp(&x.0));
        assert_eq!(ancestors_of(&table, &ops, site).unwrap(), expect);
    }
}
