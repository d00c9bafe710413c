//! Selection, planning, splicing and scheduling contracts.

mod common;

use flatgp::breed::{
    complete_plan, draw_selection, splice_copy, splice_in_place, tournament, BirthQueues,
    BreedParams, PopView,
};
use flatgp::ops::{FitnessOrder, OpcodeTable};
use flatgp::pool::{BufferPool, FragmentStore};
use flatgp::tree::{random_tree, subtree_extent, validate, GrowMethod, StructureParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reg_table() -> OpcodeTable {
    OpcodeTable::regression(&["x"], vec![0.5, -0.25, 1.0, 2.0, -1.0])
}

/// A size-1 tournament ranks nothing, so the winner must be uniform.
#[test]
fn single_contestant_tournament_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let m = 40usize;
    let fitness: Vec<f64> = (0..m).map(|i| i as f64).collect();
    let draws = 100_000usize;
    let mut counts = vec![0u64; m];
    for _ in 0..draws {
        counts[tournament(&mut rng, &fitness, FitnessOrder::Minimize, 1)] += 1;
    }
    let expect = draws as f64 / m as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    let crit = common::chi2_critical(m as f64 - 1.0, 2.3263);
    assert!(stat < crit, "chi2 {stat:.1} over critical {crit:.1}");
}

/// With k = M the best citizen wins whenever it is drawn at all, so its win
/// rate is at least 1 - (1 - 1/M)^M.
#[test]
fn full_size_tournament_meets_the_win_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let m = 40usize;
    let fitness: Vec<f64> = (0..m).map(|i| i as f64).collect();
    let draws = 20_000usize;
    let wins = (0..draws)
        .filter(|_| tournament(&mut rng, &fitness, FitnessOrder::Minimize, m) == 0)
        .count();
    let rate = wins as f64 / draws as f64;
    let bound = 1.0 - (1.0 - 1.0 / m as f64).powi(m as i32);
    // three sigmas of Monte Carlo slack below the analytic bound
    let slack = 3.0 * (bound * (1.0 - bound) / draws as f64).sqrt();
    assert!(rate >= bound - slack, "win rate {rate:.4} under bound {bound:.4}");
}

/// When every fitness ties, the tie-break must make selection uniform over
/// the whole population.
#[test]
fn all_tied_tournament_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let m = 40usize;
    let fitness = vec![2.5f64; m];
    let draws = 100_000usize;
    let mut counts = vec![0u64; m];
    for _ in 0..draws {
        counts[tournament(&mut rng, &fitness, FitnessOrder::Minimize, 7)] += 1;
    }
    let expect = draws as f64 / m as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    let crit = common::chi2_critical(m as f64 - 1.0, 2.3263);
    assert!(stat < crit, "chi2 {stat:.1} over critical {crit:.1}");
}

#[test]
fn tournaments_never_pick_a_beatable_winner() {
    // with distinct fitness the winner must be the best contestant drawn, so
    // enlarging k can only improve the expected winner; spot-check the
    // extreme: k much larger than M almost surely sees the global best
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let fitness: Vec<f64> = (0..50).map(|i| (i as f64) * 0.25 + 1.0).collect();
    for _ in 0..200 {
        assert_eq!(tournament(&mut rng, &fitness, FitnessOrder::Minimize, 512), 0);
        assert_eq!(tournament(&mut rng, &fitness, FitnessOrder::Maximize, 512), 49);
    }
}

#[test]
fn elite_slot_pairs_the_best_with_itself() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let fitness = vec![4.0, 2.0, 2.0, 7.0];
    let bp = BreedParams::default();
    let sel = draw_selection(&mut rng, &fitness, FitnessOrder::Minimize, &bp, true);
    // ties break toward the first index
    assert_eq!(sel.slots[0].mother, 1);
    assert_eq!(sel.slots[0].father, 1);
    assert!(sel.slots[0].crossover);
    assert!(sel.elite);
    assert_eq!(sel.slots.len(), fitness.len());
    assert!(sel.parent_flags(4)[1]);
}

/// Plans drawn from a real materialized population satisfy every contract:
/// sites in range, extents true, children within the size cap, fragments
/// arity-consistent, and the spliced child a valid tree.
#[test]
fn completed_plans_satisfy_structural_contracts() {
    let table = reg_table();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let m = 60usize;
    let max_size = 90usize;
    let structure = StructureParams::new(max_size, (2, 5));
    let pool = BufferPool::new(m + 2, max_size);

    let mut slots: Vec<Option<u32>> = Vec::new();
    let mut lens: Vec<u32> = Vec::new();
    let mut handles = Vec::new();
    for i in 0..m {
        let ops = random_tree(&mut rng, &table, GrowMethod::Grow, 2 + i % 5, max_size).unwrap();
        let h = pool.acquire().unwrap();
        pool.buf_mut(&h).unwrap()[..ops.len()].copy_from_slice(&ops);
        slots.push(Some(h.slot()));
        lens.push(ops.len() as u32);
        handles.push(h);
    }
    let fitness: Vec<f64> = (0..m).map(|i| (i * 37 % 101) as f64).collect();

    let bp = BreedParams { xo_rate: 0.7, ..BreedParams::default() };
    for fatherless in [false, true] {
        let view = PopView::new(&pool, &slots, &lens);
        let mut sel_rng = ChaCha8Rng::seed_from_u64(45);
        let sel = draw_selection(&mut sel_rng, &fitness, FitnessOrder::Minimize, &bp, false);
        let mut store = FragmentStore::new(m);
        let plan = complete_plan(
            &mut sel_rng, &sel, &view, &table, &structure, &bp, fatherless, &mut store,
        )
        .unwrap();

        assert_eq!(plan.children.len(), m);
        let mut dst = vec![0u8; max_size];
        for (slot, p) in plan.children.iter().enumerate() {
            let mg = view.genome(p.mother);
            let mlen = mg.len();
            assert!((p.site as usize) < mlen);
            assert_eq!(
                subtree_extent(&table, &mg, p.site as usize).unwrap(),
                p.excised as usize
            );
            assert_eq!(p.child_len as usize, mlen - p.excised as usize + p.frag_len as usize);
            assert!(p.child_len as usize <= max_size);
            assert_eq!(p.father.is_some(), sel.slots[slot].crossover);

            let frag: Vec<u8> = match store.get(slot) {
                Some(f) => f.to_vec(),
                None => {
                    let f = p.father.expect("heapless fragments only on crossover slots");
                    let fg = view.genome(f);
                    let flatgp::breed::FragmentSrc::Father { site, len } = p.frag_src else {
                        panic!("missing fragment for slot {slot}")
                    };
                    fg[site as usize..(site + len) as usize].to_vec()
                }
            };
            assert_eq!(frag.len(), p.frag_len as usize);
            validate(&table, &frag).unwrap();

            let n = splice_copy(&mut dst, &mg, p.site as usize, p.excised as usize, &frag);
            assert_eq!(n, p.child_len as usize);
            validate(&table, &dst[..n]).unwrap();
        }
        // fatherless planning must leave no fragment inside a father buffer
        if fatherless {
            for p in &plan.children {
                assert!(matches!(p.frag_src, flatgp::breed::FragmentSrc::Heap));
            }
        }
    }

    for h in handles {
        pool.release(h).unwrap();
    }
}

#[test]
fn planning_is_a_pure_function_of_the_seed() {
    let table = reg_table();
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let m = 30usize;
    let structure = StructureParams::new(80, (2, 4));
    let pool = BufferPool::new(m, 80);
    let mut slots = Vec::new();
    let mut lens = Vec::new();
    for i in 0..m {
        let ops = random_tree(&mut rng, &table, GrowMethod::Grow, 2 + i % 3, 80).unwrap();
        let h = pool.acquire().unwrap();
        pool.buf_mut(&h).unwrap()[..ops.len()].copy_from_slice(&ops);
        slots.push(Some(h.slot()));
        lens.push(ops.len() as u32);
    }
    let fitness: Vec<f64> = (0..m).map(|i| ((i * 13) % 29) as f64).collect();
    let view = PopView::new(&pool, &slots, &lens);
    let bp = BreedParams::default();

    let draw = |seed: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let sel = draw_selection(&mut r, &fitness, FitnessOrder::Minimize, &bp, false);
        let mut store = FragmentStore::new(m);
        let plan = complete_plan(
            &mut r,
            &sel,
            &view,
            &table,
            &StructureParams::new(80, (2, 4)),
            &bp,
            true,
            &mut store,
        )
        .unwrap();
        (sel, plan)
    };
    let _ = structure;
    let (sel_a, plan_a) = draw(7);
    let (sel_b, plan_b) = draw(7);
    assert_eq!(sel_a, sel_b);
    assert_eq!(plan_a, plan_b);
    let (_, plan_c) = draw(8);
    assert_ne!(plan_a, plan_c);
}

#[test]
fn splices_agree_on_random_replacements() {
    let table = reg_table();
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let mut copied = vec![0u8; 2048];
    let mut in_place = vec![0u8; 2048];
    for _ in 0..10_000 {
        let mother = random_tree(&mut rng, &table, GrowMethod::Grow, 6, 1024).unwrap();
        let site = rng.gen_range(0..mother.len());
        let excised = subtree_extent(&table, &mother, site).unwrap();
        let depth = 1 + rng.gen_range(0..5);
        let frag = random_tree(&mut rng, &table, GrowMethod::Grow, depth, 1024).unwrap();
        let n1 = splice_copy(&mut copied, &mother, site, excised, &frag);
        in_place[..mother.len()].copy_from_slice(&mother);
        let n2 = splice_in_place(&mut in_place, mother.len(), site, excised, &frag);
        assert_eq!(n1, n2);
        assert_eq!(&copied[..n1], &in_place[..n2]);
        validate(&table, &copied[..n1]).unwrap();
        // the mother prefix and tail survive verbatim around the fragment
        assert_eq!(&copied[..site], &mother[..site]);
        assert_eq!(&copied[site..site + frag.len()], &frag[..]);
        assert_eq!(&copied[site + frag.len()..n1], &mother[site + excised..]);
    }
}

#[test]
fn birth_queues_dispatch_each_child_once_fewest_pending_first() {
    let mut rng = ChaCha8Rng::seed_from_u64(48);
    for _ in 0..200 {
        let mothers = 1 + rng.gen_range(0..12) as u32;
        let children: Vec<(u32, u32)> =
            (0..rng.gen_range(1..40u32)).map(|c| (rng.gen_range(0..mothers), c)).collect();
        let mut pending = vec![0u32; mothers as usize];
        for &(m, _) in &children {
            pending[m as usize] += 1;
        }
        let mut q = BirthQueues::build(mothers as usize, children.iter().copied());
        let mut seen = vec![false; children.len()];
        while let Some(b) = q.next_task() {
            // the dispatched mother is among those with the fewest pending
            let min_pending = pending.iter().filter(|&&p| p > 0).min().copied().unwrap();
            assert_eq!(pending[b.mother as usize], min_pending);
            pending[b.mother as usize] -= 1;
            assert_eq!(b.remaining, pending[b.mother as usize]);
            assert!(!seen[b.child as usize], "child {} dispatched twice", b.child);
            seen[b.child as usize] = true;
            // a mother's children leave in slot order
            assert_eq!(children[b.child as usize].0, b.mother);
        }
        assert!(seen.iter().all(|&s| s));
        assert!(q.is_empty());
    }
}
