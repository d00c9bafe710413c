//! Breeding: tournament selection, per-child plans, fragment handling,
//! splicing, birth queues, and the materialization schedule.
//!
//! All randomness is consumed on the master thread in a documented order, so
//! a run is a pure function of its seed. Per generation the passes are:
//!
//! 1. selection: for each child slot in order, an operator coin, then a
//!    mother tournament, then (crossover only) a father tournament;
//! 2. sites: for each child slot in order, crossover slots draw mother and
//!    father sites together (re-drawing both on oversize), mutation slots
//!    draw one mother site;
//! 3. fragments: for each mutation slot in order, a target depth and one
//!    grown tree per attempt.
//!
//! Fragment extraction (copying crossover fragments out of fathers) and the
//! materialization schedule consume no randomness.
//!
//! Materialization is likewise decided entirely on the master thread:
//! [`simulate_materialization`] walks the birth queues, performs every
//! acquire and release against the pool, and emits an ordered task list.
//! Worker threads then execute tasks in list order, but a task may only
//! touch buffers after its gate clears: each old citizen has a live-read
//! counter (how many not-yet-finished tasks read its buffer), and a task
//! that overwrites a buffer waits for the counter of that buffer's previous
//! owner to drop. Gates only ever wait on earlier tasks, so the schedule is
//! deadlock-free, and because the pool accounting happens in the simulation,
//! buffer statistics do not depend on the thread count.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;

use crate::error::Result;
use crate::ops::{FitnessOrder, OpcodeTable};
use crate::pool::{BufRead, BufferHandle, BufferPool, FragmentStore};
use crate::tree::{
    pick_leaf_site, pick_site, random_tree_once, subtree_extent, GrowMethod, StructureParams,
};

/// Breeding knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreedParams {
    pub tournament_k: usize,
    /// Probability a child slot breeds by crossover; the rest mutate.
    pub xo_rate: f64,
    /// Probability a site lands on a function node when the tree has one.
    pub p_site_function: f64,
    /// Inclusive depth range for mutation fragments.
    pub mutation_depth: (usize, usize),
    /// Oversize crossover re-draws before forcing leaf sites.
    pub site_retries: usize,
    /// Oversize fragment re-draws before falling back to a terminal.
    pub fragment_retries: usize,
}

impl Default for BreedParams {
    fn default() -> Self {
        BreedParams {
            tournament_k: 7,
            xo_rate: 0.9,
            p_site_function: 0.9,
            mutation_depth: (2, 4),
            site_retries: 8,
            fragment_retries: 8,
        }
    }
}

/// One tournament: `k` contestants drawn uniformly with replacement, best
/// fitness wins, exact ties settled by one extra uniform draw among the tied
/// contestant entries.
pub fn tournament(rng: &mut impl Rng, fitness: &[f64], order: FitnessOrder, k: usize) -> usize {
    debug_assert!(k >= 1 && !fitness.is_empty());
    let mut best = f64::NAN;
    let mut tied: Vec<usize> = Vec::new();
    for draw in 0..k {
        let i = rng.gen_range(0..fitness.len());
        let f = fitness[i];
        debug_assert!(!f.is_nan(), "fitness values are canonicalized before selection");
        if draw == 0 || order.better(f, best) {
            best = f;
            tied.clear();
            tied.push(i);
        } else if f == best {
            tied.push(i);
        }
    }
    if tied.len() == 1 {
        tied[0]
    } else {
        tied[rng.gen_range(0..tied.len())]
    }
}

/// Parent choice for one child slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotSelection {
    pub crossover: bool,
    pub mother: u32,
    /// Meaningful only when `crossover` is true.
    pub father: u32,
}

/// Operators and parents for a whole generation, one entry per child slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionDraw {
    pub slots: Vec<SlotSelection>,
    /// Slot 0 is a verbatim copy of its mother, the current best citizen.
    pub elite: bool,
}

impl SelectionDraw {
    /// Citizens that serve as a parent of any slot.
    pub fn parent_flags(&self, m: usize) -> Vec<bool> {
        let mut is_parent = vec![false; m];
        for s in &self.slots {
            is_parent[s.mother as usize] = true;
            if s.crossover {
                is_parent[s.father as usize] = true;
            }
        }
        is_parent
    }

    /// Citizens that serve as the mother of any slot.
    pub fn mother_flags(&self, m: usize) -> Vec<bool> {
        let mut is_mother = vec![false; m];
        for s in &self.slots {
            is_mother[s.mother as usize] = true;
        }
        is_mother
    }
}

/// Draw operators and parents for every child slot of the next generation.
/// With `elite` set, slot 0 copies the best citizen (first index wins ties)
/// and consumes no randomness; the remaining slots draw as usual.
pub fn draw_selection(
    rng: &mut impl Rng,
    fitness: &[f64],
    order: FitnessOrder,
    bp: &BreedParams,
    elite: bool,
) -> SelectionDraw {
    let m = fitness.len();
    let mut slots = Vec::with_capacity(m);
    if elite {
        let mut best = 0;
        for (i, &f) in fitness.iter().enumerate().skip(1) {
            if order.better(f, fitness[best]) {
                best = i;
            }
        }
        slots.push(SlotSelection { crossover: true, mother: best as u32, father: best as u32 });
    }
    while slots.len() < m {
        let crossover = rng.gen_bool(bp.xo_rate);
        let mother = tournament(rng, fitness, order, bp.tournament_k) as u32;
        let father = if crossover {
            tournament(rng, fitness, order, bp.tournament_k) as u32
        } else {
            mother
        };
        slots.push(SlotSelection { crossover, mother, father });
    }
    SelectionDraw { slots, elite }
}

/// Read-only view of the materialized genomes of one generation.
pub struct PopView<'a> {
    pool: &'a BufferPool,
    slots: &'a [Option<u32>],
    lens: &'a [u32],
}

/// Guard over one genome's bytes.
pub struct GenomeRead<'a> {
    guard: BufRead<'a>,
    len: usize,
}

impl std::ops::Deref for GenomeRead<'_> {
    type Target = [u8];
    fn deref(&self) -> &[u8] {
        &self.guard[..self.len]
    }
}

impl<'a> PopView<'a> {
    pub fn new(pool: &'a BufferPool, slots: &'a [Option<u32>], lens: &'a [u32]) -> Self {
        debug_assert_eq!(slots.len(), lens.len());
        PopView { pool, slots, lens }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn genome_len(&self, id: u32) -> usize {
        self.lens[id as usize] as usize
    }

    /// Locked read of a citizen's genome. Panics if the citizen was never
    /// materialized; planning only ever reads parents, which always are.
    pub fn genome(&self, id: u32) -> GenomeRead<'_> {
        let slot = self.slots[id as usize].expect("genome read of unmaterialized citizen");
        GenomeRead { guard: self.pool.slot_read(slot), len: self.lens[id as usize] as usize }
    }
}

/// Where a child's fragment bytes live until it is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FragmentSrc {
    /// In the fragment store, keyed by child slot.
    Heap,
    /// Still inside the father's buffer.
    Father { site: u32, len: u32 },
}

/// Everything needed to evaluate and build one child.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChildPlan {
    pub mother: u32,
    /// None for mutation slots.
    pub father: Option<u32>,
    pub site: u32,
    /// Extent of the subtree removed from the mother.
    pub excised: u32,
    pub frag_len: u32,
    pub frag_src: FragmentSrc,
    pub child_len: u32,
}

/// Recipes for a whole generation, one per child slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BreedingPlan {
    pub children: Vec<ChildPlan>,
}

impl BreedingPlan {
    pub fn mean_child_len(&self) -> f64 {
        if self.children.is_empty() {
            return 0.0;
        }
        let total: u64 = self.children.iter().map(|c| c.child_len as u64).sum();
        total as f64 / self.children.len() as f64
    }
}

/// Copy the subtree rooted at `site` out of a genome.
pub fn extract_fragment(table: &OpcodeTable, ops: &[u8], site: usize) -> Result<Vec<u8>> {
    let ext = subtree_extent(table, ops, site)?;
    Ok(ops[site..site + ext].to_vec())
}

fn pick_xo_sites(
    rng: &mut impl Rng,
    table: &OpcodeTable,
    mother: &[u8],
    father: &[u8],
    bp: &BreedParams,
    max_size: usize,
) -> (usize, usize, usize, usize) {
    // first pass plus site_retries re-draws; both sites are re-drawn
    // together so the pair stays unbiased
    for _ in 0..=bp.site_retries {
        let msite = pick_site(rng, table, mother, bp.p_site_function);
        let mext = subtree_extent(table, mother, msite).expect("parent genome is valid");
        let fsite = pick_site(rng, table, father, bp.p_site_function);
        let fext = subtree_extent(table, father, fsite).expect("parent genome is valid");
        if mother.len() - mext + fext <= max_size {
            return (msite, mext, fsite, fext);
        }
    }
    // leaves on both sides always fit: the child is exactly mother-sized
    let msite = pick_leaf_site(rng, table, mother);
    let fsite = pick_leaf_site(rng, table, father);
    (msite, 1, fsite, 1)
}

/// Turn a selection draw into full child recipes: pick sites, grow mutation
/// fragments, and extract crossover fragments (copying them out of fathers
/// when `fatherless` is set, so father buffers can be retired immediately).
#[allow(clippy::too_many_arguments)]
pub fn complete_plan(
    rng: &mut impl Rng,
    sel: &SelectionDraw,
    view: &PopView<'_>,
    table: &OpcodeTable,
    structure: &StructureParams,
    bp: &BreedParams,
    fatherless: bool,
    store: &mut FragmentStore,
) -> Result<BreedingPlan> {
    let max = structure.max_tree_size;
    let m = sel.slots.len();
    let mut sites: Vec<(usize, usize, usize, usize)> = Vec::with_capacity(m);

    // pass: sites, slot order; an elite slot takes the whole mother as its
    // own fragment, a forced copy that costs no randomness
    for (slot, s) in sel.slots.iter().enumerate() {
        let mg = view.genome(s.mother);
        if sel.elite && slot == 0 {
            sites.push((0, mg.len(), 0, mg.len()));
            continue;
        }
        if s.crossover {
            if s.father == s.mother {
                sites.push(pick_xo_sites(rng, table, &mg, &mg, bp, max));
            } else {
                let fg = view.genome(s.father);
                sites.push(pick_xo_sites(rng, table, &mg, &fg, bp, max));
            }
        } else {
            let msite = pick_site(rng, table, &mg, bp.p_site_function);
            let mext = subtree_extent(table, &mg, msite).expect("parent genome is valid");
            sites.push((msite, mext, 0, 0));
        }
    }

    // pass: mutation fragments, slot order
    let (dlo, dhi) = bp.mutation_depth;
    let mut plan = Vec::with_capacity(m);
    for (slot, s) in sel.slots.iter().enumerate() {
        let (msite, mext, fsite, fext) = sites[slot];
        let mlen = view.genome_len(s.mother);
        if s.crossover {
            plan.push(ChildPlan {
                mother: s.mother,
                father: Some(s.father),
                site: msite as u32,
                excised: mext as u32,
                frag_len: fext as u32,
                frag_src: FragmentSrc::Father { site: fsite as u32, len: fext as u32 },
                child_len: (mlen - mext + fext) as u32,
            });
            continue;
        }
        let budget = max - (mlen - mext);
        let mut frag: Option<Vec<u8>> = None;
        for _ in 0..=bp.fragment_retries {
            let depth = rng.gen_range(dlo..=dhi);
            let t = random_tree_once(rng, table, GrowMethod::Grow, depth);
            if t.len() <= budget {
                frag = Some(t);
                break;
            }
        }
        let frag = frag.unwrap_or_else(|| {
            let ts = table.terminals();
            vec![ts[rng.gen_range(0..ts.len())]]
        });
        let frag_len = frag.len();
        store.put(slot, frag);
        plan.push(ChildPlan {
            mother: s.mother,
            father: None,
            site: msite as u32,
            excised: mext as u32,
            frag_len: frag_len as u32,
            frag_src: FragmentSrc::Heap,
            child_len: (mlen - mext + frag_len) as u32,
        });
    }

    // extraction: copy crossover fragments onto the heap; no randomness
    if fatherless {
        for (slot, p) in plan.iter_mut().enumerate() {
            if let (Some(father), FragmentSrc::Father { site, len }) = (p.father, p.frag_src) {
                let fg = view.genome(father);
                store.put(slot, fg[site as usize..(site + len) as usize].to_vec());
                p.frag_src = FragmentSrc::Heap;
            }
        }
    }

    Ok(BreedingPlan { children: plan })
}

/// Selection plus plan completion in one call.
#[allow(clippy::too_many_arguments)]
pub fn plan_generation(
    rng: &mut impl Rng,
    fitness: &[f64],
    order: FitnessOrder,
    view: &PopView<'_>,
    table: &OpcodeTable,
    structure: &StructureParams,
    bp: &BreedParams,
    fatherless: bool,
    elite: bool,
    store: &mut FragmentStore,
) -> Result<(SelectionDraw, BreedingPlan)> {
    let sel = draw_selection(rng, fitness, order, bp, elite);
    let plan = complete_plan(rng, &sel, view, table, structure, bp, fatherless, store)?;
    Ok((sel, plan))
}

/// Build a child into `dst` from its mother and fragment. Returns the child
/// length.
pub fn splice_copy(dst: &mut [u8], mother: &[u8], site: usize, excised: usize, frag: &[u8]) -> usize {
    let child_len = mother.len() - excised + frag.len();
    debug_assert!(child_len <= dst.len(), "splice checked against max size at planning");
    dst[..site].copy_from_slice(&mother[..site]);
    dst[site..site + frag.len()].copy_from_slice(frag);
    dst[site + frag.len()..child_len].copy_from_slice(&mother[site + excised..]);
    child_len
}

/// Build a child directly inside its mother's buffer: shift the tail so the
/// fragment fits, then write the fragment. Returns the child length.
pub fn splice_in_place(
    buf: &mut [u8],
    mother_len: usize,
    site: usize,
    excised: usize,
    frag: &[u8],
) -> usize {
    let child_len = mother_len - excised + frag.len();
    debug_assert!(child_len <= buf.len(), "splice checked against max size at planning");
    buf.copy_within(site + excised..mother_len, site + frag.len());
    buf[site..site + frag.len()].copy_from_slice(frag);
    child_len
}

/// One dispatched birth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Birth {
    pub mother: u32,
    pub child: u32,
    /// Children of this mother still pending after this one.
    pub remaining: u32,
}

/// Pending births keyed by how many children each mother still owes.
/// Dispatch always serves a mother with the fewest pending children, so
/// mothers finish (and free their buffers) as early as possible; within a
/// count bucket mothers leave in arrival order, and a mother's own children
/// arrive in slot order.
#[derive(Debug)]
pub struct BirthQueues {
    buckets: BTreeMap<u32, VecDeque<u32>>,
    pending: Vec<u32>,
    children: Vec<VecDeque<u32>>,
}

impl BirthQueues {
    /// `pairs` yields (mother, child slot) with child slots in dispatch
    /// order within each mother. Mothers join their bucket in id order.
    pub fn build(num_mothers: usize, pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut pending = vec![0u32; num_mothers];
        let mut children: Vec<VecDeque<u32>> = vec![VecDeque::new(); num_mothers];
        for (mother, child) in pairs {
            pending[mother as usize] += 1;
            children[mother as usize].push_back(child);
        }
        let mut buckets: BTreeMap<u32, VecDeque<u32>> = BTreeMap::new();
        for (mother, &count) in pending.iter().enumerate() {
            if count > 0 {
                buckets.entry(count).or_default().push_back(mother as u32);
            }
        }
        BirthQueues { buckets, pending, children }
    }

    /// Children a mother still owes.
    pub fn pending(&self, mother: u32) -> u32 {
        self.pending[mother as usize]
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    /// Dispatch the next birth: a mother from the lowest-count bucket, her
    /// next child in slot order. The mother rejoins the bucket for her new
    /// count at the back.
    pub fn next_task(&mut self) -> Option<Birth> {
        let (&count, _) = self.buckets.iter().next()?;
        let bucket = self.buckets.get_mut(&count).expect("bucket just observed");
        let mother = bucket.pop_front().expect("buckets are never left empty");
        if bucket.is_empty() {
            self.buckets.remove(&count);
        }
        let child = self.children[mother as usize].pop_front().expect("pending count matches list");
        self.pending[mother as usize] -= 1;
        let remaining = self.pending[mother as usize];
        if remaining > 0 {
            self.buckets.entry(remaining).or_default().push_back(mother);
        }
        Some(Birth { mother, child, remaining })
    }
}

/// A materialized old citizen whose buffer the scheduler may consume.
#[derive(Debug, Clone, Copy)]
pub struct OldCitizen {
    /// None if the citizen was never materialized (possible only for
    /// citizens that are not parents).
    pub handle: Option<BufferHandle>,
    pub len: u32,
}

/// One buffer-level build step for the workers.
#[derive(Debug, Clone, Copy)]
pub struct BirthTask {
    /// Child slot; indexes both the plan and the handle table.
    pub child: u32,
    /// Build inside the mother's buffer instead of a fresh one.
    pub in_place: bool,
    pub dest_slot: u32,
    pub mother_slot: u32,
    /// Wait until the live-read counter of this old citizen drops to the
    /// threshold before touching the destination buffer.
    pub gate: Option<(u32, u32)>,
}

/// Complete buffer schedule for building one generation.
#[derive(Debug)]
pub struct MaterializationSchedule {
    /// Execution order; a worker may start task i before task i-1 finishes,
    /// but gates enforce every cross-task buffer dependency.
    pub tasks: Vec<BirthTask>,
    /// Initial live-read counter per old citizen: how many tasks read its
    /// buffer as mother or fragment source. Workers decrement on completion.
    pub live_reads: Vec<u32>,
    /// Buffer granted to each child slot; None for skipped children.
    pub child_handles: Vec<Option<BufferHandle>>,
}

/// Decide every buffer movement for one generation ahead of execution.
///
/// Runs on the master thread and performs all pool acquires and releases
/// itself, so `in_use` and the peaks advance identically no matter how many
/// workers later execute the tasks. Old citizens' handles are consumed:
/// released here, or transferred to an in-place child. On return every
/// handle in `old` is gone and `child_handles` holds the new generation.
///
/// For each dispatched birth, in queue order:
/// - a last child may reuse the mother's buffer in place (when enabled and
///   no later task still reads her);
/// - otherwise the child acquires a fresh buffer first, and then the mother
///   is released if this was her last child and no fragment reads remain.
/// Fragment-source citizens are released as their last reading child is
/// dispatched. Citizens with no dispatched readers at all are released up
/// front.
pub fn simulate_materialization(
    pool: &BufferPool,
    old: &mut [OldCitizen],
    plan: &BreedingPlan,
    needed: &[bool],
    in_place: bool,
) -> Result<MaterializationSchedule> {
    let n_old = old.len();
    let n_children = plan.children.len();
    debug_assert_eq!(needed.len(), n_children);

    // pending father reads and initial live-read counters over needed tasks
    let mut father_reads = vec![0u32; n_old];
    let mut live_reads = vec![0u32; n_old];
    for (slot, p) in plan.children.iter().enumerate() {
        if !needed[slot] {
            continue;
        }
        live_reads[p.mother as usize] += 1;
        if let (Some(f), FragmentSrc::Father { .. }) = (p.father, p.frag_src) {
            father_reads[f as usize] += 1;
            live_reads[f as usize] += 1;
        }
    }

    let mut queues = BirthQueues::build(
        n_old,
        plan.children
            .iter()
            .enumerate()
            .filter(|(slot, _)| needed[*slot])
            .map(|(slot, p)| (p.mother, slot as u32)),
    );

    // who last owned each pool slot within this schedule, for reuse gates
    let mut slot_owner: Vec<Option<u32>> = vec![None; pool.capacity()];
    let release = |old: &mut [OldCitizen],
                       slot_owner: &mut Vec<Option<u32>>,
                       cit: u32|
     -> Result<()> {
        if let Some(h) = old[cit as usize].handle.take() {
            slot_owner[h.slot() as usize] = Some(cit);
            pool.release(h)?;
        }
        Ok(())
    };

    // citizens no dispatched task will read free their buffers immediately
    for cit in 0..n_old as u32 {
        if queues.pending(cit) == 0 && father_reads[cit as usize] == 0 {
            release(old, &mut slot_owner, cit)?;
        }
    }

    let mut tasks = Vec::new();
    let mut child_handles: Vec<Option<BufferHandle>> = vec![None; n_children];

    while let Some(b) = queues.next_task() {
        let p = &plan.children[b.child as usize];
        // this task's own fragment read is satisfied by the task itself
        let frag_father = match (p.father, p.frag_src) {
            (Some(f), FragmentSrc::Father { .. }) => {
                father_reads[f as usize] -= 1;
                Some(f)
            }
            _ => None,
        };
        let mother = b.mother;
        let mother_slot =
            old[mother as usize].handle.expect("mothers stay materialized until their last child").slot();

        let reuse_mother = in_place && b.remaining == 0 && father_reads[mother as usize] == 0;
        if reuse_mother {
            // ownership transfer: no release/acquire pair, accounting is flat
            let h = old[mother as usize].handle.take().expect("checked above");
            // own reads: one as mother, one more if the fragment also comes
            // from the mother's buffer
            let own = 1 + u32::from(frag_father == Some(mother));
            tasks.push(BirthTask {
                child: b.child,
                in_place: true,
                dest_slot: h.slot(),
                mother_slot,
                gate: Some((mother, own)),
            });
            child_handles[b.child as usize] = Some(h);
        } else {
            // acquire before any release so the destination can never alias
            // a buffer some earlier task still reads without a gate
            let h = pool.acquire()?;
            let gate = slot_owner[h.slot() as usize].map(|prev| (prev, 0));
            tasks.push(BirthTask {
                child: b.child,
                in_place: false,
                dest_slot: h.slot(),
                mother_slot,
                gate,
            });
            child_handles[b.child as usize] = Some(h);
            if b.remaining == 0 && father_reads[mother as usize] == 0 {
                release(old, &mut slot_owner, mother)?;
            }
        }
        // a fragment source may retire once its last read is dispatched
        if let Some(f) = frag_father {
            if f != mother && father_reads[f as usize] == 0 && queues.pending(f) == 0 {
                release(old, &mut slot_owner, f)?;
            }
        }
    }

    debug_assert!(old.iter().all(|c| c.handle.is_none()), "all old buffers consumed");
    Ok(MaterializationSchedule { tasks, live_reads, child_handles })
}
