//! Splice micro-benchmark.
//!
//! Compares building a child by copying mother plus fragment into a fresh
//! buffer against rewriting the mother's buffer in place (one tail shift,
//! one fragment write). Splicing is pure byte movement, so the benchmark
//! runs on synthetic genomes; tree validity is irrelevant to the timing.
//!
//! Both variants are measured as refill-then-splice so they start from
//! identical cache state, and the refill-only baseline is reported
//! alongside, not silently subtracted.

use std::hint::black_box;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::breed::{splice_copy, splice_in_place};

#[derive(Debug, Clone, Copy)]
pub struct SpliceBench {
    pub buf_size: usize,
    pub iters: usize,
    /// Refill-only loop, nanoseconds per iteration.
    pub baseline_ns: f64,
    /// Refill plus copy splice.
    pub copy_ns: f64,
    /// Refill plus in-place splice.
    pub in_place_ns: f64,
    /// (copy - baseline) / (in_place - baseline): how many times faster the
    /// in-place splice is once the shared refill is discounted.
    pub speedup: f64,
}

struct Case {
    site: usize,
    excised: usize,
    frag: Vec<u8>,
}

fn random_cases(rng: &mut ChaCha8Rng, mother_len: usize, buf_size: usize, count: usize) -> Vec<Case> {
    (0..count)
        .map(|_| {
            let site = rng.gen_range(0..mother_len);
            let excised = rng.gen_range(1..=mother_len - site);
            let max_frag = buf_size - (mother_len - excised);
            let frag_len = rng.gen_range(1..=max_frag.min(mother_len));
            let frag = (0..frag_len).map(|_| rng.gen()).collect();
            Case { site, excised, frag }
        })
        .collect()
}

/// Time both splice variants over `iters` random grow/shrink/equal splices
/// of a `buf_size * 3 / 4`-byte mother inside a `buf_size` buffer.
pub fn splice_bench(buf_size: usize, iters: usize, seed: u64) -> SpliceBench {
    assert!(buf_size >= 8, "need room for a mother and a fragment");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mother_len = buf_size * 3 / 4;
    let mother: Vec<u8> = (0..mother_len).map(|_| rng.gen()).collect();
    let cases = random_cases(&mut rng, mother_len, buf_size, 512);
    let mut buf = vec![0u8; buf_size];
    let mut dst = vec![0u8; buf_size];

    let time = |f: &mut dyn FnMut(&Case)| {
        let t = Instant::now();
        for i in 0..iters {
            f(&cases[i % cases.len()]);
        }
        t.elapsed().as_secs_f64() * 1e9 / iters as f64
    };

    let baseline_ns = time(&mut |_c| {
        buf[..mother_len].copy_from_slice(&mother);
        black_box(&mut buf);
    });
    let copy_ns = time(&mut |c| {
        buf[..mother_len].copy_from_slice(&mother);
        let n = splice_copy(&mut dst, &buf[..mother_len], c.site, c.excised, &c.frag);
        black_box(&dst[..n]);
    });
    let in_place_ns = time(&mut |c| {
        buf[..mother_len].copy_from_slice(&mother);
        let n = splice_in_place(&mut buf, mother_len, c.site, c.excised, &c.frag);
        black_box(&buf[..n]);
    });

    let copy_net = (copy_ns - baseline_ns).max(f64::EPSILON);
    let in_place_net = (in_place_ns - baseline_ns).max(f64::EPSILON);
    SpliceBench {
        buf_size,
        iters,
        baseline_ns,
        copy_ns,
        in_place_ns,
        speedup: copy_net / in_place_net,
    }
}
