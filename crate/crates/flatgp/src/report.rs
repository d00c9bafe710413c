//! CSV rendering for run output.
//!
//! Columns are a stable interface for analysis scripts; change them and
//! downstream plots silently break. Floats use Rust's shortest round-trip
//! formatting, so equal values always print identically and files from
//! equal runs diff clean.

use std::fmt::Write as _;

use crate::engine::{GenerationStats, PlanRow, RunReport, TraceRow};

pub const STATS_HEADER: &str = "gen,best_fitness,mean_fitness,mean_size,equivalent_ops,executed_ops,skip_fraction,children_skipped,buffers_peak,wall_ms";

/// Per-generation statistics, one row per generation including generation 0.
pub fn stats_csv(stats: &[GenerationStats]) -> String {
    let mut out = String::with_capacity(64 * (stats.len() + 1));
    out.push_str(STATS_HEADER);
    out.push('\n');
    for s in stats {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{:.3}",
            s.gen,
            s.best_fitness,
            s.mean_fitness,
            s.mean_size,
            s.equivalent_ops,
            s.executed_ops,
            s.skip_fraction,
            s.children_skipped,
            s.buffers_peak,
            s.wall_ms
        )
        .expect("string write");
    }
    out
}

/// Strip the timing column so runs can be compared for determinism.
pub fn stats_csv_without_wall(stats_csv: &str) -> String {
    let mut out = String::with_capacity(stats_csv.len());
    for line in stats_csv.lines() {
        let cut = line.rfind(',').map_or(line.len(), |i| i);
        out.push_str(&line[..cut]);
        out.push('\n');
    }
    out
}

pub const TRACE_HEADER: &str = "gen,child,levels_climbed,terminated_at,levels";

/// Disruption climbs, one row per evaluated child. `levels` holds
/// `disrupted:rms` pairs from the crossover site upward, `;`-separated, for
/// decay plots.
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::with_capacity(48 * (rows.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        let climbed = r.trace.levels.len().saturating_sub(1);
        let terminated = if r.trace.reached_root { "root" } else { "converged" };
        write!(out, "{},{},{},{},", r.gen, r.child, climbed, terminated).expect("string write");
        for (i, l) in r.trace.levels.iter().enumerate() {
            if i > 0 {
                out.push(';');
            }
            write!(out, "{}:{}", l.disrupted, l.rms).expect("string write");
        }
        out.push('\n');
    }
    out
}

pub const PLAN_HEADER: &str = "gen,slot,mother,father,site,excised,frag_len,child_len";

/// Breeding decisions, one row per child slot per generation. `father` is -1
/// for mutation slots.
pub fn plan_csv(rows: &[PlanRow]) -> String {
    let mut out = String::with_capacity(32 * (rows.len() + 1));
    out.push_str(PLAN_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.gen, r.slot, r.mother, r.father, r.site, r.excised, r.frag_len, r.child_len
        )
        .expect("string write");
    }
    out
}

/// One-line run summary: total work, wall time, and the equivalent
/// throughput a full interpreter would have needed for the same result.
pub fn summary_line(report: &RunReport) -> String {
    let secs = report.total_wall_ms / 1e3;
    let eq_per_sec = if secs > 0.0 { report.total_equivalent_ops as f64 / secs } else { 0.0 };
    format!(
        "total_equivalent_ops={} total_executed_ops={} wall_ms={:.3} equivalent_ops_per_sec={:.3e}",
        report.total_equivalent_ops, report.total_executed_ops, report.total_wall_ms, eq_per_sec
    )
}
