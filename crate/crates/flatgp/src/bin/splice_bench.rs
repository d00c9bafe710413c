//! Times copy splicing against in-place splicing across buffer sizes and
//! prints one CSV row per size. The in-place variant is the interesting
//! number: it replaces a full parent copy with one overlapping tail shift.

use clap::Parser;

use flatgp::bench::splice_bench;

#[derive(Parser, Debug)]
#[command(name = "splice-bench", version, about = "Micro-benchmark for child splicing")]
struct Cli {
    /// Buffer sizes to test, in bytes
    #[arg(long, value_delimiter = ',', default_value = "1024,16384,262144")]
    sizes: Vec<usize>,
    /// Splices per measurement
    #[arg(long, default_value_t = 20_000)]
    iters: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() {
    let cli = Cli::parse();
    println!("buf_size,iters,baseline_ns,copy_ns,in_place_ns,speedup");
    for &size in &cli.sizes {
        let b = splice_bench(size, cli.iters, cli.seed);
        println!(
            "{},{},{:.1},{:.1},{:.1},{:.3}",
            b.buf_size, b.iters, b.baseline_ns, b.copy_ns, b.in_place_ns, b.speedup
        );
    }
}
