use std::path::PathBuf;

use clap::Args;
use mirror_fdr::bench::{run_bench, BenchResult};

use crate::runfile::RunFile;
use crate::{Failure, ResultExt};

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// TOML run file.
    runfile: PathBuf,
    /// Table CSV [default: output.table, else <runfile stem>.csv]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override every cell's replication count.
    #[arg(long)]
    reps: Option<usize>,
    /// Override the run file's top-level seed.
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run(a: BenchArgs) -> Result<(), Failure> {
    let mut rf = RunFile::read(&a.runfile).usage()?;
    if let Some(s) = a.seed {
        rf.seed = s;
    }
    if a.reps == Some(0) {
        return Err(Failure::usage("--reps must be positive"));
    }
    let grid = rf.scenarios(a.reps).usage()?;
    let out = a
        .out
        .or_else(|| rf.output.table.clone())
        .unwrap_or_else(|| PathBuf::from(a.runfile.file_stem().unwrap_or_default()).with_extension("csv"));
    eprintln!("running {} scenarios, {} replications", grid.len(), grid.iter().map(|s| s.reps).sum::<usize>());

    let results = run_bench(&grid).method()?;
    let mut w = csv::Writer::from_path(&out).usage()?;
    w.write_record(BenchResult::csv_header()).usage()?;
    for r in &results {
        w.write_record(r.csv_record()).usage()?;
    }
    w.flush().usage()?;

    print_table(&results);
    for r in results.iter().filter(|r| !r.skipped.is_empty()) {
        for s in &r.skipped {
            eprintln!("warning: {} {} rep {}: {}", r.scenario.label, r.scenario.method, s.rep + 1, s.reason);
        }
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn print_table(results: &[BenchResult]) {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "NA".into());
    println!(
        "{:<16} {:>5} {:>5} {:>6} {:<14} {:>7} {:>7} {:>7} {:>7} {:>9}",
        "scenario", "n", "p", "r", "method", "fdr", "se", "power", "se", "completed"
    );
    for r in results {
        let sc = &r.scenario;
        println!(
            "{:<16} {:>5} {:>5} {:>6} {:<14} {:>7} {:>7} {:>7} {:>7} {:>6}/{:<2}{}",
            sc.label,
            sc.n,
            sc.p,
            sc.covariance.r(),
            sc.method.to_string(),
            fmt(r.fdr),
            fmt(r.mc_se_fdr),
            fmt(r.power),
            fmt(r.mc_se_power),
            r.per_rep.len(),
            sc.reps,
            if r.unreliable { " unreliable" } else { "" }
        );
    }
}
