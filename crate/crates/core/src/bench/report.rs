use std::io::{self, Write};

use super::{MetricStats, RunResult, RunStats};

pub const CSV_COLUMNS: [&str; 9] = [
    "run_index",
    "protocol",
    "set_size",
    "diff_count",
    "success",
    "bytes_transmitted",
    "communication_time_s",
    "computation_time_s",
    "total_time_s",
];

/// Writes one CSV row per run followed by a `#`-commented summary block.
///
/// Floats use the shortest representation that parses back exactly, so
/// re-aggregating the rows reproduces the summary means.
pub fn emit_csv<W: Write>(
    runs: &[RunResult],
    set_size: usize,
    diff_count: usize,
    stats: &RunStats,
    mut out: W,
) -> io::Result<()> {
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut out);
        w.write_record(CSV_COLUMNS).map_err(io::Error::other)?;
        for r in runs {
            w.write_record([
                r.run_index.to_string(),
                r.client.protocol.as_str().to_string(),
                set_size.to_string(),
                diff_count.to_string(),
                r.success.to_string(),
                r.bytes_transmitted.to_string(),
                r.communication_time.to_string(),
                r.computation_time.to_string(),
                r.total_time.to_string(),
            ])
            .map_err(io::Error::other)?;
        }
        w.flush()?;
    }
    writeln!(out, "# runs={} success_count={}", stats.runs, stats.success_count)?;
    writeln!(out, "# metric,mean,sd,ci95,min,max")?;
    let metrics: [(&str, &MetricStats); 4] = [
        ("bytes_transmitted", &stats.bytes_transmitted),
        ("communication_time_s", &stats.communication_time),
        ("computation_time_s", &stats.computation_time),
        ("total_time_s", &stats.total_time),
    ];
    for (name, m) in metrics {
        writeln!(out, "# {name},{},{},{},{},{}", m.mean, m.sd, m.ci95, m.min, m.max)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{parse_config, run_benchmark};

    fn emit(runs: &[RunResult], stats: &RunStats) -> String {
        let mut buf = Vec::new();
        emit_csv(runs, 100, 4, stats, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_has_header_and_summary() {
        let text = emit(&[], &RunStats::from_runs(&[]));
        let data: Vec<_> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data, [CSV_COLUMNS.join(",")]);
        assert!(text.contains("# runs=0 success_count=0"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn reparse_reproduces_means() {
        let cfg = parse_config("protocol=IBLT\nlatency=5\nbandwidth=3\nrepeat=6\nset_size=100\ndiff_count=4\n").unwrap();
        let rep = run_benchmark(&cfg).unwrap();
        let text = emit(&rep.runs, &rep.stats);
        let data: Vec<_> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 7);

        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut cols: [Vec<f64>; 4] = Default::default();
        for rec in rdr.records() {
            let rec = rec.unwrap();
            for (i, c) in cols.iter_mut().enumerate() {
                c.push(rec[5 + i].parse().unwrap());
            }
        }
        let means: Vec<f64> = cols.iter().map(|c| MetricStats::from_samples(c).mean).collect();
        let s = &rep.stats;
        assert_eq!(
            means,
            [s.bytes_transmitted.mean, s.communication_time.mean, s.computation_time.mean, s.total_time.mean]
        );
    }
}
