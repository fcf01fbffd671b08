//! CSV output.
//!
//! Files start with `#`-prefixed provenance lines, then a header row. Numbers
//! are formatted without locale; latencies carry six decimals and missing
//! values are empty cells.

use std::io::{self, Write};

use crate::engine::SweepRow;
use crate::stats::Window;

pub const RESULT_HEADER: &str = "policy,pattern,rate,seed,delivered,injected,mean_latency,p99_latency,throughput,saturated,qtable_reads,qtable_writes,learning_flits,learning_drops,flit_hops";

pub const TIMESERIES_HEADER: &str = "window_start,window_end,packets,mean_latency";

fn opt6(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn write_provenance<W: Write>(w: &mut W, lines: &[String]) -> io::Result<()> {
    for block in lines {
        for line in block.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    Ok(())
}

pub fn write_results<W: Write>(
    w: &mut W,
    provenance: &[String],
    pattern: &str,
    rows: &[SweepRow],
) -> io::Result<()> {
    write_provenance(w, provenance)?;
    writeln!(w, "{RESULT_HEADER}")?;
    for r in rows {
        let s = &r.stats;
        let c = &s.counters;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{:.6},{},{},{},{},{},{}",
            r.policy,
            pattern,
            r.rate,
            r.seed,
            s.delivered,
            s.injected,
            opt6(s.latency.map(|l| l.mean)),
            opt6(s.latency.map(|l| l.p99)),
            s.throughput,
            s.saturated,
            c.qtable_reads,
            c.qtable_writes,
            c.learning_flits,
            c.learning_drops,
            c.flit_hops,
        )?;
    }
    Ok(())
}

pub fn write_timeseries<W: Write>(
    w: &mut W,
    provenance: &[String],
    windows: &[Window],
) -> io::Result<()> {
    write_provenance(w, provenance)?;
    writeln!(w, "{TIMESERIES_HEADER}")?;
    for win in windows {
        writeln!(
            w,
            "{},{},{},{}",
            win.start,
            win.end,
            win.packets,
            opt6(win.mean_latency())
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyKind;
    use crate::stats::{EventCounters, LatencySummary, StatsRecord};

    fn row() -> SweepRow {
        SweepRow {
            policy: PolicyKind::Qrasp,
            rate: 0.02,
            seed: 3,
            stats: StatsRecord {
                injected: 10,
                delivered: 10,
                measured_injected: 8,
                measured_delivered: 8,
                latency: LatencySummary::from_latencies(&[18, 20]),
                throughput: 0.0125,
                offered: 0.0125,
                windows: vec![],
                counters: EventCounters {
                    qtable_reads: 5,
                    qtable_writes: 4,
                    learning_flits: 3,
                    learning_drops: 2,
                    flit_hops: 1,
                    ..EventCounters::default()
                },
                nonminimal: 0,
                saturated: false,
                census: None,
                cycles: 100,
            },
        }
    }

    #[test]
    fn result_csv_golden() {
        let mut out = Vec::new();
        write_results(
            &mut out,
            &["seed = 3\nrate = 0.02".into()],
            "transpose",
            &[row()],
        )
        .unwrap();
        let text = String::from_utf8(out).unwrap();
        let expected = format!(
            "# seed = 3\n# rate = 0.02\n{RESULT_HEADER}\nqrasp,transpose,0.02,3,10,10,19.000000,20.000000,0.012500,false,5,4,3,2,1\n"
        );
        assert_eq!(text, expected);
    }

    #[test]
    fn timeseries_csv_golden() {
        let wins = [
            Window {
                start: 0,
                end: 10,
                packets: 2,
                latency_sum: 37,
            },
            Window {
                start: 10,
                end: 20,
                packets: 0,
                latency_sum: 0,
            },
        ];
        let mut out = Vec::new();
        write_timeseries(&mut out, &[], &wins).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            format!("{TIMESERIES_HEADER}\n0,10,2,18.500000\n10,20,0,\n")
        );
    }
}
