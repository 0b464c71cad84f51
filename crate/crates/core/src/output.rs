//! CSV files written for each run and for each aggregated configuration.

use std::fs;
use std::path::Path;

use crate::error::{Result, SimError};
use crate::metrics::AggregateMetrics;
use crate::network::{PacketOutcome, RunOutput};

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(csv_err)
}

fn csv_err(e: csv::Error) -> SimError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SimError::Io(io),
        other => SimError::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn finish(mut w: csv::Writer<fs::File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

/// Writes every per-run file into `dir` (created if missing).
pub fn write_run(dir: &Path, run: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    let m = &run.metrics;

    let mut w = writer(&dir.join("throughput_series.csv"))?;
    w.write_record(["window_start_us", "mbit_per_s"]).map_err(csv_err)?;
    for (start, v) in &m.throughput_series.values {
        w.write_record([start.as_us().to_string(), v.to_string()]).map_err(csv_err)?;
    }
    finish(w)?;

    let mut w = writer(&dir.join("latency_series.csv"))?;
    w.write_record(["window_start_us", "mean_ms", "max_ms", "packets"]).map_err(csv_err)?;
    for l in &m.latency_series {
        w.write_record([
            l.start.as_us().to_string(),
            l.mean_ms.to_string(),
            l.max_ms.to_string(),
            l.count.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)?;

    let mut w = writer(&dir.join("association.csv"))?;
    w.write_record(["time_us", "serving_cell_id"]).map_err(csv_err)?;
    for s in &m.association {
        w.write_record([s.start.as_us().to_string(), s.cell.to_string()]).map_err(csv_err)?;
    }
    finish(w)?;

    let secs = m.horizon.as_secs_f64();
    let mut w = writer(&dir.join("rrc_traffic.csv"))?;
    w.write_record(["path", "bytes", "bytes_per_s"]).map_err(csv_err)?;
    for (path, bytes) in &run.signaling {
        w.write_record([
            path.as_str().to_string(),
            bytes.to_string(),
            (*bytes as f64 / secs).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.write_record([
        "AIR_TOTAL".to_string(),
        m.rrc_air_bytes.to_string(),
        m.rrc_air_bytes_per_s.to_string(),
    ])
    .map_err(csv_err)?;
    finish(w)?;

    let mut w = writer(&dir.join("summary.csv"))?;
    w.write_record(["metric", "value"]).map_err(csv_err)?;
    w.write_record(["mode", m.mode.as_str()]).map_err(csv_err)?;
    w.write_record(["run_index".to_string(), m.run_index.to_string()]).map_err(csv_err)?;
    w.write_record(["seed".to_string(), m.seed.to_string()]).map_err(csv_err)?;
    w.write_record(["horizon_us".to_string(), m.horizon.as_us().to_string()]).map_err(csv_err)?;
    for (name, v) in m.scalars() {
        w.write_record([name.to_string(), v.to_string()]).map_err(csv_err)?;
    }
    finish(w)?;

    let mut w = writer(&dir.join("channel_trace.csv"))?;
    w.write_record(["time_us", "enb_id", "snr_db"]).map_err(csv_err)?;
    for s in &run.channel_trace {
        w.write_record([s.time.as_us().to_string(), s.enb_id.to_string(), s.snr_db.to_string()])
            .map_err(csv_err)?;
    }
    finish(w)?;

    let mut w = writer(&dir.join("messages.csv"))?;
    w.write_record(["time_us", "kind", "path", "size_bytes", "src", "dst"]).map_err(csv_err)?;
    for msg in &run.messages {
        w.write_record([
            msg.time.as_us().to_string(),
            msg.kind.as_str().to_string(),
            msg.path.as_str().to_string(),
            msg.size.to_string(),
            msg.src.to_string(),
            msg.dst.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)?;

    let mut w = writer(&dir.join("procedures.csv"))?;
    w.write_record(["kind", "start_us", "completed_us", "source", "target", "rlf"]).map_err(csv_err)?;
    for p in &run.procedures {
        w.write_record([
            p.kind.as_str().to_string(),
            p.start.as_us().to_string(),
            p.completed.map_or(String::new(), |t| t.as_us().to_string()),
            p.source.to_string(),
            p.target.to_string(),
            p.rlf.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)?;

    if let Some(trace) = &run.event_trace {
        let mut text = String::from("time_us,seq,handler_tag\n");
        text.push_str(trace);
        fs::write(dir.join("events.csv"), text)?;
    }

    if !run.packets.is_empty() {
        let mut w = writer(&dir.join("packets.csv"))?;
        w.write_record(["sn", "created_us", "delivered_us", "leg", "retx_count"]).map_err(csv_err)?;
        for p in &run.packets {
            let outcome = match p.outcome {
                PacketOutcome::Delivered(t) => t.as_us().to_string(),
                PacketOutcome::Dropped(reason) => format!("DROP_{}", reason.as_str()),
            };
            w.write_record([
                p.sn.to_string(),
                p.created.as_us().to_string(),
                outcome,
                p.leg.as_str().to_string(),
                p.retx_count.to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish(w)?;
    }
    Ok(())
}

/// One row per metric: mean and sample standard deviation.
pub fn write_aggregate(path: &Path, agg: &AggregateMetrics) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = writer(path)?;
    w.write_record(["metric", "mean", "stddev", "runs"]).map_err(csv_err)?;
    for f in &agg.fields {
        w.write_record([
            f.name.to_string(),
            f.mean.to_string(),
            f.stddev.to_string(),
            agg.runs.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}
