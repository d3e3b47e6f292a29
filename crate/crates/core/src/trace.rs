//! Recorded run output and its on-disk form: a directory with `meta.json`
//! and one CSV per series. Phases are written as exact fixed-point
//! decimals, so reading a trace back reproduces it bit for bit.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scenario::Scenario;
use crate::time::{Fs, Phase};
use crate::tri::Tri;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub time_fs: Fs,
    pub node: usize,
    pub l_phase: Phase,
    pub h_phase: Phase,
    pub md: Tri,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub time_fs: Fs,
    pub node: usize,
    pub neighbor: usize,
    pub estimate: Phase,
    /// True offset `L_neighbor - L_node` at the sampling instant.
    pub exact: Phase,
    pub word: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateRecord {
    pub time_fs: Fs,
    pub node: usize,
    pub h_ppb: i64,
    pub m_ppb: i64,
}

/// Mode signal at the oscillator input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub time_fs: Fs,
    pub node: usize,
    pub md: Tri,
}

/// Largest skews over all events in the interval ending at `time_fs` and
/// starting at the previous record. Clocks are linear between events, so
/// these are the exact extrema.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkewPeak {
    pub time_fs: Fs,
    pub local: Phase,
    /// Edge attaining `local`, lower clock first.
    pub local_v: usize,
    pub local_w: usize,
    pub global: Phase,
    pub global_v: usize,
    pub global_w: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonitorKind {
    /// Logical rate outside `[1, 1+mu]` times the hardware rate.
    RateEnvelope,
    /// Fast condition holds but the oscillator is not locked fast.
    FastConditionMode,
    /// Slow condition holds but the oscillator is not locked slow.
    SlowConditionMode,
    /// A latched estimate is further than `delta` from the true offset.
    EstimateError,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub time_fs: Fs,
    pub node: usize,
    pub kind: MonitorKind,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub scenario: Scenario,
    pub delta: Fs,
    pub end_fs: Fs,
    pub aborted: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSet {
    pub meta: TraceMeta,
    pub nodes: Vec<NodeRecord>,
    pub samples: Vec<SampleRecord>,
    pub rates: Vec<RateRecord>,
    pub modes: Vec<ModeRecord>,
    pub peaks: Vec<SkewPeak>,
    pub violations: Vec<Violation>,
}

/// Per-edge skew row derived from the node series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub time_fs: Fs,
    pub v: usize,
    pub w: usize,
    pub skew: Phase,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("no record at time {time} for node {node}")]
    NotFound { time: Fs, node: usize },
}

fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>, R: Read>(input: R) -> Result<Vec<T>, TraceError> {
    let mut r = csv::Reader::from_reader(input);
    let mut v = Vec::new();
    for row in r.deserialize() {
        v.push(row?);
    }
    Ok(v)
}

impl TraceSet {
    /// Node records grouped by timestamp; every group holds all nodes.
    pub fn snapshots(&self) -> impl Iterator<Item = &[NodeRecord]> {
        self.nodes.chunk_by(|a, b| a.time_fs == b.time_fs)
    }

    pub fn edge_records(&self) -> Vec<EdgeRecord> {
        let topo = &self.meta.scenario.topology;
        let mut out = Vec::new();
        for snap in self.snapshots() {
            for &(v, w) in topo.edges() {
                out.push(EdgeRecord {
                    time_fs: snap[0].time_fs,
                    v,
                    w,
                    skew: snap[w].l_phase - snap[v].l_phase,
                });
            }
        }
        out
    }

    /// Latest snapshot at or before `t`.
    pub fn snapshot_at(&self, t: Fs) -> Option<&[NodeRecord]> {
        self.snapshots().take_while(|s| s[0].time_fs <= t).last()
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), TraceError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&self.meta)?)?;
        write_csv(&self.nodes, fs::File::create(dir.join("nodes.csv"))?)?;
        write_csv(&self.edge_records(), fs::File::create(dir.join("edges.csv"))?)?;
        write_csv(&self.samples, fs::File::create(dir.join("samples.csv"))?)?;
        write_csv(&self.rates, fs::File::create(dir.join("rates.csv"))?)?;
        write_csv(&self.modes, fs::File::create(dir.join("modes.csv"))?)?;
        write_csv(&self.peaks, fs::File::create(dir.join("peaks.csv"))?)?;
        write_csv(&self.violations, fs::File::create(dir.join("violations.csv"))?)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<TraceSet, TraceError> {
        let meta: TraceMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
        Ok(TraceSet {
            meta,
            nodes: read_csv(fs::File::open(dir.join("nodes.csv"))?)?,
            samples: read_csv(fs::File::open(dir.join("samples.csv"))?)?,
            rates: read_csv(fs::File::open(dir.join("rates.csv"))?)?,
            modes: read_csv(fs::File::open(dir.join("modes.csv"))?)?,
            peaks: read_csv(fs::File::open(dir.join("peaks.csv"))?)?,
            violations: read_csv(fs::File::open(dir.join("violations.csv"))?)?,
        })
    }

    /// SHA-256 over the serialized meta and every series.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        let mut feed = |b: Vec<u8>| {
            h.update((b.len() as u64).to_le_bytes());
            h.update(&b);
        };
        feed(serde_json::to_vec(&self.meta).expect("meta serializes"));
        let mut buf = Vec::new();
        write_csv(&self.nodes, &mut buf).expect("in-memory write");
        feed(std::mem::take(&mut buf));
        write_csv(&self.samples, &mut buf).expect("in-memory write");
        feed(std::mem::take(&mut buf));
        write_csv(&self.rates, &mut buf).expect("in-memory write");
        feed(std::mem::take(&mut buf));
        write_csv(&self.modes, &mut buf).expect("in-memory write");
        feed(std::mem::take(&mut buf));
        write_csv(&self.peaks, &mut buf).expect("in-memory write");
        feed(std::mem::take(&mut buf));
        write_csv(&self.violations, &mut buf).expect("in-memory write");
        feed(buf);
        hex::encode(h.finalize())
    }
}
