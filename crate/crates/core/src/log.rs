//! Event records and where they go.
//!
//! The engine emits records in non-decreasing time order. Within one
//! millisecond, records follow the processing order of the scheduler:
//! receiving node, then event priority, then scheduling order.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::network::{LossCause, Message, Payload};
use crate::node::ReportKind;
use crate::time::SimTime;
use crate::{NodeId, RoomId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Aggregate,
    Alert,
    RequestReply,
    Request,
}

impl PayloadKind {
    pub fn of(message: &Message) -> Self {
        match &message.payload {
            Payload::Request(_) => PayloadKind::Request,
            Payload::Report(r) => match r.kind {
                ReportKind::Aggregate => PayloadKind::Aggregate,
                ReportKind::Alert => PayloadKind::Alert,
                ReportKind::RequestReply => PayloadKind::RequestReply,
            },
        }
    }

    /// Application messages originated by sensor nodes.
    pub fn is_report(self) -> bool {
        !matches!(self, PayloadKind::Request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Link,
    Asleep,
}

impl From<LossCause> for Cause {
    fn from(c: LossCause) -> Self {
        match c {
            LossCause::Link => Cause::Link,
            LossCause::Asleep => Cause::Asleep,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detail {
    Sample { room: RoomId, temp: f64, humidity: f64, gas_ppm: f64, aqi: f64, significant: bool },
    AlertTx { seq: u64 },
    AggregateTx { seq: u64, samples: u32 },
    Reply { seq: u64, empty: bool },
    Forward { origin: NodeId, seq: u64, payload: PayloadKind, to: NodeId },
    /// Report reached the coordinator.
    Delivery { origin: NodeId, seq: u64, payload: PayloadKind, created: SimTime, path: Vec<NodeId> },
    /// `hop` is 1-based along the message's route.
    Loss { origin: NodeId, seq: u64, payload: PayloadKind, hop: usize, cause: Cause },
    Wake,
    Sleep,
    /// Request issued by the coordinator.
    Request { request: u64, target: NodeId },
    /// Request reached its target.
    RequestRx { request: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: SimTime,
    pub node: NodeId,
    #[serde(flatten)]
    pub detail: Detail,
}

impl EventRecord {
    pub fn new(t: SimTime, node: &str, detail: Detail) -> Self {
        EventRecord { t, node: node.to_string(), detail }
    }

    /// Origin-generated application message, if this record is one.
    pub fn generated_seq(&self) -> Option<u64> {
        match self.detail {
            Detail::AlertTx { seq } | Detail::AggregateTx { seq, .. } | Detail::Reply { seq, .. } => Some(seq),
            _ => None,
        }
    }
}

pub trait EventSink {
    fn record(&mut self, record: &EventRecord) -> io::Result<()>;

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl EventSink for Vec<EventRecord> {
    fn record(&mut self, record: &EventRecord) -> io::Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl EventSink for NullSink {
    fn record(&mut self, _: &EventRecord) -> io::Result<()> {
        Ok(())
    }
}

/// One JSON object per line.
pub struct JsonlWriter<W: Write> {
    out: W,
}

impl<W: Write> JsonlWriter<W> {
    pub fn new(out: W) -> Self {
        JsonlWriter { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> EventSink for JsonlWriter<W> {
    fn record(&mut self, record: &EventRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

pub fn to_jsonl(records: &[EventRecord]) -> Vec<u8> {
    let mut w = JsonlWriter::new(Vec::new());
    for r in records {
        w.record(r).expect("writing to memory");
    }
    w.into_inner()
}

pub fn read_jsonl<R: BufRead>(input: R) -> io::Result<Vec<EventRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_records() -> Vec<EventRecord> {
        vec![
            EventRecord::new(
                SimTime(60_000),
                "kitchen",
                Detail::Sample {
                    room: "kitchen".into(),
                    temp: 22.25,
                    humidity: 40.0,
                    gas_ppm: 101.5,
                    aqi: 50.75,
                    significant: false,
                },
            ),
            EventRecord::new(SimTime(900_000), "kitchen", Detail::AggregateTx { seq: 0, samples: 15 }),
            EventRecord::new(
                SimTime(900_100),
                "sink",
                Detail::Delivery {
                    origin: "kitchen".into(),
                    seq: 0,
                    payload: PayloadKind::Aggregate,
                    created: SimTime(900_000),
                    path: vec!["kitchen".into(), "office".into(), "sink".into()],
                },
            ),
            EventRecord::new(SimTime(900_100), "office", Detail::Wake),
        ]
    }

    #[test]
    fn jsonl_line_shape() {
        let bytes = to_jsonl(&sample_records()[1..2]);
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            "{\"t\":900000,\"node\":\"kitchen\",\"kind\":\"aggregate_tx\",\"seq\":0,\"samples\":15}\n"
        );
    }

    #[test]
    fn jsonl_reads_back() {
        let recs = sample_records();
        let back = read_jsonl(&to_jsonl(&recs)[..]).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn bad_line_reports_position() {
        let err = read_jsonl(&b"{\"t\":1,\"node\":\"a\",\"kind\":\"wake\"}\nnot json\n"[..]).unwrap_err();
        assert!(err.to_string().starts_with("line 2"));
    }

    proptest! {
        #[test]
        fn sample_values_survive_serialization(temp in -40.0f64..90.0, aqi in 0.0f64..500.0, t in 0u64..1u64 << 40) {
            let rec = EventRecord::new(SimTime(t), "n", Detail::Sample {
                room: "r".into(), temp, humidity: 50.0, gas_ppm: 100.0, aqi, significant: false,
            });
            let back = read_jsonl(&to_jsonl(std::slice::from_ref(&rec))[..]).unwrap();
            prop_assert_eq!(&back[0], &rec);
        }
    }
}
