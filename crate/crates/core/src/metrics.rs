//! Evaluation quantities computed from the event log.
//!
//! [`MetricsCollector`] is an [`EventSink`] that folds records as the
//! engine emits them, so a run never has to keep its log in memory. The
//! free functions [`throughput`], [`hourly_series`] and [`daily_aqi`]
//! compute the same quantities from a complete log.
//!
//! Throughput counts origin-generated reports (alerts, aggregates and
//! request replies) against their deliveries at the coordinator.
//! Forwarded copies are not generations.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, TimeDelta};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{Component, EnergyLedger};
use crate::log::{Cause, Detail, EventRecord, EventSink};
use crate::time::{SimDuration, SimTime, MS_PER_DAY, MS_PER_HOUR};
use crate::{NodeId, RoomId};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("unknown room {0}")]
    UnknownRoom(RoomId),
    #[error("day {day} is outside the {days}-day run")]
    DayOutOfRange { day: u64, days: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// What the metrics need to know about the run besides its log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunContext {
    pub start_date: NaiveDate,
    pub horizon: SimDuration,
    /// Sensing nodes and their rooms, plus non-sensing nodes with `None`.
    pub nodes: Vec<(NodeId, Option<RoomId>)>,
}

impl RunContext {
    pub fn days(&self) -> u64 {
        self.horizon.as_millis().div_ceil(MS_PER_DAY).max(1)
    }

    pub fn rooms(&self) -> Vec<RoomId> {
        let mut rooms: Vec<RoomId> = self.nodes.iter().filter_map(|(_, r)| r.clone()).collect();
        rooms.sort();
        rooms.dedup();
        rooms
    }

    pub fn timestamp(&self, t: SimTime) -> NaiveDateTime {
        NaiveDateTime::new(self.start_date, NaiveTime::MIN) + TimeDelta::milliseconds(t.as_millis() as i64)
    }

    pub fn date(&self, day: u64) -> NaiveDate {
        self.start_date + TimeDelta::days(day as i64)
    }

    fn check(&self, room: &str, day: Option<u64>) -> Result<(), MetricsError> {
        if !self.nodes.iter().any(|(_, r)| r.as_deref() == Some(room)) {
            return Err(MetricsError::UnknownRoom(room.to_string()));
        }
        match day {
            Some(day) if day >= self.days() => Err(MetricsError::DayOutOfRange { day, days: self.days() }),
            _ => Ok(()),
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Delivered over generated; `None` when nothing was generated.
pub fn throughput(log: &[EventRecord]) -> Option<f64> {
    let generated = log.iter().filter(|r| r.generated_seq().is_some()).count() as u64;
    let delivered = log
        .iter()
        .filter(|r| matches!(&r.detail, Detail::Delivery { payload, .. } if payload.is_report()))
        .count() as u64;
    ratio(delivered, generated)
}

/// Hourly means of one room's samples on one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlySeries {
    pub room: RoomId,
    pub day: u64,
    pub temp: [Option<f64>; 24],
    pub humidity: [Option<f64>; 24],
    pub aqi: [Option<f64>; 24],
    pub samples: [u32; 24],
}

impl HourlySeries {
    /// Hour with the highest mean temperature, if any hour has samples.
    pub fn temp_argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (h, v) in self.temp.iter().enumerate() {
            if let Some(v) = *v {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((h, v));
                }
            }
        }
        best.map(|(h, _)| h)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
struct Sums {
    n: u32,
    temp: f64,
    humidity: f64,
    aqi: f64,
}

impl Sums {
    fn add(&mut self, temp: f64, humidity: f64, aqi: f64) {
        self.n += 1;
        self.temp += temp;
        self.humidity += humidity;
        self.aqi += aqi;
    }

    fn merge(&mut self, o: &Sums) {
        self.n += o.n;
        self.temp += o.temp;
        self.humidity += o.humidity;
        self.aqi += o.aqi;
    }

    fn mean(&self, f: impl Fn(&Sums) -> f64) -> Option<f64> {
        (self.n > 0).then(|| f(self) / self.n as f64)
    }
}

fn series_from(room: &str, day: u64, buckets: &[Sums]) -> HourlySeries {
    let mut s = HourlySeries {
        room: room.to_string(),
        day,
        temp: [None; 24],
        humidity: [None; 24],
        aqi: [None; 24],
        samples: [0; 24],
    };
    for (h, b) in buckets.iter().enumerate().take(24) {
        s.temp[h] = b.mean(|b| b.temp);
        s.humidity[h] = b.mean(|b| b.humidity);
        s.aqi[h] = b.mean(|b| b.aqi);
        s.samples[h] = b.n;
    }
    s
}

pub fn hourly_series(log: &[EventRecord], ctx: &RunContext, room: &str, day: u64) -> Result<HourlySeries, MetricsError> {
    ctx.check(room, Some(day))?;
    let mut buckets = [Sums::default(); 24];
    for r in log {
        if let Detail::Sample { room: rm, temp, humidity, aqi, .. } = &r.detail {
            if rm == room && r.t.day() == day {
                buckets[r.t.hour() as usize].add(*temp, *humidity, *aqi);
            }
        }
    }
    Ok(series_from(room, day, &buckets))
}

/// Per-day mean AQI of the room's samples, one entry per simulated day.
pub fn daily_aqi(log: &[EventRecord], ctx: &RunContext, room: &str) -> Result<Vec<Option<f64>>, MetricsError> {
    ctx.check(room, None)?;
    let mut days = vec![Sums::default(); ctx.days() as usize];
    for r in log {
        if let Detail::Sample { room: rm, temp, humidity, aqi, .. } = &r.detail {
            if rm == room {
                if let Some(d) = days.get_mut(r.t.day() as usize) {
                    d.add(*temp, *humidity, *aqi);
                }
            }
        }
    }
    Ok(days.iter().map(|d| d.mean(|d| d.aqi)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub node: NodeId,
    pub room: Option<RoomId>,
    pub generated: u64,
    pub delivered: u64,
    pub alerts: u64,
    pub forwarded: u64,
    pub energy_j: f64,
    pub energy_by_component_j: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyThroughput {
    pub day: u64,
    pub date: NaiveDate,
    pub generated: u64,
    /// Deliveries of the messages generated that day.
    pub delivered: u64,
    pub throughput: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub generated: u64,
    pub delivered: u64,
    pub throughput: Option<f64>,
    pub lost_on_link: u64,
    pub lost_asleep: u64,
    pub nodes: Vec<NodeMetrics>,
    pub daily_throughput: Vec<DailyThroughput>,
    pub hourly: BTreeMap<RoomId, Vec<HourlySeries>>,
    pub daily_aqi: BTreeMap<RoomId, Vec<Option<f64>>>,
}

impl Metrics {
    pub fn node(&self, id: &str) -> Option<&NodeMetrics> {
        self.nodes.iter().find(|n| n.node == id)
    }

    /// The routing node that forwarded the most traffic, if any did.
    pub fn forwarder(&self) -> Option<&NodeMetrics> {
        self.nodes.iter().filter(|n| n.forwarded > 0).max_by_key(|n| n.forwarded)
    }
}

#[derive(Debug, Clone, Default)]
struct NodeCounts {
    generated: u64,
    delivered: u64,
    alerts: u64,
    forwarded: u64,
}

/// Streaming fold of the event log into [`Metrics`].
#[derive(Debug, Clone)]
pub struct MetricsCollector {
    ctx: RunContext,
    counts: BTreeMap<NodeId, NodeCounts>,
    daily_generated: Vec<u64>,
    daily_delivered: Vec<u64>,
    lost_on_link: u64,
    lost_asleep: u64,
    /// Per room: `days * 24` hourly buckets.
    buckets: BTreeMap<RoomId, Vec<Sums>>,
}

impl MetricsCollector {
    pub fn new(ctx: RunContext) -> Self {
        let days = ctx.days() as usize;
        let counts = ctx.nodes.iter().map(|(n, _)| (n.clone(), NodeCounts::default())).collect();
        let buckets = ctx.rooms().into_iter().map(|r| (r, vec![Sums::default(); days * 24])).collect();
        MetricsCollector {
            ctx,
            counts,
            daily_generated: vec![0; days],
            daily_delivered: vec![0; days],
            lost_on_link: 0,
            lost_asleep: 0,
            buckets,
        }
    }

    pub fn context(&self) -> &RunContext {
        &self.ctx
    }

    fn day_slot(&self, t: SimTime) -> usize {
        (t.day() as usize).min(self.daily_generated.len() - 1)
    }

    pub fn observe(&mut self, r: &EventRecord) {
        match &r.detail {
            Detail::Sample { room, temp, humidity, aqi, .. } => {
                if let Some(b) = self.buckets.get_mut(room) {
                    let slot = (r.t.as_millis() / MS_PER_HOUR) as usize;
                    if let Some(b) = b.get_mut(slot) {
                        b.add(*temp, *humidity, *aqi);
                    }
                }
            }
            Detail::AlertTx { .. } | Detail::AggregateTx { .. } | Detail::Reply { .. } => {
                let slot = self.day_slot(r.t);
                self.daily_generated[slot] += 1;
                let c = self.counts.entry(r.node.clone()).or_default();
                c.generated += 1;
                if matches!(r.detail, Detail::AlertTx { .. }) {
                    c.alerts += 1;
                }
            }
            Detail::Forward { .. } => self.counts.entry(r.node.clone()).or_default().forwarded += 1,
            Detail::Delivery { origin, payload, created, .. } if payload.is_report() => {
                let slot = self.day_slot(*created);
                self.daily_delivered[slot] += 1;
                self.counts.entry(origin.clone()).or_default().delivered += 1;
            }
            Detail::Loss { payload, cause, .. } if payload.is_report() => match cause {
                Cause::Link => self.lost_on_link += 1,
                Cause::Asleep => self.lost_asleep += 1,
            },
            _ => {}
        }
    }

    pub fn finish(self, ledgers: &[EnergyLedger]) -> Metrics {
        let ctx = &self.ctx;
        let nodes = ctx
            .nodes
            .iter()
            .map(|(id, room)| {
                let c = self.counts.get(id).cloned().unwrap_or_default();
                let ledger = ledgers.iter().find(|l| &l.node == id);
                NodeMetrics {
                    node: id.clone(),
                    room: room.clone(),
                    generated: c.generated,
                    delivered: c.delivered,
                    alerts: c.alerts,
                    forwarded: c.forwarded,
                    energy_j: ledger.map_or(0.0, EnergyLedger::total_j),
                    energy_by_component_j: Component::ALL
                        .iter()
                        .map(|&comp| (comp.name().to_string(), ledger.map_or(0.0, |l| l.energy_j(comp))))
                        .collect(),
                }
            })
            .collect::<Vec<_>>();
        let generated: u64 = self.daily_generated.iter().sum();
        let delivered: u64 = self.daily_delivered.iter().sum();
        let daily_throughput = (0..ctx.days())
            .map(|d| {
                let (g, dl) = (self.daily_generated[d as usize], self.daily_delivered[d as usize]);
                DailyThroughput { day: d, date: ctx.date(d), generated: g, delivered: dl, throughput: ratio(dl, g) }
            })
            .collect();
        let mut hourly = BTreeMap::new();
        let mut daily = BTreeMap::new();
        for (room, buckets) in &self.buckets {
            let per_day: Vec<HourlySeries> =
                buckets.chunks(24).enumerate().map(|(d, b)| series_from(room, d as u64, b)).collect();
            let aqi = buckets
                .chunks(24)
                .map(|b| {
                    let mut s = Sums::default();
                    b.iter().for_each(|x| s.merge(x));
                    s.mean(|s| s.aqi)
                })
                .collect();
            hourly.insert(room.clone(), per_day);
            daily.insert(room.clone(), aqi);
        }
        Metrics {
            generated,
            delivered,
            throughput: ratio(delivered, generated),
            lost_on_link: self.lost_on_link,
            lost_asleep: self.lost_asleep,
            nodes,
            daily_throughput,
            hourly,
            daily_aqi: daily,
        }
    }
}

impl EventSink for MetricsCollector {
    fn record(&mut self, record: &EventRecord) -> io::Result<()> {
        self.observe(record);
        Ok(())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v}"))
}

/// Writes `throughput_daily.csv`, `energy_by_node.csv`, `daily_aqi.csv`
/// and one `hourly_<room>.csv` per room into `dir`.
pub fn write_csv(dir: &Path, metrics: &Metrics, ctx: &RunContext) -> Result<Vec<String>, MetricsError> {
    let mut written = Vec::new();

    let mut w = csv::Writer::from_path(dir.join("throughput_daily.csv"))?;
    w.write_record(["date", "day", "generated", "delivered", "throughput"])?;
    for d in &metrics.daily_throughput {
        w.write_record([
            d.date.to_string(),
            d.day.to_string(),
            d.generated.to_string(),
            d.delivered.to_string(),
            fmt_opt(d.throughput),
        ])?;
    }
    w.flush()?;
    written.push("throughput_daily.csv".to_string());

    let mut w = csv::Writer::from_path(dir.join("energy_by_node.csv"))?;
    let mut header = vec!["node".to_string(), "room".into(), "generated".into(), "delivered".into(), "total_j".into()];
    header.extend(Component::ALL.iter().map(|c| format!("{}_j", c.name())));
    w.write_record(&header)?;
    for n in &metrics.nodes {
        let mut row = vec![
            n.node.clone(),
            n.room.clone().unwrap_or_default(),
            n.generated.to_string(),
            n.delivered.to_string(),
            format!("{}", n.energy_j),
        ];
        row.extend(Component::ALL.iter().map(|c| format!("{}", n.energy_by_component_j[c.name()])));
        w.write_record(&row)?;
    }
    w.flush()?;
    written.push("energy_by_node.csv".to_string());

    for (room, days) in &metrics.hourly {
        let name = format!("hourly_{room}.csv");
        let mut w = csv::Writer::from_path(dir.join(&name))?;
        w.write_record(["timestamp", "day", "hour", "samples", "temp_c", "humidity_pct", "aqi"])?;
        for s in days {
            for h in 0..24 {
                let t = SimTime(s.day * MS_PER_DAY + h as u64 * MS_PER_HOUR);
                w.write_record([
                    ctx.timestamp(t).format("%Y-%m-%dT%H:%M:%S").to_string(),
                    s.day.to_string(),
                    h.to_string(),
                    s.samples[h].to_string(),
                    fmt_opt(s.temp[h]),
                    fmt_opt(s.humidity[h]),
                    fmt_opt(s.aqi[h]),
                ])?;
            }
        }
        w.flush()?;
        written.push(name);
    }

    let mut w = csv::Writer::from_path(dir.join("daily_aqi.csv"))?;
    let rooms: Vec<&RoomId> = metrics.daily_aqi.keys().collect();
    let mut header = vec!["date".to_string(), "day".into()];
    header.extend(rooms.iter().map(|r| r.to_string()));
    w.write_record(&header)?;
    for d in 0..ctx.days() {
        let mut row = vec![ctx.date(d).to_string(), d.to_string()];
        row.extend(rooms.iter().map(|r| fmt_opt(metrics.daily_aqi[*r][d as usize])));
        w.write_record(&row)?;
    }
    w.flush()?;
    written.push("daily_aqi.csv".to_string());
    Ok(written)
}

/// Writes the full metrics as `metrics.json`.
pub fn write_json(dir: &Path, metrics: &Metrics) -> Result<Vec<String>, MetricsError> {
    fs::write(dir.join("metrics.json"), serde_json::to_vec_pretty(metrics)?)?;
    Ok(vec!["metrics.json".to_string()])
}
