//! Marked event streams on `[0, T]` and their on-disk CSV form.
//!
//! A stream file is a CSV with header `time,mark`, rows sorted by time. The
//! horizon and mark space live in a JSON sidecar next to it (same stem,
//! `.json` extension) of the form
//! `{"horizon": T, "space_kind": "continuous"|"discrete", "bounds_or_labels": [...]}`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::space::MarkSpace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub mark: f64,
}

impl Event {
    pub fn new(time: f64, mark: f64) -> Self {
        Event { time, mark }
    }
}

/// Strictly time-ordered events observed on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    events: Vec<Event>,
    horizon: f64,
    space: MarkSpace,
}

impl EventStream {
    pub fn new(events: Vec<Event>, horizon: f64, space: MarkSpace) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        let mut prev = f64::NEG_INFINITY;
        for e in &events {
            if !e.time.is_finite() || e.time < 0.0 || e.time > horizon {
                return Err(Error::TimeOutOfWindow { t: e.time, horizon });
            }
            if e.time <= prev {
                return Err(Error::invalid(format!(
                    "event times must be strictly increasing ({} follows {prev})",
                    e.time
                )));
            }
            prev = e.time;
            space.check(e.mark)?;
        }
        Ok(EventStream {
            events,
            horizon,
            space,
        })
    }

    /// Internal constructor for callers that already guarantee the invariants.
    pub(crate) fn from_parts_unchecked(events: Vec<Event>, horizon: f64, space: MarkSpace) -> Self {
        debug_assert!(events.windows(2).all(|w| w[0].time < w[1].time));
        EventStream {
            events,
            horizon,
            space,
        }
    }

    pub fn empty(horizon: f64, space: MarkSpace) -> Result<Self> {
        Self::new(Vec::new(), horizon, space)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn space(&self) -> &MarkSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.events.iter().map(|e| e.time)
    }

    /// The first `n` events, observed up to the time of the `n`th one.
    pub fn prefix(&self, n: usize) -> Result<EventStream> {
        if n == 0 || n > self.events.len() {
            return Err(Error::InsufficientEvents {
                needed: n.max(1),
                available: self.events.len(),
            });
        }
        let events = self.events[..n].to_vec();
        let horizon = events[n - 1].time;
        if horizon <= 0.0 {
            return Err(Error::invalid("prefix would end at time zero"));
        }
        Ok(EventStream::from_parts_unchecked(events, horizon, self.space.clone()))
    }

    /// Same times, new marks drawn from another space.
    pub fn with_marks(&self, marks: &[f64], space: MarkSpace) -> Result<EventStream> {
        if marks.len() != self.events.len() {
            return Err(Error::Dimension {
                expected: self.events.len(),
                found: marks.len(),
            });
        }
        let events = self
            .events
            .iter()
            .zip(marks)
            .map(|(e, &m)| Event::new(e.time, m))
            .collect();
        EventStream::new(events, self.horizon, space)
    }

    pub fn descriptor(&self) -> StreamDescriptor {
        StreamDescriptor {
            horizon: self.horizon,
            space: self.space.clone(),
        }
    }

    /// Writes `path` (CSV) and its JSON sidecar; returns the sidecar path.
    pub fn write(&self, path: &Path) -> Result<PathBuf> {
        self.write_csv(path)?;
        let sidecar = sidecar_path(path);
        self.descriptor().write(&sidecar)?;
        Ok(sidecar)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(BufWriter::new(file))
    }

    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "mark"])?;
        let discrete = self.space.is_discrete();
        for e in &self.events {
            let mark = if discrete {
                (e.mark as i64).to_string()
            } else {
                e.mark.to_string()
            };
            w.write_record([e.time.to_string(), mark])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Reads a CSV stream together with its sidecar descriptor.
    pub fn read(path: &Path) -> Result<EventStream> {
        let descriptor = StreamDescriptor::read(&sidecar_path(path))?;
        Self::read_csv(path, &descriptor)
    }

    pub fn read_csv(path: &Path, descriptor: &StreamDescriptor) -> Result<EventStream> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(file, descriptor)
    }

    pub fn read_csv_from<R: std::io::Read>(
        reader: R,
        descriptor: &StreamDescriptor,
    ) -> Result<EventStream> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "time" || &headers[1] != "mark" {
            return Err(Error::invalid(format!(
                "event file header must be `time,mark`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let events = r
            .deserialize::<Event>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        EventStream::new(events, descriptor.horizon, descriptor.space.clone())
    }
}

/// `events.csv` → `events.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Horizon and mark space of a stream file.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamDescriptor {
    pub horizon: f64,
    pub space: MarkSpace,
}

impl StreamDescriptor {
    pub fn to_json(&self) -> Value {
        let (kind, values) = match &self.space {
            MarkSpace::Continuous { lower, upper } => ("continuous", vec![
                Value::from(*lower),
                Value::from(*upper),
            ]),
            MarkSpace::Discrete { labels } => {
                ("discrete", labels.iter().map(|&l| Value::from(l)).collect())
            }
        };
        serde_json::json!({
            "horizon": self.horizon,
            "space_kind": kind,
            "bounds_or_labels": values,
        })
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let bad = |msg: &str| Error::invalid(format!("stream descriptor: {msg}"));
        let horizon = value
            .get("horizon")
            .and_then(Value::as_f64)
            .ok_or_else(|| bad("missing numeric `horizon`"))?;
        let kind = value
            .get("space_kind")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing `space_kind`"))?;
        let values = value
            .get("bounds_or_labels")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing `bounds_or_labels` array"))?;
        let space = match kind {
            "continuous" => {
                let bounds: Vec<f64> = values.iter().filter_map(Value::as_f64).collect();
                if bounds.len() != 2 || values.len() != 2 {
                    return Err(bad("continuous space needs exactly two numeric bounds"));
                }
                MarkSpace::interval(bounds[0], bounds[1])?
            }
            "discrete" => {
                let labels = values
                    .iter()
                    .map(|v| v.as_i64().ok_or_else(|| bad("labels must be integers")))
                    .collect::<Result<Vec<_>>>()?;
                MarkSpace::labels(labels)?
            }
            other => return Err(bad(&format!("unknown space_kind `{other}`"))),
        };
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(bad("horizon must be positive"));
        }
        Ok(StreamDescriptor { horizon, space })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json())?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&serde_json::from_str(&text)?)
    }
}
