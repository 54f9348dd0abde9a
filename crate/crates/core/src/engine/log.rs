//! Line-delimited JSON event records `{ts, session, event, detail}`.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use serde_json::Value as Json;

enum Sink {
    Discard,
    Memory(Vec<String>),
    File(File),
}

pub struct EventLog {
    sink: Mutex<Sink>,
    epoch: Instant,
}

impl EventLog {
    fn with(sink: Sink) -> EventLog {
        EventLog {
            sink: Mutex::new(sink),
            epoch: Instant::now(),
        }
    }

    pub fn discard() -> EventLog {
        EventLog::with(Sink::Discard)
    }

    pub fn memory() -> EventLog {
        EventLog::with(Sink::Memory(Vec::new()))
    }

    pub fn file(path: impl AsRef<Path>) -> std::io::Result<EventLog> {
        Ok(EventLog::with(Sink::File(File::create(path)?)))
    }

    /// `ts` is microseconds since the log was opened. `detail` should be an
    /// object; it gets a `service` key.
    pub fn record(&self, service: &str, session: Option<u64>, event: &str, mut detail: Json) {
        let mut sink = self.sink.lock().expect("log lock");
        if matches!(*sink, Sink::Discard) {
            return;
        }
        if let Json::Object(o) = &mut detail {
            o.insert("service".into(), Json::String(service.to_owned()));
        }
        let session = session.map_or("null".to_owned(), |s| s.to_string());
        let line = format!(
            "{{\"ts\":{},\"session\":{},\"event\":{},\"detail\":{}}}",
            self.epoch.elapsed().as_micros(),
            session,
            Json::String(event.to_owned()),
            detail
        );
        match &mut *sink {
            Sink::Discard => {}
            Sink::Memory(v) => v.push(line),
            Sink::File(f) => {
                let _ = writeln!(f, "{line}");
            }
        }
    }

    /// Recorded lines (memory sink only).
    pub fn lines(&self) -> Vec<String> {
        match &*self.sink.lock().expect("log lock") {
            Sink::Memory(v) => v.clone(),
            _ => Vec::new(),
        }
    }

    pub fn records(&self) -> Vec<Json> {
        self.lines()
            .iter()
            .filter_map(|l| serde_json::from_str(l).ok())
            .collect()
    }
}

impl Default for EventLog {
    fn default() -> Self {
        EventLog::discard()
    }
}
