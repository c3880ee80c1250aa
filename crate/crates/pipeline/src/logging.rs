//! Logger that writes plain lines to stderr and timestamped lines to the
//! run log. Timestamps appear nowhere else.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use log::{Level, LevelFilter, Log, Metadata, Record};

struct RunLogger {
    stderr_level: LevelFilter,
    file: Mutex<Option<File>>,
}

static LOGGER: RunLogger = RunLogger {
    stderr_level: LevelFilter::Info,
    file: Mutex::new(None),
};

impl Log for RunLogger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= Level::Info || metadata.target().starts_with("delirium")
    }

    fn log(&self, record: &Record) {
        if !self.enabled(record.metadata()) {
            return;
        }
        if record.level() <= self.stderr_level {
            eprintln!("[{}] {}", record.level(), record.args());
        }
        if let Some(f) = self.file.lock().expect("log mutex").as_mut() {
            let now = chrono::Local::now().format("%Y-%m-%dT%H:%M:%S%.3f%:z");
            let _ = writeln!(
                f,
                "{now} {:<5} {}: {}",
                record.level(),
                record.target(),
                record.args()
            );
        }
    }

    fn flush(&self) {
        if let Some(f) = self.file.lock().expect("log mutex").as_mut() {
            let _ = f.flush();
        }
    }
}

/// Installs the logger once; later calls are no-ops.
pub fn init() {
    if log::set_logger(&LOGGER).is_ok() {
        log::set_max_level(LevelFilter::Debug);
    }
}

/// Appends subsequent records to `path` (created with its parent directory).
pub fn attach_run_log(path: &Path) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let f = OpenOptions::new().create(true).append(true).open(path)?;
    *LOGGER.file.lock().expect("log mutex") = Some(f);
    Ok(())
}

pub fn detach_run_log() {
    log::logger().flush();
    *LOGGER.file.lock().expect("log mutex") = None;
}
