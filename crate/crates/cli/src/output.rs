use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        self != Format::Csv
    }

    pub fn csv(self) -> bool {
        self != Format::Json
    }
}

/// 17 significant digits.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub struct Sink {
    pub dir: PathBuf,
    pub format: Format,
    written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: &Path, format: Format) -> Result<Self, String> {
        fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), format, written: vec![] })
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), String> {
        if !self.format.json() {
            return Ok(());
        }
        let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())? + "\n";
        self.write(name, &text)
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), String> {
        if !self.format.csv() {
            return Ok(());
        }
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(header).map_err(|e| e.to_string())?;
        for r in rows {
            w.write_record(r).map_err(|e| e.to_string())?;
        }
        let bytes = w.into_inner().map_err(|e| e.to_string())?;
        self.write(name, &String::from_utf8(bytes).map_err(|e| e.to_string())?)
    }

    /// Written whatever the format, since it is not a result artifact.
    pub fn timings(&mut self, t: &Timings) -> Result<(), String> {
        let text = serde_json::to_string_pretty(t).map_err(|e| e.to_string())? + "\n";
        self.write("timings.json", &text)
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), String> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

#[derive(Debug, Default, Serialize)]
pub struct Timings {
    pub command: String,
    pub threads: usize,
    pub stages: Vec<(String, f64)>,
}

impl Timings {
    pub fn new(command: &str) -> Self {
        Self { command: command.into(), threads: rayon::current_num_threads(), stages: vec![] }
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.stages.push((stage.into(), t.elapsed().as_secs_f64()));
        out
    }
}
