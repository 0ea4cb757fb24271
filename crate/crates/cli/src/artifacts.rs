//! Writers for the run artifacts. Every file is a plain function of its
//! inputs so that identical runs produce identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cwsbie::vec3::Vec3;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|source| CliError::Io { path: root.display().to_string(), source })?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(|source| CliError::Io { path: path.display().to_string(), source })
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        self.write(name, &text)
    }
}

/// `x,y,z,<a>x,<a>y,<a>z` rows for vector samples.
pub fn vector_csv(label: &str, points: &[Vec3], values: &[Vec3]) -> String {
    let mut s = format!("x,y,z,{label}x,{label}y,{label}z\n");
    for (p, v) in points.iter().zip(values) {
        let _ = writeln!(s, "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", p[0], p[1], p[2], v[0], v[1], v[2]);
    }
    s
}

/// Long-format table `table,x,value`.
#[derive(Default)]
pub struct Table {
    text: String,
}

impl Table {
    pub fn new() -> Self {
        Self { text: String::from("table,x,value\n") }
    }

    pub fn push(&mut self, table: &str, x: f64, value: f64) {
        let _ = writeln!(self.text, "{table},{x},{value:.17e}");
    }

    /// Rows `x = start, start + 1, ...`.
    pub fn push_series(&mut self, table: &str, start: usize, values: &[f64]) {
        for (k, v) in values.iter().enumerate() {
            self.push(table, (start + k) as f64, *v);
        }
    }

    pub fn into_string(self) -> String {
        self.text
    }
}
