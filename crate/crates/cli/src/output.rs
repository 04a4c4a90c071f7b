//! Output directory with atomic writes and a record of what was written.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use specshare::Table;
use tempfile::NamedTempFile;

pub struct OutputDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    /// File names written so far, in order.
    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// Write through a temp file in the same directory, then rename over `name`.
    pub fn write_with(&mut self, name: &str, fill: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> io::Result<()> {
        let mut tmp = NamedTempFile::new_in(&self.dir)?;
        {
            let mut buf = io::BufWriter::new(tmp.as_file_mut());
            fill(&mut buf)?;
            buf.flush()?;
        }
        tmp.as_file().sync_all()?;
        tmp.persist(self.dir.join(name)).map_err(|e| e.error)?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n")
        })
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> io::Result<()> {
        self.write_with(name, |w| {
            // RFC 4180 line endings.
            let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(w);
            csv.write_record(&table.header)?;
            for row in &table.rows {
                csv.write_record(row)?;
            }
            csv.flush()
        })
    }
}
