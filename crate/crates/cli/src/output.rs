//! Output directory handling: provenance headers and the run lock.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use doaopt::grid::Grid;
use doaopt::solve::CellField;
use doaopt::Generator;

pub const LOCK_NAME: &str = ".doaopt.lock";

/// Exclusive claim on an output directory, released on drop.
pub struct OutputDir {
    dir: PathBuf,
    lock: PathBuf,
    provenance: String,
}

#[derive(Debug)]
pub enum OutputError {
    Locked(PathBuf),
    Io(std::io::Error),
}

impl From<std::io::Error> for OutputError {
    fn from(e: std::io::Error) -> Self {
        OutputError::Io(e)
    }
}

impl std::fmt::Display for OutputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OutputError::Locked(p) => write!(
                f,
                "output directory is in use (lockfile {} exists)",
                p.display()
            ),
            OutputError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl OutputDir {
    pub fn claim(dir: &Path, config_hash: &str) -> Result<Self, OutputError> {
        fs::create_dir_all(dir)?;
        let lock = dir.join(LOCK_NAME);
        let mut f = match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(OutputError::Locked(lock))
            }
            Err(e) => return Err(e.into()),
        };
        writeln!(f, "pid {}", std::process::id())?;
        writeln!(f, "config {config_hash}")?;
        let provenance = format!(
            "doaopt {} config sha256:{config_hash}",
            env!("CARGO_PKG_VERSION")
        );
        Ok(Self {
            dir: dir.to_path_buf(),
            lock,
            provenance,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn create(&self, name: &str) -> std::io::Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    pub fn write_generator(&self, name: &str, g: &Generator) -> doaopt::Result<PathBuf> {
        let mut w = self.create(name)?;
        doaopt::io::write_generator(&mut w, g, Some(&self.provenance))?;
        w.flush()?;
        Ok(self.path(name))
    }

    pub fn write_field(
        &self,
        name: &str,
        grid: &Grid,
        field: &CellField,
    ) -> doaopt::Result<PathBuf> {
        let mut w = self.create(name)?;
        doaopt::io::write_field(&mut w, grid, field, Some(&self.provenance))?;
        w.flush()?;
        Ok(self.path(name))
    }

    /// Text file with the provenance comment prepended.
    pub fn write_text(&self, name: &str, body: &str) -> std::io::Result<PathBuf> {
        let mut w = self.create(name)?;
        writeln!(w, "# {}", self.provenance)?;
        w.write_all(body.as_bytes())?;
        w.flush()?;
        Ok(self.path(name))
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}
