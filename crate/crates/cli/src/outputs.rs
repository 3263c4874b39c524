//! Output directory management: every file is hashed as it is written and
//! the run ends with a manifest listing the command, the scenario hash,
//! versions, seed, and one content hash per output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use rtlab_core::grid::{KineticState, PhaseGrid};

use crate::fail::Failure;

pub struct Sink {
    dir: PathBuf,
    entries: Vec<(String, String)>,
}

/// Run identity recorded in the manifest.
pub struct Meta<'a> {
    pub command: &'a str,
    pub scenario_path: String,
    pub scenario_name: &'a str,
    pub scenario_sha256: String,
    pub seed: u64,
    pub threads: usize,
}

struct HashingWriter<W: Write> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex(&h.finalize())
}

fn hex(digest: &[u8]) -> String {
    let mut s = String::with_capacity(2 * digest.len());
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

impl Sink {
    pub fn create(dir: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| {
            Failure::Config(format!(
                "cannot create output directory {}: {e}",
                dir.display()
            ))
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn open(&self, name: &str) -> Result<HashingWriter<BufWriter<File>>, Failure> {
        let path = self.dir.join(name);
        let file = File::create(&path)
            .map_err(|e| Failure::Run(format!("cannot write {}: {e}", path.display())))?;
        Ok(HashingWriter {
            inner: BufWriter::new(file),
            hasher: Sha256::new(),
        })
    }

    fn seal(&mut self, name: &str, mut w: HashingWriter<BufWriter<File>>) -> Result<(), Failure> {
        w.flush()
            .map_err(|e| Failure::Run(format!("cannot write {name}: {e}")))?;
        self.entries.push((name.to_string(), hex(&w.hasher.finalize())));
        Ok(())
    }

    /// Write a CSV file: one header line, then the given rows.
    pub fn csv<I>(&mut self, name: &str, header: &str, rows: I) -> Result<(), Failure>
    where
        I: IntoIterator<Item = String>,
    {
        let mut w = self.open(name)?;
        let io = |e: std::io::Error| Failure::Run(format!("cannot write {name}: {e}"));
        writeln!(w, "{header}").map_err(io)?;
        for row in rows {
            writeln!(w, "{row}").map_err(io)?;
        }
        self.seal(name, w)
    }

    /// Write a phase-space state in the binary layout.
    pub fn state(
        &mut self,
        name: &str,
        grid: &PhaseGrid,
        state: &KineticState,
    ) -> Result<(), Failure> {
        let mut w = self.open(name)?;
        rtlab_core::io::write_state_to(&mut w, grid, state)?;
        self.seal(name, w)
    }

    /// Write manifest.txt; `failure` marks the run partial (numerical
    /// aborts) or records a failed-certificate verdict alongside the
    /// complete outputs it was derived from.
    pub fn manifest(&self, meta: &Meta, failure: Option<&Failure>) -> Result<(), Failure> {
        let path = self.dir.join("manifest.txt");
        let file = File::create(&path)
            .map_err(|e| Failure::Run(format!("cannot write {}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        let io = |e: std::io::Error| Failure::Run(format!("cannot write manifest.txt: {e}"));
        writeln!(w, "command: {}", meta.command).map_err(io)?;
        writeln!(w, "scenario: {}", meta.scenario_path).map_err(io)?;
        writeln!(w, "scenario_name: {}", meta.scenario_name).map_err(io)?;
        writeln!(w, "scenario_sha256: {}", meta.scenario_sha256).map_err(io)?;
        writeln!(w, "rtlab_version: {}", env!("CARGO_PKG_VERSION")).map_err(io)?;
        writeln!(w, "core_version: {}", rtlab_core::VERSION).map_err(io)?;
        writeln!(w, "seed: {}", meta.seed).map_err(io)?;
        writeln!(w, "threads: {}", meta.threads).map_err(io)?;
        match failure {
            None => writeln!(w, "status: complete").map_err(io)?,
            Some(Failure::Certificate(msg)) => {
                writeln!(w, "status: complete").map_err(io)?;
                writeln!(w, "verdict: certificate-failed").map_err(io)?;
                writeln!(w, "error: {msg}").map_err(io)?;
            }
            Some(other) => {
                writeln!(w, "status: partial").map_err(io)?;
                writeln!(w, "error: {}", other.message()).map_err(io)?;
            }
        }
        for (name, sha) in &self.entries {
            writeln!(w, "output: {name} sha256: {sha}").map_err(io)?;
        }
        w.flush().map_err(io)
    }
}
