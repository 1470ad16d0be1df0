//! File-level output: append-only diagnostics CSV, the binary checkpoint
//! container, and the resolved-config archive.
//!
//! Diagnostics are CSV with a fixed, versioned column order (one header
//! line, UTF-8, '.' decimal separator, 17 significant digits), flushed per
//! row so a crash leaves a valid prefix. A stopping event is appended as a
//! machine-readable comment footer.
//!
//! The checkpoint container is little-endian:
//!
//! ```text
//! offset  size  field
//! 0       8     magic "KSNSCKPT"
//! 8       4     format version (u32, = 1)
//! 12      4     points_per_side (u32)
//! 16      8     box_length (f64)
//! 24      8     dt (f64)
//! 32      8     step index (u64; time = step * dt)
//! 40      8     wiener seed (u64)
//! 48      16    wiener word position (u128: lo u64, hi u64)
//! 64      8     consumed steps (u64)
//! 72      8     running sup of ||n||_p (f64)
//! 80      8     running sup of ||u||_scap + ||grad u||_r (f64)
//! 88      8     initial mass (f64)
//! 96      8     positivity violations (u64)
//! 104     8     worst density minimum (f64)
//! 112     8     prev free energy (f64)
//! 120     8     prev dissipation (f64)
//! 128     8     config byte length (u64) = C
//! 136     C     resolved config, TOML, UTF-8
//! 136+C   -     three complex arrays (n, ux, uy), row-major,
//!               N*N*(re f64, im f64) each
//! ```

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::functionals::DiagnosticsRow;
use crate::grid::Spectrum;
use crate::runner::{CheckpointState, PositivityStats};
use crate::stepper::{SpectralState, StoppingEvent, XSups};

const CHECKPOINT_MAGIC: &[u8; 8] = b"KSNSCKPT";
const CHECKPOINT_VERSION: u32 = 1;

/// Append-only CSV writer for the diagnostics time series.
pub struct DiagnosticsWriter {
    file: BufWriter<File>,
    path: PathBuf,
}

impl DiagnosticsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = File::create(path)?;
        let mut w = DiagnosticsWriter { file: BufWriter::new(file), path: path.to_path_buf() };
        let header = DiagnosticsRow::COLUMNS.join(",");
        writeln!(w.file, "{header}")?;
        w.file.flush()?;
        Ok(w)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write_row(&mut self, row: &DiagnosticsRow) -> Result<()> {
        let mut line = String::with_capacity(17 * 26);
        for (i, v) in row.values().iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v:.16e}"));
        }
        writeln!(self.file, "{line}")?;
        self.file.flush()?;
        Ok(())
    }

    /// Machine-readable footer recording a stopping event.
    pub fn write_event_footer(&mut self, event: &StoppingEvent) -> Result<()> {
        writeln!(
            self.file,
            "# stopping_event,kind={},time={:.16e},value={:.16e},norm={}",
            match event.kind {
                crate::stepper::StoppingKind::NormCap => "norm_cap",
                crate::stepper::StoppingKind::EntropyCap => "entropy_cap",
                crate::stepper::StoppingKind::NonFinite => "nonfinite",
            },
            event.time,
            event.triggering_value,
            event.triggering_norm
        )?;
        self.file.flush()?;
        Ok(())
    }
}

/// Parse a diagnostics CSV back into rows (comment lines skipped); returns
/// the rows and the footer event line when present.
pub fn read_diagnostics(path: &Path) -> Result<(Vec<Vec<f64>>, Option<String>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::contract("empty diagnostics file"))?;
    let expected = DiagnosticsRow::COLUMNS.join(",");
    if header != expected {
        return Err(Error::contract(format!("unexpected diagnostics header: {header}")));
    }
    let mut rows = Vec::new();
    let mut footer = None;
    for line in lines {
        if line.starts_with('#') {
            if line.starts_with("# stopping_event") {
                footer = Some(line.to_string());
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(str::parse::<f64>).collect();
        rows.push(row.map_err(|e| Error::contract(format!("bad diagnostics row: {e}")))?);
    }
    Ok((rows, footer))
}

/// Write the fully-resolved configuration next to the run artifacts.
pub fn archive_config(dir: &Path, cfg: &RunConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("config.resolved.toml");
    let mut f = File::create(&path)?;
    f.write_all(cfg.to_toml_string().as_bytes())?;
    Ok(path)
}

/// FNV-1a hash of the resolved config; stored in run footers for auditing.
pub fn config_hash(cfg: &RunConfig) -> u64 {
    let bytes = cfg.to_toml_string().into_bytes();
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn write_checkpoint(path: &Path, cfg: &RunConfig, cp: &CheckpointState) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let file = OpenOptions::new().write(true).create(true).truncate(true).open(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    w.write_u32::<LittleEndian>(cfg.grid.points_per_side as u32)?;
    w.write_f64::<LittleEndian>(cfg.grid.box_length)?;
    w.write_f64::<LittleEndian>(cfg.stepper.dt)?;
    w.write_u64::<LittleEndian>(cp.spec.step)?;
    w.write_u64::<LittleEndian>(cp.seed)?;
    w.write_u64::<LittleEndian>(cp.word_pos as u64)?;
    w.write_u64::<LittleEndian>((cp.word_pos >> 64) as u64)?;
    w.write_u64::<LittleEndian>(cp.consumed_steps)?;
    w.write_f64::<LittleEndian>(cp.sups.n)?;
    w.write_f64::<LittleEndian>(cp.sups.u)?;
    w.write_f64::<LittleEndian>(cp.initial_mass)?;
    w.write_u64::<LittleEndian>(cp.positivity.violations)?;
    w.write_f64::<LittleEndian>(cp.positivity.worst)?;
    w.write_f64::<LittleEndian>(cp.prev_free_energy)?;
    w.write_f64::<LittleEndian>(cp.prev_dissipation)?;
    let config_bytes = cfg.to_toml_string().into_bytes();
    w.write_u64::<LittleEndian>(config_bytes.len() as u64)?;
    w.write_all(&config_bytes)?;
    for spec in [&cp.spec.n, &cp.spec.ux, &cp.spec.uy] {
        for c in spec.iter() {
            w.write_f64::<LittleEndian>(c.re)?;
            w.write_f64::<LittleEndian>(c.im)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(RunConfig, CheckpointState)> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".to_string()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = r.read_u32::<LittleEndian>()? as usize;
    let box_length = r.read_f64::<LittleEndian>()?;
    let dt = r.read_f64::<LittleEndian>()?;
    let step = r.read_u64::<LittleEndian>()?;
    let seed = r.read_u64::<LittleEndian>()?;
    let lo = r.read_u64::<LittleEndian>()? as u128;
    let hi = r.read_u64::<LittleEndian>()? as u128;
    let word_pos = lo | (hi << 64);
    let consumed_steps = r.read_u64::<LittleEndian>()?;
    let sup_n = r.read_f64::<LittleEndian>()?;
    let sup_u = r.read_f64::<LittleEndian>()?;
    let initial_mass = r.read_f64::<LittleEndian>()?;
    let violations = r.read_u64::<LittleEndian>()?;
    let worst = r.read_f64::<LittleEndian>()?;
    let prev_free_energy = r.read_f64::<LittleEndian>()?;
    let prev_dissipation = r.read_f64::<LittleEndian>()?;
    let config_len = r.read_u64::<LittleEndian>()? as usize;
    let mut config_bytes = vec![0u8; config_len];
    r.read_exact(&mut config_bytes)?;
    let config_text = String::from_utf8(config_bytes)
        .map_err(|e| Error::Checkpoint(format!("config not UTF-8: {e}")))?;
    let cfg = RunConfig::from_toml_str(&config_text)?;
    if cfg.grid.points_per_side != n
        || cfg.grid.box_length != box_length
        || cfg.stepper.dt != dt
    {
        return Err(Error::Checkpoint(
            "embedded config disagrees with checkpoint geometry".to_string(),
        ));
    }
    let mut read_spectrum = || -> Result<Spectrum> {
        let mut spec = Spectrum::zeros((n, n));
        for c in spec.iter_mut() {
            let re = r.read_f64::<LittleEndian>()?;
            let im = r.read_f64::<LittleEndian>()?;
            *c = Complex::new(re, im);
        }
        Ok(spec)
    };
    let sn = read_spectrum()?;
    let sux = read_spectrum()?;
    let suy = read_spectrum()?;
    let cp = CheckpointState {
        spec: SpectralState { n: sn, ux: sux, uy: suy, step },
        seed,
        word_pos,
        consumed_steps,
        sups: XSups { n: sup_n, u: sup_u },
        initial_mass,
        positivity: PositivityStats { violations, worst },
        prev_free_energy,
        prev_dissipation,
    };
    Ok((cfg, cp))
}
