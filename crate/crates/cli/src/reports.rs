//! Output writers: CSV files with a config-hash comment line, the JSON
//! selection report, and the bounds text file.

use anyhow::{Context, Result};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use srm_irl::srm::SrmReport;

/// Writes a CSV with a comment line carrying the config hash and seed,
/// then a header row and the data rows.
pub fn write_csv<P: AsRef<Path>>(
    path: P,
    config_hash: &str,
    seed: u64,
    header: &str,
    rows: &[String],
) -> Result<()> {
    let mut w = BufWriter::new(
        File::create(path.as_ref())
            .with_context(|| format!("creating {}", path.as_ref().display()))?,
    );
    writeln!(w, "# config_hash={config_hash} seed={seed}")?;
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{row}")?;
    }
    Ok(())
}

pub fn write_json_report<P: AsRef<Path>>(path: P, report: &SrmReport) -> Result<()> {
    let file = File::create(path.as_ref())
        .with_context(|| format!("creating {}", path.as_ref().display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), report)
        .context("serializing the selection report")?;
    Ok(())
}

pub fn read_json_report<P: AsRef<Path>>(path: P) -> Result<SrmReport> {
    let file = File::open(path.as_ref())
        .with_context(|| format!("opening {}", path.as_ref().display()))?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .context("parsing the selection report")
}

/// One `key value` line per entry, comments carrying provenance.
pub fn write_key_values<P: AsRef<Path>>(
    path: P,
    config_hash: &str,
    seed: u64,
    entries: &[(&str, String)],
) -> Result<()> {
    let mut w = BufWriter::new(
        File::create(path.as_ref())
            .with_context(|| format!("creating {}", path.as_ref().display()))?,
    );
    writeln!(w, "# config_hash={config_hash} seed={seed}")?;
    for (key, value) in entries {
        writeln!(w, "{key} {value}")?;
    }
    Ok(())
}

/// Full float precision for CSV cells so downstream plots are exact.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}
