//! Plain-text demonstration persistence.
//!
//! One record per trajectory in a line-delimited format. The header carries
//! the plant dimensions, horizon, discount and generation seed; every number
//! is written with 17 significant digits so values round-trip exactly and
//! dynamics replay checks still hold after a load.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::mdp::{Demonstration, LqrSystem, Trajectory};

const MAGIC: &str = "# srm-irl demonstration v1";

/// Header of a demonstration file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetHeader {
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    pub discount: f64,
    pub seed: u64,
    pub trajectories: usize,
}

/// 17 significant digits: exact for every finite f64 on the way back in.
fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a demonstration with the system's dimensions in the header.
pub fn write_demonstration<W: Write>(
    writer: &mut W,
    demo: &Demonstration,
    system: &LqrSystem,
) -> Result<()> {
    writeln!(writer, "{MAGIC}")?;
    writeln!(writer, "state_dim {}", system.state_dim())?;
    writeln!(writer, "action_dim {}", system.action_dim())?;
    writeln!(writer, "horizon {}", system.horizon())?;
    writeln!(writer, "discount {}", format_float(system.discount()))?;
    writeln!(writer, "seed {}", demo.seed())?;
    writeln!(writer, "trajectories {}", demo.len())?;
    for (i, traj) in demo.trajectories().iter().enumerate() {
        write!(writer, "traj {i} states")?;
        for state in traj.states() {
            for value in state.iter() {
                write!(writer, " {}", format_float(*value))?;
            }
        }
        write!(writer, " actions")?;
        for action in traj.actions() {
            for value in action.iter() {
                write!(writer, " {}", format_float(*value))?;
            }
        }
        writeln!(writer)?;
    }
    Ok(())
}

/// Writes a demonstration to a file path.
pub fn save_demonstration<P: AsRef<Path>>(
    path: P,
    demo: &Demonstration,
    system: &LqrSystem,
) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_demonstration(&mut writer, demo, system)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::DatasetParse {
        line,
        message: message.into(),
    }
}

fn header_field<T: std::str::FromStr>(line: &str, index: usize, key: &str) -> Result<T> {
    let mut parts = line.split_whitespace();
    let found = parts
        .next()
        .ok_or_else(|| parse_err(index, "empty header line"))?;
    if found != key {
        return Err(parse_err(index, format!("expected `{key}`, found `{found}`")));
    }
    let value = parts
        .next()
        .ok_or_else(|| parse_err(index, format!("missing value for `{key}`")))?;
    if parts.next().is_some() {
        return Err(parse_err(index, format!("trailing tokens after `{key}`")));
    }
    value
        .parse()
        .map_err(|_| parse_err(index, format!("cannot parse value for `{key}`")))
}

/// Reads a demonstration and its header.
pub fn read_demonstration<R: Read>(reader: R) -> Result<(DatasetHeader, Demonstration)> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let mut next_line = |expect: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, line)) => Ok((i + 1, line?)),
            None => Err(parse_err(0, format!("unexpected end of file, expected {expect}"))),
        }
    };

    let (i, magic) = next_line("format marker")?;
    if magic.trim() != MAGIC {
        return Err(parse_err(i, "not a demonstration file"));
    }
    let (i, l) = next_line("state_dim")?;
    let state_dim: usize = header_field(&l, i, "state_dim")?;
    let (i, l) = next_line("action_dim")?;
    let action_dim: usize = header_field(&l, i, "action_dim")?;
    let (i, l) = next_line("horizon")?;
    let horizon: usize = header_field(&l, i, "horizon")?;
    let (i, l) = next_line("discount")?;
    let discount: f64 = header_field(&l, i, "discount")?;
    let (i, l) = next_line("seed")?;
    let seed: u64 = header_field(&l, i, "seed")?;
    let (i, l) = next_line("trajectories")?;
    let count: usize = header_field(&l, i, "trajectories")?;

    let header = DatasetHeader {
        state_dim,
        action_dim,
        horizon,
        discount,
        seed,
        trajectories: count,
    };

    let state_values = (horizon + 1) * state_dim;
    let action_values = horizon * action_dim;
    let mut trajectories = Vec::with_capacity(count);
    for record in 0..count {
        let (i, line) = next_line("trajectory record")?;
        let mut tokens = line.split_whitespace();
        if tokens.next() != Some("traj") {
            return Err(parse_err(i, "expected `traj` record"));
        }
        let index: usize = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(i, "missing trajectory index"))?;
        if index != record {
            return Err(parse_err(i, format!("expected trajectory {record}, found {index}")));
        }
        if tokens.next() != Some("states") {
            return Err(parse_err(i, "expected `states` section"));
        }
        let mut values = Vec::with_capacity(state_values);
        for _ in 0..state_values {
            let token = tokens
                .next()
                .ok_or_else(|| parse_err(i, "truncated states section"))?;
            values.push(
                token
                    .parse::<f64>()
                    .map_err(|_| parse_err(i, format!("bad float `{token}`")))?,
            );
        }
        let states: Vec<DVector<f64>> = values
            .chunks(state_dim)
            .map(|chunk| DVector::from_column_slice(chunk))
            .collect();
        if tokens.next() != Some("actions") {
            return Err(parse_err(i, "expected `actions` section"));
        }
        let mut values = Vec::with_capacity(action_values);
        for _ in 0..action_values {
            let token = tokens
                .next()
                .ok_or_else(|| parse_err(i, "truncated actions section"))?;
            values.push(
                token
                    .parse::<f64>()
                    .map_err(|_| parse_err(i, format!("bad float `{token}`")))?,
            );
        }
        if tokens.next().is_some() {
            return Err(parse_err(i, "trailing tokens after actions"));
        }
        let actions: Vec<DVector<f64>> = values
            .chunks(action_dim)
            .map(|chunk| DVector::from_column_slice(chunk))
            .collect();
        trajectories.push(Trajectory::new(states, actions).map_err(|e| {
            parse_err(i, format!("malformed trajectory: {e}"))
        })?);
    }

    let demo = Demonstration::new(trajectories, seed)?;
    Ok((header, demo))
}

/// Reads a demonstration from a file path.
pub fn load_demonstration<P: AsRef<Path>>(path: P) -> Result<(DatasetHeader, Demonstration)> {
    read_demonstration(File::open(path)?)
}
