//! MATPOWER case text: parsing and canonical serialization.
//!
//! Only `mpc.baseMVA`, `mpc.bus` and `mpc.branch` are interpreted. Other
//! assignments and blocks (`gen`, `gencost`, `bus_name`, ...) are skipped.

use std::fmt::Write as _;

use dpsse_core::grid::{BranchRecord, BusRecord, GridCase};
use dpsse_core::GridError;
use thiserror::Error;

/// Columns of a standard MATPOWER bus or branch row.
pub const MIN_COLUMNS: usize = 13;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing mpc.{0} block")]
    MissingBlock(&'static str),
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn syntax(line: usize, message: impl Into<String>) -> CaseError {
    CaseError::Syntax { line, message: message.into() }
}

#[derive(Clone, Copy, PartialEq)]
enum Block {
    Bus,
    Branch,
    Skipped,
}

struct Row {
    line: usize,
    values: Vec<f64>,
}

#[derive(Default)]
struct Accumulator {
    rows: Vec<Row>,
    pending: Vec<f64>,
    pending_line: usize,
}

impl Accumulator {
    /// Feeds block text; `;` ends a row, whitespace or `,` separate fields.
    fn feed(&mut self, body: &str, line: usize) -> Result<(), CaseError> {
        for (i, piece) in body.split(';').enumerate() {
            if i > 0 {
                self.flush();
            }
            for tok in piece.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
                let v: f64 = tok.parse().map_err(|_| syntax(line, format!("non-numeric field `{tok}`")))?;
                if self.pending.is_empty() {
                    self.pending_line = line;
                }
                self.pending.push(v);
            }
        }
        Ok(())
    }

    fn flush(&mut self) {
        if !self.pending.is_empty() {
            let values = std::mem::take(&mut self.pending);
            self.rows.push(Row { line: self.pending_line, values });
        }
    }
}

pub fn parse_case(text: &str) -> Result<GridCase, CaseError> {
    let mut name = String::from("case");
    let mut base_mva = 100.0;
    let mut bus_rows: Option<Vec<Row>> = None;
    let mut branch_rows: Option<Vec<Row>> = None;
    let mut open: Option<(Block, char, usize, Accumulator)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let mut line = raw.split('%').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if open.is_none() {
            if line.starts_with("function") {
                if let Some(rhs) = line.split('=').nth(1) {
                    name = rhs.trim().trim_end_matches(';').to_string();
                }
                continue;
            }
            let Some((lhs, rhs)) = line.split_once('=') else {
                return Err(syntax(line_no, "expected an assignment"));
            };
            let (lhs, rhs) = (lhs.trim(), rhs.trim());
            match rhs.chars().next() {
                Some(c @ ('[' | '{')) => {
                    let block = match lhs {
                        "mpc.bus" => Block::Bus,
                        "mpc.branch" => Block::Branch,
                        _ => Block::Skipped,
                    };
                    let close = if c == '[' { ']' } else { '}' };
                    open = Some((block, close, line_no, Accumulator::default()));
                    line = &rhs[1..];
                }
                _ => {
                    if lhs == "mpc.baseMVA" {
                        let v = rhs.trim_end_matches(';').trim();
                        base_mva = v.parse().map_err(|_| syntax(line_no, format!("bad baseMVA `{v}`")))?;
                    }
                    continue;
                }
            }
        }
        let (block, close, _, acc) = open.as_mut().expect("inside a block");
        let (body, ends) = match line.find(*close) {
            Some(p) => (&line[..p], true),
            None => (line, false),
        };
        if *block != Block::Skipped {
            acc.feed(body, line_no)?;
        }
        if ends {
            let (block, _, _, mut acc) = open.take().unwrap();
            acc.flush();
            match block {
                Block::Bus => bus_rows = Some(acc.rows),
                Block::Branch => branch_rows = Some(acc.rows),
                Block::Skipped => {}
            }
        }
    }
    if let Some((_, _, start, _)) = open {
        return Err(syntax(start, "block is never closed"));
    }
    let bus_rows = bus_rows.ok_or(CaseError::MissingBlock("bus"))?;
    let branch_rows = branch_rows.ok_or(CaseError::MissingBlock("branch"))?;
    check_columns(&bus_rows)?;
    check_columns(&branch_rows)?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    for row in &bus_rows {
        buses.push(BusRecord { id: bus_id(row, 0)?, voltage_mag: row.values[7], voltage_ang: row.values[8] });
    }
    let mut branches = Vec::with_capacity(branch_rows.len());
    for row in &branch_rows {
        let v = &row.values;
        branches.push(BranchRecord {
            from_bus: bus_id(row, 0)?,
            to_bus: bus_id(row, 1)?,
            r: v[2],
            x_react: v[3],
            b_charge: v[4],
            tap: v[8],
        });
    }
    Ok(GridCase::new(name, base_mva, buses, branches)?)
}

fn check_columns(rows: &[Row]) -> Result<(), CaseError> {
    let Some(first) = rows.first() else { return Ok(()) };
    let expected = first.values.len().max(MIN_COLUMNS);
    for row in rows {
        if row.values.len() != expected {
            return Err(syntax(
                row.line,
                format!("expected {expected} columns, found {}", row.values.len()),
            ));
        }
    }
    Ok(())
}

fn bus_id(row: &Row, col: usize) -> Result<u32, CaseError> {
    let v = row.values[col];
    if v.fract() != 0.0 || v < 1.0 || v > u32::MAX as f64 {
        return Err(syntax(row.line, format!("bus number `{v}` is not a positive integer")));
    }
    Ok(v as u32)
}

/// Canonical text: 13-column rows holding the interpreted fields, with
/// neutral values in the ignored columns. Numbers use the shortest
/// decimal that parses back to the same `f64`.
pub fn write_case(case: &GridCase) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "function mpc = {}", case.name());
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {};", case.base_mva());
    let _ = writeln!(out, "%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin");
    let _ = writeln!(out, "mpc.bus = [");
    for b in case.buses() {
        let _ = writeln!(out, "\t{}\t1\t0\t0\t0\t0\t1\t{}\t{}\t0\t1\t1.1\t0.9;", b.id, b.voltage_mag, b.voltage_ang);
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out, "%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax");
    let _ = writeln!(out, "mpc.branch = [");
    for br in case.branches() {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t0\t0\t0\t{}\t0\t1\t-360\t360;",
            br.from_bus, br.to_bus, br.r, br.x_react, br.b_charge, br.tap
        );
    }
    let _ = writeln!(out, "];");
    out
}
