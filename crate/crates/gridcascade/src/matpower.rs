//! Case-file parsing.
//!
//! Two formats are accepted: the MATPOWER `.m` case format (the bus, gen and
//! branch tables plus `baseMVA`), and this crate's own JSON dump of a
//! [`PowerNetwork`]. The JSON form is what [`to_json`] emits; it preserves
//! every field exactly, so parse -> serialize -> parse is an identity.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::network::{branch_admittance, Branch, Bus, BusKind, Generator, Load, PowerNetwork};

/// What to do with off-nominal transformer taps and phase shifts.
///
/// The branch model is the plain Π: a tap cannot be represented exactly, so
/// `Normalize` folds the tap ratio into the series admittance (y / tap) and
/// drops the phase shift. `Reject` refuses such branches instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TapHandling {
    #[default]
    Normalize,
    Reject,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseConfig {
    pub taps: TapHandling,
}

/// Parses a case file with default settings. See [`parse_case_with`].
pub fn parse_case(text: &str) -> Result<PowerNetwork> {
    parse_case_with(text, &ParseConfig::default())
}

pub fn parse_case_with(text: &str, cfg: &ParseConfig) -> Result<PowerNetwork> {
    if text.trim_start().starts_with('{') {
        return parse_json(text);
    }
    parse_matpower(text, cfg)
}

/// Serializes a network to the JSON case format.
pub fn to_json(network: &PowerNetwork) -> String {
    let mut s = serde_json::to_string_pretty(network).expect("network serializes");
    s.push('\n');
    s
}

fn parse_json(text: &str) -> Result<PowerNetwork> {
    let mut de = serde_json::Deserializer::from_str(text);
    let net = PowerNetwork::deserialize(&mut de).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    validate(&net)?;
    Ok(net)
}

/// A numeric matrix pulled out of `mpc.<name> = [ ... ];` with the source
/// line of each row kept for diagnostics.
struct Matrix {
    rows: Vec<(usize, Vec<f64>)>,
}

fn parse_matpower(text: &str, cfg: &ParseConfig) -> Result<PowerNetwork> {
    if text.trim().is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "empty case file".into(),
        });
    }

    let mut base_mva = None;
    let mut bus_tbl = None;
    let mut gen_tbl = None;
    let mut branch_tbl = None;

    let lines: Vec<&str> = text.lines().collect();
    let mut cursor = 0;
    while cursor < lines.len() {
        let idx = cursor;
        cursor += 1;
        let line = strip_comment(lines[idx]).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("mpc.baseMVA") {
            let value = rest
                .trim_start()
                .strip_prefix('=')
                .map(|v| v.trim().trim_end_matches(';').trim())
                .unwrap_or("");
            base_mva = Some(value.parse::<f64>().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: format!("invalid baseMVA value `{value}`"),
            })?);
        } else if let Some(name) = matrix_name(line) {
            let matrix = read_matrix(line, idx, &lines, &mut cursor)?;
            match name {
                "bus" => bus_tbl = Some(matrix),
                "gen" => gen_tbl = Some(matrix),
                "branch" => branch_tbl = Some(matrix),
                _ => {} // gencost, bus_name, ... are ignored
            }
        }
    }

    let base_mva = base_mva.ok_or_else(|| Error::Parse {
        line: 1,
        msg: "missing mpc.baseMVA".into(),
    })?;
    let bus_tbl = bus_tbl.ok_or_else(|| Error::Parse {
        line: 1,
        msg: "missing mpc.bus table".into(),
    })?;
    let gen_tbl = gen_tbl.unwrap_or(Matrix { rows: vec![] });
    let branch_tbl = branch_tbl.unwrap_or(Matrix { rows: vec![] });

    let mut buses = Vec::with_capacity(bus_tbl.rows.len());
    let mut loads = Vec::new();
    for (line, row) in &bus_tbl.rows {
        if row.len() < 13 {
            return Err(Error::Parse {
                line: *line,
                msg: format!("bus row needs 13 columns, found {}", row.len()),
            });
        }
        let id = row[0] as usize;
        let kind = match row[1] as i64 {
            3 => BusKind::Slack,
            2 => BusKind::Pv,
            1 => BusKind::Pq,
            4 => BusKind::Pq, // isolated; marked out of service below
            other => {
                return Err(Error::Parse {
                    line: *line,
                    msg: format!("unknown bus type {other}"),
                })
            }
        };
        buses.push(Bus {
            id,
            kind,
            v_mag: row[7],
            v_ang: row[8].to_radians(),
            g_sh: row[4] / base_mva,
            b_sh: row[5] / base_mva,
            in_service: row[1] as i64 != 4,
        });
        if row[2] != 0.0 || row[3] != 0.0 {
            loads.push(Load {
                bus: id,
                p: row[2],
                q: row[3],
                scale: 1.0,
            });
        }
    }
    {
        let mut seen = std::collections::HashSet::new();
        for (line, row) in &bus_tbl.rows {
            if !seen.insert(row[0] as usize) {
                return Err(Error::Parse {
                    line: *line,
                    msg: format!("duplicate bus id {}", row[0] as usize),
                });
            }
        }
    }
    let index = buses
        .iter()
        .map(|b| b.id)
        .collect::<std::collections::HashSet<_>>();

    let mut generators = Vec::with_capacity(gen_tbl.rows.len());
    for (row_no, (line, row)) in gen_tbl.rows.iter().enumerate() {
        if row.len() < 10 {
            return Err(Error::Parse {
                line: *line,
                msg: format!("gen row needs 10 columns, found {}", row.len()),
            });
        }
        let bus = row[0] as usize;
        if !index.contains(&bus) {
            return Err(Error::UnknownBusRef {
                table: "gen",
                row: row_no,
                bus,
            });
        }
        let in_service = row[7] > 0.0;
        generators.push(Generator {
            bus,
            p_set: row[1],
            q_set: row[2],
            p_max: row[8],
            p_min: row[9],
            in_service,
        });
        // A regulating generator pins the bus voltage magnitude.
        if in_service {
            let vg = row[5];
            if let Some(b) = buses.iter_mut().find(|b| b.id == bus) {
                if b.kind != BusKind::Pq && vg > 0.0 {
                    b.v_mag = vg;
                }
            }
        }
    }

    // PV buses without an in-service generator cannot hold their voltage.
    for bus in &mut buses {
        if bus.kind == BusKind::Pv && !generators.iter().any(|g| g.in_service && g.bus == bus.id) {
            bus.kind = BusKind::Pq;
        }
    }

    let mut branches = Vec::with_capacity(branch_tbl.rows.len());
    for (row_no, (line, row)) in branch_tbl.rows.iter().enumerate() {
        if row.len() < 11 {
            return Err(Error::Parse {
                line: *line,
                msg: format!("branch row needs 11 columns, found {}", row.len()),
            });
        }
        let from_bus = row[0] as usize;
        let to_bus = row[1] as usize;
        for &bus in [&from_bus, &to_bus] {
            if !index.contains(&bus) {
                return Err(Error::UnknownBusRef {
                    table: "branch",
                    row: row_no,
                    bus,
                });
            }
        }
        if from_bus == to_bus {
            return Err(Error::Parse {
                line: *line,
                msg: format!("branch connects bus {from_bus} to itself"),
            });
        }
        let (mut g, mut b) = branch_admittance(row[2], row[3]).map_err(|_| Error::Parse {
            line: *line,
            msg: format!("zero-impedance branch {from_bus}-{to_bus}"),
        })?;
        let tap = if row[8] == 0.0 { 1.0 } else { row[8] };
        let shift_deg = row[9];
        if tap != 1.0 || shift_deg != 0.0 {
            match cfg.taps {
                TapHandling::Normalize => {
                    g /= tap;
                    b /= tap;
                    if shift_deg != 0.0 {
                        log::warn!(
                            "branch {from_bus}-{to_bus}: dropping {shift_deg} deg phase shift \
                             (plain pi model)"
                        );
                    }
                }
                TapHandling::Reject => {
                    return Err(Error::Parse {
                        line: *line,
                        msg: format!(
                            "branch {from_bus}-{to_bus} has tap {tap} / shift {shift_deg} and \
                             tap support is disabled"
                        ),
                    });
                }
            }
        }
        branches.push(Branch {
            id: row_no,
            from_bus,
            to_bus,
            g,
            b,
            b_c: row[4],
            rating: row[5],
            in_service: row[10] > 0.0,
        });
    }

    let net = PowerNetwork {
        base_mva,
        buses,
        branches,
        generators,
        loads,
    };
    validate(&net)?;
    Ok(net)
}

fn validate(net: &PowerNetwork) -> Result<()> {
    if net.buses.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "case has no buses".into(),
        });
    }
    if !net
        .buses
        .iter()
        .any(|b| b.kind == BusKind::Slack && b.in_service)
    {
        return Err(Error::Parse {
            line: 1,
            msg: "case has no in-service slack bus".into(),
        });
    }
    let index = net
        .buses
        .iter()
        .map(|b| b.id)
        .collect::<std::collections::HashSet<_>>();
    for (row, g) in net.generators.iter().enumerate() {
        if !index.contains(&g.bus) {
            return Err(Error::UnknownBusRef {
                table: "gen",
                row,
                bus: g.bus,
            });
        }
    }
    for (row, l) in net.loads.iter().enumerate() {
        if !index.contains(&l.bus) {
            return Err(Error::UnknownBusRef {
                table: "load",
                row,
                bus: l.bus,
            });
        }
    }
    for (row, b) in net.branches.iter().enumerate() {
        if !index.contains(&b.from_bus) || !index.contains(&b.to_bus) {
            return Err(Error::UnknownBusRef {
                table: "branch",
                row,
                bus: if index.contains(&b.from_bus) {
                    b.to_bus
                } else {
                    b.from_bus
                },
            });
        }
    }
    Ok(())
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn matrix_name(line: &str) -> Option<&str> {
    let rest = line.strip_prefix("mpc.")?;
    let eq = rest.find('=')?;
    if !rest[eq..].contains('[') {
        return None;
    }
    Some(rest[..eq].trim())
}

fn read_matrix(
    first_line: &str,
    first_idx: usize,
    lines: &[&str],
    cursor: &mut usize,
) -> Result<Matrix> {
    let mut rows = Vec::new();
    // Content may start on the same line as the '['.
    let mut pending = first_line
        .split_once('[')
        .map(|(_, rest)| rest.to_string())
        .unwrap_or_default();
    let mut line_no = first_idx + 1;
    loop {
        let (done, body) = match pending.find(']') {
            Some(i) => (true, pending[..i].to_string()),
            None => (false, pending.clone()),
        };
        for row_text in body.split(';') {
            let row_text = row_text.trim();
            if row_text.is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for tok in row_text.split_whitespace() {
                let v = tok.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("invalid number `{tok}`"),
                })?;
                row.push(v);
            }
            rows.push((line_no, row));
        }
        if done {
            return Ok(Matrix { rows });
        }
        if *cursor >= lines.len() {
            return Err(Error::Parse {
                line: line_no,
                msg: "unterminated matrix".into(),
            });
        }
        line_no = *cursor + 1;
        pending = strip_comment(lines[*cursor]).trim().to_string();
        *cursor += 1;
    }
}
