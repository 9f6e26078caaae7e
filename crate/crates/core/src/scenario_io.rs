//! Plain-text scenario files: `frame,x1,y1,x2,y2` with `dt` and the
//! condition in leading `#` comment lines.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::extract::{decode_condition, Scenario};

pub fn write_scenario_csv(path: &Path, scenario: &Scenario) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "# dt={}", scenario.dt).map_err(io)?;
    writeln!(out, "# condition={}", scenario.condition.category_id).map_err(io)?;
    writeln!(out, "# frame_origin={}", scenario.frame_origin).map_err(io)?;
    writeln!(out, "frame,x1,y1,x2,y2").map_err(io)?;
    for (f, r) in scenario.positions.iter().enumerate() {
        writeln!(out, "{f},{},{},{},{}", r[0], r[1], r[2], r[3]).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_scenario_csv(path: &Path) -> Result<Scenario> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
    let mut dt = None;
    let mut condition = None;
    let mut frame_origin = 0i64;
    let mut positions = Vec::new();
    let mut saw_header = false;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.trim().split_once('=') {
                let value = value.trim();
                match key.trim() {
                    "dt" => dt = Some(value.parse::<f64>().map_err(|_| bad(format!("bad dt `{value}`")))?),
                    "condition" => {
                        condition = Some(
                            value
                                .parse::<u32>()
                                .map_err(|_| bad(format!("bad condition `{value}`")))?,
                        )
                    }
                    "frame_origin" => {
                        frame_origin = value
                            .parse()
                            .map_err(|_| bad(format!("bad frame_origin `{value}`")))?
                    }
                    _ => {}
                }
            }
            continue;
        }
        if !saw_header {
            if line.replace(' ', "") != "frame,x1,y1,x2,y2" {
                return Err(bad(format!("unexpected header `{line}`")));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(bad(format!("line {}: expected 5 fields", n + 1)));
        }
        let mut row = [0.0; 4];
        for (slot, v) in row.iter_mut().zip(&fields[1..]) {
            *slot = v
                .parse()
                .map_err(|_| bad(format!("line {}: bad number `{v}`", n + 1)))?;
        }
        positions.push(row);
    }
    let dt = dt.ok_or_else(|| bad("missing `# dt=` line".into()))?;
    let condition = condition.ok_or_else(|| bad("missing `# condition=` line".into()))?;
    let scenario = Scenario {
        positions,
        condition: decode_condition(condition)?,
        frame_origin,
        dt,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// All `*.csv` files in `dir`, sorted by file name.
pub fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn read_scenario_dir(dir: &Path) -> Result<Vec<(String, Scenario)>> {
    scenario_files(dir)?
        .into_iter()
        .map(|p| {
            let id = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            read_scenario_csv(&p).map(|s| (id, s))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::encode_condition;

    #[test]
    fn round_trip() {
        let s = Scenario {
            positions: (0..234)
                .map(|k| [k as f64 * 0.1, -3.25, 1e-7 * k as f64, 99.0])
                .collect(),
            condition: encode_condition(4, 9).unwrap(),
            frame_origin: 1200,
            dt: 0.12,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_scenario_csv(&p, &s).unwrap();
        assert_eq!(read_scenario_csv(&p).unwrap(), s);
    }
}
