//! Esri ASCII Grid reader/writer.
//!
//! Values are written with Rust's shortest round-trip float formatting, so a
//! write followed by a read reproduces every cell bit for bit. The CRS tag
//! travels in a `.prj` sidecar.

use std::fmt::Write as _;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{prj_sidecar_path, GridHeader};
use crate::error::{Error, Result};

const DEFAULT_NODATA: f64 = -9999.0;

pub(super) fn read(path: &Path) -> Result<(GridHeader, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let prj = prj_sidecar_path(path);
    let crs_tag = if prj.exists() {
        std::fs::read_to_string(&prj).map_err(|e| Error::io(&prj, e))?
    } else {
        String::new()
    };
    parse(&text, crs_tag, &path.display().to_string())
}

pub(super) fn parse(text: &str, crs_tag: String, context: &str) -> Result<(GridHeader, Vec<f64>)> {
    let err = |msg: String| Error::parse(context, msg);

    let mut ncols = None;
    let mut nrows = None;
    let mut x = None;
    let mut y = None;
    let mut centered_x = false;
    let mut centered_y = false;
    let mut cellsize = None;
    let mut dx = None;
    let mut dy = None;
    let mut nodata = None;

    let mut lines = text.lines().enumerate().peekable();
    while let Some(&(lineno, line)) = lines.peek() {
        let mut parts = line.split_whitespace();
        let Some(key) = parts.next() else {
            lines.next();
            continue;
        };
        let key = key.to_ascii_lowercase();
        if !key.starts_with(|c: char| c.is_ascii_alphabetic()) {
            break;
        }
        let value = parts
            .next()
            .ok_or_else(|| err(format!("line {}: `{key}` has no value", lineno + 1)))?;
        if parts.next().is_some() {
            return Err(err(format!("line {}: trailing tokens after `{key}`", lineno + 1)));
        }
        let num: f64 = value
            .parse()
            .map_err(|_| err(format!("line {}: `{value}` is not a number", lineno + 1)))?;
        let count = || -> Result<usize> {
            if num.fract() != 0.0 || num < 1.0 {
                Err(err(format!("`{key}` must be a positive integer")))
            } else {
                Ok(num as usize)
            }
        };
        match key.as_str() {
            "ncols" => ncols = Some(count()?),
            "nrows" => nrows = Some(count()?),
            "xllcorner" => x = Some(num),
            "yllcorner" => y = Some(num),
            "xllcenter" => {
                x = Some(num);
                centered_x = true;
            }
            "yllcenter" => {
                y = Some(num);
                centered_y = true;
            }
            "cellsize" => cellsize = Some(num),
            "dx" => dx = Some(num),
            "dy" => dy = Some(num),
            "nodata_value" => nodata = Some(num),
            other => return Err(err(format!("unknown header key `{other}`"))),
        }
        lines.next();
    }

    let cell_size = match (cellsize, dx, dy) {
        (Some(c), None, None) => c,
        (None, Some(a), Some(b)) if a == b => a,
        (None, Some(_), Some(_)) => {
            return Err(Error::UnsupportedFormat(format!(
                "{context}: non-square cells (dx != dy)"
            )))
        }
        _ => return Err(err("missing or conflicting cellsize".into())),
    };
    let ncols = ncols.ok_or_else(|| err("missing ncols".into()))?;
    let nrows = nrows.ok_or_else(|| err("missing nrows".into()))?;
    let mut origin_x = x.ok_or_else(|| err("missing xllcorner".into()))?;
    let mut origin_y = y.ok_or_else(|| err("missing yllcorner".into()))?;
    if centered_x {
        origin_x -= cell_size / 2.0;
    }
    if centered_y {
        origin_y -= cell_size / 2.0;
    }
    let header = GridHeader {
        ncols,
        nrows,
        cell_size,
        origin_x,
        origin_y,
        crs_tag,
        nodata_value: nodata.unwrap_or(DEFAULT_NODATA),
    };
    header.validate().map_err(|e| err(e.to_string()))?;

    let mut cells = Vec::with_capacity(header.len());
    let mut rows = 0;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let before = cells.len();
        for token in line.split_whitespace() {
            let v: f64 = token
                .parse()
                .map_err(|_| err(format!("line {}: `{token}` is not a number", lineno + 1)))?;
            cells.push(v);
        }
        let got = cells.len() - before;
        if got != ncols {
            return Err(err(format!(
                "line {}: row has {got} values, expected {ncols}",
                lineno + 1
            )));
        }
        rows += 1;
        if rows > nrows {
            return Err(err(format!("more than {nrows} data rows")));
        }
    }
    if rows != nrows {
        return Err(err(format!("found {rows} data rows, expected {nrows}")));
    }
    Ok((header, cells))
}

pub(super) fn write(
    path: &Path,
    header: &GridHeader,
    cells: impl Iterator<Item = f64>,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(
        out,
        "ncols {}\nnrows {}\nxllcorner {}\nyllcorner {}\ncellsize {}\nNODATA_value {}\n",
        header.ncols,
        header.nrows,
        header.origin_x,
        header.origin_y,
        header.cell_size,
        header.nodata_value
    )
    .map_err(io)?;
    let mut line = String::new();
    for (i, v) in cells.enumerate() {
        if i % header.ncols != 0 {
            line.push(' ');
        }
        write!(line, "{v}").expect("string write");
        if (i + 1) % header.ncols == 0 {
            line.push('\n');
            out.write_all(line.as_bytes()).map_err(io)?;
            line.clear();
        }
    }
    out.flush().map_err(io)?;
    let prj = prj_sidecar_path(path);
    if header.crs_tag.is_empty() {
        if prj.exists() {
            std::fs::remove_file(&prj).map_err(|e| Error::io(&prj, e))?;
        }
    } else {
        std::fs::write(&prj, &header.crs_tag).map_err(|e| Error::io(&prj, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_standard_header() {
        let text = "ncols 2\nnrows 2\nxllcorner 10\nyllcorner 20\ncellsize 1\nNODATA_value -9999\n1.5 -9999\n3 4\n";
        let (h, cells) = parse(text, String::new(), "t").unwrap();
        assert_eq!((h.ncols, h.nrows), (2, 2));
        assert_eq!((h.origin_x, h.origin_y, h.cell_size), (10.0, 20.0, 1.0));
        assert_eq!(cells, vec![1.5, -9999.0, 3.0, 4.0]);
        assert_eq!(cells.iter().filter(|&&v| v == h.nodata_value).count(), 1);
    }

    #[test]
    fn center_registration_shifts_origin() {
        let text = "ncols 1\nnrows 1\nxllcenter 10\nyllcenter 20\ncellsize 2\n5\n";
        let (h, _) = parse(text, String::new(), "t").unwrap();
        assert_eq!((h.origin_x, h.origin_y), (9.0, 19.0));
        assert_eq!(h.nodata_value, DEFAULT_NODATA);
    }

    #[test]
    fn row_length_mismatch_is_parse_error() {
        let text = "ncols 3\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3 4\n";
        assert!(matches!(parse(text, String::new(), "t"), Err(Error::Parse { .. })));
    }

    #[test]
    fn row_count_mismatch_is_parse_error() {
        let text = "ncols 1\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1\n";
        assert!(matches!(parse(text, String::new(), "t"), Err(Error::Parse { .. })));
    }

    #[test]
    fn malformed_header_is_parse_error() {
        for text in [
            "ncols x\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n1\n",
            "nrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n1\n",
            "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize -1\n1\n",
            "ncols 1\nnrows 1\nfoo 3\nxllcorner 0\nyllcorner 0\ncellsize 1\n1\n",
        ] {
            assert!(matches!(parse(text, String::new(), "t"), Err(Error::Parse { .. })), "{text}");
        }
    }

    #[test]
    fn rectangular_cells_rejected() {
        let text = "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ndx 1\ndy 2\n1\n";
        assert!(matches!(
            parse(text, String::new(), "t"),
            Err(Error::UnsupportedFormat(_))
        ));
    }
}
