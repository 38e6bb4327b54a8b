//! Plain-text map files.
//!
//! ```text
//! HMAP 1 <n_cols> <n_rows> <resolution> <origin_x> <origin_y>
//! <row-major heights, `nan` for NODATA>
//!
//! CMAP 1 <n_cols> <n_rows> <resolution> <origin_x> <origin_y> <n>
//! <row-major class ids, 255 for UNKNOWN>
//! ```
//!
//! Point clouds are one `x y z` triple per line.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Vector2, Vector3};

use super::{ClassGrid, ElevationGrid, GridGeometry, MapError, PointCloudMap, UNKNOWN_CLASS};

#[derive(Clone, Debug, PartialEq)]
pub enum MapFile {
    Elevation(ElevationGrid),
    Class(ClassGrid),
    Cloud(PointCloudMap),
}

fn parse_err(line: usize, field: impl Into<String>, msg: impl Into<String>) -> MapError {
    MapError::Parse {
        line,
        field: field.into(),
        msg: msg.into(),
    }
}

struct Tokens<'a> {
    lines: Vec<(usize, &'a str)>,
    line: usize,
    inner: Option<std::str::SplitWhitespace<'a>>,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str, skip: usize) -> Self {
        Self {
            lines: text
                .lines()
                .enumerate()
                .skip(skip)
                .map(|(i, l)| (i + 1, l))
                .collect(),
            line: 0,
            inner: None,
            last_line: skip,
        }
    }

    fn next_token(&mut self) -> Option<(usize, &'a str)> {
        loop {
            if let Some(it) = self.inner.as_mut() {
                if let Some(tok) = it.next() {
                    return Some((self.last_line, tok));
                }
            }
            let (no, l) = *self.lines.get(self.line)?;
            self.line += 1;
            self.last_line = no;
            self.inner = Some(l.split_whitespace());
        }
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, field: &str, tok: &str) -> Result<T, MapError>
where
    T::Err: std::fmt::Display,
{
    tok.parse::<T>()
        .map_err(|e| parse_err(line, field, format!("cannot parse '{tok}': {e}")))
}

fn parse_geometry(line: usize, fields: &[&str]) -> Result<GridGeometry, MapError> {
    let names = ["n_cols", "n_rows", "resolution", "origin_x", "origin_y"];
    if fields.len() < 5 {
        return Err(parse_err(
            line,
            "header",
            format!("expected 5 geometry fields, found {}", fields.len()),
        ));
    }
    let n_cols: usize = parse_num(line, names[0], fields[0])?;
    let n_rows: usize = parse_num(line, names[1], fields[1])?;
    let res: f64 = parse_num(line, names[2], fields[2])?;
    let ox: f64 = parse_num(line, names[3], fields[3])?;
    let oy: f64 = parse_num(line, names[4], fields[4])?;
    GridGeometry::new(n_cols, n_rows, res, Vector2::new(ox, oy))
        .map_err(|e| parse_err(line, "header", e.to_string()))
}

fn read_cells<T>(
    text: &str,
    header_line: usize,
    g: &GridGeometry,
    mut parse: impl FnMut(usize, usize, &str) -> Result<T, MapError>,
) -> Result<Vec<T>, MapError> {
    let mut toks = Tokens::new(text, header_line);
    let mut out = Vec::with_capacity(g.len());
    for i in 0..g.len() {
        let (line, tok) = toks.next_token().ok_or_else(|| MapError::CellCount {
            expected: g.len(),
            got: i,
        })?;
        out.push(parse(line, i, tok)?);
    }
    if let Some((line, _)) = toks.next_token() {
        return Err(parse_err(
            line,
            "cells",
            format!("more than {} cell values", g.len()),
        ));
    }
    Ok(out)
}

pub fn read_map<R: Read>(mut r: R) -> Result<MapFile, MapError> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let (header_idx, header) = text
        .lines()
        .enumerate()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| parse_err(1, "header", "file is empty"))?;
    let line = header_idx + 1;
    let fields: Vec<&str> = header.split_whitespace().collect();
    match fields[0] {
        "HMAP" | "CMAP" => {
            if fields.get(1) != Some(&"1") {
                return Err(parse_err(line, "version", "unsupported version"));
            }
            let g = parse_geometry(line, &fields[2..])?;
            if fields[0] == "HMAP" {
                if fields.len() != 7 {
                    return Err(parse_err(line, "header", "HMAP header has 7 fields"));
                }
                let heights = read_cells(&text, line, &g, |l, _, tok| {
                    parse_num::<f64>(l, "height", tok)
                })?;
                Ok(MapFile::Elevation(ElevationGrid::new(g, heights)?))
            } else {
                if fields.len() != 8 {
                    return Err(parse_err(line, "header", "CMAP header has 8 fields"));
                }
                let n: u8 = parse_num(line, "n", fields[7])?;
                let ids = read_cells(&text, line, &g, |l, i, tok| {
                    let id: u32 = parse_num(l, "class_id", tok)?;
                    if id != UNKNOWN_CLASS as u32 && id >= n as u32 {
                        let (col, row) = g.col_row(i);
                        return Err(MapError::InvalidClass { col, row, id, n });
                    }
                    Ok(id as u8)
                })?;
                Ok(MapFile::Class(ClassGrid::new(g, ids, n)?))
            }
        }
        _ => {
            let mut points = Vec::new();
            for (i, l) in text.lines().enumerate() {
                let l = l.trim();
                if l.is_empty() || l.starts_with('#') {
                    continue;
                }
                let v: Vec<&str> = l.split_whitespace().collect();
                if v.len() != 3 {
                    return Err(parse_err(
                        i + 1,
                        "point",
                        format!("expected 3 coordinates, found {}", v.len()),
                    ));
                }
                points.push(Vector3::new(
                    parse_num(i + 1, "x", v[0])?,
                    parse_num(i + 1, "y", v[1])?,
                    parse_num(i + 1, "z", v[2])?,
                ));
            }
            Ok(MapFile::Cloud(PointCloudMap::new(points)?))
        }
    }
}

fn fmt_height(h: f64) -> String {
    if h.is_nan() {
        "nan".to_string()
    } else {
        format!("{h}")
    }
}

pub fn write_map<W: Write>(mut w: W, map: &MapFile) -> Result<(), MapError> {
    match map {
        MapFile::Elevation(m) => {
            let g = m.geometry();
            writeln!(
                w,
                "HMAP 1 {} {} {} {} {}",
                g.n_cols, g.n_rows, g.resolution, g.origin.x, g.origin.y
            )?;
            for row in m.heights().chunks(g.n_cols) {
                let line: Vec<String> = row.iter().map(|&h| fmt_height(h)).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        MapFile::Class(m) => {
            let g = m.geometry();
            writeln!(
                w,
                "CMAP 1 {} {} {} {} {} {}",
                g.n_cols,
                g.n_rows,
                g.resolution,
                g.origin.x,
                g.origin.y,
                m.n_classes()
            )?;
            for row in m.class_ids().chunks(g.n_cols) {
                let line: Vec<String> = row.iter().map(|id| id.to_string()).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        MapFile::Cloud(m) => {
            for p in m.points() {
                writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
            }
        }
    }
    Ok(())
}

pub fn load_map(path: impl AsRef<Path>) -> Result<MapFile, MapError> {
    read_map(BufReader::new(File::open(path)?))
}

pub fn save_map(path: impl AsRef<Path>, map: &MapFile) -> Result<(), MapError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_map(&mut w, map)?;
    w.flush()?;
    Ok(())
}
