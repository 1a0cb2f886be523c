//! Colored point cloud files: CSV, ASCII PLY and ASCII PCD.
//!
//! Colors are held in `[0, 1]`. 8-bit channels are divided by 255 on read
//! and rounded back on write.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use ccpd::ColoredPointSet;
use nalgebra::DMatrix;

use crate::error::{CliError, Result};
use crate::fileio::{open, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Ply,
    Pcd,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("csv") | Some("txt") => Ok(Format::Csv),
            Some("ply") => Ok(Format::Ply),
            Some("pcd") => Ok(Format::Pcd),
            _ => Err(CliError::Data(format!(
                "{}: cannot tell the file format from the extension",
                path.display()
            ))),
        }
    }
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "ply" => Ok(Format::Ply),
            "pcd" => Ok(Format::Pcd),
            _ => Err(format!("unknown format {s:?} (expected csv, ply or pcd)")),
        }
    }
}

pub fn read_point_cloud(path: &Path, format: Option<Format>) -> Result<ColoredPointSet> {
    let format = match format {
        Some(f) => f,
        None => Format::from_path(path)?,
    };
    let file = open(path)?;
    match format {
        Format::Csv => read_csv(path, file),
        Format::Ply => read_ply(path, BufReader::new(file)),
        Format::Pcd => read_pcd(path, BufReader::new(file)),
    }
}

pub fn write_point_cloud(set: &ColoredPointSet, path: &Path, format: Option<Format>) -> Result<()> {
    let format = match format {
        Some(f) => f,
        None => Format::from_path(path)?,
    };
    match format {
        Format::Csv => write_atomic(path, |w| write_csv(set, w)),
        Format::Ply => {
            check_3d_rgb(set, "PLY")?;
            write_atomic(path, |w| write_ply(set, w))
        }
        Format::Pcd => {
            check_3d_rgb(set, "PCD")?;
            write_atomic(path, |w| write_pcd(set, w))
        }
    }
}

fn check_3d_rgb(set: &ColoredPointSet, name: &str) -> Result<()> {
    if set.spatial_dim() != 3 {
        return Err(CliError::Data(format!("{name} requires 3D")));
    }
    if !matches!(set.color_dim(), 0 | 3) {
        return Err(CliError::Data(format!(
            "{name} stores RGB color, the set has {} channels",
            set.color_dim()
        )));
    }
    Ok(())
}

fn to_byte(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Column {
    Pos(usize),
    /// 8-bit channel, divided by 255.
    Byte(usize),
    /// Channel already in `[0, 1]`.
    Unit(usize),
}

/// Columns implied by a headerless row of `n` fields.
fn default_columns(n: usize) -> Option<Vec<Column>> {
    use Column::*;
    Some(match n {
        2 => vec![Pos(0), Pos(1)],
        3 => vec![Pos(0), Pos(1), Unit(0)],
        4 => vec![Pos(0), Pos(1), Pos(2), Unit(0)],
        5 => vec![Pos(0), Pos(1), Byte(0), Byte(1), Byte(2)],
        6 => vec![Pos(0), Pos(1), Pos(2), Byte(0), Byte(1), Byte(2)],
        _ => return None,
    })
}

fn header_columns(names: &[String]) -> std::result::Result<Vec<Column>, String> {
    use Column::*;
    names
        .iter()
        .map(|n| {
            let n = n.trim().to_ascii_lowercase();
            Ok(match n.as_str() {
                "x" => Pos(0),
                "y" => Pos(1),
                "z" => Pos(2),
                "r" | "red" => Byte(0),
                "g" | "green" => Byte(1),
                "b" | "blue" => Byte(2),
                "h" | "hue" => Unit(0),
                _ => match n.strip_prefix('c').and_then(|k| k.parse().ok()) {
                    Some(k) => Unit(k),
                    None => return Err(format!("unknown column {n:?}")),
                },
            })
        })
        .collect()
}

fn check_columns(cols: &[Column]) -> std::result::Result<(usize, usize), String> {
    let count = |f: &dyn Fn(&Column) -> Option<usize>| {
        let mut idx: Vec<usize> = cols.iter().filter_map(f).collect();
        idx.sort_unstable();
        let n = idx.len();
        if idx.iter().enumerate().any(|(i, k)| *k != i) {
            Err("columns must not repeat or skip channels".to_string())
        } else {
            Ok(n)
        }
    };
    let ds = count(&|c| match c {
        Column::Pos(k) => Some(*k),
        _ => None,
    })?;
    let dc = count(&|c| match c {
        Column::Byte(k) | Column::Unit(k) => Some(*k),
        _ => None,
    })?;
    if ds < 2 {
        return Err("need at least x and y columns".into());
    }
    Ok((ds, dc))
}

fn read_csv(path: &Path, file: std::fs::File) -> Result<ColoredPointSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(file);
    let mut columns: Option<Vec<Column>> = None;
    let mut dims = (0, 0);
    let mut pos = Vec::new();
    let mut col = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            CliError::parse(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let values: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let cols = match (&columns, values) {
            (None, Err(_)) => {
                let names: Vec<String> = record.iter().map(String::from).collect();
                let cols = header_columns(&names).map_err(|m| CliError::parse(path, line, m))?;
                dims = check_columns(&cols).map_err(|m| CliError::parse(path, line, m))?;
                columns = Some(cols);
                continue;
            }
            (_, Err(_)) => {
                return Err(CliError::parse(path, line, "unparseable number"));
            }
            (None, Ok(v)) => {
                let cols = default_columns(v.len()).ok_or_else(|| {
                    CliError::parse(path, line, format!("cannot interpret {} columns", v.len()))
                })?;
                dims = check_columns(&cols).map_err(|m| CliError::parse(path, line, m))?;
                columns = Some(cols);
                (columns.as_ref().unwrap(), v)
            }
            (Some(c), Ok(v)) => (c, v),
        };
        let (cols, values) = cols;
        if values.len() != cols.len() {
            return Err(CliError::parse(
                path,
                line,
                format!("expected {} fields, found {}", cols.len(), values.len()),
            ));
        }
        let (ds, dc) = dims;
        let mut p = vec![0.0; ds];
        let mut c = vec![0.0; dc];
        for (column, v) in cols.iter().zip(values) {
            match *column {
                Column::Pos(k) => p[k] = v,
                Column::Byte(k) => c[k] = v / 255.0,
                Column::Unit(k) => c[k] = v,
            }
        }
        pos.extend(p);
        col.extend(c);
        rows += 1;
    }
    let (ds, dc) = dims;
    build(path, rows, ds, dc, pos, col)
}

fn build(path: &Path, rows: usize, ds: usize, dc: usize, pos: Vec<f64>, col: Vec<f64>) -> Result<ColoredPointSet> {
    if rows == 0 {
        return Err(CliError::Data(format!("{}: no points", path.display())));
    }
    let p = DMatrix::from_row_slice(rows, ds, &pos);
    let c = DMatrix::from_row_slice(rows, dc, &col);
    ColoredPointSet::new(p, c).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// CSV with a header row. 3-channel colors are written as 0-255 integers.
pub fn write_csv(set: &ColoredPointSet, w: &mut dyn Write) -> std::io::Result<()> {
    let ds = set.spatial_dim();
    let dc = set.color_dim();
    let mut header: Vec<String> = ["x", "y", "z"].iter().take(ds).map(|s| s.to_string()).collect();
    header.extend((3..ds).map(|k| format!("p{k}")));
    match dc {
        0 => {}
        1 => header.push("h".into()),
        3 => header.extend(["r", "g", "b"].map(String::from)),
        _ => header.extend((0..dc).map(|k| format!("c{k}"))),
    }
    if ds > 3 {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "CSV stores at most 3 spatial dimensions",
        ));
    }
    writeln!(w, "{}", header.join(","))?;
    for i in 0..set.len() {
        let mut fields: Vec<String> = set.positions().row(i).iter().map(|v| format!("{v:?}")).collect();
        if dc == 3 {
            fields.extend(set.colors().row(i).iter().map(|v| to_byte(*v).to_string()));
        } else {
            fields.extend(set.colors().row(i).iter().map(|v| format!("{v:?}")));
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

struct Lines<R> {
    inner: R,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    /// Next non-empty line, trimmed.
    fn next(&mut self, path: &Path) -> Result<Option<String>> {
        loop {
            let mut s = String::new();
            let n = self.inner.read_line(&mut s).map_err(|e| CliError::io(path, e))?;
            if n == 0 {
                return Ok(None);
            }
            self.line += 1;
            let t = s.trim();
            if !t.is_empty() {
                return Ok(Some(t.to_string()));
            }
        }
    }
}

fn read_ply(path: &Path, reader: impl BufRead) -> Result<ColoredPointSet> {
    let mut lines = Lines { inner: reader, line: 0 };
    let err = |line: usize, m: &str| CliError::parse(path, line, m.to_string());
    if lines.next(path)?.as_deref() != Some("ply") {
        return Err(err(1, "missing ply magic"));
    }
    // (element name, count, property names and types)
    let mut elements: Vec<(String, usize, Vec<(String, String)>)> = Vec::new();
    loop {
        let line = lines.next(path)?.ok_or_else(|| err(lines.line, "missing end_header"))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        match f[0] {
            "format" => {
                if f.get(1) != Some(&"ascii") {
                    return Err(err(lines.line, "only ASCII PLY is supported"));
                }
            }
            "comment" | "obj_info" => {}
            "element" if f.len() == 3 => {
                let n = f[2].parse().map_err(|_| err(lines.line, "bad element count"))?;
                elements.push((f[1].to_string(), n, Vec::new()));
            }
            "property" => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| err(lines.line, "property before element"))?;
                if f.get(1) == Some(&"list") {
                    el.2.push((f.last().unwrap().to_string(), "list".into()));
                } else if f.len() == 3 {
                    el.2.push((f[2].to_string(), f[1].to_string()));
                } else {
                    return Err(err(lines.line, "malformed property"));
                }
            }
            "end_header" => break,
            _ => return Err(err(lines.line, "unexpected header line")),
        }
    }
    let mut pos = Vec::new();
    let mut col = Vec::new();
    let mut rows = 0;
    let mut dc = 0;
    for (name, count, props) in &elements {
        if name != "vertex" {
            for _ in 0..*count {
                lines.next(path)?;
            }
            continue;
        }
        let find = |n: &[&str]| props.iter().position(|(p, _)| n.contains(&p.as_str()));
        let xyz = [find(&["x"]), find(&["y"]), find(&["z"])];
        if xyz.iter().any(Option::is_none) {
            return Err(err(lines.line, "vertex needs x, y and z"));
        }
        let rgb = [
            find(&["red", "r", "diffuse_red"]),
            find(&["green", "g", "diffuse_green"]),
            find(&["blue", "b", "diffuse_blue"]),
        ];
        let has_color = rgb.iter().all(Option::is_some);
        dc = if has_color { 3 } else { 0 };
        for _ in 0..*count {
            let line = lines.next(path)?.ok_or_else(|| err(lines.line, "missing vertex rows"))?;
            let v: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            let v = v.map_err(|_| err(lines.line, "unparseable number"))?;
            if v.len() < props.len() {
                return Err(err(lines.line, "too few vertex fields"));
            }
            for k in xyz {
                pos.push(v[k.unwrap()]);
            }
            if has_color {
                for k in rgb {
                    let k = k.unwrap();
                    let is_float = matches!(props[k].1.as_str(), "float" | "float32" | "double" | "float64");
                    col.push(if is_float { v[k] } else { v[k] / 255.0 });
                }
            }
            rows += 1;
        }
    }
    build(path, rows, 3, dc, pos, col)
}

fn write_ply(set: &ColoredPointSet, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", set.len())?;
    writeln!(w, "property double x\nproperty double y\nproperty double z")?;
    let color = set.color_dim() == 3;
    if color {
        writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue")?;
    }
    writeln!(w, "end_header")?;
    for i in 0..set.len() {
        let p = set.positions().row(i);
        write!(w, "{:?} {:?} {:?}", p[0], p[1], p[2])?;
        if color {
            let c = set.colors().row(i);
            write!(w, " {} {} {}", to_byte(c[0]), to_byte(c[1]), to_byte(c[2]))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Splits the float bit pattern `0x00RRGGBB` into three channels.
pub fn unpack_rgb(bits: u32) -> [f64; 3] {
    [
        ((bits >> 16) & 0xff) as f64 / 255.0,
        ((bits >> 8) & 0xff) as f64 / 255.0,
        (bits & 0xff) as f64 / 255.0,
    ]
}

pub fn pack_rgb(c: [f64; 3]) -> u32 {
    (to_byte(c[0]) as u32) << 16 | (to_byte(c[1]) as u32) << 8 | to_byte(c[2]) as u32
}

fn read_pcd(path: &Path, reader: impl BufRead) -> Result<ColoredPointSet> {
    let mut lines = Lines { inner: reader, line: 0 };
    let err = |line: usize, m: &str| CliError::parse(path, line, m.to_string());
    let mut fields: Vec<String> = Vec::new();
    let mut types: Vec<String> = Vec::new();
    let mut points: Option<usize> = None;
    loop {
        let line = lines.next(path)?.ok_or_else(|| err(lines.line, "missing DATA line"))?;
        if line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        match f[0].to_ascii_uppercase().as_str() {
            "FIELDS" => fields = f[1..].iter().map(|s| s.to_string()).collect(),
            "TYPE" => types = f[1..].iter().map(|s| s.to_string()).collect(),
            "COUNT" => {
                if f[1..].iter().any(|c| *c != "1") {
                    return Err(err(lines.line, "only single-count fields are supported"));
                }
            }
            "POINTS" => {
                points = Some(f.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| err(lines.line, "bad POINTS"))?)
            }
            "VERSION" | "SIZE" | "WIDTH" | "HEIGHT" | "VIEWPOINT" => {}
            "DATA" => {
                if f.get(1).map(|s| s.to_ascii_lowercase()) != Some("ascii".into()) {
                    return Err(err(lines.line, "only ASCII PCD is supported"));
                }
                break;
            }
            _ => return Err(err(lines.line, "unexpected header line")),
        }
    }
    let find = |n: &str| fields.iter().position(|f| f == n);
    let xyz = [find("x"), find("y"), find("z")];
    if xyz.iter().any(Option::is_none) {
        return Err(err(lines.line, "PCD needs x, y and z fields"));
    }
    let rgb = find("rgb").or_else(|| find("rgba"));
    let rgb_is_int = rgb.is_some_and(|k| types.get(k).is_some_and(|t| t == "U" || t == "I"));
    let n = points.ok_or_else(|| err(lines.line, "missing POINTS"))?;
    let mut pos = Vec::with_capacity(3 * n);
    let mut col = Vec::new();
    for _ in 0..n {
        let line = lines.next(path)?.ok_or_else(|| err(lines.line, "missing point rows"))?;
        let v: Vec<&str> = line.split_whitespace().collect();
        if v.len() != fields.len() {
            return Err(err(lines.line, "field count mismatch"));
        }
        for k in xyz {
            pos.push(v[k.unwrap()].parse::<f64>().map_err(|_| err(lines.line, "unparseable number"))?);
        }
        if let Some(k) = rgb {
            let bits = if rgb_is_int {
                v[k].parse::<u32>().map_err(|_| err(lines.line, "bad rgb"))?
            } else {
                v[k].parse::<f32>().map_err(|_| err(lines.line, "bad rgb"))?.to_bits()
            };
            col.extend(unpack_rgb(bits));
        }
    }
    build(path, n, 3, if rgb.is_some() { 3 } else { 0 }, pos, col)
}

fn write_pcd(set: &ColoredPointSet, w: &mut dyn Write) -> std::io::Result<()> {
    let color = set.color_dim() == 3;
    let n = set.len();
    writeln!(w, "# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7")?;
    if color {
        writeln!(w, "FIELDS x y z rgb\nSIZE 8 8 8 4\nTYPE F F F F\nCOUNT 1 1 1 1")?;
    } else {
        writeln!(w, "FIELDS x y z\nSIZE 8 8 8\nTYPE F F F\nCOUNT 1 1 1")?;
    }
    writeln!(w, "WIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\nDATA ascii")?;
    for i in 0..n {
        let p = set.positions().row(i);
        write!(w, "{:?} {:?} {:?}", p[0], p[1], p[2])?;
        if color {
            let c = set.colors().row(i);
            write!(w, " {:e}", f32::from_bits(pack_rgb([c[0], c[1], c[2]])))?;
        }
        writeln!(w)?;
    }
    Ok(())
}
