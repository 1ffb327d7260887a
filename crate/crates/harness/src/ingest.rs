//! Reading and writing points, correspondences and masks.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use nalgebra::{Point2, Point3};
use ply_rs::parser::Parser;
use ply_rs::ply::{
    Addable, DefaultElement, ElementDef, Encoding, Ply, Property, PropertyDef, PropertyType, ScalarType,
};
use ply_rs::writer::Writer;
use seqgc::{Correspondence, MapPoint};

use crate::error::{HarnessError, HarnessResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointFormat {
    Ply,
    Csv,
}

/// Point-cloud format from the file extension.
pub fn point_format(path: &Path) -> HarnessResult<PointFormat> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("ply") => Ok(PointFormat::Ply),
        Some("csv") => Ok(PointFormat::Csv),
        _ => Err(HarnessError::Usage(format!(
            "unknown point format for `{}` (expected .ply or .csv)",
            path.display()
        ))),
    }
}

fn read_text(path: &Path) -> HarnessResult<String> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}

pub fn read_points(path: &Path) -> HarnessResult<Vec<MapPoint>> {
    let parsed = match point_format(path)? {
        PointFormat::Csv => parse_points_csv(&read_text(path)?),
        PointFormat::Ply => {
            let mut f = std::fs::File::open(path).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
            parse_points_ply(&mut f)
        }
    };
    parsed.map_err(|e| e.context(path.display()))
}

pub fn read_matches(path: &Path) -> HarnessResult<Vec<Correspondence>> {
    if path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() != Some("csv") {
        return Err(HarnessError::Usage(format!("matches must be a .csv file, got `{}`", path.display())));
    }
    parse_matches_csv(&read_text(path)?).map_err(|e| e.context(path.display()))
}

pub fn read_mask(path: &Path) -> HarnessResult<Vec<(usize, u32)>> {
    if path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() != Some("csv") {
        return Err(HarnessError::Usage(format!("masks must be a .csv file, got `{}`", path.display())));
    }
    parse_mask_csv(&read_text(path)?).map_err(|e| e.context(path.display()))
}

/// Records of a header-optional, comma-separated file with their line numbers.
fn records(text: &str, arities: &[usize]) -> HarnessResult<Vec<(usize, Vec<String>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            HarnessError::Data(format!("line {line}: {e}"))
        })?;
        let line = rec.position().map_or(k as u64 + 1, |p| p.line()) as usize;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if out.is_empty() && k == 0 && rec.get(0) == Some("id") {
            continue;
        }
        if !arities.contains(&rec.len()) {
            return Err(HarnessError::Data(format!(
                "line {line}: expected {} fields, found {}",
                arities.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" or "),
                rec.len()
            )));
        }
        out.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(out)
}

fn number(line: usize, field: &str) -> HarnessResult<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(HarnessError::Data(format!("line {line}: `{field}` is not a finite number"))),
    }
}

fn id(line: usize, field: &str) -> HarnessResult<usize> {
    field
        .parse()
        .map_err(|_| HarnessError::Data(format!("line {line}: `{field}` is not a point id")))
}

fn label(line: usize, field: Option<&String>) -> HarnessResult<Option<u32>> {
    match field.map(String::as_str) {
        None | Some("") => Ok(None),
        Some(f) => f
            .parse()
            .map(Some)
            .map_err(|_| HarnessError::Data(format!("line {line}: `{f}` is not an instance label"))),
    }
}

fn check_unique(ids: impl Iterator<Item = (usize, usize)>) -> HarnessResult<()> {
    let mut seen = HashMap::new();
    for (line, id) in ids {
        if let Some(first) = seen.insert(id, line) {
            return Err(HarnessError::Data(format!("line {line}: id {id} already used on line {first}")));
        }
    }
    Ok(())
}

/// `id,x,y,z[,label]`.
pub fn parse_points_csv(text: &str) -> HarnessResult<Vec<MapPoint>> {
    let recs = records(text, &[4, 5])?;
    let mut out = Vec::with_capacity(recs.len());
    for (line, f) in &recs {
        let p = Point3::new(number(*line, &f[1])?, number(*line, &f[2])?, number(*line, &f[3])?);
        let point = MapPoint::new(id(*line, &f[0])?, p).map_err(|e| HarnessError::Data(format!("line {line}: {e}")))?;
        out.push(point.with_label(label(*line, f.get(4))?));
    }
    check_unique(recs.iter().map(|(l, _)| *l).zip(out.iter().map(|p| p.id)))?;
    Ok(out)
}

/// `id,xr,yr,xc,yc[,label]`.
pub fn parse_matches_csv(text: &str) -> HarnessResult<Vec<Correspondence>> {
    let recs = records(text, &[5, 6])?;
    let mut out = Vec::with_capacity(recs.len());
    for (line, f) in &recs {
        let r = Point2::new(number(*line, &f[1])?, number(*line, &f[2])?);
        let c = Point2::new(number(*line, &f[3])?, number(*line, &f[4])?);
        let m = Correspondence::new(id(*line, &f[0])?, r, c).map_err(|e| HarnessError::Data(format!("line {line}: {e}")))?;
        out.push(m.with_label(label(*line, f.get(5))?));
    }
    check_unique(recs.iter().map(|(l, _)| *l).zip(out.iter().map(|c| c.id)))?;
    Ok(out)
}

/// `id,label`.
pub fn parse_mask_csv(text: &str) -> HarnessResult<Vec<(usize, u32)>> {
    let recs = records(text, &[2])?;
    let mut out = Vec::with_capacity(recs.len());
    for (line, f) in &recs {
        let l = label(*line, f.get(1))?.ok_or_else(|| HarnessError::Data(format!("line {line}: missing label")))?;
        out.push((id(*line, &f[0])?, l));
    }
    check_unique(recs.iter().map(|(l, _)| *l).zip(out.iter().map(|m| m.0)))?;
    Ok(out)
}

/// Replaces every point's label with the mask entry for its id. Points
/// without an entry become unlabeled.
pub fn apply_mask(points: &mut [MapPoint], mask: &[(usize, u32)]) -> HarnessResult<()> {
    let index: HashMap<usize, usize> = points.iter().enumerate().map(|(i, p)| (p.id, i)).collect();
    for p in points.iter_mut() {
        p.prior_label = None;
    }
    for &(id, l) in mask {
        let i = index
            .get(&id)
            .ok_or_else(|| HarnessError::Data(format!("mask references unknown point id {id}")))?;
        points[*i].prior_label = Some(l);
    }
    Ok(())
}

fn scalar(p: &Property) -> Option<f64> {
    Some(match *p {
        Property::Char(v) => v as f64,
        Property::UChar(v) => v as f64,
        Property::Short(v) => v as f64,
        Property::UShort(v) => v as f64,
        Property::Int(v) => v as f64,
        Property::UInt(v) => v as f64,
        Property::Float(v) => v as f64,
        Property::Double(v) => v,
        _ => return None,
    })
}

/// Vertices with `x y z` properties; ids are vertex indices. An optional
/// integer `label` property carries the prior, negative meaning unlabeled.
pub fn parse_points_ply(source: &mut impl Read) -> HarnessResult<Vec<MapPoint>> {
    let ply = Parser::<DefaultElement>::new()
        .read_ply(source)
        .map_err(|e| HarnessError::Data(format!("malformed PLY: {e}")))?;
    let vertices = ply
        .payload
        .get("vertex")
        .ok_or_else(|| HarnessError::Data("PLY has no vertex element".into()))?;
    let mut out = Vec::with_capacity(vertices.len());
    for (i, v) in vertices.iter().enumerate() {
        let coord = |name: &str| {
            v.get(name)
                .and_then(scalar)
                .filter(|x| x.is_finite())
                .ok_or_else(|| HarnessError::Data(format!("vertex {i}: missing or non-numeric `{name}`")))
        };
        let p = MapPoint::new(i, Point3::new(coord("x")?, coord("y")?, coord("z")?))?;
        let l = v.get("label").and_then(scalar).filter(|l| *l >= 0.0).map(|l| l as u32);
        out.push(p.with_label(l));
    }
    Ok(out)
}

/// ASCII PLY with double coordinates and an integer label (-1 = none).
/// Vertex order follows `points`; ids are not stored.
pub fn write_points_ply(points: &[MapPoint]) -> HarnessResult<Vec<u8>> {
    let mut ply = Ply::<DefaultElement>::new();
    ply.header.encoding = Encoding::Ascii;
    let mut vertex = ElementDef::new("vertex".to_string());
    for name in ["x", "y", "z"] {
        vertex.properties.add(PropertyDef::new(name.to_string(), PropertyType::Scalar(ScalarType::Double)));
    }
    vertex.properties.add(PropertyDef::new("label".to_string(), PropertyType::Scalar(ScalarType::Int)));
    ply.header.elements.add(vertex);
    let payload = points
        .iter()
        .map(|p| {
            let mut e = DefaultElement::new();
            e.insert("x".to_string(), Property::Double(p.position.x));
            e.insert("y".to_string(), Property::Double(p.position.y));
            e.insert("z".to_string(), Property::Double(p.position.z));
            e.insert("label".to_string(), Property::Int(p.prior_label.map_or(-1, |l| l as i32)));
            e
        })
        .collect();
    ply.payload.insert("vertex".to_string(), payload);
    let mut out = Vec::new();
    Writer::new()
        .write_ply(&mut out, &mut ply)
        .map_err(|e| HarnessError::Data(format!("writing PLY: {e}")))?;
    Ok(out)
}

fn csv_string(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    // writing into memory cannot fail
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv output is utf-8")
}

fn label_field(l: Option<u32>) -> String {
    l.map_or_else(String::new, |l| l.to_string())
}

/// `id,x,y,z[,label]`, labels included when `with_labels`.
pub fn write_points_csv(points: &[MapPoint], with_labels: bool) -> String {
    let header: &[&str] = if with_labels { &["id", "x", "y", "z", "label"] } else { &["id", "x", "y", "z"] };
    csv_string(
        header,
        points.iter().map(|p| {
            let mut r = vec![
                p.id.to_string(),
                p.position.x.to_string(),
                p.position.y.to_string(),
                p.position.z.to_string(),
            ];
            if with_labels {
                r.push(label_field(p.prior_label));
            }
            r
        }),
    )
}

pub fn write_matches_csv(matches: &[Correspondence]) -> String {
    csv_string(
        &["id", "xr", "yr", "xc", "yc", "label"],
        matches.iter().map(|c| {
            vec![
                c.id.to_string(),
                c.ref_point.x.to_string(),
                c.ref_point.y.to_string(),
                c.cur_point.x.to_string(),
                c.cur_point.y.to_string(),
                label_field(c.prior_label),
            ]
        }),
    )
}

/// One row per labeled point.
pub fn write_mask_csv(points: &[MapPoint]) -> String {
    csv_string(
        &["id", "label"],
        points
            .iter()
            .filter_map(|p| p.prior_label.map(|l| vec![p.id.to_string(), l.to_string()])),
    )
}
