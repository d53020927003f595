//! File formats: XYZ and PLY clouds, OBJ meshes, model and ground-truth
//! JSON, the dataset manifest and the metrics CSV.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{MetricsReport, Stage};
use crate::geometry::{polyline_tangents, GroundTruth, PipeModel, Point3, PointCloud, Polyline, TriMesh, Vec3};
use crate::synth::PipeKind;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Whitespace- or comma-separated `x y z` per line; extra columns are
/// ignored, `#` starts a comment.
pub fn read_xyz(reader: impl Read, id: &str) -> Result<PointCloud> {
    let mut pts = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let v: Vec<f64> = body
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .take(3)
            .map(|s| s.parse::<f64>().map_err(|e| parse_err(i + 1, format!("{s:?}: {e}"))))
            .collect::<Result<_>>()?;
        if v.len() < 3 {
            return Err(parse_err(i + 1, "expected 3 coordinates"));
        }
        pts.push(Point3::new(v[0], v[1], v[2]));
    }
    PointCloud::new(pts, id)
}

/// Writes coordinates with full round-trip precision.
pub fn write_xyz(mut w: impl Write, cloud: &PointCloud) -> Result<()> {
    for p in &cloud.points {
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum PlyType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => PlyType::I8,
            "uchar" | "uint8" => PlyType::U8,
            "short" | "int16" => PlyType::I16,
            "ushort" | "uint16" => PlyType::U16,
            "int" | "int32" => PlyType::I32,
            "uint" | "uint32" => PlyType::U32,
            "float" | "float32" => PlyType::F32,
            "double" | "float64" => PlyType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            PlyType::I8 | PlyType::U8 => 1,
            PlyType::I16 | PlyType::U16 => 2,
            PlyType::I32 | PlyType::U32 | PlyType::F32 => 4,
            PlyType::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            PlyType::I8 => b[0] as i8 as f64,
            PlyType::U8 => b[0] as f64,
            PlyType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            PlyType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            PlyType::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            PlyType::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            PlyType::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            PlyType::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

/// Header and ASCII body reader that tracks 1-based line numbers.
struct Lines<R> {
    r: BufReader<R>,
    line: String,
    n: usize,
}

impl<R: Read> Lines<R> {
    fn next(&mut self) -> Result<usize> {
        self.line.clear();
        if self.r.read_line(&mut self.line)? == 0 {
            return Err(parse_err(self.n + 1, "unexpected end of file"));
        }
        self.n += 1;
        Ok(self.n)
    }
}

/// Reads the `vertex` element of an ASCII or binary little-endian PLY file.
/// Only scalar vertex properties are supported; elements after `vertex` are
/// ignored.
pub fn read_ply(reader: impl Read, id: &str) -> Result<PointCloud> {
    let mut lines = Lines { r: BufReader::new(reader), line: String::new(), n: 0 };
    lines.next()?;
    if lines.line.trim_end() != "ply" {
        return Err(parse_err(1, "missing 'ply' magic"));
    }
    let mut binary = None;
    let mut count = None;
    let mut props: Vec<(String, PlyType)> = Vec::new();
    let mut in_vertex = false;
    loop {
        let n = lines.next()?;
        let line = &lines.line;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => return Err(parse_err(n, format!("unsupported format {other}"))),
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, c] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    count = Some(c.parse::<usize>().map_err(|e| parse_err(n, e.to_string()))?);
                } else if count.is_none() {
                    return Err(parse_err(n, "elements before 'vertex' are not supported"));
                }
            }
            ["property", "list", ..] if in_vertex => return Err(parse_err(n, "list properties on vertices are not supported")),
            ["property", ty, name] if in_vertex => {
                let t = PlyType::parse(ty).ok_or_else(|| parse_err(n, format!("unknown type {ty}")))?;
                props.push((name.to_string(), t));
            }
            ["property", ..] => {}
            ["end_header"] => break,
            _ => return Err(parse_err(n, format!("unexpected header line {:?}", line.trim_end()))),
        }
    }
    let lineno = lines.n;
    let binary = binary.ok_or_else(|| parse_err(lineno, "missing format line"))?;
    let count = count.ok_or_else(|| parse_err(lineno, "missing vertex element"))?;
    let col = |name: &str| {
        props
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| parse_err(lineno, format!("vertex has no '{name}' property")))
    };
    let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);
    let mut pts = Vec::with_capacity(count);
    if binary {
        let stride: usize = props.iter().map(|(_, t)| t.size()).sum();
        let offsets: Vec<usize> = props
            .iter()
            .scan(0, |acc, (_, t)| {
                let o = *acc;
                *acc += t.size();
                Some(o)
            })
            .collect();
        let mut buf = vec![0u8; stride];
        for _ in 0..count {
            lines.r.read_exact(&mut buf)?;
            let get = |i: usize| props[i].1.read_le(&buf[offsets[i]..]);
            pts.push(Point3::new(get(ix), get(iy), get(iz)));
        }
    } else {
        for _ in 0..count {
            let n = lines.next()?;
            let v: Vec<f64> = lines
                .line
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|e| parse_err(n, format!("{s:?}: {e}"))))
                .collect::<Result<_>>()?;
            if v.len() != props.len() {
                return Err(parse_err(n, format!("expected {} values, got {}", props.len(), v.len())));
            }
            pts.push(Point3::new(v[ix], v[iy], v[iz]));
        }
    }
    PointCloud::new(pts, id)
}

/// Binary little-endian PLY with double-precision `x y z`.
pub fn write_ply(mut w: impl Write, cloud: &PointCloud) -> Result<()> {
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        cloud.len()
    )?;
    let mut buf = Vec::with_capacity(cloud.len() * 24);
    for p in &cloud.points {
        for c in [p.x, p.y, p.z] {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads `.xyz`/`.txt` or `.ply` by extension. The file stem becomes the
/// instance id.
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("cloud").to_string();
    let f = fs::File::open(path)?;
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("ply") => read_ply(f, &id),
        Some("xyz" | "txt" | "pts") => read_xyz(f, &id),
        _ => Err(Error::InvalidInput(format!("unknown cloud format: {}", path.display()))),
    }
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let f = std::io::BufWriter::new(fs::File::create(path)?);
    match path.extension().and_then(|e| e.to_str()) {
        Some("ply") => write_ply(f, cloud),
        _ => write_xyz(f, cloud),
    }
}

/// Wavefront OBJ with 1-based face indices.
pub fn write_obj(mut w: impl Write, mesh: &TriMesh) -> Result<()> {
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for t in &mesh.triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

pub fn write_polyline_xyz(path: &Path, line: &[Point3]) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    for p in line {
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    w.flush()?;
    Ok(())
}

fn arr(p: &Point3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

fn varr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn to_points(v: &[[f64; 3]]) -> Vec<Point3> {
    v.iter().map(|a| Point3::new(a[0], a[1], a[2])).collect()
}

/// Serialized reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub id: String,
    pub stage: Stage,
    pub mean_radius: f64,
    pub axis_length: f64,
    pub n_before_rdp: usize,
    pub spline: Vec<[f64; 3]>,
    pub tangents: Vec<[f64; 3]>,
}

impl ModelFile {
    pub fn new(id: &str, stage: Stage, model: &PipeModel, n_before_rdp: usize) -> Self {
        Self {
            id: id.to_string(),
            stage,
            mean_radius: model.mean_radius,
            axis_length: model.axis_length,
            n_before_rdp,
            spline: model.spline.points().iter().map(arr).collect(),
            tangents: model.tangents.iter().map(varr).collect(),
        }
    }

    /// Rebuilds the model; tangents and length are taken from the file.
    pub fn model(&self) -> Result<PipeModel> {
        let spline = Polyline::new(to_points(&self.spline))?;
        if self.tangents.len() != spline.len() {
            return Err(Error::InvalidInput(format!(
                "model '{}' has {} tangents for {} spline points",
                self.id,
                self.tangents.len(),
                spline.len()
            )));
        }
        let mut m = PipeModel::new(spline, self.mean_radius)?;
        m.tangents = self.tangents.iter().map(|t| Vec3::new(t[0], t[1], t[2])).collect();
        m.axis_length = self.axis_length;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| parse_err(e.line(), e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthFile {
    pub id: String,
    pub outer_radius: f64,
    pub axis_length: f64,
    pub spline: Vec<[f64; 3]>,
    pub tangents: Vec<[f64; 3]>,
}

impl GroundTruthFile {
    pub fn new(gt: &GroundTruth) -> Self {
        Self {
            id: gt.id.clone(),
            outer_radius: gt.outer_radius,
            axis_length: gt.axis_length,
            spline: gt.spline.points().iter().map(arr).collect(),
            tangents: gt.tangents.iter().map(varr).collect(),
        }
    }

    pub fn ground_truth(&self) -> Result<GroundTruth> {
        let spline = Polyline::new(to_points(&self.spline))?;
        let tangents = if self.tangents.len() == spline.len() {
            self.tangents.iter().map(|t| Vec3::new(t[0], t[1], t[2])).collect()
        } else {
            polyline_tangents(&spline)
        };
        if !(self.outer_radius > 0.0) {
            return Err(Error::InvalidInput(format!("ground truth '{}' has non-positive radius", self.id)));
        }
        Ok(GroundTruth {
            id: self.id.clone(),
            spline,
            tangents,
            outer_radius: self.outer_radius,
            axis_length: self.axis_length,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| parse_err(e.line(), e.to_string()))
    }
}

/// One generated pipe. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub kind: PipeKind,
    pub cloud: String,
    pub ground_truth: String,
    pub points: usize,
    /// Set when the scanner saw none of the pipe.
    pub empty: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| parse_err(e.line(), e.to_string()))
    }
}

/// One metrics row. `report` is `None` for failed instances.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub id: String,
    pub kind: PipeKind,
    pub stage: Stage,
    pub report: Option<MetricsReport>,
}

pub const METRICS_HEADER: [&str; 7] = ["id", "stage", "iou", "r_ratio", "l_ratio", "n_ratio", "status"];

/// Means over successful rows, in the order overall, bends, non-bends.
/// Groups without rows are left out.
pub fn aggregate(rows: &[MetricsRow], stage: Stage) -> Vec<(&'static str, usize, [f64; 4])> {
    type Group = (&'static str, fn(PipeKind) -> bool);
    let groups: [Group; 3] = [("mean", |_| true), ("mean_bends", |k| k.is_bend()), ("mean_non_bends", |k| !k.is_bend())];
    let mut out = Vec::new();
    for (name, keep) in groups {
        let sel: Vec<&MetricsReport> = rows
            .iter()
            .filter(|r| r.stage == stage && keep(r.kind))
            .filter_map(|r| r.report.as_ref())
            .collect();
        if sel.is_empty() {
            continue;
        }
        let n = sel.len() as f64;
        let mean = |f: fn(&MetricsReport) -> f64| sel.iter().map(|m| f(m)).sum::<f64>() / n;
        out.push((
            name,
            sel.len(),
            [mean(|m| m.iou), mean(|m| m.radius_ratio), mean(|m| m.length_ratio), mean(|m| m.point_ratio)],
        ));
    }
    out
}

/// Per-pipe rows, then aggregate rows per stage in stage order.
pub fn write_metrics_csv(w: impl Write, rows: &[MetricsRow]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    csv.write_record(METRICS_HEADER).map_err(io)?;
    let f = |v: f64| format!("{v:.6}");
    for r in rows {
        let rec = match &r.report {
            Some(m) => [r.id.clone(), r.stage.to_string(), f(m.iou), f(m.radius_ratio), f(m.length_ratio), f(m.point_ratio), "ok".into()],
            None => [r.id.clone(), r.stage.to_string(), String::new(), String::new(), String::new(), String::new(), "failed".into()],
        };
        csv.write_record(&rec).map_err(io)?;
    }
    let mut stages: Vec<Stage> = rows.iter().map(|r| r.stage).collect();
    stages.sort();
    stages.dedup();
    for st in stages {
        for (name, n, v) in aggregate(rows, st) {
            csv.write_record([name.to_string(), st.to_string(), f(v[0]), f(v[1]), f(v[2]), f(v[3]), format!("n={n}")])
                .map_err(io)?;
        }
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> PointCloud {
        PointCloud::new(vec![Point3::new(0.1, -2.5, 1e-17), Point3::new(1.0 / 3.0, 7.0, 123456.789), Point3::new(0.0, 0.0, -0.0)], "c").unwrap()
    }

    #[test]
    fn xyz_round_trip_is_exact() {
        let mut buf = Vec::new();
        write_xyz(&mut buf, &cloud()).unwrap();
        assert_eq!(read_xyz(&buf[..], "c").unwrap().points, cloud().points);
    }

    #[test]
    fn xyz_comments_commas_and_errors() {
        let text = "# header\n1, 2, 3, 255\n\n4 5 6 # trailing\n";
        let c = read_xyz(text.as_bytes(), "x").unwrap();
        assert_eq!(c.points, vec![Point3::new(1.0, 2.0, 3.0), Point3::new(4.0, 5.0, 6.0)]);
        let err = read_xyz("1 2 3\n1 2\n".as_bytes(), "x").unwrap_err();
        assert_eq!(err.to_string(), "parse error at line 2: expected 3 coordinates");
        assert!(read_xyz("1 2 nope\n".as_bytes(), "x").is_err());
    }

    #[test]
    fn binary_ply_round_trip() {
        let mut buf = Vec::new();
        write_ply(&mut buf, &cloud()).unwrap();
        assert_eq!(read_ply(&buf[..], "c").unwrap().points, cloud().points);
    }

    #[test]
    fn ply_with_extra_properties() {
        let mut buf = b"ply\nformat binary_little_endian 1.0\ncomment x\nelement vertex 2\nproperty float x\nproperty uchar red\nproperty float y\nproperty float z\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n".to_vec();
        for (x, y, z) in [(1.0f32, 2.0f32, 3.0f32), (-1.5, 0.25, 8.0)] {
            buf.extend_from_slice(&x.to_le_bytes());
            buf.push(200);
            buf.extend_from_slice(&y.to_le_bytes());
            buf.extend_from_slice(&z.to_le_bytes());
        }
        let c = read_ply(&buf[..], "p").unwrap();
        assert_eq!(c.points, vec![Point3::new(1.0, 2.0, 3.0), Point3::new(-1.5, 0.25, 8.0)]);
        let ascii = "ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\nproperty int n\nend_header\n0.5 1 2 7\n";
        assert_eq!(read_ply(ascii.as_bytes(), "a").unwrap().points, vec![Point3::new(0.5, 1.0, 2.0)]);
        assert!(read_ply("ply\nformat binary_big_endian 1.0\n".as_bytes(), "b").is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let spline = Polyline::new(vec![Point3::new(0.0, 0.0, 0.0), Point3::new(0.3, 0.1, 1.0 / 7.0), Point3::new(1.0, 0.2, 0.3)]).unwrap();
        let m = PipeModel::new(spline, 0.1 + 1e-17).unwrap();
        let f = ModelFile::new("p1", Stage::ElongSmooth, &m, 40);
        let text = f.to_json();
        let back = ModelFile::from_json(&text).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.model().unwrap(), m);
        assert_eq!(back.to_json(), text);
        assert!(ModelFile::from_json("{\"id\": 1}").is_err());
    }

    #[test]
    fn ground_truth_json_round_trip() {
        let spec = crate::synth::PipeSpec::straight(Point3::origin(), Point3::new(1.0, 0.0, 0.0), 0.1).unwrap();
        let gt = crate::synth::make_ground_truth(&spec, "g").unwrap();
        let f = GroundTruthFile::new(&gt);
        assert_eq!(GroundTruthFile::from_json(&f.to_json()).unwrap().ground_truth().unwrap(), gt);
    }

    #[test]
    fn metrics_csv_layout() {
        let rep = |iou| MetricsReport {
            iou,
            radius_ratio: 0.9,
            length_ratio: 1.0,
            point_ratio: 0.05,
            stage: Stage::Base,
        };
        let rows = vec![
            MetricsRow { id: "a".into(), kind: PipeKind::Bend, stage: Stage::Base, report: Some(rep(0.5)) },
            MetricsRow { id: "b".into(), kind: PipeKind::Straight, stage: Stage::Base, report: Some(rep(0.7)) },
            MetricsRow { id: "c".into(), kind: PipeKind::Straight, stage: Stage::Base, report: None },
        ];
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "id,stage,iou,r_ratio,l_ratio,n_ratio,status");
        assert_eq!(lines[3], "c,base,,,,,failed");
        assert_eq!(lines[4], "mean,base,0.600000,0.900000,1.000000,0.050000,n=2");
        assert_eq!(lines[5], "mean_bends,base,0.500000,0.900000,1.000000,0.050000,n=1");
        assert_eq!(lines[6], "mean_non_bends,base,0.700000,0.900000,1.000000,0.050000,n=1");
        let mut empty = Vec::new();
        write_metrics_csv(&mut empty, &[]).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap(), "id,stage,iou,r_ratio,l_ratio,n_ratio,status\n");
    }
}
