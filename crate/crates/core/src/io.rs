//! File formats: saliency maps (binary `FBM1` or CSV grids), fixation CSVs,
//! dataset manifests, architecture specs, and evaluation reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{CorrelationStudy, EvalConfig, EvalReport, Record, StudyPoint};
use crate::archplan::{
    ArchSpec, BlockKind, BlockSpec, Fraction, KnownDiscrepancy, PlanExpectation, Stage, StageKind,
};
use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::types::{round_half_up, DatasetManifest, DensityMap, Fixation, FixationSet, ManifestEntry};

pub const FBM_MAGIC: &[u8; 4] = b"FBM1";
const FBM_HEADER: usize = 12;

pub const FIXATION_HEADER: [&str; 3] = ["x", "y", "observer"];
pub const REPORT_HEADER: [&str; 5] = ["model", "image", "metric", "score", "flags"];
pub const STUDY_HEADER: [&str; 3] = ["model", "top1", "score"];

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::ParseError {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn toml_error(path: &Path, text: &str, err: toml::de::Error) -> Error {
    let line = err.span().map_or(0, |s| line_of_offset(text, s.start));
    parse_error(path, line, err.message().trim().to_string())
}

fn csv_line(pos: Option<&csv::Position>) -> usize {
    pos.map_or(0, |p| p.line() as usize)
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = match err.kind() {
        csv::ErrorKind::UnequalLengths { pos, .. } => csv_line(pos.as_ref()),
        csv::ErrorKind::Deserialize { pos, .. } => csv_line(pos.as_ref()),
        csv::ErrorKind::Utf8 { pos, .. } => csv_line(pos.as_ref()),
        _ => 0,
    };
    parse_error(path, line, err.to_string())
}

/// Serializes a map as `FBM1`, little-endian u32 width and height, then
/// row-major little-endian f64 values.
pub fn encode_fbm(map: &DensityMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(FBM_HEADER + 8 * map.len());
    out.extend_from_slice(FBM_MAGIC);
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    for v in map.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_fbm(bytes: &[u8], path: &Path) -> Result<DensityMap> {
    if bytes.len() < FBM_HEADER || &bytes[..4] != FBM_MAGIC {
        return Err(parse_error(path, 0, "missing FBM1 header"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (w, h) = (u32_at(4), u32_at(8));
    let payload = &bytes[FBM_HEADER..];
    let expected = w.checked_mul(h).and_then(|n| n.checked_mul(8));
    if expected != Some(payload.len()) {
        return Err(parse_error(
            path,
            0,
            format!("{w}x{h} header but {} payload bytes", payload.len()),
        ));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    DensityMap::new(w, h, values)
}

pub fn parse_map_csv(text: &str, path: &Path) -> Result<DensityMap> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = csv_line(rec.position());
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_error(path, line, format!("`{f}` is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_error(
                    path,
                    line,
                    format!("row has {} values, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyMap);
    }
    DensityMap::from_rows(&rows)
}

pub fn map_to_csv(map: &DensityMap) -> String {
    let mut out = String::with_capacity(map.len() * 12);
    for row in map.values().chunks(map.width()) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Reads either format, detected by the `FBM1` magic.
pub fn read_map(path: &Path) -> Result<DensityMap> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(FBM_MAGIC) {
        decode_fbm(&bytes, path)
    } else {
        let text = String::from_utf8(bytes).map_err(|e| parse_error(path, 0, e.to_string()))?;
        parse_map_csv(&text, path)
    }
}

/// Writes CSV for a `.csv` extension and `FBM1` otherwise.
pub fn write_map(path: &Path, map: &DensityMap) -> Result<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        write_file(path, map_to_csv(map))
    } else {
        write_file(path, encode_fbm(map))
    }
}

fn check_header(path: &Path, reader: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(parse_error(
            path,
            1,
            format!(
                "header must be exactly `{}`, got `{}`",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

/// Parses `x,y,observer` rows; coordinates round half-up to pixels and must
/// land inside the image.
pub fn parse_fixations(text: &str, path: &Path, width: usize, height: usize) -> Result<FixationSet> {
    let mut reader = csv_reader(text);
    check_header(path, &mut reader, &FIXATION_HEADER)?;
    let mut points = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = csv_line(rec.position());
        let num = |i: usize| -> Result<f64> {
            let f = &rec[i];
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_error(path, line, format!("{}: `{f}` is not a finite number", FIXATION_HEADER[i])))
        };
        let (fx, fy) = (num(0)?, num(1)?);
        let observer: u32 = rec[2]
            .parse()
            .map_err(|_| parse_error(path, line, format!("observer: `{}` is not an id", &rec[2])))?;
        let (x, y) = (round_half_up(fx), round_half_up(fy));
        if x < 0 || y < 0 || x as usize >= width || y as usize >= height {
            return Err(parse_error(
                path,
                line,
                format!("fixation ({fx}, {fy}) outside {width}x{height} image"),
            ));
        }
        points.push(Fixation {
            x: x as usize,
            y: y as usize,
            observer,
        });
    }
    FixationSet::new(width, height, points)
}

pub fn read_fixations(path: &Path, width: usize, height: usize) -> Result<FixationSet> {
    parse_fixations(&read_text(path)?, path, width, height)
}

pub fn fixations_to_csv(fix: &FixationSet) -> String {
    let mut out = FIXATION_HEADER.join(",");
    out.push('\n');
    for p in fix.points() {
        out.push_str(&format!("{},{},{}\n", p.x, p.y, p.observer));
    }
    out
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Parses a manifest of `[[image]]` records with `image_id`, `width`,
/// `height`, `pixels_per_degree`, `fixation_path` and an optional
/// `map_paths` table of model name to map file. Relative paths resolve
/// against `base`.
pub fn parse_manifest(text: &str, path: &Path, base: &Path) -> Result<DatasetManifest> {
    let doc: toml::Table = text.parse().map_err(|e| toml_error(path, text, e))?;
    let header_lines: Vec<usize> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| l.trim_start().starts_with("[[image]]"))
        .map(|(i, _)| i + 1)
        .collect();
    let images = match doc.get("image") {
        Some(toml::Value::Array(a)) => a.as_slice(),
        Some(_) => return Err(parse_error(path, 1, "`image` must be an array of tables")),
        None => &[],
    };
    let mut entries = Vec::with_capacity(images.len());
    for (i, value) in images.iter().enumerate() {
        let record = i + 1;
        let line = header_lines.get(i).copied().unwrap_or(0);
        let bad = |msg: String| parse_error(path, line, format!("image record {record}: {msg}"));
        let table = value
            .as_table()
            .ok_or_else(|| bad("expected a table".into()))?;
        let field = |name: &str| {
            table.get(name).ok_or_else(|| Error::MissingField {
                path: path.to_path_buf(),
                record,
                field: name.into(),
            })
        };
        let string = |name: &str| -> Result<String> {
            field(name)?
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| bad(format!("`{name}` must be a string")))
        };
        let count = |name: &str| -> Result<usize> {
            field(name)?
                .as_integer()
                .filter(|v| *v > 0)
                .map(|v| v as usize)
                .ok_or_else(|| bad(format!("`{name}` must be a positive integer")))
        };
        let ppd = match field("pixels_per_degree")? {
            toml::Value::Float(f) => *f,
            toml::Value::Integer(n) => *n as f64,
            _ => return Err(bad("`pixels_per_degree` must be a number".into())),
        };
        if !(ppd.is_finite() && ppd > 0.0) {
            return Err(bad(format!("`pixels_per_degree` must be positive, got {ppd}")));
        }
        let mut map_paths = BTreeMap::new();
        if let Some(maps) = table.get("map_paths") {
            let maps = maps
                .as_table()
                .ok_or_else(|| bad("`map_paths` must be a table".into()))?;
            for (model, p) in maps {
                let p = p
                    .as_str()
                    .ok_or_else(|| bad(format!("map path for `{model}` must be a string")))?;
                map_paths.insert(model.clone(), resolve(base, p));
            }
        }
        entries.push(ManifestEntry {
            image_id: string("image_id")?,
            width: count("width")?,
            height: count("height")?,
            pixels_per_degree: ppd,
            fixation_path: resolve(base, &string("fixation_path")?),
            map_paths,
        });
    }
    DatasetManifest::new(entries)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = read_text(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(&text, path, base)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArch {
    name: String,
    #[serde(default = "default_input_channels")]
    input_channels: usize,
    #[serde(default = "default_true")]
    multipath: bool,
    #[serde(default)]
    stage: Vec<RawStage>,
}

fn default_input_channels() -> usize {
    3
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStage {
    name: String,
    kind: String,
    #[serde(default)]
    filter: String,
    out_channels: Option<usize>,
    stride: Option<usize>,
    layers: Option<usize>,
    growth: Option<usize>,
    residual_width: Option<usize>,
    dilation: Option<usize>,
}

/// Parses a block specification: top-level `name`, optional
/// `input_channels` (3) and `multipath` (true), then `[[stage]]` records
/// with a `kind` of `conv`, `pool`, `standard`, `residual`, `dense` or
/// `dual_path`.
pub fn parse_arch_spec(text: &str, path: &Path) -> Result<ArchSpec> {
    let raw: RawArch = toml::from_str(text).map_err(|e| toml_error(path, text, e))?;
    let mut stages = Vec::with_capacity(raw.stage.len());
    for (i, s) in raw.stage.into_iter().enumerate() {
        let record = i + 1;
        let need = |v: Option<usize>, field: &str| {
            v.ok_or_else(|| Error::MissingField {
                path: path.to_path_buf(),
                record,
                field: field.into(),
            })
        };
        let stride = s.stride.unwrap_or(1);
        let kind = match s.kind.as_str() {
            "conv" => StageKind::Conv {
                out_channels: need(s.out_channels, "out_channels")?,
                stride,
            },
            "pool" => StageKind::Pool { stride },
            other => {
                let kind = match other {
                    "standard" => BlockKind::Standard,
                    "residual" => BlockKind::Residual,
                    "dense" => BlockKind::Dense,
                    "dual_path" => BlockKind::DualPath,
                    _ => {
                        return Err(Error::InvalidSpec(format!(
                            "stage {record} (`{}`): unknown kind `{other}`",
                            s.name
                        )))
                    }
                };
                if matches!(kind, BlockKind::Dense | BlockKind::DualPath) {
                    need(s.growth, "growth")?;
                }
                if kind == BlockKind::DualPath {
                    need(s.residual_width, "residual_width")?;
                }
                if matches!(kind, BlockKind::Standard | BlockKind::Residual) {
                    need(s.out_channels, "out_channels")?;
                }
                StageKind::Block(BlockSpec {
                    kind,
                    layers: need(s.layers, "layers")?,
                    growth: s.growth,
                    residual_width: s.residual_width,
                    out_channels: s.out_channels,
                    stride,
                    dilation: s.dilation.unwrap_or(1),
                })
            }
        };
        stages.push(Stage {
            name: s.name,
            filter: s.filter,
            kind,
        });
    }
    let spec = ArchSpec {
        name: raw.name,
        input_channels: raw.input_channels,
        multipath: raw.multipath,
        stages,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn load_arch_spec(path: &Path) -> Result<ArchSpec> {
    parse_arch_spec(&read_text(path)?, path)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExpectation {
    #[serde(default)]
    stage_channels: Vec<usize>,
    final_size: Option<String>,
    concat_channels: Option<usize>,
    #[serde(default)]
    known_discrepancy: Vec<RawDiscrepancy>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiscrepancy {
    row: String,
    reference: usize,
    #[serde(default)]
    note: String,
}

pub fn parse_expectations(text: &str, path: &Path) -> Result<PlanExpectation> {
    let raw: RawExpectation = toml::from_str(text).map_err(|e| toml_error(path, text, e))?;
    let final_size = raw
        .final_size
        .map(|s| s.parse::<Fraction>())
        .transpose()?;
    Ok(PlanExpectation {
        stage_channels: raw.stage_channels,
        final_size,
        concat_channels: raw.concat_channels,
        known_discrepancies: raw
            .known_discrepancy
            .into_iter()
            .map(|d| KnownDiscrepancy {
                row: d.row,
                reference: d.reference,
                note: d.note,
            })
            .collect(),
    })
}

pub fn load_expectations(path: &Path) -> Result<PlanExpectation> {
    parse_expectations(&read_text(path)?, path)
}

/// Report rows as CSV with columns `model,image,metric,score,flags`, in key
/// order. Scores use the shortest representation that round-trips.
pub fn report_to_csv(report: &EvalReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER).expect("in-memory write");
    for r in report.records() {
        let score = r.score.map_or(String::new(), |s| s.to_string());
        w.write_record([r.model.as_str(), &r.image, r.metric.name(), &score, &r.flags])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn parse_report_csv(text: &str, path: &Path, config: EvalConfig) -> Result<EvalReport> {
    let mut reader = csv_reader(text);
    check_header(path, &mut reader, &REPORT_HEADER)?;
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = csv_line(rec.position());
        let metric: Metric = rec[2]
            .parse()
            .map_err(|_| parse_error(path, line, format!("unknown metric `{}`", &rec[2])))?;
        let score = match &rec[3] {
            "" => None,
            s => Some(
                s.parse::<f64>()
                    .map_err(|_| parse_error(path, line, format!("`{s}` is not a number")))?,
            ),
        };
        records.push(Record {
            model: rec[0].to_string(),
            image: rec[1].to_string(),
            metric,
            score,
            flags: rec[4].to_string(),
        });
    }
    EvalReport::new(config, records)
}

/// Reads a report CSV and, when present, its `.meta.toml` sidecar.
pub fn read_report(path: &Path) -> Result<EvalReport> {
    let meta = metadata_path(path);
    let config = if meta.exists() {
        parse_metadata(&read_text(&meta)?, &meta)?
    } else {
        EvalConfig::default()
    };
    parse_report_csv(&read_text(path)?, path, config)
}

pub fn metadata_path(report_csv: &Path) -> PathBuf {
    report_csv.with_extension("meta.toml")
}

pub fn markdown_path(report_csv: &Path) -> PathBuf {
    report_csv.with_extension("md")
}

/// Description of how per-image scores are combined, recorded in metadata.
pub const AGGREGATION_NOTE: &str = "unweighted arithmetic mean over images";

#[derive(Debug, Serialize, Deserialize)]
struct RawMetadata {
    seed: u64,
    splits: usize,
    emd_max_side: usize,
    emd_downsample: bool,
    metrics: Vec<String>,
    sigma_degrees: f64,
    #[serde(default)]
    jobs: Option<usize>,
    #[serde(default)]
    aggregation: String,
    #[serde(default)]
    records: usize,
    #[serde(default)]
    flagged: usize,
}

pub fn metadata_toml(report: &EvalReport, jobs: usize) -> String {
    let c = report.config();
    let raw = RawMetadata {
        seed: c.seed,
        splits: c.splits,
        emd_max_side: c.emd_max_side,
        emd_downsample: c.emd_downsample,
        metrics: c.metrics.iter().map(|m| m.name().to_string()).collect(),
        sigma_degrees: c.sigma_degrees,
        jobs: Some(jobs),
        aggregation: AGGREGATION_NOTE.into(),
        records: report.records().len(),
        flagged: report.flagged_count(),
    };
    toml::to_string(&raw).expect("plain metadata serializes")
}

pub fn parse_metadata(text: &str, path: &Path) -> Result<EvalConfig> {
    let raw: RawMetadata = toml::from_str(text).map_err(|e| toml_error(path, text, e))?;
    let metrics = raw
        .metrics
        .iter()
        .map(|m| m.parse::<Metric>())
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalConfig {
        seed: raw.seed,
        splits: raw.splits,
        emd_max_side: raw.emd_max_side,
        emd_downsample: raw.emd_downsample,
        metrics,
        sigma_degrees: raw.sigma_degrees,
    })
}

/// Writes the CSV, the Markdown aggregate and the metadata sidecar.
pub fn write_report(path: &Path, report: &EvalReport, jobs: usize) -> Result<()> {
    write_file(path, report_to_csv(report))?;
    write_file(&metadata_path(path), metadata_toml(report, jobs))?;
    let md = if report.is_empty() {
        String::from("No records.\n")
    } else {
        crate::analysis::aggregate_markdown(&crate::analysis::aggregate(report)?)
    };
    write_file(&markdown_path(path), md)
}

/// Parses `model,top1,score` rows into a correlation study.
pub fn parse_study_csv(text: &str, path: &Path, metric: &str) -> Result<CorrelationStudy> {
    let mut reader = csv_reader(text);
    check_header(path, &mut reader, &STUDY_HEADER)?;
    let mut points = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = csv_line(rec.position());
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| parse_error(path, line, format!("`{}` is not a number", &rec[i])))
        };
        points.push(StudyPoint {
            model: rec[0].to_string(),
            accuracy: num(1)?,
            score: num(2)?,
        });
    }
    CorrelationStudy::new(metric, points)
}

pub fn read_study(path: &Path, metric: &str) -> Result<CorrelationStudy> {
    parse_study_csv(&read_text(path)?, path, metric)
}

/// Scatter data with the least-squares line evaluated at each point.
pub fn scatter_csv(study: &CorrelationStudy) -> String {
    let n = study.points.len() as f64;
    let mx = study.points.iter().map(|p| p.accuracy).sum::<f64>() / n;
    let my = study.points.iter().map(|p| p.score).sum::<f64>() / n;
    let sxy: f64 = study
        .points
        .iter()
        .map(|p| (p.accuracy - mx) * (p.score - my))
        .sum();
    let sxx: f64 = study.points.iter().map(|p| (p.accuracy - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "top1", "score", "fit"]).expect("in-memory write");
    for p in &study.points {
        let fit = my + slope * (p.accuracy - mx);
        w.write_record([
            p.model.clone(),
            p.accuracy.to_string(),
            p.score.to_string(),
            fit.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test.toml")
    }

    const MINIMAL: &str = r#"
[[image]]
image_id = "a"
width = 4
height = 3
pixels_per_degree = 24.0
fixation_path = "fix/a.csv"
map_paths = { m1 = "maps/a.fbm" }
"#;

    #[test]
    fn minimal_manifest() {
        let m = parse_manifest(MINIMAL, p(), Path::new("/data")).unwrap();
        assert_eq!(m.entries().len(), 1);
        let e = &m.entries()[0];
        assert_eq!((e.width, e.height), (4, 3));
        assert_eq!(e.fixation_path, PathBuf::from("/data/fix/a.csv"));
        assert_eq!(e.map_paths["m1"], PathBuf::from("/data/maps/a.fbm"));
    }

    #[test]
    fn duplicate_image_id() {
        let text = format!("{MINIMAL}{MINIMAL}");
        assert_eq!(
            parse_manifest(&text, p(), Path::new(".")),
            Err(Error::DuplicateImageId("a".into()))
        );
    }

    #[test]
    fn missing_ppd_has_no_default() {
        let text = MINIMAL.replace("pixels_per_degree = 24.0\n", "");
        assert!(matches!(
            parse_manifest(&text, p(), Path::new(".")),
            Err(Error::MissingField { record: 1, ref field, .. }) if field == "pixels_per_degree"
        ));
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = "[[image]]\nimage_id = \"a\"\nwidth = = 3\n";
        assert!(matches!(
            parse_manifest(text, p(), Path::new(".")),
            Err(Error::ParseError { line: 3, .. })
        ));
        let text = MINIMAL.replace("width = 4", "width = \"four\"");
        assert!(matches!(
            parse_manifest(&text, p(), Path::new(".")),
            Err(Error::ParseError { line: 2, .. })
        ));
    }

    #[test]
    fn fbm_round_trip_is_bit_exact() {
        let m = DensityMap::new(3, 2, vec![0.1, 1.0 / 3.0, 2.5e-300, 0.0, 7.0, f64::MIN_POSITIVE]).unwrap();
        let bytes = encode_fbm(&m);
        assert_eq!(&bytes[..4], b"FBM1");
        assert_eq!(bytes.len(), 12 + 48);
        let back = decode_fbm(&bytes, p()).unwrap();
        for (a, b) in m.values().iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(decode_fbm(&bytes[..50], p()).is_err());
    }

    #[test]
    fn csv_map_round_trip() {
        let m = DensityMap::new(3, 2, vec![0.1, 1.0 / 3.0, 2.0, 0.0, 7.0, 1e-20]).unwrap();
        let back = parse_map_csv(&map_to_csv(&m), p()).unwrap();
        assert_eq!(back, m);
        assert!(matches!(
            parse_map_csv("1,2\n3\n", p()),
            Err(Error::ParseError { line: 2, .. })
        ));
        assert!(matches!(
            parse_map_csv("1,2\n3,x\n", p()),
            Err(Error::ParseError { line: 2, .. })
        ));
    }

    #[test]
    fn fixation_csv() {
        let f = parse_fixations("x,y,observer\n1.4,2.5,0\n0,0,3\n", p(), 4, 4).unwrap();
        assert_eq!(f.points()[0], Fixation { x: 1, y: 3, observer: 0 });
        assert!(matches!(
            parse_fixations("y,x,observer\n1,1,0\n", p(), 4, 4),
            Err(Error::ParseError { line: 1, .. })
        ));
        assert!(matches!(
            parse_fixations("x,y,observer\n1,1,0\n3.5,0,0\n", p(), 4, 4),
            Err(Error::ParseError { line: 3, .. })
        ));
        let back = parse_fixations(&fixations_to_csv(&f), p(), 4, 4).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn report_csv_round_trip() {
        let records = vec![
            Record {
                model: "m".into(),
                image: "a".into(),
                metric: Metric::Kl,
                score: Some(0.1 + 0.2),
                flags: String::new(),
            },
            Record {
                model: "m".into(),
                image: "a".into(),
                metric: Metric::Cc,
                score: None,
                flags: "error:ZeroMass".into(),
            },
        ];
        let r = EvalReport::new(EvalConfig::default(), records).unwrap();
        let text = report_to_csv(&r);
        assert!(text.starts_with("model,image,metric,score,flags\n"));
        assert_eq!(parse_report_csv(&text, p(), EvalConfig::default()).unwrap(), r);
        let cfg = parse_metadata(&metadata_toml(&r, 4), p()).unwrap();
        assert_eq!(&cfg, r.config());
    }

    #[test]
    fn arch_spec_parse() {
        let text = r#"
name = "tiny"
[[stage]]
name = "Conv"
kind = "conv"
out_channels = 8
stride = 2
[[stage]]
name = "Dense"
kind = "dense"
layers = 2
growth = 4
"#;
        let spec = parse_arch_spec(text, p()).unwrap();
        assert_eq!(spec.stages.len(), 2);
        assert!(spec.multipath);
        let missing = text.replace("growth = 4\n", "");
        assert!(matches!(
            parse_arch_spec(&missing, p()),
            Err(Error::MissingField { record: 2, .. })
        ));
        let unknown = text.replace("kind = \"dense\"", "kind = \"fire\"");
        assert!(matches!(parse_arch_spec(&unknown, p()), Err(Error::InvalidSpec(_))));
    }
}
