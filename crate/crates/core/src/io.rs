//! File formats: maps, waypoints, campaign metrics, sweep tables and layer slices.
//!
//! Tables are comma-separated with a header row, `.` as the decimal mark and
//! floats written with 9 significant digits. Grid indices are 1-based;
//! station indices are written 1-based as well.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ckm::ChannelKnowledgeMap;
use crate::error::{Error, Result};
use crate::geom::Trajectory;
use crate::grid::{GridIndex, GridSpec};
use crate::kriging::FittedModel;
use crate::sim::{PlannerConfig, RoundMetrics, SweepRow};
use crate::tsp::WeightMatrix;

pub const CKM_FORMAT_VERSION: u32 = 1;

pub const CKM_COLUMNS: [&str; 8] = ["i", "j", "k", "truth_db", "measured", "estimate_db", "variance", "assoc"];
pub const SLICE_COLUMNS: [&str; 11] = [
    "i", "j", "x", "y", "truth_db", "measured", "estimate_db", "variance", "assoc", "outage", "k",
];
pub const WAYPOINT_COLUMNS: [&str; 8] = ["r", "n", "i", "j", "k", "x", "y", "z"];
pub const WEIGHT_COLUMNS: [&str; 7] = ["a_i", "a_j", "a_k", "b_i", "b_j", "b_k", "weight"];
pub const METRIC_COLUMNS: [&str; 8] = [
    "round",
    "t_r",
    "o_r",
    "m_r",
    "mse_after",
    "realized_outage_m",
    "outage_fraction",
    "measured_count",
];
pub const SWEEP_COLUMNS: [&str; 12] = [
    "point", "planner", "mu1", "mu2", "n", "beta", "mean_t_r", "mean_o_r", "mean_m_r", "mean_mse_after",
    "ok", "error",
];

/// Formats with 9 significant digits, trailing zeros trimmed; positional
/// notation for exponents in `[-5, 15)`, scientific otherwise.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mant, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        // reformat from the rounded mantissa so digits match the scientific form
        let rounded: f64 = sci.parse().expect("round trip");
        let decimals = (8 - exp).max(0) as usize;
        trim(format!("{rounded:.decimals$}"))
    } else {
        format!("{}e{exp}", trim(mant.to_string()))
    }
}

fn trim(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn csv_err(what: &'static str) -> impl Fn(csv::Error) -> Error {
    move |e| Error::Format {
        what,
        reason: e.to_string(),
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// Column positions of `expected` in a header, naming the first missing column.
fn columns(headers: &csv::StringRecord, expected: &[&str], what: &'static str) -> Result<Vec<usize>> {
    expected
        .iter()
        .map(|c| {
            headers.iter().position(|h| h == *c).ok_or_else(|| Error::Format {
                what,
                reason: format!("missing column `{c}`"),
            })
        })
        .collect()
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, pos: usize, name: &str, what: &'static str) -> Result<T> {
    let raw = rec.get(pos).unwrap_or("");
    raw.trim().parse().map_err(|_| Error::Format {
        what,
        reason: format!("line {}: bad value `{raw}` in column `{name}`", rec.position().map_or(0, |p| p.line())),
    })
}

fn parse_bool(rec: &csv::StringRecord, pos: usize, name: &str, what: &'static str) -> Result<bool> {
    match rec.get(pos).map(str::trim) {
        Some("1") | Some("true") => Ok(true),
        Some("0") | Some("false") => Ok(false),
        other => Err(Error::Format {
            what,
            reason: format!("bad boolean {other:?} in column `{name}`"),
        }),
    }
}

/// JSON header of a stored map; the cells live in the CSV named by `body`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkmHeader {
    pub format_version: u32,
    pub spec: GridSpec,
    pub gamma_th_db: f64,
    #[serde(default)]
    pub model: Option<FittedModel>,
    pub cells: usize,
    /// Body file name, relative to the header.
    pub body: String,
}

pub fn write_ckm_csv<W: Write>(ckm: &ChannelKnowledgeMap, w: W) -> Result<()> {
    let err = csv_err("map body");
    let mut out = writer(w);
    out.write_record(CKM_COLUMNS).map_err(&err)?;
    for l in 0..ckm.len() {
        let g = ckm.spec.index(l);
        out.write_record([
            g.i.to_string(),
            g.j.to_string(),
            g.k.to_string(),
            fmt_f64(ckm.truth_sinr_db[l]),
            fmt_bool(ckm.measured[l]).into(),
            fmt_f64(ckm.estimate_sinr_db[l]),
            fmt_f64(ckm.variance[l]),
            (ckm.association[l] + 1).to_string(),
        ])
        .map_err(&err)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a map body; rows may come in any order but must cover every cell once.
pub fn read_ckm_csv<R: Read>(spec: GridSpec, gamma_th_db: f64, r: R) -> Result<ChannelKnowledgeMap> {
    const WHAT: &str = "map body";
    let mut rdr = csv::Reader::from_reader(r);
    let pos = columns(rdr.headers().map_err(csv_err(WHAT))?, &CKM_COLUMNS, WHAT)?;
    let n = spec.len();
    let mut ckm = ChannelKnowledgeMap {
        spec,
        gamma_th_db,
        truth_sinr_db: vec![f64::NAN; n],
        measured: vec![false; n],
        estimate_sinr_db: vec![f64::NAN; n],
        variance: vec![0.0; n],
        association: vec![0; n],
    };
    let mut seen = vec![false; n];
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(WHAT))?;
        let idx = GridIndex::new(
            field(&rec, pos[0], "i", WHAT)?,
            field(&rec, pos[1], "j", WHAT)?,
            field(&rec, pos[2], "k", WHAT)?,
        );
        spec.check(idx)?;
        let l = spec.linear(idx);
        if std::mem::replace(&mut seen[l], true) {
            return Err(Error::Format {
                what: WHAT,
                reason: format!("cell {idx} appears twice"),
            });
        }
        ckm.truth_sinr_db[l] = field(&rec, pos[3], "truth_db", WHAT)?;
        ckm.measured[l] = parse_bool(&rec, pos[4], "measured", WHAT)?;
        ckm.estimate_sinr_db[l] = field(&rec, pos[5], "estimate_db", WHAT)?;
        ckm.variance[l] = field(&rec, pos[6], "variance", WHAT)?;
        let assoc: usize = field(&rec, pos[7], "assoc", WHAT)?;
        if assoc == 0 {
            return Err(Error::Format {
                what: WHAT,
                reason: format!("station index of cell {idx} must be 1-based"),
            });
        }
        ckm.association[l] = assoc - 1;
    }
    let have = seen.iter().filter(|&&s| s).count();
    if have != n {
        return Err(Error::Format {
            what: WHAT,
            reason: format!("expected {n} cells, found {have}"),
        });
    }
    Ok(ckm)
}

fn body_path(header: &Path) -> PathBuf {
    header.with_extension("csv")
}

/// Writes `<stem>.json` (header) and `<stem>.csv` (cells) next to each other.
pub fn save_ckm(ckm: &ChannelKnowledgeMap, model: Option<&FittedModel>, header_path: &Path) -> Result<PathBuf> {
    let body = body_path(header_path);
    let header = CkmHeader {
        format_version: CKM_FORMAT_VERSION,
        spec: ckm.spec,
        gamma_th_db: ckm.gamma_th_db,
        model: model.cloned(),
        cells: ckm.len(),
        body: body
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::invalid("path", "map path needs a file name"))?
            .to_string(),
    };
    write_json(header_path, &header)?;
    write_ckm_csv(ckm, BufWriter::new(File::create(&body)?))?;
    Ok(body)
}

pub fn load_ckm(header_path: &Path) -> Result<(ChannelKnowledgeMap, Option<FittedModel>)> {
    let header: CkmHeader = read_json(header_path)?;
    if header.format_version != CKM_FORMAT_VERSION {
        return Err(Error::Format {
            what: "map header",
            reason: format!("unsupported format_version {}", header.format_version),
        });
    }
    if header.cells != header.spec.len() {
        return Err(Error::Format {
            what: "map header",
            reason: format!("cells = {} but the grid has {}", header.cells, header.spec.len()),
        });
    }
    let body = header_path.parent().unwrap_or(Path::new("")).join(&header.body);
    let ckm = read_ckm_csv(header.spec, header.gamma_th_db, BufReader::new(File::open(body)?))?;
    Ok((ckm, header.model))
}

/// One altitude layer, rows ordered with `i` fastest.
pub fn write_slice<W: Write>(ckm: &ChannelKnowledgeMap, k: usize, w: W) -> Result<()> {
    let spec = &ckm.spec;
    if k == 0 || k > spec.dims[2] {
        return Err(Error::invalid("k", format!("layer {k} outside 1..={}", spec.dims[2])));
    }
    let err = csv_err("slice");
    let mut out = writer(w);
    out.write_record(SLICE_COLUMNS).map_err(&err)?;
    for j in 1..=spec.dims[1] {
        for i in 1..=spec.dims[0] {
            let idx = GridIndex::new(i, j, k);
            let l = spec.linear(idx);
            let c = spec.center(idx);
            out.write_record([
                i.to_string(),
                j.to_string(),
                fmt_f64(c[0]),
                fmt_f64(c[1]),
                fmt_f64(ckm.truth_sinr_db[l]),
                fmt_bool(ckm.measured[l]).into(),
                fmt_f64(ckm.estimate_sinr_db[l]),
                fmt_f64(ckm.variance[l]),
                (ckm.association[l] + 1).to_string(),
                fmt_bool(ckm.outage_at(l)).into(),
                k.to_string(),
            ])
            .map_err(&err)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes `<stem>_k<k>.csv` for every layer into `dir`.
pub fn export_slices(ckm: &ChannelKnowledgeMap, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    (1..=ckm.spec.dims[2])
        .map(|k| {
            let p = dir.join(format!("{stem}_k{k}.csv"));
            write_slice(ckm, k, BufWriter::new(File::create(&p)?))?;
            Ok(p)
        })
        .collect()
}

/// Waypoints of one or more rounds; `n` counts waypoints from 1 within a round.
pub fn write_waypoints<W: Write>(trajectories: &[Trajectory], spec: &GridSpec, w: W) -> Result<()> {
    write_cell_lists(trajectories.iter().map(|t| (t.round, &t.waypoints[..])), spec, w)
}

/// A bare cell list (such as a measurement set) in the waypoint schema.
pub fn write_cells<W: Write>(round: usize, cells: &[GridIndex], spec: &GridSpec, w: W) -> Result<()> {
    write_cell_lists(std::iter::once((round, cells)), spec, w)
}

fn write_cell_lists<'a, W: Write>(
    lists: impl Iterator<Item = (usize, &'a [GridIndex])>,
    spec: &GridSpec,
    w: W,
) -> Result<()> {
    let err = csv_err("waypoints");
    let mut out = writer(w);
    out.write_record(WAYPOINT_COLUMNS).map_err(&err)?;
    for (round, cells) in lists {
        for (n, g) in cells.iter().enumerate() {
            spec.check(*g)?;
            let c = spec.center(*g);
            out.write_record([
                round.to_string(),
                (n + 1).to_string(),
                g.i.to_string(),
                g.j.to_string(),
                g.k.to_string(),
                fmt_f64(c[0]),
                fmt_f64(c[1]),
                fmt_f64(c[2]),
            ])
            .map_err(&err)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Every ordered pair `a != b` of tour vertices with its edge weight.
pub fn write_weight_matrix<W: Write>(nodes: &[GridIndex], weights: &WeightMatrix, w: W) -> Result<()> {
    if nodes.len() != weights.len() {
        return Err(Error::invalid("weights", "matrix size differs from the node count"));
    }
    let err = csv_err("weights");
    let mut out = writer(w);
    out.write_record(WEIGHT_COLUMNS).map_err(&err)?;
    for (a, ga) in nodes.iter().enumerate() {
        for (b, gb) in nodes.iter().enumerate() {
            if a == b {
                continue;
            }
            out.write_record([
                ga.i.to_string(),
                ga.j.to_string(),
                ga.k.to_string(),
                gb.i.to_string(),
                gb.j.to_string(),
                gb.k.to_string(),
                fmt_f64(weights.get(a, b)),
            ])
            .map_err(&err)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads waypoints back into trajectories, grouped by round in file order.
pub fn read_waypoints<R: Read>(spec: &GridSpec, r: R) -> Result<Vec<Trajectory>> {
    const WHAT: &str = "waypoints";
    let mut rdr = csv::Reader::from_reader(r);
    let pos = columns(rdr.headers().map_err(csv_err(WHAT))?, &WAYPOINT_COLUMNS[..5], WHAT)?;
    let mut groups: Vec<(usize, Vec<GridIndex>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(WHAT))?;
        let round: usize = field(&rec, pos[0], "r", WHAT)?;
        let g = GridIndex::new(
            field(&rec, pos[2], "i", WHAT)?,
            field(&rec, pos[3], "j", WHAT)?,
            field(&rec, pos[4], "k", WHAT)?,
        );
        match groups.last_mut() {
            Some((r, pts)) if *r == round => pts.push(g),
            _ => groups.push((round, vec![g])),
        }
    }
    groups
        .into_iter()
        .map(|(r, pts)| Trajectory::new(r, pts, spec))
        .collect()
}

pub fn write_metrics<W: Write>(rows: &[RoundMetrics], w: W) -> Result<()> {
    let err = csv_err("metrics");
    let mut out = writer(w);
    out.write_record(METRIC_COLUMNS).map_err(&err)?;
    for m in rows {
        out.write_record([
            m.round.to_string(),
            fmt_f64(m.t_r),
            fmt_f64(m.o_r),
            m.m_r.to_string(),
            fmt_f64(m.mse_after),
            fmt_f64(m.realized_outage_m),
            fmt_f64(m.outage_fraction),
            m.measured_count.to_string(),
        ])
        .map_err(&err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics<R: Read>(r: R) -> Result<Vec<RoundMetrics>> {
    const WHAT: &str = "metrics";
    let mut rdr = csv::Reader::from_reader(r);
    let pos = columns(rdr.headers().map_err(csv_err(WHAT))?, &METRIC_COLUMNS, WHAT)?;
    let c = METRIC_COLUMNS;
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err(WHAT))?;
            Ok(RoundMetrics {
                round: field(&rec, pos[0], c[0], WHAT)?,
                t_r: field(&rec, pos[1], c[1], WHAT)?,
                o_r: field(&rec, pos[2], c[2], WHAT)?,
                m_r: field(&rec, pos[3], c[3], WHAT)?,
                mse_after: field(&rec, pos[4], c[4], WHAT)?,
                realized_outage_m: field(&rec, pos[5], c[5], WHAT)?,
                outage_fraction: field(&rec, pos[6], c[6], WHAT)?,
                measured_count: field(&rec, pos[7], c[7], WHAT)?,
            })
        })
        .collect()
}

/// Sweep table; parameters not used by a planner are left empty.
pub fn write_sweep<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let err = csv_err("sweep");
    let mut out = writer(w);
    out.write_record(SWEEP_COLUMNS).map_err(&err)?;
    for r in rows {
        let (mu1, mu2, n, beta) = match &r.planner {
            PlannerConfig::Spp { weights, .. } => (fmt_f64(weights.mu1), fmt_f64(weights.mu2), String::new(), String::new()),
            PlannerConfig::Tsp(p) => (String::new(), String::new(), p.n.to_string(), fmt_f64(p.beta)),
        };
        out.write_record([
            r.point.to_string(),
            r.planner.name().to_string(),
            mu1,
            mu2,
            n,
            beta,
            fmt_f64(r.mean_t_r),
            fmt_f64(r.mean_o_r),
            fmt_f64(r.mean_m_r),
            fmt_f64(r.mean_mse_after),
            fmt_bool(r.error.is_none()).into(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(&err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}
