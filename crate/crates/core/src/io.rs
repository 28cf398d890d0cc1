//! CSV persistence for every intermediate.
//!
//! Each file starts with `# key=value` comment lines (several pairs may
//! share a line) followed by a header row and numeric rows. Floats are
//! written in Rust's shortest round-trip form, so reading a file back gives
//! bit-identical values.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::density::{DensityCurve, Normalization, SmoothingTag};
use crate::ensemble::TrajectoryEnsemble;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::sensor::PixelImage;
use crate::wavefield::FieldSlice;
use crate::weak_momentum::{KxkCurve, Quantity};

/// Header key carrying the configuration hash.
pub const HASH_KEY: &str = "config_hash";

/// Ordered `# key=value` header lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Meta {
    lines: Vec<Vec<(String, String)>>,
}

impl Meta {
    pub fn new() -> Self {
        Meta::default()
    }

    /// Adds a header line with one pair.
    pub fn with(mut self, key: &str, value: impl Display) -> Self {
        self.lines.push(vec![(key.to_string(), value.to_string())]);
        self
    }

    /// Adds a header line holding several pairs.
    pub fn with_line(mut self, pairs: &[(&str, String)]) -> Self {
        self.lines
            .push(pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect());
        self
    }

    pub fn with_hash(self, hash: Option<&str>) -> Self {
        match hash {
            Some(h) => self.with(HASH_KEY, h),
            None => self,
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines
            .iter()
            .flatten()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn hash(&self) -> Option<&str> {
        self.get(HASH_KEY)
    }

    fn map(&self) -> BTreeMap<&str, &str> {
        self.lines
            .iter()
            .flatten()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect()
    }
}

/// Raw contents of one CSV file.
#[derive(Debug, Clone)]
pub struct CsvDoc {
    pub path: PathBuf,
    pub meta: Meta,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvDoc {
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        let mut meta = Meta::new();
        let mut body = String::new();
        let mut line = String::new();
        loop {
            line.clear();
            let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
            if n == 0 {
                break;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let pairs = rest
                    .split_whitespace()
                    .map(|tok| {
                        tok.split_once('=')
                            .map(|(k, v)| (k.to_string(), v.to_string()))
                            .ok_or_else(|| {
                                Error::schema(path, format!("header token '{tok}' is not key=value"))
                            })
                    })
                    .collect::<Result<Vec<_>>>()?;
                meta.lines.push(pairs);
            } else {
                body.push_str(&line);
                break;
            }
        }
        std::io::Read::read_to_string(&mut reader, &mut body).map_err(|e| Error::io(path, e))?;
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(body.as_bytes());
        let columns: Vec<String> = csv
            .headers()
            .map_err(|e| Error::schema(path, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if columns.is_empty() || columns.iter().all(|c| c.is_empty()) {
            return Err(Error::schema(path, "missing column header row"));
        }
        let mut rows = Vec::new();
        for rec in csv.records() {
            let rec = rec.map_err(|e| Error::schema(path, e.to_string()))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(CsvDoc {
            path: path.to_path_buf(),
            meta,
            columns,
            rows,
        })
    }

    /// Fails unless the header row is exactly `expected`.
    pub fn expect_columns(&self, expected: &[&str]) -> Result<()> {
        for (i, want) in expected.iter().enumerate() {
            match self.columns.get(i) {
                Some(got) if got == want => {}
                Some(got) => {
                    return Err(Error::schema(
                        &self.path,
                        format!("column {i} is '{got}', expected '{want}'"),
                    ))
                }
                None => {
                    return Err(Error::schema(&self.path, format!("missing column '{want}'")))
                }
            }
        }
        if self.columns.len() != expected.len() {
            return Err(Error::schema(
                &self.path,
                format!("expected {} columns, found {}", expected.len(), self.columns.len()),
            ));
        }
        Ok(())
    }

    pub fn meta_f64(&self, key: &str) -> Result<f64> {
        let v = self
            .meta
            .get(key)
            .ok_or_else(|| Error::schema(&self.path, format!("missing header '# {key}='")))?;
        v.parse()
            .map_err(|_| Error::schema(&self.path, format!("header '{key}' value '{v}' is not a number")))
    }

    /// Column `col` parsed as f64; empty cells are `None`.
    pub fn column_opt(&self, col: usize) -> Result<Vec<Option<f64>>> {
        let name = self.columns.get(col).cloned().unwrap_or_default();
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let cell = row.get(col).map(|s| s.trim()).unwrap_or("");
                if cell.is_empty() {
                    return Ok(None);
                }
                cell.parse().map(Some).map_err(|_| {
                    Error::schema(
                        &self.path,
                        format!("row {r}, column '{name}': '{cell}' is not a number"),
                    )
                })
            })
            .collect()
    }

    pub fn column(&self, col: usize) -> Result<Vec<f64>> {
        let name = self.columns.get(col).cloned().unwrap_or_default();
        self.column_opt(col)?
            .into_iter()
            .enumerate()
            .map(|(r, v)| {
                v.ok_or_else(|| Error::schema(&self.path, format!("row {r}, column '{name}' is empty")))
            })
            .collect()
    }
}

/// Writes header lines, a column row, and the rows.
pub fn write_csv<R, I>(path: &Path, meta: &Meta, columns: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<str>,
{
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for line in &meta.lines {
        let text: Vec<String> = line.iter().map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(out, "# {}", text.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    {
        let mut w = csv::WriterBuilder::new().from_writer(&mut out);
        w.write_record(columns).map_err(|e| Error::io(path, e.into()))?;
        for row in rows {
            w.write_record(row.into_iter().map(|c| c.as_ref().to_string()).collect::<Vec<_>>())
                .map_err(|e| Error::io(path, e.into()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn parse_flag(doc: &CsvDoc, col: usize) -> Result<Vec<bool>> {
    doc.rows
        .iter()
        .enumerate()
        .map(|(r, row)| match row.get(col).map(|s| s.trim()) {
            Some("1") => Ok(true),
            Some("0") => Ok(false),
            other => Err(Error::schema(
                &doc.path,
                format!("row {r}, column '{}': expected 0 or 1, got {other:?}", doc.columns[col]),
            )),
        })
        .collect()
}

/// Uniform grid through sorted sample positions.
fn grid_from_xs(path: &Path, xs: &[f64]) -> Result<Grid> {
    if xs.len() < 2 {
        return Err(Error::schema(path, "need at least 2 rows"));
    }
    let g = Grid::new(xs[0], xs[xs.len() - 1], xs.len())
        .map_err(|e| Error::schema(path, e.to_string()))?;
    let tol = 1e-9 * g.spacing();
    if xs.iter().enumerate().any(|(i, &x)| (x - g.x(i)).abs() > tol) {
        return Err(Error::schema(path, "x_mm must be uniformly spaced"));
    }
    Ok(g)
}

// ---- frames -------------------------------------------------------------

pub const FRAME_COLUMNS: [&str; 4] = ["pixel_index", "x_mm", "counts_R", "counts_L"];

pub fn write_frame(path: &Path, img: &PixelImage, hash: Option<&str>) -> Result<()> {
    let mut meta = Meta::new()
        .with("z_m", img.z_m)
        .with("pitch_um", img.pitch_um)
        .with("magnification", img.magnification);
    if let Some(rng) = &img.rng {
        meta = meta.with("rng", rng);
    }
    let meta = meta.with_hash(hash);
    let rows = (0..img.len()).map(|i| {
        [
            i.to_string(),
            img.pixel_centers[i].to_string(),
            img.counts_r[i].to_string(),
            img.counts_l[i].to_string(),
        ]
    });
    write_csv(path, &meta, &FRAME_COLUMNS, rows)
}

pub fn read_frame(path: &Path) -> Result<(PixelImage, Meta)> {
    let doc = CsvDoc::read(path)?;
    doc.expect_columns(&FRAME_COLUMNS)?;
    let idx = doc.column(0)?;
    if idx.iter().enumerate().any(|(i, &v)| v != i as f64) {
        return Err(Error::schema(path, "pixel_index must run 0, 1, 2, ..."));
    }
    let img = PixelImage {
        z_m: doc.meta_f64("z_m")?,
        pitch_um: doc.meta_f64("pitch_um")?,
        magnification: doc.meta_f64("magnification")?,
        pixel_centers: doc.column(1)?,
        counts_r: doc.column(2)?,
        counts_l: doc.column(3)?,
        rng: doc.meta.get("rng").map(str::to_string),
    };
    img.validate().map_err(|e| Error::schema(path, e.to_string()))?;
    Ok((img, doc.meta))
}

// ---- trajectory ensembles -----------------------------------------------

pub fn write_ensemble(path: &Path, ens: &TrajectoryEnsemble, meta: Meta) -> Result<()> {
    let meta = meta.with("label", &ens.label);
    let mut columns = vec!["z_m".to_string()];
    columns.extend((0..ens.n_trajectories()).map(|i| format!("traj_{i}")));
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows = (0..ens.n_planes()).map(|j| {
        let mut r = vec![ens.z_levels[j].to_string()];
        r.extend(ens.rows.iter().map(|row| opt(row[j])));
        r
    });
    write_csv(path, &meta, &cols, rows)
}

pub fn read_ensemble(path: &Path) -> Result<(TrajectoryEnsemble, Meta)> {
    let doc = CsvDoc::read(path)?;
    if doc.columns.first().map(String::as_str) != Some("z_m") {
        return Err(Error::schema(path, "first column must be 'z_m'"));
    }
    for (i, c) in doc.columns.iter().enumerate().skip(1) {
        if *c != format!("traj_{}", i - 1) {
            return Err(Error::schema(path, format!("column {i} is '{c}', expected 'traj_{}'", i - 1)));
        }
    }
    let z = doc.column(0)?;
    let cols: Vec<Vec<Option<f64>>> = (1..doc.columns.len())
        .map(|c| doc.column_opt(c))
        .collect::<Result<_>>()?;
    let label = doc.meta.get("label").unwrap_or("").to_string();
    let ens = TrajectoryEnsemble::new(z, cols, label).map_err(|e| Error::schema(path, e.to_string()))?;
    Ok((ens, doc.meta))
}

// ---- k_x/|k| and slope curves -------------------------------------------

pub const KXK_COLUMNS: [&str; 4] = ["x_mm", "value", "mask_flag", "clamp_flag"];

fn quantity_str(q: Quantity) -> &'static str {
    match q {
        Quantity::KxOverK => "kx_over_k",
        Quantity::Slope => "slope",
    }
}

/// `mask_flag = 1` marks a masked (unusable) sample.
pub fn write_kxk(path: &Path, curve: &KxkCurve, hash: Option<&str>) -> Result<()> {
    let zeta = curve.zeta.map(|z| z.to_string()).unwrap_or_else(|| "none".into());
    let meta = Meta::new()
        .with("z_m", curve.z_m)
        .with("zeta", zeta)
        .with("mode", &curve.mode)
        .with("quantity", quantity_str(curve.quantity))
        .with_hash(hash);
    let rows = (0..curve.len()).map(|i| {
        [
            curve.xs[i].to_string(),
            curve.values[i].to_string(),
            flag(!curve.valid[i]).to_string(),
            flag(curve.clamped[i]).to_string(),
        ]
    });
    write_csv(path, &meta, &KXK_COLUMNS, rows)
}

pub fn read_kxk(path: &Path) -> Result<(KxkCurve, Meta)> {
    let doc = CsvDoc::read(path)?;
    doc.expect_columns(&KXK_COLUMNS)?;
    let quantity = match doc.meta.get("quantity") {
        Some("kx_over_k") | None => Quantity::KxOverK,
        Some("slope") => Quantity::Slope,
        Some(other) => return Err(Error::schema(path, format!("unknown quantity '{other}'"))),
    };
    let zeta = match doc.meta.get("zeta") {
        None | Some("none") => None,
        Some(_) => Some(doc.meta_f64("zeta")?),
    };
    let masked = parse_flag(&doc, 2)?;
    let curve = KxkCurve {
        z_m: doc.meta_f64("z_m")?,
        xs: doc.column(0)?,
        values: doc.column(1)?,
        valid: masked.iter().map(|m| !m).collect(),
        clamped: parse_flag(&doc, 3)?,
        quantity,
        zeta,
        mode: doc.meta.get("mode").unwrap_or("").to_string(),
    };
    if curve.xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::schema(path, "x_mm must be strictly increasing"));
    }
    Ok((curve, doc.meta))
}

// ---- densities ----------------------------------------------------------

pub const DENSITY_COLUMNS: [&str; 2] = ["x_mm", "density"];

pub fn write_density(path: &Path, d: &DensityCurve, hash: Option<&str>) -> Result<()> {
    let mut meta = Meta::new().with("z_m", d.z_m);
    meta = match d.smoothing {
        Some(SmoothingTag::Kde { h_mm }) => {
            meta.with_line(&[("method", "kde".into()), ("h_mm", h_mm.to_string())])
        }
        Some(SmoothingTag::Spline) => meta.with("method", "spline"),
        None => meta.with("method", "none"),
    };
    let meta = meta
        .with("mass", d.mass)
        .with("normalization", d.normalization.as_str())
        .with_hash(hash);
    let xs = d.xs();
    let rows = xs
        .iter()
        .zip(&d.values)
        .map(|(x, v)| [x.to_string(), v.to_string()]);
    write_csv(path, &meta, &DENSITY_COLUMNS, rows)
}

pub fn read_density(path: &Path) -> Result<(DensityCurve, Meta)> {
    let doc = CsvDoc::read(path)?;
    doc.expect_columns(&DENSITY_COLUMNS)?;
    let xs = doc.column(0)?;
    let grid = grid_from_xs(path, &xs)?;
    let values = doc.column(1)?;
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::schema(path, "density values must be finite and >= 0"));
    }
    let normalization = match doc.meta.get("normalization") {
        Some("integral") | None => Normalization::Integral,
        Some("sum") => Normalization::Sum,
        Some(other) => return Err(Error::schema(path, format!("unknown normalization '{other}'"))),
    };
    let smoothing = match doc.meta.get("method") {
        Some("kde") => Some(SmoothingTag::Kde {
            h_mm: doc.meta_f64("h_mm")?,
        }),
        Some("spline") => Some(SmoothingTag::Spline),
        _ => None,
    };
    let mass = if doc.meta.get("mass").is_some() {
        doc.meta_f64("mass")?
    } else {
        1.0
    };
    let d = DensityCurve {
        z_m: doc.meta_f64("z_m")?,
        grid,
        values,
        mass,
        normalization,
        smoothing,
    };
    Ok((d, doc.meta))
}

// ---- fields -------------------------------------------------------------

pub const FIELD_COLUMNS: [&str; 3] = ["x_mm", "re", "im"];

pub fn write_field(path: &Path, f: &FieldSlice, hash: Option<&str>) -> Result<()> {
    let meta = Meta::new()
        .with("z_m", f.z_m)
        .with("wavenumber_per_mm", f.wavenumber)
        .with_hash(hash);
    let xs = f.grid.points();
    let rows = xs
        .iter()
        .zip(&f.amplitude)
        .map(|(x, a)| [x.to_string(), a.re.to_string(), a.im.to_string()]);
    write_csv(path, &meta, &FIELD_COLUMNS, rows)
}

pub fn read_field(path: &Path) -> Result<(FieldSlice, Meta)> {
    let doc = CsvDoc::read(path)?;
    doc.expect_columns(&FIELD_COLUMNS)?;
    let grid = grid_from_xs(path, &doc.column(0)?)?;
    let re = doc.column(1)?;
    let im = doc.column(2)?;
    let amp: Vec<Complex64> = re.into_iter().zip(im).map(|(r, i)| Complex64::new(r, i)).collect();
    let f = FieldSlice::new(doc.meta_f64("z_m")?, grid, amp, doc.meta_f64("wavenumber_per_mm")?)
        .map_err(|e| Error::schema(path, e.to_string()))?;
    Ok((f, doc.meta))
}

/// Refuses artifacts whose hashes disagree, unless `force`.
///
/// `expected` is the reference hash; artifacts without a hash are accepted.
pub fn check_hashes<'a>(
    expected: Option<&str>,
    artifacts: impl IntoIterator<Item = (&'a Path, &'a Meta)>,
    force: bool,
) -> Result<Option<String>> {
    let mut reference = expected.map(str::to_string);
    let mut first_path: Option<PathBuf> = None;
    for (path, meta) in artifacts {
        let Some(h) = meta.hash() else { continue };
        match &reference {
            None => {
                reference = Some(h.to_string());
                first_path = Some(path.to_path_buf());
            }
            Some(r) if r != h && !force => {
                let against = first_path
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_else(|| "the configuration".into());
                return Err(Error::Data(format!(
                    "{} has config_hash {h}, which differs from {r} ({against}); pass --force to mix artifacts",
                    path.display()
                )));
            }
            _ => {}
        }
    }
    Ok(reference)
}

/// All header pairs, for diagnostics.
pub fn meta_summary(meta: &Meta) -> String {
    meta.map()
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}
