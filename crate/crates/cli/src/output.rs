//! In-memory artifacts, flushed to disk only after a command succeeds.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

/// Scientific notation used for every float cell.
pub fn num(v: f64) -> String {
    format!("{v:.12e}")
}

pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Table { writer }
    }

    pub fn row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(cells).expect("in-memory write");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("in-memory flush")
    }
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line chart with optional logarithmic axes. Non-positive values are dropped on log axes.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], log_x: bool, log_y: bool) -> String {
    let (w, h, m) = (640.0, 420.0, 60.0);
    let tx = |v: f64| if log_x { v.log10() } else { v };
    let ty = |v: f64| if log_y { v.log10() } else { v };
    let keep = |&(x, y): &(f64, f64)| x.is_finite() && y.is_finite() && (!log_x || x > 0.0) && (!log_y || y > 0.0);
    let pts: Vec<Vec<(f64, f64)>> =
        series.iter().map(|s| s.points.iter().copied().filter(keep).map(|(x, y)| (tx(x), ty(y))).collect()).collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-300 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-300 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let tick = |v: f64, log: bool| if log { format!("1e{v:.1}") } else { format!("{v:.3}") };

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n\
         <line x1=\"{m}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        w / 2.0,
        escape(title),
        h - m,
        w - m,
        h - m,
        h - m,
        w / 2.0,
        h - 16.0,
        escape(x_label),
        h / 2.0,
        h / 2.0,
        escape(y_label),
    );
    for (v, anchor) in [(x0, "start"), (x1, "end")] {
        svg += &format!("<text x=\"{:.1}\" y=\"{}\" text-anchor=\"{anchor}\">{}</text>\n", px(v), h - m + 16.0, tick(v, log_x));
    }
    for v in [y0, y1] {
        svg += &format!("<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n", m - 4.0, py(v) + 4.0, tick(v, log_y));
    }
    for (i, (s, p)) in series.iter().zip(&pts).enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        svg += &format!("<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\" points=\"{}\"/>\n", path.join(" "));
        for &(x, y) in p {
            svg += &format!("<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{colour}\"/>\n", px(x), py(y));
        }
        svg += &format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{colour}\">{}</text>\n",
            w - m - 150.0,
            m + 16.0 * i as f64,
            escape(&s.name)
        );
    }
    svg += "</svg>\n";
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub files: Vec<ManifestEntry>,
}

#[derive(Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn table(&mut self, name: &str, t: Table) {
        self.add(name, t.into_bytes());
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("serializable summary");
        text.push('\n');
        self.add(name, text.into_bytes());
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn manifest(&self, command: &str, seed: u64) -> Manifest {
        let files = self
            .files
            .iter()
            .map(|(name, bytes)| ManifestEntry {
                file: name.clone(),
                bytes: bytes.len(),
                sha256: format!("{:x}", Sha256::digest(bytes)),
            })
            .collect();
        Manifest { command: command.to_string(), seed, files }
    }

    /// Writes every file plus the manifest. Files listed by an earlier manifest
    /// in `dir` are removed first; any other pre-existing content is refused.
    pub fn flush(self, dir: &Path, command: &str, seed: u64) -> Result<Manifest, CliError> {
        prepare_dir(dir)?;
        let manifest = self.manifest(command, seed);
        for (name, bytes) in &self.files {
            fs::write(dir.join(name), bytes)?;
        }
        let mut text = serde_json::to_string_pretty(&manifest).expect("serializable manifest");
        text.push('\n');
        fs::write(dir.join(MANIFEST), text)?;
        Ok(manifest)
    }
}

/// Checks that `dir` is absent, empty or holds only a previous run.
pub fn check_output_dir(dir: &Path) -> Result<(), CliError> {
    if !dir.exists() {
        return Ok(());
    }
    if !dir.is_dir() {
        return Err(CliError::Config(format!("output path {} is not a directory", dir.display())));
    }
    let mut owned = vec![MANIFEST.to_string()];
    if let Ok(text) = fs::read_to_string(dir.join(MANIFEST)) {
        let old: Manifest =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("unreadable manifest in {}: {e}", dir.display())))?;
        owned.extend(old.files.into_iter().map(|f| f.file));
    }
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if !owned.contains(&name) {
            return Err(CliError::Config(format!(
                "output directory {} holds {name}, which no earlier run produced",
                dir.display()
            )));
        }
    }
    Ok(())
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    check_output_dir(dir)?;
    if dir.exists() {
        for entry in fs::read_dir(dir)? {
            fs::remove_file(entry?.path())?;
        }
    } else {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}
