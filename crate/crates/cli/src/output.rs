use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::CliError;

pub const TOOL_VERSION: &str = concat!("perclab ", env!("CARGO_PKG_VERSION"));
const CONFIG_PREFIX: &str = "# config: ";
/// The only header line that varies between identical runs.
pub const WALL_TIME_PREFIX: &str = "# wall_time_s: ";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColType {
    Str,
    Int,
    Float,
    Bool,
}

impl ColType {
    fn as_str(self) -> &'static str {
        match self {
            ColType::Str => "str",
            ColType::Int => "int",
            ColType::Float => "float",
            ColType::Bool => "bool",
        }
    }
}

/// A result table with a fixed schema; cells are already formatted.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<(&'static str, ColType)>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[(&'static str, ColType)]) -> Self {
        Table { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match schema");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|(c, _)| *c == name)
    }

    /// Cell `name` of every row.
    pub fn values(&self, name: &str) -> Vec<&str> {
        let i = self.column(name).unwrap_or_else(|| panic!("no column {name}"));
        self.rows.iter().map(|r| r[i].as_str()).collect()
    }

    pub fn floats(&self, name: &str) -> Vec<f64> {
        self.values(name).into_iter().map(|v| v.parse().expect("float cell")).collect()
    }

    fn write_body<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let names: Vec<&str> = self.columns.iter().map(|(c, _)| *c).collect();
        writeln!(w, "{}", names.join(","))?;
        for row in &self.rows {
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Main table plus an optional per-parameter summary.
#[derive(Clone, Debug, PartialEq)]
pub struct Output {
    pub main: Table,
    pub summary: Option<Table>,
}

fn write_header<W: Write>(w: &mut W, cfg: &ExperimentConfig, table: &Table) -> std::io::Result<()> {
    writeln!(w, "# {TOOL_VERSION}")?;
    writeln!(w, "# experiment: {}", cfg.experiment)?;
    writeln!(w, "# config_sha256: {}", cfg.hash_hex())?;
    let schema: Vec<String> = table.columns.iter().map(|(c, t)| format!("{c}:{}", t.as_str())).collect();
    writeln!(w, "# schema: {}", schema.join(","))?;
    for line in cfg.to_toml().lines() {
        writeln!(w, "{CONFIG_PREFIX}{line}")?;
    }
    Ok(())
}

/// Write one table with the standard header. `wall_time` adds the single
/// non-reproducible header line.
pub fn write_table<W: Write>(
    mut w: W,
    cfg: &ExperimentConfig,
    table: &Table,
    wall_time: Option<Duration>,
) -> std::io::Result<()> {
    write_header(&mut w, cfg, table)?;
    if let Some(t) = wall_time {
        writeln!(w, "{WALL_TIME_PREFIX}{:.3}", t.as_secs_f64())?;
    }
    table.write_body(&mut w)
}

/// `<stem>.summary.csv` next to `path`.
pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.summary.csv"))
}

/// Write the main CSV to `path` and the summary, if any, beside it.
pub fn write_output(path: &Path, cfg: &ExperimentConfig, out: &Output, wall_time: Duration) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let create = |p: &Path| std::fs::File::create(p).map(std::io::BufWriter::new).map_err(|e| CliError::io(p, e));
    let mut file = create(path)?;
    write_table(&mut file, cfg, &out.main, Some(wall_time)).map_err(|e| CliError::io(path, e))?;
    file.flush().map_err(|e| CliError::io(path, e))?;
    if let Some(summary) = &out.summary {
        let sp = summary_path(path);
        let mut file = create(&sp)?;
        write_table(&mut file, cfg, summary, None).map_err(|e| CliError::io(&sp, e))?;
        file.flush().map_err(|e| CliError::io(&sp, e))?;
    }
    Ok(())
}

/// Recover the embedded configuration from a result CSV.
pub fn read_embedded_config<R: BufRead>(reader: R) -> Result<ExperimentConfig, CliError> {
    let mut text = String::new();
    for line in reader.lines() {
        let line = line.map_err(|e| CliError::Config(e.to_string()))?;
        if !line.starts_with('#') {
            break;
        }
        if let Some(rest) = line.strip_prefix(CONFIG_PREFIX) {
            text.push_str(rest);
            text.push('\n');
        }
    }
    if text.is_empty() {
        return Err(CliError::Config("no embedded config found".into()));
    }
    ExperimentConfig::from_toml_str(&text, None::<Experiment>)
}

/// Float cell in shortest round-trip form.
pub fn fmt_f(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_embeds_a_parseable_config() {
        let mut cfg = ExperimentConfig::new(Experiment::Theory);
        cfg.params.c = crate::config::Grid(vec![0.5, 2.0]);
        let mut table = Table::new(&[("c", ColType::Float)]);
        table.push(vec![fmt_f(0.5)]);
        let mut buf = Vec::new();
        write_table(&mut buf, &cfg, &table, Some(Duration::from_millis(1500))).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("# wall_time_s: 1.500\n"));
        assert!(text.ends_with("c\n0.5\n"));
        assert_eq!(fmt_f(2e-16), "2e-16");
        let back = read_embedded_config(&buf[..]).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn summary_sits_beside_the_main_file() {
        assert_eq!(summary_path(Path::new("out/run.csv")), PathBuf::from("out/run.summary.csv"));
    }

    #[test]
    fn floats_roundtrip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456789.125] {
            assert_eq!(fmt_f(x).parse::<f64>().unwrap(), x);
        }
    }
}
