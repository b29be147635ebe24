//! Artifact files. Every file opens with a provenance comment naming the
//! schema, the config hash and the root seed; readers skip `#` lines.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn header(&self, schema: &str) -> String {
        format!("# dips schema={schema} config_sha256={} seed={}", self.config_sha256, self.seed)
    }

    /// Reads the provenance line of an artifact, if it has one.
    pub fn parse_header(line: &str) -> Option<(String, Provenance)> {
        let rest = line.strip_prefix("# dips ")?;
        let (mut schema, mut hash, mut seed) = (None, None, None);
        for field in rest.split_whitespace() {
            match field.split_once('=')? {
                ("schema", v) => schema = Some(v.to_string()),
                ("config_sha256", v) => hash = Some(v.to_string()),
                ("seed", v) => seed = v.parse().ok(),
                _ => {}
            }
        }
        Some((schema?, Provenance { config_sha256: hash?, seed: seed? }))
    }
}

pub fn read_provenance(path: &Path) -> Result<(String, Provenance), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    text.lines()
        .next()
        .and_then(Provenance::parse_header)
        .ok_or_else(|| CliError::runtime(format!("{}: missing provenance header", path.display())))
}

/// CSV writer that emits the provenance line before the header row.
pub struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path, schema: &str, prov: &Provenance, header: &[&str]) -> Result<Self, CliError> {
        let file = File::create(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        let mut buf = BufWriter::new(file);
        writeln!(buf, "{}", prov.header(schema))?;
        let mut writer = csv::Writer::from_writer(buf);
        writer.write_record(header)?;
        Ok(CsvOut { path: path.to_path_buf(), writer })
    }

    pub fn row<I, T>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|e| CliError::runtime(format!("{}: {e}", self.path.display())))
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

/// Writes a text artifact with a provenance line in front.
pub fn write_text(path: &Path, schema: &str, prov: &Provenance, body: &str) -> Result<(), CliError> {
    let mut text = prov.header(schema);
    text.push('\n');
    text.push_str(body);
    std::fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

/// Opens a CSV artifact for reading: comment lines are skipped and the
/// provenance is returned with the rows.
pub fn read_csv(path: &Path) -> Result<(Provenance, Vec<csv::StringRecord>, csv::StringRecord), CliError> {
    let (_, prov) = read_provenance(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    let header = reader.headers()?.clone();
    let rows = reader
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    Ok((prov, rows, header))
}

pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trips() {
        let p = Provenance { config_sha256: "ab12".into(), seed: 7 };
        let line = p.header("runs-v1");
        assert_eq!(line, "# dips schema=runs-v1 config_sha256=ab12 seed=7");
        assert_eq!(Provenance::parse_header(&line), Some(("runs-v1".to_string(), p)));
        assert_eq!(Provenance::parse_header("run,stage"), None);
    }

    #[test]
    fn csv_round_trips_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let prov = Provenance { config_sha256: "00".into(), seed: 1 };
        let mut out = CsvOut::create(&path, "t-v1", &prov, &["a", "b"]).unwrap();
        out.row(["1", "2.5e0"]).unwrap();
        out.finish().unwrap();
        let (p, rows, header) = read_csv(&path).unwrap();
        assert_eq!(p, prov);
        assert_eq!(header.iter().collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0][1].parse::<f64>().unwrap(), 2.5);
    }
}
