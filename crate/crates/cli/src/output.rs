use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use hypgeo::{Error, Result};

/// Refuses to clobber an existing file unless `force` is set.
pub fn check_output(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::usage(format!(
            "{} already exists (pass --force to overwrite)",
            path.display()
        )));
    }
    Ok(())
}

pub struct CsvOut {
    w: csv::Writer<BufWriter<File>>,
    path: std::path::PathBuf,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[String]) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = CsvOut {
            w: csv::Writer::from_writer(BufWriter::new(f)),
            path: path.to_path_buf(),
        };
        out.row(header)?;
        Ok(out)
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        self.w.write_record(fields).map_err(|e| self.err(e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.w
            .flush()
            .map_err(|e| Error::io(&self.path, e))
    }

    fn err(&self, e: csv::Error) -> Error {
        Error::io(&self.path, std::io::Error::other(e))
    }
}

/// Shortest round-tripping decimal form, independent of locale.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn coord_header(prefix: &[&str], dim: usize) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain((0..dim).map(|i| format!("z{i}")))
        .collect()
}

pub fn with_coords(mut fields: Vec<String>, coords: &[f64]) -> Vec<String> {
    fields.extend(coords.iter().map(|&x| num(x)));
    fields
}
