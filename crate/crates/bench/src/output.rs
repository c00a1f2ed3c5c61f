use std::io::Write;

use sha2::{Digest, Sha256};

use crate::error::Result;

/// A CSV table framed by `#` comment lines.
#[derive(Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub footer: Vec<String>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(|h| h.as_ref().to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.footer.push(line.into());
    }
}

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Provenance written above every table.
pub struct Preamble<'a> {
    pub command: &'a str,
    pub config_bytes: &'a [u8],
    pub seed: u64,
}

pub fn write_table<W: Write>(out: W, preamble: &Preamble<'_>, table: &Table) -> Result<()> {
    let mut out = out;
    writeln!(out, "# msmc-bench {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "# config-sha256 {}", hex::encode(Sha256::digest(preamble.config_bytes)))?;
    writeln!(out, "# seed {}", preamble.seed)?;
    writeln!(out, "# command {}", preamble.command)?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    drop(w);
    for line in &table.footer {
        writeln!(out, "# {line}")?;
    }
    out.flush()?;
    Ok(())
}
