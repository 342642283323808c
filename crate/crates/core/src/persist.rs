//! Versioned file containers: a magic line followed by a JSON body.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MODEL_MAGIC: &str = "KAPG-M1";
pub const STORE_MAGIC: &str = "KAPG-K1";
pub const RANK_MAGIC: &str = "KAPG-R1";

pub fn write_to<W: Write, T: Serialize>(mut w: W, magic: &str, value: &T) -> Result<()> {
    w.write_all(magic.as_bytes())?;
    w.write_all(b"\n")?;
    serde_json::to_writer(&mut w, value).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_from<R: Read, T: DeserializeOwned>(r: R, magic: &str) -> Result<T> {
    let mut r = BufReader::new(r);
    let mut header = String::new();
    r.read_line(&mut header)?;
    let found = header.trim_end_matches('\n');
    if found != magic {
        return Err(Error::Format(format!(
            "expected container {magic}, found {:?}",
            found.chars().take(16).collect::<String>()
        )));
    }
    serde_json::from_reader(r).map_err(|e| Error::Format(e.to_string()))
}

pub fn save<T: Serialize>(path: &Path, magic: &str, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_to(BufWriter::new(file), magic, value).map_err(|e| match e {
        Error::Stream(source) => Error::io(path, source),
        other => other,
    })
}

pub fn load<T: DeserializeOwned>(path: &Path, magic: &str) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_from(file, magic).map_err(|e| match e {
        Error::Stream(source) => Error::io(path, source),
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}
