//! Chunked JSONL processing on a worker pool with input-order output.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::CliError;

/// Lines handed to the pool at once. Bounds memory independent of input size.
pub const CHUNK_LINES: usize = 1024;

/// A non-blank input line with its 1-based position in the file.
#[derive(Debug, Clone)]
pub struct Numbered {
    pub line: usize,
    pub text: String,
}

pub fn open_input(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|source| CliError::io(path, source))
}

pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|source| CliError::io(p, source))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Feed the reader to `handle` in chunks of non-blank lines.
pub fn for_each_chunk<R: BufRead>(
    reader: R,
    source: &Path,
    mut handle: impl FnMut(Vec<Numbered>) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let mut chunk = Vec::with_capacity(CHUNK_LINES);
    for (i, text) in reader.lines().enumerate() {
        let text = text.map_err(|e| CliError::io(source, e))?;
        if text.trim().is_empty() {
            continue;
        }
        chunk.push(Numbered { line: i + 1, text });
        if chunk.len() == CHUNK_LINES {
            handle(std::mem::replace(&mut chunk, Vec::with_capacity(CHUNK_LINES)))?;
        }
    }
    if !chunk.is_empty() {
        handle(chunk)?;
    }
    Ok(())
}

/// Map every line on the pool and write one output line per input line, in
/// input order. Returns the number of lines processed.
pub fn map_lines<R, F>(
    reader: R,
    source: &Path,
    pool: &ThreadPool,
    out: &mut dyn Write,
    f: F,
) -> Result<usize, CliError>
where
    R: BufRead,
    F: Fn(&Numbered) -> String + Sync,
{
    let mut count = 0;
    for_each_chunk(reader, source, |chunk| {
        let rendered: Vec<String> = pool.install(|| chunk.par_iter().map(&f).collect());
        for line in rendered {
            writeln!(out, "{line}").map_err(CliError::output)?;
        }
        count += chunk.len();
        Ok(())
    })?;
    out.flush().map_err(CliError::output)?;
    Ok(count)
}

pub fn build_pool(workers: usize) -> Result<ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))
}
