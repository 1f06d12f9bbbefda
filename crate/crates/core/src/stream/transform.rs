use std::path::Path;
use std::sync::Mutex;

use crate::counters::{cost, FlopIoCounters};
use crate::engine::GridPrecompute;
use crate::error::{Error, Result};

use super::format::{open_stream, StreamKind, StreamReader, StreamWriter};
use super::pipeline::{pipeline_run, Buffering, DoubleBuffer};

/// Where the transformed stream goes.
#[derive(Debug, Clone, Copy)]
pub enum TransformTarget<'a> {
    /// A new sibling file; the raw input is preserved.
    Sibling(&'a Path),
    /// Overwrite the input stream.
    InPlace,
}

/// Streams `Zᵀ` over a SNP or trait stream in slabs of `nb` columns: load
/// `n·nb` values, one dense product, store `n·nb` values. Trait scalars are
/// carried over unchanged. Returns the path of the transformed stream.
pub fn preloop_stream_transform(
    input: &Path,
    kind: StreamKind,
    target: TransformTarget<'_>,
    pre: &GridPrecompute,
    nb: usize,
    buffering: Buffering,
    counters: &mut FlopIoCounters,
) -> Result<std::path::PathBuf> {
    if nb == 0 {
        return Err(Error::InvalidParameter("nb must be at least 1".into()));
    }
    if !matches!(kind, StreamKind::Snp | StreamKind::Trait) {
        return Err(Error::InvalidParameter("only SNP and trait streams are transformed".into()));
    }
    let reader = open_stream(input, kind)?;
    let n = reader.n();
    if n != pre.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} has n={n} but the kinship matrix has n={}",
            input.display(),
            pre.n()
        )));
    }
    let writer = match target {
        TransformTarget::Sibling(path) => StreamWriter::create(path, *reader.header())?,
        TransformTarget::InPlace => StreamWriter::reopen(input, kind)?,
    };
    let count = reader.count();
    let stats = transform_columns(&reader, &writer, pre, nb, buffering)?;
    let mut bytes_loaded = stats.0;
    let mut bytes_stored = stats.1;

    if kind == StreamKind::Trait {
        let (scalars, loaded) = reader.read_scalars(0, count)?;
        bytes_loaded += loaded;
        bytes_stored += writer.write_scalars(0, &scalars)?;
    }
    counters.preloop_flops += cost::transform(n, count);
    counters.bytes_loaded += bytes_loaded;
    counters.bytes_stored += bytes_stored;
    counters.io_stall_time += stats.2.io_stall_time;
    counters.compute_time += stats.2.compute_time;

    let path = writer.path().to_path_buf();
    writer.finish()?;
    Ok(path)
}

fn transform_columns(
    reader: &StreamReader,
    writer: &StreamWriter,
    pre: &GridPrecompute,
    nb: usize,
    buffering: Buffering,
) -> Result<(u64, u64, super::pipeline::PipelineStats)> {
    let n = reader.n();
    let count = reader.count();
    let slabs: Vec<(usize, usize)> = (0..count)
        .step_by(nb)
        .map(|start| (start, nb.min(count - start)))
        .collect();
    let loaded = Mutex::new(0u64);
    let stored = Mutex::new(0u64);
    let buffers = DoubleBuffer::new(buffering, Vec::<f64>::new(), Vec::<f64>::new());
    let stats = pipeline_run(
        &slabs,
        buffers,
        |&(start, width), input| {
            input.resize(n * width, 0.0);
            *loaded.lock().unwrap() += reader.read_columns_into(start, width, input)?;
            Ok(())
        },
        |&(_, width), input, output| {
            output.resize(n * width, 0.0);
            pre.spectrum.transform(width, input, output);
            Ok(())
        },
        |&(start, _), output| {
            *stored.lock().unwrap() += writer.write_columns(start, output)?;
            Ok(())
        },
    )?;
    Ok((loaded.into_inner().unwrap(), stored.into_inner().unwrap(), stats))
}
