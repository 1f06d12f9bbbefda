//! Double-buffered streaming.
//!
//! Memory is split into workspaces that circulate between three agents: a
//! prefetch thread fills a workspace's input buffer, the calling thread
//! computes into its output buffer, and a writeback thread flushes that
//! output. Workspaces move between agents by value over channels, so a
//! buffer is only ever reachable from one agent at a time. With two
//! workspaces, one is being computed on while the other is flushing its
//! previous tile and prefetching the next slab; with one, the three stages
//! serialize.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crossbeam_channel::unbounded;

use crate::error::{Error, Result};

/// One workspace: an input slab buffer plus an output buffer.
#[derive(Debug, Clone)]
pub struct Workspace<I, O> {
    pub input: I,
    pub output: O,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Buffering {
    Single,
    #[default]
    Double,
}

impl Buffering {
    pub fn workspaces(self) -> usize {
        match self {
            Buffering::Single => 1,
            Buffering::Double => 2,
        }
    }
}

/// Both workspaces of a double-buffered pipeline.
#[derive(Debug)]
pub struct DoubleBuffer<I, O> {
    pub workspaces: Vec<Workspace<I, O>>,
}

impl<I: Clone, O: Clone> DoubleBuffer<I, O> {
    pub fn new(mode: Buffering, input: I, output: O) -> Self {
        let workspaces = (0..mode.workspaces())
            .map(|_| Workspace {
                input: input.clone(),
                output: output.clone(),
            })
            .collect();
        Self { workspaces }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PipelineStats {
    /// Seconds the compute side waited for a loaded workspace.
    pub io_stall_time: f64,
    pub compute_time: f64,
    pub wall_time: f64,
    pub steps: usize,
}

/// Runs `load → compute → store` over `tasks` in order, overlapping the
/// transfers of one workspace with computation on the other.
///
/// The first error raised by any stage is returned after the other stages
/// have drained; results produced before the error may have been stored.
pub fn pipeline_run<T, I, O, L, C, S>(
    tasks: &[T],
    buffers: DoubleBuffer<I, O>,
    mut load: L,
    mut compute: C,
    mut store: S,
) -> Result<PipelineStats>
where
    T: Sync,
    I: Send,
    O: Send,
    L: FnMut(&T, &mut I) -> Result<()> + Send,
    C: FnMut(&T, &I, &mut O) -> Result<()>,
    S: FnMut(&T, &O) -> Result<()> + Send,
{
    if buffers.workspaces.is_empty() {
        return Err(Error::InvalidParameter("pipeline needs at least one workspace".into()));
    }
    let start = Instant::now();
    let abort = AtomicBool::new(false);
    let first_error: Mutex<Option<Error>> = Mutex::new(None);
    let fail = |e: Error| {
        abort.store(true, Ordering::SeqCst);
        let mut slot = first_error.lock().unwrap();
        if slot.is_none() {
            *slot = Some(e);
        }
    };

    let (free_tx, free_rx) = unbounded::<Workspace<I, O>>();
    let (ready_tx, ready_rx) = unbounded::<(usize, Workspace<I, O>)>();
    let (done_tx, done_rx) = unbounded::<(usize, Workspace<I, O>)>();
    for ws in buffers.workspaces {
        free_tx.send(ws).expect("free channel open");
    }

    let mut stats = PipelineStats::default();
    std::thread::scope(|scope| {
        let fail = &fail;
        let abort = &abort;

        scope.spawn(move || {
            for (k, task) in tasks.iter().enumerate() {
                let Ok(mut ws) = free_rx.recv() else { return };
                if abort.load(Ordering::SeqCst) {
                    return;
                }
                if let Err(e) = load(task, &mut ws.input) {
                    fail(e);
                    return;
                }
                if ready_tx.send((k, ws)).is_err() {
                    return;
                }
            }
        });

        scope.spawn(move || {
            while let Ok((k, ws)) = done_rx.recv() {
                if abort.load(Ordering::SeqCst) {
                    return;
                }
                if let Err(e) = store(&tasks[k], &ws.output) {
                    fail(e);
                    return;
                }
                // the prefetcher may already be gone after the last task
                let _ = free_tx.send(ws);
            }
        });

        for _ in 0..tasks.len() {
            let wait = Instant::now();
            let Ok((k, mut ws)) = ready_rx.recv() else { break };
            stats.io_stall_time += wait.elapsed().as_secs_f64();
            if abort.load(Ordering::SeqCst) {
                break;
            }
            let busy = Instant::now();
            let outcome = compute(&tasks[k], &ws.input, &mut ws.output);
            stats.compute_time += busy.elapsed().as_secs_f64();
            if let Err(e) = outcome {
                fail(e);
                break;
            }
            stats.steps += 1;
            if done_tx.send((k, ws)).is_err() {
                break;
            }
        }
        drop(done_tx);
        drop(ready_rx);
    });
    stats.wall_time = start.elapsed().as_secs_f64();

    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }
    if stats.steps != tasks.len() {
        return Err(Error::PipelineAborted);
    }
    Ok(stats)
}
