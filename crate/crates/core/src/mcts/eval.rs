//! Policy evaluation for search workers, inline or through a batching queue.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::policy::{masked_renormalize, PolicyModel, Renormalized};
use crate::samegame::{encode_board, Board, EncodedBoard};

struct Request {
    input: EncodedBoard,
    reply: Sender<Result<Vec<f32>>>,
}

/// Counters kept by the queue consumer.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct QueueStats {
    pub requests: u64,
    pub batches: u64,
    pub full_flushes: u64,
    pub timeout_flushes: u64,
    /// Batches flushed because every live producer was waiting.
    pub all_waiting_flushes: u64,
}

/// Producer end of an evaluation queue. Dropping it tells the consumer one
/// fewer worker can still submit.
pub struct EvalClient {
    tx: Sender<Request>,
    reply_tx: Sender<Result<Vec<f32>>>,
    reply_rx: Receiver<Result<Vec<f32>>>,
    live: Arc<AtomicUsize>,
}

impl EvalClient {
    /// Submits one input and blocks until its output comes back.
    pub fn evaluate(&self, input: EncodedBoard) -> Result<Vec<f32>> {
        self.tx
            .send(Request {
                input,
                reply: self.reply_tx.clone(),
            })
            .map_err(|_| Error::Contract("evaluation queue consumer has stopped"))?;
        self.reply_rx
            .recv()
            .map_err(|_| Error::Contract("evaluation queue dropped a request"))?
    }
}

impl Drop for EvalClient {
    fn drop(&mut self) {
        self.live.fetch_sub(1, Ordering::AcqRel);
    }
}

/// Consumer end of an evaluation queue.
pub struct EvalServer<'m> {
    model: &'m dyn PolicyModel,
    rx: Receiver<Request>,
    live: Arc<AtomicUsize>,
    batch_limit: usize,
    timeout: Duration,
}

/// A multi-producer, single-consumer queue with `producers` clients. The
/// server batches requests and flushes when the batch reaches `batch_limit`,
/// when every live producer is waiting, or when the oldest request has waited
/// `timeout`.
pub fn eval_queue(
    model: &dyn PolicyModel,
    producers: usize,
    batch_limit: usize,
    timeout: Duration,
) -> (EvalServer<'_>, Vec<EvalClient>) {
    let (tx, rx) = mpsc::channel();
    let live = Arc::new(AtomicUsize::new(producers));
    let clients = (0..producers)
        .map(|_| {
            let (reply_tx, reply_rx) = mpsc::channel();
            EvalClient {
                tx: tx.clone(),
                reply_tx,
                reply_rx,
                live: live.clone(),
            }
        })
        .collect();
    let server = EvalServer {
        model,
        rx,
        live,
        batch_limit: batch_limit.max(1),
        timeout,
    };
    (server, clients)
}

impl EvalServer<'_> {
    /// Serves requests until every client has been dropped.
    pub fn run(self) -> QueueStats {
        let mut stats = QueueStats::default();
        let mut batch: Vec<Request> = Vec::with_capacity(self.batch_limit);
        while let Ok(first) = self.rx.recv() {
            batch.push(first);
            let deadline = Instant::now() + self.timeout;
            loop {
                if batch.len() >= self.batch_limit {
                    stats.full_flushes += 1;
                    break;
                }
                if batch.len() >= self.live.load(Ordering::Acquire) {
                    stats.all_waiting_flushes += 1;
                    break;
                }
                // poll in short slices so a producer exiting is noticed
                let now = Instant::now();
                if now >= deadline {
                    stats.timeout_flushes += 1;
                    break;
                }
                let slice = (deadline - now).min(Duration::from_micros(200));
                match self.rx.recv_timeout(slice) {
                    Ok(r) => batch.push(r),
                    Err(RecvTimeoutError::Timeout) => {}
                    Err(RecvTimeoutError::Disconnected) => {
                        stats.all_waiting_flushes += 1;
                        break;
                    }
                }
            }
            stats.requests += batch.len() as u64;
            stats.batches += 1;
            self.flush(&mut batch);
        }
        stats
    }

    fn flush(&self, batch: &mut Vec<Request>) {
        let inputs: Vec<EncodedBoard> = batch.iter_mut().map(|r| std::mem::take(&mut r.input)).collect();
        match self.model.evaluate_batch(&inputs) {
            Ok(outputs) => {
                for (req, out) in batch.drain(..).zip(outputs) {
                    let _ = req.reply.send(Ok(out));
                }
            }
            Err(e) => {
                let msg = e.to_string();
                for req in batch.drain(..) {
                    let _ = req
                        .reply
                        .send(Err(Error::Config(format!("batch evaluation failed: {msg}"))));
                }
            }
        }
    }
}

/// How one worker obtains policy outputs.
pub(crate) enum Evaluator<'a> {
    Uniform,
    Direct(&'a dyn PolicyModel),
    Queued(EvalClient),
}

impl Evaluator<'_> {
    pub fn is_uniform(&self) -> bool {
        matches!(self, Evaluator::Uniform)
    }

    /// Raw network output, or `None` for the uniform policy.
    fn raw(&self, board: &Board) -> Result<Option<Vec<f32>>> {
        match self {
            Evaluator::Uniform => Ok(None),
            Evaluator::Direct(m) => m.evaluate(&encode_board(board)).map(Some),
            Evaluator::Queued(c) => c.evaluate(encode_board(board)).map(Some),
        }
    }

    /// Policy restricted to `legal` grid indices and renormalized.
    pub fn priors(&self, board: &Board, legal: &[usize]) -> Result<Renormalized> {
        match self.raw(board)? {
            None => {
                let mut probs = vec![0.0; board.width() * board.height()];
                for &i in legal {
                    probs[i] = 1.0 / legal.len() as f64;
                }
                Ok(Renormalized {
                    probs,
                    fell_back: false,
                })
            }
            Some(raw) => masked_renormalize(&raw, legal),
        }
    }
}
