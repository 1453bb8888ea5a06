//! Policy function approximation.
//!
//! A policy maps an encoded board to a probability vector over the
//! row-major `height × width` action grid. Search filters that vector down
//! to the legal actions with [`masked_renormalize`].

mod adam;
mod gradcheck;
mod io;
mod net;
mod real;
mod train;

use std::borrow::Cow;
use std::sync::Arc;

pub use adam::AdamState;
pub use gradcheck::{gradient_check, gradient_check_against, GradCheckOptions, GradCheckReport};
pub use io::{load_model, load_model_for, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use net::{elu, ConvLayerSpec, ConvPolicy, ConvPolicyConfig, Network, Padding};
pub use real::Real;
pub use train::{cross_entropy_loss, train_epochs, EarlyStopping, TrainHistory, TrainOptions};

use crate::error::{Error, Result};
use crate::samegame::{encode_board, Board, Cell, EncodedBoard};

/// State → action-distribution function.
pub trait PolicyModel: Send + Sync {
    /// `(rows, cols, channels)` of the padded input this model accepts.
    fn input_shape(&self) -> (usize, usize, usize);

    fn evaluate(&self, input: &EncodedBoard) -> Result<Vec<f32>>;

    fn evaluate_batch(&self, inputs: &[EncodedBoard]) -> Result<Vec<Vec<f32>>> {
        inputs.iter().map(|x| self.evaluate(x)).collect()
    }
}

/// What guides a search: the uniform prior, or a model.
#[derive(Clone)]
pub enum Policy {
    Uniform,
    Model(Arc<dyn PolicyModel>),
}

impl Policy {
    pub fn model(model: impl PolicyModel + 'static) -> Policy {
        Policy::Model(Arc::new(model))
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, Policy::Uniform)
    }
}

impl std::fmt::Debug for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Policy::Uniform => f.write_str("Policy::Uniform"),
            Policy::Model(m) => write!(f, "Policy::Model({:?})", m.input_shape()),
        }
    }
}

/// A supervised example: network input plus the index of the target action.
pub trait Example {
    fn input(&self) -> Cow<'_, EncodedBoard>;
    fn target(&self) -> usize;
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub input: EncodedBoard,
    pub target: usize,
}

impl TrainSample {
    pub fn new(input: EncodedBoard, target: usize) -> TrainSample {
        TrainSample { input, target }
    }
}

impl Example for TrainSample {
    fn input(&self) -> Cow<'_, EncodedBoard> {
        Cow::Borrowed(&self.input)
    }

    fn target(&self) -> usize {
        self.target
    }
}

/// `1/|legal|` on each legal action's grid index.
pub fn uniform_policy(board: &Board) -> Result<Vec<f32>> {
    let legal = board.legal_actions();
    if legal.is_empty() {
        return Err(Error::Contract("uniform policy of a terminal board"));
    }
    let mut p = vec![0.0; board.width() * board.height()];
    let mass = 1.0 / legal.len() as f32;
    for a in legal {
        p[board.action_index(a)] = mass;
    }
    Ok(p)
}

/// The uniform-over-legal-actions policy behind the model interface. It
/// decodes legality from the one-hot input.
#[derive(Clone, Copy, Debug)]
pub struct UniformPolicy {
    pub height: usize,
    pub width: usize,
    pub colors: u8,
}

impl PolicyModel for UniformPolicy {
    fn input_shape(&self) -> (usize, usize, usize) {
        (self.height + 2, self.width + 2, self.colors as usize + 1)
    }

    fn evaluate(&self, input: &EncodedBoard) -> Result<Vec<f32>> {
        if input.shape() != self.input_shape() {
            return Err(Error::Shape {
                expected: self.input_shape(),
                actual: input.shape(),
            });
        }
        let mut cells = Vec::with_capacity(self.height * self.width);
        for r in 0..self.height {
            for c in 0..self.width {
                let ch = (0..=self.colors as usize)
                    .find(|&k| input.get(r + 1, c + 1, k) > 0.5)
                    .unwrap_or(0);
                cells.push(if ch == 0 { Cell::Empty } else { Cell::Color(ch as u8) });
            }
        }
        let board = Board::new(self.width, self.height, self.colors, cells)?;
        uniform_policy(&board)
    }
}

/// Raw probabilities restricted to the legal grid indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Renormalized {
    /// Full-length vector, zero on illegal entries.
    pub probs: Vec<f64>,
    /// True when the legal mass was degenerate and uniform priors were used.
    pub fell_back: bool,
}

impl Renormalized {
    pub fn legal_priors(&self, legal: &[usize]) -> Vec<f64> {
        legal.iter().map(|&i| self.probs[i]).collect()
    }
}

/// Zeroes illegal entries and rescales the legal ones to sum to 1; falls back
/// to uniform when the legal mass is below `1e-12`, not finite, or any legal
/// entry is NaN.
pub fn masked_renormalize(raw: &[f32], legal: &[usize]) -> Result<Renormalized> {
    if legal.is_empty() {
        return Err(Error::Contract("masked_renormalize with no legal actions"));
    }
    let clean = |v: f32| if v.is_finite() && v > 0.0 { v as f64 } else { 0.0 };
    let mass: f64 = legal.iter().map(|&i| clean(raw[i])).sum();
    let mut probs = vec![0.0; raw.len()];
    let any_nan = legal.iter().any(|&i| raw[i].is_nan());
    let fell_back = any_nan || !(mass.is_finite() && mass >= 1e-12);
    for &i in legal {
        probs[i] = if fell_back {
            1.0 / legal.len() as f64
        } else {
            clean(raw[i]) / mass
        };
    }
    Ok(Renormalized { probs, fell_back })
}

/// Priors for `board`'s legal actions (in canonical order) under `policy`.
pub fn legal_priors(policy: &Policy, board: &Board, legal_idx: &[usize]) -> Result<Renormalized> {
    match policy {
        Policy::Uniform => {
            let raw = vec![1.0f32; board.width() * board.height()];
            masked_renormalize(&raw, legal_idx)
        }
        Policy::Model(m) => {
            let raw = m.evaluate(&encode_board(board))?;
            masked_renormalize(&raw, legal_idx)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samegame::{generate_board, BoardSeed};

    #[test]
    fn uniform_policy_spreads_over_legal_actions() {
        let b = Board::from_rows(3, &[&[1, 1, 2], &[2, 3, 3]]).unwrap();
        let p = uniform_policy(&b).unwrap();
        assert_eq!(p.iter().filter(|&&v| v > 0.0).count(), 2);
        assert!(p.iter().all(|&v| v == 0.0 || v == 0.5));

        let b = Board::from_rows(1, &[&[1, 1]]).unwrap();
        assert_eq!(uniform_policy(&b).unwrap(), vec![1.0, 0.0]);

        let b = Board::from_rows(2, &[&[1, 2]]).unwrap();
        assert!(uniform_policy(&b).is_err());
    }

    #[test]
    fn uniform_policy_sums_to_one_and_model_agrees() {
        let model = UniformPolicy {
            height: 6,
            width: 6,
            colors: 4,
        };
        for s in 0..50 {
            let b = generate_board(&BoardSeed::new(s, 6, 6, 4)).unwrap();
            if b.is_terminal() {
                continue;
            }
            let p = uniform_policy(&b).unwrap();
            assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-6);
            assert_eq!(model.evaluate(&encode_board(&b)).unwrap(), p);
        }
    }

    #[test]
    fn renormalize_cases() {
        let r = masked_renormalize(&[0.2, 0.2, 0.6], &[0, 1]).unwrap();
        assert_eq!(r.probs, vec![0.5, 0.5, 0.0]);
        assert!(!r.fell_back);

        let r = masked_renormalize(&[0.25, 0.75, 0.0], &[0, 1]).unwrap();
        assert_eq!(r.probs, vec![0.25, 0.75, 0.0]);

        let r = masked_renormalize(&[0.0, 0.0, 1.0], &[0, 1]).unwrap();
        assert_eq!(r.probs, vec![0.5, 0.5, 0.0]);
        assert!(r.fell_back);

        let r = masked_renormalize(&[f32::NAN, 0.3, 0.7], &[0, 1]).unwrap();
        assert_eq!(r.probs, vec![0.5, 0.5, 0.0]);
        assert!(r.fell_back);

        assert!(masked_renormalize(&[1.0], &[]).is_err());
    }
}
