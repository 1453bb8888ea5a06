use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{split_and_append, ReplayBuffer, SampleTag, TaggedSample};
use super::config::GenerationConfig;
use crate::error::Result;
use crate::mcts::{play_episode, MoveStats};
use crate::policy::{train_epochs, ConvPolicy, Policy};
use crate::pool::parallel_map;
use crate::samegame::{generate_board, BoardSeed, BoardSource, EpisodeRecord};
use crate::seeds::derive_seed;

const TAG_BOARD: u64 = 1;
const TAG_SEARCH: u64 = 2;
const TAG_NETWORK: u64 = 3;
const TAG_SHUFFLE: u64 = 4;
const TAG_TRAIN: u64 = 5;

/// Seed of everything generation `g` does.
pub fn generation_seed(cfg: &GenerationConfig, generation: usize) -> u64 {
    derive_seed(cfg.seed, generation as u64)
}

/// Board seed of training episode `episode` in generation `g`.
pub fn episode_board(cfg: &GenerationConfig, generation: usize, episode: usize) -> BoardSeed {
    let s = derive_seed(derive_seed(generation_seed(cfg, generation), TAG_BOARD), episode as u64);
    BoardSeed::new(s, cfg.board.width, cfg.board.height, cfg.board.colors)
}

/// Training and validation buffers.
#[derive(Clone, Debug)]
pub struct Buffers {
    pub training: ReplayBuffer<TaggedSample>,
    pub validation: ReplayBuffer<TaggedSample>,
}

impl Buffers {
    pub fn new(cfg: &GenerationConfig) -> Buffers {
        Buffers {
            training: ReplayBuffer::new(cfg.training_capacity),
            validation: ReplayBuffer::new(cfg.validation_capacity),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: usize,
    pub episodes: usize,
    pub mean_score: f64,
    pub std_score: f64,
    /// State-action pairs produced this generation.
    pub samples: usize,
    pub added_training: usize,
    pub added_validation: usize,
    pub training_size: usize,
    pub validation_size: usize,
    /// Distinct generations with data in the training buffer.
    pub training_generations: usize,
    pub epochs: usize,
    pub best_epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub search: MoveStats,
    pub wall_time_ms: f64,
}

impl GenerationReport {
    /// The report with every timing field zeroed; what remains is a
    /// deterministic function of the config.
    pub fn without_timing(&self) -> GenerationReport {
        let mut r = self.clone();
        r.wall_time_ms = 0.0;
        r.search.wall_time_ms = 0.0;
        r
    }
}

pub struct GenerationOutput {
    pub model: ConvPolicy,
    pub report: GenerationReport,
    /// One record per episode, in episode order.
    pub episodes: Vec<EpisodeRecord>,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One generation: play `runs_per_generation` noisy episodes with the
/// previous policy, split the visited state-action pairs into the buffers,
/// and train a freshly initialized network on them.
pub fn run_generation(
    generation: usize,
    cfg: &GenerationConfig,
    previous: &Policy,
    buffers: &mut Buffers,
) -> Result<GenerationOutput> {
    let start = Instant::now();
    let gen_seed = generation_seed(cfg, generation);
    let policy = if generation <= 1 {
        Policy::Uniform
    } else {
        previous.clone()
    };

    let played = parallel_map(cfg.runs_per_generation, cfg.worker_count(), |e| {
        let seed = episode_board(cfg, generation, e);
        let board = generate_board(&seed)?;
        let search = cfg.search_config(generation, derive_seed(derive_seed(gen_seed, TAG_SEARCH), e as u64));
        let episode = play_episode(&board, &search, &policy)?;
        episode.verify()?;
        let samples: Vec<TaggedSample> = episode
            .steps
            .iter()
            .enumerate()
            .map(|(step, s)| TaggedSample {
                tag: SampleTag {
                    generation,
                    episode: e,
                    step,
                },
                target: s.state.action_index(s.action),
                board: s.state.clone(),
            })
            .collect();
        Ok((
            episode.to_record(BoardSource::from_seed(&seed)),
            episode.totals(),
            samples,
        ))
    })?;

    let mut records = Vec::with_capacity(played.len());
    let mut search = MoveStats::default();
    let mut temp = Vec::new();
    for (record, totals, samples) in played {
        records.push(record);
        search.add(&totals);
        temp.extend(samples);
    }
    let scores: Vec<f64> = records.iter().map(|r| r.final_score as f64).collect();
    let (mean_score, std_score) = mean_std(&scores);
    let produced = temp.len();

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(gen_seed, TAG_SHUFFLE));
    let (added_training, added_validation) = split_and_append(
        temp,
        cfg.split,
        &mut buffers.training,
        &mut buffers.validation,
        &mut shuffle_rng,
    );

    let mut model = ConvPolicy::new(cfg.network.build(&cfg.board, derive_seed(gen_seed, TAG_NETWORK)))?;
    let mut opts = cfg.train.clone();
    opts.seed = derive_seed(gen_seed ^ cfg.train.seed, TAG_TRAIN);
    let history = train_epochs(
        &mut model,
        buffers.training.as_slice(),
        buffers.validation.as_slice(),
        &opts,
    )?;

    let report = GenerationReport {
        generation,
        episodes: records.len(),
        mean_score,
        std_score,
        samples: produced,
        added_training,
        added_validation,
        training_size: buffers.training.len(),
        validation_size: buffers.validation.len(),
        training_generations: buffers.training.generations().len(),
        epochs: history.epochs(),
        best_epoch: history.best_epoch,
        train_loss: history.train_losses[history.best_epoch - 1],
        validation_loss: history.best_valid_loss(),
        search,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok(GenerationOutput {
        model,
        report,
        episodes: records,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::policy::TrainSample;
    use crate::samegame::{encode_board, replay};

    #[test]
    fn first_generation_samples_replay_and_split() {
        let cfg = GenerationConfig::small();
        let mut buffers = Buffers::new(&cfg);
        let out = run_generation(1, &cfg, &Policy::Uniform, &mut buffers).unwrap();
        let r = &out.report;
        assert_eq!(r.episodes, cfg.runs_per_generation);
        assert_eq!(out.episodes.len(), cfg.runs_per_generation);

        // growth is floor(λM) and the rest
        let m = r.samples;
        let lam_m = (cfg.split * m as f64).floor() as usize;
        assert_eq!(r.added_training, lam_m.min(cfg.training_capacity));
        assert_eq!(r.added_validation, (m - lam_m).min(cfg.validation_capacity));

        // every episode replays to its score and step count
        let steps: usize = out
            .episodes
            .iter()
            .map(|rec| {
                let start = rec.source.load().unwrap();
                let rp = replay(&start, &rec.actions()).unwrap();
                assert_eq!(rp.total, rec.final_score);
                rec.actions.len()
            })
            .sum();
        assert_eq!(steps, m);

        // every buffered target is the action committed at that step
        for s in buffers.training.iter().chain(buffers.validation.iter()) {
            let rec = &out.episodes[s.tag.episode];
            let start = rec.source.load().unwrap();
            let acts = rec.actions();
            let before = replay(&start, &acts[..s.tag.step]).unwrap();
            assert_eq!(before.final_board, s.board);
            assert_eq!(s.board.action_from_index(s.target), acts[s.tag.step]);
        }
    }

    #[test]
    fn buffers_never_share_a_sample_and_mix_generations() {
        let mut cfg = GenerationConfig::small();
        cfg.generations = 3;
        cfg.training_capacity = 10_000;
        cfg.validation_capacity = 10_000;
        let mut buffers = Buffers::new(&cfg);
        let mut policy = Policy::Uniform;
        for g in 1..=3 {
            let out = run_generation(g, &cfg, &policy, &mut buffers).unwrap();
            policy = Policy::model(out.model);
            let train: HashSet<_> = buffers.training.iter().map(|s| s.tag).collect();
            let valid: HashSet<_> = buffers.validation.iter().map(|s| s.tag).collect();
            assert_eq!(train.len(), buffers.training.len());
            assert!(train.is_disjoint(&valid), "generation {g} leaks");
            assert_eq!(buffers.training.generations().len(), g);
        }
    }

    #[test]
    fn small_buffers_keep_only_recent_generations() {
        let mut cfg = GenerationConfig::small();
        let mut buffers = Buffers::new(&cfg);
        let out = run_generation(1, &cfg, &Policy::Uniform, &mut buffers).unwrap();
        // room for about two generations of output
        cfg.training_capacity = out.report.added_training * 2;
        let mut buffers = Buffers::new(&cfg);
        let mut policy = Policy::Uniform;
        for g in 1..=4 {
            let out = run_generation(g, &cfg, &policy, &mut buffers).unwrap();
            policy = Policy::model(out.model);
            let gens = buffers.training.generations();
            assert!(gens.len() <= 3, "{gens:?}");
            assert!(gens.contains(&g));
        }
        assert!(buffers.training.generations().len() >= 2);
    }

    #[test]
    fn each_generation_starts_from_a_fresh_network() {
        let cfg = GenerationConfig::small();
        let b = generate_board(&episode_board(&cfg, 1, 0)).unwrap();
        let probe: Vec<TrainSample> = (0..4).map(|i| TrainSample::new(encode_board(&b), i)).collect();
        let initial = |g: usize| {
            let seed = derive_seed(generation_seed(&cfg, g), TAG_NETWORK);
            ConvPolicy::new(cfg.network.build(&cfg.board, seed))
                .unwrap()
                .loss(&probe)
                .unwrap()
        };
        assert_ne!(initial(1), initial(2));
        assert_ne!(initial(2), initial(3));
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GenerationConfig::small();
        let run = || {
            let mut buffers = Buffers::new(&cfg);
            let out = run_generation(1, &cfg, &Policy::Uniform, &mut buffers).unwrap();
            (out.report.without_timing(), out.model.params().to_vec())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn mean_std_population() {
        assert_eq!(mean_std(&[]), (0.0, 0.0));
        assert_eq!(mean_std(&[2.0, 4.0]), (3.0, 1.0));
    }
}
