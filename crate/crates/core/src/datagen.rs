//! Synthetic data generators: the cocktail-party protocol (grouped
//! speakers taking turns, linear-Gaussian microphone mix), plain
//! HDP-HMM draws over binary states (the no-similarity sanity protocol),
//! and a similarity-biased categorical protocol with held-out sequences.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{beta_draw, dirichlet_draw, RandomStream};
use crate::similarity::half_sq_euclidean_distances;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocktailParams {
    /// Total speakers D; must divide evenly into the groups.
    pub speakers: usize,
    /// Conversational groups C.
    pub groups: usize,
    /// Output sequence length T (the continuous timeline is sampled down
    /// to this many steps).
    pub steps: usize,
    /// Microphone channels K.
    pub channels: usize,
    pub noise_sd: f64,
    pub amplitude_mean: f64,
    pub amplitude_sd: f64,
    /// Pause between turns, seconds; normal, truncated at zero.
    pub pause_mean: f64,
    pub pause_sd: f64,
    /// Sentence length, seconds (constant duration).
    pub turn_duration_mean: f64,
    /// Simulated wall-clock length of the conversation, seconds.
    pub duration_secs: f64,
    pub seed: u64,
}

impl CocktailParams {
    pub fn new(speakers: usize, groups: usize, steps: usize, channels: usize) -> Self {
        CocktailParams {
            speakers,
            groups,
            steps,
            channels,
            noise_sd: 0.3,
            amplitude_mean: 1.0,
            amplitude_sd: 0.5,
            pause_mean: 0.25,
            pause_sd: 0.25,
            turn_duration_mean: 3.0,
            duration_secs: 40.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.speakers == 0 || self.groups == 0 || self.speakers % self.groups != 0 {
            return Err(Error::parameter(format!(
                "speakers ({}) must divide evenly into groups ({})",
                self.speakers, self.groups
            )));
        }
        for (name, v) in [
            ("steps", self.steps as f64),
            ("channels", self.channels as f64),
            ("turn_duration_mean", self.turn_duration_mean),
            ("duration_secs", self.duration_secs),
        ] {
            if !(v > 0.0) {
                return Err(Error::parameter(format!("{name} must be positive")));
            }
        }
        if self.noise_sd < 0.0 || self.amplitude_sd < 0.0 || self.pause_sd < 0.0 {
            return Err(Error::parameter("spreads must be nonnegative"));
        }
        Ok(())
    }
}

/// Simulated cocktail data: mixed observations, the ground-truth binary
/// speaker matrix, and the mixing weights (bias row first).
pub struct CocktailData {
    pub observations: Array2<f64>,
    pub truth: Array2<u8>,
    pub weights: Array2<f64>,
}

/// Simulate grouped conversations: within each group exactly zero or one
/// speaker is active at any moment. Speech is an amplitude envelope
/// (per-step normal amplitudes while a sentence is on), mixed to the
/// channels by uniform weights plus a background bias row.
pub fn gen_cocktail(params: &CocktailParams, rng: &mut RandomStream) -> Result<CocktailData> {
    params.validate()?;
    let per_group = params.speakers / params.groups;
    let mut intervals: Vec<Vec<(f64, f64)>> = vec![Vec::new(); params.speakers];

    for g in 0..params.groups {
        let members: Vec<usize> = (0..per_group).map(|i| g * per_group + i).collect();
        let mut order = members.clone();
        let mut clock = 0.0;
        let mut cursor = order.len(); // force an initial shuffle
        while clock < params.duration_secs {
            let pause =
                (params.pause_mean + params.pause_sd * rng.standard_normal()).max(0.0);
            clock += pause;
            if clock >= params.duration_secs {
                break;
            }
            if cursor == order.len() {
                shuffle(&mut order, rng);
                cursor = 0;
            }
            let speaker = order[cursor];
            cursor += 1;
            let end = (clock + params.turn_duration_mean).min(params.duration_secs);
            intervals[speaker].push((clock, end));
            clock = end;
        }
    }

    let mut truth = Array2::zeros((params.steps, params.speakers));
    for d in 0..params.speakers {
        for &(start, end) in &intervals[d] {
            // steps whose sample time (i + 0.5)/steps · duration lies inside
            let scale = params.steps as f64 / params.duration_secs;
            let lo = (start * scale - 0.5).ceil().max(0.0) as usize;
            let hi = ((end * scale - 0.5).floor() as usize).min(params.steps - 1);
            for t in lo..=hi.min(params.steps - 1) {
                let tau = (t as f64 + 0.5) / params.steps as f64 * params.duration_secs;
                if tau >= start && tau < end {
                    truth[(t, d)] = 1;
                }
            }
        }
    }

    let weights =
        Array2::from_shape_fn((params.speakers + 1, params.channels), |_| rng.uniform());

    let mut observations = Array2::zeros((params.steps, params.channels));
    for t in 0..params.steps {
        let mut signal = vec![0.0; params.speakers + 1];
        signal[0] = 1.0;
        for d in 0..params.speakers {
            if truth[(t, d)] == 1 {
                signal[d + 1] = params.amplitude_mean + params.amplitude_sd * rng.standard_normal();
            }
        }
        for k in 0..params.channels {
            let mut y = 0.0;
            for (row, s) in signal.iter().enumerate() {
                if *s != 0.0 {
                    y += s * weights[(row, k)];
                }
            }
            observations[(t, k)] = y + params.noise_sd * rng.standard_normal();
        }
    }

    Ok(CocktailData {
        observations,
        truth,
        weights,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthHdpParams {
    /// Number of latent states to generate with.
    pub trunc: usize,
    pub gamma: f64,
    pub alpha: f64,
    /// Binary state dimensionality D.
    pub speakers: usize,
    /// Observation channels K.
    pub channels: usize,
    /// Bernoulli prior on each state bit.
    pub mu: f64,
    pub steps: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SynthHdpParams {
    pub fn new(trunc: usize, speakers: usize, channels: usize, steps: usize) -> Self {
        SynthHdpParams {
            trunc,
            gamma: 10.0,
            alpha: 5.0,
            speakers,
            channels,
            mu: 0.5,
            steps,
            noise_sd: 0.3,
            seed: 0,
        }
    }
}

pub struct SynthHdpData {
    pub observations: Array2<f64>,
    pub truth: Array2<u8>,
    pub weights: Array2<f64>,
    pub states: Vec<usize>,
    /// Generating quantities, for oracle checks.
    pub beta: Vec<f64>,
    pub trans_probs: Array2<f64>,
    pub eta: Array2<u8>,
}

/// Truncated stick-breaking weights: `v_j ~ Beta(1, γ)`, remainder folded
/// into the last stick.
pub fn stick_breaking(trunc: usize, gamma: f64, rng: &mut RandomStream) -> Result<Vec<f64>> {
    let mut beta = vec![0.0; trunc];
    let mut remaining = 1.0;
    for j in 0..trunc {
        if j + 1 == trunc {
            beta[j] = remaining;
        } else {
            let v = beta_draw(1.0, gamma, rng)?;
            beta[j] = v * remaining;
            remaining *= 1.0 - v;
        }
    }
    Ok(beta)
}

/// Draw directly from a plain (no similarity rescaling) HDP-HMM with
/// binary states and linear-Gaussian emissions.
pub fn gen_hdp_hmm(params: &SynthHdpParams, rng: &mut RandomStream) -> Result<SynthHdpData> {
    let trunc = params.trunc;
    let beta = stick_breaking(trunc, params.gamma, rng)?;
    let masses: Vec<f64> = beta.iter().map(|b| params.alpha * b).collect();
    let mut trans_probs = Array2::zeros((trunc, trunc));
    for j in 0..trunc {
        let row = dirichlet_draw(&masses, rng)?;
        for (k, v) in row.into_iter().enumerate() {
            trans_probs[(j, k)] = v;
        }
    }
    let init = dirichlet_draw(&masses, rng)?;
    let eta = Array2::from_shape_fn((trunc, params.speakers), |_| {
        u8::from(rng.bernoulli(params.mu))
    });
    let weights =
        Array2::from_shape_fn((params.speakers + 1, params.channels), |_| rng.uniform());

    let mut states = Vec::with_capacity(params.steps);
    let mut current = sample_categorical(&init, rng);
    states.push(current);
    for _ in 1..params.steps {
        let row: Vec<f64> = (0..trunc).map(|k| trans_probs[(current, k)]).collect();
        current = sample_categorical(&row, rng);
        states.push(current);
    }

    let mut truth = Array2::zeros((params.steps, params.speakers));
    let mut observations = Array2::zeros((params.steps, params.channels));
    for (t, &state) in states.iter().enumerate() {
        for d in 0..params.speakers {
            truth[(t, d)] = eta[(state, d)];
        }
        for k in 0..params.channels {
            let mut y = weights[(0, k)];
            for d in 0..params.speakers {
                if eta[(state, d)] == 1 {
                    y += weights[(d + 1, k)];
                }
            }
            observations[(t, k)] = y + params.noise_sd * rng.standard_normal();
        }
    }

    Ok(SynthHdpData {
        observations,
        truth,
        weights,
        states,
        beta,
        trans_probs,
        eta,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LtCategoricalParams {
    pub trunc: usize,
    pub loc_dim: usize,
    pub vocab: usize,
    pub alpha: f64,
    pub gamma: f64,
    /// Generating similarity decay; larger means more local transitions.
    pub lambda: f64,
    /// Dirichlet mass of the per-state symbol distributions.
    pub theta_mass: f64,
    pub train_sequences: usize,
    pub test_sequences: usize,
    pub steps: usize,
    pub seed: u64,
}

impl LtCategoricalParams {
    pub fn new(trunc: usize, vocab: usize, train: usize, test: usize, steps: usize) -> Self {
        LtCategoricalParams {
            trunc,
            loc_dim: 2,
            vocab,
            alpha: 5.0,
            gamma: 10.0,
            lambda: 2.0,
            theta_mass: 0.15,
            train_sequences: train,
            test_sequences: test,
            steps,
            seed: 0,
        }
    }
}

pub struct LtCategoricalData {
    pub train: Vec<Vec<usize>>,
    pub test: Vec<Vec<usize>>,
    pub locations: Array2<f64>,
    pub theta: Array2<f64>,
}

/// Draw categorical sequences from a similarity-rescaled HDP-HMM with
/// Gaussian-kernel locations: transitions between nearby states are
/// boosted, so held-out evaluation favors models that capture the bias.
pub fn gen_lt_categorical(
    params: &LtCategoricalParams,
    rng: &mut RandomStream,
) -> Result<LtCategoricalData> {
    let trunc = params.trunc;
    let beta = stick_breaking(trunc, params.gamma, rng)?;
    let masses: Vec<f64> = beta.iter().map(|b| params.alpha * b).collect();

    let locations = Array2::from_shape_fn((trunc, params.loc_dim), |_| rng.standard_normal());
    let dist = half_sq_euclidean_distances(&locations);
    let phi = dist.mapv(|d| (-params.lambda * d).exp());

    let mut probs = Array2::zeros((trunc, trunc));
    for j in 0..trunc {
        let mut row = vec![0.0; trunc];
        let mut total = 0.0;
        for (k, slot) in row.iter_mut().enumerate() {
            let rate = crate::rng::gamma_draw(masses[k], 1.0, rng)? * phi[(j, k)];
            *slot = rate;
            total += rate;
        }
        for (k, v) in row.into_iter().enumerate() {
            probs[(j, k)] = v / total;
        }
    }
    let init = dirichlet_draw(&masses, rng)?;

    let theta_masses = vec![params.theta_mass; params.vocab];
    let mut theta = Array2::zeros((trunc, params.vocab));
    for j in 0..trunc {
        let row = dirichlet_draw(&theta_masses, rng)?;
        for (v, value) in row.into_iter().enumerate() {
            theta[(j, v)] = value;
        }
    }

    let mut gen_sequences = |count: usize| -> Vec<Vec<usize>> {
        (0..count)
            .map(|_| {
                let mut seq = Vec::with_capacity(params.steps);
                let mut state = sample_categorical(&init, rng);
                for step in 0..params.steps {
                    if step > 0 {
                        let row: Vec<f64> = (0..trunc).map(|k| probs[(state, k)]).collect();
                        state = sample_categorical(&row, rng);
                    }
                    let symbols: Vec<f64> =
                        (0..params.vocab).map(|v| theta[(state, v)]).collect();
                    seq.push(sample_categorical(&symbols, rng));
                }
                seq
            })
            .collect()
    };
    let train = gen_sequences(params.train_sequences);
    let test = gen_sequences(params.test_sequences);

    Ok(LtCategoricalData {
        train,
        test,
        locations,
        theta,
    })
}

fn sample_categorical(weights: &[f64], rng: &mut RandomStream) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.uniform() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

fn shuffle(items: &mut [usize], rng: &mut RandomStream) {
    for i in (1..items.len()).rev() {
        let j = (rng.uniform() * (i + 1) as f64) as usize;
        items.swap(i, j.min(i));
    }
}
