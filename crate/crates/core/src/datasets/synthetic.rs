//! Planted block-diagonal teacher networks with a known community structure.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{NtdError, Result};
use crate::lnn::{Dataset, NetworkParams};
use crate::matrix::Mat;

/// Regeneration attempts before giving up on a teacher with a dead output.
pub const MAX_ATTEMPTS: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub blocks: usize,
    pub hidden_layers_per_block: usize,
    pub units_per_hidden_layer: usize,
    pub inputs_per_block: usize,
    pub outputs_per_block: usize,
    /// Teacher weights with `|w| <= prune_threshold` are deleted.
    pub prune_threshold: f64,
    pub teacher_weight_sigma: f64,
    pub teacher_bias_sigma: f64,
    pub input_sigma: f64,
    pub noise_sigma: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            blocks: 3,
            hidden_layers_per_block: 2,
            units_per_hidden_layer: 15,
            inputs_per_block: 5,
            outputs_per_block: 5,
            prune_threshold: 1.0,
            teacher_weight_sigma: 1.0,
            teacher_bias_sigma: 0.5,
            input_sigma: 3.0,
            noise_sigma: 0.05,
            n_train: 3000,
            n_test: 1000,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.blocks,
            self.hidden_layers_per_block,
            self.units_per_hidden_layer,
            self.inputs_per_block,
            self.outputs_per_block,
            self.n_train,
            self.n_test,
        ];
        if counts.contains(&0) {
            return Err(NtdError::Invalid(format!(
                "synthetic counts must be >= 1: {self:?}"
            )));
        }
        let sigmas = [
            self.teacher_weight_sigma,
            self.teacher_bias_sigma,
            self.input_sigma,
            self.noise_sigma,
            self.prune_threshold,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(NtdError::Invalid(
                "sigmas and prune threshold must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Layer sizes of the assembled teacher (and the default trainee).
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.blocks * self.inputs_per_block];
        sizes.extend(std::iter::repeat_n(
            self.blocks * self.units_per_hidden_layer,
            self.hidden_layers_per_block,
        ));
        sizes.push(self.blocks * self.outputs_per_block);
        sizes
    }

    fn block_sizes(&self) -> Vec<usize> {
        self.layer_sizes().iter().map(|s| s / self.blocks).collect()
    }
}

/// Planted block labels. Hidden units follow the row order of `V`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub blocks: usize,
    pub inputs: Vec<usize>,
    pub hidden: Vec<usize>,
    pub outputs: Vec<usize>,
}

impl GroundTruth {
    /// Block label of every column of `V` (inputs, then outputs).
    pub fn column_labels(&self) -> Vec<usize> {
        self.inputs.iter().chain(&self.outputs).copied().collect()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    pub teacher: NetworkParams,
    pub train: Dataset,
    pub test: Dataset,
    pub truth: GroundTruth,
    /// Seed that produced the accepted teacher.
    pub seed_used: u64,
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticProblem> {
    spec.validate()?;
    for attempt in 0..MAX_ATTEMPTS {
        let seed = spec.seed.wrapping_add(attempt);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let teacher = draw_teacher(spec, &mut rng)?;
        if let Some(dead) = disconnected_output(&teacher) {
            log::warn!(
                "teacher seed {seed}: output {dead} unreachable after pruning; regenerating"
            );
            continue;
        }
        let train = draw_data(&teacher, spec, spec.n_train, &mut rng)?;
        let test = draw_data(&teacher, spec, spec.n_test, &mut rng)?;
        return Ok(SyntheticProblem {
            teacher,
            train,
            test,
            truth: ground_truth(spec),
            seed_used: seed,
        });
    }
    Err(NtdError::Generation(format!(
        "every teacher drawn from seeds {}..{} had an output unreachable from the inputs; \
         lower prune_threshold or widen the blocks",
        spec.seed,
        spec.seed.wrapping_add(MAX_ATTEMPTS)
    )))
}

fn normal(sigma: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, sigma).map_err(|e| NtdError::Invalid(e.to_string()))
}

fn draw_teacher(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<NetworkParams> {
    let wdist = normal(spec.teacher_weight_sigma)?;
    let bdist = normal(spec.teacher_bias_sigma)?;
    let per_block = spec.block_sizes();
    let mut teacher = NetworkParams::zeros(&spec.layer_sizes())?;
    for b in 0..spec.blocks {
        for d in 0..per_block.len() - 1 {
            let (rows, cols) = (per_block[d], per_block[d + 1]);
            for i in 0..rows {
                for j in 0..cols {
                    let w = wdist.sample(rng);
                    if w.abs() > spec.prune_threshold {
                        teacher.weights[d][(b * rows + i, b * cols + j)] = w;
                    }
                }
            }
            for j in 0..cols {
                teacher.biases[d][b * cols + j] = bdist.sample(rng);
            }
        }
    }
    Ok(teacher)
}

/// First output unit with no nonzero-weight path from any input.
fn disconnected_output(net: &NetworkParams) -> Option<usize> {
    let mut reach = vec![true; net.input_dim()];
    for w in &net.weights {
        let mut next = vec![false; w.cols()];
        for (i, _) in reach.iter().enumerate().filter(|(_, r)| **r) {
            for (j, &wij) in w.row(i).iter().enumerate() {
                if wij != 0.0 {
                    next[j] = true;
                }
            }
        }
        reach = next;
    }
    reach.iter().position(|r| !r)
}

fn draw_data(
    teacher: &NetworkParams,
    spec: &SyntheticSpec,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset> {
    let xdist = normal(spec.input_sigma)?;
    let ndist = normal(spec.noise_sigma)?;
    let x = Mat::from_fn(n, teacher.input_dim(), |_, _| xdist.sample(rng));
    let mut y = Mat::zeros(n, teacher.output_dim());
    for s in 0..n {
        let clean = teacher.predict(x.row(s))?;
        for (dst, c) in y.row_mut(s).iter_mut().zip(clean) {
            *dst = c + ndist.sample(rng);
        }
    }
    Dataset::new(x, y)
}

fn ground_truth(spec: &SyntheticSpec) -> GroundTruth {
    let label = |width: usize| -> Vec<usize> {
        (0..spec.blocks)
            .flat_map(|b| std::iter::repeat_n(b, width))
            .collect()
    };
    GroundTruth {
        blocks: spec.blocks,
        inputs: label(spec.inputs_per_block),
        hidden: (0..spec.hidden_layers_per_block)
            .flat_map(|_| label(spec.units_per_hidden_layer))
            .collect(),
        outputs: label(spec.outputs_per_block),
    }
}
