//! Community assignments from a decomposition, recovery scores against
//! planted blocks, and task importance.

use std::collections::BTreeMap;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::attribution::HiddenUnit;
use crate::datasets::GroundTruth;
use crate::error::{NtdError, Result};
use crate::lnn::NetworkParams;
use crate::matrix::Mat;
use crate::nmf::Decomposition;

/// Largest community / block count accepted by the exhaustive matcher.
pub const MAX_MATCH: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityAssignment {
    /// Argmax community per hidden unit; `None` for all-zero rows of `T`.
    pub labels: Vec<Option<usize>>,
    /// Rows of `T`, unchanged.
    pub weights: Mat,
    pub units: Vec<HiddenUnit>,
    /// For each community, member unit indices grouped by layer.
    pub members: Vec<BTreeMap<usize, Vec<usize>>>,
}

impl CommunityAssignment {
    pub fn communities(&self) -> usize {
        self.weights.cols()
    }

    /// Flat CSV `unit,layer,community,weight_0..`; unassigned units have an empty community.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("unit,layer,community");
        for c in 0..self.communities() {
            out.push_str(&format!(",weight_{c}"));
        }
        out.push('\n');
        for (k, u) in self.units.iter().enumerate() {
            let label = self.labels[k].map(|c| c.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{label}", u.unit, u.layer));
            for w in self.weights.row(k) {
                out.push_str(&format!(",{w:?}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Hard assignment by argmax of each row of `T`, lowest index winning ties.
pub fn assign_communities(
    dec: &Decomposition,
    units: &[HiddenUnit],
) -> Result<CommunityAssignment> {
    let t = &dec.t;
    if units.len() != t.rows() {
        return Err(NtdError::shape(
            "assign_communities",
            (units.len(), 1),
            t.shape(),
        ));
    }
    let mut labels = Vec::with_capacity(t.rows());
    let mut members = vec![BTreeMap::<usize, Vec<usize>>::new(); t.cols()];
    let mut unassigned = 0;
    for (k, row) in t.iter_rows().enumerate() {
        let best = argmax(row);
        if let Some(c) = best {
            members[c]
                .entry(units[k].layer)
                .or_default()
                .push(units[k].unit);
        } else {
            unassigned += 1;
        }
        labels.push(best);
    }
    if unassigned > 0 {
        log::warn!("{unassigned} hidden units have all-zero weights and stay unassigned");
    }
    Ok(CommunityAssignment {
        labels,
        weights: t.clone(),
        units: units.to_vec(),
        members,
    })
}

/// Index of the first maximum of a non-negative row; `None` if the row is all zero.
fn argmax(row: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (c, &w) in row.iter().enumerate() {
        if w > best.map_or(0.0, |(_, b)| b) {
            best = Some((c, w));
        }
    }
    best.map(|(c, _)| c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryScore {
    /// Block matched to each community, `None` if left unmatched.
    pub matching: Vec<Option<usize>>,
    pub purity: f64,
    pub matched_units: usize,
    pub labeled_units: usize,
    /// Share of each task vector's mass on its block's columns.
    pub concentrations: Vec<f64>,
    /// Community count differs from block count, so the matching is a partial injection.
    pub partial: bool,
}

/// Best community-to-block matching by exhaustive search.
///
/// `truth[k]` is the reference block of hidden unit `k` (`None` excludes the
/// unit); `column_blocks[l]` is the block of column `l` of `U`. Unmatched
/// tasks report their highest single-block concentration.
pub fn score_recovery(
    assign: &CommunityAssignment,
    truth: &[Option<usize>],
    blocks: usize,
    u: &Mat,
    column_blocks: &[usize],
) -> Result<RecoveryScore> {
    let c0 = assign.communities();
    if c0 > MAX_MATCH || blocks > MAX_MATCH {
        return Err(NtdError::Invalid(format!(
            "exhaustive matching supports at most {MAX_MATCH} communities and blocks"
        )));
    }
    if truth.len() != assign.labels.len() {
        return Err(NtdError::shape(
            "score_recovery",
            (truth.len(), 1),
            (assign.labels.len(), 1),
        ));
    }
    if u.rows() != c0 || u.cols() != column_blocks.len() {
        return Err(NtdError::shape(
            "score_recovery",
            u.shape(),
            (c0, column_blocks.len()),
        ));
    }
    if truth
        .iter()
        .flatten()
        .chain(column_blocks)
        .any(|&b| b >= blocks)
    {
        return Err(NtdError::Invalid("block label out of range".into()));
    }

    // agree[c][b] = units with community c and reference block b
    let mut agree = vec![vec![0usize; blocks]; c0];
    for (label, t) in assign.labels.iter().zip(truth) {
        if let (Some(c), Some(b)) = (label, t) {
            agree[*c][*b] += 1;
        }
    }

    let mut best_matching = vec![None; c0];
    let mut best = 0usize;
    let mut first = true;
    let mut consider = |matching: Vec<Option<usize>>| {
        let hits = matching
            .iter()
            .enumerate()
            .filter_map(|(c, b)| b.map(|b| agree[c][b]))
            .sum::<usize>();
        if first || hits > best {
            best = hits;
            best_matching = matching;
            first = false;
        }
    };
    if c0 <= blocks {
        for perm in (0..blocks).permutations(c0) {
            consider(perm.into_iter().map(Some).collect());
        }
    } else {
        for perm in (0..c0).permutations(blocks) {
            let mut m = vec![None; c0];
            for (b, c) in perm.into_iter().enumerate() {
                m[c] = Some(b);
            }
            consider(m);
        }
    }

    let concentrations = (0..c0)
        .map(|c| {
            let row = u.row(c);
            let total: f64 = row.iter().sum();
            let on = |b: usize| -> f64 {
                row.iter()
                    .zip(column_blocks)
                    .filter(|(_, &cb)| cb == b)
                    .map(|(v, _)| v)
                    .sum()
            };
            if total <= 0.0 {
                return 0.0;
            }
            match best_matching[c] {
                Some(b) => on(b) / total,
                None => (0..blocks).map(on).fold(0.0, f64::max) / total,
            }
        })
        .collect();

    let labeled = truth.iter().flatten().count();
    Ok(RecoveryScore {
        matching: best_matching,
        purity: if labeled == 0 {
            0.0
        } else {
            best as f64 / labeled as f64
        },
        matched_units: best,
        labeled_units: labeled,
        concentrations,
        partial: c0 != blocks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskImportance {
    pub task: usize,
    pub importance: f64,
}

/// Importance of task `c`: total unit weight `sum_k T[k,c]` times the task's
/// output-block mass. Sorted descending, ties by task index.
pub fn task_importance(dec: &Decomposition, input_width: usize) -> Result<Vec<TaskImportance>> {
    if input_width > dec.u.cols() {
        return Err(NtdError::Invalid(format!(
            "input width {input_width} exceeds task width {}",
            dec.u.cols()
        )));
    }
    let mut out: Vec<TaskImportance> = (0..dec.u.rows())
        .map(|c| {
            let weight: f64 = (0..dec.t.rows()).map(|k| dec.t[(k, c)]).sum();
            let out_mass: f64 = dec.u.row(c)[input_width..].iter().sum();
            TaskImportance {
                task: c,
                importance: weight * out_mass,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.importance
            .total_cmp(&a.importance)
            .then(a.task.cmp(&b.task))
    });
    Ok(out)
}

/// Reference block for each hidden unit of a trained network, from its
/// weight-path connectivity to the planted input and output blocks.
///
/// Weights with `|w| < deleted_below` count as removed. Path strength is the
/// product of absolute weights summed over all paths. For each unit the
/// inbound strengths (from each input block) and outbound strengths (to each
/// output block) are normalized to sum to one separately, added, and the
/// strongest block wins. A unit lacking either an inbound or an outbound path
/// takes part in no input-output mapping and gets `None`.
pub fn connectivity_blocks(
    params: &NetworkParams,
    truth: &GroundTruth,
    deleted_below: f64,
) -> Result<Vec<Option<usize>>> {
    if truth.inputs.len() != params.input_dim() || truth.outputs.len() != params.output_dim() {
        return Err(NtdError::shape(
            "connectivity_blocks",
            (truth.inputs.len(), truth.outputs.len()),
            (params.input_dim(), params.output_dim()),
        ));
    }
    let blocks = truth.blocks;
    let one_hot =
        |labels: &[usize]| Mat::from_fn(labels.len(), blocks, |i, b| f64::from(labels[i] == b));
    let abs: Vec<Mat> = params
        .weights
        .iter()
        .map(|w| {
            w.map(|x| {
                if x.abs() < deleted_below {
                    0.0
                } else {
                    x.abs()
                }
            })
        })
        .collect();
    let depth = params.depth();

    // inbound[d]: l_d x blocks
    let mut inbound = vec![one_hot(&truth.inputs)];
    for w in &abs {
        let next = w.transpose().matmul(inbound.last().unwrap())?;
        inbound.push(next);
    }
    let mut outbound = vec![one_hot(&truth.outputs)];
    for w in abs.iter().rev() {
        let next = w.matmul(outbound.last().unwrap())?;
        outbound.push(next);
    }
    outbound.reverse();

    let mut labels = Vec::new();
    for layer in 1..depth - 1 {
        for unit in 0..params.layer_sizes[layer] {
            let a = inbound[layer].row(unit);
            let b = outbound[layer].row(unit);
            let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
            if !(sa > 0.0 && sb > 0.0) {
                labels.push(None);
                continue;
            }
            let score: Vec<f64> = (0..blocks).map(|k| a[k] / sa + b[k] / sb).collect();
            labels.push(argmax(&score));
        }
    }
    Ok(labels)
}
