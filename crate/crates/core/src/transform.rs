//! Run transformations: delaying the future of a node, and moving one
//! operation ahead of another.

use serde::{Deserialize, Serialize};

use crate::causality::{first_difference, CausalIndex, PastFrontier};
use crate::error::{Error, Result};
use crate::history::{extract_operations, find_op, OpId, OperationInstance};
use crate::model::{
    validate_run, EnvComponent, Execution, JointAction, Node, ProcessId, Round, Run,
    ValidationReport,
};
use crate::protocol::{by_name, ProtocolSpec};
use crate::trace::digest;

/// `shift_Δ(m, t_j)`: identity up to `t_j`, then `+Δ`.
pub fn shift(m: Round, t_j: Round, delta: Round) -> Round {
    if m <= t_j {
        m
    } else {
        m + delta
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub pivot: Node,
    pub delta: Round,
    pub frontier: PastFrontier,
}

/// Per-process map `m ↦ shift(m, cut, delta)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correspondence {
    pub process: ProcessId,
    pub cut: Round,
    pub delta: Round,
}

impl Correspondence {
    pub fn map(&self, m: Round) -> Round {
        shift(m, self.cut, self.delta)
    }
}

/// Results of the checks made on a reordering.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReorderCheck {
    pub x: OpId,
    pub y: OpId,
    /// `t_{Y.e}(r')` and `t_{X.s}(r')`.
    pub y_end: Round,
    pub x_start: Round,
    pub y_before_x: bool,
    /// Each completed `Z` with `X <_r Z` and no chain `Z ⟿ Y`, and whether
    /// `X <_{r'} Z`.
    pub kept_after_x: Vec<(OpId, bool)>,
}

impl ReorderCheck {
    pub fn holds(&self) -> bool {
        self.y_before_x && self.kept_after_x.iter().all(|(_, ok)| *ok)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformCertificate {
    pub source_digest: String,
    pub result_digest: String,
    pub shift: ShiftSpec,
    pub correspondence: Vec<Correspondence>,
    pub source_horizon: Round,
    pub result_horizon: Round,
    /// How finite prefixes are handled.
    pub horizon_convention: String,
    pub validation: ValidationReport,
    pub locally_equivalent: bool,
    /// `r'_j(shift(m, t_j)) = r_j(m)` for every `j` and `m ≤ h`, and
    /// `r'_j(m') = r_j(t_j)` inside the sleeping band.
    pub pointwise_equal: bool,
    /// Every process skips throughout `(t_j, t_j + Δ]`.
    pub band_empty: bool,
    /// Every delivery copied from the source found its record in transit.
    pub deliveries_in_transit: bool,
    pub reorder: Option<ReorderCheck>,
}

impl TransformCertificate {
    pub fn passed(&self) -> bool {
        self.validation.is_clean()
            && self.locally_equivalent
            && self.pointwise_equal
            && self.band_empty
            && self.deliveries_in_transit
            && self.reorder.as_ref().is_none_or(ReorderCheck::holds)
    }
}

const HORIZON_CONVENTION: &str =
    "result horizon is source horizon + delta; rounds past every shifted image are skip-only";

/// Delays everything outside the past of `pivot` by `delta` rounds.
pub fn delay_future(run: &Run, pivot: Node, delta: Round) -> Result<(Run, TransformCertificate)> {
    delay_future_with(run, &by_name(&run.config)?, pivot, delta)
}

pub fn delay_future_with(
    run: &Run,
    protocol: &ProtocolSpec,
    pivot: Node,
    delta: Round,
) -> Result<(Run, TransformCertificate)> {
    if delta == 0 {
        return Err(Error::PreconditionFailed("delay must be at least 1".into()));
    }
    let source = Execution::of(run)?;
    let index = CausalIndex::new(&source);
    let frontier = index.past_frontier(pivot)?;
    let cut = &frontier.cut;
    let n = run.config.n;
    let h = run.horizon();

    let mut rounds = vec![JointAction::idle(n); h + delta];
    for (idx, ja) in source.final_state.env_history.iter().enumerate() {
        let m = idx + 1;
        for j in 0..n {
            let target = &mut rounds[shift(m, cut[j], delta) - 1];
            target.env[j] = match &ja.env[j] {
                EnvComponent::Deliver { record, from } => {
                    let mut record = record.clone();
                    record.send_round = shift(record.send_round, cut[*from], delta);
                    EnvComponent::Deliver { record, from: *from }
                }
                other => other.clone(),
            };
            target.actions[j] = ja.actions[j].clone();
        }
    }
    let result = Run {
        config: run.config.clone(),
        initial: run.initial.clone(),
        rounds,
        crashes: run
            .crashes
            .iter()
            .map(|(&p, &c)| (p, shift(c, cut[p], delta)))
            .collect(),
        quiescent: run.quiescent,
        seed: None,
        adversary: None,
    };

    let target = Execution::of(&result)?;
    let deliveries_in_transit = target.final_state.env_history == result.rounds;
    let validation = validate_run(&result, protocol);
    let locally_equivalent = first_difference(&source, &target).is_none();
    let pointwise_equal = (0..n).all(|j| {
        (0..=h).all(|m| source.same_local_state(j, m, &target, shift(m, cut[j], delta)))
            && (cut[j] + 1..=cut[j] + delta)
                .all(|m2| source.same_local_state(j, cut[j], &target, m2))
    });
    let band_empty = (0..n).all(|j| {
        (cut[j] + 1..=cut[j] + delta)
            .all(|m2| matches!(result.rounds[m2 - 1].env[j], EnvComponent::Skip))
    });

    let cert = TransformCertificate {
        source_digest: digest(run)?,
        result_digest: digest(&result)?,
        correspondence: (0..n)
            .map(|j| Correspondence {
                process: j,
                cut: cut[j],
                delta,
            })
            .collect(),
        shift: ShiftSpec {
            pivot,
            delta,
            frontier: frontier.clone(),
        },
        source_horizon: h,
        result_horizon: result.horizon(),
        horizon_convention: HORIZON_CONVENTION.into(),
        validation,
        locally_equivalent,
        pointwise_equal,
        band_empty,
        deliveries_in_transit,
        reorder: None,
    };
    if !cert.passed() {
        return Err(Error::ValidationFailure(format!(
            "delaying {pivot} by {delta}: {}, equivalent={}, pointwise={}, band={}, in_transit={}",
            cert.validation,
            cert.locally_equivalent,
            cert.pointwise_equal,
            cert.band_empty,
            cert.deliveries_in_transit
        )));
    }
    Ok((result, cert))
}

/// Builds `r' ≈ r` with `Y <_{r'} X`, keeping every completed `Z` with
/// `X <_r Z` and no chain `Z ⟿ Y` after `X`.
pub fn reorder_operations(run: &Run, x: OpId, y: OpId) -> Result<(Run, TransformCertificate)> {
    reorder_operations_with(run, &by_name(&run.config)?, x, y)
}

pub fn reorder_operations_with(
    run: &Run,
    protocol: &ProtocolSpec,
    x: OpId,
    y: OpId,
) -> Result<(Run, TransformCertificate)> {
    let ops = extract_operations(run)?;
    let (xo, yo) = (find_op(&ops, x)?, find_op(&ops, y)?);
    let index = CausalIndex::new(&Execution::of(run)?);
    let delta = reorder_delta(&index, xo, yo)?;
    let y_end = yo.end.expect("checked completed");

    let (result, mut cert) = delay_future_with(run, protocol, y_end, delta)?;
    let new_ops = extract_operations(&result)?;
    let xn = find_op(&new_ops, x)?;
    let yn = find_op(&new_ops, y)?;
    let mut kept_after_x = Vec::new();
    for z in ops.iter().filter(|z| xo.precedes(z) && z.is_completed()) {
        if index.happens_before(z.start, y_end) {
            continue;
        }
        kept_after_x.push((z.id, xn.precedes(find_op(&new_ops, z.id)?)));
    }
    let check = ReorderCheck {
        x,
        y,
        y_end: yn.end.map_or(Round::MAX, |e| e.time),
        x_start: xn.start.time,
        y_before_x: yn.precedes(xn),
        kept_after_x,
    };
    if !check.holds() {
        return Err(Error::ValidationFailure(format!("reordering {y} before {x}: {check:?}")));
    }
    cert.reorder = Some(check);
    Ok((result, cert))
}

/// `Δ = t_{Y.e} - t_{X.s} + 1`, after checking the preconditions.
pub fn reorder_delta(index: &CausalIndex, x: &OperationInstance, y: &OperationInstance) -> Result<Round> {
    let Some(y_end) = y.end else {
        return Err(Error::PreconditionFailed(format!("{} is pending", y.id)));
    };
    if index.happens_before(x.start, y_end) {
        return Err(Error::PreconditionFailed(format!(
            "there is a message chain from {} to {}",
            x.id, y.id
        )));
    }
    if y_end.time < x.start.time {
        return Err(Error::PreconditionFailed(format!(
            "{} already ends before {} starts",
            y.id, x.id
        )));
    }
    Ok(y_end.time - x.start.time + 1)
}
