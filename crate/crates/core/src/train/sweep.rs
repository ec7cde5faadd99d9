use serde::{Deserialize, Serialize};

use super::{evaluate, evaluate_ids, fmt_opt, train, train_ids, EpochRecord, EvalReport, TrainConfig, TrainOutcome};
use crate::datagen::{Dataset, Split};
use crate::error::{Error, Result};

pub const DEFAULT_LAMBDAS: [f64; 4] = [1e-3, 1e-4, 1e-5, 1e-6];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub l2_lambda: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub parameter_norm: f64,
    pub train: EvalReport,
    pub val: EvalReport,
    pub test: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Row with the lowest validation loss.
    pub fn best(&self) -> Option<&SweepRow> {
        self.rows.iter().min_by(|a, b| a.val.loss.total.total_cmp(&b.val.loss.total))
    }

    /// True when the weight norm does not grow as the penalty strengthens,
    /// comparing the weakest and strongest settings.
    pub fn norm_shrinks_with_lambda(&self) -> Option<bool> {
        let lo = self.rows.iter().min_by(|a, b| a.l2_lambda.total_cmp(&b.l2_lambda))?;
        let hi = self.rows.iter().max_by(|a, b| a.l2_lambda.total_cmp(&b.l2_lambda))?;
        (lo.l2_lambda < hi.l2_lambda).then_some(hi.parameter_norm <= lo.parameter_norm)
    }

    /// One row per strength; each cell reads "train / val / test".
    pub fn markdown(&self) -> String {
        let mut s = String::from(
            "| L2 strength | Loss | ROC-AUC | PR-AUC | MAE (px) | weight norm | best epoch |\n|---|---|---|---|---|---:|---:|\n",
        );
        type Get = fn(&EvalReport) -> Option<f64>;
        let metrics: [(Get, usize); 4] = [
            (|e| Some(e.loss.total), 4),
            (|e| e.roc_auc, 4),
            (|e| e.pr_auc, 4),
            (|e| e.mae, 2),
        ];
        for r in &self.rows {
            s.push_str(&format!("| {:e} |", r.l2_lambda));
            for (get, digits) in metrics {
                let cells: Vec<String> = [&r.train, &r.val, &r.test].iter().map(|e| fmt_opt(get(e), digits)).collect();
                s.push_str(&format!(" {} |", cells.join(" / ")));
            }
            s.push_str(&format!(" {:.3} | {} |\n", r.parameter_norm, r.best_epoch));
        }
        s
    }
}

/// Trains one model per `lambdas` entry from the same seed and data order.
pub fn sweep(
    ds: &Dataset,
    base: &TrainConfig,
    lambdas: &[f64],
    mut progress: impl FnMut(f64, &EpochRecord),
) -> Result<(SweepReport, Vec<TrainOutcome>)> {
    if lambdas.is_empty() {
        return Err(Error::Config("sweep needs at least one l2_lambda".into()));
    }
    let mut rows = Vec::with_capacity(lambdas.len());
    let mut outcomes = Vec::with_capacity(lambdas.len());
    for &l2_lambda in lambdas {
        let cfg = TrainConfig {
            l2_lambda,
            ..base.clone()
        };
        let out = train(ds, &cfg, |e| progress(l2_lambda, e))?;
        let b = cfg.eval_batch_size;
        rows.push(SweepRow {
            l2_lambda,
            best_epoch: out.history.best_epoch,
            epochs_run: out.history.epochs.len(),
            parameter_norm: out.model.parameter_norm(),
            train: evaluate_ids(&out.model, ds, Split::Train, train_ids(ds, &cfg), b)?,
            val: evaluate(&out.model, ds, Split::Val, b)?,
            test: evaluate(&out.model, ds, Split::Test, b)?,
        });
        outcomes.push(out);
    }
    Ok((SweepReport { rows }, outcomes))
}
