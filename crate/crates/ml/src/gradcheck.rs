use crate::model::{Batch, IterationPlan, Model};
use crate::Result;
use bbdec_nn::gradcheck::{check_gradients, GradCheckOptions, GradCheckReport};
use bbdec_nn::Tensor;

/// Finite-difference check of the full training loss of `model` on `batch`.
pub fn check_model_gradients(
    model: &Model<f64>,
    batch: &Batch,
    plan: &IterationPlan,
    masks: Option<&[Tensor<f64>]>,
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    // Surface configuration errors before the closure, which cannot fail.
    {
        let mut g = model.graph(options.mode);
        model.loss(&mut g, batch, plan, masks)?;
    }
    let report = check_gradients(
        &model.params,
        |g| model.loss(g, batch, plan, masks).expect("validated above"),
        options,
    )?;
    Ok(report)
}
