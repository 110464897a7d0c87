// Scratch probe for penalty calibration at the benchmark scale.
use actsub::datagen::{generate, ModelKind, TruthSpec};
use actsub::kernels::KernelSpec;
use actsub::model_selection::{fit_grid, lambda_grid, FitLoss};
use actsub::risk::{class_weights_from, ClassWeights, LabeledBatch};
use actsub::sampling::draw_and_label;
use actsub::solver::SolverConfig;
use ndarray::Array1;

fn fold_score(
    held: &LabeledBatch,
    theta: &Array1<f64>,
    weights: &ClassWeights,
    smooth_delta: Option<f64>,
    kernel: &KernelSpec,
) -> f64 {
    let margins = held.margins(&theta.view());
    let mut acc = 0.0;
    for (i, &m) in margins.iter().enumerate() {
        let y = held.y[i] as f64;
        let w = weights.get(held.y[i]);
        acc += match smooth_delta {
            Some(d) => w * kernel.upper_tail(y * m / d),
            None => {
                if y * m < 0.0 {
                    w
                } else {
                    0.0
                }
            }
        };
    }
    acc / held.len() as f64
}

fn one_se_pick(grid: &[f64], means: &[f64], folds: &[Vec<f64>], m: usize) -> f64 {
    let (argmin, &cv_min) = means
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let var = folds[argmin]
        .iter()
        .map(|s| (s - cv_min).powi(2))
        .sum::<f64>()
        / (m as f64 - 1.0);
    let se = (var / m as f64).sqrt();
    grid.iter()
        .zip(means)
        .filter(|(_, &mv)| mv <= cv_min + se)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn main() {
    let kernel = KernelSpec::gaussian_for_budget(2000.0);
    for (name, model) in [
        ("conditional_mean", ModelKind::ConditionalMean { mu: 2.0, eps_sd: 0.1 }),
        ("logistic", ModelKind::Logistic),
        ("binary_response", ModelKind::BinaryResponse { sigma: 0.5 }),
    ] {
        println!("== {name}");
        for rep in 0..2u64 {
            let truth = TruthSpec::new(200, 10, model, 11 + rep).unwrap();
            let pool = generate(20_000, &truth, 12 + 100 * rep);
            let rows: Vec<usize> = (0..pool.len()).collect();
            let mut oracle = pool.oracle(2000.0).unwrap();
            let batch = draw_and_label(&pool, &rows, None, 0.1, &mut oracle, 13 + rep, 1).unwrap();
            let weights = class_weights_from(&batch).unwrap();
            let grid =
                lambda_grid(&batch, 1.0, &kernel, &weights, FitLoss::SmoothedRisk, 20, 7.4009)
                    .unwrap();
            // manual 5-fold CV with both scorings
            let m = 5;
            let folds_of = actsub::model_selection::assign_folds(batch.len(), m, 99 + rep);
            let mut smooth_scores = vec![vec![0.0; m]; grid.len()];
            let mut hard_scores = vec![vec![0.0; m]; grid.len()];
            let solver = SolverConfig::default().with_lambda_tgt(grid[grid.len() - 1]);
            for fold in 0..m {
                let tr: Vec<usize> = (0..batch.len()).filter(|i| folds_of[*i] != fold).collect();
                let he: Vec<usize> = (0..batch.len()).filter(|i| folds_of[*i] == fold).collect();
                let train = batch.subset(&tr);
                let held = batch.subset(&he);
                let fits = fit_grid(
                    &train,
                    1.0,
                    &kernel,
                    &weights,
                    FitLoss::SmoothedRisk,
                    &grid,
                    &solver,
                    None,
                )
                .unwrap();
                for (g, out) in fits.iter().enumerate() {
                    smooth_scores[g][fold] =
                        fold_score(&held, &out.theta, &weights, Some(1.0), &kernel);
                    hard_scores[g][fold] = fold_score(&held, &out.theta, &weights, None, &kernel);
                }
            }
            let smooth_means: Vec<f64> = smooth_scores
                .iter()
                .map(|v| v.iter().sum::<f64>() / m as f64)
                .collect();
            let hard_means: Vec<f64> = hard_scores
                .iter()
                .map(|v| v.iter().sum::<f64>() / m as f64)
                .collect();
            let l_smooth = one_se_pick(&grid, &smooth_means, &smooth_scores, m);
            let l_hard = one_se_pick(&grid, &hard_means, &hard_scores, m);
            // error at each choice (full-batch refit)
            for (tag, lam) in [("smooth", l_smooth), ("hard", l_hard)] {
                let solver = SolverConfig::default().with_lambda_tgt(lam);
                let fit = actsub::model_selection::fit_target(
                    &batch,
                    1.0,
                    &kernel,
                    &weights,
                    FitLoss::SmoothedRisk,
                    &solver,
                    None,
                )
                .unwrap();
                let diff = &fit.theta_hat - &truth.theta_star;
                let l2 = diff.dot(&diff).sqrt();
                let l1: f64 = diff.iter().map(|v| v.abs()).sum();
                println!(
                    "  rep {rep} {tag:>6}: lambda {:.4e}  l2 {:.3}  l1 {:.3}  nnz {}",
                    lam,
                    l2,
                    l1,
                    fit.theta_hat.iter().filter(|v| **v != 0.0).count()
                );
            }
        }
    }
}
