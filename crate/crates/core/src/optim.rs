//! Optimizers: layer-wise adaptive rate scaling (LARS) and momentum SGD.
//!
//! LARS rescales each parameter tensor's step by a trust ratio
//! `r = tc * |w| / (|g + wd*w| + eps)` so layers with small gradients
//! relative to their weights still move, which is what lets the large
//! contrastive learning rates (0.79 here) work. Biases and batch-norm
//! parameters are excluded from both weight decay and trust scaling, the
//! standard practice. Momentum folds the scaled step into a per-tensor
//! buffer: `m <- momentum * m + r * lr * (g + wd*w)`, then `w <- w - m`.
//!
//! Each step reports the distribution of trust ratios it applied, which the
//! training loop logs — a collapsed or exploding ratio is the first visible
//! symptom of a bad learning-rate / decay combination.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::layers::ParamView;
use crate::model::ModelBundle;

/// LARS hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LarsConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub trust_coefficient: f64,
    pub eps: f64,
}

impl Default for LarsConfig {
    fn default() -> Self {
        LarsConfig {
            learning_rate: 0.79,
            momentum: 0.9,
            weight_decay: 1e-6,
            trust_coefficient: 1e-3,
            eps: 1e-8,
        }
    }
}

impl LarsConfig {
    /// The contrastive pretraining / binary fine-tuning recipe
    /// (lr 0.79, weight decay 1e-6).
    pub fn pretraining() -> Self {
        Self::default()
    }

    /// The multiclass fine-tuning recipe (lr 1e-3, weight decay 5e-4).
    pub fn multiclass() -> Self {
        LarsConfig {
            learning_rate: 1e-3,
            weight_decay: 5e-4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.learning_rate > 0.0, "learning_rate must be positive"),
            (
                (0.0..1.0).contains(&self.momentum),
                "momentum must lie in [0, 1)",
            ),
            (self.weight_decay >= 0.0, "weight_decay must be non-negative"),
            (
                self.trust_coefficient > 0.0,
                "trust_coefficient must be positive",
            ),
            (self.eps > 0.0, "eps must be positive"),
        ];
        for (ok, message) in checks {
            if !ok {
                return Err(Error::InvalidOptimizerConfig(format!(
                    "{message} (got {self:?})"
                )));
            }
        }
        if [
            self.learning_rate,
            self.momentum,
            self.weight_decay,
            self.trust_coefficient,
            self.eps,
        ]
        .iter()
        .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidOptimizerConfig(format!(
                "non-finite value in {self:?}"
            )));
        }
        Ok(())
    }
}

/// Momentum SGD hyperparameters (the non-adaptive fallback).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 1e-2,
            momentum: 0.9,
            weight_decay: 0.0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidOptimizerConfig(format!(
                "learning_rate must be positive (got {})",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidOptimizerConfig(format!(
                "momentum must lie in [0, 1) (got {})",
                self.momentum
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidOptimizerConfig(format!(
                "weight_decay must be non-negative (got {})",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Which update rule an [`Optimizer`] applies.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Lars(LarsConfig),
    Sgd(SgdConfig),
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            OptimizerConfig::Lars(c) => c.validate(),
            OptimizerConfig::Sgd(c) => c.validate(),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match self {
            OptimizerConfig::Lars(c) => c.learning_rate,
            OptimizerConfig::Sgd(c) => c.learning_rate,
        }
    }
}

/// Per-step summary: the spread of applied trust ratios and global norms.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepStats {
    pub trust_min: f64,
    pub trust_median: f64,
    pub trust_max: f64,
    pub grad_norm: f64,
    pub update_norm: f64,
}

/// True for parameters excluded from weight decay and trust scaling:
/// biases and batch-norm affine parameters.
pub fn default_exclusion(name: &str) -> bool {
    let mut segments = name.split('.').rev();
    let last = segments.next().unwrap_or("");
    last == "bias" || name.split('.').any(|s| s.starts_with("bn"))
}

/// One LARS update on a single tensor. Returns the applied trust ratio
/// (1 for excluded tensors and degenerate norms).
pub fn lars_update(
    cfg: &LarsConfig,
    value: &mut [f64],
    grad: &[f64],
    momentum_buf: &mut [f64],
    excluded: bool,
) -> f64 {
    let decay = if excluded { 0.0 } else { cfg.weight_decay };
    let trust = if excluded {
        1.0
    } else {
        let wnorm = l2(value);
        let gnorm = {
            let mut acc = 0.0;
            for (g, w) in grad.iter().zip(value.iter()) {
                let adj = g + decay * w;
                acc += adj * adj;
            }
            acc.sqrt()
        };
        if wnorm == 0.0 || gnorm == 0.0 {
            1.0
        } else {
            cfg.trust_coefficient * wnorm / (gnorm + cfg.eps)
        }
    };
    for i in 0..value.len() {
        let adjusted = grad[i] + decay * value[i];
        momentum_buf[i] = cfg.momentum * momentum_buf[i] + trust * cfg.learning_rate * adjusted;
        value[i] -= momentum_buf[i];
    }
    trust
}

/// One momentum-SGD update on a single tensor.
pub fn sgd_update(
    cfg: &SgdConfig,
    value: &mut [f64],
    grad: &[f64],
    momentum_buf: &mut [f64],
    excluded: bool,
) {
    let decay = if excluded { 0.0 } else { cfg.weight_decay };
    for i in 0..value.len() {
        let adjusted = grad[i] + decay * value[i];
        momentum_buf[i] = cfg.momentum * momentum_buf[i] + cfg.learning_rate * adjusted;
        value[i] -= momentum_buf[i];
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Stateful optimizer: keeps one momentum buffer per parameter tensor,
/// keyed by name.
pub struct Optimizer {
    config: OptimizerConfig,
    momentum: BTreeMap<String, Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Optimizer {
            config,
            momentum: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Update every trainable parameter.
    pub fn step(&mut self, model: &mut ModelBundle) -> Result<StepStats> {
        self.step_filtered(model, &|_| true)
    }

    /// Update trainable parameters whose name satisfies `update_if`
    /// (frozen-encoder fine-tuning passes a `head.`-prefix filter).
    pub fn step_filtered(
        &mut self,
        model: &mut ModelBundle,
        update_if: &dyn Fn(&str) -> bool,
    ) -> Result<StepStats> {
        let mut trusts: Vec<f64> = Vec::new();
        let mut grad_sq = 0.0;
        let mut update_sq = 0.0;
        let mut problem: Option<Error> = None;
        let config = self.config;
        let momentum = &mut self.momentum;
        model.for_each_param(&mut |p: ParamView| {
            if problem.is_some() || !p.trainable || !update_if(&p.name) {
                return;
            }
            let Some(grad) = p.grad else { return };
            if grad.len() != p.value.len() {
                problem = Some(Error::GradientShape {
                    name: p.name.clone(),
                    grad_len: grad.len(),
                    param_len: p.value.len(),
                });
                return;
            }
            if grad.iter().any(|g| !g.is_finite()) {
                problem = Some(Error::NonFinite {
                    context: format!("gradient of {}", p.name),
                });
                return;
            }
            let buf = momentum
                .entry(p.name.clone())
                .or_insert_with(|| vec![0.0; p.value.len()]);
            if buf.len() != p.value.len() {
                problem = Some(Error::GradientShape {
                    name: p.name.clone(),
                    grad_len: buf.len(),
                    param_len: p.value.len(),
                });
                return;
            }
            grad_sq += grad.iter().map(|g| g * g).sum::<f64>();
            let excluded = default_exclusion(&p.name);
            let trust = match &config {
                OptimizerConfig::Lars(cfg) => lars_update(cfg, p.value, grad, buf, excluded),
                OptimizerConfig::Sgd(cfg) => {
                    sgd_update(cfg, p.value, grad, buf, excluded);
                    1.0
                }
            };
            update_sq += buf.iter().map(|u| u * u).sum::<f64>();
            if p.value.iter().any(|v| !v.is_finite()) {
                problem = Some(Error::NonFinite {
                    context: format!("parameter {} after update", p.name),
                });
                return;
            }
            trusts.push(trust);
        });
        if let Some(err) = problem {
            return Err(err);
        }
        if trusts.is_empty() {
            return Err(Error::MissingGradient {
                name: "no trainable parameter matched the update filter".to_string(),
            });
        }
        trusts.sort_by(|a, b| a.partial_cmp(b).expect("finite trust ratios"));
        Ok(StepStats {
            trust_min: trusts[0],
            trust_median: trusts[trusts.len() / 2],
            trust_max: trusts[trusts.len() - 1],
            grad_norm: grad_sq.sqrt(),
            update_norm: update_sq.sqrt(),
        })
    }

    /// Drop all momentum state (used when switching training phases).
    pub fn reset(&mut self) {
        self.momentum.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_model, Architecture, ClassifierHeadConfig, EncoderConfig, HeadConfig,
    };
    use approx::assert_relative_eq;
    use ndarray::{Array, Array4};
    use rand::Rng;

    use crate::rng::rng_from;

    #[test]
    fn lars_single_step_matches_hand_computation() {
        let cfg = LarsConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
            trust_coefficient: 1e-3,
            eps: 1e-8,
        };
        let mut w = [3.0, 4.0]; // |w| = 5
        let g = [1.0, 0.0]; // |g| = 1
        let mut m = [0.0, 0.0];
        let trust = lars_update(&cfg, &mut w, &g, &mut m, false);
        let expected_trust = 1e-3 * 5.0 / (1.0 + 1e-8);
        assert_relative_eq!(trust, expected_trust, max_relative = 1e-12);
        assert_relative_eq!(w[0], 3.0 - 0.1 * expected_trust, max_relative = 1e-12);
        assert_relative_eq!(w[1], 4.0, max_relative = 1e-12);
    }

    #[test]
    fn lars_momentum_accumulates_scaled_steps() {
        let cfg = LarsConfig {
            learning_rate: 0.5,
            momentum: 0.9,
            weight_decay: 0.0,
            trust_coefficient: 1.0,
            eps: 0.0,
        };
        // |w| changes across steps, so replay the recurrence explicitly.
        let mut w = [2.0f64, 0.0];
        let g = [1.0, 0.0];
        let mut m = [0.0, 0.0];

        let mut expect_w = w;
        let mut expect_m = 0.0;
        for _ in 0..3 {
            let trust = expect_w[0].abs() / 1.0;
            expect_m = 0.9 * expect_m + trust * 0.5 * 1.0;
            expect_w[0] -= expect_m;
            lars_update(&cfg, &mut w, &g, &mut m, false);
            assert_relative_eq!(w[0], expect_w[0], max_relative = 1e-12);
            assert_relative_eq!(m[0], expect_m, max_relative = 1e-12);
        }
    }

    #[test]
    fn weight_decay_enters_both_trust_and_update() {
        let cfg = LarsConfig {
            learning_rate: 1.0,
            momentum: 0.0,
            weight_decay: 0.1,
            trust_coefficient: 1e-3,
            eps: 0.0,
        };
        let mut w = [2.0];
        let g = [0.3];
        let mut m = [0.0];
        let trust = lars_update(&cfg, &mut w, &g, &mut m, false);
        // adjusted gradient = 0.3 + 0.1 * 2 = 0.5
        assert_relative_eq!(trust, 1e-3 * 2.0 / 0.5, max_relative = 1e-12);
        assert_relative_eq!(w[0], 2.0 - trust * 0.5, max_relative = 1e-12);
    }

    #[test]
    fn excluded_tensors_use_unit_trust_and_no_decay() {
        let cfg = LarsConfig {
            learning_rate: 0.2,
            momentum: 0.0,
            weight_decay: 0.5,
            trust_coefficient: 1e-3,
            eps: 1e-8,
        };
        let mut w = [10.0];
        let g = [1.0];
        let mut m = [0.0];
        let trust = lars_update(&cfg, &mut w, &g, &mut m, true);
        assert_eq!(trust, 1.0);
        // No decay: the update is exactly lr * g.
        assert_relative_eq!(w[0], 10.0 - 0.2, max_relative = 1e-12);
    }

    #[test]
    fn zero_norm_weight_or_gradient_falls_back_to_unit_trust() {
        // Decay off so a zero raw gradient stays zero after adjustment.
        let cfg = LarsConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut w = [0.0, 0.0];
        let mut m = [0.0, 0.0];
        assert_eq!(lars_update(&cfg, &mut w, &[1.0, 0.0], &mut m, false), 1.0);
        let mut w = [1.0, 0.0];
        let mut m = [0.0, 0.0];
        assert_eq!(lars_update(&cfg, &mut w, &[0.0, 0.0], &mut m, false), 1.0);
    }

    #[test]
    fn exclusion_rule_matches_bias_and_batchnorm_names() {
        assert!(default_exclusion("encoder.b1.bn.weight"));
        assert!(default_exclusion("encoder.layer3.2.bn1.weight"));
        assert!(default_exclusion("encoder.layer1.0.downsample.bn.bias"));
        assert!(default_exclusion("head.0.bias"));
        assert!(!default_exclusion("head.0.weight"));
        assert!(!default_exclusion("encoder.b1.conv.weight"));
        assert!(!default_exclusion("encoder.stem.conv.weight"));
    }

    #[test]
    fn published_recipes_carry_the_expected_hyperparameters() {
        let pre = LarsConfig::pretraining();
        assert_eq!(pre.learning_rate, 0.79);
        assert_eq!(pre.weight_decay, 1e-6);
        let multi = LarsConfig::multiclass();
        assert_eq!(multi.learning_rate, 1e-3);
        assert_eq!(multi.weight_decay, 5e-4);
        assert!(OptimizerConfig::Lars(pre).validate().is_ok());
        assert!(OptimizerConfig::Lars(multi).validate().is_ok());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            LarsConfig { learning_rate: 0.0, ..Default::default() },
            LarsConfig { learning_rate: -1.0, ..Default::default() },
            LarsConfig { momentum: 1.0, ..Default::default() },
            LarsConfig { weight_decay: -0.1, ..Default::default() },
            LarsConfig { trust_coefficient: 0.0, ..Default::default() },
            LarsConfig { eps: 0.0, ..Default::default() },
            LarsConfig { learning_rate: f64::NAN, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err(), "accepted {cfg:?}");
        }
        assert!(SgdConfig { momentum: -0.1, ..Default::default() }.validate().is_err());
    }

    fn tiny_model() -> crate::model::ModelBundle {
        let cfg = EncoderConfig {
            architecture: Architecture::SmallCnn,
            input_size: (16, 16),
            feature_dim: 16,
        };
        build_model(cfg, HeadConfig::Classifier(ClassifierHeadConfig::linear(3)), 5).unwrap()
    }

    fn fake_gradients(model: &mut crate::model::ModelBundle, seed: u64) {
        let mut rng = rng_from(seed, &[3]);
        model.for_each_param(&mut |p| {
            if let Some(g) = p.grad {
                for v in g.iter_mut() {
                    *v = rng.random_range(-0.01..0.01);
                }
            }
        });
    }

    #[test]
    fn step_is_deterministic_and_reports_ordered_stats() {
        let mut a = tiny_model();
        let mut b = tiny_model();
        let mut opt_a = Optimizer::new(OptimizerConfig::Lars(LarsConfig::default())).unwrap();
        let mut opt_b = Optimizer::new(OptimizerConfig::Lars(LarsConfig::default())).unwrap();
        fake_gradients(&mut a, 1);
        fake_gradients(&mut b, 1);
        let sa = opt_a.step(&mut a).unwrap();
        let sb = opt_b.step(&mut b).unwrap();
        assert_eq!(sa, sb);
        assert!(sa.trust_min <= sa.trust_median && sa.trust_median <= sa.trust_max);
        assert!(sa.grad_norm > 0.0 && sa.update_norm > 0.0);
        assert_eq!(a.param_map(), b.param_map());
    }

    #[test]
    fn filtered_step_leaves_frozen_parameters_untouched() {
        let mut model = tiny_model();
        let before = model.param_map();
        fake_gradients(&mut model, 2);
        let mut opt = Optimizer::new(OptimizerConfig::Lars(LarsConfig::default())).unwrap();
        opt.step_filtered(&mut model, &|name| name.starts_with("head."))
            .unwrap();
        let after = model.param_map();
        for (name, tensor) in &before {
            if name.starts_with("encoder.") {
                assert_eq!(after[name], *tensor, "{name} changed despite filter");
            } else if name == "head.0.weight" {
                assert_ne!(after[name], *tensor, "{name} should have moved");
            }
        }
    }

    #[test]
    fn filter_matching_nothing_is_an_error() {
        let mut model = tiny_model();
        fake_gradients(&mut model, 3);
        let mut opt = Optimizer::new(OptimizerConfig::Lars(LarsConfig::default())).unwrap();
        assert!(matches!(
            opt.step_filtered(&mut model, &|_| false),
            Err(Error::MissingGradient { .. })
        ));
    }

    #[test]
    fn non_finite_gradients_abort_the_step() {
        let mut model = tiny_model();
        fake_gradients(&mut model, 4);
        model.for_each_param(&mut |p| {
            if p.name == "head.0.weight" {
                if let Some(g) = p.grad {
                    g[0] = f64::INFINITY;
                }
            }
        });
        let mut opt = Optimizer::new(OptimizerConfig::Lars(LarsConfig::default())).unwrap();
        assert!(matches!(
            opt.step(&mut model),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn lars_training_reduces_a_simple_loss() {
        // Four steps on a fixed batch with a squared-error pull toward a
        // target logit pattern; the loss must drop monotonically enough to
        // at least halve. This exercises the full visitor/update loop.
        let mut model = tiny_model();
        let mut opt = Optimizer::new(OptimizerConfig::Lars(LarsConfig {
            learning_rate: 0.05,
            ..Default::default()
        }))
        .unwrap();
        let mut rng = rng_from(8, &[1]);
        let x: Array4<f64> =
            Array::from_shape_fn((4, 3, 16, 16), |_| rng.random_range(0.0..1.0));
        let target = Array::from_shape_fn((4, 3), |(i, j)| if i % 3 == j { 1.0 } else { 0.0 });
        let mut losses = Vec::new();
        for _ in 0..6 {
            model.zero_grads();
            let out = model.forward(&x, true);
            let diff = &out - &target;
            losses.push(diff.mapv(|d| d * d).sum());
            let gout = diff.mapv(|d| 2.0 * d);
            model.backward(&gout);
            opt.step(&mut model).unwrap();
        }
        let first = losses[0];
        let last = *losses.last().unwrap();
        assert!(
            last < 0.5 * first,
            "loss did not halve: {losses:?}"
        );
    }

    #[test]
    fn sgd_matches_lars_when_trust_is_unity() {
        // With |w| = |adjusted g| and trust coefficient 1, LARS reduces to
        // SGD on that tensor.
        let lars = LarsConfig {
            learning_rate: 0.3,
            momentum: 0.0,
            weight_decay: 0.0,
            trust_coefficient: 1.0,
            eps: 0.0,
        };
        let sgd = SgdConfig {
            learning_rate: 0.3,
            momentum: 0.0,
            weight_decay: 0.0,
        };
        let mut w1 = [0.6, 0.8];
        let mut w2 = [0.6, 0.8];
        let g = [0.8, -0.6]; // both norms are 1
        let mut m1 = [0.0, 0.0];
        let mut m2 = [0.0, 0.0];
        lars_update(&lars, &mut w1, &g, &mut m1, false);
        sgd_update(&sgd, &mut w2, &g, &mut m2, false);
        assert_relative_eq!(w1[0], w2[0], max_relative = 1e-12);
        assert_relative_eq!(w1[1], w2[1], max_relative = 1e-12);
    }
}
