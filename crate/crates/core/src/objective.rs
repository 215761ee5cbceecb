//! Normalized temperature-scaled cross-entropy (NT-Xent), the contrastive
//! pretraining objective.
//!
//! Embedding rows are interleaved: rows `2k` and `2k + 1` are the two
//! augmented views of image `k`, so the positive partner of row `i` is
//! `i ^ 1`. For each anchor `i` with partner `j`:
//!
//! ```text
//! loss_i = -log( exp(sim(z_i, z_j) / T) / sum_{k != i} exp(sim(z_i, z_k) / T) )
//! ```
//!
//! with cosine similarity `sim` and temperature `T`; the batch loss averages
//! over all `2n` anchors. [`nt_xent_loss`] returns the loss with its analytic
//! gradient; [`nt_xent_loss_oracle`] recomputes the value with an
//! independent brute-force double loop, and [`finite_difference_check`]
//! compares the gradient against central differences. The latter two exist so
//! the fast path can be cross-examined rather than trusted.

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Loss value plus `dL/dz` for every embedding row.
#[derive(Debug, Clone)]
pub struct NtXentOutput {
    pub loss: f64,
    pub grad: Array2<f64>,
}

fn validate_batch(z: &Array2<f64>, temperature: f64) -> Result<()> {
    let rows = z.dim().0;
    if rows < 2 || !rows.is_multiple_of(2) {
        return Err(Error::OddEmbeddingBatch { rows });
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidTrainConfig(format!(
            "temperature {temperature} must be finite and positive"
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "contrastive embeddings".to_string(),
        });
    }
    Ok(())
}

/// Row norms, rejecting rows too short to define a direction.
fn row_norms(z: &Array2<f64>) -> Result<Vec<f64>> {
    z.axis_iter(Axis(0))
        .enumerate()
        .map(|(row, r)| {
            let norm = r.dot(&r).sqrt();
            if norm < 1e-12 {
                Err(Error::ZeroNormRow { row })
            } else {
                Ok(norm)
            }
        })
        .collect()
}

/// Pairwise cosine similarities of the rows of `z` (symmetric, unit
/// diagonal).
pub fn cosine_similarity_matrix(z: &Array2<f64>) -> Result<Array2<f64>> {
    let norms = row_norms(z)?;
    let rows = z.dim().0;
    let mut unit = z.clone();
    for (i, mut r) in unit.axis_iter_mut(Axis(0)).enumerate() {
        r.mapv_inplace(|v| v / norms[i]);
    }
    let mut sim = unit.dot(&unit.t());
    // Guard against drift on the diagonal.
    for i in 0..rows {
        sim[[i, i]] = 1.0;
    }
    Ok(sim)
}

/// Loss and analytic gradient.
///
/// The gradient chains through three stages: the per-anchor softmax over
/// scaled similarities, the similarity bilinear form on unit rows, and the
/// row normalization `u = z / |z|` (whose Jacobian projects out the radial
/// component).
pub fn nt_xent_loss(z: &Array2<f64>, temperature: f64) -> Result<NtXentOutput> {
    validate_batch(z, temperature)?;
    let (rows, dim) = z.dim();
    let norms = row_norms(z)?;
    let mut unit = z.clone();
    for (i, mut r) in unit.axis_iter_mut(Axis(0)).enumerate() {
        r.mapv_inplace(|v| v / norms[i]);
    }
    let sim = unit.dot(&unit.t());

    let mut loss = 0.0;
    // g[[i, k]] = dL/d(sim[i, k]) holding the symmetric entry fixed.
    let mut g = Array2::<f64>::zeros((rows, rows));
    for i in 0..rows {
        let partner = i ^ 1;
        // Log-sum-exp over k != i with max subtraction.
        let mut max_logit = f64::NEG_INFINITY;
        for k in 0..rows {
            if k != i {
                max_logit = max_logit.max(sim[[i, k]] / temperature);
            }
        }
        let mut denom = 0.0;
        for k in 0..rows {
            if k != i {
                denom += ((sim[[i, k]] / temperature) - max_logit).exp();
            }
        }
        let lse = max_logit + denom.ln();
        loss += lse - sim[[i, partner]] / temperature;

        let inv = 1.0 / (rows as f64 * temperature);
        for k in 0..rows {
            if k == i {
                continue;
            }
            let p = ((sim[[i, k]] / temperature) - lse).exp();
            let delta = if k == partner { 1.0 } else { 0.0 };
            g[[i, k]] = (p - delta) * inv;
        }
    }
    loss /= rows as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "contrastive loss".to_string(),
        });
    }

    // dL/dU = (G + G^T) U, since sim = U U^T and each off-diagonal entry
    // receives contributions as both row and column index.
    let gsym = &g + &g.t();
    let du = gsym.dot(&unit);

    // Through normalization: dz = (du - u (u . du)) / |z|.
    let mut grad = Array2::<f64>::zeros((rows, dim));
    for i in 0..rows {
        let u = unit.row(i);
        let d = du.row(i);
        let radial = u.dot(&d);
        for c in 0..dim {
            grad[[i, c]] = (d[c] - u[c] * radial) / norms[i];
        }
    }
    Ok(NtXentOutput { loss, grad })
}

/// Brute-force reference for the loss value: an independent double loop that
/// recomputes cosine similarity from raw dot products per anchor, with no
/// shared normalization or log-sum-exp code.
pub fn nt_xent_loss_oracle(z: &Array2<f64>, temperature: f64) -> Result<f64> {
    validate_batch(z, temperature)?;
    row_norms(z)?;
    let rows = z.dim().0;
    let cos = |a: ArrayView1<f64>, b: ArrayView1<f64>| {
        a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
    };
    let mut total = 0.0;
    for i in 0..rows {
        let numerator = (cos(z.row(i), z.row(i ^ 1)) / temperature).exp();
        let mut denominator = 0.0;
        for k in 0..rows {
            if k != i {
                denominator += (cos(z.row(i), z.row(k)) / temperature).exp();
            }
        }
        total += -(numerator / denominator).ln();
    }
    Ok(total / rows as f64)
}

/// Worst relative disagreement between the analytic gradient and central
/// finite differences with step `h`, over every coordinate of `z`.
pub fn finite_difference_check(z: &Array2<f64>, temperature: f64, h: f64) -> Result<f64> {
    let analytic = nt_xent_loss(z, temperature)?.grad;
    let mut worst: f64 = 0.0;
    let mut zp = z.clone();
    for i in 0..z.dim().0 {
        for c in 0..z.dim().1 {
            let orig = zp[[i, c]];
            zp[[i, c]] = orig + h;
            let lp = nt_xent_loss(&zp, temperature)?.loss;
            zp[[i, c]] = orig - h;
            let lm = nt_xent_loss(&zp, temperature)?.loss;
            zp[[i, c]] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let denom = analytic[[i, c]].abs().max(fd.abs()).max(1e-6);
            worst = worst.max((analytic[[i, c]] - fd).abs() / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array};
    use rand::Rng;

    use crate::rng::rng_from;

    fn random_embeddings(seed: u64, rows: usize, dim: usize) -> Array2<f64> {
        let mut rng = rng_from(seed, &[7]);
        Array::from_shape_fn((rows, dim), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn single_pair_loss_is_exactly_zero() {
        // With one pair the partner is the only other row, so the softmax
        // ratio is identically 1.
        let z = array![[0.3, -1.2, 0.5], [2.0, 0.1, -0.4]];
        let out = nt_xent_loss(&z, 0.5).unwrap();
        assert_eq!(out.loss, 0.0);
        for g in out.grad.iter() {
            assert_abs_diff_eq!(*g, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn identical_rows_give_log_of_batch_minus_one() {
        // All similarities are 1, so each anchor sees a uniform softmax over
        // 2n - 1 candidates: loss = ln(2n - 1).
        for n in [2usize, 3, 5] {
            let mut z = Array2::zeros((2 * n, 4));
            for mut row in z.axis_iter_mut(Axis(0)) {
                row.assign(&ndarray::arr1(&[0.5, -0.25, 1.0, 0.0]));
            }
            let out = nt_xent_loss(&z, 0.5).unwrap();
            assert_abs_diff_eq!(out.loss, ((2 * n - 1) as f64).ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn orthogonal_negatives_match_hand_derived_value() {
        // Two aligned pairs on orthogonal axes at T = 0.5: every anchor has
        // partner similarity 1 and two negatives at 0, so
        // loss = ln(1 + 2 e^{-1/T}) = ln(1 + 2 e^{-2}).
        let z = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
        let out = nt_xent_loss(&z, 0.5).unwrap();
        let expected = (1.0 + 2.0 * (-2.0f64).exp()).ln();
        assert_abs_diff_eq!(out.loss, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(out.loss, 0.239545, epsilon = 1e-6);
        // Aligned-and-separated beats fully collapsed embeddings.
        assert!(out.loss < ((4 - 1) as f64).ln());
    }

    #[test]
    fn analytic_loss_agrees_with_brute_force_oracle() {
        for seed in 0..8 {
            let z = random_embeddings(seed, 12, 6);
            for t in [0.1, 0.5, 1.0, 2.0] {
                let fast = nt_xent_loss(&z, t).unwrap().loss;
                let slow = nt_xent_loss_oracle(&z, t).unwrap();
                assert_abs_diff_eq!(fast, slow, epsilon = 1e-12);
                assert!(fast > 0.0, "loss must be positive for n >= 2");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in [3, 17] {
            let z = random_embeddings(seed, 8, 5);
            for t in [0.2, 0.5, 1.3] {
                let worst = finite_difference_check(&z, t, 1e-6).unwrap();
                assert!(worst < 1e-6, "seed {seed} T {t}: rel error {worst}");
            }
        }
    }

    #[test]
    fn loss_is_invariant_to_row_scaling() {
        let z = random_embeddings(5, 8, 4);
        let mut scaled = z.clone();
        for (i, mut row) in scaled.axis_iter_mut(Axis(0)).enumerate() {
            row.mapv_inplace(|v| v * (0.3 + i as f64));
        }
        let a = nt_xent_loss(&z, 0.5).unwrap().loss;
        let b = nt_xent_loss(&scaled, 0.5).unwrap().loss;
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn gradient_is_tangent_to_each_embedding_ray() {
        // Cosine similarity ignores row length, so the gradient must be
        // orthogonal to the embedding itself.
        let z = random_embeddings(9, 10, 6);
        let out = nt_xent_loss(&z, 0.5).unwrap();
        for i in 0..10 {
            let dot = z.row(i).dot(&out.grad.row(i));
            assert_abs_diff_eq!(dot, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn loss_is_invariant_to_pair_reordering() {
        let z = random_embeddings(11, 8, 4);
        let base = nt_xent_loss(&z, 0.5).unwrap().loss;
        // Swap the two views within pair 1 (rows 2 and 3).
        let mut swapped = z.clone();
        let row2 = swapped.row(2).to_owned();
        let row3 = swapped.row(3).to_owned();
        swapped.row_mut(2).assign(&row3);
        swapped.row_mut(3).assign(&row2);
        assert_abs_diff_eq!(
            nt_xent_loss(&swapped, 0.5).unwrap().loss,
            base,
            epsilon = 1e-12
        );
        // Move pair 0 (rows 0, 1) behind pair 3 (rows 6, 7).
        let mut rotated = Array2::zeros(z.dim());
        for pair in 0..4 {
            let src = (pair + 1) % 4;
            rotated.row_mut(2 * pair).assign(&z.row(2 * src));
            rotated.row_mut(2 * pair + 1).assign(&z.row(2 * src + 1));
        }
        assert_abs_diff_eq!(
            nt_xent_loss(&rotated, 0.5).unwrap().loss,
            base,
            epsilon = 1e-12
        );
    }

    #[test]
    fn similarity_matrix_is_symmetric_with_unit_diagonal() {
        let z = random_embeddings(2, 6, 5);
        let sim = cosine_similarity_matrix(&z).unwrap();
        for i in 0..6 {
            assert_eq!(sim[[i, i]], 1.0);
            for j in 0..6 {
                assert_abs_diff_eq!(sim[[i, j]], sim[[j, i]], epsilon = 1e-12);
                assert!(sim[[i, j]] <= 1.0 + 1e-12);
                assert!(sim[[i, j]] >= -1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let odd = random_embeddings(0, 5, 3);
        assert!(matches!(
            nt_xent_loss(&odd, 0.5),
            Err(Error::OddEmbeddingBatch { rows: 5 })
        ));
        let empty = Array2::<f64>::zeros((0, 3));
        assert!(nt_xent_loss(&empty, 0.5).is_err());

        let mut with_zero_row = random_embeddings(1, 4, 3);
        with_zero_row.row_mut(2).fill(0.0);
        assert!(matches!(
            nt_xent_loss(&with_zero_row, 0.5),
            Err(Error::ZeroNormRow { row: 2 })
        ));

        let mut with_nan = random_embeddings(1, 4, 3);
        with_nan[[0, 0]] = f64::NAN;
        assert!(matches!(
            nt_xent_loss(&with_nan, 0.5),
            Err(Error::NonFinite { .. })
        ));

        let fine = random_embeddings(1, 4, 3);
        assert!(nt_xent_loss(&fine, 0.0).is_err());
        assert!(nt_xent_loss(&fine, -1.0).is_err());
    }

    #[test]
    fn lower_temperature_sharpens_the_worked_example() {
        // For the orthogonal two-pair geometry the closed form
        // ln(1 + 2 e^{-1/T}) decreases as T drops.
        let z = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
        let hot = nt_xent_loss(&z, 1.0).unwrap().loss;
        let cold = nt_xent_loss(&z, 0.1).unwrap().loss;
        assert!(cold < hot);
        assert_abs_diff_eq!(hot, (1.0 + 2.0 * (-1.0f64).exp()).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(cold, (1.0 + 2.0 * (-10.0f64).exp()).ln(), epsilon = 1e-12);
    }

    #[test]
    fn extreme_similar_logits_stay_finite_via_max_subtraction() {
        // At T = 0.01 the logits reach 100; a naive exp would overflow f64
        // only near 709, but this verifies the stabilized path agrees with
        // the closed form ln(1 + 2 e^{-1/T}) at T where naive exp still
        // works, and stays finite where sharper.
        let z = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
        let out = nt_xent_loss(&z, 0.001).unwrap();
        assert!(out.loss.is_finite());
        assert!(out.loss >= 0.0);
    }
}
