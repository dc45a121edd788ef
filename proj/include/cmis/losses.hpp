#pragma once

#include <span>
#include <vector>

#include "cmis/autograd.hpp"
#include "cmis/matrix.hpp"

namespace cmis {

/// Minimized losses are positive. The literal sign flips them for inspection
/// only; training with it maximizes the discrepancies.
enum class LossSign { minimize, literal };

/// Neutral approximation loss for one individual: mean over unordered pairs
/// of the mean absolute difference between neutral feature maps. Needs ≥2.
Var loss_neutral_approx(const std::vector<Var>& neutral_features);
/// Batch value: mean of per-individual losses.
double loss_neutral_approx(const std::vector<std::vector<Matrix>>& batch);

/// Squared error of one 1×1 prediction.
Var loss_mse(Var prediction, double target);
/// Mean squared error over a batch.
double loss_mse(std::span<const double> targets, std::span<const double> predictions);

/// Mean absolute difference between the neutral benchmark and the
/// translator's prediction, over every frame and channel.
Var loss_translator(Var benchmark, Var predicted);
/// Batch value: mean of per-sample losses.
double loss_translator(const std::vector<Matrix>& benchmarks, const std::vector<Matrix>& predicted);

/// Applies the sign convention.
Var signed_loss(Var loss, LossSign sign);

}  // namespace cmis
