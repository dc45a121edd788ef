#pragma once

#include <vector>

#include "cmis/matrix.hpp"

namespace cmis {

enum class Scale { frame, sequence };

/// T×D feature matrix tagged with the scale that produced it, so frame and
/// sequence features cannot be mixed by accident.
template <Scale S>
struct Features {
    Matrix values;
    static constexpr Scale scale = S;
};

using FrameFeatures = Features<Scale::frame>;
using SeqFeatures = Features<Scale::sequence>;

/// Subtraction standardizer: emotional features minus the predicted neutral.
template <Scale S>
Features<S> standardize(const Features<S>& emotional, const Features<S>& predicted_neutral) {
    require_same_shape(emotional.values, predicted_neutral.values, "standardize");
    return {emotional.values - predicted_neutral.values};
}

/// Arithmetic mean of the features of several neutral draws.
template <Scale S>
Features<S> average_features(const std::vector<Features<S>>& draws) {
    if (draws.empty()) throw ShapeError("average_features: empty list");
    Matrix acc = draws.front().values;
    for (std::size_t i = 1; i < draws.size(); ++i) acc += draws[i].values;
    acc *= 1.0 / static_cast<double>(draws.size());
    return {std::move(acc)};
}

}  // namespace cmis
