#pragma once

#include "cmis/config.hpp"
#include "cmis/evaluation.hpp"

namespace cmis::test {

/// A few-second experiment: 6 coordinates, 5 fps (T = 14), one-layer
/// sequence encoders of width 6.
inline ExperimentConfig tiny_config(std::uint64_t seed = 0, const KeyValues& extra = {}) {
    KeyValues kv{{"synth.width", "6"},
                 {"synth.fps", "5"},
                 {"synth.lead_secs", "0.4"},
                 {"synth.n_individuals", "4"},
                 {"synth.samples_per_individual", "6"},
                 {"synth.negatives_per_individual", "3"},
                 {"synth.signal_scale", "3"},
                 {"synth.bump_width_secs", "10"},
                 {"synth.bump_center_secs", "1.5"},
                 {"model.frame_width", "6"},
                 {"model.frame_attn_width", "4"},
                 {"model.seq_width", "6"},
                 {"model.seq_layers", "1"},
                 {"model.seq_heads", "2"},
                 {"model.seq_ffn_width", "8"},
                 {"model.translator_hidden", "5"},
                 {"model.tap_width", "4"},
                 {"model.regressor_hidden", "6"},
                 {"model.regressor_layers", "1"},
                 {"train.batch_size", "4"},
                 {"train.epochs", "8"},
                 {"train.lr", "0.03"},
                 {"train.seed", std::to_string(seed)},
                 {"synth.seed", std::to_string(seed)}};
    for (const auto& [k, v] : extra) kv[k] = v;
    return ExperimentConfig::from_key_values(kv);
}

}  // namespace cmis::test
