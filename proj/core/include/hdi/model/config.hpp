#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hdi/interaction/interaction.hpp"
#include "hdi/snn/spiking.hpp"

namespace hdi::model {

using numcore::Real;

enum class Preset { Paper, Toy };

struct StageSpec {
    std::size_t ann_dim = 0;
    std::size_t ann_heads = 1;
    std::size_t snn_dim = 0;
    std::size_t snn_heads = 1;
    std::size_t depth = 2;
    snn::BlockKind kind = snn::BlockKind::Ssa;
};

struct ModelConfig {
    Preset preset = Preset::Toy;
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t patch = 2;
    std::size_t window = 4;
    std::size_t steps = 2;  // SNN timesteps = voxel bins
    std::vector<StageSpec> stages;
    Real lambda1 = 1.0;
    Real lambda2 = 1.0;
    Real ssa_scale = 0.125;
    std::size_t mlp_ratio = 4;
    Real dropout = 0.0;
    bool use_snn = true;
    bool use_rse = true;
    interaction::InteractionConfig interaction;
    std::uint64_t seed = 0;

    static ModelConfig paper();
    static ModelConfig toy();

    /// Throws ConfigError on any inconsistency (head split, divisibility,
    /// schedule length).
    void validate() const;
    std::vector<std::size_t> depths() const;

    /// Key/value view used for config files and provenance echoes.
    std::vector<std::pair<std::string, std::string>> entries() const;
    /// Applies one key; false when the key is not a model key. Malformed
    /// values throw ConfigError.
    bool set(const std::string& key, const std::string& value);
    /// Entries that determine the parameter layout and the forward function
    /// (everything but seed and dropout), one `key=value` per line.
    std::string architecture_text() const;
};

std::string preset_name(Preset p);
Preset parse_preset(const std::string& s);

/// (height, width) of each stage's output map.
std::vector<std::pair<std::size_t, std::size_t>> stage_sizes(const ModelConfig& cfg);

}  // namespace hdi::model
