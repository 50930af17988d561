#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "hdi/energy/energy.hpp"
#include "hdi/events/events.hpp"
#include "hdi/model/config.hpp"
#include "hdi/model/model.hpp"

namespace hdi::cli {

using numcore::Real;

/// Synthetic moving-rectangle scene. The canvas is the model input size.
struct SceneSpec {
    int width = 32;
    int height = 32;
    std::size_t objects = 1;
    Real duration_s = 1.0;
    int frame_rate = 20;
    Real threshold = 0.2;  // event contrast threshold
    int min_size = 8;
    int max_size = 14;
    int max_speed = 2;  // px per frame, per axis

    std::size_t frame_count() const;
    events::Timestamp period_us() const;
    void validate() const;
};

/// Flat key=value run configuration: the model keys plus scene, data,
/// training, evaluation and energy settings.
struct RunConfig {
    model::ModelConfig model = model::ModelConfig::toy();
    SceneSpec scene;

    events::Timestamp window_us = events::kDefaultWindowLength;
    events::Timestamp stride_us = events::kDefaultWindowStride;
    bool normalize_voxels = false;

    std::size_t train_steps = 500;
    std::size_t batch = 4;
    Real lr = 1e-4;
    Real weight_decay = 0.05;
    std::vector<std::uint64_t> milestones;
    Real lr_gamma = 0.1;
    std::uint64_t bn_freeze_step = 0;  // 0 keeps batch statistics throughout

    Real conf_threshold = 0.5;

    energy::EnergyConstants energy;
    std::size_t energy_samples = 1;

    std::string data_dir = "data";

    /// `#` starts a comment; blank lines are ignored; `preset` is applied
    /// before every other key. Unknown or repeated keys raise ConfigError
    /// with the line number.
    static RunConfig parse(const std::string& text, const std::string& source = "config");
    static RunConfig load(const std::filesystem::path& path);

    /// Applies one key (ConfigError when unknown or malformed).
    void set(const std::string& key, const std::string& value);
    std::vector<std::pair<std::string, std::string>> entries() const;
    /// `key=value` lines for artifact headers.
    std::vector<std::string> echo() const;
    void validate() const;

    model::TrainConfig train_config() const;
};

}  // namespace hdi::cli
