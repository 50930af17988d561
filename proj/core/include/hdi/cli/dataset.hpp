#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hdi/cli/run_config.hpp"

namespace hdi::cli {

/// Axis-aligned box in pixels (top-left corner and size).
struct PixelBox {
    int x = 0, y = 0, w = 0, h = 0;
    bool operator==(const PixelBox&) const = default;
};

struct Scene {
    events::FrameSequence frames;             // quantized to 8 bits
    std::vector<std::vector<PixelBox>> boxes;  // per frame, per object
};

/// Seeded rectangles with integer velocities over a static textured
/// background. Every object stays inside the canvas for the whole scene.
Scene render_scene(const SceneSpec& spec, std::uint64_t seed);

struct Dataset {
    events::FrameSequence frames;
    events::EventStream events;
    std::vector<std::vector<PixelBox>> boxes;
};

/// Writes frames (frames.csv + PPM), events.txt and labels.csv
/// (`frame,t_us,obj,x,y,w,h`); `echo` lines go into every text file.
void write_dataset(const std::filesystem::path& dir, const Scene& scene, const events::EventStream& events,
                   const std::vector<std::string>& echo);
Dataset read_dataset(const std::filesystem::path& dir);

model::Detection normalized(const PixelBox& b, int width, int height);

/// One sample per frame: the frame plus the voxel grid of
/// [t - window_us, t].
std::vector<model::Sample> make_samples(const Dataset& data, const RunConfig& cfg);

}  // namespace hdi::cli
