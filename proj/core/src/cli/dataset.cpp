#include "hdi/cli/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "hdi/error.hpp"

namespace hdi::cli {

namespace {

struct Mover {
    PixelBox box;
    int vx = 0, vy = 0;
    double rgb[3] = {1, 1, 1};
};

int uniform(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Start range along one axis so that [p, p + size) stays in [0, extent)
// for every frame.
std::pair<int, int> start_range(int extent, int size, int v, int last) {
    const int travel = v * last;
    return {std::max(0, -travel), extent - size - std::max(0, travel)};
}

}  // namespace

Scene render_scene(const SceneSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    const int W = spec.width, H = spec.height;
    const auto n = spec.frame_count();
    const int last = static_cast<int>(n) - 1;

    // Static background: smooth stripes plus fixed per-pixel grain.
    std::vector<double> bg(static_cast<std::size_t>(W) * H * 3);
    const double fx = std::uniform_real_distribution<double>(0.2, 0.6)(rng);
    const double fy = std::uniform_real_distribution<double>(0.2, 0.6)(rng);
    std::uniform_real_distribution<double> grain(-0.04, 0.04);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const double base = 0.3 + 0.08 * std::sin(fx * x) * std::cos(fy * y);
            for (int c = 0; c < 3; ++c) bg[(static_cast<std::size_t>(y) * W + x) * 3 + c] = base + grain(rng);
        }
    }

    std::vector<Mover> movers(spec.objects);
    for (auto& m : movers) {
        m.box.w = uniform(rng, spec.min_size, spec.max_size);
        m.box.h = uniform(rng, spec.min_size, spec.max_size);
        m.vx = uniform(rng, -spec.max_speed, spec.max_speed);
        m.vy = uniform(rng, -spec.max_speed, spec.max_speed);
        // Slow down until the path fits.
        while (start_range(W, m.box.w, m.vx, last).first > start_range(W, m.box.w, m.vx, last).second) {
            m.vx -= (m.vx > 0) - (m.vx < 0);
        }
        while (start_range(H, m.box.h, m.vy, last).first > start_range(H, m.box.h, m.vy, last).second) {
            m.vy -= (m.vy > 0) - (m.vy < 0);
        }
        const auto rx = start_range(W, m.box.w, m.vx, last);
        const auto ry = start_range(H, m.box.h, m.vy, last);
        m.box.x = uniform(rng, rx.first, rx.second);
        m.box.y = uniform(rng, ry.first, ry.second);
        for (auto& c : m.rgb) c = std::uniform_real_distribution<double>(0.75, 1.0)(rng);
    }

    Scene scene;
    for (std::size_t f = 0; f < n; ++f) {
        events::Frame frame;
        frame.t = static_cast<events::Timestamp>(f) * spec.period_us();
        frame.width = W;
        frame.height = H;
        frame.rgb = bg;
        std::vector<PixelBox> boxes;
        for (const auto& m : movers) {
            PixelBox b = m.box;
            b.x += m.vx * static_cast<int>(f);
            b.y += m.vy * static_cast<int>(f);
            for (int y = b.y; y < b.y + b.h; ++y) {
                for (int x = b.x; x < b.x + b.w; ++x) {
                    for (int c = 0; c < 3; ++c) frame.rgb[(static_cast<std::size_t>(y) * W + x) * 3 + c] = m.rgb[c];
                }
            }
            boxes.push_back(b);
        }
        events::quantize_8bit(frame);
        scene.frames.frames.push_back(std::move(frame));
        scene.boxes.push_back(std::move(boxes));
    }
    return scene;
}

void write_dataset(const std::filesystem::path& dir, const Scene& scene, const events::EventStream& events,
                   const std::vector<std::string>& echo) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    events::write_frames(dir, scene.frames, echo);
    {
        std::ofstream os(dir / "events.txt", std::ios::binary);
        if (!os) throw IoError("cannot write " + (dir / "events.txt").string());
        for (const auto& l : echo) os << "# " << l << '\n';
        events::write_events(os, events);
        if (!os) throw IoError("failed writing events.txt");
    }
    std::ofstream os(dir / "labels.csv", std::ios::binary);
    if (!os) throw IoError("cannot write " + (dir / "labels.csv").string());
    for (const auto& l : echo) os << "# " << l << '\n';
    os << "frame,t_us,obj,x,y,w,h\n";
    for (std::size_t f = 0; f < scene.boxes.size(); ++f) {
        for (std::size_t o = 0; o < scene.boxes[f].size(); ++o) {
            const auto& b = scene.boxes[f][o];
            os << f << ',' << scene.frames.frames[f].t << ',' << o << ',' << b.x << ',' << b.y << ',' << b.w << ','
               << b.h << '\n';
        }
    }
    if (!os) throw IoError("failed writing labels.csv");
}

Dataset read_dataset(const std::filesystem::path& dir) {
    Dataset d;
    d.frames = events::read_frames(dir / "frames.csv");
    d.frames.validate();
    d.events = events::read_events(dir / "events.txt");
    d.boxes.resize(d.frames.frames.size());
    std::ifstream is(dir / "labels.csv");
    if (!is) throw IoError("cannot open " + (dir / "labels.csv").string());
    std::string line;
    std::size_t no = 0;
    while (std::getline(is, line)) {
        ++no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#' || line.rfind("frame,", 0) == 0) continue;
        std::istringstream ls(line);
        std::string field;
        std::vector<long long> v;
        while (std::getline(ls, field, ',')) {
            try {
                std::size_t used = 0;
                v.push_back(std::stoll(field, &used));
                if (used != field.size()) throw std::invalid_argument(field);
            } catch (const std::exception&) {
                throw ParseError("labels.csv line " + std::to_string(no) + ": malformed field '" + field + "'");
            }
        }
        if (v.size() != 7) throw ParseError("labels.csv line " + std::to_string(no) + ": expected 7 fields");
        if (v[0] < 0 || static_cast<std::size_t>(v[0]) >= d.boxes.size()) {
            throw ParseError("labels.csv line " + std::to_string(no) + ": frame index out of range");
        }
        d.boxes[static_cast<std::size_t>(v[0])].push_back(
            {static_cast<int>(v[3]), static_cast<int>(v[4]), static_cast<int>(v[5]), static_cast<int>(v[6])});
    }
    return d;
}

model::Detection normalized(const PixelBox& b, int width, int height) {
    model::Detection d;
    d.cx = (b.x + b.w / 2.0) / width;
    d.cy = (b.y + b.h / 2.0) / height;
    d.w = static_cast<Real>(b.w) / width;
    d.h = static_cast<Real>(b.h) / height;
    d.confidence = 1.0;
    return d;
}

std::vector<model::Sample> make_samples(const Dataset& data, const RunConfig& cfg) {
    const auto& m = cfg.model;
    if (data.frames.frames.empty()) throw ConfigError("dataset has no frames");
    const auto& f0 = data.frames.frames.front();
    if (static_cast<std::size_t>(f0.width) != m.width || static_cast<std::size_t>(f0.height) != m.height) {
        throw ConfigError("frames are " + std::to_string(f0.width) + "x" + std::to_string(f0.height) +
                          " but the model expects " + std::to_string(m.width) + "x" + std::to_string(m.height));
    }
    const auto [gh, gw] = model::stage_sizes(m).back();
    std::vector<model::Sample> out;
    for (std::size_t i = 0; i < data.frames.frames.size(); ++i) {
        const auto& fr = data.frames.frames[i];
        model::Sample s;
        s.frame = model::frame_tensor(fr);
        const auto grid = events::voxelize(data.events, {fr.t - cfg.window_us, fr.t}, static_cast<int>(m.steps),
                                           cfg.normalize_voxels);
        s.voxels = model::voxel_tensor(grid);
        for (const auto& b : data.boxes[i]) s.boxes.push_back(normalized(b, f0.width, f0.height));
        s.target = model::encode_targets(s.boxes, gh, gw);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace hdi::cli
