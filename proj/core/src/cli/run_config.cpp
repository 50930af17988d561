#include "hdi/cli/run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "hdi/error.hpp"

namespace hdi::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v, const char* what) {
    T out{};
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw ConfigError("config key '" + key + "': expected " + what + ", got '" + v + "'");
    }
    return out;
}

std::size_t to_size(const std::string& k, const std::string& v) { return parse_number<std::size_t>(k, v, "a non-negative integer"); }
int to_int(const std::string& k, const std::string& v) { return parse_number<int>(k, v, "an integer"); }
std::int64_t to_i64(const std::string& k, const std::string& v) { return parse_number<std::int64_t>(k, v, "an integer"); }
Real to_real(const std::string& k, const std::string& v) { return parse_number<Real>(k, v, "a number"); }

bool to_bool(const std::string& k, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("config key '" + k + "': expected true/false, got '" + v + "'");
}

std::string fmt(Real v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

std::size_t SceneSpec::frame_count() const {
    return static_cast<std::size_t>(std::llround(duration_s * frame_rate));
}

events::Timestamp SceneSpec::period_us() const { return events::kMicrosPerSecond / frame_rate; }

void SceneSpec::validate() const {
    if (width <= 0 || height <= 0) throw ConfigError("scene canvas must be positive");
    if (frame_rate <= 0 || events::kMicrosPerSecond % frame_rate != 0) {
        throw ConfigError("scene_frame_rate must divide one second into whole microseconds");
    }
    if (!(duration_s > 0.0) || frame_count() < 1) throw ConfigError("scene_duration_s must cover at least one frame");
    if (!(threshold > 0.0)) throw ConfigError("scene_threshold must be positive");
    if (min_size < 1 || max_size < min_size) throw ConfigError("scene sizes need 1 <= scene_min_size <= scene_max_size");
    if (max_size > width || max_size > height) throw ConfigError("scene_max_size exceeds the canvas");
    if (max_speed < 0) throw ConfigError("scene_max_speed must be non-negative");
}

void RunConfig::set(const std::string& key, const std::string& v) {
    if (model.set(key, v)) {
        scene.width = static_cast<int>(model.width);
        scene.height = static_cast<int>(model.height);
        return;
    }
    if (key == "scene_objects") scene.objects = to_size(key, v);
    else if (key == "scene_duration_s") scene.duration_s = to_real(key, v);
    else if (key == "scene_frame_rate") scene.frame_rate = to_int(key, v);
    else if (key == "scene_threshold") scene.threshold = to_real(key, v);
    else if (key == "scene_min_size") scene.min_size = to_int(key, v);
    else if (key == "scene_max_size") scene.max_size = to_int(key, v);
    else if (key == "scene_max_speed") scene.max_speed = to_int(key, v);
    else if (key == "window_us") window_us = to_i64(key, v);
    else if (key == "stride_us") stride_us = to_i64(key, v);
    else if (key == "normalize_voxels") normalize_voxels = to_bool(key, v);
    else if (key == "train_steps") train_steps = to_size(key, v);
    else if (key == "batch") batch = to_size(key, v);
    else if (key == "lr") lr = to_real(key, v);
    else if (key == "weight_decay") weight_decay = to_real(key, v);
    else if (key == "lr_gamma") lr_gamma = to_real(key, v);
    else if (key == "bn_freeze_step") bn_freeze_step = parse_number<std::uint64_t>(key, v, "a step count");
    else if (key == "lr_milestones") {
        milestones.clear();
        std::istringstream is(v);
        std::string item;
        while (std::getline(is, item, ',')) {
            item = trim(item);
            if (!item.empty()) milestones.push_back(parse_number<std::uint64_t>(key, item, "a step count"));
        }
    } else if (key == "conf_threshold") conf_threshold = to_real(key, v);
    else if (key == "e_ac") energy.e_ac = to_real(key, v);
    else if (key == "e_mac") energy.e_mac = to_real(key, v);
    else if (key == "energy_samples") energy_samples = to_size(key, v);
    else if (key == "data_dir") data_dir = v;
    else throw ConfigError("unknown config key '" + key + "'");
}

RunConfig RunConfig::parse(const std::string& text, const std::string& source) {
    struct Line {
        std::size_t no;
        std::string key, value;
    };
    std::vector<Line> lines;
    std::istringstream is(text);
    std::string raw;
    std::size_t no = 0;
    std::set<std::string> seen;
    while (std::getline(is, raw)) {
        ++no;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = source + ":" + std::to_string(no) + ": ";
        if (eq == std::string::npos) throw ConfigError(where + "expected key=value");
        Line l{no, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
        if (l.key.empty()) throw ConfigError(where + "empty key");
        if (!seen.insert(l.key).second) throw ConfigError(where + "key '" + l.key + "' given twice");
        lines.push_back(std::move(l));
    }
    RunConfig cfg;
    auto apply = [&](const Line& l) {
        try {
            cfg.set(l.key, l.value);
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(l.no) + ": " + e.what());
        }
    };
    for (const auto& l : lines) {
        if (l.key == "preset") apply(l);
    }
    for (const auto& l : lines) {
        if (l.key != "preset") apply(l);
    }
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path.string());
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
    auto out = model.entries();
    std::string ms;
    for (std::size_t i = 0; i < milestones.size(); ++i) ms += (i ? "," : "") + std::to_string(milestones[i]);
    const std::vector<std::pair<std::string, std::string>> run = {
        {"scene_objects", std::to_string(scene.objects)},
        {"scene_duration_s", fmt(scene.duration_s)},
        {"scene_frame_rate", std::to_string(scene.frame_rate)},
        {"scene_threshold", fmt(scene.threshold)},
        {"scene_min_size", std::to_string(scene.min_size)},
        {"scene_max_size", std::to_string(scene.max_size)},
        {"scene_max_speed", std::to_string(scene.max_speed)},
        {"window_us", std::to_string(window_us)},
        {"stride_us", std::to_string(stride_us)},
        {"normalize_voxels", normalize_voxels ? "true" : "false"},
        {"train_steps", std::to_string(train_steps)},
        {"batch", std::to_string(batch)},
        {"lr", fmt(lr)},
        {"weight_decay", fmt(weight_decay)},
        {"lr_milestones", ms},
        {"lr_gamma", fmt(lr_gamma)},
        {"bn_freeze_step", std::to_string(bn_freeze_step)},
        {"conf_threshold", fmt(conf_threshold)},
        {"e_ac", fmt(energy.e_ac)},
        {"e_mac", fmt(energy.e_mac)},
        {"energy_samples", std::to_string(energy_samples)},
        {"data_dir", data_dir},
    };
    out.insert(out.end(), run.begin(), run.end());
    return out;
}

std::vector<std::string> RunConfig::echo() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries()) out.push_back(k + "=" + v);
    return out;
}

void RunConfig::validate() const {
    model.validate();
    scene.validate();
    if (window_us <= 0 || stride_us <= 0) throw ConfigError("window_us and stride_us must be positive");
    if (batch == 0) throw ConfigError("batch must be at least 1");
    if (!(lr > 0.0) || weight_decay < 0.0) throw ConfigError("lr must be positive and weight_decay non-negative");
    if (!(lr_gamma > 0.0)) throw ConfigError("lr_gamma must be positive");
    if (conf_threshold < 0.0 || conf_threshold > 1.0) throw ConfigError("conf_threshold must lie in [0, 1]");
    energy.validate();
    if (energy_samples == 0) throw ConfigError("energy_samples must be at least 1");
}

model::TrainConfig RunConfig::train_config() const {
    model::TrainConfig t;
    t.optimizer.lr = lr;
    t.optimizer.weight_decay = weight_decay;
    t.milestones = milestones;
    t.gamma = lr_gamma;
    if (bn_freeze_step > 0) t.freeze_norms_at = bn_freeze_step;
    return t;
}

}  // namespace hdi::cli
