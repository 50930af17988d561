#include "hdi/model/config.hpp"

#include <charconv>
#include <sstream>

#include "hdi/error.hpp"

namespace hdi::model {

namespace {

std::string fmt_real(Real v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, ',')) {
        const auto b = cur.find_first_not_of(" \t");
        const auto e = cur.find_last_not_of(" \t");
        out.push_back(b == std::string::npos ? std::string() : cur.substr(b, e - b + 1));
    }
    return out;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

Real parse_real(const std::string& key, const std::string& v) {
    Real out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string kind_name(snn::BlockKind k) { return k == snn::BlockKind::Qka ? "qka" : "ssa"; }

snn::BlockKind parse_kind(const std::string& key, const std::string& v) {
    if (v == "qka") return snn::BlockKind::Qka;
    if (v == "ssa") return snn::BlockKind::Ssa;
    throw ConfigError("config key '" + key + "': expected qka or ssa, got '" + v + "'");
}

template <class F>
std::string join_stages(const std::vector<StageSpec>& stages, F get) {
    std::string out;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (i) out += ",";
        out += get(stages[i]);
    }
    return out;
}

}  // namespace

std::string preset_name(Preset p) { return p == Preset::Paper ? "paper" : "toy"; }

Preset parse_preset(const std::string& s) {
    if (s == "paper") return Preset::Paper;
    if (s == "toy") return Preset::Toy;
    throw ConfigError("unknown preset '" + s + "' (expected paper or toy)");
}

ModelConfig ModelConfig::paper() {
    ModelConfig c;
    c.preset = Preset::Paper;
    c.height = 480;
    c.width = 640;
    c.patch = 4;
    c.window = 8;
    c.steps = 5;
    c.stages = {{96, 3, 64, 4, 2, snn::BlockKind::Qka},
                {192, 6, 128, 8, 2, snn::BlockKind::Qka},
                {384, 12, 256, 16, 6, snn::BlockKind::Ssa},
                {768, 24, 512, 32, 2, snn::BlockKind::Ssa}};
    return c;
}

ModelConfig ModelConfig::toy() {
    ModelConfig c;
    c.preset = Preset::Toy;
    c.height = 32;
    c.width = 32;
    c.patch = 2;
    c.window = 4;
    c.steps = 2;
    c.stages = {{16, 2, 8, 2, 2, snn::BlockKind::Qka},
                {32, 4, 16, 4, 2, snn::BlockKind::Qka},
                {64, 8, 32, 8, 2, snn::BlockKind::Ssa},
                {128, 16, 64, 16, 2, snn::BlockKind::Ssa}};
    return c;
}

std::vector<std::size_t> ModelConfig::depths() const {
    std::vector<std::size_t> d;
    for (const auto& s : stages) d.push_back(s.depth);
    return d;
}

void ModelConfig::validate() const {
    if (stages.empty()) throw ConfigError("model needs at least one stage");
    if (patch == 0 || window == 0 || steps == 0) throw ConfigError("patch, window and steps must be positive");
    if (height == 0 || width == 0) throw ConfigError("input size must be positive");
    if (height % patch != 0 || width % patch != 0) {
        throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) + " is not divisible by patch " +
                          std::to_string(patch));
    }
    if (mlp_ratio == 0) throw ConfigError("mlp_ratio must be positive");
    if (!(ssa_scale > 0.0)) throw ConfigError("ssa_scale must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const auto& s = stages[i];
        const std::string tag = "stage " + std::to_string(i + 1);
        if (s.ann_dim == 0 || s.ann_heads == 0 || s.ann_dim % s.ann_heads != 0) {
            throw ConfigError(tag + ": frame-branch channels must split evenly over heads");
        }
        if (use_snn && (s.snn_dim == 0 || s.snn_heads == 0 || s.snn_dim % s.snn_heads != 0)) {
            throw ConfigError(tag + ": spiking-branch channels must split evenly over heads");
        }
        if (s.depth == 0) throw ConfigError(tag + ": depth must be positive");
        if (i > 0 && s.ann_dim != 2 * stages[i - 1].ann_dim) {
            throw ConfigError(tag + ": frame-branch channels must double at each merge");
        }
    }
    auto sizes = stage_sizes(*this);
    if (use_snn) {
        for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
            if (sizes[i].first % 2 != 0 || sizes[i].second % 2 != 0) {
                throw ConfigError("stage " + std::to_string(i + 1) + " output " + std::to_string(sizes[i].first) + "x" +
                                  std::to_string(sizes[i].second) + " cannot be halved by the spiking merge");
            }
        }
    }
    interaction.validate();
    if (use_snn) interaction_schedule(interaction, depths());
}

std::vector<std::pair<std::size_t, std::size_t>> stage_sizes(const ModelConfig& cfg) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (cfg.patch == 0) throw ConfigError("patch must be positive");
    std::size_t h = cfg.height / cfg.patch, w = cfg.width / cfg.patch;
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        if (i > 0) {
            h = (h + 1) / 2;
            w = (w + 1) / 2;
        }
        out.emplace_back(h, w);
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> ModelConfig::entries() const {
    return {
        {"preset", preset_name(preset)},
        {"height", std::to_string(height)},
        {"width", std::to_string(width)},
        {"patch", std::to_string(patch)},
        {"window", std::to_string(window)},
        {"steps", std::to_string(steps)},
        {"ann_channels", join_stages(stages, [](const StageSpec& s) { return std::to_string(s.ann_dim); })},
        {"ann_heads", join_stages(stages, [](const StageSpec& s) { return std::to_string(s.ann_heads); })},
        {"snn_channels", join_stages(stages, [](const StageSpec& s) { return std::to_string(s.snn_dim); })},
        {"snn_heads", join_stages(stages, [](const StageSpec& s) { return std::to_string(s.snn_heads); })},
        {"depths", join_stages(stages, [](const StageSpec& s) { return std::to_string(s.depth); })},
        {"snn_blocks", join_stages(stages, [](const StageSpec& s) { return kind_name(s.kind); })},
        {"lambda1", fmt_real(lambda1)},
        {"lambda2", fmt_real(lambda2)},
        {"lambda3", fmt_real(interaction.lambda3)},
        {"lambda4", fmt_real(interaction.lambda4)},
        {"ssa_scale", fmt_real(ssa_scale)},
        {"mlp_ratio", std::to_string(mlp_ratio)},
        {"use_snn", fmt_bool(use_snn)},
        {"use_rse", fmt_bool(use_rse)},
        {"interaction", fmt_bool(interaction.enabled)},
        {"interaction_layers", std::to_string(interaction.layers)},
        {"interaction_start_stage", std::to_string(interaction.start_stage)},
        {"kernel_to_snn", interaction::kernel_name(interaction.to_snn)},
        {"kernel_to_ann", interaction::kernel_name(interaction.to_ann)},
        {"dropout", fmt_real(dropout)},
        {"seed", std::to_string(seed)},
    };
}

bool ModelConfig::set(const std::string& key, const std::string& v) {
    const auto list = [&](auto apply) {
        const auto items = split_list(v);
        if (items.empty()) throw ConfigError("config key '" + key + "' needs a comma-separated list");
        if (items.size() != stages.size()) stages.resize(items.size());
        for (std::size_t i = 0; i < items.size(); ++i) apply(stages[i], items[i]);
    };
    if (key == "preset") {
        const auto keep_seed = seed;
        *this = parse_preset(v) == Preset::Paper ? paper() : toy();
        seed = keep_seed;
    } else if (key == "height") {
        height = parse_size(key, v);
    } else if (key == "width") {
        width = parse_size(key, v);
    } else if (key == "patch") {
        patch = parse_size(key, v);
    } else if (key == "window") {
        window = parse_size(key, v);
    } else if (key == "steps") {
        steps = parse_size(key, v);
    } else if (key == "ann_channels") {
        list([&](StageSpec& s, const std::string& x) { s.ann_dim = parse_size(key, x); });
    } else if (key == "ann_heads") {
        list([&](StageSpec& s, const std::string& x) { s.ann_heads = parse_size(key, x); });
    } else if (key == "snn_channels") {
        list([&](StageSpec& s, const std::string& x) { s.snn_dim = parse_size(key, x); });
    } else if (key == "snn_heads") {
        list([&](StageSpec& s, const std::string& x) { s.snn_heads = parse_size(key, x); });
    } else if (key == "depths") {
        list([&](StageSpec& s, const std::string& x) { s.depth = parse_size(key, x); });
    } else if (key == "snn_blocks") {
        list([&](StageSpec& s, const std::string& x) { s.kind = parse_kind(key, x); });
    } else if (key == "lambda1") {
        lambda1 = parse_real(key, v);
    } else if (key == "lambda2") {
        lambda2 = parse_real(key, v);
    } else if (key == "lambda3") {
        interaction.lambda3 = parse_real(key, v);
    } else if (key == "lambda4") {
        interaction.lambda4 = parse_real(key, v);
    } else if (key == "ssa_scale") {
        ssa_scale = parse_real(key, v);
    } else if (key == "mlp_ratio") {
        mlp_ratio = parse_size(key, v);
    } else if (key == "use_snn") {
        use_snn = parse_bool(key, v);
    } else if (key == "use_rse") {
        use_rse = parse_bool(key, v);
    } else if (key == "interaction") {
        interaction.enabled = parse_bool(key, v);
    } else if (key == "interaction_layers") {
        interaction.layers = parse_size(key, v);
    } else if (key == "interaction_start_stage") {
        interaction.start_stage = parse_size(key, v);
    } else if (key == "kernel_to_snn") {
        interaction.to_snn = interaction::parse_kernel(v);
    } else if (key == "kernel_to_ann") {
        interaction.to_ann = interaction::parse_kernel(v);
    } else if (key == "dropout") {
        dropout = parse_real(key, v);
    } else if (key == "seed") {
        seed = parse_u64(key, v);
    } else {
        return false;
    }
    return true;
}

std::string ModelConfig::architecture_text() const {
    std::string out;
    for (const auto& [k, v] : entries()) {
        if (k == "seed" || k == "dropout") continue;
        out += k + "=" + v + "\n";
    }
    return out;
}

}  // namespace hdi::model
