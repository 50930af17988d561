#include "hdi/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hdi/error.hpp"

namespace hdi::model {

using namespace numcore;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
public:
    explicit Writer(const std::filesystem::path& path) : os_(path, std::ios::binary), path_(path) {
        if (!os_) throw IoError("cannot open " + path.string() + " for writing");
    }
    void bytes(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    template <class T>
    void pod(T v) {
        bytes(&v, sizeof v);
    }
    void str32(const std::string& s) {
        pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void floats(std::span<const Real> v) {
        std::vector<float> f(v.begin(), v.end());
        bytes(f.data(), f.size() * sizeof(float));
    }
    void tensor(const std::string& name, const Tensor& t) {
        str32(name);
        pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) pod<std::uint64_t>(d);
        floats(t.data());
    }
    void finish() {
        os_.flush();
        if (!os_) throw IoError("write failed for " + path_.string());
    }

private:
    std::ofstream os_;
    std::filesystem::path path_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : is_(path, std::ios::binary), path_(path) {
        if (!is_) throw IoError("cannot open checkpoint " + path.string());
    }
    void bytes(void* p, std::size_t n) {
        is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (!is_) throw ParseError("truncated checkpoint " + path_.string());
    }
    template <class T>
    T pod() {
        T v{};
        bytes(&v, sizeof v);
        return v;
    }
    std::string str32() {
        const auto n = pod<std::uint32_t>();
        if (n > (1u << 20)) throw ParseError("corrupt name length in " + path_.string());
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    void floats(std::span<Real> out) {
        std::vector<float> f(out.size());
        bytes(f.data(), f.size() * sizeof(float));
        for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i];
    }
    Shape shape() {
        const auto rank = pod<std::uint32_t>();
        if (rank > 16) throw ParseError("corrupt tensor rank in " + path_.string());
        Shape s(rank);
        for (auto& d : s) d = static_cast<std::size_t>(pod<std::uint64_t>());
        return s;
    }
    std::string header() {
        char magic[8];
        bytes(magic, 8);
        if (std::memcmp(magic, kCheckpointMagic, 8) != 0) throw ParseError(path_.string() + " is not a checkpoint");
        const auto version = pod<std::uint32_t>();
        if (version != kCheckpointVersion) {
            throw VersionError("checkpoint format version " + std::to_string(version) + ", expected " +
                               std::to_string(kCheckpointVersion));
        }
        const auto len = pod<std::uint64_t>();
        if (len > (1u << 24)) throw ParseError("corrupt config length in " + path_.string());
        std::string text(len, '\0');
        bytes(text.data(), len);
        return text;
    }

private:
    std::ifstream is_;
    std::filesystem::path path_;
};

std::string full_text(const ModelConfig& cfg) {
    std::string out;
    for (const auto& [k, v] : cfg.entries()) out += k + "=" + v + "\n";
    return out;
}

std::string architecture_only(const std::string& text) {
    std::istringstream is(text);
    std::string line, out;
    while (std::getline(is, line)) {
        if (line.rfind("seed=", 0) == 0 || line.rfind("dropout=", 0) == 0) continue;
        out += line + "\n";
    }
    return out;
}

void load_into(Reader& r, const Tensor& dst, const std::string& name) {
    const Shape s = r.shape();
    if (s != dst.shape()) {
        throw VersionError("checkpoint tensor " + name + " has shape " + shape_str(s) + ", model expects " +
                           shape_str(dst.shape()));
    }
    Tensor t = dst;
    r.floats(t.mutable_data());
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
    const auto& p = model.params();
    Writer w(path);
    w.bytes(kCheckpointMagic, 8);
    w.pod<std::uint32_t>(kCheckpointVersion);
    const std::string text = full_text(model.config());
    w.pod<std::uint64_t>(text.size());
    w.bytes(text.data(), text.size());
    w.pod<std::uint64_t>(p.names().size());
    for (const auto& n : p.names()) w.tensor(n, p.get(n));
    w.pod<std::uint64_t>(p.buffer_names().size());
    for (const auto& n : p.buffer_names()) w.tensor(n, p.buffer(n));
    const auto& m = p.first_moments();
    const auto& v = p.second_moments();
    std::vector<std::string> with_moments;
    for (const auto& n : p.names()) {
        if (m.count(n) && v.count(n) && !m.at(n).empty()) with_moments.push_back(n);
    }
    w.pod<std::uint64_t>(with_moments.size());
    for (const auto& n : with_moments) {
        w.str32(n);
        w.pod<std::uint64_t>(m.at(n).size());
        w.floats(m.at(n));
        w.floats(v.at(n));
    }
    w.pod<std::uint64_t>(p.step());
    w.finish();
}

std::string read_checkpoint_config(const std::filesystem::path& path) {
    Reader r(path);
    return r.header();
}

void load_checkpoint(const std::filesystem::path& path, Model& model) {
    Reader r(path);
    const std::string text = r.header();
    if (architecture_only(text) != model.config().architecture_text()) {
        throw VersionError("checkpoint " + path.string() + " was written for a different model configuration");
    }
    auto& p = model.params();
    const auto np = r.pod<std::uint64_t>();
    if (np != p.names().size()) throw VersionError("checkpoint parameter count differs from the model");
    for (std::uint64_t i = 0; i < np; ++i) {
        const std::string name = r.str32();
        if (!p.contains(name)) throw VersionError("checkpoint parameter " + name + " is unknown to the model");
        load_into(r, p.get(name), name);
    }
    const auto nb = r.pod<std::uint64_t>();
    if (nb != p.buffer_names().size()) throw VersionError("checkpoint buffer count differs from the model");
    for (std::uint64_t i = 0; i < nb; ++i) {
        const std::string name = r.str32();
        load_into(r, p.buffer(name), name);
    }
    const auto nm = r.pod<std::uint64_t>();
    for (std::uint64_t i = 0; i < nm; ++i) {
        const std::string name = r.str32();
        const auto n = r.pod<std::uint64_t>();
        if (!p.contains(name) || p.get(name).numel() != n) throw VersionError("checkpoint moments for " + name + " do not fit");
        auto& m = p.first_moment(name);
        auto& v = p.second_moment(name);
        r.floats(m);
        r.floats(v);
    }
    p.set_step(r.pod<std::uint64_t>());
}

}  // namespace hdi::model
