#include "hdi/events/events.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "hdi/error.hpp"

namespace hdi::events {

namespace {
constexpr double kLogFloor = 1e-3;
// Absorbs rounding in the accumulated log change so that a change of exactly
// k thresholds yields k events.
constexpr double kCrossingSlack = 1e-9;
}  // namespace

Interval EventStream::span() const {
    if (declared) return *declared;
    if (events.empty()) return {0, 0};
    return {events.front().t, events.back().t};
}

void EventStream::validate() const {
    if (sensor.width <= 0 || sensor.height <= 0) throw DomainError("sensor size must be positive");
    Timestamp last = events.empty() ? 0 : events.front().t;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        if (e.x < 0 || e.y < 0 || e.x >= sensor.width || e.y >= sensor.height) {
            throw DomainError("event " + std::to_string(i) + " lies outside the sensor");
        }
        if (e.p != 1 && e.p != -1) throw DomainError("event " + std::to_string(i) + " has polarity " + std::to_string(e.p));
        if (e.t < last) throw OrderingError("event " + std::to_string(i) + " breaks timestamp order");
        last = e.t;
    }
}

double Frame::luminance(int x, int y) const {
    const std::size_t k = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
    return (rgb[k] + rgb[k + 1] + rgb[k + 2]) / 3.0;
}

Timestamp FrameSequence::period() const {
    if (frames.size() < 2) throw DomainError("frame sequence needs at least two frames for a period");
    const Timestamp p = frames[1].t - frames[0].t;
    for (std::size_t i = 1; i < frames.size(); ++i) {
        if (frames[i].t - frames[i - 1].t != p) throw DomainError("frame timestamps are not uniformly spaced");
    }
    if (p <= 0) throw OrderingError("frame timestamps must increase");
    return p;
}

void FrameSequence::validate() const {
    if (frames.empty()) return;
    const int w = frames.front().width, h = frames.front().height;
    for (const auto& f : frames) {
        if (f.width != w || f.height != h) throw DomainError("frames differ in size");
        if (f.rgb.size() != static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3) {
            throw DomainError("frame data does not match its size");
        }
    }
    if (frames.size() >= 2) (void)period();
}

double VoxelGrid::at(int t, int channel, int y, int x) const {
    const auto idx = ((static_cast<std::size_t>(t) * 2 + static_cast<std::size_t>(channel)) * static_cast<std::size_t>(height) +
                      static_cast<std::size_t>(y)) *
                         static_cast<std::size_t>(width) +
                     static_cast<std::size_t>(x);
    return values[idx];
}

double VoxelGrid::total() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
}

Crossings threshold_crossings(double residual, double delta, double threshold) {
    if (!(threshold > 0.0)) throw ParameterError("event threshold must be positive");
    Crossings c;
    const double acc = residual + delta;
    const int count = static_cast<int>(std::floor(std::fabs(acc) / threshold + kCrossingSlack));
    c.count = count;
    c.polarity = count == 0 ? 0 : (acc > 0 ? 1 : -1);
    c.residual = acc - c.polarity * count * threshold;
    c.fractions.reserve(static_cast<std::size_t>(count));
    for (int j = 1; j <= count; ++j) {
        const double level = c.polarity * j * threshold;
        double f = delta != 0.0 ? (level - residual) / delta : 1.0;
        c.fractions.push_back(std::clamp(f, 0.0, 1.0));
    }
    return c;
}

EventStream simulate_events_log(const std::vector<std::vector<double>>& log_frames,
                                const std::vector<Timestamp>& times, SensorSize sensor, double threshold) {
    if (!(threshold > 0.0)) throw ParameterError("event threshold must be positive");
    if (log_frames.size() < 2) throw DomainError("event simulation needs at least two frames");
    if (times.size() != log_frames.size()) throw DomainError("one timestamp per frame required");
    const std::size_t pixels = static_cast<std::size_t>(sensor.width) * static_cast<std::size_t>(sensor.height);
    for (const auto& f : log_frames) {
        if (f.size() != pixels) throw DomainError("log frame does not match sensor size");
    }
    EventStream out;
    out.sensor = sensor;
    out.threshold = threshold;
    out.declared = Interval{times.front(), times.back()};
    std::vector<double> residual(pixels, 0.0);
    for (std::size_t k = 1; k < log_frames.size(); ++k) {
        const Timestamp t0 = times[k - 1];
        const Timestamp dt = times[k] - t0;
        if (dt <= 0) throw OrderingError("frame timestamps must increase");
        for (std::size_t px = 0; px < pixels; ++px) {
            const double delta = log_frames[k][px] - log_frames[k - 1][px];
            const Crossings c = threshold_crossings(residual[px], delta, threshold);
            residual[px] = c.residual;
            for (double f : c.fractions) {
                Event e;
                e.t = t0 + static_cast<Timestamp>(std::floor(f * static_cast<double>(dt)));
                e.x = static_cast<int>(px % static_cast<std::size_t>(sensor.width));
                e.y = static_cast<int>(px / static_cast<std::size_t>(sensor.width));
                e.p = c.polarity;
                out.events.push_back(e);
            }
        }
    }
    std::stable_sort(out.events.begin(), out.events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
    return out;
}

EventStream simulate_events(const FrameSequence& frames, double threshold) {
    if (!(threshold > 0.0)) throw ParameterError("event threshold must be positive");
    if (frames.frames.size() < 2) throw DomainError("event simulation needs at least two frames");
    frames.validate();
    const int w = frames.frames.front().width, h = frames.frames.front().height;
    std::vector<std::vector<double>> logs;
    std::vector<Timestamp> times;
    for (const auto& f : frames.frames) {
        std::vector<double> l(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                l[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)] =
                    std::log(std::max(f.luminance(x, y), kLogFloor));
        logs.push_back(std::move(l));
        times.push_back(f.t);
    }
    return simulate_events_log(logs, times, {w, h}, threshold);
}

VoxelGrid voxelize(const EventStream& stream, Interval interval, int bins, bool normalize) {
    if (bins < 1) throw ParameterError("voxel grid needs at least one bin");
    if (interval.length() <= 0) throw ParameterError("voxel interval must be nonempty");
    VoxelGrid g;
    g.bins = bins;
    g.height = stream.sensor.height;
    g.width = stream.sensor.width;
    g.interval = interval;
    const std::size_t plane = static_cast<std::size_t>(g.height) * static_cast<std::size_t>(g.width);
    g.values.assign(static_cast<std::size_t>(bins) * 2 * plane, 0.0);
    const Timestamp len = interval.length();
    for (const auto& e : stream.events) {
        if (e.t < interval.begin || e.t > interval.end) {
            ++g.ignored;
            continue;
        }
        auto bin = static_cast<std::int64_t>(bins) * (e.t - interval.begin) / len;
        bin = std::min<std::int64_t>(bin, bins - 1);
        const std::size_t ch = e.p > 0 ? 0 : 1;
        const std::size_t idx = (static_cast<std::size_t>(bin) * 2 + ch) * plane +
                                static_cast<std::size_t>(e.y) * static_cast<std::size_t>(g.width) +
                                static_cast<std::size_t>(e.x);
        g.values[idx] += 1.0;
    }
    if (normalize) {
        const double mx = g.values.empty() ? 0.0 : *std::max_element(g.values.begin(), g.values.end());
        if (mx > 0.0)
            for (auto& v : g.values) v /= mx;
    }
    return g;
}

std::vector<Window> sliding_windows(Interval span, Timestamp length, Timestamp stride) {
    if (stride <= 0) throw ParameterError("window stride must be positive");
    if (length < stride) throw ParameterError("window length must be at least the stride");
    std::vector<Window> out;
    for (Timestamp start = span.begin; start + length <= span.end; start += stride) {
        out.push_back({start, {start, start + length}});
    }
    return out;
}

std::vector<Window> sliding_windows(const EventStream& stream, Timestamp length, Timestamp stride) {
    return sliding_windows(stream.span(), length, stride);
}

void write_events(std::ostream& os, const EventStream& stream) {
    os << stream.sensor.width << ',' << stream.sensor.height << '\n';
    for (const auto& e : stream.events) os << e.t << ',' << e.x << ',' << e.y << ',' << e.p << '\n';
}

void write_events(const std::filesystem::path& path, const EventStream& stream) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    write_events(os, stream);
    if (!os) throw IoError("failed writing " + path.string());
}

namespace {

std::vector<std::int64_t> parse_ints(const std::string& line, std::size_t expected, std::size_t line_no) {
    std::vector<std::int64_t> out;
    std::size_t pos = 0;
    while (pos <= line.size()) {
        const std::size_t comma = line.find(',', pos);
        const std::string field = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        std::size_t used = 0;
        std::int64_t v = 0;
        try {
            v = std::stoll(field, &used);
        } catch (const std::exception&) {
            throw ParseError("line " + std::to_string(line_no) + ": malformed field '" + field + "'");
        }
        if (used != field.size()) throw ParseError("line " + std::to_string(line_no) + ": malformed field '" + field + "'");
        out.push_back(v);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.size() != expected) {
        throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(expected) + " fields");
    }
    return out;
}

}  // namespace

EventStream read_events(std::istream& is) {
    EventStream s;
    std::string line;
    std::size_t line_no = 0;
    for (;;) {
        if (!std::getline(is, line)) throw ParseError("line " + std::to_string(line_no + 1) + ": missing 'w,h' header");
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] != '#') break;
    }
    const auto hdr = parse_ints(line, 2, line_no);
    if (hdr[0] <= 0 || hdr[1] <= 0) throw ParseError("line 1: sensor size must be positive");
    s.sensor = {static_cast<int>(hdr[0]), static_cast<int>(hdr[1])};
    Timestamp last = std::numeric_limits<Timestamp>::min();
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto f = parse_ints(line, 4, line_no);
        Event e{f[0], static_cast<int>(f[1]), static_cast<int>(f[2]), static_cast<int>(f[3])};
        if (e.p != 1 && e.p != -1) {
            throw ParseError("line " + std::to_string(line_no) + ": polarity must be -1 or 1, got " + std::to_string(e.p));
        }
        if (e.x < 0 || e.y < 0 || e.x >= s.sensor.width || e.y >= s.sensor.height) {
            throw ParseError("line " + std::to_string(line_no) + ": coordinates outside the sensor");
        }
        if (e.t < last) throw OrderingError("line " + std::to_string(line_no) + ": timestamp regression");
        last = e.t;
        s.events.push_back(e);
    }
    return s;
}

EventStream read_events(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return read_events(is);
}

void quantize_8bit(Frame& frame) {
    for (auto& v : frame.rgb) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

void write_ppm(const std::filesystem::path& path, const Frame& frame) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    os << "P6\n" << frame.width << ' ' << frame.height << "\n255\n";
    std::string bytes(frame.rgb.size(), '\0');
    for (std::size_t i = 0; i < frame.rgb.size(); ++i) {
        bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(frame.rgb[i], 0.0, 1.0) * 255.0)));
    }
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("failed writing " + path.string());
}

namespace {
std::string next_token(std::istream& is) {
    std::string tok;
    char c = 0;
    while (is.get(c)) {
        if (c == '#') {
            std::string rest;
            std::getline(is, rest);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(c);
    }
    return tok;
}
}  // namespace

Frame read_ppm(const std::filesystem::path& path, Timestamp t) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    if (next_token(is) != "P6") throw ParseError(path.string() + ": not a binary PPM (P6)");
    Frame f;
    f.t = t;
    try {
        f.width = std::stoi(next_token(is));
        f.height = std::stoi(next_token(is));
        if (std::stoi(next_token(is)) != 255) throw ParseError(path.string() + ": only 8-bit PPM supported");
    } catch (const std::invalid_argument&) {
        throw ParseError(path.string() + ": malformed PPM header");
    }
    const std::size_t n = static_cast<std::size_t>(f.width) * static_cast<std::size_t>(f.height) * 3;
    std::string bytes(n, '\0');
    is.read(bytes.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n) throw ParseError(path.string() + ": truncated pixel data");
    f.rgb.resize(n);
    for (std::size_t i = 0; i < n; ++i) f.rgb[i] = static_cast<unsigned char>(bytes[i]) / 255.0;
    return f;
}

std::filesystem::path write_frames(const std::filesystem::path& dir, const FrameSequence& frames,
                                   const std::vector<std::string>& comments) {
    std::filesystem::create_directories(dir);
    const auto index = dir / "frames.csv";
    std::ofstream os(index);
    if (!os) throw IoError("cannot write " + index.string());
    for (const auto& c : comments) os << "# " << c << '\n';
    for (std::size_t i = 0; i < frames.frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04zu.ppm", i);
        write_ppm(dir / name, frames.frames[i]);
        os << frames.frames[i].t << ',' << name << '\n';
    }
    return index;
}

FrameSequence read_frames(const std::filesystem::path& index_path) {
    std::ifstream is(index_path);
    if (!is) throw IoError("cannot open " + index_path.string());
    FrameSequence seq;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ParseError("line " + std::to_string(line_no) + ": expected timestamp_us,path");
        Timestamp t = 0;
        try {
            t = std::stoll(line.substr(0, comma));
        } catch (const std::exception&) {
            throw ParseError("line " + std::to_string(line_no) + ": bad timestamp");
        }
        std::filesystem::path p = line.substr(comma + 1);
        if (p.is_relative()) p = index_path.parent_path() / p;
        seq.frames.push_back(read_ppm(p, t));
    }
    seq.validate();
    return seq;
}

}  // namespace hdi::events
