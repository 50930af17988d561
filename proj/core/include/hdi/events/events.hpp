#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hdi::events {

/// Microseconds.
using Timestamp = std::int64_t;

inline constexpr Timestamp kMicrosPerSecond = 1'000'000;

struct Event {
    Timestamp t = 0;
    int x = 0;
    int y = 0;
    int p = 1;  // polarity, -1 or +1

    bool operator==(const Event&) const = default;
};

struct SensorSize {
    int width = 0;
    int height = 0;

    bool operator==(const SensorSize&) const = default;
};

/// Half-open in spirit but closed at both ends for voxelization: an event at
/// `end` lands in the last bin.
struct Interval {
    Timestamp begin = 0;
    Timestamp end = 0;

    Timestamp length() const { return end - begin; }
};

struct EventStream {
    SensorSize sensor;
    std::vector<Event> events;
    std::optional<double> threshold;     // set when produced by simulate_events
    std::optional<Interval> declared;    // covered time span, when known

    /// Declared span, else [first event, last event].
    Interval span() const;
    /// Throws DomainError/OrderingError when an invariant is violated.
    void validate() const;
};

/// One RGB frame, intensities in [0, 1], row-major H x W x 3.
struct Frame {
    Timestamp t = 0;
    int width = 0;
    int height = 0;
    std::vector<double> rgb;

    double luminance(int x, int y) const;
};

struct FrameSequence {
    std::vector<Frame> frames;

    /// Spacing between consecutive frames; throws when not uniform.
    Timestamp period() const;
    void validate() const;
};

/// T x 2 x H x W event histogram. Channel 0 counts positive events,
/// channel 1 negative ones.
struct VoxelGrid {
    int bins = 0;
    int height = 0;
    int width = 0;
    Interval interval;
    std::vector<double> values;
    std::size_t ignored = 0;  // events outside the interval

    double at(int t, int channel, int y, int x) const;
    double total() const;
};

/// Result of advancing one pixel's log-intensity ledger by `delta`.
struct Crossings {
    int count = 0;
    int polarity = 0;
    double residual = 0.0;           // accumulated change not yet emitted
    std::vector<double> fractions;   // position of each crossing within the transition, in (0, 1]
};

/// Ledger rule: the accumulated change `residual + delta` emits
/// floor(|acc| / threshold) events of sign(acc); the remainder carries over.
Crossings threshold_crossings(double residual, double delta, double threshold);

/// Event generation from frames (luminance = mean of RGB, clamped to 1e-3
/// before the log).
EventStream simulate_events(const FrameSequence& frames, double threshold);

/// Same rule on precomputed log-intensity images (each H*W, row-major).
EventStream simulate_events_log(const std::vector<std::vector<double>>& log_frames,
                                const std::vector<Timestamp>& times, SensorSize sensor, double threshold);

VoxelGrid voxelize(const EventStream& stream, Interval interval, int bins, bool normalize = false);

struct Window {
    Timestamp start = 0;
    Interval interval;
};

inline constexpr Timestamp kDefaultWindowLength = 50'000;  // 0.05 s
inline constexpr Timestamp kDefaultWindowStride = 12'500;  // 0.0125 s, 80 Hz

/// Windows [start, start + length] for start = begin, begin + stride, ...
/// while start + length <= end.
std::vector<Window> sliding_windows(Interval span, Timestamp length = kDefaultWindowLength,
                                    Timestamp stride = kDefaultWindowStride);
std::vector<Window> sliding_windows(const EventStream& stream, Timestamp length = kDefaultWindowLength,
                                    Timestamp stride = kDefaultWindowStride);

// Text event files: header "w,h", then "t_us,x,y,p" lines in ascending t.
// Lines starting with '#' are comments.
void write_events(std::ostream& os, const EventStream& stream);
void write_events(const std::filesystem::path& path, const EventStream& stream);
EventStream read_events(std::istream& is);
EventStream read_events(const std::filesystem::path& path);

// Binary PPM (P6) frames and a "timestamp_us,path" index ('#' comments allowed).
void write_ppm(const std::filesystem::path& path, const Frame& frame);
Frame read_ppm(const std::filesystem::path& path, Timestamp t = 0);
/// Writes frame_XXXX.ppm files plus the index; returns the index path.
std::filesystem::path write_frames(const std::filesystem::path& dir, const FrameSequence& frames,
                                   const std::vector<std::string>& comments = {});
FrameSequence read_frames(const std::filesystem::path& index_path);

/// Rounds intensities to the 8-bit grid used by PPM files.
void quantize_8bit(Frame& frame);

}  // namespace hdi::events
