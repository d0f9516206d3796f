#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace teletrace {

/// The seven movement classes of the target arm: single axes and their
/// simultaneous combinations.
enum class MovementClass : uint8_t { X, Y, Z, XY, XZ, YZ, XYZ };

constexpr int kMovementClassCount = 7;

/// Canonical declaration order used everywhere labels are ordered
/// (reports, open-world relabeling, class vocabularies).
const std::vector<MovementClass>& all_movement_classes();
const std::vector<std::string>& movement_class_names();

std::string_view movement_name(MovementClass m);
MovementClass movement_from_name(std::string_view name); // throws on unknown name

/// Which of x/y/z participate in the movement.
std::array<bool, 3> movement_axes(MovementClass m);
int movement_axis_count(MovementClass m);

/// One movement-session program: the class, how far and how fast each
/// repetition moves, and the command cadence.
struct MovementProgram {
    MovementClass movement = MovementClass::X;
    double distance_mm = 1.0;          // supported grid: 1, 2, 5, 10, 25, 50
    int speed_code = 25000;            // supported grid: 25k..200k, mm/s = code/2000
    int repetitions = 60;
    double command_interval_s = 1.0;
    double command_jitter_mean_s = 0.0; // exponential jitter added per command; 0 = off
};

/// Modeled network link between the controller and the robot.
struct LinkParams {
    double delay_ms = 0.0;       // one-way propagation delay
    double loss_pct = 0.0;       // independent per-packet drop probability, [0, 100)
    double bandwidth_mbps = 100.0;
    uint64_t seed = 0;
};

/// Sizing model of the TLSv1.2 channel (AES-GCM style framing).
struct TlsChannelModel {
    uint32_t record_header_bytes = 5;
    uint32_t per_record_overhead_bytes = 24; // 8-byte explicit nonce + 16-byte tag
    int handshake_packet_count = 12;         // initialization burst before data
};

/// Endpoint-side knobs that are not part of the link or the program.
struct EmulatorOptions {
    std::array<double, 3> base_position{150.0, 0.0, 90.0}; // home pose, mm
    double reply_jitter_min_s = 0.0; // uniform jitter added to each reply latency
    double reply_jitter_max_s = 0.0; // 0/0 = off
    /// Per-axis motion-time multipliers. The arm's polar geometry turns equal
    /// cartesian distances into different joint motions per axis, so the time
    /// to move 1 mm differs between reach (x), base rotation (y) and height
    /// (z). Combined moves take sqrt(sum of squared active gains) per mm.
    std::array<double, 3> axis_time_gains{1.0, 1.21, 1.48};
};

/// Provenance attached to synthetic flows. Ingested captures have none.
struct FlowMeta {
    MovementProgram program;
    LinkParams link;
    EmulatorOptions options;
    double first_command_ts = 0.0; // packets before this are the handshake burst
    bool aborted = false;          // retry cap exhausted mid-flow
};

} // namespace teletrace
