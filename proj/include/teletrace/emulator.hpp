#pragma once

#include <string>
#include <utility>
#include <vector>

#include "teletrace/domain.hpp"
#include "teletrace/trace.hpp"

namespace teletrace {

/// Speed codes map to mm/s by a fixed factor of 2000 (25000 -> 12.5 mm/s).
double speed_code_to_mmps(int code);

/// Seconds to cover `distance_mm` at the speed encoded by `speed_code`.
double movement_duration(double distance_mm, int speed_code);

/// Euclidean path length of one repetition: every active axis moves
/// `distance_mm`, so a k-axis move covers distance_mm * sqrt(k).
double movement_path_mm(MovementClass movement, double distance_mm);

/// Motion-time multiplier for a movement under per-axis gains:
/// sqrt(sum of gain^2 over active axes). With unit gains this is sqrt(k).
double movement_time_scale(MovementClass movement, const std::array<double, 3>& axis_gains);

/// Builds the G0 command for one repetition. Active axes advance by
/// `distance_mm` from `current`; inactive axes repeat their coordinates.
/// Coordinates are printed with one decimal place, so the payload length
/// varies with the axis set and the digit count of the coordinates.
std::string gcode_for_move(MovementClass movement, double distance_mm, int speed_code,
                           const std::array<double, 3>& current);

/// The robot's status reply for a completed move.
std::string status_reply(const std::array<double, 3>& position);

/// Synthesizes one controller<->robot session as observed at the controller
/// side of the link: a handshake burst, then per repetition one command
/// packet and one status/ACK reply. Drops, retransmissions (200 ms initial
/// RTO, doubling, 8 retries then abort), link delay and serialization time
/// are modeled by a small discrete-event simulation. Fully deterministic
/// given link.seed.
FlowTrace emulate_session(const MovementProgram& program, const LinkParams& link,
                          const TlsChannelModel& tls = {}, const EmulatorOptions& options = {},
                          std::string flow_id = {});

/// Labeled flows for every (program, link) grid cell. Per-flow seeds are
/// derived from (cell index, sample index, master seed), so the output is a
/// pure function of its arguments.
std::vector<FlowTrace> generate_dataset(
    const std::vector<std::pair<MovementProgram, LinkParams>>& grid, int samples_per_cell,
    uint64_t master_seed, const TlsChannelModel& tls = {}, const EmulatorOptions& options = {});

} // namespace teletrace
