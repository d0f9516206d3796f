#pragma once

#include <cstdint>

#include "teletrace/trace.hpp"

namespace teletrace {

/// Tor-style transform: payloads re-chunked into fixed-size zero-padded
/// cells, advertised window frozen (circuit multiplexing hides the real
/// receive state).
struct FixedCellParams {
    uint32_t cell_size = 514;        // plaintext bytes per cell
    uint32_t per_cell_overhead = 29; // wrapping added to each cell on the wire
    uint32_t constant_window = 65535;
    double bandwidth_mbps = 100.0;   // per-cell serialization when meta is absent
};

/// Fixed-length packets at a fixed cadence; idle slots carry dummies.
struct ConstantRateParams {
    double interval_s = 0.25;
    uint32_t packet_size = 600;      // wire payload of every emitted packet
    uint32_t per_packet_overhead = 29;
    uint32_t constant_window = 65535;
};

struct ConstantRateStats {
    uint64_t real_bytes_in = 0;   // plaintext entering the channel
    uint64_t real_bytes_out = 0;  // plaintext carried by emitted slots
    uint64_t dummy_packets = 0;   // slots that carried no real bytes
    uint64_t total_packets = 0;
};

/// Variable inter-arrival padding: seeded uniform delay per packet.
struct VitParams {
    double min_delay_s = 0.0;
    double max_delay_s = 0.5;
    uint64_t seed = 0;
};

/// Re-chunks every payload-bearing packet into ceil(len/cell_size) cells of
/// exactly cell_size plaintext; cells after the first are offset by their
/// serialization time. Idempotent: cell-sized payloads map to themselves.
FlowTrace apply_fixed_cells(const FlowTrace& flow, const FixedCellParams& params = {});

/// Rebuilds each direction as a slotted constant-rate stream starting at the
/// flow's first timestamp; real payload bytes are served head-of-line and
/// dummy slots fill the gaps until the queue drains.
FlowTrace apply_constant_rate(const FlowTrace& flow, const ConstantRateParams& params = {},
                              ConstantRateStats* stats = nullptr);

/// Adds seeded Uniform[min,max] delay per packet, clamped so per-direction
/// ordering is preserved.
FlowTrace apply_vit(const FlowTrace& flow, const VitParams& params);

} // namespace teletrace
