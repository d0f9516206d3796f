#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "teletrace/domain.hpp"

namespace teletrace {

enum class Direction : uint8_t { ControllerToRobot = 0, RobotToController = 1 };

struct TcpFlags {
    bool syn = false;
    bool ack = false;
    bool psh = false;
    bool fin = false;
    bool rst = false;

    /// Wireshark-style short form, fixed emit order S,F,R,P,A ("PA", "SA", ...).
    std::string str() const;
    static TcpFlags parse(std::string_view s); // order-insensitive; throws on unknown letter

    bool operator==(const TcpFlags&) const = default;
};

/// One captured or synthesized frame, reduced to the fields the feature
/// extractor consumes.
struct PacketRecord {
    double ts = 0.0; // seconds from flow start, non-decreasing within a flow
    Direction dir = Direction::ControllerToRobot;
    uint32_t frame_len = 0;
    uint32_t frame_cap_len = 0; // min(frame_len, snap length)
    uint32_t ip_len = 0;
    uint32_t ip_hdr_len = 0;
    uint32_t tcp_payload_len = 0;
    uint32_t tcp_hdr_len = 20;
    TcpFlags tcp_flags;
    uint32_t seq = 0;
    uint32_t ack = 0;
    uint32_t window_size = 0;
    uint32_t tls_record_len = 0;   // 0 iff no TLS record starts in this packet
    uint32_t tls_record_count = 0;
    bool is_retransmission = false;

    bool operator==(const PacketRecord&) const = default;
};

/// The packet sequence of one movement operation.
struct FlowTrace {
    std::string flow_id;
    std::optional<std::string> label; // movement class name, or absent
    std::vector<PacketRecord> packets;
    std::optional<FlowMeta> meta;     // absent for ingested captures
};

/// Throws std::runtime_error describing the first violated PacketRecord or
/// FlowTrace invariant. Tests run every emitted flow through this.
void validate_trace(const FlowTrace& flow);

// ---------------------------------------------------------------------------
// Canonical trace format: JSON lines. The first line is a header object
// ({"format","version","flow_meta"}); every following line is one packet with
// the fields flow_id, label, ts, dir, frame_len, frame_cap_len, ip_len,
// ip_hdr_len, tcp_payload_len, tcp_hdr_len, tcp_flags, seq, ack, window_size,
// tls_record_len, tls_record_count, retx, in exactly that order.
// ---------------------------------------------------------------------------

/// Writes traces to the sink; returns the number of bytes written.
size_t write_canonical(const std::vector<FlowTrace>& traces, std::ostream& out);

/// Inverse of write_canonical: packets are regrouped by flow_id (first
/// appearance order) and re-sorted by timestamp. Throws on malformed lines,
/// naming the line number.
std::vector<FlowTrace> read_canonical(std::istream& in);

/// Splits a timestamp-ordered packet sequence into flows at idle gaps of at
/// least `idle_gap_s` seconds; each flow is rebased so its first packet is
/// at t = 0. Flow ids are "flow-0001", "flow-0002", ...
std::vector<FlowTrace> assemble_flows(const std::vector<PacketRecord>& packets,
                                      double idle_gap_s = 5.0);

} // namespace teletrace
