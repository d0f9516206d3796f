#include "teletrace/defenses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "teletrace/rng.hpp"

namespace teletrace {

namespace {

constexpr uint32_t kEthernetHdr = 14;
constexpr uint32_t kIpHdr = 20;
constexpr uint32_t kTcpHdr = 32;

uint32_t plaintext_of(const PacketRecord& p, uint32_t overhead) {
    if (p.tls_record_len > overhead) return p.tls_record_len - overhead;
    return p.tcp_payload_len;
}

void size_packet(PacketRecord& p, uint32_t wire_payload) {
    p.tcp_payload_len = wire_payload;
    p.tcp_hdr_len = kTcpHdr;
    p.ip_hdr_len = kIpHdr;
    p.ip_len = kIpHdr + kTcpHdr + wire_payload;
    p.frame_len = kEthernetHdr + p.ip_len;
    p.frame_cap_len = p.frame_len;
}

/// Rewrites seq/ack in plain cumulative byte counts after a transform has
/// rebuilt payloads; acks cover everything the peer emitted earlier.
void recount_seq_ack(std::vector<PacketRecord>& packets, uint32_t window) {
    std::array<uint64_t, 2> sent{0, 0};
    for (PacketRecord& p : packets) {
        size_t d = static_cast<size_t>(p.dir);
        p.seq = static_cast<uint32_t>(sent[d]);
        sent[d] += p.tcp_payload_len;
        p.ack = p.tcp_flags.ack ? static_cast<uint32_t>(sent[d ^ 1]) : 0;
        p.window_size = window;
    }
}

void sort_by_ts(std::vector<PacketRecord>& packets) {
    std::stable_sort(packets.begin(), packets.end(),
                     [](const PacketRecord& a, const PacketRecord& b) { return a.ts < b.ts; });
}

} // namespace

FlowTrace apply_fixed_cells(const FlowTrace& flow, const FixedCellParams& params) {
    if (params.cell_size == 0) throw std::invalid_argument("cell_size must be positive");
    double bw = flow.meta ? flow.meta->link.bandwidth_mbps : params.bandwidth_mbps;
    uint32_t cell_wire = params.cell_size + params.per_cell_overhead;
    double cell_tx =
        static_cast<double>(kEthernetHdr + kIpHdr + kTcpHdr + cell_wire) * 8.0 / (bw * 1e6);

    FlowTrace out;
    out.flow_id = flow.flow_id;
    out.label = flow.label;
    out.meta = flow.meta;
    for (const PacketRecord& p : flow.packets) {
        if (p.tcp_payload_len == 0) {
            out.packets.push_back(p);
            continue;
        }
        uint32_t plain = plaintext_of(p, params.per_cell_overhead);
        uint32_t cells = (plain + params.cell_size - 1) / params.cell_size;
        for (uint32_t c = 0; c < cells; ++c) {
            PacketRecord cell = p;
            cell.ts = p.ts + c * cell_tx;
            size_packet(cell, cell_wire);
            cell.tls_record_len = cell_wire;
            cell.tls_record_count = 1;
            out.packets.push_back(cell);
        }
    }
    sort_by_ts(out.packets);
    recount_seq_ack(out.packets, params.constant_window);
    return out;
}

FlowTrace apply_constant_rate(const FlowTrace& flow, const ConstantRateParams& params,
                              ConstantRateStats* stats) {
    if (params.interval_s <= 0.0) throw std::invalid_argument("interval must be positive");
    if (params.packet_size <= params.per_packet_overhead) {
        throw std::invalid_argument("packet_size must exceed the per-packet overhead");
    }
    ConstantRateStats local;

    FlowTrace out;
    out.flow_id = flow.flow_id;
    out.label = flow.label;
    out.meta = flow.meta;
    if (flow.packets.empty()) {
        if (stats) *stats = local;
        return out;
    }

    double base = flow.packets.front().ts;
    uint64_t capacity = params.packet_size - params.per_packet_overhead;

    for (int d = 0; d < 2; ++d) {
        // Arrival schedule of plaintext bytes in this direction.
        std::deque<std::pair<double, uint64_t>> arrivals;
        double last_ts = base;
        for (const PacketRecord& p : flow.packets) {
            if (static_cast<int>(p.dir) != d || p.tcp_payload_len == 0) continue;
            uint64_t plain = plaintext_of(p, params.per_packet_overhead);
            arrivals.emplace_back(p.ts, plain);
            local.real_bytes_in += plain;
            last_ts = std::max(last_ts, p.ts);
        }
        if (arrivals.empty()) continue;

        uint64_t queued = 0;
        for (uint64_t k = 0;; ++k) {
            double t = base + static_cast<double>(k) * params.interval_s;
            while (!arrivals.empty() && arrivals.front().first <= t) {
                queued += arrivals.front().second;
                arrivals.pop_front();
            }
            bool channel_open = t <= last_ts || queued > 0 || !arrivals.empty();
            if (!channel_open) break;

            uint64_t served = std::min<uint64_t>(capacity, queued);
            queued -= served;
            local.real_bytes_out += served;
            local.total_packets += 1;
            if (served == 0) local.dummy_packets += 1;

            PacketRecord slot;
            slot.ts = t;
            slot.dir = static_cast<Direction>(d);
            slot.tcp_flags = TcpFlags::parse("PA");
            size_packet(slot, params.packet_size);
            slot.tls_record_len = params.packet_size;
            slot.tls_record_count = 1;
            out.packets.push_back(slot);
        }
    }

    sort_by_ts(out.packets);
    recount_seq_ack(out.packets, params.constant_window);
    if (stats) *stats = local;
    return out;
}

FlowTrace apply_vit(const FlowTrace& flow, const VitParams& params) {
    if (params.max_delay_s < params.min_delay_s) {
        throw std::invalid_argument("vit: max_delay_s below min_delay_s");
    }
    FlowTrace out;
    out.flow_id = flow.flow_id;
    out.label = flow.label;
    out.meta = flow.meta;
    out.packets = flow.packets;

    double boundary = flow.meta ? flow.meta->first_command_ts : -1.0;
    double new_boundary = -1.0;

    std::array<double, 2> prev{-1e300, -1e300};
    for (size_t i = 0; i < out.packets.size(); ++i) {
        PacketRecord& p = out.packets[i];
        Rng rng(derive_seed(params.seed, "vit", i));
        double jittered = p.ts + rng.uniform(params.min_delay_s, params.max_delay_s);
        size_t d = static_cast<size_t>(p.dir);
        jittered = std::max(jittered, prev[d]); // keep per-direction order
        prev[d] = jittered;
        if (boundary >= 0.0 && new_boundary < 0.0 && p.ts >= boundary) {
            new_boundary = jittered;
        }
        p.ts = jittered;
    }
    sort_by_ts(out.packets);
    if (out.meta && new_boundary >= 0.0) out.meta->first_command_ts = new_boundary;
    return out;
}

} // namespace teletrace
