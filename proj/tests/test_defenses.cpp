#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <set>

#include "teletrace/defenses.hpp"
#include "teletrace/emulator.hpp"

using namespace teletrace;

namespace {

FlowTrace sample_flow(uint64_t seed = 5, int reps = 8) {
    MovementProgram program;
    program.movement = MovementClass::XZ;
    program.repetitions = reps;
    LinkParams link;
    link.seed = seed;
    return emulate_session(program, link);
}

uint64_t total_plaintext(const FlowTrace& flow, uint32_t overhead) {
    uint64_t total = 0;
    for (const PacketRecord& p : flow.packets) {
        if (p.tcp_payload_len == 0) continue;
        total += p.tls_record_len > overhead ? p.tls_record_len - overhead : p.tcp_payload_len;
    }
    return total;
}

} // namespace

TEST_CASE("fixed cells: chunk counts follow the ceiling rule") {
    FlowTrace flow;
    flow.flow_id = "cells";
    auto add = [&](uint32_t plain) {
        PacketRecord p;
        p.ts = flow.packets.size() * 0.1;
        p.dir = Direction::ControllerToRobot;
        p.tcp_payload_len = plain + 29;
        p.tcp_hdr_len = 32;
        p.ip_hdr_len = 20;
        p.ip_len = 52 + p.tcp_payload_len;
        p.frame_len = 66 + p.tcp_payload_len;
        p.frame_cap_len = p.frame_len;
        p.tcp_flags = TcpFlags::parse("PA");
        p.tls_record_len = plain + 29;
        p.tls_record_count = 1;
        flow.packets.push_back(p);
    };
    add(100);
    add(514);
    add(515);

    FlowTrace out = apply_fixed_cells(flow);
    validate_trace(out);
    REQUIRE(out.packets.size() == 4); // 1 + 1 + 2
    for (const PacketRecord& p : out.packets) {
        CHECK(p.tls_record_len == 514 + 29);
        CHECK(p.tcp_payload_len == 514 + 29);
        CHECK(p.window_size == 65535);
    }
}

TEST_CASE("fixed cells flatten a real session's record lengths") {
    FlowTrace flow = sample_flow();
    FlowTrace out = apply_fixed_cells(flow);
    validate_trace(out);

    std::set<uint32_t> lens;
    for (const PacketRecord& p : out.packets) {
        if (p.tcp_payload_len > 0) lens.insert(p.tls_record_len);
        CHECK(p.window_size == 65535);
    }
    CHECK(lens.size() == 1);
    CHECK(*lens.begin() == 543);

    // Real plaintext is conserved: padded cells cover exactly the original
    // bytes, so the cell count matches the per-packet ceilings.
    size_t expected_cells = 0;
    for (const PacketRecord& p : flow.packets) {
        if (p.tcp_payload_len == 0) continue;
        uint32_t plain = p.tls_record_len > 29 ? p.tls_record_len - 29 : p.tcp_payload_len;
        expected_cells += (plain + 513) / 514;
    }
    size_t got = 0;
    for (const PacketRecord& p : out.packets) {
        if (p.tcp_payload_len > 0) ++got;
    }
    CHECK(got == expected_cells);
}

TEST_CASE("fixed cells transform is idempotent") {
    FlowTrace once = apply_fixed_cells(sample_flow());
    FlowTrace twice = apply_fixed_cells(once);
    REQUIRE(twice.packets.size() == once.packets.size());
    CHECK(twice.packets == once.packets);
}

TEST_CASE("constant rate: slots sit exactly on the grid") {
    FlowTrace flow;
    flow.flow_id = "cr";
    for (int i = 0; i < 3; ++i) {
        PacketRecord p;
        p.ts = i * 0.4;
        p.dir = Direction::ControllerToRobot;
        p.tcp_payload_len = 50;
        p.tcp_hdr_len = 32;
        p.ip_hdr_len = 20;
        p.ip_len = 102;
        p.frame_len = 116;
        p.frame_cap_len = 116;
        p.tcp_flags = TcpFlags::parse("PA");
        p.tls_record_len = 50;
        p.tls_record_count = 1;
        flow.packets.push_back(p);
    }

    ConstantRateParams params;
    params.interval_s = 0.5;
    params.packet_size = 600;
    ConstantRateStats stats;
    FlowTrace out = apply_constant_rate(flow, params, &stats);
    validate_trace(out);

    REQUIRE(out.packets.size() >= 3);
    for (size_t i = 0; i < out.packets.size(); ++i) {
        CHECK(out.packets[i].ts == doctest::Approx(i * 0.5));
        CHECK(out.packets[i].tcp_payload_len == 600);
    }
    CHECK(stats.real_bytes_in == 3 * (50 - 29) + 0); // plaintext under the 29-byte wrap
    CHECK(stats.real_bytes_out == stats.real_bytes_in);
}

TEST_CASE("constant rate conserves real bytes on an emulated session") {
    FlowTrace flow = sample_flow(11, 12);
    ConstantRateParams params;
    ConstantRateStats stats;
    FlowTrace out = apply_constant_rate(flow, params, &stats);
    validate_trace(out);

    CHECK(stats.real_bytes_in == total_plaintext(flow, params.per_packet_overhead));
    CHECK(stats.real_bytes_out == stats.real_bytes_in);
    CHECK(stats.total_packets == out.packets.size());
    CHECK(stats.dummy_packets > 0); // 4 slots/s against ~2 data packets/s
    for (const PacketRecord& p : out.packets) {
        CHECK(p.tcp_payload_len == params.packet_size);
        CHECK(p.window_size == params.constant_window);
    }
}

TEST_CASE("constant rate rejects degenerate parameters") {
    CHECK_THROWS_AS(apply_constant_rate(sample_flow(), ConstantRateParams{0.0, 600, 29, 65535}),
                    std::invalid_argument);
    CHECK_THROWS_AS(apply_constant_rate(sample_flow(), ConstantRateParams{0.5, 29, 29, 65535}),
                    std::invalid_argument);
}

TEST_CASE("vit: zero-width jitter is the identity") {
    FlowTrace flow = sample_flow();
    VitParams params;
    params.min_delay_s = params.max_delay_s = 0.0;
    params.seed = 3;
    FlowTrace out = apply_vit(flow, params);
    CHECK(out.packets == flow.packets);
}

TEST_CASE("vit: constant jitter shifts every packet equally") {
    FlowTrace flow = sample_flow();
    VitParams params;
    params.min_delay_s = params.max_delay_s = 0.1;
    params.seed = 3;
    FlowTrace out = apply_vit(flow, params);
    REQUIRE(out.packets.size() == flow.packets.size());
    for (size_t i = 0; i < flow.packets.size(); ++i) {
        CHECK(out.packets[i].ts == doctest::Approx(flow.packets[i].ts + 0.1).epsilon(1e-12));
    }
}

TEST_CASE("vit: random jitter preserves per-direction order and is seeded") {
    FlowTrace flow = sample_flow(21, 15);
    VitParams params;
    params.min_delay_s = 0.0;
    params.max_delay_s = 0.5;
    params.seed = 9;
    FlowTrace out = apply_vit(flow, params);
    validate_trace(out);

    std::vector<double> c2r_orig, c2r_out;
    for (const PacketRecord& p : flow.packets) {
        if (p.dir == Direction::ControllerToRobot) c2r_orig.push_back(p.seq);
    }
    for (const PacketRecord& p : out.packets) {
        if (p.dir == Direction::ControllerToRobot) c2r_out.push_back(p.seq);
    }
    CHECK(c2r_orig == c2r_out);

    FlowTrace again = apply_vit(flow, params);
    CHECK(again.packets == out.packets);

    params.max_delay_s = -1.0;
    CHECK_THROWS_AS(apply_vit(flow, params), std::invalid_argument);
}
