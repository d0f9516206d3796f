#include "teletrace/emulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <map>
#include <stdexcept>

#include "teletrace/rng.hpp"

namespace teletrace {

namespace {

constexpr double kInitialRtoS = 0.2;
constexpr int kMaxRetries = 8; // plus the original transmission
constexpr uint32_t kEthernetHdr = 14;
constexpr uint32_t kIpHdr = 20;
constexpr uint32_t kTcpHdrData = 32; // timestamps option
constexpr uint32_t kTcpHdrSyn = 40;  // SYN options (MSS, WS, SACK, TS)
constexpr uint32_t kWindowCap = 65535;

// Stable segment ids for the keyed drop draws. Tests replay drop decisions
// through the same keys, so these must not change.
constexpr uint64_t kCmdSegBase = 100000;
constexpr uint64_t kStatusSegBase = 200000;

struct HsStep {
    Direction dir;
    uint32_t wire;      // TCP payload bytes (TLS records, headers included)
    const char* flags;
    uint32_t rec_count;
};

// TLSv1.2 handshake plus a small configuration exchange; sizes are a
// plausible fixed script, not ground truth.
const HsStep kHandshakeScript[12] = {
    {Direction::ControllerToRobot, 0, "S", 0},
    {Direction::RobotToController, 0, "SA", 0},
    {Direction::ControllerToRobot, 0, "A", 0},
    {Direction::ControllerToRobot, 294, "PA", 1},  // ClientHello
    {Direction::RobotToController, 1214, "PA", 2}, // ServerHello, Certificate, Done
    {Direction::ControllerToRobot, 0, "A", 0},
    {Direction::ControllerToRobot, 192, "PA", 3},  // KeyExchange, CCS, Finished
    {Direction::RobotToController, 0, "A", 0},
    {Direction::RobotToController, 274, "PA", 3},  // Ticket, CCS, Finished
    {Direction::ControllerToRobot, 0, "A", 0},
    {Direction::ControllerToRobot, 61, "PA", 1},   // configuration request
    {Direction::RobotToController, 45, "PA", 1},   // configuration reply
};

struct Segment {
    uint64_t id = 0;
    Direction dir = Direction::ControllerToRobot;
    uint32_t wire = 0;
    TcpFlags flags;
    uint32_t rec_count = 0;
    uint64_t seq_start = 0;
    uint64_t seq_len = 0;             // wire bytes, plus 1 phantom byte for SYN
    bool consume_on_arrival = true;   // false for commands: consumed at execution
    double consume_at = 0.0;

    // transmission chain
    std::vector<double> attempt_times; // original + retransmissions actually sent
    bool delivered = false;
    double arrival = 0.0;              // of the first non-dropped attempt
};

struct Sim {
    const LinkParams& link;
    double delay_s;
    double loss_p;
    std::deque<Segment> segments; // deque: references stay valid while we append
    std::array<uint64_t, 2> next_seq{0, 0}; // per-direction relative stream position
    bool aborted = false;

    explicit Sim(const LinkParams& l) : link(l) {
        delay_s = link.delay_ms / 1000.0;
        loss_p = link.loss_pct / 100.0;
    }

    double tx_time(uint32_t wire, bool syn) const {
        uint32_t frame = kEthernetHdr + kIpHdr + (syn ? kTcpHdrSyn : kTcpHdrData) + wire;
        return static_cast<double>(frame) * 8.0 / (link.bandwidth_mbps * 1e6);
    }

    bool dropped(uint64_t seg_id, int attempt) const {
        if (loss_p <= 0.0) return false;
        return keyed_uniform01(link.seed, "drop", seg_id, static_cast<uint64_t>(attempt)) <
               loss_p;
    }

    // Runs the retransmission chain. Returns false when the retry cap is
    // exhausted (the flow aborts).
    bool transmit(Segment& seg, double first_attempt) {
        double t = first_attempt;
        double rto = kInitialRtoS;
        for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
            seg.attempt_times.push_back(t);
            if (!dropped(seg.id, attempt)) {
                seg.delivered = true;
                seg.arrival = t + tx_time(seg.wire, seg.flags.syn) + delay_s;
                return true;
            }
            t += rto;
            rto *= 2.0;
        }
        return false;
    }

    Segment& new_segment(uint64_t id, Direction dir, uint32_t wire, TcpFlags flags,
                         uint32_t rec_count) {
        Segment seg;
        seg.id = id;
        seg.dir = dir;
        seg.wire = wire;
        seg.flags = flags;
        seg.rec_count = rec_count;
        size_t d = static_cast<size_t>(dir);
        seg.seq_start = next_seq[d];
        seg.seq_len = wire + (flags.syn ? 1u : 0u);
        next_seq[d] += seg.seq_len;
        segments.push_back(seg);
        return segments.back();
    }
};

std::string format_coord(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

} // namespace

double speed_code_to_mmps(int code) {
    if (code <= 0) throw std::invalid_argument("speed code must be positive");
    return static_cast<double>(code) / 2000.0;
}

double movement_duration(double distance_mm, int speed_code) {
    if (distance_mm <= 0.0) throw std::invalid_argument("distance must be positive");
    return distance_mm / speed_code_to_mmps(speed_code);
}

double movement_path_mm(MovementClass movement, double distance_mm) {
    return distance_mm * std::sqrt(static_cast<double>(movement_axis_count(movement)));
}

double movement_time_scale(MovementClass movement, const std::array<double, 3>& axis_gains) {
    auto axes = movement_axes(movement);
    double sum = 0.0;
    for (int i = 0; i < 3; ++i) {
        if (axes[i]) sum += axis_gains[i] * axis_gains[i];
    }
    return std::sqrt(sum);
}

std::string gcode_for_move(MovementClass movement, double distance_mm, int speed_code,
                           const std::array<double, 3>& current) {
    auto axes = movement_axes(movement);
    std::array<double, 3> target = current;
    for (int i = 0; i < 3; ++i) {
        if (axes[i]) target[i] += distance_mm;
    }
    return "G0 X" + format_coord(target[0]) + " Y" + format_coord(target[1]) + " Z" +
           format_coord(target[2]) + " F" + std::to_string(speed_code) + "\n";
}

std::string status_reply(const std::array<double, 3>& position) {
    return "ok P:" + format_coord(position[0]) + "," + format_coord(position[1]) + "," +
           format_coord(position[2]) + "\n";
}

FlowTrace emulate_session(const MovementProgram& program, const LinkParams& link,
                          const TlsChannelModel& tls, const EmulatorOptions& options,
                          std::string flow_id) {
    if (program.repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
    if (program.command_interval_s <= 0.0)
        throw std::invalid_argument("command interval must be positive");
    if (link.loss_pct < 0.0 || link.loss_pct >= 100.0)
        throw std::invalid_argument("loss_pct must be in [0, 100)");
    if (link.bandwidth_mbps <= 0.0) throw std::invalid_argument("bandwidth must be positive");
    if (link.delay_ms < 0.0) throw std::invalid_argument("delay must be non-negative");
    if (options.reply_jitter_max_s < options.reply_jitter_min_s)
        throw std::invalid_argument("reply jitter bounds out of order");

    Sim sim(link);
    uint32_t record_overhead = tls.record_header_bytes + tls.per_record_overhead_bytes;

    auto command_jitter = [&](int k) {
        if (program.command_jitter_mean_s <= 0.0) return 0.0;
        Rng rng(derive_seed(link.seed, "cjit", static_cast<uint64_t>(k)));
        return rng.exponential(program.command_jitter_mean_s);
    };
    auto reply_jitter = [&](int k) {
        if (options.reply_jitter_max_s <= 0.0) return 0.0;
        Rng rng(derive_seed(link.seed, "rjit", static_cast<uint64_t>(k)));
        return rng.uniform(options.reply_jitter_min_s, options.reply_jitter_max_s);
    };

    // --- handshake burst ---
    int hs_count = tls.handshake_packet_count;
    double prev_send = 0.0, prev_arrival = 0.0, prev_tx = 0.0;
    bool have_prev = false;
    Direction prev_dir = Direction::ControllerToRobot;
    double handshake_end = 0.0;
    for (int i = 0; i < hs_count && !sim.aborted; ++i) {
        HsStep step = (i < 12) ? kHandshakeScript[i]
                               : kHandshakeScript[10 + (i % 2)]; // extra config chatter
        double send_time;
        if (!have_prev) {
            send_time = 0.0;
        } else if (step.dir == prev_dir) {
            send_time = prev_send + prev_tx; // pipelined back-to-back
        } else {
            send_time = prev_arrival;
        }
        Segment& seg = sim.new_segment(static_cast<uint64_t>(i), step.dir, step.wire,
                                       TcpFlags::parse(step.flags), step.rec_count);
        if (!sim.transmit(seg, send_time)) {
            sim.aborted = true;
            break;
        }
        prev_send = seg.attempt_times.front();
        prev_tx = sim.tx_time(seg.wire, seg.flags.syn);
        prev_arrival = seg.arrival;
        prev_dir = step.dir;
        have_prev = true;
        handshake_end = std::max(handshake_end, seg.arrival);
    }

    // --- command/status repetitions ---
    double first_command_ts = std::numeric_limits<double>::quiet_NaN();
    double mmps = speed_code_to_mmps(program.speed_code);
    double move_time =
        program.distance_mm * movement_time_scale(program.movement, options.axis_time_gains) /
        mmps;
    std::array<double, 3> position = options.base_position;
    auto axes = movement_axes(program.movement);

    double schedule = handshake_end;
    double robot_free_at = handshake_end;
    TcpFlags pa = TcpFlags::parse("PA");

    for (int k = 0; k < program.repetitions && !sim.aborted; ++k) {
        schedule += program.command_interval_s + command_jitter(k);
        if (k == 0) first_command_ts = schedule;

        std::string cmd = gcode_for_move(program.movement, program.distance_mm,
                                         program.speed_code, position);
        for (int i = 0; i < 3; ++i) {
            if (axes[i]) position[i] += program.distance_mm;
        }
        uint32_t cmd_wire = static_cast<uint32_t>(cmd.size()) + record_overhead;
        Segment& cseg = sim.new_segment(kCmdSegBase + static_cast<uint64_t>(k),
                                        Direction::ControllerToRobot, cmd_wire, pa, 1);
        cseg.consume_on_arrival = false;
        if (!sim.transmit(cseg, schedule)) {
            sim.aborted = true;
            break;
        }

        // Commands execute in order; the arm is busy for the move's duration
        // before it reports back.
        double exec_start = std::max(cseg.arrival, robot_free_at);
        cseg.consume_at = exec_start;
        double duration = move_time + reply_jitter(k);
        double finish = exec_start + duration;
        robot_free_at = finish;

        std::string reply = status_reply(position);
        uint32_t reply_wire = static_cast<uint32_t>(reply.size()) + record_overhead;
        Segment& sseg = sim.new_segment(kStatusSegBase + static_cast<uint64_t>(k),
                                        Direction::RobotToController, reply_wire, pa, 1);
        if (!sim.transmit(sseg, finish)) {
            sim.aborted = true;
            break;
        }
    }

    // --- field assignment via a chronological walk ---
    //
    // TCP headers are fixed when a packet leaves its sender, so emissions are
    // ordered (and endpoint state sampled) at send time; the capture
    // timestamp is the send time on the controller side and the arrival time
    // for robot-to-controller traffic.
    struct Event {
        double t;      // state/order time
        int kind;      // 0 arrival, 1 consume, 2 emission
        size_t seg;
        size_t attempt;
        double obs_ts; // capture timestamp for emissions
    };
    std::vector<Event> events;
    for (size_t si = 0; si < sim.segments.size(); ++si) {
        const Segment& seg = sim.segments[si];
        if (seg.delivered) {
            events.push_back({seg.arrival, 0, si, 0, 0.0});
            if (!seg.consume_on_arrival) events.push_back({seg.consume_at, 1, si, 0, 0.0});
        }
        if (seg.dir == Direction::ControllerToRobot) {
            // Captured on the controller side: every attempt is visible.
            for (size_t a = 0; a < seg.attempt_times.size(); ++a) {
                events.push_back({seg.attempt_times[a], 2, si, a, seg.attempt_times[a]});
            }
        } else if (seg.delivered) {
            // Only what survives the link reaches the capture point.
            double send = seg.attempt_times.back();
            events.push_back({send, 2, si, seg.attempt_times.size() - 1, seg.arrival});
        }
    }
    std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
        if (a.t != b.t) return a.t < b.t;
        return a.kind < b.kind;
    });

    struct EndpointState {
        std::map<uint64_t, uint64_t> pending; // arrived ranges not yet in order
        uint64_t in_order = 0;
        uint64_t arrived = 0;
        uint64_t consumed = 0;

        void arrive(uint64_t start, uint64_t end) {
            if (end == start) return;
            arrived += end - start;
            pending.emplace(start, end);
            for (auto it = pending.begin(); it != pending.end() && it->first <= in_order;) {
                in_order = std::max(in_order, it->second);
                it = pending.erase(it);
            }
        }
    };
    std::array<EndpointState, 2> endpoint; // indexed by the direction it receives

    FlowTrace flow;
    for (const Event& ev : events) {
        const Segment& seg = sim.segments[ev.seg];
        size_t rx = static_cast<size_t>(seg.dir); // endpoint receiving this segment
        size_t tx = rx ^ 1;                       // what the sender itself receives
        if (ev.kind == 0) {
            endpoint[rx].arrive(seg.seq_start, seg.seq_start + seg.seq_len);
            if (seg.consume_on_arrival) endpoint[rx].consumed += seg.seq_len;
        } else if (ev.kind == 1) {
            endpoint[rx].consumed += seg.seq_len;
        } else {
            PacketRecord p;
            p.ts = ev.obs_ts;
            p.dir = seg.dir;
            p.tcp_payload_len = seg.wire;
            p.tcp_hdr_len = seg.flags.syn ? kTcpHdrSyn : kTcpHdrData;
            p.ip_hdr_len = kIpHdr;
            p.ip_len = kIpHdr + p.tcp_hdr_len + seg.wire;
            p.frame_len = kEthernetHdr + p.ip_len;
            p.frame_cap_len = p.frame_len;
            p.tcp_flags = seg.flags;
            p.seq = static_cast<uint32_t>(seg.seq_start);
            p.ack = seg.flags.ack ? static_cast<uint32_t>(endpoint[tx].in_order) : 0;
            uint64_t occupancy = endpoint[tx].arrived - endpoint[tx].consumed;
            p.window_size = occupancy >= kWindowCap
                                ? 0
                                : static_cast<uint32_t>(kWindowCap - occupancy);
            p.tls_record_len = seg.rec_count > 0 ? seg.wire : 0;
            p.tls_record_count = seg.rec_count;
            p.is_retransmission = ev.attempt > 0;
            flow.packets.push_back(p);
        }
    }

    std::stable_sort(flow.packets.begin(), flow.packets.end(),
                     [](const PacketRecord& a, const PacketRecord& b) { return a.ts < b.ts; });

    if (flow_id.empty()) {
        flow_id = "emu-" + std::string(movement_name(program.movement)) + "-s" +
                  std::to_string(link.seed);
    }
    flow.flow_id = std::move(flow_id);
    flow.label = std::string(movement_name(program.movement));

    FlowMeta meta;
    meta.program = program;
    meta.link = link;
    meta.options = options;
    meta.first_command_ts = std::isnan(first_command_ts)
                                ? (flow.packets.empty() ? 0.0 : flow.packets.back().ts + 1.0)
                                : first_command_ts;
    meta.aborted = sim.aborted;
    flow.meta = meta;
    return flow;
}

std::vector<FlowTrace> generate_dataset(
    const std::vector<std::pair<MovementProgram, LinkParams>>& grid, int samples_per_cell,
    uint64_t master_seed, const TlsChannelModel& tls, const EmulatorOptions& options) {
    if (grid.empty()) throw std::invalid_argument("generate_dataset: empty grid");
    if (samples_per_cell < 1)
        throw std::invalid_argument("generate_dataset: samples_per_cell must be >= 1");

    std::vector<FlowTrace> flows;
    flows.reserve(grid.size() * static_cast<size_t>(samples_per_cell));
    for (size_t ci = 0; ci < grid.size(); ++ci) {
        for (int s = 0; s < samples_per_cell; ++s) {
            MovementProgram program = grid[ci].first;
            LinkParams cell_link = grid[ci].second;
            cell_link.seed = derive_seed(master_seed, "flow", ci, static_cast<uint64_t>(s));
            char idbuf[96];
            std::snprintf(idbuf, sizeof(idbuf), "cell%03zu-%s-s%04d", ci,
                          std::string(movement_name(program.movement)).c_str(), s);
            flows.push_back(emulate_session(program, cell_link, tls, options, idbuf));
        }
    }
    return flows;
}

} // namespace teletrace
