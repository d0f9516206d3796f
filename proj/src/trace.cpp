#include "teletrace/trace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace teletrace {

using ordered_json = nlohmann::ordered_json;

// --- movement class helpers -------------------------------------------------

const std::vector<MovementClass>& all_movement_classes() {
    static const std::vector<MovementClass> classes = {
        MovementClass::X,  MovementClass::Y,  MovementClass::Z,  MovementClass::XY,
        MovementClass::XZ, MovementClass::YZ, MovementClass::XYZ};
    return classes;
}

const std::vector<std::string>& movement_class_names() {
    static const std::vector<std::string> names = {"X", "Y", "Z", "XY", "XZ", "YZ", "XYZ"};
    return names;
}

std::string_view movement_name(MovementClass m) {
    return movement_class_names()[static_cast<size_t>(m)];
}

MovementClass movement_from_name(std::string_view name) {
    const auto& names = movement_class_names();
    for (size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<MovementClass>(i);
    }
    throw std::invalid_argument("unknown movement class: " + std::string(name));
}

std::array<bool, 3> movement_axes(MovementClass m) {
    switch (m) {
        case MovementClass::X:   return {true, false, false};
        case MovementClass::Y:   return {false, true, false};
        case MovementClass::Z:   return {false, false, true};
        case MovementClass::XY:  return {true, true, false};
        case MovementClass::XZ:  return {true, false, true};
        case MovementClass::YZ:  return {false, true, true};
        case MovementClass::XYZ: return {true, true, true};
    }
    throw std::logic_error("bad movement class");
}

int movement_axis_count(MovementClass m) {
    auto ax = movement_axes(m);
    return static_cast<int>(ax[0]) + static_cast<int>(ax[1]) + static_cast<int>(ax[2]);
}

// --- TCP flags ----------------------------------------------------------------

std::string TcpFlags::str() const {
    std::string s;
    if (syn) s += 'S';
    if (fin) s += 'F';
    if (rst) s += 'R';
    if (psh) s += 'P';
    if (ack) s += 'A';
    return s;
}

TcpFlags TcpFlags::parse(std::string_view s) {
    TcpFlags f;
    for (char c : s) {
        switch (c) {
            case 'S': f.syn = true; break;
            case 'F': f.fin = true; break;
            case 'R': f.rst = true; break;
            case 'P': f.psh = true; break;
            case 'A': f.ack = true; break;
            default:
                throw std::invalid_argument(std::string("unknown TCP flag letter: ") + c);
        }
    }
    return f;
}

// --- validation ----------------------------------------------------------------

void validate_trace(const FlowTrace& flow) {
    if (flow.packets.empty()) {
        throw std::runtime_error("flow " + flow.flow_id + ": empty packet sequence");
    }
    double prev_ts = 0.0;
    for (size_t i = 0; i < flow.packets.size(); ++i) {
        const PacketRecord& p = flow.packets[i];
        auto fail = [&](const std::string& what) {
            throw std::runtime_error("flow " + flow.flow_id + " packet " + std::to_string(i) +
                                     ": " + what);
        };
        if (!std::isfinite(p.ts) || p.ts < 0.0) fail("timestamp not finite/non-negative");
        if (i > 0 && p.ts < prev_ts) fail("timestamp regression");
        prev_ts = p.ts;
        if (p.frame_cap_len > p.frame_len) fail("frame_cap_len exceeds frame_len");
        if (p.frame_len < p.ip_len) fail("frame_len below ip_len");
        if (p.ip_len < p.ip_hdr_len + p.tcp_hdr_len + p.tcp_payload_len)
            fail("ip_len below header+payload total");
        if (p.tcp_hdr_len < 20) fail("tcp_hdr_len below 20");
        if ((p.tls_record_count == 0) != (p.tls_record_len == 0))
            fail("tls_record_count/len zero-pairing violated");
    }
}

// --- canonical format ----------------------------------------------------------

namespace {

constexpr const char* kFormatName = "teletrace-traces";
constexpr int kFormatVersion = 1;

ordered_json meta_to_json(const FlowMeta& m) {
    ordered_json j;
    j["movement"] = std::string(movement_name(m.program.movement));
    j["distance_mm"] = m.program.distance_mm;
    j["speed_code"] = m.program.speed_code;
    j["repetitions"] = m.program.repetitions;
    j["command_interval_s"] = m.program.command_interval_s;
    j["command_jitter_mean_s"] = m.program.command_jitter_mean_s;
    j["delay_ms"] = m.link.delay_ms;
    j["loss_pct"] = m.link.loss_pct;
    j["bandwidth_mbps"] = m.link.bandwidth_mbps;
    j["seed"] = m.link.seed;
    j["base_position"] = m.options.base_position;
    j["reply_jitter"] = std::array<double, 2>{m.options.reply_jitter_min_s,
                                              m.options.reply_jitter_max_s};
    j["axis_time_gains"] = m.options.axis_time_gains;
    j["first_command_ts"] = m.first_command_ts;
    j["aborted"] = m.aborted;
    return j;
}

FlowMeta meta_from_json(const ordered_json& j) {
    FlowMeta m;
    m.program.movement = movement_from_name(j.at("movement").get<std::string>());
    m.program.distance_mm = j.at("distance_mm").get<double>();
    m.program.speed_code = j.at("speed_code").get<int>();
    m.program.repetitions = j.at("repetitions").get<int>();
    m.program.command_interval_s = j.at("command_interval_s").get<double>();
    m.program.command_jitter_mean_s = j.at("command_jitter_mean_s").get<double>();
    m.link.delay_ms = j.at("delay_ms").get<double>();
    m.link.loss_pct = j.at("loss_pct").get<double>();
    m.link.bandwidth_mbps = j.at("bandwidth_mbps").get<double>();
    m.link.seed = j.at("seed").get<uint64_t>();
    m.options.base_position = j.at("base_position").get<std::array<double, 3>>();
    auto rj = j.at("reply_jitter").get<std::array<double, 2>>();
    m.options.reply_jitter_min_s = rj[0];
    m.options.reply_jitter_max_s = rj[1];
    m.options.axis_time_gains = j.at("axis_time_gains").get<std::array<double, 3>>();
    m.first_command_ts = j.at("first_command_ts").get<double>();
    m.aborted = j.at("aborted").get<bool>();
    return m;
}

ordered_json packet_to_json(const FlowTrace& flow, const PacketRecord& p) {
    ordered_json j;
    j["flow_id"] = flow.flow_id;
    if (flow.label) j["label"] = *flow.label; else j["label"] = nullptr;
    j["ts"] = p.ts;
    j["dir"] = static_cast<int>(p.dir);
    j["frame_len"] = p.frame_len;
    j["frame_cap_len"] = p.frame_cap_len;
    j["ip_len"] = p.ip_len;
    j["ip_hdr_len"] = p.ip_hdr_len;
    j["tcp_payload_len"] = p.tcp_payload_len;
    j["tcp_hdr_len"] = p.tcp_hdr_len;
    j["tcp_flags"] = p.tcp_flags.str();
    j["seq"] = p.seq;
    j["ack"] = p.ack;
    j["window_size"] = p.window_size;
    j["tls_record_len"] = p.tls_record_len;
    j["tls_record_count"] = p.tls_record_count;
    j["retx"] = p.is_retransmission;
    return j;
}

const char* kPacketFields[] = {"flow_id", "label", "ts", "dir", "frame_len", "frame_cap_len",
                               "ip_len", "ip_hdr_len", "tcp_payload_len", "tcp_hdr_len",
                               "tcp_flags", "seq", "ack", "window_size", "tls_record_len",
                               "tls_record_count", "retx"};

} // namespace

size_t write_canonical(const std::vector<FlowTrace>& traces, std::ostream& out) {
    size_t bytes = 0;
    auto emit = [&](const std::string& line) {
        out << line << '\n';
        if (!out) throw std::runtime_error("canonical write: sink write failure");
        bytes += line.size() + 1;
    };

    ordered_json header;
    header["format"] = kFormatName;
    header["version"] = kFormatVersion;
    ordered_json meta = ordered_json::object();
    for (const FlowTrace& flow : traces) {
        if (flow.meta) meta[flow.flow_id] = meta_to_json(*flow.meta);
    }
    header["flow_meta"] = meta;
    emit(header.dump());

    for (const FlowTrace& flow : traces) {
        for (const PacketRecord& p : flow.packets) {
            emit(packet_to_json(flow, p).dump());
        }
    }
    return bytes;
}

std::vector<FlowTrace> read_canonical(std::istream& in) {
    std::vector<FlowTrace> flows;
    std::map<std::string, size_t> index; // flow_id -> position in `flows`
    ordered_json header_meta = ordered_json::object();

    std::string line;
    size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error("canonical parse: line " + std::to_string(line_no) +
                                     ": invalid JSON: " + e.what());
        }
        if (!j.is_object()) {
            throw std::runtime_error("canonical parse: line " + std::to_string(line_no) +
                                     ": expected an object");
        }
        if (!saw_header && line_no == 1 && j.contains("format")) {
            saw_header = true;
            if (j["format"] != kFormatName) {
                throw std::runtime_error("canonical parse: line 1: unknown format " +
                                         j["format"].dump());
            }
            if (j.contains("flow_meta")) header_meta = j["flow_meta"];
            continue;
        }

        for (const char* field : kPacketFields) {
            if (!j.contains(field)) {
                throw std::runtime_error("canonical parse: line " + std::to_string(line_no) +
                                         ": missing field '" + field + "'");
            }
        }

        PacketRecord p;
        std::string flow_id;
        std::optional<std::string> label;
        try {
            flow_id = j["flow_id"].get<std::string>();
            if (!j["label"].is_null()) label = j["label"].get<std::string>();
            p.ts = j["ts"].get<double>();
            int dir = j["dir"].get<int>();
            if (dir != 0 && dir != 1) throw std::invalid_argument("dir must be 0 or 1");
            p.dir = static_cast<Direction>(dir);
            p.frame_len = j["frame_len"].get<uint32_t>();
            p.frame_cap_len = j["frame_cap_len"].get<uint32_t>();
            p.ip_len = j["ip_len"].get<uint32_t>();
            p.ip_hdr_len = j["ip_hdr_len"].get<uint32_t>();
            p.tcp_payload_len = j["tcp_payload_len"].get<uint32_t>();
            p.tcp_hdr_len = j["tcp_hdr_len"].get<uint32_t>();
            p.tcp_flags = TcpFlags::parse(j["tcp_flags"].get<std::string>());
            p.seq = j["seq"].get<uint32_t>();
            p.ack = j["ack"].get<uint32_t>();
            p.window_size = j["window_size"].get<uint32_t>();
            p.tls_record_len = j["tls_record_len"].get<uint32_t>();
            p.tls_record_count = j["tls_record_count"].get<uint32_t>();
            p.is_retransmission = j["retx"].get<bool>();
        } catch (const std::exception& e) {
            throw std::runtime_error("canonical parse: line " + std::to_string(line_no) + ": " +
                                     e.what());
        }

        auto it = index.find(flow_id);
        if (it == index.end()) {
            index.emplace(flow_id, flows.size());
            FlowTrace flow;
            flow.flow_id = flow_id;
            flow.label = label;
            flows.push_back(std::move(flow));
            it = index.find(flow_id);
        } else if (flows[it->second].label != label) {
            throw std::runtime_error("canonical parse: line " + std::to_string(line_no) +
                                     ": label disagrees with earlier lines of flow '" + flow_id +
                                     "'");
        }
        flows[it->second].packets.push_back(p);
    }

    for (FlowTrace& flow : flows) {
        std::stable_sort(flow.packets.begin(), flow.packets.end(),
                         [](const PacketRecord& a, const PacketRecord& b) { return a.ts < b.ts; });
        if (header_meta.contains(flow.flow_id)) {
            flow.meta = meta_from_json(header_meta[flow.flow_id]);
        }
    }
    return flows;
}

std::vector<FlowTrace> assemble_flows(const std::vector<PacketRecord>& packets,
                                      double idle_gap_s) {
    std::vector<FlowTrace> flows;
    if (packets.empty()) return flows;
    if (idle_gap_s <= 0.0) throw std::invalid_argument("idle_gap_s must be positive");

    size_t start = 0;
    auto flush = [&](size_t end) {
        FlowTrace flow;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "flow-%04zu", flows.size() + 1);
        flow.flow_id = buf;
        double base = packets[start].ts;
        for (size_t i = start; i < end; ++i) {
            PacketRecord p = packets[i];
            p.ts -= base;
            flow.packets.push_back(p);
        }
        flows.push_back(std::move(flow));
        start = end;
    };

    for (size_t i = 1; i < packets.size(); ++i) {
        if (packets[i].ts - packets[i - 1].ts >= idle_gap_s) flush(i);
    }
    flush(packets.size());
    return flows;
}

} // namespace teletrace
