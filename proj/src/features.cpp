#include "teletrace/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace teletrace {

const std::array<std::string, 16> kFeatureColumns = {
    "packet_time_s",  "inter_arrival_s", "direction",       "frame_len",
    "frame_cap_len",  "ip_len",          "ip_hdr_len",      "tcp_payload_len",
    "tcp_hdr_len",    "window_size",     "bytes_in_flight", "push_bytes_sent",
    "ack_rtt_s",      "tls_record_len",  "tls_record_count", "cum_bytes_same_dir"};

size_t FeatureMatrix::column(const std::string& name) const {
    for (size_t i = 0; i < column_names.size(); ++i) {
        if (column_names[i] == name) return i;
    }
    throw std::invalid_argument("no such feature column: " + name);
}

FeatureMatrix FeatureMatrix::select_columns(const std::vector<std::string>& names) const {
    FeatureMatrix out;
    out.column_names = names;
    out.class_names = class_names;
    out.flow_names = flow_names;
    out.labels = labels;
    out.flow_index = flow_index;
    std::vector<size_t> idx;
    idx.reserve(names.size());
    for (const auto& n : names) idx.push_back(column(n));
    out.values.reserve(rows() * names.size());
    for (size_t r = 0; r < rows(); ++r) {
        for (size_t c : idx) out.values.push_back(at(r, c));
    }
    return out;
}

namespace {

/// Boundary timestamp separating the handshake burst from movement data.
double handshake_boundary(const FlowTrace& flow, const ExtractOptions& opts) {
    if (flow.meta) return flow.meta->first_command_ts;
    for (size_t i = 1; i < flow.packets.size(); ++i) {
        if (flow.packets[i].ts - flow.packets[i - 1].ts >= opts.handshake_gap_s) {
            return flow.packets[i].ts;
        }
    }
    return 0.0; // no burst identified: everything is data
}

} // namespace

std::vector<std::array<double, 16>> extract_features(const FlowTrace& flow,
                                                     const ExtractOptions& opts) {
    std::vector<std::array<double, 16>> rows;
    if (flow.packets.empty()) return rows;
    const double boundary = handshake_boundary(flow, opts);

    // Per-direction sender state, in relative sequence space.
    struct SideState {
        bool isn_set = false;
        uint32_t isn = 0;
        uint64_t max_sent_end = 0;   // highest relative payload end transmitted
        uint64_t acked = 0;          // highest relative ack seen from the peer
        uint64_t push_accum = 0;     // payload bytes since the last PSH
        uint64_t cum_data_bytes = 0; // payload total over emitted rows
        std::map<uint64_t, double> unacked; // relative payload end -> send ts
    };
    std::array<SideState, 2> side;

    bool have_prev_row = false;
    double prev_row_ts = 0.0;

    for (const PacketRecord& p : flow.packets) {
        size_t d = static_cast<size_t>(p.dir);
        size_t e = d ^ 1;
        SideState& self = side[d];
        SideState& peer = side[e];

        if (!self.isn_set) {
            self.isn = p.seq;
            self.isn_set = true;
        }
        uint64_t rel_start = static_cast<uint32_t>(p.seq - self.isn);
        uint64_t rel_end = rel_start + (p.tcp_flags.syn ? 1 : 0) + p.tcp_payload_len;
        self.max_sent_end = std::max(self.max_sent_end, rel_end);

        // ACK bookkeeping: this packet may complete peer data.
        double ack_rtt = 0.0;
        if (p.tcp_flags.ack && peer.isn_set) {
            uint64_t ack_rel = static_cast<uint32_t>(p.ack - peer.isn);
            peer.acked = std::max(peer.acked, ack_rel);
            double newest = -1.0;
            auto it = peer.unacked.begin();
            while (it != peer.unacked.end() && it->first <= ack_rel) {
                newest = std::max(newest, it->second);
                it = peer.unacked.erase(it);
            }
            if (newest >= 0.0) ack_rtt = p.ts - newest;
        }

        if (p.tcp_payload_len > 0) {
            // Retransmissions re-time the measurement (Karn-style).
            self.unacked.insert_or_assign(rel_end, p.ts);
        }

        uint64_t in_flight =
            self.max_sent_end > self.acked ? self.max_sent_end - self.acked : 0;

        self.push_accum += p.tcp_payload_len;
        uint64_t push_bytes = self.push_accum;
        if (p.tcp_flags.psh) self.push_accum = 0;

        if (p.ts >= boundary) {
            self.cum_data_bytes += p.tcp_payload_len;
            std::array<double, 16> row;
            row[0] = p.ts;
            row[1] = have_prev_row ? p.ts - prev_row_ts : 0.0;
            row[2] = static_cast<double>(d);
            row[3] = p.frame_len;
            row[4] = p.frame_cap_len;
            row[5] = p.ip_len;
            row[6] = p.ip_hdr_len;
            row[7] = p.tcp_payload_len;
            row[8] = p.tcp_hdr_len;
            row[9] = p.window_size;
            row[10] = static_cast<double>(in_flight);
            row[11] = static_cast<double>(push_bytes);
            row[12] = ack_rtt;
            row[13] = p.tls_record_len;
            row[14] = p.tls_record_count;
            row[15] = static_cast<double>(self.cum_data_bytes);
            rows.push_back(row);
            have_prev_row = true;
            prev_row_ts = p.ts;
        }
    }
    return rows;
}

FeatureMatrix build_matrix(const std::vector<FlowTrace>& flows, const ExtractOptions& opts) {
    FeatureMatrix m;
    m.column_names.assign(kFeatureColumns.begin(), kFeatureColumns.end());

    auto label_index = [&m](const std::string& name) -> int32_t {
        for (size_t i = 0; i < m.class_names.size(); ++i) {
            if (m.class_names[i] == name) return static_cast<int32_t>(i);
        }
        m.class_names.push_back(name);
        return static_cast<int32_t>(m.class_names.size() - 1);
    };
    // Seed the vocabulary with whichever canonical classes appear, keeping
    // declaration order stable for reports and open-world relabeling.
    for (const auto& name : movement_class_names()) {
        for (const FlowTrace& f : flows) {
            if (f.label && *f.label == name) {
                label_index(name);
                break;
            }
        }
    }

    for (const FlowTrace& flow : flows) {
        auto rows = extract_features(flow, opts);
        if (rows.empty()) continue;
        int32_t label = label_index(flow.label ? *flow.label : "Unknown");
        uint32_t fidx = static_cast<uint32_t>(m.flow_names.size());
        m.flow_names.push_back(flow.flow_id);
        for (const auto& row : rows) {
            m.values.insert(m.values.end(), row.begin(), row.end());
            m.labels.push_back(label);
            m.flow_index.push_back(fidx);
        }
    }
    return m;
}

namespace {

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, size_t line_no) {
    double v;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw std::runtime_error("csv parse: line " + std::to_string(line_no) +
                                 ": bad number '" + s + "'");
    }
    return v;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> parts;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) parts.push_back(cur);
    if (!line.empty() && line.back() == ',') parts.emplace_back();
    return parts;
}

} // namespace

void write_matrix_csv(const FeatureMatrix& matrix, std::ostream& out) {
    for (const auto& c : matrix.column_names) out << c << ',';
    out << "label,flow_id\n";
    for (size_t r = 0; r < matrix.rows(); ++r) {
        for (size_t c = 0; c < matrix.cols(); ++c) {
            out << format_double(matrix.at(r, c)) << ',';
        }
        out << matrix.label_name(r) << ',' << matrix.flow_names[matrix.flow_index[r]] << '\n';
    }
    if (!out) throw std::runtime_error("csv write failure");
}

FeatureMatrix read_matrix_csv(std::istream& in) {
    FeatureMatrix m;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv parse: empty input");
    auto header = split_csv(line);
    if (header.size() < 3 || header[header.size() - 2] != "label" ||
        header.back() != "flow_id") {
        throw std::runtime_error("csv parse: header must end with label,flow_id");
    }
    m.column_names.assign(header.begin(), header.end() - 2);

    std::map<std::string, int32_t> label_idx;
    std::map<std::string, uint32_t> flow_idx;
    auto label_index = [&](const std::string& name) {
        auto it = label_idx.find(name);
        if (it != label_idx.end()) return it->second;
        int32_t idx = static_cast<int32_t>(m.class_names.size());
        m.class_names.push_back(name);
        label_idx.emplace(name, idx);
        return idx;
    };
    auto flow_index = [&](const std::string& name) {
        auto it = flow_idx.find(name);
        if (it != flow_idx.end()) return it->second;
        uint32_t idx = static_cast<uint32_t>(m.flow_names.size());
        m.flow_names.push_back(name);
        flow_idx.emplace(name, idx);
        return idx;
    };

    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto parts = split_csv(line);
        if (parts.size() != m.column_names.size() + 2) {
            throw std::runtime_error("csv parse: line " + std::to_string(line_no) +
                                     ": expected " + std::to_string(m.column_names.size() + 2) +
                                     " fields, got " + std::to_string(parts.size()));
        }
        for (size_t c = 0; c < m.column_names.size(); ++c) {
            m.values.push_back(parse_double(parts[c], line_no));
        }
        m.labels.push_back(label_index(parts[parts.size() - 2]));
        m.flow_index.push_back(flow_index(parts.back()));
    }
    return m;
}

} // namespace teletrace
