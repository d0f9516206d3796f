#include "teletrace/pcap.hpp"

#include <array>
#include <cstring>
#include <istream>
#include <stdexcept>

namespace teletrace {

namespace {

constexpr uint32_t kPcapMagicLE = 0xa1b2c3d4u;  // written by a little-endian host
constexpr uint32_t kPcapMagicBE = 0xd4c3b2a1u;  // byte-swapped: big-endian writer
constexpr uint32_t kPcapNgMagic = 0x0a0d0d0au;  // Section Header Block of pcapng
constexpr uint32_t kLinkTypeEthernet = 1;

constexpr uint16_t kEthertypeIPv4 = 0x0800;
constexpr uint8_t kIpProtoTcp = 6;

constexpr uint8_t kTcpFin = 0x01, kTcpSyn = 0x02, kTcpRst = 0x04, kTcpPsh = 0x08,
                  kTcpAck = 0x10;

struct Reader {
    std::istream& in;
    bool swap = false;

    bool read_exact(void* dst, size_t n) {
        in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        return static_cast<size_t>(in.gcount()) == n;
    }
    uint32_t u32(const unsigned char* p) const {
        uint32_t v;
        std::memcpy(&v, p, 4);
        if (swap) v = __builtin_bswap32(v);
        return v;
    }
    uint16_t u16(const unsigned char* p) const {
        uint16_t v;
        std::memcpy(&v, p, 2);
        if (swap) v = __builtin_bswap16(v);
        return v;
    }
};

uint16_t be16(const unsigned char* p) {
    return static_cast<uint16_t>((p[0] << 8) | p[1]);
}
uint32_t be32(const unsigned char* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | p[3];
}

struct TlsScan {
    uint32_t total_len = 0;
    uint32_t count = 0;
};

// Walks TLS records that start at the head of a TCP payload. A record that
// declares more bytes than were captured still counts (it continues in a
// later segment).
TlsScan scan_tls_records(const unsigned char* p, size_t n) {
    TlsScan scan;
    size_t off = 0;
    while (off + 5 <= n) {
        uint8_t content_type = p[off];
        uint16_t version = be16(p + off + 1);
        if (content_type < 20 || content_type > 23) break;
        if (version < 0x0301 || version > 0x0303) break;
        uint16_t len = be16(p + off + 3);
        scan.total_len += len;
        scan.count += 1;
        if (off + 5 + len > n) break; // spans beyond this packet
        off += 5 + static_cast<size_t>(len);
    }
    return scan;
}

} // namespace

PcapParseResult parse_pcap(std::istream& in) {
    Reader r{in};

    unsigned char ghdr[24];
    if (!r.read_exact(ghdr, sizeof(ghdr))) {
        throw std::runtime_error("pcap: stream shorter than the global header");
    }
    uint32_t magic;
    std::memcpy(&magic, ghdr, 4);
    if (magic == kPcapNgMagic || __builtin_bswap32(magic) == kPcapNgMagic) {
        throw std::runtime_error("pcap: pcapng unsupported (classic pcap only)");
    }
    if (magic == kPcapMagicLE) {
        r.swap = false;
    } else if (magic == kPcapMagicBE) {
        r.swap = true;
    } else {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "pcap: unsupported format, bad magic 0x%08x", magic);
        throw std::runtime_error(buf);
    }

    PcapParseResult result;
    result.little_endian = !r.swap;
    result.snaplen = r.u32(ghdr + 16);
    uint32_t link_type = r.u32(ghdr + 20);
    if (link_type != kLinkTypeEthernet) {
        throw std::runtime_error("pcap: unsupported link type " + std::to_string(link_type) +
                                 " (Ethernet II only)");
    }

    // Direction assignment key: source IP/port of the first parsed frame.
    bool have_initiator = false;
    uint32_t init_src_ip = 0;
    uint16_t init_src_port = 0;

    // Retransmission detection: highest payload end seen per direction.
    std::array<bool, 2> seen_seq{false, false};
    std::array<uint32_t, 2> max_seq_end{0, 0};

    std::vector<unsigned char> frame;
    for (;;) {
        unsigned char phdr[16];
        in.read(reinterpret_cast<char*>(phdr), sizeof(phdr));
        if (in.gcount() == 0) break; // clean EOF
        if (static_cast<size_t>(in.gcount()) != sizeof(phdr)) {
            ++result.truncated_frames;
            break;
        }
        uint32_t ts_sec = r.u32(phdr);
        uint32_t ts_usec = r.u32(phdr + 4);
        uint32_t incl_len = r.u32(phdr + 8);
        uint32_t orig_len = r.u32(phdr + 12);

        frame.resize(incl_len);
        if (incl_len > 0 && !r.read_exact(frame.data(), incl_len)) {
            ++result.truncated_frames;
            break;
        }

        // Ethernet II
        if (incl_len < 14) {
            ++result.skipped_non_tcp;
            continue;
        }
        uint16_t ethertype = be16(frame.data() + 12);
        if (ethertype != kEthertypeIPv4) {
            ++result.skipped_non_tcp;
            continue;
        }

        // IPv4
        const unsigned char* ip = frame.data() + 14;
        size_t ip_avail = incl_len - 14;
        if (ip_avail < 20 || (ip[0] >> 4) != 4) {
            ++result.skipped_non_tcp;
            continue;
        }
        uint32_t ip_hdr_len = static_cast<uint32_t>(ip[0] & 0x0f) * 4;
        uint16_t ip_total = be16(ip + 2);
        uint8_t proto = ip[9];
        if (proto != kIpProtoTcp || ip_hdr_len < 20 || ip_avail < ip_hdr_len) {
            ++result.skipped_non_tcp;
            continue;
        }
        uint32_t src_ip = be32(ip + 12);

        // TCP
        const unsigned char* tcp = ip + ip_hdr_len;
        size_t tcp_avail = ip_avail - ip_hdr_len;
        if (tcp_avail < 20) {
            ++result.truncated_frames;
            continue;
        }
        uint16_t src_port = be16(tcp);
        uint32_t seq = be32(tcp + 4);
        uint32_t ack = be32(tcp + 8);
        uint32_t tcp_hdr_len = static_cast<uint32_t>(tcp[12] >> 4) * 4;
        uint8_t flag_bits = tcp[13];
        uint16_t window = be16(tcp + 14);
        if (tcp_hdr_len < 20 || tcp_avail < tcp_hdr_len) {
            ++result.truncated_frames;
            continue;
        }
        if (ip_total < ip_hdr_len + tcp_hdr_len) {
            ++result.truncated_frames;
            continue;
        }
        uint32_t payload_len = ip_total - ip_hdr_len - tcp_hdr_len;
        const unsigned char* payload = tcp + tcp_hdr_len;
        size_t payload_avail = std::min<size_t>(tcp_avail - tcp_hdr_len, payload_len);

        if (!have_initiator) {
            have_initiator = true;
            init_src_ip = src_ip;
            init_src_port = src_port;
        }
        Direction dir = (src_ip == init_src_ip && src_port == init_src_port)
                            ? Direction::ControllerToRobot
                            : Direction::RobotToController;

        PacketRecord rec;
        rec.ts = static_cast<double>(ts_sec) + static_cast<double>(ts_usec) * 1e-6;
        rec.dir = dir;
        rec.frame_len = orig_len;
        rec.frame_cap_len = std::min(orig_len, incl_len);
        rec.ip_len = ip_total;
        rec.ip_hdr_len = ip_hdr_len;
        rec.tcp_payload_len = payload_len;
        rec.tcp_hdr_len = tcp_hdr_len;
        rec.tcp_flags.fin = flag_bits & kTcpFin;
        rec.tcp_flags.syn = flag_bits & kTcpSyn;
        rec.tcp_flags.rst = flag_bits & kTcpRst;
        rec.tcp_flags.psh = flag_bits & kTcpPsh;
        rec.tcp_flags.ack = flag_bits & kTcpAck;
        rec.seq = seq;
        rec.ack = ack;
        rec.window_size = window;

        TlsScan tls = scan_tls_records(payload, payload_avail);
        rec.tls_record_len = tls.total_len;
        rec.tls_record_count = tls.count;

        size_t d = static_cast<size_t>(dir);
        uint32_t seq_end = seq + payload_len;
        if (payload_len > 0 && seen_seq[d] &&
            static_cast<int32_t>(seq_end - max_seq_end[d]) <= 0) {
            rec.is_retransmission = true;
        }
        if (payload_len > 0) {
            if (!seen_seq[d] || static_cast<int32_t>(seq_end - max_seq_end[d]) > 0) {
                max_seq_end[d] = seq_end;
            }
            seen_seq[d] = true;
        }

        result.packets.push_back(rec);
    }
    return result;
}

} // namespace teletrace
