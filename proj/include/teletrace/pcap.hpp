#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "teletrace/trace.hpp"

namespace teletrace {

struct PcapParseResult {
    std::vector<PacketRecord> packets; // one per TCP-over-IPv4 frame, capture order
    uint64_t skipped_non_tcp = 0;      // frames that were not Ethernet/IPv4/TCP
    uint64_t truncated_frames = 0;     // frames cut short by the snap length or EOF
    uint32_t snaplen = 0;
    bool little_endian = true;
};

/// Parses a classic pcap stream (magic 0xa1b2c3d4 / 0xd4c3b2a1, Ethernet II
/// link type). IPv4/TCP frames become PacketRecords; everything else is
/// counted and skipped. TLS record headers at the start of a TCP payload
/// (content type 20..23, version 0x0301..0x0303) fill the tls_* fields with
/// the sum of the record length fields and the record count.
///
/// Direction is keyed on the first frame: packets sharing its source
/// address/port pair are ControllerToRobot (the capture convention is that
/// the controller speaks first).
///
/// Throws on a bad magic number; pcapng input is rejected with an explicit
/// "pcapng unsupported" error.
PcapParseResult parse_pcap(std::istream& in);

} // namespace teletrace
