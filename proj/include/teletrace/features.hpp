#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "teletrace/trace.hpp"

namespace teletrace {

/// Fixed 16-column per-packet feature schema, in serialization order.
extern const std::array<std::string, 16> kFeatureColumns;

/// Labeled per-packet feature rows. Rows carry the flow they came from so
/// splits can be flow-atomic and predictions can be majority-voted per flow.
struct FeatureMatrix {
    std::vector<std::string> column_names;
    std::vector<std::string> class_names; // label vocabulary, canonical order first
    std::vector<std::string> flow_names;
    std::vector<double> values;           // row-major
    std::vector<int32_t> labels;          // index into class_names
    std::vector<uint32_t> flow_index;     // index into flow_names

    size_t rows() const { return labels.size(); }
    size_t cols() const { return column_names.size(); }
    double at(size_t r, size_t c) const { return values[r * cols() + c]; }
    double& at(size_t r, size_t c) { return values[r * cols() + c]; }
    const std::string& label_name(size_t r) const { return class_names[labels[r]]; }

    size_t column(const std::string& name) const; // throws if absent
    FeatureMatrix select_columns(const std::vector<std::string>& names) const;
};

struct ExtractOptions {
    /// Ingested flows without provenance: packets before the first idle gap
    /// of at least this many seconds are treated as the handshake burst.
    double handshake_gap_s = 0.5;
};

/// One feature row per non-handshake packet of the flow. Synthetic flows
/// identify the handshake by the first-command marker in their meta;
/// ingested flows fall back to the idle-gap heuristic.
std::vector<std::array<double, 16>> extract_features(const FlowTrace& flow,
                                                     const ExtractOptions& opts = {});

/// Extracts and concatenates all flows in input order. Unlabeled flows get
/// the label "Unknown".
FeatureMatrix build_matrix(const std::vector<FlowTrace>& flows, const ExtractOptions& opts = {});

/// CSV: the feature columns, then "label", then "flow_id". Doubles are
/// written shortest-round-trip so files are byte-stable and lossless.
void write_matrix_csv(const FeatureMatrix& matrix, std::ostream& out);
FeatureMatrix read_matrix_csv(std::istream& in);

} // namespace teletrace
