#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "teletrace/emulator.hpp"

namespace teletrace {

/// One warehousing workflow: its canonical movement sequences and the
/// position-change count range they must lie in.
struct WorkflowTemplate {
    std::string name;
    std::vector<std::vector<MovementClass>> sequences;
    int min_len = 0;
    int max_len = 0;
};

/// Push, Pull, PickAndPlace and Packing, in declaration order.
const std::vector<WorkflowTemplate>& builtin_templates();

/// Templates can be overridden from JSON: [{"name", "sequences", "range"}]
/// with sequences as arrays of movement names and range as [min, max].
std::vector<WorkflowTemplate> templates_from_json(std::istream& in);

/// Levenshtein distance with unit costs.
size_t edit_distance(const std::vector<MovementClass>& a, const std::vector<MovementClass>& b);

struct ReconstructionResult {
    std::string workflow;
    size_t distance = 0;   // to the best-matching canonical sequence
    size_t runner_up = 0;  // best distance among the other workflows
    bool ambiguous = false;
};

/// Nearest-template matching. Ties set the ambiguous flag and break on the
/// shorter canonical sequence, then declaration order.
ReconstructionResult reconstruct(const std::vector<MovementClass>& classified,
                                 const std::vector<WorkflowTemplate>& templates);

/// Per-workflow fraction of correct reconstructions; workflows with no
/// samples are absent from the map.
std::map<std::string, double> recovery_rate(
    const std::vector<std::pair<ReconstructionResult, std::string>>& results);

/// Parameter pool a workflow generator draws per-movement values from.
struct WorkflowGenParams {
    std::vector<double> distances{1.0};
    std::vector<int> speed_codes{25000};
    int repetitions = 15;
    double command_interval_s = 1.0;
    double command_jitter_mean_s = 0.0;
    EmulatorOptions options;
    TlsChannelModel tls;
};

struct WorkflowSample {
    std::vector<FlowTrace> flows; // one per movement, in order
    std::vector<MovementClass> truth;
    std::string workflow;
};

/// Samples one canonical sequence of the template and emits one labeled flow
/// per movement; per-movement distance/speed are drawn from the configured
/// pools. Deterministic given the seed.
WorkflowSample generate_workflow_trace(const WorkflowTemplate& tmpl,
                                       const WorkflowGenParams& params, const LinkParams& link,
                                       uint64_t seed);

} // namespace teletrace
