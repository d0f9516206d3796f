#include "teletrace/workflow.hpp"

#include <algorithm>
#include <istream>
#include <stdexcept>

#include <json.hpp>

#include "teletrace/rng.hpp"

namespace teletrace {

namespace {

std::vector<MovementClass> seq(std::initializer_list<const char*> names) {
    std::vector<MovementClass> s;
    for (const char* n : names) s.push_back(movement_from_name(n));
    return s;
}

} // namespace

const std::vector<WorkflowTemplate>& builtin_templates() {
    static const std::vector<WorkflowTemplate> templates = [] {
        std::vector<WorkflowTemplate> t;
        // Diagonal approach then a straight push along X; optionally a
        // retract on Z. Pull mirrors it along Y.
        t.push_back({"Push",
                     {seq({"XY", "X"}), seq({"XY", "X", "Z"})},
                     2, 3});
        t.push_back({"Pull",
                     {seq({"XY", "Y"}), seq({"XY", "Y", "Z"})},
                     2, 3});
        // Travel, lower/grip, raise, travel, lower/release, raise, return.
        t.push_back({"PickAndPlace",
                     {seq({"XY", "Z", "Z", "XY", "Z", "Z", "XY"}),
                      seq({"XY", "XY", "Z", "Z", "XY", "Z", "Z", "XY"}),
                      seq({"XY", "Z", "Z", "XY", "Z", "Z", "XY", "XY"}),
                      seq({"XY", "XY", "Z", "Z", "XY", "Z", "Z", "XY", "XY"})},
                     7, 9});
        // Repeated travel-and-drop cycles into a container.
        t.push_back({"Packing",
                     {seq({"XY", "Z", "XY", "Z", "XY", "Z"}),
                      seq({"XY", "Z", "XY", "Z", "XY", "Z", "XY"}),
                      seq({"XY", "Z", "XY", "Z", "XY", "Z", "XY", "Z"}),
                      seq({"XY", "Z", "XY", "Z", "XY", "Z", "XY", "Z", "XY"})},
                     6, 9});
        for (const auto& tmpl : t) {
            for (const auto& s : tmpl.sequences) {
                int len = static_cast<int>(s.size());
                if (len < tmpl.min_len || len > tmpl.max_len) {
                    throw std::logic_error("template sequence length outside declared range");
                }
            }
        }
        return t;
    }();
    return templates;
}

std::vector<WorkflowTemplate> templates_from_json(std::istream& in) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("template parse: ") + e.what());
    }
    if (!j.is_array() || j.empty()) {
        throw std::runtime_error("template parse: expected a non-empty array");
    }
    std::vector<WorkflowTemplate> out;
    for (const auto& entry : j) {
        WorkflowTemplate t;
        t.name = entry.at("name").get<std::string>();
        auto range = entry.at("range").get<std::vector<int>>();
        if (range.size() != 2) throw std::runtime_error("template parse: range must be [min,max]");
        t.min_len = range[0];
        t.max_len = range[1];
        for (const auto& s : entry.at("sequences")) {
            std::vector<MovementClass> movements;
            for (const auto& name : s) movements.push_back(movement_from_name(name.get<std::string>()));
            if (static_cast<int>(movements.size()) < t.min_len ||
                static_cast<int>(movements.size()) > t.max_len) {
                throw std::runtime_error("template parse: sequence length outside range for " +
                                         t.name);
            }
            t.sequences.push_back(std::move(movements));
        }
        if (t.sequences.empty()) throw std::runtime_error("template parse: no sequences for " + t.name);
        out.push_back(std::move(t));
    }
    return out;
}

size_t edit_distance(const std::vector<MovementClass>& a, const std::vector<MovementClass>& b) {
    size_t n = a.size(), m = b.size();
    std::vector<size_t> prev(m + 1), cur(m + 1);
    for (size_t j = 0; j <= m; ++j) prev[j] = j;
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (size_t j = 1; j <= m; ++j) {
            size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

ReconstructionResult reconstruct(const std::vector<MovementClass>& classified,
                                 const std::vector<WorkflowTemplate>& templates) {
    if (classified.empty()) throw std::invalid_argument("reconstruct: empty movement sequence");
    if (templates.empty()) throw std::invalid_argument("reconstruct: no templates");

    struct Best {
        size_t distance = SIZE_MAX;
        size_t seq_len = SIZE_MAX;
        size_t order = SIZE_MAX;
        const WorkflowTemplate* tmpl = nullptr;
    };
    Best best, second;

    for (size_t ti = 0; ti < templates.size(); ++ti) {
        size_t d = SIZE_MAX, len = SIZE_MAX;
        for (const auto& s : templates[ti].sequences) {
            size_t dist = edit_distance(classified, s);
            if (dist < d || (dist == d && s.size() < len)) {
                d = dist;
                len = s.size();
            }
        }
        Best cand{d, len, ti, &templates[ti]};
        auto better = [](const Best& x, const Best& y) {
            if (x.distance != y.distance) return x.distance < y.distance;
            if (x.seq_len != y.seq_len) return x.seq_len < y.seq_len;
            return x.order < y.order;
        };
        if (better(cand, best)) {
            second = best;
            best = cand;
        } else if (better(cand, second)) {
            second = cand;
        }
    }

    ReconstructionResult result;
    result.workflow = best.tmpl->name;
    result.distance = best.distance;
    result.runner_up = second.distance;
    result.ambiguous = second.distance == best.distance;
    return result;
}

std::map<std::string, double> recovery_rate(
    const std::vector<std::pair<ReconstructionResult, std::string>>& results) {
    if (results.empty()) throw std::invalid_argument("recovery_rate: no results");
    std::map<std::string, size_t> total, correct;
    for (const auto& [res, truth] : results) {
        total[truth] += 1;
        if (res.workflow == truth) correct[truth] += 1;
    }
    std::map<std::string, double> rates;
    for (const auto& [name, n] : total) {
        rates[name] = static_cast<double>(correct[name]) / static_cast<double>(n);
    }
    return rates;
}

WorkflowSample generate_workflow_trace(const WorkflowTemplate& tmpl,
                                       const WorkflowGenParams& params, const LinkParams& link,
                                       uint64_t seed) {
    if (tmpl.sequences.empty()) throw std::invalid_argument("workflow template has no sequences");
    Rng rng(derive_seed(seed, "workflow"));
    const auto& sequence = tmpl.sequences[rng.bounded(tmpl.sequences.size())];

    WorkflowSample sample;
    sample.workflow = tmpl.name;
    sample.truth = sequence;
    for (size_t step = 0; step < sequence.size(); ++step) {
        MovementProgram program;
        program.movement = sequence[step];
        program.distance_mm = params.distances[rng.bounded(params.distances.size())];
        program.speed_code = params.speed_codes[rng.bounded(params.speed_codes.size())];
        program.repetitions = params.repetitions;
        program.command_interval_s = params.command_interval_s;
        program.command_jitter_mean_s = params.command_jitter_mean_s;

        LinkParams step_link = link;
        step_link.seed = derive_seed(seed, "wfstep", step);
        std::string id = tmpl.name + "-s" + std::to_string(seed) + "-step" +
                         std::to_string(step) + "-" +
                         std::string(movement_name(program.movement));
        sample.flows.push_back(
            emulate_session(program, step_link, params.tls, params.options, id));
    }
    return sample;
}

} // namespace teletrace
