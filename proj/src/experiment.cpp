#include "teletrace/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "teletrace/rng.hpp"

namespace teletrace {

using ordered_json = nlohmann::ordered_json;

std::string_view transform_name(TransformKind t) {
    switch (t) {
        case TransformKind::None: return "none";
        case TransformKind::FixedCell: return "fixed-cell";
        case TransformKind::ConstantRate: return "constant-rate";
        case TransformKind::Vit: return "vit";
    }
    throw std::logic_error("bad transform kind");
}

TransformKind transform_from_name(std::string_view name) {
    if (name == "none") return TransformKind::None;
    if (name == "fixed-cell") return TransformKind::FixedCell;
    if (name == "constant-rate") return TransformKind::ConstantRate;
    if (name == "vit") return TransformKind::Vit;
    throw std::invalid_argument("unknown transform: " + std::string(name));
}

namespace {

struct TransformSet {
    TransformKind kind;
    FixedCellParams fc;
    ConstantRateParams cr;
    VitParams vit;
    uint64_t seed;
};

FlowTrace transformed(const FlowTrace& flow, const TransformSet& t, uint64_t flow_ordinal) {
    switch (t.kind) {
        case TransformKind::None: return flow;
        case TransformKind::FixedCell: return apply_fixed_cells(flow, t.fc);
        case TransformKind::ConstantRate: return apply_constant_rate(flow, t.cr);
        case TransformKind::Vit: {
            VitParams p = t.vit;
            p.seed = derive_seed(t.seed, "vit-flow", flow_ordinal);
            return apply_vit(flow, p);
        }
    }
    throw std::logic_error("bad transform kind");
}

std::vector<FlowTrace> generate_condition_flows(const ExperimentSpec& spec,
                                                const ConditionSpec& cond, size_t ci) {
    std::vector<FlowTrace> flows;
    size_t nd = cond.distances.size();
    size_t ns = cond.speed_codes.size();
    if (nd == 0 || ns == 0) throw std::invalid_argument("condition has empty parameter pools");

    const auto& movements = all_movement_classes();
    uint64_t ordinal = 0;
    for (size_t mi = 0; mi < movements.size(); ++mi) {
        for (int s = 0; s < spec.samples_per_cell; ++s, ++ordinal) {
            MovementProgram program;
            program.movement = movements[mi];
            program.distance_mm = cond.distances[static_cast<size_t>(s) % nd];
            program.speed_code = cond.speed_codes[(static_cast<size_t>(s) / nd) % ns];
            program.repetitions = cond.repetitions;
            program.command_interval_s = cond.command_interval_s;
            program.command_jitter_mean_s = cond.command_jitter_mean_s;

            LinkParams link = cond.link;
            link.seed = derive_seed(spec.seed, "flow", (ci << 8) | mi,
                                    static_cast<uint64_t>(s));
            char id[96];
            std::snprintf(id, sizeof(id), "c%02zu-%s-s%04d", ci,
                          std::string(movement_name(program.movement)).c_str(), s);
            FlowTrace flow = emulate_session(program, link, spec.tls, spec.emulator, id);

            TransformSet t{spec.transform, spec.fixed_cell, spec.constant_rate, spec.vit,
                           derive_seed(spec.seed, "transform", ci)};
            flows.push_back(transformed(flow, t, ordinal));
        }
    }
    return flows;
}

FeatureMatrix filter_flows(const FeatureMatrix& m, const std::set<std::string>& keep) {
    FeatureMatrix out;
    out.column_names = m.column_names;
    out.class_names = m.class_names;
    out.flow_names = m.flow_names;
    for (size_t r = 0; r < m.rows(); ++r) {
        if (!keep.count(m.flow_names[m.flow_index[r]])) continue;
        for (size_t c = 0; c < m.cols(); ++c) out.values.push_back(m.at(r, c));
        out.labels.push_back(m.labels[r]);
        out.flow_index.push_back(m.flow_index[r]);
    }
    return out;
}

std::set<std::string> flow_names_of(const FeatureMatrix& m) {
    std::set<std::string> names;
    for (size_t r = 0; r < m.rows(); ++r) names.insert(m.flow_names[m.flow_index[r]]);
    return names;
}

} // namespace

ConditionRun run_condition(const ExperimentSpec& spec, size_t condition_index) {
    if (condition_index >= spec.conditions.size()) {
        throw std::invalid_argument("condition index out of range");
    }
    const ConditionSpec& cond = spec.conditions[condition_index];

    std::vector<FlowTrace> flows = generate_condition_flows(spec, cond, condition_index);
    FeatureMatrix raw = build_matrix(flows);
    if (spec.open_world_unknowns > 0) {
        raw = open_world_relabel(raw, spec.open_world_unknowns);
    }

    CleanReport clean_report;
    FeatureMatrix cleaned = clean(raw, &clean_report);

    SplitSpec split_spec;
    split_spec.test_fraction = spec.test_fraction;
    split_spec.validation_fraction_of_train = spec.validation_fraction_of_train;
    split_spec.seed = derive_seed(spec.seed, "split", condition_index);
    Split split = stratified_split(cleaned, split_spec);

    ScalerParams scaler = fit_scaler(split.train);
    FeatureMatrix train_scaled = apply_scaler(scaler, split.train);
    FeatureMatrix val_scaled = apply_scaler(scaler, split.validation);
    FeatureMatrix test_scaled = apply_scaler(scaler, split.test);
    ClassWeights weights = class_weights(split.train);

    ModelConfig config;
    config.alpha = spec.train.alpha;
    config.hidden_size = spec.train.hidden_size;
    config.learning_rate = spec.train.learning_rate;
    config.batch_size = spec.train.batch_size;
    config.epochs = spec.train.epochs;
    config.patience = spec.train.patience;
    config.seed = derive_seed(spec.seed, "train", condition_index);

    TrainResult trained = train(config, train_scaled, val_scaled, weights);
    trained.model.scaler = scaler;

    ConditionRun run;
    run.result.label = cond.label;
    run.result.eval = evaluate(trained.model, test_scaled);
    run.result.cleaning = clean_report;
    run.result.train_rows = split.train.rows();
    run.result.val_rows = split.validation.rows();
    run.result.test_rows = split.test.rows();
    run.result.best_epoch = trained.best_epoch;
    run.raw_test = filter_flows(raw, flow_names_of(split.test));
    if (spec.importance) {
        run.result.importance =
            permutation_importance(trained.model, run.raw_test, spec.importance_repeats,
                                   derive_seed(spec.seed, "importance", condition_index));
    }
    run.model = std::move(trained.model);
    return run;
}

SweepReport run_experiment(const ExperimentSpec& spec) {
    if (spec.conditions.empty()) throw std::invalid_argument("experiment has no conditions");
    SweepReport report;
    report.name = spec.name;
    for (size_t ci = 0; ci < spec.conditions.size(); ++ci) {
        report.cells.push_back(run_condition(spec, ci).result);
    }
    return report;
}

FeatureMatrix open_world_relabel(const FeatureMatrix& matrix, int unknowns) {
    if (unknowns < 0 || unknowns > 6) {
        throw std::invalid_argument("open_world_relabel: unknowns must be in [0, 6]");
    }
    if (unknowns == 0) return matrix;

    const auto& canonical = movement_class_names();
    size_t keep = canonical.size() - static_cast<size_t>(unknowns);

    FeatureMatrix out = matrix;
    out.class_names.clear();
    auto new_index = [&](const std::string& name) -> int32_t {
        for (size_t i = 0; i < out.class_names.size(); ++i) {
            if (out.class_names[i] == name) return static_cast<int32_t>(i);
        }
        out.class_names.push_back(name);
        return static_cast<int32_t>(out.class_names.size() - 1);
    };
    // Known classes first, in canonical order, then Unknown.
    std::vector<int32_t> remap(matrix.class_names.size());
    for (size_t k = 0; k < canonical.size() && k < keep; ++k) {
        for (size_t old = 0; old < matrix.class_names.size(); ++old) {
            if (matrix.class_names[old] == canonical[k]) new_index(canonical[k]);
        }
    }
    int32_t unknown_idx = -1;
    for (size_t old = 0; old < matrix.class_names.size(); ++old) {
        const std::string& name = matrix.class_names[old];
        size_t rank = canonical.size();
        for (size_t k = 0; k < canonical.size(); ++k) {
            if (canonical[k] == name) {
                rank = k;
                break;
            }
        }
        if (rank < keep) {
            remap[old] = new_index(name);
        } else {
            if (unknown_idx < 0) unknown_idx = new_index("Unknown");
            remap[old] = unknown_idx;
        }
    }
    for (auto& l : out.labels) l = remap[l];
    return out;
}

std::vector<FeatureImportance> permutation_importance(const MlpModel& model,
                                                      const FeatureMatrix& raw, int repeats,
                                                      uint64_t seed) {
    if (repeats < 1) throw std::invalid_argument("permutation_importance: repeats must be >= 1");

    auto accuracy_of = [&](const FeatureMatrix& m) {
        FeatureMatrix scaled = apply_pipeline(model, m);
        std::vector<int> preds = predict(model, scaled);
        size_t correct = 0;
        for (size_t r = 0; r < scaled.rows(); ++r) {
            if (preds[r] == scaled.labels[r]) ++correct;
        }
        return scaled.rows() > 0 ? static_cast<double>(correct) / scaled.rows() : 0.0;
    };
    double baseline = accuracy_of(raw);

    std::set<std::string> consumed(model.columns.begin(), model.columns.end());
    std::vector<FeatureImportance> out;
    for (size_t c = 0; c < raw.cols(); ++c) {
        FeatureImportance imp;
        imp.column = raw.column_names[c];
        if (!consumed.count(imp.column)) {
            // Not a model input (dropped as constant): shuffling is a no-op.
            out.push_back(imp);
            continue;
        }
        double drop_sum = 0.0;
        for (int rep = 0; rep < repeats; ++rep) {
            FeatureMatrix shuffled = raw;
            std::vector<size_t> order(raw.rows());
            std::iota(order.begin(), order.end(), 0);
            Rng rng(derive_seed(seed, "perm", c, static_cast<uint64_t>(rep)));
            shuffle(order, rng);
            for (size_t r = 0; r < raw.rows(); ++r) {
                shuffled.at(r, c) = raw.at(order[r], c);
            }
            drop_sum += baseline - accuracy_of(shuffled);
        }
        imp.importance = drop_sum / repeats;
        out.push_back(imp);
    }
    return out;
}

WorkflowReport run_workflow_experiment(const WorkflowExperimentSpec& spec) {
    const auto& templates = spec.templates.empty() ? builtin_templates() : spec.templates;

    // Training pool at the same condition, unless we bypass the classifier.
    std::optional<MlpModel> model;
    WorkflowReport report;
    report.name = spec.name;

    ExperimentSpec train_spec;
    train_spec.name = spec.name + "-train";
    train_spec.seed = derive_seed(spec.seed, "train-pool");
    train_spec.samples_per_cell = spec.samples_per_cell;
    train_spec.emulator = spec.emulator;
    train_spec.tls = spec.tls;
    train_spec.conditions = {spec.condition};
    train_spec.transform = spec.transform;
    train_spec.fixed_cell = spec.fixed_cell;
    train_spec.constant_rate = spec.constant_rate;
    train_spec.vit = spec.vit;
    train_spec.train = spec.train;
    if (!spec.oracle) {
        ConditionRun run = run_condition(train_spec, 0);
        report.movement_eval = run.result.eval;
        model = std::move(run.model);
    }

    WorkflowGenParams gen;
    gen.distances = spec.condition.distances;
    gen.speed_codes = spec.condition.speed_codes;
    gen.repetitions = spec.condition.repetitions;
    gen.command_interval_s = spec.condition.command_interval_s;
    gen.command_jitter_mean_s = spec.condition.command_jitter_mean_s;
    gen.options = spec.emulator;
    gen.tls = spec.tls;

    TransformSet t{spec.transform, spec.fixed_cell, spec.constant_rate, spec.vit,
                   derive_seed(spec.seed, "wf-transform")};

    std::vector<std::pair<ReconstructionResult, std::string>> results;
    uint64_t ordinal = 0;
    for (size_t ti = 0; ti < templates.size(); ++ti) {
        report.workflow_names.push_back(templates[ti].name);
        for (int s = 0; s < spec.samples_per_workflow; ++s) {
            WorkflowSample sample = generate_workflow_trace(
                templates[ti], gen, spec.condition.link, derive_seed(spec.seed, "wf", ti, s));

            std::vector<MovementClass> sequence;
            if (spec.oracle) {
                sequence = sample.truth;
            } else {
                for (FlowTrace& flow : sample.flows) {
                    FlowTrace defended = transformed(flow, t, ordinal++);
                    FeatureMatrix raw = build_matrix({defended});
                    if (raw.rows() == 0) continue; // nothing observable survived
                    FeatureMatrix scaled = apply_pipeline(*model, raw);
                    std::vector<size_t> rows(scaled.rows());
                    std::iota(rows.begin(), rows.end(), 0);
                    int pred = predict_flow(*model, scaled, rows);
                    sequence.push_back(movement_from_name(model->classes[pred]));
                }
            }
            if (sequence.empty()) continue;
            results.emplace_back(reconstruct(sequence, templates), templates[ti].name);
        }
    }

    report.recovery = recovery_rate(results);
    for (const auto& [res, truth] : results) report.samples[truth] += 1;
    double sum = 0.0;
    for (const auto& [name, rate] : report.recovery) sum += rate;
    report.mean_recovery = report.recovery.empty() ? 0.0 : sum / report.recovery.size();
    return report;
}

// --- JSON specs ----------------------------------------------------------------

namespace {

[[noreturn]] void spec_error(const std::string& key, const std::string& what) {
    throw std::runtime_error("spec: key '" + key + "': " + what);
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const std::exception& e) {
        spec_error(key, e.what());
    }
}

template <typename T>
T get_req(const nlohmann::json& j, const std::string& key) {
    if (!j.contains(key)) spec_error(key, "missing");
    try {
        return j.at(key).get<T>();
    } catch (const std::exception& e) {
        spec_error(key, e.what());
    }
}

LinkParams link_from_json(const nlohmann::json& j) {
    LinkParams link;
    link.delay_ms = get_or(j, "delay_ms", link.delay_ms);
    link.loss_pct = get_or(j, "loss_pct", link.loss_pct);
    link.bandwidth_mbps = get_or(j, "bandwidth_mbps", link.bandwidth_mbps);
    return link;
}

ConditionSpec condition_from_json(const nlohmann::json& j) {
    ConditionSpec c;
    c.label = get_or<std::string>(j, "label", c.label);
    c.distances = get_or(j, "distances", c.distances);
    c.speed_codes = get_or(j, "speed_codes", c.speed_codes);
    c.repetitions = get_or(j, "repetitions", c.repetitions);
    c.command_interval_s = get_or(j, "command_interval_s", c.command_interval_s);
    c.command_jitter_mean_s = get_or(j, "command_jitter_mean_s", c.command_jitter_mean_s);
    if (j.contains("link")) c.link = link_from_json(j.at("link"));
    return c;
}

TrainSpec train_from_json(const nlohmann::json& j) {
    TrainSpec t;
    t.epochs = get_or(j, "epochs", t.epochs);
    t.batch_size = get_or(j, "batch_size", t.batch_size);
    t.learning_rate = get_or(j, "learning_rate", t.learning_rate);
    t.patience = get_or(j, "patience", t.patience);
    t.hidden_size = get_or(j, "hidden_size", t.hidden_size);
    t.alpha = get_or(j, "alpha", t.alpha);
    return t;
}

void common_from_json(const nlohmann::json& j, EmulatorOptions& emu, TlsChannelModel& tls) {
    if (j.contains("base_position")) {
        emu.base_position = get_req<std::array<double, 3>>(j, "base_position");
    }
    if (j.contains("reply_jitter")) {
        auto rj = get_req<std::array<double, 2>>(j, "reply_jitter");
        emu.reply_jitter_min_s = rj[0];
        emu.reply_jitter_max_s = rj[1];
    }
    if (j.contains("axis_time_gains")) {
        emu.axis_time_gains = get_req<std::array<double, 3>>(j, "axis_time_gains");
    }
    tls.handshake_packet_count = get_or(j, "handshake_packets", tls.handshake_packet_count);
}

void transforms_from_json(const nlohmann::json& j, TransformKind& kind, FixedCellParams& fc,
                          ConstantRateParams& cr, VitParams& vit) {
    kind = transform_from_name(get_or<std::string>(j, "transform", "none"));
    if (!j.contains("transform_params")) return;
    const auto& tp = j.at("transform_params");
    if (tp.contains("fixed_cell")) {
        const auto& p = tp.at("fixed_cell");
        fc.cell_size = get_or(p, "cell_size", fc.cell_size);
        fc.per_cell_overhead = get_or(p, "per_cell_overhead", fc.per_cell_overhead);
        fc.constant_window = get_or(p, "constant_window", fc.constant_window);
    }
    if (tp.contains("constant_rate")) {
        const auto& p = tp.at("constant_rate");
        cr.interval_s = get_or(p, "interval_s", cr.interval_s);
        cr.packet_size = get_or(p, "packet_size", cr.packet_size);
        cr.per_packet_overhead = get_or(p, "per_packet_overhead", cr.per_packet_overhead);
    }
    if (tp.contains("vit")) {
        const auto& p = tp.at("vit");
        vit.min_delay_s = get_or(p, "min_delay_s", vit.min_delay_s);
        vit.max_delay_s = get_or(p, "max_delay_s", vit.max_delay_s);
    }
}

nlohmann::json parse_stream(std::istream& in) {
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("spec: invalid JSON: ") + e.what());
    }
}

} // namespace

GenerateSpec generate_spec_from_json(std::istream& in) {
    nlohmann::json j = parse_stream(in);
    GenerateSpec spec;
    spec.seed = get_or<uint64_t>(j, "seed", spec.seed);
    spec.samples_per_cell = get_or(j, "samples_per_cell", spec.samples_per_cell);
    common_from_json(j, spec.emulator, spec.tls);

    if (!j.contains("cells") || !j.at("cells").is_array() || j.at("cells").empty()) {
        spec_error("cells", "must be a non-empty array");
    }
    for (const auto& cell : j.at("cells")) {
        MovementProgram program;
        program.distance_mm = get_or(cell, "distance_mm", program.distance_mm);
        program.speed_code = get_or(cell, "speed_code", program.speed_code);
        program.repetitions = get_or(cell, "repetitions", program.repetitions);
        program.command_interval_s =
            get_or(cell, "command_interval_s", program.command_interval_s);
        program.command_jitter_mean_s =
            get_or(cell, "command_jitter_mean_s", program.command_jitter_mean_s);
        LinkParams link;
        if (cell.contains("link")) link = link_from_json(cell.at("link"));

        std::string movement = get_or<std::string>(cell, "movement", "all");
        if (movement == "all") {
            for (MovementClass m : all_movement_classes()) {
                program.movement = m;
                spec.grid.emplace_back(program, link);
            }
        } else {
            program.movement = movement_from_name(movement);
            spec.grid.emplace_back(program, link);
        }
    }
    return spec;
}

ExperimentSpec experiment_spec_from_json(std::istream& in) {
    nlohmann::json j = parse_stream(in);
    ExperimentSpec spec;
    spec.name = get_or<std::string>(j, "name", spec.name);
    spec.seed = get_or<uint64_t>(j, "seed", spec.seed);
    spec.samples_per_cell = get_or(j, "samples_per_cell", spec.samples_per_cell);
    common_from_json(j, spec.emulator, spec.tls);
    transforms_from_json(j, spec.transform, spec.fixed_cell, spec.constant_rate, spec.vit);
    spec.open_world_unknowns = get_or(j, "open_world_unknowns", spec.open_world_unknowns);
    if (j.contains("train")) spec.train = train_from_json(j.at("train"));
    if (j.contains("split")) {
        spec.test_fraction = get_or(j.at("split"), "test_fraction", spec.test_fraction);
        spec.validation_fraction_of_train = get_or(
            j.at("split"), "validation_fraction_of_train", spec.validation_fraction_of_train);
    }
    spec.importance = get_or(j, "importance", spec.importance);
    spec.importance_repeats = get_or(j, "importance_repeats", spec.importance_repeats);

    if (!j.contains("conditions") || !j.at("conditions").is_array() ||
        j.at("conditions").empty()) {
        spec_error("conditions", "must be a non-empty array");
    }
    for (const auto& c : j.at("conditions")) spec.conditions.push_back(condition_from_json(c));
    return spec;
}

WorkflowExperimentSpec workflow_spec_from_json(std::istream& in) {
    nlohmann::json j = parse_stream(in);
    WorkflowExperimentSpec spec;
    spec.name = get_or<std::string>(j, "name", spec.name);
    spec.seed = get_or<uint64_t>(j, "seed", spec.seed);
    spec.samples_per_cell = get_or(j, "samples_per_cell", spec.samples_per_cell);
    spec.samples_per_workflow = get_or(j, "samples_per_workflow", spec.samples_per_workflow);
    common_from_json(j, spec.emulator, spec.tls);
    transforms_from_json(j, spec.transform, spec.fixed_cell, spec.constant_rate, spec.vit);
    if (j.contains("train")) spec.train = train_from_json(j.at("train"));
    if (!j.contains("condition")) spec_error("condition", "missing");
    spec.condition = condition_from_json(j.at("condition"));
    spec.oracle = get_or(j, "oracle", spec.oracle);
    return spec;
}

// --- report rendering -----------------------------------------------------------

namespace {

ordered_json metrics_to_json(const MetricsBlock& block, const std::vector<std::string>& classes) {
    ordered_json j;
    j["accuracy"] = block.accuracy;
    j["macro_precision"] = block.macro_precision();
    j["macro_recall"] = block.macro_recall();
    ordered_json per = ordered_json::array();
    for (const auto& c : block.per_class) {
        per.push_back({{"class", c.name},
                       {"precision", c.precision},
                       {"recall", c.recall},
                       {"support", c.support}});
    }
    j["per_class"] = per;
    j["confusion"] = block.confusion;
    j["classes"] = classes;
    return j;
}

MetricsBlock metrics_from_json(const ordered_json& j) {
    MetricsBlock block;
    block.accuracy = j.at("accuracy").get<double>();
    for (const auto& c : j.at("per_class")) {
        ClassMetrics cm;
        cm.name = c.at("class").get<std::string>();
        cm.precision = c.at("precision").get<double>();
        cm.recall = c.at("recall").get<double>();
        cm.support = c.at("support").get<uint64_t>();
        block.per_class.push_back(cm);
    }
    block.confusion = j.at("confusion").get<std::vector<uint64_t>>();
    return block;
}

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f%%", v * 100.0);
    return buf;
}

} // namespace

void eval_report_json(const EvalReport& report, std::ostream& out) {
    ordered_json j;
    j["classes"] = report.classes;
    j["rows"] = metrics_to_json(report.rows, report.classes);
    j["flows"] = metrics_to_json(report.flows, report.classes);
    out << j.dump(2) << '\n';
}

void save_sweep_json(const SweepReport& report, std::ostream& out) {
    ordered_json j;
    j["name"] = report.name;
    ordered_json cells = ordered_json::array();
    for (const auto& cell : report.cells) {
        ordered_json cj;
        cj["label"] = cell.label;
        cj["classes"] = cell.eval.classes;
        cj["rows"] = metrics_to_json(cell.eval.rows, cell.eval.classes);
        cj["flows"] = metrics_to_json(cell.eval.flows, cell.eval.classes);
        cj["dropped_columns"] = cell.cleaning.dropped_columns;
        cj["dropped_rows"] = cell.cleaning.dropped_rows;
        cj["train_rows"] = cell.train_rows;
        cj["val_rows"] = cell.val_rows;
        cj["test_rows"] = cell.test_rows;
        cj["best_epoch"] = cell.best_epoch;
        ordered_json imp = ordered_json::array();
        for (const auto& fi : cell.importance) {
            imp.push_back({{"column", fi.column}, {"importance", fi.importance}});
        }
        cj["importance"] = imp;
        cells.push_back(cj);
    }
    j["cells"] = cells;
    out << j.dump(2) << '\n';
}

SweepReport load_sweep_json(std::istream& in) {
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("report parse: ") + e.what());
    }
    SweepReport report;
    report.name = j.at("name").get<std::string>();
    for (const auto& cj : j.at("cells")) {
        CellResult cell;
        cell.label = cj.at("label").get<std::string>();
        cell.eval.classes = cj.at("classes").get<std::vector<std::string>>();
        cell.eval.rows = metrics_from_json(cj.at("rows"));
        cell.eval.flows = metrics_from_json(cj.at("flows"));
        cell.cleaning.dropped_columns =
            cj.at("dropped_columns").get<std::vector<std::string>>();
        cell.cleaning.dropped_rows = cj.at("dropped_rows").get<size_t>();
        cell.train_rows = cj.at("train_rows").get<size_t>();
        cell.val_rows = cj.at("val_rows").get<size_t>();
        cell.test_rows = cj.at("test_rows").get<size_t>();
        cell.best_epoch = cj.at("best_epoch").get<int>();
        for (const auto& fi : cj.at("importance")) {
            cell.importance.push_back(
                {fi.at("column").get<std::string>(), fi.at("importance").get<double>()});
        }
        report.cells.push_back(cell);
    }
    return report;
}

void render_sweep_markdown(const SweepReport& report, std::ostream& out) {
    if (report.cells.empty()) throw std::invalid_argument("render: empty report");

    // Union of classes, keeping first-seen order (cells usually agree).
    std::vector<std::string> classes;
    for (const auto& cell : report.cells) {
        for (const auto& c : cell.eval.classes) {
            if (std::find(classes.begin(), classes.end(), c) == classes.end()) {
                classes.push_back(c);
            }
        }
    }

    out << "# " << report.name << "\n\n";
    for (int block = 0; block < 2; ++block) {
        out << (block == 0 ? "## Per-packet results\n\n" : "## Per-flow results\n\n");
        out << "| Movement |";
        for (const auto& cell : report.cells) out << ' ' << cell.label << " P | R |";
        out << "\n|---|";
        for (size_t i = 0; i < report.cells.size(); ++i) out << "---|---|";
        out << '\n';
        for (const auto& cls : classes) {
            out << "| " << cls << " |";
            for (const auto& cell : report.cells) {
                const MetricsBlock& mb = block == 0 ? cell.eval.rows : cell.eval.flows;
                bool found = false;
                for (const auto& cm : mb.per_class) {
                    if (cm.name == cls) {
                        if (cm.support > 0) {
                            out << ' ' << pct(cm.precision) << " | " << pct(cm.recall) << " |";
                        } else {
                            out << " - | - |";
                        }
                        found = true;
                        break;
                    }
                }
                if (!found) out << " - | - |";
            }
            out << '\n';
        }
        out << "| **accuracy** |";
        for (const auto& cell : report.cells) {
            const MetricsBlock& mb = block == 0 ? cell.eval.rows : cell.eval.flows;
            out << ' ' << pct(mb.accuracy) << " | macro-R " << pct(mb.macro_recall()) << " |";
        }
        out << "\n\n";
    }
}

void render_sweep_csv(const SweepReport& report, std::ostream& out) {
    if (report.cells.empty()) throw std::invalid_argument("render: empty report");
    out << "cell,level,class,precision,recall,support,accuracy,macro_recall\n";
    for (const auto& cell : report.cells) {
        for (int block = 0; block < 2; ++block) {
            const MetricsBlock& mb = block == 0 ? cell.eval.rows : cell.eval.flows;
            const char* level = block == 0 ? "packet" : "flow";
            for (const auto& cm : mb.per_class) {
                out << cell.label << ',' << level << ',' << cm.name << ',' << cm.precision
                    << ',' << cm.recall << ',' << cm.support << ",,\n";
            }
            out << cell.label << ',' << level << ",ALL,,,," << mb.accuracy << ','
                << mb.macro_recall() << '\n';
        }
    }
}

void render_importance_csv(const std::vector<FeatureImportance>& imp, std::ostream& out) {
    out << "feature,importance\n";
    for (const auto& fi : imp) out << fi.column << ',' << fi.importance << '\n';
}

std::string importance_svg(const std::vector<FeatureImportance>& imp,
                           const std::string& title) {
    if (imp.empty()) throw std::invalid_argument("importance_svg: no data");
    const int bar_h = 18, gap = 6, left = 170, width = 560, top = 30;
    int height = top + static_cast<int>(imp.size()) * (bar_h + gap) + 10;
    double max_abs = 1e-9;
    for (const auto& fi : imp) max_abs = std::max(max_abs, std::fabs(fi.importance));

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    svg << "<text x=\"8\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\">" << title
        << "</text>\n";
    int y = top;
    for (const auto& fi : imp) {
        double frac = std::fabs(fi.importance) / max_abs;
        int w = static_cast<int>(frac * (width - left - 60));
        svg << "<text x=\"" << left - 6 << "\" y=\"" << y + bar_h - 5
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
            << fi.column << "</text>\n";
        svg << "<rect x=\"" << left << "\" y=\"" << y << "\" width=\"" << std::max(1, w)
            << "\" height=\"" << bar_h << "\" fill=\""
            << (fi.importance >= 0 ? "#4878a8" : "#a84848") << "\"/>\n";
        char val[32];
        std::snprintf(val, sizeof(val), "%.4f", fi.importance);
        svg << "<text x=\"" << left + std::max(1, w) + 4 << "\" y=\"" << y + bar_h - 5
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << val << "</text>\n";
        y += bar_h + gap;
    }
    svg << "</svg>\n";
    return svg.str();
}

void render_workflow_markdown(const WorkflowReport& report, std::ostream& out) {
    out << "# " << report.name << "\n\n";
    out << "| Operation | Recovery Rate | Samples |\n|---|---|---|\n";
    for (const auto& name : report.workflow_names) {
        auto it = report.recovery.find(name);
        if (it == report.recovery.end()) continue;
        out << "| " << name << " | " << pct(it->second) << " | " << report.samples.at(name)
            << " |\n";
    }
    out << "\nMean recovery: " << pct(report.mean_recovery) << "\n";
    if (report.movement_eval) {
        out << "\nMovement classifier per-flow macro recall: "
            << pct(report.movement_eval->flows.macro_recall()) << "\n";
    }
}

void save_workflow_json(const WorkflowReport& report, std::ostream& out) {
    ordered_json j;
    j["name"] = report.name;
    j["workflows"] = report.workflow_names;
    j["recovery"] = report.recovery;
    j["samples"] = report.samples;
    j["mean_recovery"] = report.mean_recovery;
    if (report.movement_eval) {
        std::ostringstream tmp;
        eval_report_json(*report.movement_eval, tmp);
        j["movement_eval"] = ordered_json::parse(tmp.str());
    }
    out << j.dump(2) << '\n';
}

} // namespace teletrace
