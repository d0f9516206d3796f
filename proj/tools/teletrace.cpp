// Command-line front end: synthesizes robot-session traffic, ingests pcap
// captures, extracts features, trains/evaluates the movement classifier, runs
// the experiment sweeps and workflow reconstruction, and applies channel
// defenses. Every subcommand records a manifest (config + seed) next to its
// outputs and writes files atomically.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "teletrace/dataset.hpp"
#include "teletrace/emulator.hpp"
#include "teletrace/experiment.hpp"
#include "teletrace/features.hpp"
#include "teletrace/mlp.hpp"
#include "teletrace/pcap.hpp"
#include "teletrace/rng.hpp"
#include "teletrace/trace.hpp"
#include "teletrace/workflow.hpp"

namespace fs = std::filesystem;
using namespace teletrace;
using ordered_json = nlohmann::ordered_json;

namespace {

struct StageError : std::runtime_error {
    StageError(const std::string& stage, const std::string& what)
        : std::runtime_error(stage + ": " + what) {}
};

template <typename Fn>
void atomic_write(const fs::path& path, Fn&& fill) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw StageError("write", "cannot open " + tmp.string());
        fill(out);
        if (!out) throw StageError("write", "failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::ifstream open_input(const std::string& path, const std::string& stage) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StageError(stage, "cannot read " + path);
    return in;
}

ordered_json file_json(const std::string& path, const std::string& stage) {
    std::ifstream in = open_input(path, stage);
    try {
        ordered_json j;
        in >> j;
        return j;
    } catch (const std::exception& e) {
        throw StageError(stage, path + ": " + e.what());
    }
}

void write_manifest(const fs::path& out_path, const std::string& command,
                    const ordered_json& config, const ordered_json& outputs) {
    ordered_json m;
    m["tool"] = "teletrace";
    m["command"] = command;
    m["config"] = config;
    m["outputs"] = outputs;
    fs::path path = out_path;
    path += ".manifest.json";
    atomic_write(path, [&](std::ostream& os) { os << m.dump(2) << '\n'; });
}

// --- subcommands ---------------------------------------------------------------

int cmd_generate(const std::string& grid_path, const std::string& out_path,
                 uint64_t seed_flag, bool has_seed) {
    std::ifstream in = open_input(grid_path, "generate");
    GenerateSpec spec;
    try {
        spec = generate_spec_from_json(in);
    } catch (const std::exception& e) {
        throw StageError("generate", e.what());
    }
    if (has_seed) spec.seed = seed_flag;

    auto flows = generate_dataset(spec.grid, spec.samples_per_cell, spec.seed, spec.tls,
                                  spec.emulator);
    size_t packets = 0, aborted = 0;
    for (const auto& f : flows) {
        packets += f.packets.size();
        if (f.meta && f.meta->aborted) ++aborted;
    }
    atomic_write(out_path, [&](std::ostream& os) { write_canonical(flows, os); });

    write_manifest(out_path, "generate",
                   ordered_json{{"grid", file_json(grid_path, "generate")},
                                {"seed", spec.seed}},
                   ordered_json{{"traces", out_path},
                                {"flows", flows.size()},
                                {"packets", packets},
                                {"aborted_flows", aborted}});
    std::cout << "generate: " << flows.size() << " flows, " << packets << " packets -> "
              << out_path << "\n";
    return 0;
}

int cmd_import(const std::string& pcap_path, const std::string& out_path, double gap) {
    std::ifstream in = open_input(pcap_path, "import");
    PcapParseResult parsed;
    try {
        parsed = parse_pcap(in);
    } catch (const std::exception& e) {
        throw StageError("import", e.what());
    }
    auto flows = assemble_flows(parsed.packets, gap);
    atomic_write(out_path, [&](std::ostream& os) { write_canonical(flows, os); });

    write_manifest(out_path, "import",
                   ordered_json{{"pcap", pcap_path}, {"idle_gap_s", gap}},
                   ordered_json{{"traces", out_path},
                                {"flows", flows.size()},
                                {"packets", parsed.packets.size()},
                                {"skipped_non_tcp", parsed.skipped_non_tcp},
                                {"truncated_frames", parsed.truncated_frames}});
    std::cout << "import: " << parsed.packets.size() << " packets ("
              << parsed.skipped_non_tcp << " skipped) in " << flows.size() << " flows -> "
              << out_path << "\n";
    return 0;
}

int cmd_extract(const std::string& traces_path, const std::string& out_path,
                double handshake_gap) {
    std::ifstream in = open_input(traces_path, "extract");
    std::vector<FlowTrace> flows;
    try {
        flows = read_canonical(in);
    } catch (const std::exception& e) {
        throw StageError("extract", e.what());
    }
    ExtractOptions opts;
    opts.handshake_gap_s = handshake_gap;
    FeatureMatrix matrix = build_matrix(flows, opts);
    atomic_write(out_path, [&](std::ostream& os) { write_matrix_csv(matrix, os); });

    write_manifest(out_path, "extract",
                   ordered_json{{"traces", traces_path}, {"handshake_gap_s", handshake_gap}},
                   ordered_json{{"matrix", out_path},
                                {"rows", matrix.rows()},
                                {"flows", matrix.flow_names.size()}});
    std::cout << "extract: " << matrix.rows() << " rows from " << matrix.flow_names.size()
              << " flows -> " << out_path << "\n";
    return 0;
}

struct TrainFlags {
    int epochs = 120;
    int batch = 8;
    double lr = 0.00001;
    int patience = 20;
    int hidden = 0;
    double alpha = 2.0;
    uint64_t seed = 1;
    double test_fraction = 0.2;
    double val_fraction = 0.2;
};

int cmd_train(const std::string& matrix_path, const std::string& out_path,
              const TrainFlags& flags) {
    std::ifstream in = open_input(matrix_path, "train");
    FeatureMatrix raw = read_matrix_csv(in);

    CleanReport clean_report;
    FeatureMatrix cleaned = clean(raw, &clean_report);
    SplitSpec split_spec;
    split_spec.test_fraction = flags.test_fraction;
    split_spec.validation_fraction_of_train = flags.val_fraction;
    split_spec.seed = derive_seed(flags.seed, "split");
    Split split = stratified_split(cleaned, split_spec);
    ScalerParams scaler = fit_scaler(split.train);
    ClassWeights weights = class_weights(split.train);

    ModelConfig config;
    config.hidden_size = flags.hidden;
    config.alpha = flags.alpha;
    config.learning_rate = flags.lr;
    config.batch_size = flags.batch;
    config.epochs = flags.epochs;
    config.patience = flags.patience;
    config.seed = derive_seed(flags.seed, "train");

    TrainResult result = train(config, apply_scaler(scaler, split.train),
                               apply_scaler(scaler, split.validation), weights);
    result.model.scaler = scaler;

    EvalReport eval = evaluate(result.model, apply_scaler(scaler, split.test));
    atomic_write(out_path, [&](std::ostream& os) { save_model(result.model, os); });

    fs::path eval_path = fs::path(out_path).replace_extension("eval.json");
    atomic_write(eval_path, [&](std::ostream& os) { eval_report_json(eval, os); });
    fs::path curve_path = fs::path(out_path).replace_extension("curve.csv");
    atomic_write(curve_path, [&](std::ostream& os) {
        os << "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
        for (size_t e = 0; e < result.curve.size(); ++e) {
            const EpochStats& s = result.curve[e];
            os << e << ',' << s.train_loss << ',' << s.train_accuracy << ',' << s.val_loss
               << ',' << s.val_accuracy << '\n';
        }
    });

    write_manifest(out_path, "train",
                   ordered_json{{"matrix", matrix_path},
                                {"epochs", flags.epochs},
                                {"batch_size", flags.batch},
                                {"learning_rate", flags.lr},
                                {"patience", flags.patience},
                                {"hidden_size", flags.hidden},
                                {"alpha", flags.alpha},
                                {"seed", flags.seed}},
                   ordered_json{{"model", out_path},
                                {"eval", eval_path.string()},
                                {"curve", curve_path.string()},
                                {"dropped_columns", clean_report.dropped_columns},
                                {"best_epoch", result.best_epoch},
                                {"test_row_accuracy", eval.rows.accuracy},
                                {"test_flow_macro_recall", eval.flows.macro_recall()}});
    std::cout << "train: best epoch " << result.best_epoch << ", test row accuracy "
              << eval.rows.accuracy << ", flow macro recall " << eval.flows.macro_recall()
              << " -> " << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& matrix_path,
             const std::string& out_path, const std::string& md_path) {
    std::ifstream min = open_input(model_path, "eval");
    MlpModel model = load_model(min);
    std::ifstream input = open_input(matrix_path, "eval");
    FeatureMatrix raw = read_matrix_csv(input);
    EvalReport report = evaluate_raw(model, raw);

    atomic_write(out_path, [&](std::ostream& os) { eval_report_json(report, os); });
    if (!md_path.empty()) {
        SweepReport sweep;
        sweep.name = "evaluation";
        CellResult cell;
        cell.label = fs::path(matrix_path).stem().string();
        cell.eval = report;
        sweep.cells.push_back(cell);
        atomic_write(md_path, [&](std::ostream& os) { render_sweep_markdown(sweep, os); });
    }
    write_manifest(out_path, "eval",
                   ordered_json{{"model", model_path}, {"matrix", matrix_path}},
                   ordered_json{{"eval", out_path},
                                {"row_accuracy", report.rows.accuracy},
                                {"flow_accuracy", report.flows.accuracy}});
    std::cout << "eval: row accuracy " << report.rows.accuracy << ", flow accuracy "
              << report.flows.accuracy << " -> " << out_path << "\n";
    return 0;
}

void write_sweep_outputs(const SweepReport& report, const fs::path& dir) {
    atomic_write(dir / "report.json", [&](std::ostream& os) { save_sweep_json(report, os); });
    atomic_write(dir / "report.md",
                 [&](std::ostream& os) { render_sweep_markdown(report, os); });
    atomic_write(dir / "report.csv", [&](std::ostream& os) { render_sweep_csv(report, os); });
    for (const auto& cell : report.cells) {
        if (cell.importance.empty()) continue;
        atomic_write(dir / ("importance-" + cell.label + ".csv"),
                     [&](std::ostream& os) { render_importance_csv(cell.importance, os); });
        atomic_write(dir / ("importance-" + cell.label + ".svg"), [&](std::ostream& os) {
            os << importance_svg(cell.importance, report.name + " / " + cell.label);
        });
    }
}

int cmd_sweep(const std::string& spec_path, const std::string& out_dir, uint64_t seed_flag,
              bool has_seed) {
    std::ifstream in = open_input(spec_path, "sweep");
    ExperimentSpec spec;
    try {
        spec = experiment_spec_from_json(in);
    } catch (const std::exception& e) {
        throw StageError("sweep", e.what());
    }
    if (has_seed) spec.seed = seed_flag;

    SweepReport report = run_experiment(spec);
    fs::path dir(out_dir);
    fs::create_directories(dir);
    write_sweep_outputs(report, dir);
    write_manifest(dir / "report.json", "sweep",
                   ordered_json{{"spec", file_json(spec_path, "sweep")}, {"seed", spec.seed}},
                   ordered_json{{"dir", out_dir}, {"cells", report.cells.size()}});
    std::cout << "sweep: " << report.cells.size() << " cells -> " << out_dir << "\n";
    for (const auto& cell : report.cells) {
        std::cout << "  " << cell.label << ": row acc " << cell.eval.rows.accuracy
                  << ", flow macro recall " << cell.eval.flows.macro_recall() << "\n";
    }
    return 0;
}

int cmd_reconstruct(const std::string& spec_path, const std::string& out_dir, bool oracle,
                    const std::string& templates_path, uint64_t seed_flag, bool has_seed) {
    std::ifstream in = open_input(spec_path, "reconstruct");
    WorkflowExperimentSpec spec;
    try {
        spec = workflow_spec_from_json(in);
    } catch (const std::exception& e) {
        throw StageError("reconstruct", e.what());
    }
    if (oracle) spec.oracle = true;
    if (has_seed) spec.seed = seed_flag;
    if (!templates_path.empty()) {
        std::ifstream tin = open_input(templates_path, "reconstruct");
        spec.templates = templates_from_json(tin);
    }

    WorkflowReport report = run_workflow_experiment(spec);
    fs::path dir(out_dir);
    fs::create_directories(dir);
    atomic_write(dir / "recovery.json",
                 [&](std::ostream& os) { save_workflow_json(report, os); });
    atomic_write(dir / "recovery.md",
                 [&](std::ostream& os) { render_workflow_markdown(report, os); });
    write_manifest(dir / "recovery.json", "reconstruct",
                   ordered_json{{"spec", file_json(spec_path, "reconstruct")},
                                {"oracle", spec.oracle},
                                {"seed", spec.seed}},
                   ordered_json{{"dir", out_dir}, {"mean_recovery", report.mean_recovery}});
    std::cout << "reconstruct: mean recovery " << report.mean_recovery << " -> " << out_dir
              << "\n";
    return 0;
}

int cmd_defend(const std::string& spec_path, const std::string& transform,
               const std::string& out_dir, uint64_t seed_flag, bool has_seed) {
    std::ifstream in = open_input(spec_path, "defend");
    WorkflowExperimentSpec spec;
    try {
        spec = workflow_spec_from_json(in);
    } catch (const std::exception& e) {
        throw StageError("defend", e.what());
    }
    if (has_seed) spec.seed = seed_flag;
    TransformKind kind = transform.empty() ? spec.transform : transform_from_name(transform);
    if (kind == TransformKind::None) {
        throw StageError("defend", "no transform selected (--transform or spec field)");
    }

    auto movement_spec = [&](TransformKind t) {
        ExperimentSpec e;
        e.name = spec.name + (t == TransformKind::None ? " (baseline)" : " (defended)");
        e.seed = spec.seed;
        e.samples_per_cell = spec.samples_per_cell;
        e.emulator = spec.emulator;
        e.tls = spec.tls;
        e.conditions = {spec.condition};
        e.transform = t;
        e.fixed_cell = spec.fixed_cell;
        e.constant_rate = spec.constant_rate;
        e.vit = spec.vit;
        e.train = spec.train;
        e.importance = true;
        return e;
    };
    auto workflow_spec_for = [&](TransformKind t) {
        WorkflowExperimentSpec w = spec;
        w.transform = t;
        w.oracle = false;
        return w;
    };

    SweepReport before = run_experiment(movement_spec(TransformKind::None));
    SweepReport after = run_experiment(movement_spec(kind));
    WorkflowReport wf_before = run_workflow_experiment(workflow_spec_for(TransformKind::None));
    WorkflowReport wf_after = run_workflow_experiment(workflow_spec_for(kind));

    fs::path dir(out_dir);
    fs::create_directories(dir);
    SweepReport paired;
    paired.name = spec.name + " under " + std::string(transform_name(kind));
    CellResult b = before.cells[0];
    b.label = "baseline";
    CellResult a = after.cells[0];
    a.label = std::string(transform_name(kind));
    paired.cells = {b, a};
    write_sweep_outputs(paired, dir);

    atomic_write(dir / "recovery.md", [&](std::ostream& os) {
        render_workflow_markdown(wf_before, os);
        os << "\n";
        render_workflow_markdown(wf_after, os);
    });

    ordered_json summary;
    summary["transform"] = std::string(transform_name(kind));
    summary["flow_macro_recall_before"] = b.eval.flows.macro_recall();
    summary["flow_macro_recall_after"] = a.eval.flows.macro_recall();
    summary["recovery_before"] = wf_before.recovery;
    summary["recovery_after"] = wf_after.recovery;
    summary["mean_recovery_before"] = wf_before.mean_recovery;
    summary["mean_recovery_after"] = wf_after.mean_recovery;
    atomic_write(dir / "defend.json",
                 [&](std::ostream& os) { os << summary.dump(2) << '\n'; });

    write_manifest(dir / "defend.json", "defend",
                   ordered_json{{"spec", file_json(spec_path, "defend")},
                                {"transform", std::string(transform_name(kind))},
                                {"seed", spec.seed}},
                   summary);
    std::cout << "defend(" << transform_name(kind) << "): flow macro recall "
              << b.eval.flows.macro_recall() << " -> " << a.eval.flows.macro_recall()
              << ", mean recovery " << wf_before.mean_recovery << " -> "
              << wf_after.mean_recovery << "\n";
    return 0;
}

int cmd_report(const std::string& in_path, const std::string& format,
               const std::string& out_path, const std::string& cell) {
    std::ifstream in = open_input(in_path, "report");
    SweepReport report = load_sweep_json(in);
    if (format == "md") {
        atomic_write(out_path, [&](std::ostream& os) { render_sweep_markdown(report, os); });
    } else if (format == "csv") {
        atomic_write(out_path, [&](std::ostream& os) { render_sweep_csv(report, os); });
    } else if (format == "svg") {
        const CellResult* chosen = nullptr;
        for (const auto& c : report.cells) {
            if (!c.importance.empty() && (cell.empty() || c.label == cell)) {
                chosen = &c;
                break;
            }
        }
        if (!chosen) throw StageError("report", "no importance data for the requested cell");
        atomic_write(out_path, [&](std::ostream& os) {
            os << importance_svg(chosen->importance, report.name + " / " + chosen->label);
        });
    } else {
        throw StageError("report", "unknown format '" + format + "' (md, csv, svg)");
    }
    std::cout << "report: " << format << " -> " << out_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Traffic-analysis toolkit for TLS-protected teleoperated-robot channels"};
    app.require_subcommand(1);

    std::string grid, out, pcap, traces, matrix, model, spec, format = "md", md_out;
    std::string transform, templates, cell;
    double gap = 5.0, handshake_gap = 0.5;
    uint64_t seed = 0;
    bool oracle = false;
    TrainFlags tf;

    auto* g = app.add_subcommand("generate", "Synthesize labeled robot-session traces");
    g->add_option("--grid", grid, "grid config JSON")->required();
    g->add_option("--out", out, "output canonical trace file")->required();
    auto* gseed = g->add_option("--seed", seed, "master seed (overrides config)");

    auto* im = app.add_subcommand("import", "Ingest a classic pcap capture");
    im->add_option("--pcap", pcap, "input pcap")->required();
    im->add_option("--out", out, "output canonical trace file")->required();
    im->add_option("--gap", gap, "flow boundary idle gap, seconds");

    auto* ex = app.add_subcommand("extract", "Extract the 16-column feature matrix");
    ex->add_option("--traces", traces, "canonical trace file")->required();
    ex->add_option("--out", out, "output CSV")->required();
    ex->add_option("--handshake-gap", handshake_gap,
                   "idle-gap threshold for captures without provenance");

    auto* tr = app.add_subcommand("train", "Clean, scale, split and train the classifier");
    tr->add_option("--matrix", matrix, "feature CSV")->required();
    tr->add_option("--out", out, "output model JSON")->required();
    tr->add_option("--epochs", tf.epochs);
    tr->add_option("--batch", tf.batch);
    tr->add_option("--lr", tf.lr);
    tr->add_option("--patience", tf.patience);
    tr->add_option("--hidden", tf.hidden, "0 computes the formula value");
    tr->add_option("--alpha", tf.alpha);
    tr->add_option("--seed", tf.seed);
    tr->add_option("--test-fraction", tf.test_fraction);
    tr->add_option("--val-fraction", tf.val_fraction);

    auto* ev = app.add_subcommand("eval", "Evaluate a model on a feature matrix");
    ev->add_option("--model", model, "model JSON")->required();
    ev->add_option("--matrix", matrix, "feature CSV")->required();
    ev->add_option("--out", out, "output eval JSON")->required();
    ev->add_option("--md", md_out, "optional markdown rendering");

    auto* sw = app.add_subcommand("sweep", "Run a multi-condition experiment");
    sw->add_option("--spec", spec, "experiment spec JSON")->required();
    sw->add_option("--out", out, "output directory")->required();
    auto* sseed = sw->add_option("--seed", seed, "master seed (overrides spec)");

    auto* rc = app.add_subcommand("reconstruct", "Workflow reconstruction experiment");
    rc->add_option("--spec", spec, "workflow spec JSON")->required();
    rc->add_option("--out", out, "output directory")->required();
    rc->add_flag("--oracle", oracle, "use ground-truth movement labels");
    rc->add_option("--templates", templates, "workflow template override JSON");
    auto* rseed = rc->add_option("--seed", seed, "master seed (overrides spec)");

    auto* df = app.add_subcommand("defend", "Paired before/after defense evaluation");
    df->add_option("--spec", spec, "workflow spec JSON")->required();
    df->add_option("--transform", transform, "fixed-cell | constant-rate | vit");
    df->add_option("--out", out, "output directory")->required();
    auto* dseed = df->add_option("--seed", seed, "master seed (overrides spec)");

    auto* rp = app.add_subcommand("report", "Render a saved sweep report");
    rp->add_option("--in", spec, "report JSON")->required();
    rp->add_option("--format", format, "md | csv | svg");
    rp->add_option("--out", out, "output path")->required();
    rp->add_option("--cell", cell, "cell label for svg importance");

    CLI11_PARSE(app, argc, argv);

    try {
        if (g->parsed()) return cmd_generate(grid, out, seed, !gseed->empty());
        if (im->parsed()) return cmd_import(pcap, out, gap);
        if (ex->parsed()) return cmd_extract(traces, out, handshake_gap);
        if (tr->parsed()) return cmd_train(matrix, out, tf);
        if (ev->parsed()) return cmd_eval(model, matrix, out, md_out);
        if (sw->parsed()) return cmd_sweep(spec, out, seed, !sseed->empty());
        if (rc->parsed())
            return cmd_reconstruct(spec, out, oracle, templates, seed, !rseed->empty());
        if (df->parsed()) return cmd_defend(spec, transform, out, seed, !dseed->empty());
        if (rp->parsed()) return cmd_report(spec, format, out, cell);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
