#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "teletrace/defenses.hpp"
#include "teletrace/mlp.hpp"
#include "teletrace/workflow.hpp"

namespace teletrace {

enum class TransformKind { None, FixedCell, ConstantRate, Vit };

std::string_view transform_name(TransformKind t);
TransformKind transform_from_name(std::string_view name);

/// One experimental condition: the movement-program parameters (iterated over
/// all seven classes) and the link. Flows cycle deterministically through the
/// distance/speed pools, so multi-valued pools give a mixed-parameter cell.
struct ConditionSpec {
    std::string label = "baseline";
    std::vector<double> distances{1.0};
    std::vector<int> speed_codes{25000};
    int repetitions = 15;
    double command_interval_s = 1.0;
    double command_jitter_mean_s = 0.0;
    LinkParams link;
};

struct TrainSpec {
    int epochs = 120;
    int batch_size = 32;
    double learning_rate = 0.00001;
    int patience = 20;
    int hidden_size = 0; // 0: the N_s/(alpha*(N_i+N_o)) formula
    double alpha = 2.0;
};

struct ExperimentSpec {
    std::string name = "experiment";
    uint64_t seed = 1;
    int samples_per_cell = 50; // flows per movement per condition
    EmulatorOptions emulator;
    TlsChannelModel tls;
    std::vector<ConditionSpec> conditions;
    TransformKind transform = TransformKind::None;
    FixedCellParams fixed_cell;
    ConstantRateParams constant_rate;
    VitParams vit;
    int open_world_unknowns = 0;
    TrainSpec train;
    double test_fraction = 0.2;
    double validation_fraction_of_train = 0.2;
    bool importance = false;
    int importance_repeats = 5;
};

struct FeatureImportance {
    std::string column;
    double importance = 0.0; // baseline accuracy minus shuffled-column accuracy
};

struct CellResult {
    std::string label;
    EvalReport eval;
    CleanReport cleaning;
    std::vector<FeatureImportance> importance; // empty unless requested
    size_t train_rows = 0, val_rows = 0, test_rows = 0;
    int best_epoch = 0;
};

struct SweepReport {
    std::string name;
    std::vector<CellResult> cells;
};

/// Full pipeline for one condition: generate, transform, extract, relabel,
/// clean, split, scale, weight, train, evaluate. Returns the trained model
/// and the raw (uncleaned) feature rows of the test flows alongside the
/// metrics.
struct ConditionRun {
    CellResult result;
    MlpModel model;
    FeatureMatrix raw_test;
};
ConditionRun run_condition(const ExperimentSpec& spec, size_t condition_index);

/// Runs every condition; deterministic given spec.seed.
SweepReport run_experiment(const ExperimentSpec& spec);

/// Progressive open-world relabeling: with the canonical class order
/// (X, Y, Z, XY, XZ, YZ, XYZ), the last `unknowns` classes become "Unknown".
/// unknowns = 0 is the identity. Idempotent for a fixed count.
FeatureMatrix open_world_relabel(const FeatureMatrix& matrix, int unknowns);

/// Mean accuracy drop over `repeats` seeded shuffles of each raw column.
/// Columns the model does not consume (e.g. constants removed by cleaning)
/// measure exactly zero.
std::vector<FeatureImportance> permutation_importance(const MlpModel& model,
                                                      const FeatureMatrix& raw, int repeats,
                                                      uint64_t seed);

// --- workflow reconstruction experiments -----------------------------------

struct WorkflowExperimentSpec {
    std::string name = "workflows";
    uint64_t seed = 1;
    ConditionSpec condition;       // shared by the training pool and the workflows
    int samples_per_cell = 40;     // training flows per movement
    int samples_per_workflow = 50;
    EmulatorOptions emulator;
    TlsChannelModel tls;
    TransformKind transform = TransformKind::None;
    FixedCellParams fixed_cell;
    ConstantRateParams constant_rate;
    VitParams vit;
    TrainSpec train;
    bool oracle = false;           // feed ground-truth movement labels
    std::vector<WorkflowTemplate> templates; // empty: builtin set
};

struct WorkflowReport {
    std::string name;
    std::vector<std::string> workflow_names;
    std::map<std::string, double> recovery;
    std::map<std::string, size_t> samples;
    double mean_recovery = 0.0;
    std::optional<EvalReport> movement_eval; // absent in oracle mode
};

WorkflowReport run_workflow_experiment(const WorkflowExperimentSpec& spec);

// --- dataset generation spec (CLI `generate`) --------------------------------

struct GenerateSpec {
    uint64_t seed = 1;
    int samples_per_cell = 1;
    EmulatorOptions emulator;
    TlsChannelModel tls;
    std::vector<std::pair<MovementProgram, LinkParams>> grid;
};
GenerateSpec generate_spec_from_json(std::istream& in);

ExperimentSpec experiment_spec_from_json(std::istream& in);
WorkflowExperimentSpec workflow_spec_from_json(std::istream& in);

// --- reports -----------------------------------------------------------------

void save_sweep_json(const SweepReport& report, std::ostream& out);
SweepReport load_sweep_json(std::istream& in);

/// Markdown tables shaped like the movement/P/R tables of the evaluation:
/// one column pair per cell, rows in class order, accuracy footer.
void render_sweep_markdown(const SweepReport& report, std::ostream& out);
void render_sweep_csv(const SweepReport& report, std::ostream& out);
void render_importance_csv(const std::vector<FeatureImportance>& imp, std::ostream& out);
std::string importance_svg(const std::vector<FeatureImportance>& imp,
                           const std::string& title);

void render_workflow_markdown(const WorkflowReport& report, std::ostream& out);
void save_workflow_json(const WorkflowReport& report, std::ostream& out);

void eval_report_json(const EvalReport& report, std::ostream& out);

} // namespace teletrace
