#include "teletrace/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "teletrace/rng.hpp"

namespace teletrace {

using ordered_json = nlohmann::ordered_json;

int hidden_layer_size(size_t n_train_samples, double alpha, int n_inputs, int n_outputs) {
    if (n_train_samples == 0 || alpha <= 0.0 || n_inputs <= 0 || n_outputs <= 0) {
        throw std::invalid_argument("hidden_layer_size: all inputs must be positive");
    }
    double n = static_cast<double>(n_train_samples) /
               (alpha * static_cast<double>(n_inputs + n_outputs));
    return std::max(1, static_cast<int>(std::floor(n)));
}

MlpModel make_model(const ModelConfig& config) {
    MlpModel model;
    model.config = config;
    model.n_in = config.n_inputs;
    model.n_out = config.n_outputs;
    model.n_hidden = config.hidden_size > 0
                         ? config.hidden_size
                         : hidden_layer_size(config.n_train_samples, config.alpha,
                                             config.n_inputs, config.n_outputs);
    if (model.n_in <= 0 || model.n_out <= 0) {
        throw std::invalid_argument("make_model: inputs and outputs must be positive");
    }
    model.params.assign(model.param_count(), 0.0);

    Rng rng(derive_seed(config.seed, "init"));
    double lim1 = std::sqrt(6.0 / (model.n_in + model.n_hidden));
    for (size_t i = 0; i < static_cast<size_t>(model.n_hidden) * model.n_in; ++i) {
        model.params[model.w1_off() + i] = rng.uniform(-lim1, lim1);
    }
    double lim2 = std::sqrt(6.0 / (model.n_hidden + model.n_out));
    for (size_t i = 0; i < static_cast<size_t>(model.n_out) * model.n_hidden; ++i) {
        model.params[model.w2_off() + i] = rng.uniform(-lim2, lim2);
    }
    return model;
}

namespace {

// Forward pass into caller-provided scratch; returns probabilities in `p`.
void forward_scratch(const MlpModel& m, const double* x, std::vector<double>& h,
                     std::vector<double>& p) {
    const double* w1 = m.params.data() + m.w1_off();
    const double* b1 = m.params.data() + m.b1_off();
    const double* w2 = m.params.data() + m.w2_off();
    const double* b2 = m.params.data() + m.b2_off();

    h.resize(m.n_hidden);
    for (int j = 0; j < m.n_hidden; ++j) {
        const double* row = w1 + static_cast<size_t>(j) * m.n_in;
        double z = b1[j];
        for (int i = 0; i < m.n_in; ++i) z += row[i] * x[i];
        h[j] = z > 0.0 ? z : 0.0;
    }

    p.resize(m.n_out);
    double zmax = -1e300;
    for (int k = 0; k < m.n_out; ++k) {
        const double* row = w2 + static_cast<size_t>(k) * m.n_hidden;
        double z = b2[k];
        for (int j = 0; j < m.n_hidden; ++j) z += row[j] * h[j];
        p[k] = z;
        zmax = std::max(zmax, z);
    }
    double sum = 0.0;
    for (int k = 0; k < m.n_out; ++k) {
        p[k] = std::exp(p[k] - zmax);
        sum += p[k];
    }
    for (int k = 0; k < m.n_out; ++k) p[k] /= sum;
}

void accumulate_gradients(const MlpModel& m, const double* x, const std::vector<double>& h,
                          const std::vector<double>& p, int y, double scale,
                          std::vector<double>& g) {
    const double* w2 = m.params.data() + m.w2_off();
    double* gw1 = g.data() + m.w1_off();
    double* gb1 = g.data() + m.b1_off();
    double* gw2 = g.data() + m.w2_off();
    double* gb2 = g.data() + m.b2_off();

    // Softmax + cross-entropy: dL/dz = (p - onehot(y)) * scale
    std::vector<double> dh(m.n_hidden, 0.0);
    for (int k = 0; k < m.n_out; ++k) {
        double dz = (p[k] - (k == y ? 1.0 : 0.0)) * scale;
        gb2[k] += dz;
        double* grow = gw2 + static_cast<size_t>(k) * m.n_hidden;
        const double* wrow = w2 + static_cast<size_t>(k) * m.n_hidden;
        for (int j = 0; j < m.n_hidden; ++j) {
            grow[j] += dz * h[j];
            dh[j] += dz * wrow[j];
        }
    }
    for (int j = 0; j < m.n_hidden; ++j) {
        if (h[j] <= 0.0) continue; // ReLU gate
        gb1[j] += dh[j];
        double* grow = gw1 + static_cast<size_t>(j) * m.n_in;
        for (int i = 0; i < m.n_in; ++i) grow[i] += dh[j] * x[i];
    }
}

std::vector<double> weights_by_index(const FeatureMatrix& m, const ClassWeights& weights) {
    std::vector<double> w(m.class_names.size(), 1.0);
    for (size_t k = 0; k < m.class_names.size(); ++k) {
        auto it = weights.find(m.class_names[k]);
        if (it != weights.end()) w[k] = it->second;
    }
    return w;
}

} // namespace

std::vector<double> forward(const MlpModel& model, const double* x) {
    std::vector<double> h, p;
    forward_scratch(model, x, h, p);
    return p;
}

double loss(const std::vector<double>& probabilities, int true_class, double class_weight) {
    double p = std::max(probabilities.at(static_cast<size_t>(true_class)), 1e-12);
    return -class_weight * std::log(p);
}

std::vector<double> backward(const MlpModel& model, const FeatureMatrix& scaled,
                             const std::vector<size_t>& rows,
                             const std::vector<double>& class_weight_by_index) {
    if (rows.empty()) throw std::invalid_argument("backward: empty batch");
    if (scaled.cols() != static_cast<size_t>(model.n_in)) {
        throw std::invalid_argument("backward: input width mismatch");
    }
    std::vector<double> g(model.param_count(), 0.0);
    std::vector<double> h, p;
    double inv = 1.0 / static_cast<double>(rows.size());
    for (size_t r : rows) {
        const double* x = scaled.values.data() + r * scaled.cols();
        forward_scratch(model, x, h, p);
        int y = scaled.labels[r];
        accumulate_gradients(model, x, h, p, y, class_weight_by_index[y] * inv, g);
    }
    return g;
}

void adam_step(AdamState& state, std::vector<double>& params,
               const std::vector<double>& grads, double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw std::invalid_argument("adam_step: shape mismatch");
    }
    state.t += 1;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        double g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        double mhat = state.m[i] / bc1;
        double vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
}

TrainResult train(const ModelConfig& config, const FeatureMatrix& train_scaled,
                  const FeatureMatrix& val_scaled, const ClassWeights& weights) {
    if (train_scaled.rows() == 0) throw std::invalid_argument("train: empty training matrix");
    if (val_scaled.rows() == 0) throw std::invalid_argument("train: empty validation matrix");

    ModelConfig cfg = config;
    cfg.n_inputs = static_cast<int>(train_scaled.cols());
    cfg.n_outputs = static_cast<int>(train_scaled.class_names.size());
    if (cfg.n_train_samples == 0) cfg.n_train_samples = train_scaled.rows();

    MlpModel model = make_model(cfg);
    model.columns = train_scaled.column_names;
    model.classes = train_scaled.class_names;

    std::vector<double> wtrain = weights_by_index(train_scaled, weights);
    std::vector<double> wval = weights_by_index(val_scaled, weights);

    AdamState adam(model.param_count());
    std::vector<double> grads(model.param_count());
    std::vector<double> h, p;

    auto pass_metrics = [&](const FeatureMatrix& m, const std::vector<double>& w, double& out_loss,
                            double& out_acc) {
        double total = 0.0;
        size_t correct = 0;
        for (size_t r = 0; r < m.rows(); ++r) {
            const double* x = m.values.data() + r * m.cols();
            forward_scratch(model, x, h, p);
            int y = m.labels[r];
            total += loss(p, y, w[y]);
            int arg = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
            if (arg == y) ++correct;
        }
        out_loss = total / static_cast<double>(m.rows());
        out_acc = static_cast<double>(correct) / static_cast<double>(m.rows());
    };

    TrainResult result;
    std::vector<double> best_params = model.params;
    double best_val_acc = -1.0;
    int best_epoch = 0;
    int since_best = 0;

    std::vector<size_t> order(train_scaled.rows());
    std::iota(order.begin(), order.end(), 0);
    size_t batch = std::max(1, cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, "epoch", static_cast<uint64_t>(epoch)));
        shuffle(order, rng);

        double epoch_loss = 0.0;
        size_t epoch_correct = 0;
        for (size_t start = 0; start < order.size(); start += batch) {
            size_t end = std::min(order.size(), start + batch);
            std::fill(grads.begin(), grads.end(), 0.0);
            double inv = 1.0 / static_cast<double>(end - start);
            for (size_t i = start; i < end; ++i) {
                size_t r = order[i];
                const double* x = train_scaled.values.data() + r * train_scaled.cols();
                forward_scratch(model, x, h, p);
                int y = train_scaled.labels[r];
                epoch_loss += loss(p, y, wtrain[y]);
                int arg = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
                if (arg == y) ++epoch_correct;
                accumulate_gradients(model, x, h, p, y, wtrain[y] * inv, grads);
            }
            adam_step(adam, model.params, grads, cfg.learning_rate);
        }

        EpochStats stats;
        stats.train_loss = epoch_loss / static_cast<double>(order.size());
        stats.train_accuracy =
            static_cast<double>(epoch_correct) / static_cast<double>(order.size());
        pass_metrics(val_scaled, wval, stats.val_loss, stats.val_accuracy);
        result.curve.push_back(stats);

        if (stats.val_accuracy > best_val_acc) {
            best_val_acc = stats.val_accuracy;
            best_params = model.params;
            best_epoch = epoch;
            since_best = 0;
        } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
            break;
        }
    }

    model.params = std::move(best_params);
    result.model = std::move(model);
    result.best_epoch = best_epoch;
    return result;
}

std::vector<int> predict(const MlpModel& model, const FeatureMatrix& scaled) {
    if (scaled.cols() != static_cast<size_t>(model.n_in)) {
        throw std::invalid_argument("predict: input width mismatch");
    }
    std::vector<int> out(scaled.rows());
    std::vector<double> h, p;
    for (size_t r = 0; r < scaled.rows(); ++r) {
        forward_scratch(model, scaled.values.data() + r * scaled.cols(), h, p);
        out[r] = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    }
    return out;
}

int predict_flow(const MlpModel& model, const FeatureMatrix& scaled,
                 const std::vector<size_t>& rows) {
    if (rows.empty()) throw std::invalid_argument("predict_flow: empty flow");
    std::vector<int> votes(model.n_out, 0);
    std::vector<double> prob_sum(model.n_out, 0.0);
    std::vector<double> h, p;
    for (size_t r : rows) {
        forward_scratch(model, scaled.values.data() + r * scaled.cols(), h, p);
        int arg = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
        votes[arg] += 1;
        for (int k = 0; k < model.n_out; ++k) prob_sum[k] += p[k];
    }
    int best = 0;
    for (int k = 1; k < model.n_out; ++k) {
        if (votes[k] > votes[best] ||
            (votes[k] == votes[best] && prob_sum[k] > prob_sum[best])) {
            best = k;
        }
    }
    return best;
}

double MetricsBlock::macro_precision() const {
    double sum = 0.0;
    size_t n = 0;
    for (const auto& c : per_class) {
        if (c.support > 0) {
            sum += c.precision;
            ++n;
        }
    }
    return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

double MetricsBlock::macro_recall() const {
    double sum = 0.0;
    size_t n = 0;
    for (const auto& c : per_class) {
        if (c.support > 0) {
            sum += c.recall;
            ++n;
        }
    }
    return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

namespace {

MetricsBlock metrics_from_pairs(const std::vector<std::pair<int, int>>& truth_pred,
                                const std::vector<std::string>& classes) {
    size_t k = classes.size();
    MetricsBlock block;
    block.confusion.assign(k * k, 0);
    for (auto [y, yhat] : truth_pred) {
        block.confusion[static_cast<size_t>(y) * k + static_cast<size_t>(yhat)] += 1;
    }
    uint64_t correct = 0, total = truth_pred.size();
    for (size_t c = 0; c < k; ++c) correct += block.confusion[c * k + c];
    block.accuracy = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;

    for (size_t c = 0; c < k; ++c) {
        ClassMetrics cm;
        cm.name = classes[c];
        uint64_t tp = block.confusion[c * k + c];
        uint64_t support = 0, predicted = 0;
        for (size_t j = 0; j < k; ++j) {
            support += block.confusion[c * k + j];
            predicted += block.confusion[j * k + c];
        }
        cm.support = support;
        cm.precision = predicted > 0 ? static_cast<double>(tp) / predicted : 0.0;
        cm.recall = support > 0 ? static_cast<double>(tp) / support : 0.0;
        block.per_class.push_back(cm);
    }
    return block;
}

} // namespace

EvalReport evaluate(const MlpModel& model, const FeatureMatrix& scaled) {
    EvalReport report;
    report.classes = model.classes.empty() ? scaled.class_names : model.classes;

    std::vector<int> preds = predict(model, scaled);
    std::vector<std::pair<int, int>> row_pairs;
    row_pairs.reserve(scaled.rows());
    for (size_t r = 0; r < scaled.rows(); ++r) row_pairs.emplace_back(scaled.labels[r], preds[r]);
    report.rows = metrics_from_pairs(row_pairs, report.classes);

    std::map<uint32_t, std::vector<size_t>> flows;
    for (size_t r = 0; r < scaled.rows(); ++r) flows[scaled.flow_index[r]].push_back(r);
    std::vector<std::pair<int, int>> flow_pairs;
    for (const auto& [fidx, rows] : flows) {
        int truth = scaled.labels[rows.front()];
        flow_pairs.emplace_back(truth, predict_flow(model, scaled, rows));
    }
    report.flows = metrics_from_pairs(flow_pairs, report.classes);
    return report;
}

FeatureMatrix apply_pipeline(const MlpModel& model, const FeatureMatrix& raw) {
    FeatureMatrix selected = raw.select_columns(model.columns);
    FeatureMatrix scaled = apply_scaler(model.scaler, selected);
    // Remap labels into the model's class space.
    std::vector<int32_t> remap(scaled.class_names.size(), -1);
    for (size_t i = 0; i < scaled.class_names.size(); ++i) {
        for (size_t j = 0; j < model.classes.size(); ++j) {
            if (model.classes[j] == scaled.class_names[i]) {
                remap[i] = static_cast<int32_t>(j);
                break;
            }
        }
    }
    for (auto& l : scaled.labels) {
        int32_t m = remap[l];
        if (m < 0) {
            throw std::invalid_argument("apply_pipeline: label '" +
                                        scaled.class_names[l] +
                                        "' is not in the model vocabulary");
        }
        l = m;
    }
    scaled.class_names = model.classes;
    return scaled;
}

EvalReport evaluate_raw(const MlpModel& model, const FeatureMatrix& raw) {
    return evaluate(model, apply_pipeline(model, raw));
}

void save_model(const MlpModel& model, std::ostream& out) {
    ordered_json j;
    j["config"] = {{"n_inputs", model.config.n_inputs},
                   {"n_outputs", model.config.n_outputs},
                   {"alpha", model.config.alpha},
                   {"n_train_samples", model.config.n_train_samples},
                   {"hidden_size", model.config.hidden_size},
                   {"learning_rate", model.config.learning_rate},
                   {"batch_size", model.config.batch_size},
                   {"epochs", model.config.epochs},
                   {"patience", model.config.patience},
                   {"seed", model.config.seed}};
    j["shape"] = {{"inputs", model.n_in}, {"hidden", model.n_hidden}, {"outputs", model.n_out}};
    j["columns"] = model.columns;
    j["classes"] = model.classes;
    j["scaler"] = {{"columns", model.scaler.column_names},
                   {"min", model.scaler.min},
                   {"max", model.scaler.max}};
    auto slice = [&](size_t off, size_t n) {
        return std::vector<double>(model.params.begin() + off, model.params.begin() + off + n);
    };
    j["w1"] = slice(model.w1_off(), static_cast<size_t>(model.n_hidden) * model.n_in);
    j["b1"] = slice(model.b1_off(), model.n_hidden);
    j["w2"] = slice(model.w2_off(), static_cast<size_t>(model.n_out) * model.n_hidden);
    j["b2"] = slice(model.b2_off(), model.n_out);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("model write failure");
}

MlpModel load_model(std::istream& in) {
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("model parse: ") + e.what());
    }
    MlpModel model;
    const auto& c = j.at("config");
    model.config.n_inputs = c.at("n_inputs").get<int>();
    model.config.n_outputs = c.at("n_outputs").get<int>();
    model.config.alpha = c.at("alpha").get<double>();
    model.config.n_train_samples = c.at("n_train_samples").get<size_t>();
    model.config.hidden_size = c.at("hidden_size").get<int>();
    model.config.learning_rate = c.at("learning_rate").get<double>();
    model.config.batch_size = c.at("batch_size").get<int>();
    model.config.epochs = c.at("epochs").get<int>();
    model.config.patience = c.at("patience").get<int>();
    model.config.seed = c.at("seed").get<uint64_t>();
    model.n_in = j.at("shape").at("inputs").get<int>();
    model.n_hidden = j.at("shape").at("hidden").get<int>();
    model.n_out = j.at("shape").at("outputs").get<int>();
    model.columns = j.at("columns").get<std::vector<std::string>>();
    model.classes = j.at("classes").get<std::vector<std::string>>();
    model.scaler.column_names = j.at("scaler").at("columns").get<std::vector<std::string>>();
    model.scaler.min = j.at("scaler").at("min").get<std::vector<double>>();
    model.scaler.max = j.at("scaler").at("max").get<std::vector<double>>();

    auto w1 = j.at("w1").get<std::vector<double>>();
    auto b1 = j.at("b1").get<std::vector<double>>();
    auto w2 = j.at("w2").get<std::vector<double>>();
    auto b2 = j.at("b2").get<std::vector<double>>();
    if (w1.size() != static_cast<size_t>(model.n_hidden) * model.n_in ||
        b1.size() != static_cast<size_t>(model.n_hidden) ||
        w2.size() != static_cast<size_t>(model.n_out) * model.n_hidden ||
        b2.size() != static_cast<size_t>(model.n_out)) {
        throw std::runtime_error("model parse: weight shapes disagree with declared sizes");
    }
    model.params.clear();
    model.params.insert(model.params.end(), w1.begin(), w1.end());
    model.params.insert(model.params.end(), b1.begin(), b1.end());
    model.params.insert(model.params.end(), w2.begin(), w2.end());
    model.params.insert(model.params.end(), b2.begin(), b2.end());
    return model;
}

} // namespace teletrace
