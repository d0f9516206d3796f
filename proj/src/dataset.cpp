#include "teletrace/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "teletrace/rng.hpp"

namespace teletrace {

FeatureMatrix clean(const FeatureMatrix& matrix, CleanReport* report) {
    CleanReport local;
    size_t ncols = matrix.cols();

    std::vector<bool> finite_row(matrix.rows(), true);
    for (size_t r = 0; r < matrix.rows(); ++r) {
        for (size_t c = 0; c < ncols; ++c) {
            if (!std::isfinite(matrix.at(r, c))) {
                finite_row[r] = false;
                break;
            }
        }
        if (!finite_row[r]) ++local.dropped_rows;
    }

    // Constant detection runs on the surviving rows.
    std::vector<bool> keep_col(ncols, false);
    for (size_t c = 0; c < ncols; ++c) {
        bool have_first = false;
        double first = 0.0;
        for (size_t r = 0; r < matrix.rows(); ++r) {
            if (!finite_row[r]) continue;
            double v = matrix.at(r, c);
            if (!have_first) {
                first = v;
                have_first = true;
            } else if (v != first) {
                keep_col[c] = true;
                break;
            }
        }
    }

    FeatureMatrix out;
    out.class_names = matrix.class_names;
    out.flow_names = matrix.flow_names;
    std::vector<size_t> cols;
    for (size_t c = 0; c < ncols; ++c) {
        if (keep_col[c]) {
            cols.push_back(c);
            out.column_names.push_back(matrix.column_names[c]);
        } else {
            local.dropped_columns.push_back(matrix.column_names[c]);
        }
    }
    if (matrix.rows() > 0 && cols.empty()) {
        throw std::runtime_error("clean: no informative features (all columns constant)");
    }

    for (size_t r = 0; r < matrix.rows(); ++r) {
        if (!finite_row[r]) continue;
        for (size_t c : cols) out.values.push_back(matrix.at(r, c));
        out.labels.push_back(matrix.labels[r]);
        out.flow_index.push_back(matrix.flow_index[r]);
    }
    if (report) *report = std::move(local);
    return out;
}

ScalerParams fit_scaler(const FeatureMatrix& train) {
    if (train.rows() == 0) throw std::invalid_argument("fit_scaler: empty training matrix");
    ScalerParams p;
    p.column_names = train.column_names;
    p.min.assign(train.cols(), 0.0);
    p.max.assign(train.cols(), 0.0);
    for (size_t c = 0; c < train.cols(); ++c) {
        double lo = train.at(0, c), hi = train.at(0, c);
        for (size_t r = 1; r < train.rows(); ++r) {
            lo = std::min(lo, train.at(r, c));
            hi = std::max(hi, train.at(r, c));
        }
        p.min[c] = lo;
        p.max[c] = hi;
    }
    return p;
}

FeatureMatrix apply_scaler(const ScalerParams& params, const FeatureMatrix& matrix) {
    if (params.column_names != matrix.column_names) {
        throw std::invalid_argument("apply_scaler: column mismatch with fitted params");
    }
    FeatureMatrix out = matrix;
    for (size_t c = 0; c < out.cols(); ++c) {
        double lo = params.min[c];
        double span = params.max[c] - lo;
        for (size_t r = 0; r < out.rows(); ++r) {
            out.at(r, c) = span > 0.0 ? (out.at(r, c) - lo) / span : 0.0;
        }
    }
    return out;
}

namespace {

FeatureMatrix take_rows(const FeatureMatrix& m, const std::vector<size_t>& rows) {
    FeatureMatrix out;
    out.column_names = m.column_names;
    out.class_names = m.class_names;
    out.flow_names = m.flow_names;
    out.values.reserve(rows.size() * m.cols());
    for (size_t r : rows) {
        for (size_t c = 0; c < m.cols(); ++c) out.values.push_back(m.at(r, c));
        out.labels.push_back(m.labels[r]);
        out.flow_index.push_back(m.flow_index[r]);
    }
    return out;
}

size_t rounded_count(size_t n, double fraction) {
    return static_cast<size_t>(std::llround(static_cast<double>(n) * fraction));
}

} // namespace

Split stratified_split(const FeatureMatrix& matrix, const SplitSpec& spec) {
    if (spec.test_fraction <= 0.0 || spec.test_fraction >= 1.0 ||
        spec.validation_fraction_of_train <= 0.0 || spec.validation_fraction_of_train >= 1.0) {
        throw std::invalid_argument("split fractions must lie in (0, 1)");
    }

    // Group rows by flow and verify one label per flow.
    std::map<uint32_t, std::vector<size_t>> flow_rows;
    std::map<uint32_t, int32_t> flow_label;
    std::vector<size_t> class_rows(matrix.class_names.size(), 0);
    for (size_t r = 0; r < matrix.rows(); ++r) {
        uint32_t f = matrix.flow_index[r];
        flow_rows[f].push_back(r);
        auto it = flow_label.find(f);
        if (it == flow_label.end()) {
            flow_label.emplace(f, matrix.labels[r]);
        } else if (it->second != matrix.labels[r]) {
            throw std::runtime_error("stratified_split: flow '" + matrix.flow_names[f] +
                                     "' carries multiple labels");
        }
        class_rows[matrix.labels[r]] += 1;
    }

    std::vector<std::vector<uint32_t>> class_flows(matrix.class_names.size());
    for (const auto& [f, label] : flow_label) class_flows[label].push_back(f);

    for (size_t k = 0; k < matrix.class_names.size(); ++k) {
        if (class_flows[k].empty()) continue;
        if (class_rows[k] < 5) {
            throw std::runtime_error("stratified_split: class '" + matrix.class_names[k] +
                                     "' has fewer than 5 rows");
        }
        if (class_flows[k].size() < 3) {
            throw std::runtime_error("stratified_split: class '" + matrix.class_names[k] +
                                     "' has fewer than 3 flows; the split is flow-atomic");
        }
    }

    std::vector<size_t> train_rows, val_rows, test_rows;
    for (size_t k = 0; k < matrix.class_names.size(); ++k) {
        auto flows = class_flows[k];
        if (flows.empty()) continue;
        std::sort(flows.begin(), flows.end());
        Rng rng(derive_seed(spec.seed, "split", k));
        shuffle(flows, rng);

        size_t n = flows.size();
        size_t n_test = std::clamp<size_t>(rounded_count(n, spec.test_fraction), 1, n - 2);
        size_t rest = n - n_test;
        size_t n_val =
            std::clamp<size_t>(rounded_count(rest, spec.validation_fraction_of_train), 1,
                               rest - 1);
        for (size_t i = 0; i < n; ++i) {
            auto& bucket = (i < n_test) ? test_rows : (i < n_test + n_val ? val_rows : train_rows);
            for (size_t r : flow_rows[flows[i]]) bucket.push_back(r);
        }
    }

    std::sort(train_rows.begin(), train_rows.end());
    std::sort(val_rows.begin(), val_rows.end());
    std::sort(test_rows.begin(), test_rows.end());

    Split split;
    split.train = take_rows(matrix, train_rows);
    split.validation = take_rows(matrix, val_rows);
    split.test = take_rows(matrix, test_rows);
    return split;
}

ClassWeights class_weights(const FeatureMatrix& train) {
    if (train.rows() == 0) throw std::invalid_argument("class_weights: empty matrix");
    std::map<std::string, size_t> counts;
    for (size_t r = 0; r < train.rows(); ++r) counts[train.label_name(r)] += 1;

    ClassWeights weights;
    double total = static_cast<double>(train.rows());
    double k = static_cast<double>(counts.size());
    for (const auto& [name, count] : counts) {
        weights[name] = total / (k * static_cast<double>(count));
    }
    return weights;
}

} // namespace teletrace
