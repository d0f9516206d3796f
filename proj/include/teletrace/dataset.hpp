#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "teletrace/features.hpp"

namespace teletrace {

struct CleanReport {
    std::vector<std::string> dropped_columns; // constant on every row
    size_t dropped_rows = 0;                  // contained non-finite values
};

/// Removes constant columns and rows with non-finite values. Throws when no
/// informative column would remain. Idempotent.
FeatureMatrix clean(const FeatureMatrix& matrix, CleanReport* report = nullptr);

/// Per-column min/max learned from the training partition only.
struct ScalerParams {
    std::vector<std::string> column_names;
    std::vector<double> min;
    std::vector<double> max;
};

ScalerParams fit_scaler(const FeatureMatrix& train);

/// x' = (x - min) / (max - min); degenerate columns map to 0. Values outside
/// the training range scale past [0, 1], which is fine for inference inputs.
FeatureMatrix apply_scaler(const ScalerParams& params, const FeatureMatrix& matrix);

struct SplitSpec {
    double test_fraction = 0.2;
    double validation_fraction_of_train = 0.2; // of the non-test remainder
    uint64_t seed = 0;
};

struct Split {
    FeatureMatrix train;
    FeatureMatrix validation;
    FeatureMatrix test;
};

/// Stratified, flow-atomic, seed-deterministic split: all rows of a flow land
/// in one partition, and each class's flows are partitioned 60/20/20 (within
/// flow-count rounding). Throws for classes with fewer than 5 rows or too few
/// flows to populate every partition.
Split stratified_split(const FeatureMatrix& matrix, const SplitSpec& spec);

/// label -> total_rows / (n_classes * rows_of_label), over training rows.
using ClassWeights = std::map<std::string, double>;

ClassWeights class_weights(const FeatureMatrix& train);

} // namespace teletrace
