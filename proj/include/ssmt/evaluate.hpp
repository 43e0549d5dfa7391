#pragma once

// Scoring a trained discriminator's pooled features (or the world's true
// development layer) against the continuous primary target.

#include <filesystem>
#include <vector>

#include "ssmt/config.hpp"
#include "ssmt/evaluation.hpp"
#include "ssmt/synthdata.hpp"

namespace ssmt::eval {

NestedCvOptions cv_options(const config::RunConfig& cfg);

/// Rows of the configured evaluation splits carrying a continuous primary
/// value. Throws MissingLabels when there are none.
std::vector<std::size_t> evaluation_rows(const synth::Dataset& dataset, const config::RunConfig& cfg);

/// Nested CV of `features` (one row per entry of `rows`) against the
/// primary target, plus the baseline-task correlation.
RegressionReport evaluate_features(const Matrix& features, const synth::Dataset& dataset,
                                   const std::vector<std::size_t>& rows, const config::RunConfig& cfg,
                                   RowUsageLedger* ledger = nullptr);

RegressionReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const synth::Dataset& dataset,
                                     const config::RunConfig& cfg, RowUsageLedger* ledger = nullptr);

/// Upper reference: the true development value at each tile's cell.
RegressionReport evaluate_oracle(const synth::Dataset& dataset, const config::RunConfig& cfg);

}  // namespace ssmt::eval
