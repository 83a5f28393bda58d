#pragma once

#include <string>
#include <vector>

#include "defdr/attacks.hpp"
#include "defdr/classifier.hpp"
#include "defdr/defense.hpp"

namespace defdr {

struct TuneRow {
    double info = 0.0;
    double robust_acc_with_patch = 0.0;
    double clean_acc_with_defense = 0.0;
};

struct TuneResult {
    double chosen_info = 0.0;
    std::vector<TuneRow> rows;  // one per grid point, in grid order
    double baseline_clean_acc = 0.0;
    bool constraint_satisfied = false;
};

// Training-phase sweep: every clean image gets a patched twin, both are
// defended at each grid value, and the chosen info maximizes accuracy on
// the defended patched set among values whose clean drop stays below the
// tolerance (ties break toward larger info). If nothing satisfies the
// constraint the result reports the smallest clean drop instead.
TuneResult tune_info(const ClassifierModel& model,
                     const LabeledDataset& clean_set, const TrainedPatch& patch,
                     const DefenseConfig& method_template,
                     const std::vector<double>& grid, double tolerance,
                     Prng& rng);

// "0.90:0.99:0.01" -> {0.90, 0.91, ..., 0.99}; a single number is a
// one-point grid.
std::vector<double> parse_grid(const std::string& text);

std::string tune_result_csv(const TuneResult& r, const std::string& config_hash);

}  // namespace defdr
