#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "defdr/attacks.hpp"
#include "defdr/classifier.hpp"
#include "defdr/defense.hpp"
#include "defdr/report.hpp"
#include "defdr/tuning.hpp"

namespace defdr {

enum class AttackKind { Lavan, Googleap };

struct DefenseSetup {
    DefenseConfig config;        // info field unused until tuned
    std::vector<double> grid;
};

// Full experiment description. Parsed from JSON with strict keys: any
// unknown key is a config error.
struct ExperimentConfig {
    uint64_t seed = 42;
    int image_side = 32;
    int train_count = 2000;
    int test_count = 500;
    int tune_count = 250;
    std::vector<int> patch_sizes = {4, 6, 8, 10, 12};

    AttackKind attack_kind = AttackKind::Googleap;
    int attack_target = 0;
    int attack_epochs = 30;
    double attack_lr = 1.0;
    EotParams eot;

    TrainConfig classifier;

    std::vector<DefenseSetup> defenses;
    double tolerance = 0.02;
    std::string output_dir = "out";

    std::string canonical_json() const;
};

// Strict parse; throws std::invalid_argument with the offending key. When
// the DEFDR_SEED environment variable is set it overrides the seed.
ExperimentConfig parse_experiment_config(const std::string& json_text);

ExperimentConfig default_experiment_config();

// FNV-1a over the canonical JSON, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

// The four accuracies of one (patch, defense) cell, measured on the same
// test set: undefended clean, undefended patched, defended patched,
// defended clean.
ReportRow evaluate(const ClassifierModel& model, const LabeledDataset& test_set,
                   const TrainedPatch& patch, const DefenseConfig& defense,
                   Prng& rng);

// data -> train -> (per patch size: attack -> per method: tune -> evaluate),
// writing every artifact under cfg.output_dir. Reproducible from
// (config, seed).
EvalReport run_experiment(const ExperimentConfig& cfg);

}  // namespace defdr
