#include "defdr/experiment.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace defdr {
namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::set<std::string>& allowed,
                  const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw std::invalid_argument("config: unknown key '" + it.key() +
                                        "' in " + where);
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    return obj.at(key).get<T>();
}

TsneKernel kernel_from_name(const std::string& name) {
    if (name == "student-t") return TsneKernel::StudentT;
    if (name == "gaussian") return TsneKernel::Gaussian;
    throw std::invalid_argument("config: unknown kernel '" + name + "'");
}

DefenseSetup parse_defense(const json& d) {
    require_keys(d,
                 {"method", "grid", "block", "perplexity", "embed_dim",
                  "iterations", "learning_rate", "kernel", "seed", "svd_info_mode"},
                 "defenses[]");
    DefenseSetup setup;
    setup.config.method =
        DefenseConfig::method_from_name(d.at("method").get<std::string>());
    setup.grid = parse_grid(get_or<std::string>(d, "grid", "0.90:0.99:0.01"));

    if (setup.config.method == DefenseConfig::Method::Svd) {
        std::string mode = get_or<std::string>(d, "svd_info_mode", "mass");
        if (mode == "mass")
            setup.config.svd_mode = InfoMode::SigmaMass;
        else if (mode == "energy")
            setup.config.svd_mode = InfoMode::SigmaEnergy;
        else
            throw std::invalid_argument("config: svd_info_mode must be mass|energy");
    }
    if (setup.config.method == DefenseConfig::Method::Tsne) {
        setup.config.block = get_or<int>(d, "block", 4);
        setup.config.tsne.perplexity = get_or<double>(d, "perplexity", 10.0);
        setup.config.tsne.embed_dim = get_or<int>(d, "embed_dim", 2);
        setup.config.tsne.iterations = get_or<int>(d, "iterations", 500);
        setup.config.tsne.learning_rate = get_or<double>(d, "learning_rate", 100.0);
        setup.config.tsne.kernel =
            kernel_from_name(get_or<std::string>(d, "kernel", "student-t"));
        setup.config.tsne_seed = get_or<uint64_t>(d, "seed", kDefaultTsneSeed);
    }
    return setup;
}

json defense_to_json(const DefenseSetup& s) {
    json d;
    d["method"] = s.config.method_name();
    std::string grid_text;
    {
        std::ostringstream g;
        for (size_t i = 0; i < s.grid.size(); ++i) {
            if (i) g << ';';
            g << format_fraction(s.grid[i]);
        }
        grid_text = g.str();
    }
    d["grid"] = grid_text;
    if (s.config.method == DefenseConfig::Method::Svd)
        d["svd_info_mode"] =
            s.config.svd_mode == InfoMode::SigmaMass ? "mass" : "energy";
    if (s.config.method == DefenseConfig::Method::Tsne) {
        d["block"] = s.config.block;
        d["perplexity"] = s.config.tsne.perplexity;
        d["embed_dim"] = s.config.tsne.embed_dim;
        d["iterations"] = s.config.tsne.iterations;
        d["learning_rate"] = s.config.tsne.learning_rate;
        d["kernel"] = s.config.tsne.kernel == TsneKernel::StudentT ? "student-t"
                                                                   : "gaussian";
        d["seed"] = s.config.tsne_seed;
    }
    return d;
}

}  // namespace

ExperimentConfig default_experiment_config() {
    ExperimentConfig cfg;
    cfg.eot.max_translation = 2;
    cfg.eot.max_rotation = 15.0;
    cfg.eot.brightness_lo = 0.9;
    cfg.eot.brightness_hi = 1.1;
    DefenseSetup svd;
    svd.config.method = DefenseConfig::Method::Svd;
    svd.grid = parse_grid("0.90:0.99:0.01");
    DefenseSetup tsne;
    tsne.config.method = DefenseConfig::Method::Tsne;
    tsne.grid = parse_grid("0.90:0.99:0.01");
    tsne.config.tsne.iterations = 300;
    cfg.defenses = {svd, tsne};
    return cfg;
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: not valid JSON: ") +
                                    e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("config: not a JSON object");

    require_keys(j,
                 {"seed", "image_side", "train_count", "test_count", "tune_count",
                  "patch_sizes", "attack", "classifier", "defenses", "tolerance",
                  "output_dir"},
                 "top level");

    ExperimentConfig cfg = default_experiment_config();
    cfg.defenses.clear();

    cfg.seed = get_or<uint64_t>(j, "seed", cfg.seed);
    cfg.image_side = get_or<int>(j, "image_side", cfg.image_side);
    cfg.train_count = get_or<int>(j, "train_count", cfg.train_count);
    cfg.test_count = get_or<int>(j, "test_count", cfg.test_count);
    cfg.tune_count = get_or<int>(j, "tune_count", cfg.tune_count);
    if (j.contains("patch_sizes"))
        cfg.patch_sizes = j.at("patch_sizes").get<std::vector<int>>();
    cfg.tolerance = get_or<double>(j, "tolerance", cfg.tolerance);
    cfg.output_dir = get_or<std::string>(j, "output_dir", cfg.output_dir);

    if (j.contains("attack")) {
        const json& a = j.at("attack");
        require_keys(a,
                     {"kind", "target_class", "epochs", "learning_rate", "eot"},
                     "attack");
        std::string kind = get_or<std::string>(a, "kind", "googleap");
        if (kind == "lavan")
            cfg.attack_kind = AttackKind::Lavan;
        else if (kind == "googleap")
            cfg.attack_kind = AttackKind::Googleap;
        else
            throw std::invalid_argument("config: attack.kind must be lavan|googleap");
        cfg.attack_target = get_or<int>(a, "target_class", cfg.attack_target);
        cfg.attack_epochs = get_or<int>(a, "epochs", cfg.attack_epochs);
        cfg.attack_lr = get_or<double>(a, "learning_rate", cfg.attack_lr);
        if (a.contains("eot")) {
            const json& e = a.at("eot");
            require_keys(e,
                         {"max_translation", "max_rotation", "brightness_lo",
                          "brightness_hi"},
                         "attack.eot");
            cfg.eot.max_translation =
                get_or<int>(e, "max_translation", cfg.eot.max_translation);
            cfg.eot.max_rotation =
                get_or<double>(e, "max_rotation", cfg.eot.max_rotation);
            cfg.eot.brightness_lo =
                get_or<double>(e, "brightness_lo", cfg.eot.brightness_lo);
            cfg.eot.brightness_hi =
                get_or<double>(e, "brightness_hi", cfg.eot.brightness_hi);
        }
    }

    if (j.contains("classifier")) {
        const json& c = j.at("classifier");
        require_keys(c, {"epochs", "batch_size", "learning_rate", "momentum"},
                     "classifier");
        cfg.classifier.epochs = get_or<int>(c, "epochs", cfg.classifier.epochs);
        cfg.classifier.batch_size =
            get_or<int>(c, "batch_size", cfg.classifier.batch_size);
        cfg.classifier.learning_rate =
            get_or<double>(c, "learning_rate", cfg.classifier.learning_rate);
        cfg.classifier.momentum =
            get_or<double>(c, "momentum", cfg.classifier.momentum);
    }

    if (j.contains("defenses")) {
        for (const json& d : j.at("defenses")) cfg.defenses.push_back(parse_defense(d));
    } else {
        cfg.defenses = default_experiment_config().defenses;
    }

    // basic sanity before any stage runs
    if (cfg.image_side < 16 || cfg.image_side % 4 != 0)
        throw std::invalid_argument(
            "config: image_side must be >= 16 and divisible by 4");
    if (cfg.train_count < kShapeClassCount || cfg.test_count < 1 ||
        cfg.tune_count < 1)
        throw std::invalid_argument("config: dataset counts too small");
    if (cfg.patch_sizes.empty())
        throw std::invalid_argument("config: patch_sizes must be non-empty");
    for (int s : cfg.patch_sizes)
        if (s < 2 || s > cfg.image_side)
            throw std::invalid_argument("config: patch size out of range");
    if (cfg.defenses.empty())
        throw std::invalid_argument("config: defenses must be non-empty");
    if (!(cfg.tolerance > 0.0 && cfg.tolerance < 1.0))
        throw std::invalid_argument("config: tolerance must be in (0,1)");
    cfg.eot.validate();

    if (const char* env = std::getenv("DEFDR_SEED")) {
        char* end = nullptr;
        uint64_t v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0')
            throw std::invalid_argument("DEFDR_SEED is not an unsigned integer");
        cfg.seed = v;
    }
    return cfg;
}

std::string ExperimentConfig::canonical_json() const {
    json j;
    j["seed"] = seed;
    j["image_side"] = image_side;
    j["train_count"] = train_count;
    j["test_count"] = test_count;
    j["tune_count"] = tune_count;
    j["patch_sizes"] = patch_sizes;
    j["attack"] = {
        {"kind", attack_kind == AttackKind::Lavan ? "lavan" : "googleap"},
        {"target_class", attack_target},
        {"epochs", attack_epochs},
        {"learning_rate", attack_lr},
        {"eot",
         {{"max_translation", eot.max_translation},
          {"max_rotation", eot.max_rotation},
          {"brightness_lo", eot.brightness_lo},
          {"brightness_hi", eot.brightness_hi}}}};
    j["classifier"] = {{"epochs", classifier.epochs},
                       {"batch_size", classifier.batch_size},
                       {"learning_rate", classifier.learning_rate},
                       {"momentum", classifier.momentum}};
    json defenses_json = json::array();
    for (const DefenseSetup& d : defenses) defenses_json.push_back(defense_to_json(d));
    j["defenses"] = defenses_json;
    j["tolerance"] = tolerance;
    j["output_dir"] = output_dir;
    return j.dump();
}

std::string config_hash(const ExperimentConfig& cfg) {
    std::string text = cfg.canonical_json();
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ReportRow evaluate(const ClassifierModel& model, const LabeledDataset& test_set,
                   const TrainedPatch& patch, const DefenseConfig& defense,
                   Prng& rng) {
    if (test_set.size() == 0) throw std::invalid_argument("evaluate: empty set");
    int h = test_set.image(0).height(), w = test_set.image(0).width();

    size_t clean_ok = 0, attacked_ok = 0, rob_patch_ok = 0, rob_clean_ok = 0;
    for (size_t i = 0; i < test_set.size(); ++i) {
        const ImageTensor& clean = test_set.image(i);
        int label = test_set.label(i);
        MaskResult placed = make_mask(h, w, patch.spec, rng);
        ImageTensor attacked =
            apply_patch(clean, patch.pixels, placed.mask, placed.row, placed.col);

        if (predict(model, clean) == label) ++clean_ok;
        if (predict(model, attacked) == label) ++attacked_ok;
        if (predict(model, defend(attacked, defense)) == label) ++rob_patch_ok;
        if (predict(model, defend(clean, defense)) == label) ++rob_clean_ok;
    }

    double n = static_cast<double>(test_set.size());
    ReportRow row;
    row.method = defense.method_name();
    row.chosen_info = defense.info;
    row.clean_acc = clean_ok / n;
    row.attacked_acc = attacked_ok / n;
    row.robust_with_patch = rob_patch_ok / n;
    row.robust_without_patch = rob_clean_ok / n;
    return row;
}

EvalReport run_experiment(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    std::string hash = config_hash(cfg);

    auto stage = [](const std::string& name, auto&& fn) {
        try {
            return fn();
        } catch (const std::exception& e) {
            throw std::runtime_error("stage '" + name + "' failed: " + e.what());
        }
    };

    Prng master(cfg.seed);
    // fixed stream ids per stage keep the pipeline reproducible even if one
    // stage changes how many draws it makes
    Prng data_rng = master.fork(1);
    uint64_t train_data_seed = data_rng.next_u64();
    uint64_t test_data_seed = data_rng.next_u64();
    uint64_t tune_data_seed = data_rng.next_u64();

    LabeledDataset train_set, test_set, tune_set;
    stage("gen-data", [&] {
        train_set = gen_shapes_dataset(train_data_seed, cfg.train_count,
                                       cfg.image_side);
        test_set = gen_shapes_dataset(test_data_seed, cfg.test_count,
                                      cfg.image_side);
        tune_set = gen_shapes_dataset(tune_data_seed, cfg.tune_count,
                                      cfg.image_side);
        return 0;
    });

    ClassifierModel model;
    stage("train", [&] {
        Prng rng = master.fork(2);
        TrainConfig tc = cfg.classifier;
        TrainResult tr = train_classifier(train_set, tc, rng);
        model = std::move(tr.model);
        save_checkpoint(model, (fs::path(cfg.output_dir) / "model.bin").string());
        return 0;
    });

    EvalReport report;
    report.seed = cfg.seed;
    report.config_hash = hash;
    report.generated_at = iso8601_utc_now();

    for (size_t si = 0; si < cfg.patch_sizes.size(); ++si) {
        int side = cfg.patch_sizes[si];
        std::string label = std::to_string(side) + "x" + std::to_string(side);

        PatchSpec spec;
        spec.side = side;
        spec.target_class = cfg.attack_target;
        if (cfg.attack_kind == AttackKind::Lavan) {
            spec.placement = PatchSpec::Placement::Fixed;
            spec.row = 0;
            spec.col = cfg.image_side - side;  // upper-right corner
        } else {
            spec.placement = PatchSpec::Placement::Random;
        }

        TrainedPatch patch;
        uint64_t attack_seed = master.fork(100 + si).next_u64();
        stage("attack " + label, [&] {
            Prng rng(attack_seed);
            patch = cfg.attack_kind == AttackKind::Lavan
                        ? train_patch_lavan(model, train_set, spec,
                                            cfg.attack_epochs, cfg.attack_lr, rng)
                        : train_patch_googleap(model, train_set, spec, cfg.eot,
                                               cfg.attack_epochs, cfg.attack_lr,
                                               rng);
            std::string base =
                (fs::path(cfg.output_dir) / ("patch_" + label + ".ppm")).string();
            save_patch(patch, base, attack_seed);
            return 0;
        });

        for (size_t di = 0; di < cfg.defenses.size(); ++di) {
            const DefenseSetup& setup = cfg.defenses[di];
            TuneResult tuned;
            stage("tune " + label + " " + setup.config.method_name(), [&] {
                Prng rng = master.fork(1000 + 10 * si + di);
                tuned = tune_info(model, tune_set, patch, setup.config,
                                  setup.grid, cfg.tolerance, rng);
                std::ofstream out(fs::path(cfg.output_dir) /
                                  ("tune_" + label + "_" +
                                   setup.config.method_name() + ".csv"));
                out << tune_result_csv(tuned, hash);
                return 0;
            });

            stage("evaluate " + label + " " + setup.config.method_name(), [&] {
                DefenseConfig dc = setup.config;
                dc.info = tuned.chosen_info;
                Prng rng = master.fork(2000 + 10 * si + di);
                ReportRow row = evaluate(model, test_set, patch, dc, rng);
                row.patch_label = label;
                report.rows.push_back(row);
                return 0;
            });
        }
    }

    stage("report", [&] {
        fs::path dir(cfg.output_dir);
        std::ofstream(dir / "report.csv") << render_report(report, ReportFormat::Csv);
        std::ofstream md(dir / "report.md");
        md << "# Patch robustness report\n\n"
           << render_report(report, ReportFormat::Markdown)
           << "\n## Reference defenses (paper-reported, not reproduced)\n\n"
           << render_static_markdown(reference_comparison_table());
        std::ofstream(dir / "report.svg") << render_report(report, ReportFormat::Svg);

        nlohmann::json run;
        run["config_hash"] = hash;
        run["seed"] = cfg.seed;
        run["generated_at"] = report.generated_at;
        run["artifacts"] = {"model.bin", "report.csv", "report.md", "report.svg"};
        std::ofstream(dir / "run.json") << run.dump(2) << '\n';
        return 0;
    });

    return report;
}

}  // namespace defdr
