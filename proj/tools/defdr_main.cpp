// defdr: desk-scale lab for adversarial patch attacks and
// dimensionality-reduction defenses.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "defdr/experiment.hpp"
#include "defdr/ppm.hpp"

namespace fs = std::filesystem;
using namespace defdr;

namespace {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

// Dataset source shared by train/attack/tune: either a manifest of PPM
// files or the built-in generator.
struct DataArgs {
    std::string manifest;
    std::string base_dir;
    uint64_t gen_seed = 7;
    int gen_count = 1000;
    int gen_side = 32;

    void attach(CLI::App* cmd) {
        cmd->add_option("--manifest", manifest, "CSV manifest (path,label)");
        cmd->add_option("--base-dir", base_dir,
                        "base directory for manifest paths (default: its parent)");
        cmd->add_option("--gen-seed", gen_seed, "generator seed");
        cmd->add_option("--gen-count", gen_count, "generated image count");
        cmd->add_option("--gen-side", gen_side, "generated image side");
    }

    LabeledDataset load() const {
        if (!manifest.empty()) {
            std::string dir =
                base_dir.empty() ? fs::path(manifest).parent_path().string()
                                 : base_dir;
            return load_manifest(read_text_file(manifest), dir);
        }
        return gen_shapes_dataset(gen_seed, gen_count, gen_side);
    }
};

struct TsneArgs {
    int block = 4;
    double perplexity = 10.0;
    int embed_dim = 2;
    int iterations = 500;
    std::string kernel = "student-t";
    uint64_t seed = kDefaultTsneSeed;

    void attach(CLI::App* cmd) {
        cmd->add_option("--block", block, "tile side for the t-SNE defense");
        cmd->add_option("--perplexity", perplexity, "t-SNE perplexity");
        cmd->add_option("--embed-dim", embed_dim, "embedding dimension");
        cmd->add_option("--iterations", iterations, "t-SNE iterations");
        cmd->add_option("--kernel", kernel, "student-t|gaussian");
        cmd->add_option("--tsne-seed", seed, "embedding init seed");
    }

    void fill(DefenseConfig& cfg) const {
        cfg.block = block;
        cfg.tsne.perplexity = perplexity;
        cfg.tsne.embed_dim = embed_dim;
        cfg.tsne.iterations = iterations;
        cfg.tsne.kernel = kernel == "gaussian" ? TsneKernel::Gaussian
                                               : TsneKernel::StudentT;
        cfg.tsne_seed = seed;
        if (kernel != "gaussian" && kernel != "student-t")
            throw std::invalid_argument("--kernel must be student-t or gaussian");
    }
};

int run_cli(int argc, char** argv) {
    CLI::App app{"adversarial patch attacks vs dimensionality-reduction defenses"};
    app.require_subcommand(1);

    // ---- gen-data ----
    auto* gen = app.add_subcommand("gen-data", "generate a shapes dataset");
    uint64_t gen_seed = 7;
    int gen_count = 1000, gen_side = 32;
    std::string gen_out = "data_out", gen_prefix = "img";
    gen->add_option("--seed", gen_seed, "dataset seed");
    gen->add_option("--count", gen_count, "image count")->required();
    gen->add_option("--side", gen_side, "image side in pixels");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--prefix", gen_prefix, "file name prefix");

    // ---- train ----
    auto* train = app.add_subcommand("train", "train the classifier");
    DataArgs train_data;
    train_data.attach(train);
    TrainConfig tc;
    std::string train_out = "model.bin";
    train->add_option("--epochs", tc.epochs, "training epochs");
    train->add_option("--batch-size", tc.batch_size, "mini-batch size");
    train->add_option("--lr", tc.learning_rate, "learning rate");
    train->add_option("--momentum", tc.momentum, "SGD momentum");
    train->add_option("--seed", tc.seed, "training seed");
    train->add_option("--out", train_out, "checkpoint path")->required();

    // ---- attack ----
    auto* attack = app.add_subcommand("attack", "train an adversarial patch");
    DataArgs attack_data;
    attack_data.attach(attack);
    std::string attack_model, attack_kind = "googleap", attack_out = "patch.ppm";
    int patch_side = 8, attack_target = 0, attack_epochs = 30;
    std::optional<int> fixed_row, fixed_col;
    double attack_lr = 1.0;
    uint64_t attack_seed = 42;
    EotParams eot{2, 15.0, 0.9, 1.1};
    attack->add_option("--model", attack_model, "classifier checkpoint")->required();
    attack->add_option("--kind", attack_kind, "lavan|googleap");
    attack->add_option("--side", patch_side, "patch side in pixels");
    attack->add_option("--target", attack_target, "target class id");
    attack->add_option("--epochs", attack_epochs, "patch training epochs");
    attack->add_option("--lr", attack_lr, "patch ascent step size");
    attack->add_option("--seed", attack_seed, "attack seed");
    attack->add_option("--row", fixed_row, "fixed row (lavan; default upper-right)");
    attack->add_option("--col", fixed_col, "fixed col (lavan; default upper-right)");
    attack->add_option("--max-translation", eot.max_translation, "EOT translation");
    attack->add_option("--max-rotation", eot.max_rotation, "EOT rotation (deg)");
    attack->add_option("--brightness-lo", eot.brightness_lo, "EOT brightness lo");
    attack->add_option("--brightness-hi", eot.brightness_hi, "EOT brightness hi");
    attack->add_option("--out", attack_out, "patch PPM path (sidecar: +.json)");

    // ---- defend ----
    auto* defend_cmd = app.add_subcommand("defend", "defend one PPM image");
    std::string def_in, def_out, def_method = "svd", svd_mode = "mass";
    double def_info = 0.95;
    TsneArgs def_tsne;
    defend_cmd->add_option("--in", def_in, "input PPM")->required();
    defend_cmd->add_option("--out", def_out, "output PPM")->required();
    defend_cmd->add_option("--method", def_method, "svd|tsne")->required();
    defend_cmd->add_option("--info", def_info, "information fraction (0,1]");
    defend_cmd->add_option("--svd-info-mode", svd_mode, "mass|energy");
    def_tsne.attach(defend_cmd);

    // ---- tune ----
    auto* tune = app.add_subcommand("tune", "sweep the information fraction");
    DataArgs tune_data;
    tune_data.attach(tune);
    std::string tune_model, tune_patch, tune_method = "svd", tune_grid =
        "0.90:0.99:0.01", tune_out;
    double tune_tolerance = 0.02;
    uint64_t tune_seed = 42;
    TsneArgs tune_tsne;
    tune->add_option("--model", tune_model, "classifier checkpoint")->required();
    tune->add_option("--patch", tune_patch, "patch PPM (with .json sidecar)")
        ->required();
    tune->add_option("--method", tune_method, "svd|tsne");
    tune->add_option("--grid", tune_grid, "start:stop:step");
    tune->add_option("--tolerance", tune_tolerance, "max clean-accuracy drop");
    tune->add_option("--seed", tune_seed, "placement seed");
    tune->add_option("--out", tune_out, "write CSV here instead of stdout");
    tune_tsne.attach(tune);

    // ---- run ----
    auto* run = app.add_subcommand("run", "run a full experiment from JSON config");
    std::string run_config;
    run->add_option("--config", run_config, "experiment config JSON")->required();

    // ---- report ----
    auto* rep = app.add_subcommand("report", "render a report artifact");
    std::string rep_in, rep_table, rep_format = "markdown", rep_out, rep_config;
    bool rep_force = false;
    rep->add_option("--in", rep_in, "report CSV produced by `run`");
    rep->add_option("--table", rep_table, "static CSV table (verbatim cells)");
    rep->add_option("--format", rep_format, "markdown|csv|svg");
    rep->add_option("--out", rep_out, "output file (default stdout)");
    rep->add_option("--config", rep_config,
                    "config JSON to check the report's hash against");
    rep->add_flag("--force", rep_force, "render despite a config hash mismatch");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage problems are config errors
    }

    if (gen->parsed()) {
        LabeledDataset ds = gen_shapes_dataset(gen_seed, gen_count, gen_side);
        save_dataset(ds, gen_out, gen_prefix);
        std::cout << "wrote " << ds.size() << " images + manifest.csv to "
                  << gen_out << "\n";
        return 0;
    }

    if (train->parsed()) {
        LabeledDataset ds = train_data.load();
        Prng rng(tc.seed);
        TrainResult res = train_classifier(ds, tc, rng);
        save_checkpoint(res.model, train_out);
        std::cout << "train accuracy " << format_percent(accuracy(res.model, ds))
                  << ", checkpoint " << train_out << "\n";
        return 0;
    }

    if (attack->parsed()) {
        ClassifierModel model = load_checkpoint(attack_model);
        LabeledDataset ds = attack_data.load();
        PatchSpec spec;
        spec.side = patch_side;
        spec.target_class = attack_target;
        Prng rng(attack_seed);
        TrainedPatch patch;
        if (attack_kind == "lavan") {
            spec.placement = PatchSpec::Placement::Fixed;
            spec.row = fixed_row.value_or(0);
            spec.col = fixed_col.value_or(model.image_side - patch_side);
            patch = train_patch_lavan(model, ds, spec, attack_epochs, attack_lr,
                                      rng);
        } else if (attack_kind == "googleap") {
            spec.placement = PatchSpec::Placement::Random;
            patch = train_patch_googleap(model, ds, spec, eot, attack_epochs,
                                         attack_lr, rng);
        } else {
            throw std::invalid_argument("--kind must be lavan or googleap");
        }
        save_patch(patch, attack_out, attack_seed);
        std::cout << "patch " << attack_out << " targeted success "
                  << format_percent(patch.final_success_rate) << "\n";
        return 0;
    }

    if (defend_cmd->parsed()) {
        ImageTensor img = load_ppm_file(def_in);
        DefenseConfig cfg;
        cfg.method = DefenseConfig::method_from_name(def_method);
        cfg.info = def_info;
        if (svd_mode == "energy")
            cfg.svd_mode = InfoMode::SigmaEnergy;
        else if (svd_mode != "mass")
            throw std::invalid_argument("--svd-info-mode must be mass or energy");
        def_tsne.fill(cfg);
        save_ppm_file(defend(img, cfg), def_out);
        std::cout << "defended " << def_in << " -> " << def_out << "\n";
        return 0;
    }

    if (tune->parsed()) {
        ClassifierModel model = load_checkpoint(tune_model);
        TrainedPatch patch = load_patch(tune_patch);
        LabeledDataset ds = tune_data.load();
        DefenseConfig cfg;
        cfg.method = DefenseConfig::method_from_name(tune_method);
        tune_tsne.fill(cfg);
        Prng rng(tune_seed);
        TuneResult res = tune_info(model, ds, patch, cfg, parse_grid(tune_grid),
                                   tune_tolerance, rng);
        std::string csv = tune_result_csv(res, "");
        if (tune_out.empty())
            std::cout << csv;
        else
            write_text_file(tune_out, csv);
        std::cerr << "chosen info " << format_info_percent(res.chosen_info)
                  << (res.constraint_satisfied ? "" : " (constraint NOT met)")
                  << "\n";
        return 0;
    }

    if (run->parsed()) {
        ExperimentConfig cfg = parse_experiment_config(read_text_file(run_config));
        EvalReport report = run_experiment(cfg);
        std::cout << render_report(report, ReportFormat::Markdown);
        std::cout << "artifacts in " << cfg.output_dir << "\n";
        return 0;
    }

    if (rep->parsed()) {
        if (!rep_table.empty()) {
            StaticTable t = parse_static_csv(read_text_file(rep_table));
            std::string md = render_static_markdown(t);
            if (rep_out.empty())
                std::cout << md;
            else
                write_text_file(rep_out, md);
            return 0;
        }
        if (rep_in.empty())
            throw std::invalid_argument("report: need --in or --table");
        EvalReport r = parse_report_csv(read_text_file(rep_in));
        if (!rep_config.empty()) {
            ExperimentConfig cfg =
                parse_experiment_config(read_text_file(rep_config));
            if (config_hash(cfg) != r.config_hash && !rep_force)
                throw std::runtime_error(
                    "report: config hash mismatch (have " + r.config_hash +
                    ", config gives " + config_hash(cfg) +
                    "); pass --force to render anyway");
        }
        std::string text = render_report(r, report_format_from_name(rep_format));
        if (rep_out.empty())
            std::cout << text;
        else
            write_text_file(rep_out, text);
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
