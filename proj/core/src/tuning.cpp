#include "defdr/tuning.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace defdr {
namespace {

std::string shortest(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

}  // namespace

TuneResult tune_info(const ClassifierModel& model,
                     const LabeledDataset& clean_set, const TrainedPatch& patch,
                     const DefenseConfig& method_template,
                     const std::vector<double>& grid, double tolerance,
                     Prng& rng) {
    if (clean_set.size() == 0)
        throw std::invalid_argument("tune_info: empty dataset");
    if (grid.empty()) throw std::invalid_argument("tune_info: empty grid");
    for (double g : grid)
        if (!(g > 0.0 && g <= 1.0))
            throw std::invalid_argument("tune_info: grid values must be in (0,1]");

    TuneResult result;
    result.baseline_clean_acc = accuracy(model, clean_set);

    int h = clean_set.image(0).height(), w = clean_set.image(0).width();
    std::vector<size_t> robust_hits(grid.size(), 0), clean_hits(grid.size(), 0);

    for (size_t i = 0; i < clean_set.size(); ++i) {
        const ImageTensor& clean = clean_set.image(i);
        MaskResult placed = make_mask(h, w, patch.spec, rng);
        ImageTensor attacked =
            apply_patch(clean, patch.pixels, placed.mask, placed.row, placed.col);

        DefensePlan clean_plan(clean, method_template);
        DefensePlan attacked_plan(attacked, method_template);
        for (size_t g = 0; g < grid.size(); ++g) {
            if (predict(model, attacked_plan.apply(grid[g])) == clean_set.label(i))
                ++robust_hits[g];
            if (predict(model, clean_plan.apply(grid[g])) == clean_set.label(i))
                ++clean_hits[g];
        }
    }

    double n = static_cast<double>(clean_set.size());
    result.rows.resize(grid.size());
    for (size_t g = 0; g < grid.size(); ++g) {
        result.rows[g] = TuneRow{grid[g], robust_hits[g] / n, clean_hits[g] / n};
    }

    // feasible = clean drop strictly below the tolerance
    int best = -1;
    for (size_t g = 0; g < grid.size(); ++g) {
        double drop = result.baseline_clean_acc - result.rows[g].clean_acc_with_defense;
        if (drop >= tolerance) continue;
        if (best < 0 ||
            result.rows[g].robust_acc_with_patch >
                result.rows[best].robust_acc_with_patch ||
            (result.rows[g].robust_acc_with_patch ==
                 result.rows[best].robust_acc_with_patch &&
             grid[g] > grid[best]))
            best = static_cast<int>(g);
    }
    if (best >= 0) {
        result.constraint_satisfied = true;
    } else {
        // nothing met the tolerance: fall back to the smallest clean drop
        for (size_t g = 0; g < grid.size(); ++g) {
            double drop =
                result.baseline_clean_acc - result.rows[g].clean_acc_with_defense;
            if (best < 0) {
                best = static_cast<int>(g);
                continue;
            }
            double best_drop = result.baseline_clean_acc -
                               result.rows[best].clean_acc_with_defense;
            if (drop < best_drop || (drop == best_drop && grid[g] > grid[best]))
                best = static_cast<int>(g);
        }
    }
    result.chosen_info = grid[best];
    return result;
}

std::vector<double> parse_grid(const std::string& text) {
    auto to_num = [&](const std::string& s) {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size())
            throw std::invalid_argument("bad grid component '" + s + "'");
        return v;
    };

    size_t c1 = text.find(':');
    if (c1 == std::string::npos) return {to_num(text)};
    size_t c2 = text.find(':', c1 + 1);
    if (c2 == std::string::npos)
        throw std::invalid_argument("grid must be start:stop:step or a number");

    double start = to_num(text.substr(0, c1));
    double stop = to_num(text.substr(c1 + 1, c2 - c1 - 1));
    double step = to_num(text.substr(c2 + 1));
    if (step <= 0.0 || stop < start)
        throw std::invalid_argument("grid must satisfy start <= stop, step > 0");

    int count = static_cast<int>(std::round((stop - start) / step)) + 1;
    std::vector<double> grid(count);
    for (int i = 0; i < count; ++i) grid[i] = start + i * step;
    grid.back() = stop;  // kill accumulated rounding on the endpoint
    return grid;
}

std::string tune_result_csv(const TuneResult& r, const std::string& config_hash) {
    std::ostringstream out;
    out << "# defdr tune v1\n";
    if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
    out << "# baseline_clean_acc=" << shortest(r.baseline_clean_acc) << '\n';
    out << "# chosen_info=" << shortest(r.chosen_info) << '\n';
    out << "# constraint_satisfied=" << (r.constraint_satisfied ? "true" : "false")
        << '\n';
    out << "info,robust_acc_with_patch,clean_acc_with_defense\n";
    for (const TuneRow& row : r.rows)
        out << shortest(row.info) << ',' << shortest(row.robust_acc_with_patch)
            << ',' << shortest(row.clean_acc_with_defense) << '\n';
    return out.str();
}

}  // namespace defdr
