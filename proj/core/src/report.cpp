#include "defdr/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <sstream>
#include <stdexcept>

namespace defdr {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    cells.push_back(cur);
    return cells;
}

void check_fraction(double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0))
        throw std::runtime_error(std::string("report: ") + what +
                                 " outside [0,1]");
}

double parse_double(const std::string& s, const char* what) {
    size_t pos = 0;
    double v;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error(std::string("report: bad number in ") + what);
    }
    if (pos != s.size())
        throw std::runtime_error(std::string("report: bad number in ") + what);
    return v;
}

const char* kCsvHeader =
    "patch_size,method,clean_acc,attacked_acc,info,robust_with_patch,"
    "robust_without_patch";

std::string render_csv(const EvalReport& r) {
    std::ostringstream out;
    out << "# defdr report v1\n";
    out << "# seed=" << r.seed << '\n';
    out << "# config_hash=" << r.config_hash << '\n';
    out << "# generated_at=" << r.generated_at << '\n';
    out << kCsvHeader << '\n';
    for (const ReportRow& row : r.rows) {
        out << row.patch_label << ',' << row.method << ','
            << format_fraction(row.clean_acc) << ','
            << format_fraction(row.attacked_acc) << ','
            << format_fraction(row.chosen_info) << ','
            << format_fraction(row.robust_with_patch) << ','
            << format_fraction(row.robust_without_patch) << '\n';
    }
    return out.str();
}

std::string render_markdown(const EvalReport& r) {
    std::ostringstream out;
    out << "| Patch Size | Method | Clean Acc | Adv Patch Attack | Info % | "
           "Robust (w/ patch) | Robust (w/o patch) |\n";
    out << "|---|---|---|---|---|---|---|\n";
    for (const ReportRow& row : r.rows) {
        out << "| " << row.patch_label << " | " << row.method << " | "
            << format_percent(row.clean_acc) << " | "
            << format_percent(row.attacked_acc) << " | "
            << format_info_percent(row.chosen_info) << " | "
            << format_percent(row.robust_with_patch) << " | "
            << format_percent(row.robust_without_patch) << " |\n";
    }
    out << "\nseed=" << r.seed << " config_hash=" << r.config_hash << '\n';
    return out.str();
}

std::string render_svg(const EvalReport& r) {
    // grouped bars: clean / attacked / defended (w/ patch) per report row
    const int bar_w = 18, gap = 8, group_gap = 26;
    const int plot_h = 260, base_y = 300, left = 50;
    int group_w = 3 * bar_w + 2 * gap + group_gap;
    int width = left + static_cast<int>(r.rows.size()) * group_w + 30;

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"360\">\n";
    out << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    // y axis with 0/50/100% gridlines
    for (int pct : {0, 50, 100}) {
        int y = base_y - pct * plot_h / 100;
        out << "  <line x1=\"" << left - 6 << "\" y1=\"" << y << "\" x2=\""
            << width - 10 << "\" y2=\"" << y
            << "\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
        out << "  <text x=\"6\" y=\"" << y + 4 << "\" font-size=\"11\">" << pct
            << "%</text>\n";
    }
    const char* colors[3] = {"#4477aa", "#ee6677", "#228833"};
    const char* names[3] = {"clean", "attacked", "defended"};
    for (size_t i = 0; i < r.rows.size(); ++i) {
        const ReportRow& row = r.rows[i];
        double vals[3] = {row.clean_acc, row.attacked_acc, row.robust_with_patch};
        int gx = left + static_cast<int>(i) * group_w;
        for (int b = 0; b < 3; ++b) {
            int h = static_cast<int>(std::lround(vals[b] * plot_h));
            int x = gx + b * (bar_w + gap);
            out << "  <rect x=\"" << x << "\" y=\"" << base_y - h
                << "\" width=\"" << bar_w << "\" height=\"" << h
                << "\" fill=\"" << colors[b] << "\"/>\n";
        }
        out << "  <text x=\"" << gx << "\" y=\"" << base_y + 16
            << "\" font-size=\"11\">" << row.patch_label << ' ' << row.method
            << "</text>\n";
    }
    for (int b = 0; b < 3; ++b) {
        int x = left + b * 110;
        out << "  <rect x=\"" << x << "\" y=\"10\" width=\"12\" height=\"12\" "
            << "fill=\"" << colors[b] << "\"/>\n";
        out << "  <text x=\"" << x + 16 << "\" y=\"21\" font-size=\"12\">"
            << names[b] << "</text>\n";
    }
    out << "  <text x=\"" << left << "\" y=\"345\" font-size=\"10\">config_hash="
        << r.config_hash << "</text>\n";
    out << "</svg>\n";
    return out.str();
}

}  // namespace

ReportFormat report_format_from_name(const std::string& name) {
    if (name == "markdown" || name == "md") return ReportFormat::Markdown;
    if (name == "csv") return ReportFormat::Csv;
    if (name == "svg") return ReportFormat::Svg;
    throw std::invalid_argument("unknown report format '" + name + "'");
}

std::string render_report(const EvalReport& r, ReportFormat format) {
    if (r.rows.empty()) throw std::invalid_argument("render_report: empty report");
    switch (format) {
        case ReportFormat::Markdown: return render_markdown(r);
        case ReportFormat::Csv: return render_csv(r);
        case ReportFormat::Svg: return render_svg(r);
    }
    throw std::invalid_argument("render_report: unknown format");
}

EvalReport parse_report_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    EvalReport r;
    bool saw_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto grab = [&](const char* key) -> const char* {
                std::string prefix = std::string("# ") + key + "=";
                if (line.rfind(prefix, 0) == 0) return line.c_str() + prefix.size();
                return nullptr;
            };
            if (const char* v = grab("seed")) r.seed = std::strtoull(v, nullptr, 10);
            if (const char* v = grab("config_hash")) r.config_hash = v;
            if (const char* v = grab("generated_at")) r.generated_at = v;
            continue;
        }
        if (!saw_header) {
            if (line != kCsvHeader)
                throw std::runtime_error("report: unexpected CSV header");
            saw_header = true;
            continue;
        }
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != 7)
            throw std::runtime_error("report: row with wrong cell count");
        ReportRow row;
        row.patch_label = cells[0];
        row.method = cells[1];
        row.clean_acc = parse_double(cells[2], "clean_acc");
        row.attacked_acc = parse_double(cells[3], "attacked_acc");
        row.chosen_info = parse_double(cells[4], "info");
        row.robust_with_patch = parse_double(cells[5], "robust_with_patch");
        row.robust_without_patch = parse_double(cells[6], "robust_without_patch");
        check_fraction(row.clean_acc, "clean_acc");
        check_fraction(row.attacked_acc, "attacked_acc");
        check_fraction(row.chosen_info, "info");
        check_fraction(row.robust_with_patch, "robust_with_patch");
        check_fraction(row.robust_without_patch, "robust_without_patch");
        r.rows.push_back(std::move(row));
    }
    if (!saw_header || r.rows.empty())
        throw std::runtime_error("report: no data rows");
    return r;
}

StaticTable parse_static_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    StaticTable t;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (t.header.empty())
            t.header = std::move(cells);
        else {
            if (cells.size() != t.header.size())
                throw std::runtime_error("table: ragged row");
            t.rows.push_back(std::move(cells));
        }
    }
    if (t.header.empty()) throw std::runtime_error("table: empty input");
    return t;
}

std::string render_static_markdown(const StaticTable& t) {
    std::ostringstream out;
    auto emit_row = [&out](const std::vector<std::string>& cells) {
        out << '|';
        for (const std::string& c : cells) out << ' ' << c << " |";
        out << '\n';
    };
    emit_row(t.header);
    out << '|';
    for (size_t i = 0; i < t.header.size(); ++i) out << "---|";
    out << '\n';
    for (const auto& row : t.rows) emit_row(row);
    return out.str();
}

StaticTable reference_comparison_table() {
    // robust accuracy reported by prior defenses on the same benchmark;
    // kept verbatim and labeled as external numbers
    StaticTable t;
    t.header = {"Defense", "Robust Accuracy", "Source"};
    t.rows = {
        {"LGS", "53.86%", "reported, not reproduced"},
        {"DS", "35.02%", "reported, not reproduced"},
        {"PatchGuard", "30.96%", "reported, not reproduced"},
        {"Jujutsu", "60%", "reported, not reproduced"},
        {"Dimensionality reduction (SVD)", "66.2%", "reported, not reproduced"},
    };
    return t;
}

std::string iso8601_utc_now() {
    std::time_t now = std::time(nullptr);
    std::tm tm_utc;
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

std::string format_fraction(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f%%", fraction * 100.0);
    return buf;
}

std::string format_info_percent(double info) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), info * 100.0);
    (void)ec;
    *p = '\0';
    return std::string(buf) + "%";
}

}  // namespace defdr
