#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace defdr {

struct ReportRow {
    std::string patch_label;  // e.g. "8x8"
    std::string method;       // "svd" | "tsne" | "identity"
    double clean_acc = 0.0;
    double attacked_acc = 0.0;
    double chosen_info = 0.0;
    double robust_with_patch = 0.0;
    double robust_without_patch = 0.0;
};

struct EvalReport {
    std::vector<ReportRow> rows;  // one per (patch size, method)
    uint64_t seed = 0;
    std::string config_hash;   // 16 hex digits
    std::string generated_at;  // ISO 8601 UTC; excluded from byte comparison
};

enum class ReportFormat { Markdown, Csv, Svg };

ReportFormat report_format_from_name(const std::string& name);

// Markdown/CSV mirror each other; SVG emits a static grouped bar chart
// (clean / attacked / defended per patch size). CSV rows carry fractions
// in shortest round-trip form, so parse(render(r)) is exact.
std::string render_report(const EvalReport& r, ReportFormat format);

// Accepts the CSV produced by render_report. Rows whose config_hash
// metadata disagrees are refused unless force is set.
EvalReport parse_report_csv(const std::string& text);

// External tables (reference numbers ingested from CSV) render with every
// cell passed through verbatim.
struct StaticTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

StaticTable parse_static_csv(const std::string& text);
std::string render_static_markdown(const StaticTable& t);

// Reference comparison rows reported by prior work; rendered alongside
// results, never recomputed.
StaticTable reference_comparison_table();

std::string iso8601_utc_now();
std::string format_fraction(double v);          // shortest round-trip text
std::string format_percent(double fraction);    // e.g. 0.924 -> "92.4%"
std::string format_info_percent(double info);   // e.g. 0.95 -> "95%"

}  // namespace defdr
