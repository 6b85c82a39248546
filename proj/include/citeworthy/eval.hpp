#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "citeworthy/corpus.hpp"

namespace citeworthy::eval {

using corpus::Label;
using corpus::SectionKind;

struct ClassMetrics {
    double precision = 0.0;  // tp / (tp + fp), 0 when the denominator is 0
    double recall = 0.0;     // tp / (tp + fn), 0 when the denominator is 0
    double f1 = 0.0;         // harmonic mean, 0 when p + r = 0
    std::size_t support = 0;
};

struct EvalReport {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;  // positive class = cite
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double weighted_f1 = 0.0;  // support-weighted mean of per-class F1
    std::map<SectionKind, ClassMetrics> per_section;
};

EvalReport compute_metrics(const std::vector<Label>& preds,
                           const std::vector<Label>& golds);

// Cite-class metrics per canonical section bucket; zero-support buckets are
// omitted. Here support = number of sentences in the bucket.
std::map<SectionKind, ClassMetrics> per_section_metrics(
    const std::vector<Label>& preds, const std::vector<Label>& golds,
    const std::vector<SectionKind>& sections);

struct MetricsDelta {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct DeltaReport {
    MetricsDelta overall;
    double weighted_f1 = 0.0;
    std::map<SectionKind, MetricsDelta> per_section;
    std::vector<std::string> notes;  // e.g. buckets present in only one report
};

// b - a, per metric and per shared section bucket.
DeltaReport compare_reports(const EvalReport& a, const EvalReport& b);

std::string report_to_json(const EvalReport& report, const std::string& config_json = "{}");
EvalReport report_from_json(const std::string& text);

// Aligned-column text table; includes the per-section block when present.
std::string report_to_table(const EvalReport& report);
std::string report_to_csv(const EvalReport& report);

}  // namespace citeworthy::eval
