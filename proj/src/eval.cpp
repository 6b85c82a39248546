#include "citeworthy/eval.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "citeworthy/error.hpp"
#include "citeworthy/version.hpp"

namespace citeworthy::eval {

using nlohmann::json;

namespace {

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double f1_of(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Counts count(const std::vector<Label>& preds, const std::vector<Label>& golds) {
    Counts c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool p = preds[i] == Label::cite;
        const bool g = golds[i] == Label::cite;
        if (p && g) ++c.tp;
        else if (p && !g) ++c.fp;
        else if (!p && g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

ClassMetrics cite_metrics(const Counts& c) {
    ClassMetrics m;
    m.precision = safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
    m.recall = safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
    m.f1 = f1_of(m.precision, m.recall);
    m.support = c.tp + c.fn + c.fp + c.tn;
    return m;
}

}  // namespace

EvalReport compute_metrics(const std::vector<Label>& preds, const std::vector<Label>& golds) {
    if (preds.size() != golds.size())
        throw Error(ErrorCode::LengthMismatch,
                    std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(golds.size()) + " golds");
    if (preds.empty()) throw Error(ErrorCode::EmptyInput, "nothing to score");

    const Counts c = count(preds, golds);
    EvalReport report;
    report.tp = c.tp;
    report.fp = c.fp;
    report.fn = c.fn;
    report.tn = c.tn;
    report.precision = safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
    report.recall = safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
    report.f1 = f1_of(report.precision, report.recall);

    // Weighted F1: support-weighted mean of the two per-class F1 scores.
    const double p_n = safe_div(static_cast<double>(c.tn), static_cast<double>(c.tn + c.fn));
    const double r_n = safe_div(static_cast<double>(c.tn), static_cast<double>(c.tn + c.fp));
    const double f1_n = f1_of(p_n, r_n);
    const double support_c = static_cast<double>(c.tp + c.fn);
    const double support_n = static_cast<double>(c.tn + c.fp);
    report.weighted_f1 = (support_c * report.f1 + support_n * f1_n) / (support_c + support_n);
    return report;
}

std::map<SectionKind, ClassMetrics> per_section_metrics(
    const std::vector<Label>& preds, const std::vector<Label>& golds,
    const std::vector<SectionKind>& sections) {
    if (preds.size() != golds.size() || preds.size() != sections.size())
        throw Error(ErrorCode::LengthMismatch, "prediction/gold/section lengths differ");

    std::map<SectionKind, Counts> buckets;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        Counts& c = buckets[sections[i]];
        const bool p = preds[i] == Label::cite;
        const bool g = golds[i] == Label::cite;
        if (p && g) ++c.tp;
        else if (p && !g) ++c.fp;
        else if (!p && g) ++c.fn;
        else ++c.tn;
    }
    std::map<SectionKind, ClassMetrics> out;
    for (const auto& [kind, c] : buckets) {
        ClassMetrics m = cite_metrics(c);
        if (m.support > 0) out[kind] = m;
    }
    return out;
}

DeltaReport compare_reports(const EvalReport& a, const EvalReport& b) {
    DeltaReport delta;
    delta.overall.precision = b.precision - a.precision;
    delta.overall.recall = b.recall - a.recall;
    delta.overall.f1 = b.f1 - a.f1;
    delta.weighted_f1 = b.weighted_f1 - a.weighted_f1;
    for (const auto& [kind, metrics_a] : a.per_section) {
        auto it = b.per_section.find(kind);
        if (it == b.per_section.end()) {
            delta.notes.push_back(std::string(corpus::section_name(kind)) +
                                  ": only in the first report");
            continue;
        }
        MetricsDelta d;
        d.precision = it->second.precision - metrics_a.precision;
        d.recall = it->second.recall - metrics_a.recall;
        d.f1 = it->second.f1 - metrics_a.f1;
        delta.per_section[kind] = d;
    }
    for (const auto& [kind, metrics_b] : b.per_section) {
        if (!a.per_section.count(kind))
            delta.notes.push_back(std::string(corpus::section_name(kind)) +
                                  ": only in the second report");
    }
    return delta;
}

std::string report_to_json(const EvalReport& report, const std::string& config_json) {
    json per_section = json::object();
    for (const auto& [kind, m] : report.per_section)
        per_section[corpus::section_name(kind)] = {{"precision", m.precision},
                                                   {"recall", m.recall},
                                                   {"f1", m.f1},
                                                   {"support", m.support}};
    json run_config;
    try {
        run_config = json::parse(config_json);
    } catch (const json::exception&) {
        run_config = json::object();
    }
    json j = {{"tp", report.tp},
              {"fp", report.fp},
              {"fn", report.fn},
              {"tn", report.tn},
              {"precision", report.precision},
              {"recall", report.recall},
              {"f1", report.f1},
              {"weighted_f1", report.weighted_f1},
              {"per_section", per_section},
              {"tool_version", kToolVersion},
              {"config", run_config}};
    return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoFailure, std::string("report: ") + e.what());
    }
    EvalReport report;
    try {
        report.tp = j.at("tp").get<std::size_t>();
        report.fp = j.at("fp").get<std::size_t>();
        report.fn = j.at("fn").get<std::size_t>();
        report.tn = j.at("tn").get<std::size_t>();
        report.precision = j.at("precision").get<double>();
        report.recall = j.at("recall").get<double>();
        report.f1 = j.at("f1").get<double>();
        report.weighted_f1 = j.at("weighted_f1").get<double>();
        for (const auto& [name, jm] : j.at("per_section").items()) {
            using corpus::SectionKind;
            for (SectionKind kind :
                 {SectionKind::Abstract, SectionKind::Introduction, SectionKind::RelatedWork,
                  SectionKind::Methods, SectionKind::Evaluation, SectionKind::Conclusion,
                  SectionKind::Acknowledgments, SectionKind::Other}) {
                if (name == corpus::section_name(kind)) {
                    ClassMetrics m;
                    m.precision = jm.at("precision").get<double>();
                    m.recall = jm.at("recall").get<double>();
                    m.f1 = jm.at("f1").get<double>();
                    m.support = jm.at("support").get<std::size_t>();
                    report.per_section[kind] = m;
                }
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaMismatch, std::string("report: ") + e.what());
    }
    return report;
}

std::string report_to_table(const EvalReport& report) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(3);
    out << std::left << std::setw(18) << "Model" << std::right << std::setw(8) << "P"
        << std::setw(8) << "R" << std::setw(8) << "F1" << std::setw(8) << "W-F1" << "\n";
    out << std::left << std::setw(18) << "overall" << std::right << std::setw(8)
        << report.precision << std::setw(8) << report.recall << std::setw(8) << report.f1
        << std::setw(8) << report.weighted_f1 << "\n";
    if (!report.per_section.empty()) {
        out << "\n";
        out << std::left << std::setw(18) << "Section" << std::right << std::setw(8) << "P"
            << std::setw(8) << "R" << std::setw(8) << "F1" << std::setw(10) << "Support"
            << "\n";
        for (const auto& [kind, m] : report.per_section) {
            out << std::left << std::setw(18) << corpus::section_name(kind) << std::right
                << std::setw(8) << m.precision << std::setw(8) << m.recall << std::setw(8)
                << m.f1 << std::setw(10) << m.support << "\n";
        }
    }
    return out.str();
}

std::string report_to_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "section,precision,recall,f1,support\n";
    out << "overall," << report.precision << "," << report.recall << "," << report.f1 << ","
        << (report.tp + report.fp + report.fn + report.tn) << "\n";
    for (const auto& [kind, m] : report.per_section)
        out << corpus::section_name(kind) << "," << m.precision << "," << m.recall << ","
            << m.f1 << "," << m.support << "\n";
    return out.str();
}

}  // namespace citeworthy::eval
