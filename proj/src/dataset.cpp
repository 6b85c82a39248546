#include "citeworthy/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "citeworthy/error.hpp"
#include "citeworthy/rng.hpp"
#include "citeworthy/version.hpp"

namespace citeworthy::dataset {

using nlohmann::json;

const int kDatasetSchemaVersion = 1;

SplitAssignment split_documents(std::vector<std::string> doc_ids,
                                std::array<double, 3> ratios, std::uint64_t seed) {
    for (double r : ratios)
        if (!(r > 0.0)) throw Error(ErrorCode::BadRatios, "ratios must be positive");
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9)
        throw Error(ErrorCode::BadRatios, "ratios sum to " + std::to_string(sum) + ", not 1");

    std::sort(doc_ids.begin(), doc_ids.end());
    doc_ids.erase(std::unique(doc_ids.begin(), doc_ids.end()), doc_ids.end());
    if (doc_ids.size() < 3)
        throw Error(ErrorCode::InsufficientDocuments,
                    "need at least 3 documents, got " + std::to_string(doc_ids.size()));

    SplitMix64 rng(seed);
    rng.shuffle(doc_ids);

    // floor(r * N) for val and test, remainder to train. The 1e-9 nudge keeps
    // exact fractions like 1/3 * 3 from flooring to one less.
    const double n = static_cast<double>(doc_ids.size());
    std::size_t n_val = static_cast<std::size_t>(std::floor(ratios[1] * n + 1e-9));
    std::size_t n_test = static_cast<std::size_t>(std::floor(ratios[2] * n + 1e-9));

    SplitAssignment split;
    split.seed = seed;
    split.ratios = ratios;
    split.val.assign(doc_ids.begin(), doc_ids.begin() + n_val);
    split.test.assign(doc_ids.begin() + n_val, doc_ids.begin() + n_val + n_test);
    split.train.assign(doc_ids.begin() + n_val + n_test, doc_ids.end());
    return split;
}

ContextString build_context(const std::vector<FlatSentence>& flat, std::size_t i,
                            bool include_section) {
    if (i < 1 || i > flat.size())
        throw Error(ErrorCode::IndexOutOfRange,
                    "sentence index " + std::to_string(i) + " not in [1, " +
                        std::to_string(flat.size()) + "]");
    const std::string prev = i > 1 ? flat[i - 2].sentence->text : std::string();
    const std::string& cur = flat[i - 1].sentence->text;
    const std::string next = i < flat.size() ? flat[i].sentence->text : std::string();

    ContextString ctx;
    if (include_section) {
        ctx.section_header = corpus::section_prefix(flat[i - 1].section);
        ctx.text = *ctx.section_header + " " + prev + " " + cur + " " + next;
    } else {
        ctx.text = prev + " " + cur + " " + next;
    }
    return ctx;
}

ContextString build_context(const Document& doc, std::size_t i, bool include_section) {
    return build_context(corpus::flatten(doc), i, include_section);
}

namespace {

void check_window_length(std::size_t m) {
    if (m < 2 || m % 2 != 0)
        throw Error(ErrorCode::BadWindowLength,
                    "window length must be even and >= 2, got " + std::to_string(m));
}

Window span_window(const std::string& doc_id, std::size_t first, std::size_t last,
                   std::size_t n, std::size_t m, WindowPurpose purpose) {
    Window w;
    w.doc_id = doc_id;
    w.m = m;
    w.purpose = purpose;
    w.indices.reserve(m);
    for (std::size_t idx = first; idx <= last; ++idx)
        w.indices.push_back(idx >= 1 && idx <= n ? idx : 0);
    for (std::size_t idx : w.indices) {
        if (idx != 0) {
            w.start = idx;
            break;
        }
    }
    return w;
}

}  // namespace

std::vector<Window> make_training_windows(const std::string& doc_id, std::size_t n,
                                          std::size_t m) {
    check_window_length(m);
    std::vector<Window> windows;
    if (n == 0) return windows;
    if (n <= m) {
        windows.push_back(span_window(doc_id, 1, m, n, m, WindowPurpose::training));
        return windows;
    }
    const std::size_t step = m / 2;
    std::size_t start = 1;
    while (start + m - 1 <= n) {
        windows.push_back(span_window(doc_id, start, start + m - 1, n, m,
                                      WindowPurpose::training));
        start += step;
    }
    // n mod (m/2) != 0: clip the final start so the tail is covered without a
    // mostly-padding window.
    if (windows.back().indices.back() < n)
        windows.push_back(span_window(doc_id, n - m + 1, n, n, m, WindowPurpose::training));
    return windows;
}

std::vector<Window> make_training_windows(const Document& doc, std::size_t m) {
    return make_training_windows(doc.doc_id, doc.sentence_count(), m);
}

Window make_inference_window(const std::string& doc_id, std::size_t n, std::size_t i,
                             std::size_t m) {
    check_window_length(m);
    if (i < 1 || i > n)
        throw Error(ErrorCode::IndexOutOfRange,
                    "sentence index " + std::to_string(i) + " not in [1, " +
                        std::to_string(n) + "]");
    const std::size_t half = m / 2;
    // i - m/2 may underflow size_t; span_window works on a signed range.
    Window w;
    w.doc_id = doc_id;
    w.m = m;
    w.purpose = WindowPurpose::inference;
    w.center = i;
    w.indices.reserve(m);
    for (long long idx = static_cast<long long>(i) - static_cast<long long>(half);
         idx <= static_cast<long long>(i + half) - 1; ++idx) {
        bool in_range = idx >= 1 && idx <= static_cast<long long>(n);
        w.indices.push_back(in_range ? static_cast<std::size_t>(idx) : 0);
    }
    for (std::size_t idx : w.indices) {
        if (idx != 0) {
            w.start = idx;
            break;
        }
    }
    return w;
}

Window make_inference_window(const Document& doc, std::size_t i, std::size_t m) {
    return make_inference_window(doc.doc_id, doc.sentence_count(), i, m);
}

CorpusStats compute_stats(const std::vector<Document>& documents) {
    if (documents.empty()) throw Error(ErrorCode::EmptyCorpus, "no documents");
    CorpusStats stats;
    std::size_t total_chars = 0;
    std::size_t total_words = 0;
    for (const auto& doc : documents) {
        ++stats.articles;
        stats.sections += doc.sections.size();
        for (const auto& sec : doc.sections) {
            stats.paragraphs += sec.paragraphs.size();
            for (const auto& par : sec.paragraphs) {
                for (const auto& sen : par.sentences) {
                    ++stats.sentences;
                    if (sen.label == corpus::Label::cite)
                        ++stats.sentences_with_citation;
                    else
                        ++stats.sentences_without_citation;
                    total_chars += sen.char_len;
                    total_words += sen.word_len;
                }
            }
        }
    }
    if (stats.sentences > 0) {
        stats.avg_chars_per_sentence =
            static_cast<double>(total_chars) / static_cast<double>(stats.sentences);
        stats.avg_words_per_sentence =
            static_cast<double>(total_words) / static_cast<double>(stats.sentences);
    }
    return stats;
}

// ---------------------------------------------------------------------------
// JSONL dataset and split manifest

namespace {

corpus::SectionKind section_from_name(const std::string& name) {
    using corpus::SectionKind;
    for (SectionKind kind :
         {SectionKind::Abstract, SectionKind::Introduction, SectionKind::RelatedWork,
          SectionKind::Methods, SectionKind::Evaluation, SectionKind::Conclusion,
          SectionKind::Acknowledgments, SectionKind::Other}) {
        if (name == corpus::section_name(kind)) return kind;
    }
    throw Error(ErrorCode::SchemaMismatch, "unknown section bucket: " + name);
}

json label_to_json(corpus::Label label) {
    return label == corpus::Label::cite ? "cite" : "no_cite";
}

corpus::Label label_from_json(const json& j) {
    const std::string s = j.get<std::string>();
    if (s == "cite") return corpus::Label::cite;
    if (s == "no_cite") return corpus::Label::no_cite;
    throw Error(ErrorCode::SchemaMismatch, "unknown label: " + s);
}

json document_to_json(const Document& doc) {
    json sections = json::array();
    for (const auto& sec : doc.sections) {
        json paragraphs = json::array();
        for (const auto& par : sec.paragraphs) {
            json sentences = json::array();
            for (const auto& sen : par.sentences) {
                sentences.push_back({{"label", label_to_json(sen.label)},
                                     {"original_text", sen.original_text},
                                     {"text", sen.text}});
            }
            paragraphs.push_back(std::move(sentences));
        }
        sections.push_back({{"canonical", corpus::section_name(sec.canonical)},
                            {"header", sec.header},
                            {"paragraphs", std::move(paragraphs)}});
    }
    return {{"doc_id", doc.doc_id}, {"sections", std::move(sections)}};
}

Document document_from_json(const json& j) {
    Document doc;
    doc.doc_id = j.at("doc_id").get<std::string>();
    for (const auto& jsec : j.at("sections")) {
        corpus::Section sec;
        sec.header = jsec.at("header").get<std::string>();
        sec.canonical = section_from_name(jsec.at("canonical").get<std::string>());
        for (const auto& jpar : jsec.at("paragraphs")) {
            corpus::Paragraph par;
            for (const auto& jsen : jpar) {
                par.sentences.push_back(corpus::Sentence::make(
                    jsen.at("text").get<std::string>(), label_from_json(jsen.at("label")),
                    jsen.at("original_text").get<std::string>()));
            }
            sec.paragraphs.push_back(std::move(par));
        }
        doc.sections.push_back(std::move(sec));
    }
    return doc;
}

void check_schema_version(const json& header, int expected, const std::string& what) {
    if (!header.is_object() || !header.contains("schema_version"))
        throw Error(ErrorCode::SchemaMismatch, what + ": missing schema_version header");
    const json& v = header.at("schema_version");
    bool ok = (v.is_number_integer() && v.get<int>() == expected) ||
              (v.is_string() && v.get<std::string>() == std::to_string(expected));
    if (!ok)
        throw Error(ErrorCode::SchemaMismatch,
                    what + ": schema_version " + v.dump() + " != " + std::to_string(expected));
}

json parse_config_json(const std::string& config_json) {
    try {
        return json::parse(config_json);
    } catch (const json::exception&) {
        return json::object();
    }
}

}  // namespace

void write_dataset(const std::string& path, const std::vector<Document>& documents,
                   const std::string& config_json) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write: " + path);
    json header = {{"schema_version", kDatasetSchemaVersion},
                   {"kind", "citeworthy-dataset"},
                   {"tool_version", kToolVersion},
                   {"config", parse_config_json(config_json)}};
    out << header.dump() << "\n";
    for (const auto& doc : documents) out << document_to_json(doc).dump() << "\n";
    if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path);
}

std::vector<Document> read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open: " + path);
    std::string line;
    std::size_t lineno = 0;
    std::vector<Document> documents;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::IoFailure,
                        path + " line " + std::to_string(lineno) + ": " + e.what());
        }
        if (lineno == 1) {
            check_schema_version(j, kDatasetSchemaVersion, path);
            continue;
        }
        try {
            documents.push_back(document_from_json(j));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::IoFailure,
                        path + " line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (lineno == 0) throw Error(ErrorCode::SchemaMismatch, path + ": empty dataset file");
    return documents;
}

void write_split(const std::string& path, const SplitAssignment& split,
                 const std::string& config_json) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write: " + path);
    json j = {{"schema_version", kDatasetSchemaVersion},
              {"kind", "citeworthy-split"},
              {"tool_version", kToolVersion},
              {"seed", split.seed},
              {"ratios", {split.ratios[0], split.ratios[1], split.ratios[2]}},
              {"train", split.train},
              {"val", split.val},
              {"test", split.test},
              {"config", parse_config_json(config_json)}};
    out << j.dump(2) << "\n";
    if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path);
}

SplitAssignment read_split(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoFailure, path + ": " + e.what());
    }
    check_schema_version(j, kDatasetSchemaVersion, path);
    SplitAssignment split;
    try {
        split.seed = j.at("seed").get<std::uint64_t>();
        auto r = j.at("ratios");
        split.ratios = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
        split.train = j.at("train").get<std::vector<std::string>>();
        split.val = j.at("val").get<std::vector<std::string>>();
        split.test = j.at("test").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaMismatch, path + ": " + e.what());
    }
    return split;
}

}  // namespace citeworthy::dataset
