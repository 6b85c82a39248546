#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "citeworthy/corpus.hpp"

namespace citeworthy::dataset {

using corpus::Document;
using corpus::FlatSentence;

extern const int kDatasetSchemaVersion;

struct SplitAssignment {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
    std::uint64_t seed = 0;
    std::array<double, 3> ratios{};  // train, val, test
};

// Deterministic document-level split: sort ids, Fisher-Yates shuffle with
// splitmix64(seed), then floor(r_val*N) to val, floor(r_test*N) to test,
// remainder to train (in shuffle order: val block first, then test).
SplitAssignment split_documents(std::vector<std::string> doc_ids,
                                std::array<double, 3> ratios,
                                std::uint64_t seed);

struct ContextString {
    std::string text;
    std::optional<std::string> section_header;  // canonical, lowercased
};

// Context of sentence i: previous, current and next sentence joined by a
// single space, missing neighbors kept as empty fields. With include_section
// the lowercased canonical section name is prepended as one more field.
ContextString build_context(const Document& doc, std::size_t i, bool include_section);
ContextString build_context(const std::vector<FlatSentence>& flat, std::size_t i,
                            bool include_section);

enum class WindowPurpose { training, inference };

struct Window {
    std::string doc_id;
    std::size_t start = 0;             // first non-padding sentence index
    std::vector<std::size_t> indices;  // length m; 0 marks a padding slot
    std::size_t m = 0;
    WindowPurpose purpose = WindowPurpose::training;
    std::optional<std::size_t> center;  // inference only

    bool operator==(const Window& other) const = default;
};

// Training windows start at 1, 1+m/2, 1+2*(m/2), ... while they fit; if the
// tail is uncovered the final start is clipped to max(1, n-m+1). A document
// shorter than m yields a single zero-padded window.
std::vector<Window> make_training_windows(const Document& doc, std::size_t m);
std::vector<Window> make_training_windows(const std::string& doc_id, std::size_t n,
                                          std::size_t m);

// Centered window for sentence i: indices i-m/2 .. i+m/2-1, out-of-range
// slots marked as padding.
Window make_inference_window(const Document& doc, std::size_t i, std::size_t m);
Window make_inference_window(const std::string& doc_id, std::size_t n, std::size_t i,
                             std::size_t m);

CorpusStats compute_stats(const std::vector<Document>& documents);

// Dataset JSONL: a header line {schema_version, kind, tool_version, config}
// followed by one document object per line. read_dataset checks the schema
// version and reports parse failures with their line number.
void write_dataset(const std::string& path, const std::vector<Document>& documents,
                   const std::string& config_json = "{}");
std::vector<Document> read_dataset(const std::string& path);

void write_split(const std::string& path, const SplitAssignment& split,
                 const std::string& config_json = "{}");
SplitAssignment read_split(const std::string& path);

}  // namespace citeworthy::dataset
