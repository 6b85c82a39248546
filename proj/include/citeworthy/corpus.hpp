#pragma once

#include <cstddef>
#include <iosfwd>
#include <regex>
#include <string>
#include <vector>

namespace citeworthy {

// Shared by corpus (producer) and dataset (compute_stats). Averages are exact
// rationals kept as doubles; rounding happens only at display time.
struct CorpusStats {
    std::size_t articles = 0;
    std::size_t sections = 0;
    std::size_t paragraphs = 0;
    std::size_t sentences = 0;
    std::size_t sentences_with_citation = 0;
    std::size_t sentences_without_citation = 0;
    double avg_chars_per_sentence = 0.0;
    double avg_words_per_sentence = 0.0;
};

namespace corpus {

enum class Label { no_cite = 0, cite = 1 };

enum class SectionKind {
    Abstract,
    Introduction,
    RelatedWork,
    Methods,
    Evaluation,
    Conclusion,
    Acknowledgments,
    Other,
};

// Display name, e.g. "Related Work".
const char* section_name(SectionKind kind);
// Lowercased form used as a context prefix, e.g. "related work".
const char* section_prefix(SectionKind kind);

struct Sentence {
    std::string text;           // sanitized
    Label label = Label::no_cite;
    std::string original_text;  // pre-sanitization
    std::size_t char_len = 0;   // on sanitized text
    std::size_t word_len = 0;   // on sanitized text

    static Sentence make(std::string clean, Label label, std::string original);

    bool operator==(const Sentence& other) const = default;
};

struct Paragraph {
    std::vector<Sentence> sentences;

    bool operator==(const Paragraph& other) const = default;
};

struct Section {
    std::string header;
    SectionKind canonical = SectionKind::Other;
    std::vector<Paragraph> paragraphs;

    bool operator==(const Section& other) const = default;
};

struct Document {
    std::string doc_id;
    std::vector<Section> sections;

    std::size_t sentence_count() const;

    bool operator==(const Document& other) const = default;
};

// Flat, document-order view of a Document's sentences. Sentence indices are
// 1-based everywhere in this toolkit; flat[i - 1] is sentence i.
struct FlatSentence {
    const Sentence* sentence = nullptr;
    SectionKind section = SectionKind::Other;
};

std::vector<FlatSentence> flatten(const Document& doc);

struct RawArticle {
    std::string doc_id;
    std::string body;
    bool has_abstract = false;
};

struct CitationPattern {
    std::string name;
    std::string regex_text;
    std::regex compiled;
};

// The shipped pattern set, identical to data/citation_patterns.txt.
const std::vector<CitationPattern>& default_patterns();

// One pattern per line: "<name> <regex>", '#' comments, blank lines ignored.
std::vector<CitationPattern> parse_patterns(std::istream& in);
std::vector<CitationPattern> load_patterns(const std::string& path);

bool matches_any(const std::string& text, const std::vector<CitationPattern>& patterns);

struct LabelResult {
    std::string clean_text;
    Label label = Label::no_cite;
};

// Label from a scan of the original text; sanitation removes every pattern
// match, deletes bracket pairs emptied by the removal, collapses whitespace
// and trims. Removal re-runs to a fixpoint so the clean text never contains a
// residual match (re-running on clean_text yields the same text and no_cite).
LabelResult label_and_sanitize(const std::string& sentence_text,
                               const std::vector<CitationPattern>& patterns);

// Terminator-based ('.', '?', '!') segmentation with an abbreviation
// exception list, an initials rule, and no splitting inside ()/[] pairs.
// Whitespace-only input yields an empty list; output sentences are trimmed
// and never empty.
std::vector<std::string> segment_sentences(const std::string& paragraph_text);

// Case-insensitive keyword mapping of a raw header line to its bucket.
SectionKind canonicalize_header(const std::string& header);

Document parse_document(const RawArticle& raw,
                        const std::vector<CitationPattern>& patterns);

struct SkipRecord {
    std::string doc_id;
    std::string reason;
};

struct BuildResult {
    std::vector<Document> documents;
    CorpusStats stats;
    std::vector<SkipRecord> skipped;
};

// Parses and labels every article, skipping (with a logged reason) articles
// that are empty, lack an abstract, yield no sentences, or repeat a doc_id.
BuildResult build_corpus(const std::vector<RawArticle>& articles,
                         const std::vector<CitationPattern>& patterns,
                         unsigned threads = 1);

// Input readers for the two supported article formats (see README):
// a directory of UTF-8 text files ("#DOC <id>" first line, optional
// "#ABSTRACT" marker, headers on their own lines, blank-line paragraphs),
// or a JSON-lines file with {doc_id, body, has_abstract}.
std::vector<RawArticle> read_article_dir(const std::string& dir);
std::vector<RawArticle> read_article_jsonl(const std::string& path);
RawArticle parse_article_text(const std::string& fallback_id, const std::string& contents);

}  // namespace corpus
}  // namespace citeworthy
