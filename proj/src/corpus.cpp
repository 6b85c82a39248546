#include "citeworthy/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <json.hpp>

#include "citeworthy/dataset.hpp"
#include "citeworthy/error.hpp"

namespace citeworthy::corpus {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string collapse_whitespace(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool in_ws = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_ws = true;
            continue;
        }
        if (in_ws && !out.empty()) out.push_back(' ');
        in_ws = false;
        out.push_back(c);
    }
    return out;
}

std::string lowercase(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::size_t count_words(const std::string& s) {
    std::istringstream in(s);
    std::string word;
    std::size_t n = 0;
    while (in >> word) ++n;
    return n;
}

}  // namespace

const char* section_name(SectionKind kind) {
    switch (kind) {
        case SectionKind::Abstract: return "Abstract";
        case SectionKind::Introduction: return "Introduction";
        case SectionKind::RelatedWork: return "Related Work";
        case SectionKind::Methods: return "Methods";
        case SectionKind::Evaluation: return "Evaluation";
        case SectionKind::Conclusion: return "Conclusion";
        case SectionKind::Acknowledgments: return "Acknowledgments";
        case SectionKind::Other: return "Other";
    }
    return "Other";
}

const char* section_prefix(SectionKind kind) {
    switch (kind) {
        case SectionKind::Abstract: return "abstract";
        case SectionKind::Introduction: return "introduction";
        case SectionKind::RelatedWork: return "related work";
        case SectionKind::Methods: return "methods";
        case SectionKind::Evaluation: return "evaluation";
        case SectionKind::Conclusion: return "conclusion";
        case SectionKind::Acknowledgments: return "acknowledgments";
        case SectionKind::Other: return "other";
    }
    return "other";
}

Sentence Sentence::make(std::string clean, Label label, std::string original) {
    Sentence s;
    s.char_len = clean.size();
    s.word_len = count_words(clean);
    s.text = std::move(clean);
    s.label = label;
    s.original_text = std::move(original);
    return s;
}

std::size_t Document::sentence_count() const {
    std::size_t n = 0;
    for (const auto& sec : sections)
        for (const auto& par : sec.paragraphs) n += par.sentences.size();
    return n;
}

std::vector<FlatSentence> flatten(const Document& doc) {
    std::vector<FlatSentence> flat;
    flat.reserve(doc.sentence_count());
    for (const auto& sec : doc.sections)
        for (const auto& par : sec.paragraphs)
            for (const auto& sen : par.sentences) flat.push_back({&sen, sec.canonical});
    return flat;
}

// ---------------------------------------------------------------------------
// Citation patterns

namespace {

struct PatternSpec {
    const char* name;
    const char* regex;
};

// Ordered: narrative spans are removed before the bare parenthesized forms so
// that "Name et al. (2020)" disappears as a whole. The set is intentionally
// small and auditable; users can extend it via --patterns.
const PatternSpec kDefaultPatternSpecs[] = {
    {"latex_cite", R"(\\cite[a-zA-Z]*\s*\{[^{}]*\})"},
    {"narrative_et_al", R"([A-Z][A-Za-z'-]*\s+et\s+al\.?,?\s*\(\s*(?:19|20)\d{2}[a-z]?\s*\))"},
    {"narrative_two_authors",
     R"([A-Z][A-Za-z'-]*\s+and\s+[A-Z][A-Za-z'-]*\s*\(\s*(?:19|20)\d{2}[a-z]?\s*\))"},
    {"paren_author_year",
     R"(\(\s*[A-Z][^();]*,\s*(?:19|20)\d{2}[a-z]?(?:\s*;\s*[^();]*,\s*(?:19|20)\d{2}[a-z]?)*\s*\))"},
    {"bracketed_numeric",
     R"(\[\s*\d+(?:\s*(?:-|–|—)\s*\d+)?(?:\s*,\s*\d+(?:\s*(?:-|–|—)\s*\d+)?)*\s*\])"},
};

CitationPattern compile_pattern(const std::string& name, const std::string& regex_text) {
    CitationPattern p;
    p.name = name;
    p.regex_text = regex_text;
    try {
        p.compiled = std::regex(regex_text, std::regex::ECMAScript | std::regex::optimize);
    } catch (const std::regex_error& e) {
        throw Error(ErrorCode::BadPatternConfig,
                    "pattern '" + name + "' does not compile: " + e.what());
    }
    return p;
}

}  // namespace

const std::vector<CitationPattern>& default_patterns() {
    static const std::vector<CitationPattern> patterns = [] {
        std::vector<CitationPattern> out;
        for (const auto& spec : kDefaultPatternSpecs)
            out.push_back(compile_pattern(spec.name, spec.regex));
        return out;
    }();
    return patterns;
}

std::vector<CitationPattern> parse_patterns(std::istream& in) {
    std::vector<CitationPattern> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t ws = t.find_first_of(" \t");
        if (ws == std::string::npos)
            throw Error(ErrorCode::BadPatternConfig,
                        "line " + std::to_string(lineno) + ": expected '<name> <regex>'");
        std::string name = t.substr(0, ws);
        std::string regex_text = trim(t.substr(ws + 1));
        out.push_back(compile_pattern(name, regex_text));
    }
    return out;
}

std::vector<CitationPattern> load_patterns(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open pattern file: " + path);
    auto patterns = parse_patterns(in);
    if (patterns.empty())
        throw Error(ErrorCode::BadPatternConfig, "pattern file has no patterns: " + path);
    return patterns;
}

bool matches_any(const std::string& text, const std::vector<CitationPattern>& patterns) {
    for (const auto& p : patterns)
        if (std::regex_search(text, p.compiled)) return true;
    return false;
}

namespace {

// Bracket pairs left empty by citation removal, e.g. "( )" or "[]".
const std::regex kEmptyPairs(R"(\(\s*\)|\[\s*\]|\{\s*\})", std::regex::optimize);

}  // namespace

LabelResult label_and_sanitize(const std::string& sentence_text,
                               const std::vector<CitationPattern>& patterns) {
    if (!matches_any(sentence_text, patterns))
        return {collapse_whitespace(sentence_text), Label::no_cite};

    // Removal can splice the remainder into a new match ("[1, ()2]" becomes
    // "[1, 2]"), so run the removal + cleanup pipeline to a fixpoint. Every
    // productive iteration strictly shortens the string, so this terminates.
    std::string cur = sentence_text;
    for (;;) {
        std::string next = cur;
        for (const auto& p : patterns) next = std::regex_replace(next, p.compiled, " ");
        next = std::regex_replace(next, kEmptyPairs, " ");
        next = collapse_whitespace(next);
        if (next == cur) break;
        cur = std::move(next);
    }
    return {cur, Label::cite};
}

// ---------------------------------------------------------------------------
// Sentence segmentation

namespace {

// Lowercased, with the terminating dot included. "al." covers "et al.".
const std::unordered_set<std::string>& abbreviations() {
    static const std::unordered_set<std::string> abbrev = {
        "fig.", "figs.", "eq.",  "eqs.",  "sec.",  "secs.", "tab.",  "ref.",
        "refs.", "no.",  "vol.", "pp.",   "cf.",   "vs.",   "resp.", "i.e.",
        "e.g.",  "al.",  "dr.",  "prof.", "mr.",   "mrs.",  "ms.",   "st.",
    };
    return abbrev;
}

bool is_word_char(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '.';
}

// The word (letters and internal dots) ending just before position pos.
std::string word_before(const std::string& text, std::size_t pos) {
    std::size_t b = pos;
    while (b > 0 && is_word_char(text[b - 1])) --b;
    return text.substr(b, pos - b);
}

// Single capital letter followed by a dot, e.g. the "J." in "J. R. Smith".
bool looks_like_initial(const std::string& word) {
    return word.size() == 1 && std::isalpha(static_cast<unsigned char>(word[0]));
}

// Decides whether the terminator at text[pos] ends a sentence.
bool is_sentence_boundary(const std::string& text, std::size_t pos) {
    // Must be followed by whitespace (or end of text), and the next
    // non-space character must plausibly start a sentence.
    std::size_t next = pos + 1;
    if (next < text.size() && !std::isspace(static_cast<unsigned char>(text[next])))
        return false;
    while (next < text.size() && std::isspace(static_cast<unsigned char>(text[next]))) ++next;
    if (next < text.size()) {
        unsigned char c = static_cast<unsigned char>(text[next]);
        bool starts_sentence = std::isupper(c) || std::isdigit(c) || c == '(' || c == '[' ||
                               c == '"' || c >= 0x80;
        if (!starts_sentence) return false;
    }

    if (text[pos] != '.') return true;

    std::string word = word_before(text, pos);
    // Strip any leading dots left from a preceding boundary ("..word").
    while (!word.empty() && word.front() == '.') word.erase(word.begin());
    if (word.empty()) return true;  // digit or punctuation before the dot

    if (abbreviations().count(lowercase(word) + ".")) return false;

    if (looks_like_initial(word)) {
        // Initials ("J. R. Smith") do not split, but a lone letter-dot does
        // ("A. B? C!" is three sentences): suppress the split only when a
        // neighboring token is itself an initial.
        std::size_t before_word = pos - word.size();
        if (before_word >= 2 && text[before_word - 1] == ' ') {
            std::string prev = word_before(text, before_word - 1);
            if (prev.size() == 2 && prev[1] == '.' &&
                std::isalpha(static_cast<unsigned char>(prev[0])))
                return false;
        }
        std::size_t after = pos + 1;
        while (after < text.size() && std::isspace(static_cast<unsigned char>(text[after])))
            ++after;
        if (after + 1 < text.size() && std::isalpha(static_cast<unsigned char>(text[after])) &&
            text[after + 1] == '.')
            return false;
    }
    return true;
}

}  // namespace

std::vector<std::string> segment_sentences(const std::string& paragraph_text) {
    std::vector<std::string> out;
    int depth = 0;  // () and [] nesting; no splits inside
    std::size_t begin = 0;
    auto flush = [&](std::size_t end) {
        std::string sentence = trim(paragraph_text.substr(begin, end - begin));
        if (!sentence.empty()) out.push_back(std::move(sentence));
        begin = end;
    };
    for (std::size_t pos = 0; pos < paragraph_text.size(); ++pos) {
        char c = paragraph_text[pos];
        if (c == '(' || c == '[') {
            ++depth;
        } else if (c == ')' || c == ']') {
            if (depth > 0) --depth;
        } else if ((c == '.' || c == '?' || c == '!') && depth == 0) {
            if (is_sentence_boundary(paragraph_text, pos)) flush(pos + 1);
        }
    }
    flush(paragraph_text.size());
    return out;
}

// ---------------------------------------------------------------------------
// Section headers and document assembly

SectionKind canonicalize_header(const std::string& header) {
    std::string h = lowercase(header);
    auto has = [&](const char* kw) { return h.find(kw) != std::string::npos; };
    if (has("abstract")) return SectionKind::Abstract;
    if (has("related work") || has("prior work") || has("previous work"))
        return SectionKind::RelatedWork;
    if (has("acknowledg")) return SectionKind::Acknowledgments;
    if (has("introduction")) return SectionKind::Introduction;
    if (has("conclusion") || has("summary") || has("future work")) return SectionKind::Conclusion;
    if (has("experiment") || has("result") || has("evaluation")) return SectionKind::Evaluation;
    if (has("method") || has("approach") || has("implementation") || has("model"))
        return SectionKind::Methods;
    return SectionKind::Other;
}

namespace {

constexpr const char* kAbstractMarker = "#ABSTRACT";
constexpr std::size_t kMaxHeaderWords = 8;

bool looks_like_header(const std::string& line) {
    if (line.empty()) return false;
    char last = line.back();
    if (last == '.' || last == '?' || last == '!') return false;
    return count_words(line) <= kMaxHeaderWords;
}

}  // namespace

Document parse_document(const RawArticle& raw, const std::vector<CitationPattern>& patterns) {
    if (trim(raw.body).empty())
        throw Error(ErrorCode::EmptyDocument, "article '" + raw.doc_id + "' has an empty body");

    Document doc;
    doc.doc_id = raw.doc_id;

    // Group lines into blank-line-delimited blocks; a one-line block that is
    // short and not sentence-terminated is a section header.
    std::vector<std::string> lines;
    {
        std::istringstream in(raw.body);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines.push_back(line);
        }
    }

    auto section_for_paragraphs = [&]() -> Section& {
        if (doc.sections.empty()) doc.sections.push_back({"", SectionKind::Other, {}});
        return doc.sections.back();
    };

    std::size_t pos = 0;
    while (pos < lines.size()) {
        if (trim(lines[pos]).empty()) {
            ++pos;
            continue;
        }
        std::vector<std::string> block;
        while (pos < lines.size() && !trim(lines[pos]).empty()) block.push_back(trim(lines[pos++]));

        if (block.size() == 1 && block[0] == kAbstractMarker) {
            doc.sections.push_back({block[0], SectionKind::Abstract, {}});
            continue;
        }
        if (block.size() == 1 && looks_like_header(block[0])) {
            doc.sections.push_back({block[0], canonicalize_header(block[0]), {}});
            continue;
        }

        std::string paragraph_text;
        for (const auto& line : block) {
            if (!paragraph_text.empty()) paragraph_text.push_back(' ');
            paragraph_text += line;
        }
        Paragraph paragraph;
        for (const auto& raw_sentence : segment_sentences(paragraph_text)) {
            auto labeled = label_and_sanitize(raw_sentence, patterns);
            paragraph.sentences.push_back(
                Sentence::make(std::move(labeled.clean_text), labeled.label, raw_sentence));
        }
        if (!paragraph.sentences.empty())
            section_for_paragraphs().paragraphs.push_back(std::move(paragraph));
    }

    bool has_abstract = raw.has_abstract;
    for (const auto& sec : doc.sections)
        if (sec.canonical == SectionKind::Abstract) has_abstract = true;
    if (!has_abstract)
        throw Error(ErrorCode::NoAbstract, "article '" + raw.doc_id + "' has no abstract");

    if (doc.sentence_count() == 0)
        throw Error(ErrorCode::NoSentences, "article '" + raw.doc_id + "' yields no sentences");
    return doc;
}

// ---------------------------------------------------------------------------
// Corpus construction

BuildResult build_corpus(const std::vector<RawArticle>& articles,
                         const std::vector<CitationPattern>& patterns, unsigned threads) {
    if (articles.empty()) throw Error(ErrorCode::EmptyCorpus, "no input articles");

    struct Slot {
        bool ok = false;
        Document doc;
        std::string reason;
    };
    std::vector<Slot> slots(articles.size());

    auto parse_range = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            try {
                slots[i].doc = parse_document(articles[i], patterns);
                slots[i].ok = true;
            } catch (const Error& e) {
                slots[i].reason = error_code_name(e.code());
            }
        }
    };

    if (threads <= 1 || articles.size() < 2) {
        parse_range(0, articles.size());
    } else {
        unsigned n = std::min<unsigned>(threads, static_cast<unsigned>(articles.size()));
        std::vector<std::thread> workers;
        std::size_t chunk = (articles.size() + n - 1) / n;
        for (unsigned w = 0; w < n; ++w) {
            std::size_t begin = w * chunk;
            std::size_t end = std::min(articles.size(), begin + chunk);
            if (begin < end) workers.emplace_back(parse_range, begin, end);
        }
        for (auto& worker : workers) worker.join();
    }

    BuildResult result;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < articles.size(); ++i) {
        const std::string& id = articles[i].doc_id;
        if (id.empty()) {
            result.skipped.push_back({id, "EmptyDocId"});
            continue;
        }
        if (!slots[i].ok) {
            result.skipped.push_back({id, slots[i].reason});
            continue;
        }
        if (!seen.insert(id).second) {
            result.skipped.push_back({id, "DuplicateDocId"});
            continue;
        }
        result.documents.push_back(std::move(slots[i].doc));
    }

    if (result.documents.empty())
        throw Error(ErrorCode::AllDocumentsSkipped,
                    "all " + std::to_string(articles.size()) + " articles were skipped");
    result.stats = dataset::compute_stats(result.documents);
    return result;
}

RawArticle parse_article_text(const std::string& fallback_id, const std::string& contents) {
    RawArticle raw;
    raw.doc_id = fallback_id;
    std::string body = contents;
    if (body.rfind("#DOC", 0) == 0) {
        std::size_t eol = body.find('\n');
        std::string first = eol == std::string::npos ? body : body.substr(0, eol);
        std::string id = trim(first.substr(4));
        if (!id.empty()) raw.doc_id = id;
        body = eol == std::string::npos ? "" : body.substr(eol + 1);
    }
    raw.body = body;
    std::istringstream in(body);
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line) == kAbstractMarker) {
            raw.has_abstract = true;
            break;
        }
    }
    return raw;
}

std::vector<RawArticle> read_article_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<fs::path> paths;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
        if (entry.is_regular_file() && entry.path().filename().string().front() != '.')
            paths.push_back(entry.path());
    }
    if (ec) throw Error(ErrorCode::IoFailure, "cannot read directory: " + dir);
    std::sort(paths.begin(), paths.end());

    std::vector<RawArticle> articles;
    for (const auto& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorCode::IoFailure, "cannot open: " + path.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        articles.push_back(parse_article_text(path.stem().string(), buf.str()));
    }
    return articles;
}

std::vector<RawArticle> read_article_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open: " + path);
    std::vector<RawArticle> articles;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::IoFailure,
                        path + " line " + std::to_string(lineno) + ": " + e.what());
        }
        RawArticle raw;
        raw.doc_id = j.value("doc_id", "");
        raw.body = j.value("body", "");
        raw.has_abstract = j.value("has_abstract", false);
        articles.push_back(std::move(raw));
    }
    return articles;
}

}  // namespace citeworthy::corpus
