#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "citeworthy/dataset.hpp"
#include "citeworthy/error.hpp"
#include "helpers/synthetic.hpp"

using namespace citeworthy;
using namespace citeworthy::dataset;
using corpus::Label;
using testutil::make_doc;

namespace {

std::vector<std::string> make_ids(std::size_t n) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("doc" + std::to_string(i));
    return ids;
}

void check_disjoint_exhaustive(const SplitAssignment& split, std::size_t n) {
    std::set<std::string> all;
    for (const auto& id : split.train) all.insert(id);
    for (const auto& id : split.val) all.insert(id);
    for (const auto& id : split.test) all.insert(id);
    CHECK(all.size() == n);
    CHECK(split.train.size() + split.val.size() + split.test.size() == n);
}

Document abc_doc() {
    return make_doc("abc",
                    {{"A", Label::no_cite}, {"B", Label::no_cite}, {"C", Label::no_cite}},
                    corpus::SectionKind::RelatedWork);
}

}  // namespace

TEST_CASE("split_documents honors ratios with flooring") {
    auto split = split_documents(make_ids(100), {0.6, 0.2, 0.2}, 42);
    CHECK(split.train.size() == 60);
    CHECK(split.val.size() == 20);
    CHECK(split.test.size() == 20);
    check_disjoint_exhaustive(split, 100);
}

TEST_CASE("split_documents minimal case: one doc per split") {
    auto split = split_documents(make_ids(3), {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1);
    CHECK(split.train.size() == 1);
    CHECK(split.val.size() == 1);
    CHECK(split.test.size() == 1);
}

TEST_CASE("split_documents matches the reference corpus shape") {
    // 17,438 assignable docs at 0.6/0.2/0.2 give the documented 10,464/3,487/3,487.
    auto split = split_documents(make_ids(17438), {0.6, 0.2, 0.2}, 7);
    CHECK(split.val.size() == 3487);
    CHECK(split.test.size() == 3487);
    CHECK(split.train.size() == 10464);
}

TEST_CASE("split_documents input validation") {
    try {
        split_documents(make_ids(10), {0.5, 0.5, 0.5}, 0);
        FAIL("expected BadRatios");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::BadRatios);
    }
    try {
        split_documents(make_ids(10), {0.8, 0.2, 0.0}, 0);
        FAIL("expected BadRatios");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::BadRatios);
    }
    try {
        split_documents(make_ids(2), {0.6, 0.2, 0.2}, 0);
        FAIL("expected InsufficientDocuments");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InsufficientDocuments);
    }
}

TEST_CASE("split_documents is deterministic and seed-sensitive") {
    auto ids = make_ids(50);
    auto a = split_documents(ids, {0.6, 0.2, 0.2}, 123);
    auto b = split_documents(ids, {0.6, 0.2, 0.2}, 123);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    CHECK(a.test == b.test);

    std::set<std::vector<std::string>> distinct;
    for (std::uint64_t seed = 1; seed <= 100; ++seed)
        distinct.insert(split_documents(ids, {0.6, 0.2, 0.2}, seed).train);
    CHECK(distinct.size() >= 99);
}

TEST_CASE("split_documents shuffles independently of input order") {
    auto ids = make_ids(20);
    auto reversed = ids;
    std::reverse(reversed.begin(), reversed.end());
    auto a = split_documents(ids, {0.6, 0.2, 0.2}, 5);
    auto b = split_documents(reversed, {0.6, 0.2, 0.2}, 5);
    CHECK(a.train == b.train);
}

TEST_CASE("build_context concatenates neighbors in document order") {
    auto doc = abc_doc();
    CHECK(build_context(doc, 2, false).text == "A B C");
    CHECK(build_context(doc, 1, false).text == " A B");
    CHECK(build_context(doc, 3, false).text == "B C ");
}

TEST_CASE("build_context section prefix") {
    auto doc = abc_doc();
    auto ctx = build_context(doc, 2, true);
    CHECK(ctx.text == "related work A B C");
    REQUIRE(ctx.section_header.has_value());
    CHECK(*ctx.section_header == "related work");
}

TEST_CASE("build_context crosses paragraph boundaries") {
    corpus::Document doc;
    doc.doc_id = "multi";
    corpus::Section sec;
    sec.canonical = corpus::SectionKind::Other;
    for (const char* text : {"P1a", "P1b"}) {
        corpus::Paragraph par;
        par.sentences.push_back(corpus::Sentence::make(text, Label::no_cite, text));
        sec.paragraphs.push_back(par);
    }
    doc.sections.push_back(sec);
    CHECK(build_context(doc, 1, false).text == " P1a P1b");
    CHECK(build_context(doc, 2, false).text == "P1a P1b ");
}

TEST_CASE("build_context rejects out-of-range indices") {
    auto doc = abc_doc();
    CHECK_THROWS_AS(build_context(doc, 0, false), Error);
    CHECK_THROWS_AS(build_context(doc, 4, false), Error);
}

TEST_CASE("training windows follow the documented worked example") {
    auto windows = make_training_windows("d", 32, 16);
    REQUIRE(windows.size() == 3);
    CHECK(windows[0].indices.front() == 1);
    CHECK(windows[0].indices.back() == 16);
    CHECK(windows[1].indices.front() == 9);
    CHECK(windows[1].indices.back() == 24);
    CHECK(windows[2].indices.front() == 17);
    CHECK(windows[2].indices.back() == 32);
}

TEST_CASE("short documents get one zero-padded window") {
    auto windows = make_training_windows("d", 5, 16);
    REQUIRE(windows.size() == 1);
    const auto& w = windows[0];
    REQUIRE(w.indices.size() == 16);
    for (std::size_t j = 0; j < 5; ++j) CHECK(w.indices[j] == j + 1);
    for (std::size_t j = 5; j < 16; ++j) CHECK(w.indices[j] == 0);
}

TEST_CASE("exact fit produces a single unpadded window") {
    auto windows = make_training_windows("d", 16, 16);
    REQUIRE(windows.size() == 1);
    for (std::size_t j = 0; j < 16; ++j) CHECK(windows[0].indices[j] == j + 1);
}

TEST_CASE("training windows reject bad lengths") {
    CHECK_THROWS_AS(make_training_windows("d", 10, 3), Error);
    CHECK_THROWS_AS(make_training_windows("d", 10, 0), Error);
    CHECK_THROWS_AS(make_inference_window("d", 10, 1, 7), Error);
}

TEST_CASE("training windows cover every sentence with step m/2") {
    for (std::size_t n = 1; n <= 40; ++n) {
        for (std::size_t m : {2, 4, 8}) {
            auto windows = make_training_windows("d", n, m);
            std::vector<int> seen(n + 1, 0);
            for (const auto& w : windows) {
                REQUIRE(w.indices.size() == m);
                for (std::size_t idx : w.indices) {
                    REQUIRE(idx <= n);
                    if (idx != 0) ++seen[idx];
                }
            }
            for (std::size_t i = 1; i <= n; ++i) CHECK(seen[i] >= 1);
            // Non-final windows step by exactly m/2.
            for (std::size_t k = 1; k + 1 < windows.size(); ++k)
                CHECK(windows[k].start - windows[k - 1].start == m / 2);
        }
    }
}

TEST_CASE("inference window for a mid-document sentence") {
    auto w = make_inference_window("d", 100, 40, 16);
    REQUIRE(w.indices.size() == 16);
    for (std::size_t j = 0; j < 16; ++j) CHECK(w.indices[j] == 32 + j);
    REQUIRE(w.center.has_value());
    CHECK(*w.center == 40);
}

TEST_CASE("inference window pads at the document start") {
    auto w = make_inference_window("d", 100, 1, 16);
    REQUIRE(w.indices.size() == 16);
    for (std::size_t j = 0; j < 8; ++j) CHECK(w.indices[j] == 0);
    for (std::size_t j = 8; j < 16; ++j) CHECK(w.indices[j] == j - 7);
}

TEST_CASE("smallest inference window at the document end") {
    auto w = make_inference_window("d", 9, 9, 2);
    REQUIRE(w.indices.size() == 2);
    CHECK(w.indices[0] == 8);
    CHECK(w.indices[1] == 9);
}

TEST_CASE("inference windows agree with a brute-force enumeration") {
    for (std::size_t n : {1, 2, 5, 16, 33}) {
        for (std::size_t m : {2, 4, 8}) {
            for (std::size_t i = 1; i <= n; ++i) {
                auto w = make_inference_window("d", n, i, m);
                REQUIRE(w.indices.size() == m);
                for (std::size_t j = 0; j < m; ++j) {
                    const long long expected =
                        static_cast<long long>(i) - static_cast<long long>(m / 2) +
                        static_cast<long long>(j);
                    if (expected >= 1 && expected <= static_cast<long long>(n))
                        CHECK(w.indices[j] == static_cast<std::size_t>(expected));
                    else
                        CHECK(w.indices[j] == 0);
                }
            }
        }
    }
}

TEST_CASE("compute_stats on a hand-counted fixture pair") {
    std::vector<Document> docs;
    docs.push_back(make_doc("one", {{"ab cd", Label::cite},
                                    {"one two three", Label::no_cite},
                                    {"x", Label::no_cite},
                                    {"y z", Label::no_cite}}));
    docs.push_back(make_doc("two", {{"hello world", Label::cite},
                                    {"bye", Label::no_cite},
                                    {"mid span", Label::no_cite}}));
    auto stats = compute_stats(docs);
    CHECK(stats.articles == 2);
    CHECK(stats.sections == 2);
    CHECK(stats.paragraphs == 2);
    CHECK(stats.sentences == 7);
    CHECK(stats.sentences_with_citation == 2);
    CHECK(stats.sentences_without_citation == 5);
}

TEST_CASE("compute_stats averages") {
    std::vector<Document> docs;
    docs.push_back(make_doc("one", {{"ab cd", Label::no_cite}}));
    auto stats = compute_stats(docs);
    CHECK(stats.avg_chars_per_sentence == doctest::Approx(5.0));
    CHECK(stats.avg_words_per_sentence == doctest::Approx(2.0));

    CHECK_THROWS_AS(compute_stats({}), Error);
}

TEST_CASE("dataset round-trips through JSONL") {
    auto dir = std::filesystem::temp_directory_path() / "cw_dataset_test";
    std::filesystem::create_directories(dir);
    auto path = (dir / "ds.jsonl").string();

    std::vector<Document> docs;
    docs.push_back(make_doc("one", {{"plain text", Label::no_cite},
                                    {"cited claim", Label::cite}},
                            corpus::SectionKind::Methods));
    docs.push_back(make_doc("two", {{"another sentence", Label::no_cite}}));
    write_dataset(path, docs, R"({"command":"test"})");

    auto loaded = read_dataset(path);
    REQUIRE(loaded.size() == docs.size());
    CHECK(loaded[0] == docs[0]);
    CHECK(loaded[1] == docs[1]);

    // Byte-identical on rewrite.
    auto path2 = (dir / "ds2.jsonl").string();
    write_dataset(path2, loaded, R"({"command":"test"})");
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    std::ostringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());

    std::filesystem::remove_all(dir);
}

TEST_CASE("read_dataset rejects wrong schema versions") {
    auto dir = std::filesystem::temp_directory_path() / "cw_dataset_schema";
    std::filesystem::create_directories(dir);
    auto path = (dir / "bad.jsonl").string();
    {
        std::ofstream out(path);
        out << R"({"schema_version":"0","kind":"citeworthy-dataset"})" << "\n";
    }
    try {
        read_dataset(path);
        FAIL("expected SchemaMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SchemaMismatch);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("read_dataset reports the failing line of a truncated file") {
    auto dir = std::filesystem::temp_directory_path() / "cw_dataset_trunc";
    std::filesystem::create_directories(dir);
    auto good = (dir / "good.jsonl").string();
    std::vector<Document> docs;
    docs.push_back(make_doc("one", {{"text body here", Label::no_cite}}));
    docs.push_back(make_doc("two", {{"more text", Label::no_cite}}));
    write_dataset(good, docs);

    std::string contents;
    {
        std::ifstream in(good, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        contents = buf.str();
    }
    auto bad = (dir / "bad.jsonl").string();
    {
        std::ofstream out(bad, std::ios::binary);
        out << contents.substr(0, contents.size() - 40);
    }
    try {
        read_dataset(bad);
        FAIL("expected IoFailure");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IoFailure);
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("split manifest round-trips") {
    auto dir = std::filesystem::temp_directory_path() / "cw_split_test";
    std::filesystem::create_directories(dir);
    auto path = (dir / "split.json").string();
    auto split = split_documents(make_ids(10), {0.6, 0.2, 0.2}, 11);
    write_split(path, split);
    auto loaded = read_split(path);
    CHECK(loaded.train == split.train);
    CHECK(loaded.val == split.val);
    CHECK(loaded.test == split.test);
    CHECK(loaded.seed == split.seed);
    std::filesystem::remove_all(dir);
}
