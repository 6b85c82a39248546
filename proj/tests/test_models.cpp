#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "citeworthy/error.hpp"
#include "citeworthy/models.hpp"
#include "helpers/synthetic.hpp"

using namespace citeworthy;
using namespace citeworthy::models;
using corpus::Label;
using testutil::make_doc;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void spit(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    out << contents;
}

Document abc_doc() {
    return make_doc("abc",
                    {{"A", Label::no_cite}, {"B", Label::cite}, {"C", Label::no_cite}});
}

bool same_predictions(const std::vector<Prediction>& a, const std::vector<Prediction>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].doc_id != b[i].doc_id || a[i].index != b[i].index ||
            a[i].label != b[i].label || a[i].p_cite != b[i].p_cite)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("tokenize lowercases, splits punctuation, collapses digits") {
    auto t = tokenize("The model works");
    REQUIRE(t.size() == 3);
    CHECK(t[0] == "the");
    CHECK(t[1] == "model");
    CHECK(t[2] == "works");

    t = tokenize("Scores rose by 12.5% (see [3]).");
    std::vector<std::string> expected = {"scores", "rose", "by",  "<num>", ".", "<num>",
                                         "%",      "(",    "see", "[",     "<num>", "]",
                                         ")",      "."};
    CHECK(t == expected);

    CHECK(tokenize("2009").size() == 1);
    CHECK(tokenize("2009")[0] == "<num>");
    CHECK(tokenize("").empty());
}

TEST_CASE("vocabulary reserves special ids and maps unseen tokens to UNK") {
    auto vocab = build_vocabulary({abc_doc()});
    CHECK(vocab.tokens[Vocabulary::kPad] == "[PAD]");
    CHECK(vocab.tokens[Vocabulary::kUnk] == "[UNK]");
    CHECK(vocab.tokens[Vocabulary::kSep] == "[SEP]");
    CHECK(vocab.lookup("a") >= 3);
    CHECK(vocab.lookup("never-seen-token") == Vocabulary::kUnk);
    CHECK(vocab.hash() == build_vocabulary({abc_doc()}).hash());
}

TEST_CASE("vocabulary comes from the training split only") {
    auto train = make_doc("tr", {{"alpha beta", Label::no_cite}});
    auto test = make_doc("te", {{"gamma delta", Label::no_cite}});
    auto vocab = build_vocabulary({train});
    CHECK(vocab.lookup("alpha") != Vocabulary::kUnk);
    CHECK(vocab.lookup("gamma") == Vocabulary::kUnk);
    CHECK(vocab.lookup("delta") == Vocabulary::kUnk);
}

TEST_CASE("encode_sc is the sentence's own tokens") {
    auto doc = make_doc("d", {{"the model works", Label::no_cite}});
    auto vocab = build_vocabulary({doc});
    auto flat = corpus::flatten(doc);
    auto ids = encode_sc(flat, 1, vocab);
    REQUIRE(ids.size() == 3);
    CHECK(ids[0] == vocab.lookup("the"));
    CHECK(ids[1] == vocab.lookup("model"));
    CHECK(ids[2] == vocab.lookup("works"));
}

TEST_CASE("encode_spc is sentence ++ SEP ++ context") {
    auto doc = abc_doc();
    auto vocab = build_vocabulary({doc});
    auto flat = corpus::flatten(doc);
    auto ids = encode_spc(flat, 2, vocab);
    std::vector<int> expected = {vocab.lookup("b"), Vocabulary::kSep, vocab.lookup("a"),
                                 vocab.lookup("b"), vocab.lookup("c")};
    CHECK(ids == expected);
}

TEST_CASE("encode_window pads missing slots and clips context at the edge") {
    auto doc = make_doc("d", {{"one", Label::no_cite},
                              {"two", Label::no_cite},
                              {"three", Label::no_cite},
                              {"four", Label::no_cite},
                              {"five", Label::no_cite}});
    auto vocab = build_vocabulary({doc});
    auto flat = corpus::flatten(doc);

    auto window = dataset::make_inference_window("d", 5, 1, 4);  // [0, 0, 1, 2]
    auto slots = encode_window(flat, window, false, vocab);
    REQUIRE(slots.size() == 4);
    CHECK(slots[0].empty());
    CHECK(slots[1].empty());
    // Slot of sentence 1: no previous sentence inside the window.
    std::vector<int> s1 = {vocab.lookup("one"), Vocabulary::kSep, vocab.lookup("one"),
                           vocab.lookup("two")};
    CHECK(slots[2] == s1);
    // Slot of sentence 2: sentence 3 exists in the document but not in the
    // window, so its context stops at sentence 2.
    std::vector<int> s2 = {vocab.lookup("two"), Vocabulary::kSep, vocab.lookup("one"),
                           vocab.lookup("two")};
    CHECK(slots[3] == s2);
}

TEST_CASE("encode_window can prepend the canonical section name") {
    auto doc = make_doc("d", {{"one", Label::no_cite}, {"two", Label::no_cite}},
                        corpus::SectionKind::RelatedWork);
    auto vocab = build_vocabulary({doc});
    auto flat = corpus::flatten(doc);
    auto window = dataset::make_training_windows("d", 2, 2).at(0);
    auto slots = encode_window(flat, window, true, vocab);
    REQUIRE(slots.size() == 2);
    CHECK(slots[0][0] == vocab.lookup("one"));
    CHECK(slots[0][1] == Vocabulary::kSep);
    CHECK(slots[0][2] == vocab.lookup("related"));
    CHECK(slots[0][3] == vocab.lookup("work"));
}

TEST_CASE("token caps truncate the tail") {
    std::string long_text;
    for (int i = 0; i < 100; ++i) long_text += "tok ";
    auto doc = make_doc("d", {{long_text, Label::no_cite}, {long_text, Label::no_cite}});
    auto vocab = build_vocabulary({doc});
    auto flat = corpus::flatten(doc);
    CHECK(encode_sc(flat, 1, vocab).size() == kMaxSentenceTokens);
    CHECK(encode_spc(flat, 1, vocab).size() == kMaxPairTokens);
}

TEST_CASE("zero-parameter model predicts no_cite everywhere (tie break)") {
    auto doc = abc_doc();
    auto vocab = build_vocabulary({doc});
    TrainConfig config;
    config.d_emb = 8;
    auto model = init_model({FormulationKind::sc}, config, vocab, ProviderKind::trainable);
    model.params.embedding.setZero();
    model.params.ff_w.setZero();
    model.params.ff_b.setZero();

    auto flat = corpus::flatten(doc);
    auto logits = forward_sentence(model, encode_sc(flat, 1, vocab));
    CHECK(logits(0) == 0.0);
    CHECK(logits(1) == 0.0);

    for (const auto& p : predict(model, {doc})) {
        CHECK(p.label == Label::no_cite);
        CHECK(p.p_cite == doctest::Approx(0.5));
    }
}

TEST_CASE("ssm on a single-sentence document yields one unmasked position") {
    auto doc = make_doc("d", {{"only sentence here", Label::no_cite}});
    auto vocab = build_vocabulary({doc});
    TrainConfig config;
    config.d_emb = 8;
    config.hidden = 4;
    Formulation f{FormulationKind::ssm, 4, false};
    auto model = init_model(f, config, vocab, ProviderKind::trainable);

    auto flat = corpus::flatten(doc);
    auto window = dataset::make_inference_window("d", 1, 1, 4);
    auto slots = encode_window(flat, window, false, vocab);
    std::vector<char> mask;
    for (auto idx : window.indices) mask.push_back(idx != 0);
    auto logits = forward_window(model, slots, mask);
    int unmasked = 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j)
        if (mask[static_cast<std::size_t>(j)]) ++unmasked;
    CHECK(unmasked == 1);

    auto preds = predict(model, {doc});
    CHECK(preds.size() == 1);
}

TEST_CASE("padding slot content cannot influence the window output") {
    auto doc = make_doc("d", {{"alpha beta", Label::no_cite}, {"gamma delta", Label::no_cite}});
    auto vocab = build_vocabulary({doc});
    TrainConfig config;
    config.d_emb = 8;
    config.hidden = 4;
    auto model = init_model({FormulationKind::ssm, 4, false}, config, vocab,
                            ProviderKind::trainable);

    std::vector<std::vector<int>> slots = {{}, {3, 4}, {5, 6}, {}};
    std::vector<char> mask = {0, 1, 1, 0};
    auto base = forward_window(model, slots, mask);
    slots[0] = {3, 4, 5, 6};  // garbage fed into a masked slot
    slots[3] = {6, 5, 4, 3};
    auto poked = forward_window(model, slots, mask);
    CHECK((base - poked).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("train with max_epochs 0 returns the initialization") {
    auto docs = testutil::overfit_corpus(4, 5, 9);
    TrainConfig config;
    config.max_epochs = 0;
    config.d_emb = 8;
    auto trained = train(docs, docs, {FormulationKind::sc}, config);
    auto fresh = init_model({FormulationKind::sc}, config,
                            build_vocabulary(docs), ProviderKind::trainable);
    CHECK(trained.params.embedding.isApprox(fresh.params.embedding, 0.0));
    CHECK(trained.params.ff_w.isApprox(fresh.params.ff_w, 0.0));
    CHECK(trained.params.ff_b.isApprox(fresh.params.ff_b, 0.0));
    CHECK(trained.log.empty());
}

TEST_CASE("train records the shipped defaults in its config") {
    TrainConfig config;
    CHECK(config.batch_size == 16);
    CHECK(config.lr == doctest::Approx(1e-5));
    CHECK(config.max_epochs == 4);

    auto docs = testutil::overfit_corpus(4, 5, 10);
    config.max_epochs = 1;
    config.d_emb = 8;
    auto model = train(docs, docs, {FormulationKind::sc}, config);
    CHECK(model.config.batch_size == 16);
    CHECK(model.config.lr == doctest::Approx(1e-5));
    REQUIRE(model.log.size() == 1);
    CHECK(model.log[0].epoch == 1);
}

TEST_CASE("train rejects empty splits") {
    auto docs = testutil::overfit_corpus(2, 4, 3);
    TrainConfig config;
    config.d_emb = 8;
    try {
        train({}, docs, {FormulationKind::sc}, config);
        FAIL("expected EmptySplit");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptySplit);
    }
    try {
        train(docs, {}, {FormulationKind::sc}, config);
        FAIL("expected EmptySplit");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptySplit);
    }
}

TEST_CASE("training twice with one seed gives identical checkpoint bytes") {
    auto dir = temp_dir("cw_models_determinism");
    auto docs = testutil::overfit_corpus(4, 6, 21);
    TrainConfig config;
    config.max_epochs = 2;
    config.d_emb = 8;
    config.lr = 1e-3;

    auto a = train(docs, docs, {FormulationKind::sc}, config);
    auto b = train(docs, docs, {FormulationKind::sc}, config);
    auto pa = (dir / "a.ckpt").string();
    auto pb = (dir / "b.ckpt").string();
    save_checkpoint(pa, a);
    save_checkpoint(pb, b);
    CHECK(slurp(pa) == slurp(pb));
    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint round-trip reproduces predictions bitwise") {
    auto dir = temp_dir("cw_models_roundtrip");
    auto docs = testutil::overfit_corpus(6, 6, 33);
    TrainConfig config;
    config.max_epochs = 2;
    config.d_emb = 8;
    config.hidden = 6;
    config.lr = 1e-3;
    Formulation f{FormulationKind::ssm, 4, true};
    auto model = train(docs, docs, f, config);

    auto probe = testutil::overfit_corpus(3, 8, 99);
    auto before = predict(model, probe);

    auto path = (dir / "model.ckpt").string();
    save_checkpoint(path, model);
    auto loaded = load_checkpoint(path);
    auto after = predict(loaded, probe);
    CHECK(same_predictions(before, after));
    CHECK(std::filesystem::exists(path + ".json"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint loader rejects tampered files") {
    auto dir = temp_dir("cw_models_corrupt");
    auto docs = testutil::overfit_corpus(3, 5, 44);
    TrainConfig config;
    config.max_epochs = 1;
    config.d_emb = 8;
    auto model = train(docs, docs, {FormulationKind::sc}, config);
    auto path = (dir / "model.ckpt").string();
    save_checkpoint(path, model);
    const std::string bytes = slurp(path);

    SUBCASE("bumped format version") {
        std::string bad = bytes;
        bad[8] = 9;  // little-endian u32 version right after the magic
        auto bad_path = (dir / "version.ckpt").string();
        spit(bad_path, bad);
        try {
            load_checkpoint(bad_path);
            FAIL("expected FormatVersionMismatch");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::FormatVersionMismatch);
        }
    }

    SUBCASE("truncated tensor payload") {
        auto bad_path = (dir / "trunc.ckpt").string();
        spit(bad_path, bytes.substr(0, bytes.size() - 16));
        try {
            load_checkpoint(bad_path);
            FAIL("expected CorruptCheckpoint");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::CorruptCheckpoint);
        }
    }

    SUBCASE("vocabulary no longer matches its hash") {
        std::string bad = bytes;
        auto pos = bad.find("alphaq");
        REQUIRE(pos != std::string::npos);
        bad[pos] = 'z';
        auto bad_path = (dir / "vocab.ckpt").string();
        spit(bad_path, bad);
        try {
            load_checkpoint(bad_path);
            FAIL("expected IncompatibleCheckpoint");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::IncompatibleCheckpoint);
        }
    }

    SUBCASE("bad magic") {
        std::string bad = bytes;
        bad[0] = 'X';
        auto bad_path = (dir / "magic.ckpt").string();
        spit(bad_path, bad);
        try {
            load_checkpoint(bad_path);
            FAIL("expected CorruptCheckpoint");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::CorruptCheckpoint);
        }
    }

    std::filesystem::remove_all(dir);
}

TEST_CASE("external vectors round-trip and feed the model") {
    auto dir = temp_dir("cw_models_external");
    auto docs = testutil::overfit_corpus(4, 5, 55);

    // Vectors that encode the gold label directly, so even one epoch moves.
    ExternalVectors vectors;
    SplitMix64 rng(5);
    for (const auto& doc : docs) {
        auto flat = corpus::flatten(doc);
        for (std::size_t i = 1; i <= flat.size(); ++i) {
            nn::Vector v(4);
            const double sign = flat[i - 1].sentence->label == Label::cite ? 1.0 : -1.0;
            for (int k = 0; k < 4; ++k) v(k) = sign + rng.uniform(-0.1, 0.1);
            vectors.put(doc.doc_id, i, v);
        }
    }

    auto bin = (dir / "vectors.bin").string();
    vectors.save_binary(bin);
    auto loaded = ExternalVectors::load(bin);
    CHECK(loaded.count() == vectors.count());
    CHECK(loaded.dim() == 4);
    CHECK(loaded.find(docs[0].doc_id, 1)->isApprox(*vectors.find(docs[0].doc_id, 1), 0.0));

    auto jsonl = (dir / "vectors.jsonl").string();
    vectors.save_jsonl(jsonl);
    auto loaded2 = ExternalVectors::load(jsonl);
    CHECK(loaded2.count() == vectors.count());

    CHECK_THROWS_AS(vectors.at("missing-doc", 1), Error);

    TrainConfig config;
    config.max_epochs = 3;
    config.lr = 0.05;
    auto model = train(docs, docs, {FormulationKind::sc}, config, ProviderKind::external,
                       &vectors);
    CHECK(model.provider == ProviderKind::external);
    CHECK(model.d_emb == 4);
    auto preds = predict(model, docs, &vectors);
    CHECK(preds.size() == 4 * 5);

    // The vector file is required once the checkpoint says "external".
    try {
        predict(model, docs, nullptr);
        FAIL("expected IncompatibleCheckpoint");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IncompatibleCheckpoint);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("formulation containment under out-of-scope mutations") {
    SplitMix64 rng(77);
    auto docs = testutil::context_corpus(1, 12, 0.4, 0.1, 31);
    auto& doc = docs[0];
    TrainConfig config;
    config.d_emb = 8;
    config.hidden = 4;

    auto mutate = [&](Document d, std::size_t i) {
        auto flat_mut = corpus::flatten(d);
        auto* sen = const_cast<corpus::Sentence*>(flat_mut[i - 1].sentence);
        *sen = corpus::Sentence::make("totally different words now", sen->label,
                                      sen->original_text);
        return d;
    };

    SUBCASE("sc ignores every other sentence") {
        auto model = init_model({FormulationKind::sc}, config, build_vocabulary(docs),
                                ProviderKind::trainable);
        auto base = predict(model, {doc});
        auto changed = predict(model, {mutate(doc, 3)});
        for (std::size_t i = 0; i < base.size(); ++i) {
            if (i + 1 == 3) continue;
            CHECK(base[i].p_cite == changed[i].p_cite);
        }
    }

    SUBCASE("spc ignores sentences outside the adjacent pair") {
        auto model = init_model({FormulationKind::spc}, config, build_vocabulary(docs),
                                ProviderKind::trainable);
        auto base = predict(model, {doc});
        auto changed = predict(model, {mutate(doc, 6)});
        for (std::size_t i = 0; i < base.size(); ++i) {
            const std::size_t idx = i + 1;
            if (idx >= 5 && idx <= 7) continue;
            CHECK(base[i].p_cite == changed[i].p_cite);
        }
    }

    SUBCASE("ssm ignores sentences outside the inference window") {
        auto model = init_model({FormulationKind::ssm, 4, false}, config,
                                build_vocabulary(docs), ProviderKind::trainable);
        auto base = predict(model, {doc});
        const std::size_t mutated = 9;
        auto changed = predict(model, {mutate(doc, mutated)});
        for (std::size_t i = 0; i < base.size(); ++i) {
            const std::size_t idx = i + 1;
            // Sentence `mutated` sits in the window of i when
            // i - m/2 <= mutated <= i + m/2 - 1.
            if (idx + 2 - 1 >= mutated && mutated + 2 >= idx) continue;
            CHECK(base[i].p_cite == changed[i].p_cite);
        }
    }
}

TEST_CASE("a trainable checkpoint ignores an incidental vector file") {
    auto docs = testutil::overfit_corpus(3, 4, 66);
    TrainConfig config;
    config.d_emb = 8;
    auto model = init_model({FormulationKind::sc}, config, build_vocabulary(docs),
                            ProviderKind::trainable);
    ExternalVectors sparse;  // deliberately missing most sentences
    sparse.put("unrelated", 1, nn::Vector::Zero(4));
    auto with = predict(model, docs, &sparse);
    auto without = predict(model, docs, nullptr);
    CHECK(same_predictions(with, without));
}
