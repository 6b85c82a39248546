#include "citeworthy/models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "citeworthy/error.hpp"
#include "citeworthy/eval.hpp"
#include "citeworthy/rng.hpp"
#include "citeworthy/version.hpp"

namespace citeworthy::models {

using nlohmann::json;

const std::size_t kMaxSentenceTokens = 64;
const std::size_t kMaxPairTokens = 196;
const int kCheckpointFormatVersion = 1;

const char* formulation_name(FormulationKind kind) {
    switch (kind) {
        case FormulationKind::sc: return "sc";
        case FormulationKind::spc: return "spc";
        case FormulationKind::ssm: return "ssm";
    }
    return "sc";
}

FormulationKind formulation_from_name(const std::string& name) {
    if (name == "sc") return FormulationKind::sc;
    if (name == "spc") return FormulationKind::spc;
    if (name == "ssm") return FormulationKind::ssm;
    throw Error(ErrorCode::SchemaMismatch, "unknown formulation: " + name);
}

// ---------------------------------------------------------------------------
// Tokenization and vocabulary

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::istringstream in(text);
    std::string chunk;
    while (in >> chunk) {
        std::size_t pos = 0;
        while (pos < chunk.size()) {
            unsigned char c = static_cast<unsigned char>(chunk[pos]);
            if (std::isalpha(c) || c >= 0x80) {
                std::string word;
                while (pos < chunk.size()) {
                    unsigned char w = static_cast<unsigned char>(chunk[pos]);
                    if (!(std::isalpha(w) || w >= 0x80)) break;
                    word.push_back(static_cast<char>(std::tolower(w)));
                    ++pos;
                }
                tokens.push_back(std::move(word));
            } else if (std::isdigit(c)) {
                while (pos < chunk.size() &&
                       std::isdigit(static_cast<unsigned char>(chunk[pos])))
                    ++pos;
                tokens.push_back("<num>");  // digit runs collapse to one token
            } else {
                tokens.push_back(std::string(1, chunk[pos]));
                ++pos;
            }
        }
    }
    return tokens;
}

Vocabulary::Vocabulary() {
    tokens = {"[PAD]", "[UNK]", "[SEP]"};
    for (int i = 0; i < static_cast<int>(tokens.size()); ++i) ids[tokens[i]] = i;
}

int Vocabulary::add(const std::string& token) {
    auto it = ids.find(token);
    if (it != ids.end()) return it->second;
    int id = static_cast<int>(tokens.size());
    tokens.push_back(token);
    ids[token] = id;
    return id;
}

int Vocabulary::lookup(const std::string& token) const {
    auto it = ids.find(token);
    return it == ids.end() ? kUnk : it->second;
}

std::uint64_t Vocabulary::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& token : tokens) {
        for (unsigned char c : token) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        h ^= static_cast<unsigned char>('\n');
        h *= 0x100000001b3ULL;
    }
    return h;
}

Vocabulary build_vocabulary(const std::vector<Document>& train_docs) {
    Vocabulary vocab;
    // Section names can appear in contexts regardless of which sections the
    // training split happens to contain.
    for (corpus::SectionKind kind :
         {corpus::SectionKind::Abstract, corpus::SectionKind::Introduction,
          corpus::SectionKind::RelatedWork, corpus::SectionKind::Methods,
          corpus::SectionKind::Evaluation, corpus::SectionKind::Conclusion,
          corpus::SectionKind::Acknowledgments, corpus::SectionKind::Other}) {
        for (const auto& token : tokenize(corpus::section_prefix(kind))) vocab.add(token);
    }
    for (const auto& doc : train_docs)
        for (const auto& sec : doc.sections)
            for (const auto& par : sec.paragraphs)
                for (const auto& sen : par.sentences)
                    for (const auto& token : tokenize(sen.text)) vocab.add(token);
    return vocab;
}

// ---------------------------------------------------------------------------
// Input encoding

namespace {

std::vector<int> encode_tokens(const std::string& text, const Vocabulary& vocab,
                               std::size_t cap) {
    auto words = tokenize(text);
    if (words.size() > cap) words.resize(cap);
    std::vector<int> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(vocab.lookup(w));
    return ids;
}

void check_index(const std::vector<FlatSentence>& flat, std::size_t i) {
    if (i < 1 || i > flat.size())
        throw Error(ErrorCode::IndexOutOfRange,
                    "sentence index " + std::to_string(i) + " not in [1, " +
                        std::to_string(flat.size()) + "]");
}

std::vector<int> encode_pair(const std::string& sentence, const std::string& context,
                             const Vocabulary& vocab) {
    std::vector<int> ids = encode_tokens(sentence, vocab, kMaxSentenceTokens);
    ids.push_back(Vocabulary::kSep);
    std::size_t remaining = kMaxPairTokens > ids.size() ? kMaxPairTokens - ids.size() : 0;
    for (int id : encode_tokens(context, vocab, remaining)) ids.push_back(id);
    return ids;
}

}  // namespace

std::vector<int> encode_sc(const std::vector<FlatSentence>& flat, std::size_t i,
                           const Vocabulary& vocab) {
    check_index(flat, i);
    return encode_tokens(flat[i - 1].sentence->text, vocab, kMaxSentenceTokens);
}

std::vector<int> encode_spc(const std::vector<FlatSentence>& flat, std::size_t i,
                            const Vocabulary& vocab) {
    check_index(flat, i);
    auto ctx = dataset::build_context(flat, i, /*include_section=*/false);
    return encode_pair(flat[i - 1].sentence->text, ctx.text, vocab);
}

std::vector<std::vector<int>> encode_window(const std::vector<FlatSentence>& flat,
                                            const dataset::Window& window,
                                            bool include_section, const Vocabulary& vocab) {
    std::vector<std::vector<int>> slots;
    slots.reserve(window.indices.size());
    for (std::size_t j = 0; j < window.indices.size(); ++j) {
        const std::size_t idx = window.indices[j];
        if (idx == 0) {
            slots.emplace_back();  // padding slot: empty, encodes to zero
            continue;
        }
        check_index(flat, idx);
        // Context clipped at the window boundary: a neighbor that exists in
        // the document but falls outside this window is treated as missing.
        const bool has_prev = j > 0 && window.indices[j - 1] != 0;
        const bool has_next = j + 1 < window.indices.size() && window.indices[j + 1] != 0;
        std::string ctx;
        if (include_section) {
            ctx += corpus::section_prefix(flat[idx - 1].section);
            ctx += " ";
        }
        ctx += has_prev ? flat[idx - 2].sentence->text : std::string();
        ctx += " ";
        ctx += flat[idx - 1].sentence->text;
        ctx += " ";
        ctx += has_next ? flat[idx].sentence->text : std::string();
        slots.push_back(encode_pair(flat[idx - 1].sentence->text, ctx, vocab));
    }
    return slots;
}

// ---------------------------------------------------------------------------
// External vectors

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
    char bytes[4];
    for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes, 8);
}

void write_f64(std::ostream& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(out, bits);
}

bool read_exact(std::istream& in, char* buf, std::size_t n) {
    in.read(buf, static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in.gcount()) == n;
}

std::uint32_t read_u32(std::istream& in, ErrorCode on_eof, const std::string& what) {
    char bytes[4];
    if (!read_exact(in, bytes, 4)) throw Error(on_eof, "truncated " + what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& in, ErrorCode on_eof, const std::string& what) {
    char bytes[8];
    if (!read_exact(in, bytes, 8)) throw Error(on_eof, "truncated " + what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
    return v;
}

double read_f64(std::istream& in, ErrorCode on_eof, const std::string& what) {
    std::uint64_t bits = read_u64(in, on_eof, what);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

constexpr char kVectorsMagic[9] = "CWVECS01";
constexpr char kCheckpointMagic[9] = "CWCKPT01";

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

std::uint64_t parse_hex64(const std::string& s) {
    std::uint64_t v = 0;
    for (char c : s) {
        v <<= 4;
        if (c >= '0' && c <= '9') v |= static_cast<std::uint64_t>(c - '0');
        else if (c >= 'a' && c <= 'f') v |= static_cast<std::uint64_t>(c - 'a' + 10);
        else if (c >= 'A' && c <= 'F') v |= static_cast<std::uint64_t>(c - 'A' + 10);
        else throw Error(ErrorCode::IoFailure, "bad hex value: " + s);
    }
    return v;
}

}  // namespace

std::uint64_t ExternalVectors::key(std::uint64_t doc_hash, std::size_t index) {
    std::uint64_t k = doc_hash;
    k ^= static_cast<std::uint64_t>(index) + 0x9e3779b97f4a7c15ULL + (k << 6) + (k >> 2);
    return k;
}

void ExternalVectors::put(const std::string& doc_id, std::size_t index, nn::Vector values) {
    if (dim_ == 0) dim_ = static_cast<int>(values.size());
    if (static_cast<int>(values.size()) != dim_)
        throw Error(ErrorCode::ShapeMismatch,
                    "vector for (" + doc_id + ", " + std::to_string(index) + ") has " +
                        std::to_string(values.size()) + " values, expected " +
                        std::to_string(dim_));
    vectors_[key(fnv1a64(doc_id), index)] = std::move(values);
}

const nn::Vector* ExternalVectors::find(const std::string& doc_id, std::size_t index) const {
    auto it = vectors_.find(key(fnv1a64(doc_id), index));
    return it == vectors_.end() ? nullptr : &it->second;
}

const nn::Vector& ExternalVectors::at(const std::string& doc_id, std::size_t index) const {
    const nn::Vector* v = find(doc_id, index);
    if (!v)
        throw Error(ErrorCode::MissingVector,
                    "no vector for (" + doc_id + ", " + std::to_string(index) + ")");
    return *v;
}

void ExternalVectors::save_binary(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write: " + path);
    out.write(kVectorsMagic, 8);
    write_u32(out, 1);
    write_u32(out, static_cast<std::uint32_t>(dim_));
    write_u64(out, vectors_.size());
    // Sort by key for byte-identical output across runs.
    std::vector<std::uint64_t> keys;
    keys.reserve(vectors_.size());
    for (const auto& [k, v] : vectors_) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    for (std::uint64_t k : keys) {
        write_u64(out, k);
        const nn::Vector& v = vectors_.at(k);
        for (Eigen::Index i = 0; i < v.size(); ++i) write_f64(out, v(i));
    }
    if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path);
}

void ExternalVectors::save_jsonl(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write: " + path);
    std::vector<std::uint64_t> keys;
    keys.reserve(vectors_.size());
    for (const auto& [k, v] : vectors_) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    for (std::uint64_t k : keys) {
        const nn::Vector& v = vectors_.at(k);
        json values = json::array();
        for (Eigen::Index i = 0; i < v.size(); ++i) values.push_back(v(i));
        out << json{{"key", hex64(k)}, {"values", values}}.dump() << "\n";
    }
}

ExternalVectors ExternalVectors::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open: " + path);
    char magic[8];
    bool have_magic = read_exact(in, magic, 8) && std::memcmp(magic, kVectorsMagic, 8) == 0;

    ExternalVectors vectors;
    if (have_magic) {
        std::uint32_t version = read_u32(in, ErrorCode::IoFailure, path);
        if (version != 1)
            throw Error(ErrorCode::FormatVersionMismatch,
                        path + ": vector file version " + std::to_string(version));
        std::uint32_t dim = read_u32(in, ErrorCode::IoFailure, path);
        std::uint64_t count = read_u64(in, ErrorCode::IoFailure, path);
        vectors.dim_ = static_cast<int>(dim);
        for (std::uint64_t r = 0; r < count; ++r) {
            std::uint64_t k = read_u64(in, ErrorCode::IoFailure, path);
            nn::Vector v(dim);
            for (std::uint32_t i = 0; i < dim; ++i)
                v(i) = read_f64(in, ErrorCode::IoFailure, path);
            vectors.vectors_[k] = std::move(v);
        }
        return vectors;
    }

    // JSON-lines alternative: {doc_id, index, values} or {key, values}.
    in.clear();
    in.seekg(0);
    std::string line;
    std::size_t lineno = 0;
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
        auto jv = j.at("values");
        nn::Vector v(jv.size());
        for (std::size_t i = 0; i < jv.size(); ++i)
            v(static_cast<Eigen::Index>(i)) = jv.at(i).get<double>();
        if (j.contains("doc_id")) {
            vectors.put(j.at("doc_id").get<std::string>(),
                        j.at("index").get<std::size_t>(), std::move(v));
        } else {
            if (vectors.dim_ == 0) vectors.dim_ = static_cast<int>(v.size());
            if (static_cast<int>(v.size()) != vectors.dim_)
                throw Error(ErrorCode::ShapeMismatch,
                            path + " line " + std::to_string(lineno) + ": mixed widths");
            vectors.vectors_[parse_hex64(j.at("key").get<std::string>())] = std::move(v);
        }
    }
    if (vectors.vectors_.empty())
        throw Error(ErrorCode::IoFailure, path + ": no vectors found");
    return vectors;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

std::vector<nn::NamedTensor> model_tensors(ModelParams& params, FormulationKind kind,
                                           ProviderKind provider) {
    std::vector<nn::NamedTensor> out;
    if (provider == ProviderKind::trainable) out.push_back({"embedding", &params.embedding});
    if (kind == FormulationKind::ssm) {
        auto lstm = nn::tensors(params.bilstm, "bilstm");
        out.insert(out.end(), lstm.begin(), lstm.end());
    }
    out.push_back({"ff.w", &params.ff_w});
    out.push_back({"ff.b", &params.ff_b});
    return out;
}

// Row-major fills so the draw order is fixed and documented.
void fill_uniform(nn::Matrix& m, SplitMix64& rng, double lo, double hi) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(lo, hi);
}

}  // namespace

ModelCheckpoint init_model(const Formulation& formulation, const TrainConfig& config,
                           Vocabulary vocab, ProviderKind provider, int external_dim) {
    if (formulation.kind == FormulationKind::ssm &&
        (formulation.m < 2 || formulation.m % 2 != 0))
        throw Error(ErrorCode::BadWindowLength,
                    "window length must be even and >= 2, got " +
                        std::to_string(formulation.m));

    ModelCheckpoint model;
    model.formulation = formulation;
    model.provider = provider;
    model.config = config;
    model.vocab = std::move(vocab);
    model.d_emb = provider == ProviderKind::external ? external_dim : config.d_emb;
    if (model.d_emb <= 0)
        throw Error(ErrorCode::ShapeMismatch, "sentence vector width must be positive");

    SplitMix64 rng(config.seed);
    if (provider == ProviderKind::trainable) {
        model.params.embedding = nn::Matrix(model.vocab.size(), model.d_emb);
        fill_uniform(model.params.embedding, rng, -0.05, 0.05);
    }

    int classifier_in = model.d_emb;
    if (formulation.kind == FormulationKind::ssm) {
        const int h = config.hidden;
        model.params.bilstm = nn::make_bilstm_params(model.d_emb, h);
        const double limit = 1.0 / std::sqrt(static_cast<double>(h));
        for (nn::LstmCellParams* cell : {&model.params.bilstm.fwd, &model.params.bilstm.bwd}) {
            for (nn::GateParams* gate :
                 {&cell->input, &cell->forget, &cell->output, &cell->candidate}) {
                fill_uniform(gate->w, rng, -limit, limit);
                fill_uniform(gate->u, rng, -limit, limit);
            }
            cell->forget.b.setConstant(1.0);  // standard forget-gate bias
        }
        classifier_in = 2 * h;
    }

    const double xavier = std::sqrt(6.0 / static_cast<double>(classifier_in + 2));
    model.params.ff_w = nn::Matrix(2, classifier_in);
    fill_uniform(model.params.ff_w, rng, -xavier, xavier);
    model.params.ff_b = nn::Matrix::Zero(2, 1);
    return model;
}

// ---------------------------------------------------------------------------
// Forward passes

namespace {

nn::Vector classifier_logits(const ModelCheckpoint& model, const nn::Vector& x) {
    return nn::feedforward_logits(x, model.params.ff_w, model.params.ff_b);
}

nn::Vector sentence_vector(const ModelCheckpoint& model, const std::vector<int>& ids,
                           const nn::Vector* external) {
    if (model.provider == ProviderKind::external) {
        if (!external) return nn::Vector::Zero(model.d_emb);
        return *external;
    }
    return nn::sentence_encode(ids, model.params.embedding);
}

}  // namespace

nn::Vector forward_sentence(const ModelCheckpoint& model, const std::vector<int>& token_ids) {
    return classifier_logits(model, sentence_vector(model, token_ids, nullptr));
}

nn::Matrix forward_window(const ModelCheckpoint& model,
                          const std::vector<std::vector<int>>& slot_tokens,
                          const std::vector<char>& mask) {
    if (slot_tokens.size() != mask.size())
        throw Error(ErrorCode::ShapeMismatch, "slot/mask counts differ");
    const Eigen::Index m = static_cast<Eigen::Index>(slot_tokens.size());
    nn::Matrix xs = nn::Matrix::Zero(model.d_emb, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        if (!mask[static_cast<std::size_t>(j)]) continue;
        xs.col(j) = sentence_vector(model, slot_tokens[static_cast<std::size_t>(j)], nullptr);
    }
    nn::Matrix hs = nn::bilstm_forward(xs, model.params.bilstm, mask);
    nn::Matrix logits = nn::Matrix::Zero(2, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        if (!mask[static_cast<std::size_t>(j)]) continue;
        logits.col(j) = classifier_logits(model, hs.col(j));
    }
    return logits;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct SentenceExample {
    std::vector<int> ids;
    const nn::Vector* external = nullptr;
    int gold = 0;
};

struct WindowExample {
    std::vector<std::vector<int>> slots;
    std::vector<const nn::Vector*> external;
    std::vector<char> mask;
    std::vector<int> golds;
};

ModelParams zero_like(const ModelParams& params, FormulationKind kind, ProviderKind provider) {
    ModelParams z;
    if (provider == ProviderKind::trainable)
        z.embedding = nn::Matrix::Zero(params.embedding.rows(), params.embedding.cols());
    if (kind == FormulationKind::ssm)
        z.bilstm = nn::make_bilstm_params(params.bilstm.input_dim(), params.bilstm.hidden());
    z.ff_w = nn::Matrix::Zero(params.ff_w.rows(), params.ff_w.cols());
    z.ff_b = nn::Matrix::Zero(params.ff_b.rows(), params.ff_b.cols());
    return z;
}

// Loss and gradient for one SC/SPC example; returns the cross-entropy loss.
double sentence_example_pass(const ModelCheckpoint& model, const SentenceExample& ex,
                             ModelParams& grads) {
    nn::Vector x = sentence_vector(model, ex.ids, ex.external);
    nn::Vector logits = classifier_logits(model, x);
    auto sm = nn::softmax_cross_entropy(logits, ex.gold);
    grads.ff_w += sm.dlogits * x.transpose();
    grads.ff_b.col(0) += sm.dlogits;
    if (model.provider == ProviderKind::trainable) {
        nn::Vector dx = model.params.ff_w.transpose() * sm.dlogits;
        nn::sentence_encode_backward(ex.ids, dx, grads.embedding);
    }
    return sm.loss;
}

// Loss and gradient for one SSM window; the window loss is the mean over its
// unmasked positions.
double window_example_pass(const ModelCheckpoint& model, const WindowExample& ex,
                           ModelParams& grads) {
    const Eigen::Index m = static_cast<Eigen::Index>(ex.slots.size());
    nn::Matrix xs = nn::Matrix::Zero(model.d_emb, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const std::size_t sj = static_cast<std::size_t>(j);
        if (!ex.mask[sj]) continue;
        xs.col(j) = sentence_vector(model, ex.slots[sj], ex.external[sj]);
    }

    nn::BiLstmCache cache;
    nn::Matrix hs = nn::bilstm_forward(xs, model.params.bilstm, ex.mask, &cache);

    double real = 0.0;
    for (char f : ex.mask) real += f ? 1.0 : 0.0;
    if (real == 0.0) return 0.0;

    double loss = 0.0;
    nn::Matrix dhs = nn::Matrix::Zero(hs.rows(), hs.cols());
    for (Eigen::Index j = 0; j < m; ++j) {
        const std::size_t sj = static_cast<std::size_t>(j);
        if (!ex.mask[sj]) continue;
        nn::Vector h = hs.col(j);
        nn::Vector logits = classifier_logits(model, h);
        auto sm = nn::softmax_cross_entropy(logits, ex.golds[sj]);
        loss += sm.loss;
        nn::Vector dlogits = sm.dlogits / real;
        grads.ff_w += dlogits * h.transpose();
        grads.ff_b.col(0) += dlogits;
        dhs.col(j) = model.params.ff_w.transpose() * dlogits;
    }
    nn::Matrix dxs = nn::bilstm_backward(dhs, model.params.bilstm, cache, grads.bilstm);
    if (model.provider == ProviderKind::trainable) {
        for (Eigen::Index j = 0; j < m; ++j) {
            const std::size_t sj = static_cast<std::size_t>(j);
            if (!ex.mask[sj]) continue;
            nn::sentence_encode_backward(ex.slots[sj], dxs.col(j), grads.embedding);
        }
    }
    return loss / real;
}

double cite_f1(const std::vector<Prediction>& preds, const std::vector<Label>& golds,
               double* precision, double* recall) {
    std::vector<Label> labels;
    labels.reserve(preds.size());
    for (const auto& p : preds) labels.push_back(p.label);
    auto report = eval::compute_metrics(labels, golds);
    if (precision) *precision = report.precision;
    if (recall) *recall = report.recall;
    return report.f1;
}

}  // namespace

ModelCheckpoint train(const std::vector<Document>& train_docs,
                      const std::vector<Document>& val_docs, const Formulation& formulation,
                      const TrainConfig& config, ProviderKind provider,
                      const ExternalVectors* vectors) {
    if (train_docs.empty()) throw Error(ErrorCode::EmptySplit, "empty train split");
    if (provider == ProviderKind::external && !vectors)
        throw Error(ErrorCode::MissingVector, "external provider needs a vector file");

    const ExternalVectors* ext_vectors =
        provider == ProviderKind::external ? vectors : nullptr;
    Vocabulary vocab =
        provider == ProviderKind::trainable ? build_vocabulary(train_docs) : Vocabulary();
    ModelCheckpoint model = init_model(formulation, config, std::move(vocab), provider,
                                       ext_vectors ? ext_vectors->dim() : 0);
    if (config.max_epochs == 0) return model;
    if (val_docs.empty()) throw Error(ErrorCode::EmptySplit, "empty val split");

    // Pre-encode every training example once.
    std::vector<SentenceExample> sentence_examples;
    std::vector<WindowExample> window_examples;
    for (const auto& doc : train_docs) {
        const auto flat = corpus::flatten(doc);
        if (formulation.kind == FormulationKind::ssm) {
            for (const auto& window : dataset::make_training_windows(doc, formulation.m)) {
                WindowExample ex;
                ex.slots = encode_window(flat, window, formulation.include_section, model.vocab);
                for (std::size_t j = 0; j < window.indices.size(); ++j) {
                    const std::size_t idx = window.indices[j];
                    ex.mask.push_back(idx != 0);
                    ex.golds.push_back(
                        idx != 0 ? static_cast<int>(flat[idx - 1].sentence->label) : 0);
                    ex.external.push_back(idx != 0 && ext_vectors
                                              ? ext_vectors->find(doc.doc_id, idx)
                                              : nullptr);
                    if (idx != 0 && ext_vectors && !ex.external.back())
                        throw Error(ErrorCode::MissingVector,
                                    "no vector for (" + doc.doc_id + ", " +
                                        std::to_string(idx) + ")");
                }
                window_examples.push_back(std::move(ex));
            }
        } else {
            for (std::size_t i = 1; i <= flat.size(); ++i) {
                SentenceExample ex;
                ex.ids = formulation.kind == FormulationKind::sc
                             ? encode_sc(flat, i, model.vocab)
                             : encode_spc(flat, i, model.vocab);
                ex.gold = static_cast<int>(flat[i - 1].sentence->label);
                if (ext_vectors) ex.external = &ext_vectors->at(doc.doc_id, i);
                sentence_examples.push_back(std::move(ex));
            }
        }
    }
    const std::size_t n_examples = formulation.kind == FormulationKind::ssm
                                       ? window_examples.size()
                                       : sentence_examples.size();
    if (n_examples == 0) throw Error(ErrorCode::EmptySplit, "train split has no examples");

    std::vector<Label> val_golds;
    for (const auto& doc : val_docs)
        for (const auto& fs : corpus::flatten(doc)) val_golds.push_back(fs.sentence->label);

    auto named = model_tensors(model.params, formulation.kind, provider);
    ModelParams grads = zero_like(model.params, formulation.kind, provider);
    auto named_grads = model_tensors(grads, formulation.kind, provider);
    std::vector<nn::Matrix*> param_ptrs, grad_ptrs;
    std::vector<const nn::Matrix*> grad_views;
    for (auto& t : named) param_ptrs.push_back(t.tensor);
    for (auto& t : named_grads) {
        grad_ptrs.push_back(t.tensor);
        grad_views.push_back(t.tensor);
    }
    nn::AdamState adam = nn::make_adam_state(param_ptrs, {config.lr});

    SplitMix64 rng(config.seed ^ 0x5eedc0de5eedc0deULL);  // distinct stream from init
    std::vector<std::size_t> order(n_examples);
    for (std::size_t i = 0; i < n_examples; ++i) order[i] = i;

    ModelParams best_params = model.params;
    double best_f1 = -1.0;
    std::size_t best_epoch = 0;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t batch_begin = 0;
        while (batch_begin < n_examples) {
            const std::size_t batch_end =
                std::min(n_examples, batch_begin + static_cast<std::size_t>(config.batch_size));
            const double batch_count = static_cast<double>(batch_end - batch_begin);
            for (auto* g : grad_ptrs) g->setZero();
            double batch_loss = 0.0;
            for (std::size_t k = batch_begin; k < batch_end; ++k) {
                batch_loss += formulation.kind == FormulationKind::ssm
                                  ? window_example_pass(model, window_examples[order[k]], grads)
                                  : sentence_example_pass(model, sentence_examples[order[k]],
                                                          grads);
            }
            if (!std::isfinite(batch_loss))
                throw Error(ErrorCode::DivergenceDetected, "non-finite loss at epoch " +
                                                               std::to_string(epoch));
            for (auto* g : grad_ptrs) *g /= batch_count;
            nn::clip_gradients(grad_ptrs, config.clip_norm);
            nn::adam_step(param_ptrs, grad_views, adam);
            epoch_loss += batch_loss;
            batch_begin = batch_end;
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.train_loss = epoch_loss / static_cast<double>(n_examples);
        auto val_preds = predict(model, val_docs, ext_vectors);
        entry.val_f1 = cite_f1(val_preds, val_golds, &entry.val_precision, &entry.val_recall);
        if (entry.val_f1 > best_f1) {
            best_f1 = entry.val_f1;
            best_params = model.params;
            best_epoch = static_cast<std::size_t>(epoch);
            entry.selected = true;
        }
        model.log.push_back(entry);
    }

    model.params = std::move(best_params);
    for (auto& entry : model.log)
        entry.selected = entry.epoch == static_cast<int>(best_epoch);
    return model;
}

// ---------------------------------------------------------------------------
// Prediction

std::vector<Prediction> predict(const ModelCheckpoint& model,
                                const std::vector<Document>& documents,
                                const ExternalVectors* vectors) {
    if (model.provider == ProviderKind::external && !vectors)
        throw Error(ErrorCode::IncompatibleCheckpoint,
                    "checkpoint uses external vectors; none were provided");
    const ExternalVectors* ext_vectors =
        model.provider == ProviderKind::external ? vectors : nullptr;

    std::vector<Prediction> out;
    for (const auto& doc : documents) {
        const auto flat = corpus::flatten(doc);
        const std::size_t n = flat.size();
        for (std::size_t i = 1; i <= n; ++i) {
            nn::Vector probs;
            if (model.formulation.kind == FormulationKind::ssm) {
                auto window = dataset::make_inference_window(doc.doc_id, n, i,
                                                             model.formulation.m);
                auto slots = encode_window(flat, window, model.formulation.include_section,
                                           model.vocab);
                std::vector<char> mask;
                std::vector<const nn::Vector*> ext(window.indices.size(), nullptr);
                for (std::size_t j = 0; j < window.indices.size(); ++j) {
                    mask.push_back(window.indices[j] != 0);
                    if (window.indices[j] != 0 && ext_vectors)
                        ext[j] = &ext_vectors->at(doc.doc_id, window.indices[j]);
                }
                const Eigen::Index m = static_cast<Eigen::Index>(slots.size());
                nn::Matrix xs = nn::Matrix::Zero(model.d_emb, m);
                for (Eigen::Index j = 0; j < m; ++j) {
                    const std::size_t sj = static_cast<std::size_t>(j);
                    if (!mask[sj]) continue;
                    xs.col(j) = sentence_vector(model, slots[sj], ext[sj]);
                }
                nn::Matrix hs = nn::bilstm_forward(xs, model.params.bilstm, mask);
                const Eigen::Index center = static_cast<Eigen::Index>(model.formulation.m / 2);
                nn::Vector logits = classifier_logits(model, hs.col(center));
                probs = nn::softmax_cross_entropy(logits, 0).probs;
            } else {
                std::vector<int> ids = model.formulation.kind == FormulationKind::sc
                                           ? encode_sc(flat, i, model.vocab)
                                           : encode_spc(flat, i, model.vocab);
                const nn::Vector* ext =
                    ext_vectors ? &ext_vectors->at(doc.doc_id, i) : nullptr;
                nn::Vector logits = classifier_logits(model, sentence_vector(model, ids, ext));
                probs = nn::softmax_cross_entropy(logits, 0).probs;
            }
            Prediction p;
            p.doc_id = doc.doc_id;
            p.index = i;
            p.p_cite = probs(1);
            p.label = probs(1) > probs(0) ? Label::cite : Label::no_cite;  // tie -> no_cite
            out.push_back(std::move(p));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint IO

namespace {

json config_to_json(const TrainConfig& c) {
    return {{"batch_size", c.batch_size}, {"lr", c.lr},
            {"max_epochs", c.max_epochs}, {"seed", c.seed},
            {"clip_norm", c.clip_norm},   {"d_emb", c.d_emb},
            {"hidden", c.hidden}};
}

TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    c.batch_size = j.at("batch_size").get<int>();
    c.lr = j.at("lr").get<double>();
    c.max_epochs = j.at("max_epochs").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.clip_norm = j.at("clip_norm").get<double>();
    c.d_emb = j.at("d_emb").get<int>();
    c.hidden = j.at("hidden").get<int>();
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelCheckpoint& model,
                     const std::string& config_json) {
    // model_tensors needs mutable access; the copy keeps the API const.
    ModelCheckpoint copy = model;
    auto named = model_tensors(copy.params, copy.formulation.kind, copy.provider);

    json log = json::array();
    for (const auto& e : model.log)
        log.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"val_precision", e.val_precision},
                       {"val_recall", e.val_recall},
                       {"val_f1", e.val_f1},
                       {"selected", e.selected}});
    json tensors_meta = json::array();
    for (const auto& t : named)
        tensors_meta.push_back(
            {{"name", t.name}, {"rows", t.tensor->rows()}, {"cols", t.tensor->cols()}});

    json run_config;
    try {
        run_config = json::parse(config_json);
    } catch (const json::exception&) {
        run_config = json::object();
    }

    json header = {{"format_version", kCheckpointFormatVersion},
                   {"formulation",
                    {{"kind", formulation_name(model.formulation.kind)},
                     {"m", model.formulation.m},
                     {"include_section", model.formulation.include_section}}},
                   {"provider",
                    model.provider == ProviderKind::trainable ? "trainable" : "external"},
                   {"d_emb", model.d_emb},
                   {"hidden", model.config.hidden},
                   {"vocab_hash", hex64(model.vocab.hash())},
                   {"config", config_to_json(model.config)},
                   {"run_config", run_config},
                   {"tool_version", kToolVersion},
                   {"vocab", model.vocab.tokens},
                   {"log", log},
                   {"tensors", tensors_meta}};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write: " + path);
    const std::string header_text = header.dump();
    out.write(kCheckpointMagic, 8);
    write_u32(out, static_cast<std::uint32_t>(kCheckpointFormatVersion));
    write_u64(out, header_text.size());
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& t : named)
        for (Eigen::Index r = 0; r < t.tensor->rows(); ++r)
            for (Eigen::Index c = 0; c < t.tensor->cols(); ++c)
                write_f64(out, (*t.tensor)(r, c));
    if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path);

    // Human-readable sidecar: the header minus the bulky vocabulary.
    json sidecar = header;
    sidecar.erase("vocab");
    sidecar["vocab_size"] = model.vocab.size();
    std::ofstream side(path + ".json", std::ios::binary);
    if (side) side << sidecar.dump(2) << "\n";
}

ModelCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open: " + path);

    char magic[8];
    if (!read_exact(in, magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw Error(ErrorCode::CorruptCheckpoint, path + ": bad magic");
    std::uint32_t version = read_u32(in, ErrorCode::CorruptCheckpoint, path);
    if (version != static_cast<std::uint32_t>(kCheckpointFormatVersion))
        throw Error(ErrorCode::FormatVersionMismatch,
                    path + ": checkpoint format " + std::to_string(version) + ", expected " +
                        std::to_string(kCheckpointFormatVersion));
    std::uint64_t header_len = read_u64(in, ErrorCode::CorruptCheckpoint, path);
    std::string header_text(header_len, '\0');
    if (!read_exact(in, header_text.data(), header_len))
        throw Error(ErrorCode::CorruptCheckpoint, path + ": truncated header");

    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::CorruptCheckpoint, path + ": header: " + e.what());
    }

    ModelCheckpoint model;
    try {
        const json& jf = header.at("formulation");
        model.formulation.kind = formulation_from_name(jf.at("kind").get<std::string>());
        model.formulation.m = jf.at("m").get<std::size_t>();
        model.formulation.include_section = jf.at("include_section").get<bool>();
        model.provider = header.at("provider").get<std::string>() == "external"
                             ? ProviderKind::external
                             : ProviderKind::trainable;
        model.d_emb = header.at("d_emb").get<int>();
        model.config = config_from_json(header.at("config"));
        model.vocab.tokens = header.at("vocab").get<std::vector<std::string>>();
        model.vocab.ids.clear();
        for (int i = 0; i < static_cast<int>(model.vocab.tokens.size()); ++i)
            model.vocab.ids[model.vocab.tokens[static_cast<std::size_t>(i)]] = i;
        for (const auto& je : header.at("log")) {
            EpochLog e;
            e.epoch = je.at("epoch").get<int>();
            e.train_loss = je.at("train_loss").get<double>();
            e.val_precision = je.at("val_precision").get<double>();
            e.val_recall = je.at("val_recall").get<double>();
            e.val_f1 = je.at("val_f1").get<double>();
            e.selected = je.at("selected").get<bool>();
            model.log.push_back(e);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::CorruptCheckpoint, path + ": header: " + e.what());
    }

    if (hex64(model.vocab.hash()) != header.at("vocab_hash").get<std::string>())
        throw Error(ErrorCode::IncompatibleCheckpoint,
                    path + ": vocabulary does not match its recorded hash");

    if (model.formulation.kind == FormulationKind::ssm)
        model.params.bilstm = nn::make_bilstm_params(model.d_emb, model.config.hidden);
    if (model.provider == ProviderKind::trainable)
        model.params.embedding = nn::Matrix::Zero(model.vocab.size(), model.d_emb);
    model.params.ff_w = nn::Matrix::Zero(
        2, model.formulation.kind == FormulationKind::ssm ? 2 * model.config.hidden
                                                          : model.d_emb);
    model.params.ff_b = nn::Matrix::Zero(2, 1);

    auto named = model_tensors(model.params, model.formulation.kind, model.provider);
    const json& tensors_meta = header.at("tensors");
    if (tensors_meta.size() != named.size())
        throw Error(ErrorCode::CorruptCheckpoint, path + ": unexpected tensor count");
    for (std::size_t k = 0; k < named.size(); ++k) {
        const json& meta = tensors_meta.at(k);
        if (meta.at("name").get<std::string>() != named[k].name)
            throw Error(ErrorCode::CorruptCheckpoint,
                        path + ": unexpected tensor " + meta.at("name").get<std::string>());
        const Eigen::Index rows = meta.at("rows").get<Eigen::Index>();
        const Eigen::Index cols = meta.at("cols").get<Eigen::Index>();
        if (rows != named[k].tensor->rows() || cols != named[k].tensor->cols())
            throw Error(ErrorCode::CorruptCheckpoint,
                        path + ": tensor " + named[k].name + " has unexpected shape");
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c)
                (*named[k].tensor)(r, c) =
                    read_f64(in, ErrorCode::CorruptCheckpoint, path + ": " + named[k].name);
    }
    return model;
}

}  // namespace citeworthy::models
