#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "citeworthy/corpus.hpp"
#include "citeworthy/dataset.hpp"
#include "citeworthy/nn.hpp"

namespace citeworthy::models {

using corpus::Document;
using corpus::FlatSentence;
using corpus::Label;

enum class FormulationKind { sc, spc, ssm };

const char* formulation_name(FormulationKind kind);
FormulationKind formulation_from_name(const std::string& name);

struct Formulation {
    FormulationKind kind = FormulationKind::sc;
    std::size_t m = 16;            // ssm only
    bool include_section = false;  // ssm only
};

// Lowercase, split on whitespace and punctuation boundaries, digit runs
// collapsed to a "<num>" placeholder.
std::vector<std::string> tokenize(const std::string& text);

struct Vocabulary {
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kSep = 2;

    std::vector<std::string> tokens;  // id -> token, reserved ids first
    std::unordered_map<std::string, int> ids;

    Vocabulary();
    int add(const std::string& token);
    int lookup(const std::string& token) const;  // kUnk for unseen tokens
    int size() const { return static_cast<int>(tokens.size()); }
    std::uint64_t hash() const;
};

// Built from the training split only (plus the canonical section names, which
// can appear in contexts); frozen afterwards.
Vocabulary build_vocabulary(const std::vector<Document>& train_docs);

// Token caps (tail truncation): 64 per sentence, 196 per sentence+context pair.
extern const std::size_t kMaxSentenceTokens;
extern const std::size_t kMaxPairTokens;

// SC: tokens of s_i. SPC: tokens of s_i ++ [SEP] ++ tokens of c_i.
std::vector<int> encode_sc(const std::vector<FlatSentence>& flat, std::size_t i,
                           const Vocabulary& vocab);
std::vector<int> encode_spc(const std::vector<FlatSentence>& flat, std::size_t i,
                            const Vocabulary& vocab);

// SSM: one token sequence per window slot, each sentence ++ [SEP] ++ context
// with the context clipped at the window boundary; padding slots are empty.
std::vector<std::vector<int>> encode_window(const std::vector<FlatSentence>& flat,
                                            const dataset::Window& window,
                                            bool include_section,
                                            const Vocabulary& vocab);

struct TrainConfig {
    int batch_size = 16;
    double lr = 1e-5;
    int max_epochs = 4;
    std::uint64_t seed = 42;
    double clip_norm = 5.0;
    int d_emb = 64;
    int hidden = 128;
};

enum class ProviderKind { trainable, external };

// Precomputed per-sentence vectors keyed by (doc_id, 1-based sentence index),
// standing in for pretrained contextual encoders. Binary format: magic,
// version, d_emb, count, then {fnv1a64(doc_id), index, d_emb doubles} records
// (little endian). A .jsonl file with {doc_id, index, values} is accepted too.
class ExternalVectors {
public:
    ExternalVectors() = default;

    static ExternalVectors load(const std::string& path);
    void save_binary(const std::string& path) const;
    void save_jsonl(const std::string& path) const;

    void put(const std::string& doc_id, std::size_t index, nn::Vector values);
    const nn::Vector* find(const std::string& doc_id, std::size_t index) const;
    // Throws MissingVector when absent.
    const nn::Vector& at(const std::string& doc_id, std::size_t index) const;

    int dim() const { return dim_; }
    std::size_t count() const { return vectors_.size(); }

private:
    int dim_ = 0;
    std::unordered_map<std::uint64_t, nn::Vector> vectors_;

    static std::uint64_t key(std::uint64_t doc_hash, std::size_t index);
};

struct ModelParams {
    nn::Matrix embedding;  // V x d_emb (trainable provider only)
    nn::BiLstmParams bilstm;  // ssm only
    nn::Matrix ff_w;  // 2 x (d_emb or 2H)
    nn::Matrix ff_b;  // 2 x 1
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_precision = 0.0;
    double val_recall = 0.0;
    double val_f1 = 0.0;
    bool selected = false;  // became the checkpoint
};

struct ModelCheckpoint {
    Formulation formulation;
    ProviderKind provider = ProviderKind::trainable;
    int d_emb = 0;       // sentence vector width fed to the classifier head
    TrainConfig config;
    Vocabulary vocab;
    ModelParams params;
    std::vector<EpochLog> log;
};

// Per-sentence logits. SC/SPC return one 2-vector; the window variant returns
// one column per slot with padding columns zeroed.
nn::Vector forward_sentence(const ModelCheckpoint& model,
                            const std::vector<int>& token_ids);
nn::Matrix forward_window(const ModelCheckpoint& model,
                          const std::vector<std::vector<int>>& slot_tokens,
                          const std::vector<char>& mask);

ModelCheckpoint init_model(const Formulation& formulation, const TrainConfig& config,
                           Vocabulary vocab, ProviderKind provider, int external_dim = 0);

// Mini-batch Adam training with per-epoch validation; keeps the parameters of
// the epoch with the best validation cite-class F1 (ties keep the earlier
// epoch). max_epochs = 0 returns the initialization unchanged.
ModelCheckpoint train(const std::vector<Document>& train_docs,
                      const std::vector<Document>& val_docs,
                      const Formulation& formulation, const TrainConfig& config,
                      ProviderKind provider = ProviderKind::trainable,
                      const ExternalVectors* vectors = nullptr);

struct Prediction {
    std::string doc_id;
    std::size_t index = 0;  // 1-based
    Label label = Label::no_cite;
    double p_cite = 0.0;
};

// argmax of softmax per sentence, ties resolved to no_cite. SSM predicts each
// sentence from its centered inference window.
std::vector<Prediction> predict(const ModelCheckpoint& model,
                                const std::vector<Document>& documents,
                                const ExternalVectors* vectors = nullptr);

extern const int kCheckpointFormatVersion;

// Binary checkpoint (header JSON blob + named little-endian float64 tensors)
// plus a human-readable JSON sidecar at path + ".json".
void save_checkpoint(const std::string& path, const ModelCheckpoint& model,
                     const std::string& config_json = "{}");
ModelCheckpoint load_checkpoint(const std::string& path);

}  // namespace citeworthy::models
