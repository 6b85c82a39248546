#pragma once

// Synthetic corpora for training tests. Labels are assigned by construction,
// not by citation patterns.

#include <string>
#include <vector>

#include "citeworthy/corpus.hpp"
#include "citeworthy/rng.hpp"

namespace testutil {

using citeworthy::SplitMix64;
using citeworthy::corpus::Document;
using citeworthy::corpus::Label;
using citeworthy::corpus::Paragraph;
using citeworthy::corpus::Section;
using citeworthy::corpus::SectionKind;
using citeworthy::corpus::Sentence;

inline Document make_doc(const std::string& doc_id,
                         const std::vector<std::pair<std::string, Label>>& sentences,
                         SectionKind kind = SectionKind::Other) {
    Paragraph par;
    for (const auto& [text, label] : sentences)
        par.sentences.push_back(Sentence::make(text, label, text));
    Section sec;
    sec.header = citeworthy::corpus::section_name(kind);
    sec.canonical = kind;
    sec.paragraphs.push_back(std::move(par));
    Document doc;
    doc.doc_id = doc_id;
    doc.sections.push_back(std::move(sec));
    return doc;
}

inline std::string filler_word(SplitMix64& rng) {
    static const char* words[] = {
        "signal", "window", "tensor", "margin", "corpus",  "branch", "kernel", "voxel",
        "stride", "hidden", "anchor", "weight", "sample",  "cursor", "lattice", "vector",
        "thread", "module", "scalar", "buffer", "column",  "matrix", "filter", "metric",
        "socket", "packet", "orbit",  "prism",  "gradient", "residue",
    };
    return words[rng.below(sizeof(words) / sizeof(words[0]))];
}

// Labels depend only on the sentence's own tokens: positives carry "alphaq",
// negatives carry "betaq". Any per-sentence classifier can overfit this.
inline std::vector<Document> overfit_corpus(std::size_t n_docs, std::size_t sents_per_doc,
                                            std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<Document> docs;
    for (std::size_t d = 0; d < n_docs; ++d) {
        std::vector<std::pair<std::string, Label>> sentences;
        for (std::size_t s = 0; s < sents_per_doc; ++s) {
            const bool positive = rng.uniform() < 0.35;
            std::string text = positive ? "alphaq" : "betaq";
            const std::size_t extra = 3 + rng.below(4);
            for (std::size_t w = 0; w < extra; ++w) text += " " + filler_word(rng);
            sentences.push_back({text, positive ? Label::cite : Label::no_cite});
        }
        docs.push_back(make_doc("overfit" + std::to_string(d), sentences));
    }
    return docs;
}

// The gold label of sentence i is "the previous sentence contains the marker
// token", then flipped with the given noise rate. The sentence's own tokens
// carry no signal, so per-sentence models cannot beat the prior while
// context-aware models can read the marker.
inline std::vector<Document> context_corpus(std::size_t n_docs, std::size_t sents_per_doc,
                                            double trigger_rate, double noise,
                                            std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<Document> docs;
    for (std::size_t d = 0; d < n_docs; ++d) {
        std::vector<std::string> texts;
        std::vector<bool> has_trigger;
        for (std::size_t s = 0; s < sents_per_doc; ++s) {
            const bool trigger = rng.uniform() < trigger_rate;
            const std::size_t len = 8;
            const std::size_t slot = rng.below(len);
            std::string text;
            for (std::size_t w = 0; w < len; ++w) {
                if (!text.empty()) text += " ";
                text += (trigger && w == slot) ? "markerq" : filler_word(rng);
            }
            texts.push_back(text);
            has_trigger.push_back(trigger);
        }
        std::vector<std::pair<std::string, Label>> sentences;
        for (std::size_t s = 0; s < sents_per_doc; ++s) {
            bool gold = s > 0 && has_trigger[s - 1];
            if (rng.uniform() < noise) gold = !gold;
            sentences.push_back({texts[s], gold ? Label::cite : Label::no_cite});
        }
        docs.push_back(make_doc("ctx" + std::to_string(d), sentences));
    }
    return docs;
}

inline std::vector<Document> pick_docs(const std::vector<Document>& docs,
                                       const std::vector<std::string>& ids) {
    std::vector<Document> out;
    for (const auto& id : ids)
        for (const auto& doc : docs)
            if (doc.doc_id == id) out.push_back(doc);
    return out;
}

}  // namespace testutil
