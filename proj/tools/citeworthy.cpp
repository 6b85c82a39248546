// citeworthy: build labeled corpora from raw scholarly text, split them at
// document level, train/evaluate the three citation-worthiness formulations,
// and run batch prediction. See README.md for formats and examples.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "citeworthy/corpus.hpp"
#include "citeworthy/dataset.hpp"
#include "citeworthy/error.hpp"
#include "citeworthy/eval.hpp"
#include "citeworthy/models.hpp"
#include "citeworthy/rng.hpp"
#include "citeworthy/version.hpp"

namespace {

using json = nlohmann::json;
using namespace citeworthy;

unsigned env_threads() {
    const char* env = std::getenv("CITEWORTHY_THREADS");
    if (!env) return 1;
    try {
        long v = std::stol(env);
        return v > 1 ? static_cast<unsigned>(v) : 1;
    } catch (...) {
        return 1;
    }
}

std::array<double, 3> parse_ratios(const std::string& text) {
    std::array<double, 3> ratios{};
    std::stringstream in(text);
    std::string part;
    std::size_t k = 0;
    while (std::getline(in, part, ',')) {
        if (k >= 3) throw Error(ErrorCode::BadRatios, "expected three ratios, got more");
        try {
            ratios[k++] = std::stod(part);
        } catch (...) {
            throw Error(ErrorCode::BadRatios, "not a number: " + part);
        }
    }
    if (k != 3) throw Error(ErrorCode::BadRatios, "expected three comma-separated ratios");
    return ratios;
}

struct BuildCorpusArgs {
    std::string config_file;
    std::string in;
    std::string patterns;
    std::string out;
    std::string stats;
    std::string skip_log;
    std::string sample_out;
    std::string audit;
    std::size_t sample_validation = 0;
    std::uint64_t seed = 42;
};

struct SplitArgs {
    std::string config_file;
    std::string in;
    std::string ratios = "0.6,0.2,0.2";
    std::uint64_t seed = 42;
    std::string out;
};

struct TrainArgs {
    std::string config_file;
    std::string data;
    std::string split;
    std::string formulation;
    std::size_t m = 16;
    bool include_section = false;
    std::string provider = "trainable";
    std::string vectors;
    std::string out;
    models::TrainConfig config;
};

struct EvalArgs {
    std::string config_file;
    std::string data;
    std::string split;
    std::string part = "test";
    std::string ckpt;
    std::string report;
    std::string csv;
    std::string vectors;
    bool by_section = false;
};

struct PredictArgs {
    std::string config_file;
    std::string in;
    std::string ckpt;
    std::string out;
    std::string vectors;
};

std::vector<corpus::Document> select_part(const std::vector<corpus::Document>& docs,
                                          const dataset::SplitAssignment& split,
                                          const std::string& part) {
    const std::vector<std::string>* ids = nullptr;
    if (part == "train") ids = &split.train;
    else if (part == "val") ids = &split.val;
    else if (part == "test") ids = &split.test;
    else throw Error(ErrorCode::SchemaMismatch, "unknown split part: " + part);
    std::unordered_set<std::string> wanted(ids->begin(), ids->end());
    std::vector<corpus::Document> out;
    for (const auto& doc : docs)
        if (wanted.count(doc.doc_id)) out.push_back(doc);
    return out;
}

json stats_to_json(const CorpusStats& stats) {
    return {{"articles", stats.articles},
            {"sections", stats.sections},
            {"paragraphs", stats.paragraphs},
            {"sentences", stats.sentences},
            {"sentences_with_citation", stats.sentences_with_citation},
            {"sentences_without_citation", stats.sentences_without_citation},
            {"avg_chars_per_sentence", stats.avg_chars_per_sentence},
            {"avg_words_per_sentence", stats.avg_words_per_sentence}};
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write: " + path);
    out << text;
    if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path);
}


// Flat key-value config files ("key = value", '#' comments). Values fill in
// options that were not given on the command line; flags always win.
void apply_config_file(CLI::App* sub, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open config file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos || line[b] == '#') continue;
        const auto e = line.find_last_not_of(" \t\r");
        std::string entry = line.substr(b, e - b + 1);
        auto sep = entry.find('=');
        if (sep == std::string::npos) sep = entry.find_first_of(" \t");
        if (sep == std::string::npos)
            throw Error(ErrorCode::IoFailure, path + " line " + std::to_string(lineno) +
                                                  ": expected key = value");
        auto strip = [](std::string s) {
            const auto sb = s.find_first_not_of(" \t");
            if (sb == std::string::npos) return std::string();
            const auto se = s.find_last_not_of(" \t");
            return s.substr(sb, se - sb + 1);
        };
        const std::string key = strip(entry.substr(0, sep));
        const std::string value = strip(entry.substr(sep + 1));
        CLI::Option* opt = sub->get_option_no_throw("--" + key);
        if (!opt)
            throw Error(ErrorCode::IoFailure, path + " line " + std::to_string(lineno) +
                                                  ": unknown option '" + key + "'");
        if (opt->count() > 0) continue;
        opt->add_result(value);
        opt->run_callback();
    }
}

int run_build_corpus(const BuildCorpusArgs& args) {
    auto patterns =
        args.patterns.empty() ? corpus::default_patterns() : corpus::load_patterns(args.patterns);

    std::vector<corpus::RawArticle> articles;
    if (std::filesystem::is_directory(args.in))
        articles = corpus::read_article_dir(args.in);
    else
        articles = corpus::read_article_jsonl(args.in);

    auto result = corpus::build_corpus(articles, patterns, env_threads());

    json config = {{"command", "build-corpus"},
                   {"in", args.in},
                   {"patterns", args.patterns},
                   {"out", args.out},
                   {"sample_validation", args.sample_validation},
                   {"seed", args.seed}};
    dataset::write_dataset(args.out, result.documents, config.dump());

    json skipped = json::array();
    for (const auto& s : result.skipped)
        skipped.push_back({{"doc_id", s.doc_id}, {"reason", s.reason}});

    const std::string stats_path = args.stats.empty() ? args.out + ".stats.json" : args.stats;
    json stats = stats_to_json(result.stats);
    stats["skipped_count"] = result.skipped.size();
    stats["tool_version"] = kToolVersion;
    stats["config"] = config;
    write_text(stats_path, stats.dump(2) + "\n");

    const std::string skip_path =
        args.skip_log.empty() ? args.out + ".skips.jsonl" : args.skip_log;
    {
        std::string text;
        for (const auto& row : skipped) text += row.dump() + "\n";
        write_text(skip_path, text);
    }

    if (args.sample_validation > 0) {
        // Random sample of labeled sentences for manual pattern auditing.
        struct Row {
            const corpus::Document* doc;
            std::size_t index;
            const corpus::Sentence* sen;
        };
        std::vector<Row> rows;
        for (const auto& doc : result.documents) {
            std::size_t index = 0;
            for (const auto& sec : doc.sections)
                for (const auto& par : sec.paragraphs)
                    for (const auto& sen : par.sentences) rows.push_back({&doc, ++index, &sen});
        }
        SplitMix64 rng(args.seed);
        rng.shuffle(rows);
        if (rows.size() > args.sample_validation) rows.resize(args.sample_validation);
        const std::string sample_path =
            args.sample_out.empty() ? args.out + ".sample.jsonl" : args.sample_out;
        std::string text;
        for (const auto& row : rows) {
            json j = {{"doc_id", row.doc->doc_id},
                      {"sentence_index", row.index},
                      {"text", row.sen->text},
                      {"original_text", row.sen->original_text},
                      {"label", row.sen->label == corpus::Label::cite ? "cite" : "no_cite"},
                      {"human_label", ""}};
            text += j.dump() + "\n";
        }
        write_text(sample_path, text);
        std::cout << "sampled " << rows.size() << " sentences to " << sample_path << "\n";
    }

    if (!args.audit.empty()) {
        // Agreement between tool labels and filled-in human_label fields.
        std::ifstream in(args.audit);
        if (!in) throw Error(ErrorCode::IoFailure, "cannot open: " + args.audit);
        std::size_t agree = 0, total = 0;
        std::string line;
        while (std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded()) continue;
            std::string human = j.value("human_label", "");
            if (human.empty()) continue;
            ++total;
            if (human == j.value("label", "")) ++agree;
        }
        if (total == 0) {
            std::cout << "audit: no annotated rows in " << args.audit << "\n";
        } else {
            std::cout << "audit: " << agree << "/" << total << " agree ("
                      << 100.0 * static_cast<double>(agree) / static_cast<double>(total)
                      << "%)\n";
        }
    }

    std::cout << "wrote " << result.documents.size() << " documents ("
              << result.stats.sentences << " sentences, " << result.skipped.size()
              << " skipped) to " << args.out << "\n";
    return 0;
}

int run_split(const SplitArgs& args) {
    auto ratios = parse_ratios(args.ratios);
    auto docs = dataset::read_dataset(args.in);
    std::vector<std::string> ids;
    ids.reserve(docs.size());
    for (const auto& doc : docs) ids.push_back(doc.doc_id);
    auto split = dataset::split_documents(ids, ratios, args.seed);
    json config = {{"command", "split"},
                   {"in", args.in},
                   {"ratios", args.ratios},
                   {"seed", args.seed},
                   {"out", args.out}};
    dataset::write_split(args.out, split, config.dump());
    std::cout << "split " << ids.size() << " documents into " << split.train.size() << "/"
              << split.val.size() << "/" << split.test.size() << " (train/val/test)\n";
    return 0;
}

int run_train(const TrainArgs& args) {
    models::Formulation formulation;
    formulation.kind = models::formulation_from_name(args.formulation);
    formulation.m = args.m;
    formulation.include_section = args.include_section;

    auto provider = args.provider == "external" ? models::ProviderKind::external
                                                : models::ProviderKind::trainable;
    models::ExternalVectors vectors;
    if (provider == models::ProviderKind::external)
        vectors = models::ExternalVectors::load(args.vectors);

    auto docs = dataset::read_dataset(args.data);
    auto split = dataset::read_split(args.split);
    auto train_docs = select_part(docs, split, "train");
    auto val_docs = select_part(docs, split, "val");

    auto model = models::train(train_docs, val_docs, formulation, args.config, provider,
                               provider == models::ProviderKind::external ? &vectors : nullptr);

    json config = {{"command", "train"},
                   {"data", args.data},
                   {"split", args.split},
                   {"formulation", args.formulation},
                   {"m", args.m},
                   {"include_section", args.include_section},
                   {"provider", args.provider},
                   {"vectors", args.vectors},
                   {"out", args.out},
                   {"batch_size", args.config.batch_size},
                   {"lr", args.config.lr},
                   {"max_epochs", args.config.max_epochs},
                   {"seed", args.config.seed},
                   {"clip_norm", args.config.clip_norm},
                   {"d_emb", args.config.d_emb},
                   {"hidden", args.config.hidden}};
    models::save_checkpoint(args.out, model, config.dump());

    json log = json::array();
    for (const auto& e : model.log)
        log.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"val_precision", e.val_precision},
                       {"val_recall", e.val_recall},
                       {"val_f1", e.val_f1},
                       {"selected", e.selected}});
    json log_file = {{"config", config}, {"epochs", log}, {"tool_version", kToolVersion}};
    write_text(args.out + ".log.json", log_file.dump(2) + "\n");

    std::cout << "trained " << args.formulation << " (batch_size=" << args.config.batch_size
              << ", lr=" << args.config.lr << ", max_epochs=" << args.config.max_epochs
              << ") -> " << args.out << "\n";
    return 0;
}

int run_eval(const EvalArgs& args) {
    auto model = models::load_checkpoint(args.ckpt);
    models::ExternalVectors vectors;
    bool have_vectors = !args.vectors.empty();
    if (have_vectors) vectors = models::ExternalVectors::load(args.vectors);

    auto docs = dataset::read_dataset(args.data);
    auto split = dataset::read_split(args.split);
    auto part_docs = select_part(docs, split, args.part);
    if (part_docs.empty())
        throw Error(ErrorCode::EmptyCorpus, "split part '" + args.part + "' has no documents");

    auto preds = models::predict(model, part_docs, have_vectors ? &vectors : nullptr);
    std::vector<corpus::Label> pred_labels, golds;
    std::vector<corpus::SectionKind> sections;
    for (const auto& p : preds) pred_labels.push_back(p.label);
    for (const auto& doc : part_docs) {
        for (const auto& fs : corpus::flatten(doc)) {
            golds.push_back(fs.sentence->label);
            sections.push_back(fs.section);
        }
    }

    auto report = eval::compute_metrics(pred_labels, golds);
    if (args.by_section)
        report.per_section = eval::per_section_metrics(pred_labels, golds, sections);

    json config = {{"command", "eval"}, {"data", args.data},   {"split", args.split},
                   {"part", args.part}, {"ckpt", args.ckpt},   {"by_section", args.by_section},
                   {"vectors", args.vectors}};
    if (!args.report.empty())
        write_text(args.report, eval::report_to_json(report, config.dump()) + "\n");
    if (!args.csv.empty()) write_text(args.csv, eval::report_to_csv(report));
    std::cout << eval::report_to_table(report);
    return 0;
}

int run_predict(const PredictArgs& args) {
    auto model = models::load_checkpoint(args.ckpt);
    models::ExternalVectors vectors;
    bool have_vectors = !args.vectors.empty();
    if (have_vectors) vectors = models::ExternalVectors::load(args.vectors);

    auto docs = dataset::read_dataset(args.in);
    if (docs.empty()) throw Error(ErrorCode::EmptyCorpus, args.in + " has no documents");

    auto preds = models::predict(model, docs, have_vectors ? &vectors : nullptr);
    std::string text;
    for (const auto& p : preds) {
        json j = {{"doc_id", p.doc_id},
                  {"index", p.index},
                  {"label", p.label == corpus::Label::cite ? "cite" : "no_cite"},
                  {"p_cite", p.p_cite}};
        text += j.dump() + "\n";
    }
    write_text(args.out, text);
    std::cout << "wrote " << preds.size() << " predictions to " << args.out << "\n";
    return 0;
}

int error_exit_code(const Error& e) {
    switch (e.code()) {
        case ErrorCode::BadRatios:
        case ErrorCode::BadWindowLength:
            return 2;  // flag-value problems are usage errors
        default:
            return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"citeworthy: citation-worthiness corpus and model toolkit"};
    app.require_subcommand(1);
    bool json_errors = false;
    app.add_flag("--json-errors", json_errors, "emit errors as JSON on stderr");

    BuildCorpusArgs bc;
    auto* cmd_bc = app.add_subcommand("build-corpus",
                                      "parse and label raw articles into a dataset");
    cmd_bc->add_option("--in", bc.in, "article directory or JSONL file")->required();
    cmd_bc->add_option("--patterns", bc.patterns, "citation pattern file");
    cmd_bc->add_option("--out", bc.out, "output dataset JSONL")->required();
    cmd_bc->add_option("--stats", bc.stats, "stats JSON path (default <out>.stats.json)");
    cmd_bc->add_option("--skip-log", bc.skip_log, "skip log path (default <out>.skips.jsonl)");
    cmd_bc->add_option("--sample-validation", bc.sample_validation,
                       "emit N random labeled sentences for manual audit");
    cmd_bc->add_option("--sample-out", bc.sample_out,
                       "sample path (default <out>.sample.jsonl)");
    cmd_bc->add_option("--audit", bc.audit, "annotated sample file; report label agreement");
    cmd_bc->add_option("--seed", bc.seed, "sampling seed");
    cmd_bc->add_option("--config", bc.config_file, "flat key-value config file");

    SplitArgs sp;
    auto* cmd_sp = app.add_subcommand("split", "document-level train/val/test split");
    cmd_sp->add_option("--in", sp.in, "dataset JSONL")->required();
    cmd_sp->add_option("--ratios", sp.ratios, "train,val,test fractions");
    cmd_sp->add_option("--seed", sp.seed, "shuffle seed");
    cmd_sp->add_option("--out", sp.out, "split manifest JSON")->required();
    cmd_sp->add_option("--config", sp.config_file, "flat key-value config file");

    TrainArgs tr;
    auto* cmd_tr = app.add_subcommand("train", "train a model formulation");
    cmd_tr->add_option("--data", tr.data, "dataset JSONL")->required();
    cmd_tr->add_option("--split", tr.split, "split manifest JSON")->required();
    cmd_tr->add_option("--formulation", tr.formulation, "sc | spc | ssm")
        ->required()
        ->check(CLI::IsMember({"sc", "spc", "ssm"}));
    cmd_tr->add_option("--m", tr.m, "window length (ssm)");
    cmd_tr->add_flag("--include-section", tr.include_section,
                     "prepend the section name to each context (ssm)");
    cmd_tr->add_option("--provider", tr.provider, "trainable | external")
        ->check(CLI::IsMember({"trainable", "external"}));
    cmd_tr->add_option("--vectors", tr.vectors, "external sentence-vector file");
    cmd_tr->add_option("--out", tr.out, "checkpoint path")->required();
    cmd_tr->add_option("--batch-size", tr.config.batch_size, "minibatch size");
    cmd_tr->add_option("--lr", tr.config.lr, "learning rate");
    cmd_tr->add_option("--epochs", tr.config.max_epochs, "maximum epochs");
    cmd_tr->add_option("--seed", tr.config.seed, "initialization/shuffle seed");
    cmd_tr->add_option("--clip-norm", tr.config.clip_norm, "global gradient norm clip");
    cmd_tr->add_option("--d-emb", tr.config.d_emb, "token embedding width");
    cmd_tr->add_option("--hidden", tr.config.hidden, "BiLSTM hidden units");
    cmd_tr->add_option("--config", tr.config_file, "flat key-value config file");

    EvalArgs ev;
    auto* cmd_ev = app.add_subcommand("eval", "evaluate a checkpoint on a split part");
    cmd_ev->add_option("--data", ev.data, "dataset JSONL")->required();
    cmd_ev->add_option("--split", ev.split, "split manifest JSON")->required();
    cmd_ev->add_option("--part", ev.part, "train | val | test")
        ->check(CLI::IsMember({"train", "val", "test"}));
    cmd_ev->add_option("--ckpt", ev.ckpt, "checkpoint path")->required();
    cmd_ev->add_option("--report", ev.report, "report JSON path");
    cmd_ev->add_option("--csv", ev.csv, "report CSV path");
    cmd_ev->add_flag("--by-section", ev.by_section, "add a per-section breakdown");
    cmd_ev->add_option("--vectors", ev.vectors, "external sentence-vector file");
    cmd_ev->add_option("--config", ev.config_file, "flat key-value config file");

    PredictArgs pr;
    auto* cmd_pr = app.add_subcommand("predict", "label every sentence of a dataset");
    cmd_pr->add_option("--in", pr.in, "dataset JSONL")->required();
    cmd_pr->add_option("--ckpt", pr.ckpt, "checkpoint path")->required();
    cmd_pr->add_option("--out", pr.out, "predictions JSONL")->required();
    cmd_pr->add_option("--vectors", pr.vectors, "external sentence-vector file");
    cmd_pr->add_option("--config", pr.config_file, "flat key-value config file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cmd_bc->parsed() && !bc.config_file.empty()) apply_config_file(cmd_bc, bc.config_file);
        if (cmd_sp->parsed() && !sp.config_file.empty()) apply_config_file(cmd_sp, sp.config_file);
        if (cmd_tr->parsed() && !tr.config_file.empty()) apply_config_file(cmd_tr, tr.config_file);
        if (cmd_ev->parsed() && !ev.config_file.empty()) apply_config_file(cmd_ev, ev.config_file);
        if (cmd_pr->parsed() && !pr.config_file.empty()) apply_config_file(cmd_pr, pr.config_file);

        // Usage-level validation before touching any data.
        if (cmd_tr->parsed()) {
            if (tr.m < 2 || tr.m % 2 != 0)
                throw Error(ErrorCode::BadWindowLength,
                            "--m must be even and >= 2, got " + std::to_string(tr.m));
            if (tr.include_section && tr.formulation != "ssm")
                throw Error(ErrorCode::BadWindowLength,
                            "--include-section requires --formulation ssm");
            if (tr.provider == "external" && tr.vectors.empty())
                throw Error(ErrorCode::MissingVector,
                            "--provider external requires --vectors");
        }
        if (cmd_bc->parsed()) return run_build_corpus(bc);
        if (cmd_sp->parsed()) return run_split(sp);
        if (cmd_tr->parsed()) return run_train(tr);
        if (cmd_ev->parsed()) return run_eval(ev);
        if (cmd_pr->parsed()) return run_predict(pr);
    } catch (const Error& e) {
        if (json_errors)
            std::cerr << json{{"error", error_code_name(e.code())}, {"message", e.what()}}.dump()
                      << "\n";
        else
            std::cerr << "error: " << e.what() << "\n";
        return error_exit_code(e);
    } catch (const std::exception& e) {
        if (json_errors)
            std::cerr << json{{"error", "Unexpected"}, {"message", e.what()}}.dump() << "\n";
        else
            std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
