#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pamm/datagen.hpp"
#include "pamm/evalinfer.hpp"
#include "pamm/train.hpp"

namespace {

using namespace pamm;

std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(text);
    while (std::getline(ss, cur, ',')) {
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

struct TrainCli {
    std::string hierarchy, train_path, val_path, out_dir;
    ModelConfig model;
    TrainConfig train;
    bool flat_labels = false;
    std::string pamm_rows = "all";
};

void add_model_flags(CLI::App* cmd, ModelConfig& m) {
    cmd->add_option("--d-model", m.d_model, "embedding width");
    cmd->add_option("--heads", m.heads, "attention head count");
    cmd->add_option("--blocks", m.blocks, "encoder/decoder block count");
    cmd->add_option("--d-ff", m.d_ff, "feed-forward width");
    cmd->add_option("--dropout", m.dropout, "dropout rate");
    cmd->add_option("--max-src-len", m.max_src_len, "encoder length limit");
    cmd->add_option("--max-tgt-len", m.max_tgt_len, "decoder length limit");
}

int run_gen_data(const SynthSpec& spec, const std::string& out_dir) {
    GenStats stats = generate_to_dir(spec, out_dir);
    std::cout << format_stats(stats, spec);
    std::cout << "wrote " << out_dir << "/{hierarchy.tsv,train.jsonl,val.jsonl,test.jsonl}\n";
    return 0;
}

int run_train(const TrainCli& cli) {
    LabelHierarchy h = load_hierarchy(cli.hierarchy);
    Corpus train_corpus = read_corpus_jsonl(cli.train_path);
    Corpus val_corpus = cli.val_path.empty() ? Corpus{} : read_corpus_jsonl(cli.val_path);
    TrainOptions opts;
    opts.model = cli.model;
    opts.train = cli.train;
    opts.train.pamm_rows = cli.pamm_rows == "labels" ? PammRows::Labels : PammRows::All;
    opts.flat_labels = cli.flat_labels;
    opts.out_dir = cli.out_dir;
    TrainResult res = train(h, train_corpus, val_corpus, opts);
    for (const auto& rec : res.log) {
        std::printf("epoch %d  loss %.4f  (hia %.4f, pamm %.4f)  val micro %.4f  macro %.4f\n",
                    rec.epoch, rec.loss_total, rec.loss_hia, rec.loss_pamm, rec.val_micro_f1,
                    rec.val_macro_f1);
    }
    std::printf("best epoch %d  val micro %.4f  macro %.4f\n", res.best_epoch,
                res.best_val_micro, res.best_val_macro);
    std::cout << "checkpoint " << res.checkpoint_path << "\n";
    return 0;
}

int run_eval(const std::string& ckpt, const std::string& hierarchy, const std::string& test_path,
             const std::string& out_dir, int jobs) {
    auto [params, vocab] = load_checkpoint(ckpt);
    LabelHierarchy h = load_hierarchy(hierarchy);
    Corpus test = read_corpus_jsonl(test_path);
    if (test.empty()) throw std::runtime_error("empty test corpus: " + test_path);
    EvalReport report = evaluate(params, vocab, h, test, jobs);
    std::cout << format_report(report);
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        write_report(report, out_dir + "/report.txt");
        write_per_label_csv(report, h, out_dir + "/per_label.csv");
        std::cout << "wrote " << out_dir << "/report.txt and per_label.csv\n";
    }
    return 0;
}

int run_inspect_mask(const std::string& hierarchy, const std::string& labels_csv,
                     const std::string& csv_path) {
    LabelHierarchy h = load_hierarchy(hierarchy);
    LabelSet labels;
    for (const auto& l : split_csv(labels_csv)) labels.insert(l);
    if (labels.empty()) throw std::runtime_error("no labels given");
    for (const auto& l : labels) {
        if (!h.contains(l)) throw std::runtime_error("unknown label: " + l);
        for (const auto& a : h.ancestors(l)) {
            if (!labels.count(a)) {
                throw std::runtime_error("inconsistent label set: " + l +
                                         " is missing its ancestor " + a);
            }
        }
    }
    MultiLevelSequence ml = bfs_flatten(h, labels);
    PathAdaptiveMask mask = build_mask(h, ml);
    const auto toks = ml.strings();
    std::cout << "sequence:";
    for (const auto& t : toks) std::cout << " " << t;
    std::cout << "\n";
    for (int i = 0; i < mask.n; ++i) {
        for (int j = 0; j < mask.n; ++j) {
            std::cout << (j ? " " : "") << static_cast<int>(mask.at(i, j));
        }
        std::cout << "\n";
    }
    if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        if (!out) throw std::runtime_error("cannot write " + csv_path);
        for (const auto& t : toks) out << "," << t;
        out << "\n";
        for (int i = 0; i < mask.n; ++i) {
            out << toks[i];
            for (int j = 0; j < mask.n; ++j) out << "," << static_cast<int>(mask.at(i, j));
            out << "\n";
        }
        std::cout << "wrote " << csv_path << "\n";
    }
    return 0;
}

int run_export_attention(const std::string& ckpt, const std::string& hierarchy,
                         const std::string& test_path, int index, int block, int head,
                         const std::string& out_path) {
    auto [params, vocab] = load_checkpoint(ckpt);
    LabelHierarchy h = load_hierarchy(hierarchy);
    Corpus corpus = read_corpus_jsonl(test_path);
    if (index < 0 || index >= static_cast<int>(corpus.size())) {
        throw std::runtime_error("sample index out of range (corpus has " +
                                 std::to_string(corpus.size()) + " records)");
    }
    const Sample& sample = corpus[index];
    std::vector<int> src = vocab.encode_text(sample.words, params.cfg.max_src_len);
    if (src.empty()) src.push_back(Vocabulary::kUnkId);
    MultiLevelSequence ml = bfs_flatten(h, sample.labels);

    std::vector<int> dec_in = {Vocabulary::kBosId};
    std::vector<std::string> toks = {sym::kBos};
    for (const auto& t : ml.tokens) {
        dec_in.push_back(vocab.id(t.text));
        toks.push_back(t.text);
    }
    Mat enc = encoder_forward(params, src);
    ForwardTrace trace = decoder_forward(params, dec_in, enc);
    if (block < 0) block = static_cast<int>(trace.self_scores.size()) - 1;
    export_attention(trace, toks, block, head, out_path);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchy-aware label-sequence classification with path-adaptive masking"};
    app.require_subcommand(1);
    app.set_config("--config", "", "defaults file (key = value)");

    SynthSpec spec;
    std::string gen_out;
    std::string branching = "4,3,2";
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--levels", spec.levels, "hierarchy depth");
    gen->add_option("--branching", branching, "per-level branching, e.g. 4,3,2");
    gen->add_option("--text-vocab", spec.text_vocab, "total distinct text words");
    gen->add_option("--words-per-label", spec.words_per_label, "signal words per label");
    gen->add_option("--paths-min", spec.paths_min, "minimum paths per sample");
    gen->add_option("--paths-max", spec.paths_max, "maximum paths per sample");
    gen->add_option("--multi-path-rate", spec.multi_path_rate, "share of multi-path samples");
    gen->add_option("--truncate-rate", spec.truncate_rate, "share of truncated paths");
    gen->add_option("--noise-rate", spec.noise_rate, "noise token share");
    gen->add_option("--train-n", spec.train_n, "training samples");
    gen->add_option("--val-n", spec.val_n, "validation samples");
    gen->add_option("--test-n", spec.test_n, "test samples");
    gen->add_option("--seed", spec.seed, "generator seed");

    TrainCli tc;
    auto* tr = app.add_subcommand("train", "train a model");
    tr->add_option("--hierarchy", tc.hierarchy, "edge-list hierarchy file")->required();
    tr->add_option("--train", tc.train_path, "training corpus (jsonl)")->required();
    tr->add_option("--val", tc.val_path, "validation corpus (jsonl)");
    tr->add_option("--out", tc.out_dir, "output directory")->required();
    auto* rho_opt = tr->add_option("--rho", tc.train.rho, "path-mask loss coefficient");
    tr->add_option("--seed", tc.train.seed, "training seed");
    tr->add_option("--epochs", tc.train.epochs, "training epochs");
    tr->add_option("--batch", tc.train.batch, "mini-batch size");
    tr->add_option("--lr", tc.train.lr, "learning rate");
    tr->add_option("--clip", tc.train.clip, "gradient clip (global norm)");
    tr->add_flag("--flat-labels", tc.flat_labels,
                 "train on unordered label sets (no hierarchy structure)");
    tr->add_option("--pamm-rows", tc.pamm_rows, "rows entering the path-mask loss")
        ->check(CLI::IsMember({"all", "labels"}));
    add_model_flags(tr, tc.model);

    std::string ev_ckpt, ev_hier, ev_test, ev_out;
    int ev_jobs = 1;
    auto* ev = app.add_subcommand("eval", "greedy-decode and score a test corpus");
    ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
    ev->add_option("--hierarchy", ev_hier, "edge-list hierarchy file")->required();
    ev->add_option("--test", ev_test, "test corpus (jsonl)")->required();
    ev->add_option("--out", ev_out, "output directory for report files");
    ev->add_option("--jobs", ev_jobs, "parallel decode workers");

    std::string im_hier, im_labels, im_csv;
    auto* im = app.add_subcommand("inspect-mask", "print the path-adaptive mask for a label set");
    im->add_option("--hierarchy", im_hier, "edge-list hierarchy file")->required();
    im->add_option("--labels", im_labels, "comma-separated label set")->required();
    im->add_option("--csv", im_csv, "also write the mask as CSV");

    std::string ea_ckpt, ea_hier, ea_test, ea_out;
    int ea_index = 0, ea_block = -1, ea_head = -1;
    auto* ea = app.add_subcommand("export-attention",
                                  "dump a causal self-attention heat map as CSV");
    ea->add_option("--checkpoint", ea_ckpt, "model checkpoint")->required();
    ea->add_option("--hierarchy", ea_hier, "edge-list hierarchy file")->required();
    ea->add_option("--test", ea_test, "corpus with the sample to trace")->required();
    ea->add_option("--index", ea_index, "sample index in the corpus");
    ea->add_option("--block", ea_block, "decoder block (-1 = last)");
    ea->add_option("--head", ea_head, "attention head (-1 = head average)");
    ea->add_option("--out", ea_out, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            auto parts = split_csv(branching);
            spec.branching.clear();
            for (const auto& p : parts) spec.branching.push_back(std::stoi(p));
            return run_gen_data(spec, gen_out);
        }
        if (tr->parsed()) {
            if (tc.flat_labels && rho_opt->count() == 0) tc.train.rho = 0.0;
            return run_train(tc);
        }
        if (ev->parsed()) return run_eval(ev_ckpt, ev_hier, ev_test, ev_out, ev_jobs);
        if (im->parsed()) return run_inspect_mask(im_hier, im_labels, im_csv);
        if (ea->parsed()) {
            return run_export_attention(ea_ckpt, ea_hier, ea_test, ea_index, ea_block, ea_head,
                                        ea_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
