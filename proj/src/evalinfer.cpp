#include "pamm/evalinfer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "pamm/train.hpp"

namespace pamm {

std::vector<int> greedy_decode(const ModelParams& params, const std::vector<int>& src_ids,
                               int max_len) {
    if (max_len < 1 || max_len > params.cfg.max_tgt_len) {
        throw std::invalid_argument("greedy_decode: max_len outside the decoder limit");
    }
    const Mat enc_out = encoder_forward(params, src_ids);
    std::vector<int> dec_in = {Vocabulary::kBosId};
    std::vector<int> generated;
    while (static_cast<int>(generated.size()) < max_len) {
        ForwardTrace trace = decoder_forward(params, dec_in, enc_out);
        const double* last = trace.logits.row(trace.logits.rows - 1);
        int best = 0;
        for (int j = 1; j < trace.logits.cols; ++j) {
            if (last[j] > last[best]) best = j;  // ties keep the lowest id
        }
        generated.push_back(best);
        if (best == Vocabulary::kEosId) break;
        dec_in.push_back(best);
    }
    return generated;
}

namespace {

void check_aligned(const std::vector<LabelSet>& gold, const std::vector<LabelSet>& pred) {
    if (gold.size() != pred.size()) {
        throw std::invalid_argument("gold/pred lists must be aligned");
    }
}

std::map<std::string, LabelScore> per_label_scores(const std::vector<LabelSet>& gold,
                                                   const std::vector<LabelSet>& pred,
                                                   const LabelHierarchy& h) {
    std::map<std::string, LabelScore> scores;
    for (const auto& l : h.labels()) scores[l];
    for (size_t i = 0; i < gold.size(); ++i) {
        for (const auto& l : gold[i]) {
            if (pred[i].count(l)) {
                ++scores.at(l).tp;
            } else {
                ++scores.at(l).fn;
            }
        }
        for (const auto& l : pred[i]) {
            if (!gold[i].count(l)) ++scores.at(l).fp;
        }
    }
    return scores;
}

}  // namespace

double micro_f1(const std::vector<LabelSet>& gold, const std::vector<LabelSet>& pred) {
    check_aligned(gold, pred);
    long tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < gold.size(); ++i) {
        for (const auto& l : gold[i]) {
            if (pred[i].count(l)) {
                ++tp;
            } else {
                ++fn;
            }
        }
        for (const auto& l : pred[i]) {
            if (!gold[i].count(l)) ++fp;
        }
    }
    const double denom = 2.0 * tp + fp + fn;
    return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
}

double macro_f1(const std::vector<LabelSet>& gold, const std::vector<LabelSet>& pred,
                const LabelHierarchy& h) {
    check_aligned(gold, pred);
    auto scores = per_label_scores(gold, pred, h);
    double sum = 0.0;
    for (const auto& [l, s] : scores) sum += s.f1();
    return scores.empty() ? 0.0 : sum / scores.size();
}

std::map<int, double> per_level_macro_f1(const std::vector<LabelSet>& gold,
                                         const std::vector<LabelSet>& pred,
                                         const LabelHierarchy& h) {
    check_aligned(gold, pred);
    auto scores = per_label_scores(gold, pred, h);
    std::map<int, double> sums;
    std::map<int, int> counts;
    for (const auto& [l, s] : scores) {
        sums[h.depth(l)] += s.f1();
        counts[h.depth(l)] += 1;
    }
    std::map<int, double> out;
    for (const auto& [level, sum] : sums) out[level] = sum / counts[level];
    return out;
}

double inconsistency_rate(const std::vector<LabelSet>& pred, const LabelHierarchy& h) {
    if (pred.empty()) return 0.0;
    long bad = 0;
    for (const auto& p : pred) {
        if (!h.is_consistent(p)) ++bad;
    }
    return static_cast<double>(bad) / pred.size();
}

EvalReport evaluate(const ModelParams& params, const Vocabulary& vocab,
                    const LabelHierarchy& h, const Corpus& test, int jobs) {
    if (test.empty()) throw std::runtime_error("empty evaluation corpus");
    for (const auto& l : h.labels()) {
        if (!vocab.has(l)) {
            throw std::runtime_error("vocabulary mismatch: checkpoint lacks label " + l);
        }
    }
    const int n = static_cast<int>(test.size());
    std::vector<LabelSet> gold(n), pred(n);
    std::vector<uint8_t> malformed(n, 0);
    for (int i = 0; i < n; ++i) gold[i] = test[i].labels;

    auto decode_range = [&](int begin, int end) {
        for (int i = begin; i < end; ++i) {
            std::vector<int> src = vocab.encode_text(test[i].words, params.cfg.max_src_len);
            if (src.empty()) src.push_back(Vocabulary::kUnkId);
            auto ids = greedy_decode(params, src, params.cfg.max_tgt_len);
            auto [labels, diag] = parse_sequence(h, vocab.decode(ids));
            pred[i] = std::move(labels);
            malformed[i] = diag.unknown_tokens.empty() && diag.duplicate_labels.empty() ? 0 : 1;
        }
    };
    if (jobs <= 1) {
        decode_range(0, n);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (n + jobs - 1) / jobs;
        for (int t = 0; t < jobs; ++t) {
            const int begin = t * chunk;
            const int end = std::min(n, begin + chunk);
            if (begin < end) pool.emplace_back(decode_range, begin, end);
        }
        for (auto& th : pool) th.join();
    }

    EvalReport report;
    report.samples = n;
    report.micro = micro_f1(gold, pred);
    report.macro = macro_f1(gold, pred, h);
    report.per_level_macro = per_level_macro_f1(gold, pred, h);
    report.inconsistency = inconsistency_rate(pred, h);
    long bad = 0;
    for (auto m : malformed) bad += m;
    report.malformed_token_rate = static_cast<double>(bad) / n;
    report.per_label = per_label_scores(gold, pred, h);
    return report;
}

namespace {

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

std::string format_report(const EvalReport& report) {
    std::ostringstream out;
    out << "samples\t" << report.samples << "\n";
    out << "micro_f1\t" << fixed6(report.micro) << "\n";
    out << "macro_f1\t" << fixed6(report.macro) << "\n";
    for (const auto& [level, f1] : report.per_level_macro) {
        out << "macro_f1_level_" << level << "\t" << fixed6(f1) << "\n";
    }
    out << "inconsistency_rate\t" << fixed6(report.inconsistency) << "\n";
    out << "malformed_token_rate\t" << fixed6(report.malformed_token_rate) << "\n";
    return out.str();
}

void write_report(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report: " + path);
    out << format_report(report);
}

void write_per_label_csv(const EvalReport& report, const LabelHierarchy& h,
                         const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write per-label table: " + path);
    out << "label,level,tp,fp,fn,precision,recall,f1\n";
    for (const auto& l : h.labels()) {
        const LabelScore& s = report.per_label.at(l);
        out << l << "," << h.depth(l) << "," << s.tp << "," << s.fp << "," << s.fn << ","
            << fixed6(s.precision()) << "," << fixed6(s.recall()) << "," << fixed6(s.f1())
            << "\n";
    }
}

void export_attention(const ForwardTrace& trace, const std::vector<std::string>& tokens,
                      int block, int head, const std::string& path) {
    if (block < 0 || block >= static_cast<int>(trace.self_scores.size())) {
        throw std::invalid_argument("export_attention: block out of range");
    }
    const auto& heads = trace.self_scores[block];
    if (head >= static_cast<int>(heads.size())) {
        throw std::invalid_argument("export_attention: head out of range");
    }
    Mat score;
    if (head >= 0) {
        score = heads[head];
    } else {
        score = Mat(heads[0].rows, heads[0].cols);
        for (const auto& hm : heads) {
            for (size_t i = 0; i < score.size(); ++i) score.a[i] += hm.a[i];
        }
        for (auto& v : score.a) v /= heads.size();
    }
    if (static_cast<int>(tokens.size()) != score.rows) {
        throw std::invalid_argument("export_attention: token count mismatch");
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write attention csv: " + path);
    for (const auto& t : tokens) out << "," << t;
    out << "\n";
    for (int i = 0; i < score.rows; ++i) {
        out << tokens[i];
        for (int j = 0; j < score.cols; ++j) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.10g", score.at(i, j));
            out << "," << buf;
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("attention csv write failed: " + path);
}

}  // namespace pamm
