#pragma once

#include <map>
#include <string>
#include <vector>

#include "pamm/corpus.hpp"
#include "pamm/hierarchy.hpp"
#include "pamm/labelseq.hpp"
#include "pamm/model.hpp"

namespace pamm {

// Appends the argmax token (ties to the lowest id) until EOS or max_len
// tokens; returns the generated ids without the leading BOS.
std::vector<int> greedy_decode(const ModelParams& params, const std::vector<int>& src_ids,
                               int max_len);

double micro_f1(const std::vector<LabelSet>& gold, const std::vector<LabelSet>& pred);
// Averages per-label F1 over every label in the hierarchy; labels absent from
// both gold and pred contribute 0.
double macro_f1(const std::vector<LabelSet>& gold, const std::vector<LabelSet>& pred,
                const LabelHierarchy& h);
std::map<int, double> per_level_macro_f1(const std::vector<LabelSet>& gold,
                                         const std::vector<LabelSet>& pred,
                                         const LabelHierarchy& h);
// Fraction of samples whose predicted set violates the hierarchy.
double inconsistency_rate(const std::vector<LabelSet>& pred, const LabelHierarchy& h);

struct LabelScore {
    long tp = 0, fp = 0, fn = 0;
    double precision() const { return tp + fp == 0 ? 0.0 : double(tp) / (tp + fp); }
    double recall() const { return tp + fn == 0 ? 0.0 : double(tp) / (tp + fn); }
    double f1() const {
        const double p = precision(), r = recall();
        return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    }
};

struct EvalReport {
    int samples = 0;
    double micro = 0.0;
    double macro = 0.0;
    std::map<int, double> per_level_macro;
    double inconsistency = 0.0;
    double malformed_token_rate = 0.0;
    std::map<std::string, LabelScore> per_label;
};

// Greedy-decodes every sample, parses the output and scores it. jobs > 1
// splits the decode work across threads; results are assembled in sample
// order, so the report does not depend on the job count.
EvalReport evaluate(const ModelParams& params, const Vocabulary& vocab,
                    const LabelHierarchy& h, const Corpus& test, int jobs = 1);

// key<TAB>value lines, fractions with 6 decimals.
void write_report(const EvalReport& report, const std::string& path);
std::string format_report(const EvalReport& report);
void write_per_label_csv(const EvalReport& report, const LabelHierarchy& h,
                         const std::string& path);

// Writes one block's causal self-attention score matrix (head >= 0) or the
// head average (head < 0) as CSV with the sequence tokens as headers.
void export_attention(const ForwardTrace& trace, const std::vector<std::string>& tokens,
                      int block, int head, const std::string& path);

}  // namespace pamm
