#pragma once

#include <random>
#include <string>
#include <vector>

#include "pamm/model.hpp"
#include "pamm/train.hpp"
#include "test_util.hpp"

namespace testutil {

struct MicroCase {
    pamm::LabelHierarchy h;
    pamm::Vocabulary vocab;
    pamm::ModelConfig cfg;
    std::vector<pamm::EncodedSample> batch;
};

// d_model=8, one block, two heads; targets of at most 6 tokens.
inline MicroCase make_micro_case(uint64_t seed) {
    using namespace pamm;
    std::mt19937_64 rng(seed);
    LabelHierarchy h = LabelHierarchy::from_edges({
        {"ROOT", "a"},
        {"ROOT", "b"},
        {"a", "c"},
        {"a", "d"},
        {"c", "e"},
    });
    Vocabulary vocab(h, {"red", "green", "blue", "gray"});
    ModelConfig cfg;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.blocks = 1;
    cfg.d_ff = 16;
    cfg.vocab_size = vocab.size();
    cfg.max_src_len = 8;
    cfg.max_tgt_len = 8;
    cfg.dropout = 0.0;

    static const std::vector<LabelSet> sets = {
        {"a"}, {"b"}, {"a", "c"}, {"a", "d"}, {"a", "b"}, {"a", "c", "e"}, {"a", "b", "c"},
    };
    std::uniform_int_distribution<size_t> pick_set(0, sets.size() - 1);
    std::uniform_int_distribution<int> word(6 + 5, vocab.size() - 1);
    std::uniform_int_distribution<int> len(2, 4);

    MicroCase mc{std::move(h), std::move(vocab), cfg, {}};
    for (int s = 0; s < 2; ++s) {
        Sample sample;
        sample.labels = sets[pick_set(rng)];
        const int n = len(rng);
        for (int i = 0; i < n; ++i) sample.words.push_back(mc.vocab.token(word(rng)));
        mc.batch.push_back(encode_sample(mc.h, mc.vocab, sample, cfg, /*flat=*/false));
    }
    return mc;
}

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_param;
    int checked = 0;
};

// Central finite differences over every parameter entry, step 1e-5.
inline GradCheckResult gradient_check(pamm::ModelParams& params,
                                      const std::vector<pamm::EncodedSample>& batch,
                                      double rho,
                                      pamm::PammRows rows = pamm::PammRows::All,
                                      double step = 1e-5) {
    using namespace pamm;
    ModelParams grads = ModelParams::zeros_like(params);
    backward_batch(params, batch, rho, rows, grads);

    GradCheckResult res;
    std::map<std::string, const Mat*> gmap;
    grads.for_each([&](const std::string& name, const Mat& m) { gmap[name] = &m; });
    params.for_each([&](const std::string& name, Mat& m) {
        const Mat& g = *gmap.at(name);
        for (size_t i = 0; i < m.size(); ++i) {
            const double orig = m.a[i];
            m.a[i] = orig + step;
            const double up = total_loss(params, batch, rho, rows).total;
            m.a[i] = orig - step;
            const double down = total_loss(params, batch, rho, rows).total;
            m.a[i] = orig;
            const double fd = (up - down) / (2.0 * step);
            const double an = g.a[i];
            const double mag = std::max(std::abs(fd), std::abs(an));
            double rel;
            if (mag < 1e-6) {
                rel = std::abs(fd - an) < 1e-8 ? 0.0 : std::abs(fd - an);
            } else {
                rel = std::abs(fd - an) / mag;
            }
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_param = name + "[" + std::to_string(i) + "]";
            }
            ++res.checked;
        }
    });
    return res;
}

}  // namespace testutil
