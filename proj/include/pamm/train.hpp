#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pamm/corpus.hpp"
#include "pamm/model.hpp"
#include "pamm/path_mask.hpp"

namespace pamm {

enum class PammRows { All, Labels };

struct LossBreakdown {
    double loss_hia = 0.0;
    double loss_pamm = 0.0;
    double rho = 0.0;
    double total = 0.0;
};

struct TrainConfig {
    double rho = 100.0;
    double lr = 3e-4;
    int batch = 10;
    int epochs = 3;
    uint64_t seed = 1;
    double clip = 1.0;
    PammRows pamm_rows = PammRows::All;
};

// A sample ready for the model: encoder ids plus the target sequence as vocab
// ids (EOS last, no BOS) and the path mask built over those target positions.
struct EncodedSample {
    std::vector<int> src_ids;
    std::vector<int> tgt_ids;
    std::vector<uint8_t> is_label;  // per target position
    PathAdaptiveMask mask;
    bool has_mask = false;  // flat-label targets carry no mask
};

std::vector<std::string> target_tokens(const LabelHierarchy& h, const LabelSet& labels,
                                       bool flat);
EncodedSample encode_sample(const LabelHierarchy& h, const Vocabulary& v, const Sample& s,
                            const ModelConfig& cfg, bool flat);
// Reserved tokens, labels in hierarchy order, then train-corpus words by
// descending frequency (ties lexicographic).
Vocabulary build_vocabulary(const LabelHierarchy& h, const Corpus& train_corpus);

// Mean over counted positions of -log softmax(logits)[gold]. Positions where
// count_mask is 0 (or gold < 0) are excluded.
double cross_entropy_loss(const Mat& logits, const std::vector<int>& gold,
                          const std::vector<uint8_t>* count_mask = nullptr);

// Sum over blocks of the head-averaged, timestep-summed off-path mass.
// Scores must be mask-aligned (n x n over the target positions).
double pamm_loss(const ForwardTrace& trace, const PathAdaptiveMask& mask,
                 PammRows rows = PammRows::All,
                 const std::vector<uint8_t>* is_label = nullptr);

// Forward-only loss over a batch; components averaged over samples.
LossBreakdown total_loss(const ModelParams& params, const std::vector<EncodedSample>& batch,
                         double rho, PammRows rows = PammRows::All);

// Accumulates d(total)/d(params) into grads and returns the loss breakdown.
// Throws naming the parameter if any gradient is non-finite.
LossBreakdown backward_batch(const ModelParams& params,
                             const std::vector<EncodedSample>& batch, double rho,
                             PammRows rows, ModelParams& grads,
                             std::mt19937_64* dropout_rng = nullptr);

struct AdamState {
    ModelParams m, v;
    int64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState init(const ModelParams& p);
};

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr);

// Scales grads so the global L2 norm is at most max_norm; returns the norm.
double clip_gradients(ModelParams& grads, double max_norm);

struct TrainOptions {
    ModelConfig model;
    TrainConfig train;
    bool flat_labels = false;
    std::string out_dir;
};

struct EpochRecord {
    int epoch = 0;
    double loss_total = 0, loss_hia = 0, loss_pamm = 0;
    double val_micro_f1 = 0, val_macro_f1 = 0;
};

struct TrainResult {
    int best_epoch = 0;
    double best_val_micro = 0, best_val_macro = 0;
    std::vector<EpochRecord> log;
    std::string checkpoint_path, metrics_path, vocab_path;
};

// Teacher-forced epochs with per-epoch validation; keeps the checkpoint of the
// best validation Macro-F1. Deterministic under a fixed seed on one thread.
TrainResult train(const LabelHierarchy& h, const Corpus& train_corpus,
                  const Corpus& val_corpus, const TrainOptions& opts);

}  // namespace pamm
