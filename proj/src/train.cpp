#include "pamm/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "pamm/evalinfer.hpp"

namespace pamm {

std::vector<std::string> target_tokens(const LabelHierarchy& h, const LabelSet& labels,
                                       bool flat) {
    if (!flat) return bfs_flatten(h, labels).strings();
    // Unordered-set baseline: labels joined by `_` in name order, no level
    // separators, so the sequence carries no hierarchy structure.
    std::vector<std::string> toks;
    for (const auto& l : labels) {
        if (!h.contains(l)) throw std::runtime_error("unknown label: " + l);
        if (!toks.empty()) toks.push_back(sym::kIntra);
        toks.push_back(l);
    }
    toks.push_back(sym::kEos);
    return toks;
}

EncodedSample encode_sample(const LabelHierarchy& h, const Vocabulary& v, const Sample& s,
                            const ModelConfig& cfg, bool flat) {
    EncodedSample out;
    out.src_ids = v.encode_text(s.words, cfg.max_src_len);
    if (out.src_ids.empty()) out.src_ids.push_back(Vocabulary::kUnkId);
    if (flat) {
        auto toks = target_tokens(h, s.labels, true);
        if (static_cast<int>(toks.size()) > cfg.max_tgt_len) {
            toks.resize(cfg.max_tgt_len - 1);
            toks.push_back(sym::kEos);
        }
        for (const auto& t : toks) {
            out.tgt_ids.push_back(v.id(t));
            out.is_label.push_back(h.contains(t) ? 1 : 0);
        }
        out.has_mask = false;
        return out;
    }
    MultiLevelSequence ml = bfs_flatten(h, s.labels);
    if (static_cast<int>(ml.size()) > cfg.max_tgt_len) {
        throw std::runtime_error("target sequence longer than max_tgt_len (" +
                                 std::to_string(ml.size()) + " tokens)");
    }
    out.mask = build_mask(h, ml);
    out.has_mask = true;
    for (const auto& t : ml.tokens) {
        out.tgt_ids.push_back(v.id(t.text));
        out.is_label.push_back(t.is_label ? 1 : 0);
    }
    return out;
}

Vocabulary build_vocabulary(const LabelHierarchy& h, const Corpus& train_corpus) {
    std::map<std::string, long> counts;
    for (const auto& s : train_corpus) {
        for (const auto& w : s.words) ++counts[w];
    }
    std::vector<std::pair<long, std::string>> by_freq;
    for (const auto& [w, c] : counts) {
        if (!h.contains(w)) by_freq.emplace_back(-c, w);
    }
    std::sort(by_freq.begin(), by_freq.end());
    std::vector<std::string> words;
    words.reserve(by_freq.size());
    for (const auto& [negc, w] : by_freq) words.push_back(w);
    return Vocabulary(h, words);
}

double cross_entropy_loss(const Mat& logits, const std::vector<int>& gold,
                          const std::vector<uint8_t>* count_mask) {
    if (static_cast<int>(gold.size()) != logits.rows) {
        throw std::invalid_argument("cross_entropy_loss: gold length mismatch");
    }
    if (count_mask && static_cast<int>(count_mask->size()) != logits.rows) {
        throw std::invalid_argument("cross_entropy_loss: mask length mismatch");
    }
    double total = 0.0;
    int counted = 0;
    for (int i = 0; i < logits.rows; ++i) {
        if (count_mask && !(*count_mask)[i]) continue;
        if (gold[i] < 0) continue;
        if (gold[i] >= logits.cols) {
            throw std::out_of_range("cross_entropy_loss: gold id out of range");
        }
        const double* r = logits.row(i);
        double mx = r[0];
        for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, r[j]);
        double lse = 0.0;
        for (int j = 0; j < logits.cols; ++j) lse += std::exp(r[j] - mx);
        total += -(r[gold[i]] - mx - std::log(lse));
        ++counted;
    }
    if (counted == 0) throw std::invalid_argument("cross_entropy_loss: nothing to score");
    return total / counted;
}

namespace {

std::vector<int> pamm_rows_for(const PathAdaptiveMask& mask, PammRows rows,
                               const std::vector<uint8_t>* is_label, int offset) {
    std::vector<int> out;
    for (int i = 0; i < mask.n; ++i) {
        if (rows == PammRows::Labels) {
            if (!is_label) throw std::invalid_argument("label-row policy needs token kinds");
            if (!(*is_label)[i]) continue;
        }
        out.push_back(i + offset);
    }
    return out;
}

}  // namespace

double pamm_loss(const ForwardTrace& trace, const PathAdaptiveMask& mask, PammRows rows,
                 const std::vector<uint8_t>* is_label) {
    double total = 0.0;
    const std::vector<int> row_ids = pamm_rows_for(mask, rows, is_label, 0);
    for (const auto& block : trace.self_scores) {
        if (block.empty()) throw std::invalid_argument("pamm_loss: block without heads");
        double block_sum = 0.0;
        for (const auto& score : block) {
            if (score.rows != mask.n || score.cols != mask.n) {
                throw std::invalid_argument("pamm_loss: score/mask shape mismatch");
            }
            const auto off = off_path_mass(score, mask);
            for (int i : row_ids) block_sum += off[i];
        }
        total += block_sum / static_cast<double>(block.size());
    }
    return total;
}

namespace {

// Mask over the decoder input [BOS] + ML: row/column k >= 1 corresponds to ML
// position k-1. BOS sits outside the mask accounting on both axes: its row
// contributes no loss term and mass spent on its column is not counted as
// off-path either.
Mat expand_mask_with_bos(const PathAdaptiveMask& mask) {
    Mat m(mask.n + 1, mask.n + 1);
    for (int i = 0; i < mask.n; ++i) {
        m.at(i + 1, 0) = 1.0;
        for (int j : mask.path_index_sets[i]) m.at(i + 1, j + 1) = 1.0;
    }
    return m;
}

struct SampleGraph {
    ad::Var loss_hia;
    ad::Var loss_pamm;  // valid only when has_pamm
    bool has_pamm = false;
};

SampleGraph build_sample_graph(ad::Tape& tape, const ModelConfig& cfg, const ParamVars& pv,
                               const EncodedSample& s, double rho, PammRows rows,
                               DropoutRng drop) {
    SampleGraph g;
    ad::Var enc_out = encoder_graph(tape, cfg, pv, s.src_ids, drop);
    std::vector<int> dec_in;
    dec_in.reserve(s.tgt_ids.size() + 1);
    dec_in.push_back(Vocabulary::kBosId);
    dec_in.insert(dec_in.end(), s.tgt_ids.begin(), s.tgt_ids.end());
    DecoderGraph dec = decoder_graph(tape, cfg, pv, dec_in, enc_out, drop);

    // Position t predicts target t; the final position (input EOS) has no target.
    std::vector<int> gold = s.tgt_ids;
    gold.push_back(-1);
    g.loss_hia = tape.cross_entropy_mean(dec.logits, std::move(gold));

    if (rho != 0.0 && s.has_mask) {
        const Mat expanded = expand_mask_with_bos(s.mask);
        const std::vector<int> row_ids = pamm_rows_for(s.mask, rows, &s.is_label, 1);
        ad::Var pamm_total{};
        bool first = true;
        for (const auto& block : dec.self_scores) {
            ad::Var block_sum{};
            bool bfirst = true;
            for (const auto& score : block) {
                ad::Var off = tape.off_path_sum(score, expanded, row_ids);
                block_sum = bfirst ? off : tape.add(block_sum, off);
                bfirst = false;
            }
            ad::Var avg = tape.scale(block_sum, 1.0 / static_cast<double>(block.size()));
            pamm_total = first ? avg : tape.add(pamm_total, avg);
            first = false;
        }
        if (!first) {
            g.loss_pamm = pamm_total;
            g.has_pamm = true;
        }
    }
    return g;
}

}  // namespace

LossBreakdown total_loss(const ModelParams& params, const std::vector<EncodedSample>& batch,
                         double rho, PammRows rows) {
    if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
    LossBreakdown out;
    out.rho = rho;
    for (const auto& s : batch) {
        ad::Tape tape;
        ParamVars pv = bind_params(tape, params, nullptr);
        SampleGraph g = build_sample_graph(tape, params.cfg, pv, s, rho, rows, {});
        out.loss_hia += g.loss_hia.val().a[0];
        if (g.has_pamm) out.loss_pamm += g.loss_pamm.val().a[0];
    }
    out.loss_hia /= batch.size();
    out.loss_pamm /= batch.size();
    out.total = out.loss_hia + rho * out.loss_pamm;
    return out;
}

LossBreakdown backward_batch(const ModelParams& params,
                             const std::vector<EncodedSample>& batch, double rho,
                             PammRows rows, ModelParams& grads,
                             std::mt19937_64* dropout_rng) {
    if (batch.empty()) throw std::invalid_argument("backward_batch: empty batch");
    LossBreakdown out;
    out.rho = rho;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    DropoutRng drop;
    if (dropout_rng && params.cfg.dropout > 0.0) {
        drop.rng = dropout_rng;
        drop.rate = params.cfg.dropout;
    }
    for (const auto& s : batch) {
        ad::Tape tape;
        ParamVars pv = bind_params(tape, params, &grads);
        SampleGraph g = build_sample_graph(tape, params.cfg, pv, s, rho, rows, drop);
        ad::Var sample_total = g.loss_hia;
        if (g.has_pamm) {
            sample_total = tape.add(sample_total, tape.scale(g.loss_pamm, rho));
        }
        ad::Var root = tape.scale(sample_total, inv_n);
        tape.backward(root);
        out.loss_hia += g.loss_hia.val().a[0] * inv_n;
        if (g.has_pamm) out.loss_pamm += g.loss_pamm.val().a[0] * inv_n;
    }
    out.total = out.loss_hia + rho * out.loss_pamm;
    grads.for_each([](const std::string& name, Mat& m) {
        if (!all_finite(m)) {
            throw std::runtime_error("non-finite gradient in parameter " + name);
        }
    });
    return out;
}

AdamState AdamState::init(const ModelParams& p) {
    AdamState s;
    s.m = ModelParams::zeros_like(p);
    s.v = ModelParams::zeros_like(p);
    return s;
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    std::map<std::string, const Mat*> gmap;
    grads.for_each([&](const std::string& name, const Mat& g) { gmap[name] = &g; });
    std::map<std::string, Mat*> mmap, vmap;
    state.m.for_each([&](const std::string& name, Mat& m) { mmap[name] = &m; });
    state.v.for_each([&](const std::string& name, Mat& m) { vmap[name] = &m; });
    params.for_each([&](const std::string& name, Mat& p) {
        const Mat& g = *gmap.at(name);
        Mat& m = *mmap.at(name);
        Mat& v = *vmap.at(name);
        for (size_t i = 0; i < p.size(); ++i) {
            m.a[i] = state.beta1 * m.a[i] + (1.0 - state.beta1) * g.a[i];
            v.a[i] = state.beta2 * v.a[i] + (1.0 - state.beta2) * g.a[i] * g.a[i];
            const double mhat = m.a[i] / bc1;
            const double vhat = v.a[i] / bc2;
            p.a[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    });
}

double clip_gradients(ModelParams& grads, double max_norm) {
    double sq = 0.0;
    grads.for_each([&](const std::string&, Mat& m) {
        for (double v : m.a) sq += v * v;
    });
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        grads.for_each([&](const std::string&, Mat& m) {
            for (auto& v : m.a) v *= scale;
        });
    }
    return norm;
}

namespace {

std::pair<double, double> validate_f1(const ModelParams& params, const Vocabulary& vocab,
                                      const LabelHierarchy& h,
                                      const std::vector<EncodedSample>& samples,
                                      const std::vector<LabelSet>& gold) {
    std::vector<LabelSet> pred;
    pred.reserve(samples.size());
    for (const auto& s : samples) {
        auto ids = greedy_decode(params, s.src_ids, params.cfg.max_tgt_len);
        auto [labels, diag] = parse_sequence(h, vocab.decode(ids));
        (void)diag;
        pred.push_back(std::move(labels));
    }
    return {micro_f1(gold, pred), macro_f1(gold, pred, h)};
}

}  // namespace

TrainResult train(const LabelHierarchy& h, const Corpus& train_corpus,
                  const Corpus& val_corpus, const TrainOptions& opts) {
    if (train_corpus.empty()) throw std::runtime_error("empty training corpus");
    if (opts.train.rho < 0.0) throw std::runtime_error("rho must be >= 0");
    if (opts.flat_labels && opts.train.rho != 0.0) {
        throw std::runtime_error("--flat-labels targets carry no path mask; use rho 0");
    }

    Vocabulary vocab = build_vocabulary(h, train_corpus);
    ModelConfig cfg = opts.model;
    cfg.vocab_size = vocab.size();
    cfg.validate();

    std::vector<EncodedSample> train_enc, val_enc;
    std::vector<LabelSet> val_gold;
    for (const auto& s : train_corpus) {
        train_enc.push_back(encode_sample(h, vocab, s, cfg, opts.flat_labels));
    }
    for (const auto& s : val_corpus) {
        val_enc.push_back(encode_sample(h, vocab, s, cfg, opts.flat_labels));
        val_gold.push_back(s.labels);
    }

    ModelParams params = ModelParams::init(cfg, opts.train.seed);
    AdamState adam = AdamState::init(params);
    std::mt19937_64 rng(opts.train.seed ^ 0x9e3779b97f4a7c15ULL);

    TrainResult result;
    ModelParams best = params;
    double best_macro = -1.0;

    std::filesystem::create_directories(opts.out_dir);
    const std::string metrics_path = opts.out_dir + "/metrics.jsonl";
    std::ofstream metrics(metrics_path);
    if (!metrics) throw std::runtime_error("cannot write metrics log: " + metrics_path);

    std::vector<size_t> order(train_enc.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= opts.train.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        LossBreakdown epoch_loss;
        epoch_loss.rho = opts.train.rho;
        size_t done = 0;
        ModelParams grads = ModelParams::zeros_like(params);
        while (done < order.size()) {
            const size_t take = std::min<size_t>(opts.train.batch, order.size() - done);
            std::vector<EncodedSample> batch;
            batch.reserve(take);
            for (size_t i = 0; i < take; ++i) batch.push_back(train_enc[order[done + i]]);
            done += take;
            grads.for_each([](const std::string&, Mat& m) { m.zero(); });
            LossBreakdown b = backward_batch(params, batch, opts.train.rho,
                                             opts.train.pamm_rows, grads, &rng);
            clip_gradients(grads, opts.train.clip);
            adam_step(params, grads, adam, opts.train.lr);
            const double w = static_cast<double>(take) / train_enc.size();
            epoch_loss.loss_hia += b.loss_hia * w;
            epoch_loss.loss_pamm += b.loss_pamm * w;
        }
        epoch_loss.total = epoch_loss.loss_hia + epoch_loss.rho * epoch_loss.loss_pamm;

        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss_total = epoch_loss.total;
        rec.loss_hia = epoch_loss.loss_hia;
        rec.loss_pamm = epoch_loss.loss_pamm;
        if (!val_enc.empty()) {
            auto [micro, macro] = validate_f1(params, vocab, h, val_enc, val_gold);
            rec.val_micro_f1 = micro;
            rec.val_macro_f1 = macro;
        }
        result.log.push_back(rec);

        nlohmann::json j;
        j["epoch"] = rec.epoch;
        j["loss_total"] = rec.loss_total;
        j["loss_hia"] = rec.loss_hia;
        j["loss_pamm"] = rec.loss_pamm;
        j["val_micro_f1"] = rec.val_micro_f1;
        j["val_macro_f1"] = rec.val_macro_f1;
        metrics << j.dump() << "\n";

        if (rec.val_macro_f1 > best_macro) {
            best_macro = rec.val_macro_f1;
            best = params;
            result.best_epoch = epoch;
            result.best_val_micro = rec.val_micro_f1;
            result.best_val_macro = rec.val_macro_f1;
        }
    }
    metrics.close();

    result.metrics_path = metrics_path;
    result.checkpoint_path = opts.out_dir + "/checkpoint.bin";
    result.vocab_path = opts.out_dir + "/vocab.tsv";
    save_checkpoint(result.checkpoint_path, best, vocab);
    vocab.save(result.vocab_path);
    return result;
}

}  // namespace pamm
