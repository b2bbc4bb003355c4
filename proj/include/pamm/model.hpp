#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pamm/autodiff.hpp"
#include "pamm/labelseq.hpp"
#include "pamm/mat.hpp"

namespace pamm {

struct ModelConfig {
    int d_model = 64;
    int heads = 4;
    int blocks = 2;
    int d_ff = 128;
    int vocab_size = 0;
    int max_src_len = 300;
    int max_tgt_len = 60;
    double dropout = 0.1;

    int d_head() const { return d_model / heads; }
    void validate() const;
};

struct AttnParams {
    std::vector<Mat> wq, wk, wv;  // per head, d_model x d_head
    Mat wo;                       // d_model x d_model
};

struct EncBlockParams {
    Mat ln1_g, ln1_b;
    AttnParams attn;
    Mat ln2_g, ln2_b;
    Mat w1, b1, w2, b2;
};

struct DecBlockParams {
    Mat ln1_g, ln1_b;
    AttnParams self_attn;
    Mat ln2_g, ln2_b;
    AttnParams cross_attn;
    Mat ln3_g, ln3_b;
    Mat w1, b1, w2, b2;
};

struct ModelParams {
    ModelConfig cfg;
    Mat tok_emb;  // vocab x d_model, shared by encoder and decoder inputs
    Mat pos_emb;  // max(max_src_len, max_tgt_len + 1) x d_model
    std::vector<EncBlockParams> enc;
    std::vector<DecBlockParams> dec;
    Mat enc_ln_g, enc_ln_b;
    Mat dec_ln_g, dec_ln_b;
    Mat w3, b3;  // d_model x vocab, 1 x vocab

    static ModelParams init(const ModelConfig& cfg, uint64_t seed);
    static ModelParams zeros_like(const ModelParams& other);

    // Visits every tensor with a stable name; the one traversal order used by
    // the optimizer, checkpoints and the finite-difference checks.
    template <class F>
    void for_each(F&& f) {
        const_cast<const ModelParams*>(this)->for_each(
            [&](const std::string& name, const Mat& m) { f(name, const_cast<Mat&>(m)); });
    }
    template <class F>
    void for_each(F&& f) const {
        f("tok_emb", tok_emb);
        f("pos_emb", pos_emb);
        auto attn = [&](const std::string& p, const AttnParams& a) {
            for (size_t h = 0; h < a.wq.size(); ++h) {
                const std::string hs = std::to_string(h);
                f(p + ".wq" + hs, a.wq[h]);
                f(p + ".wk" + hs, a.wk[h]);
                f(p + ".wv" + hs, a.wv[h]);
            }
            f(p + ".wo", a.wo);
        };
        for (size_t b = 0; b < enc.size(); ++b) {
            const std::string p = "enc" + std::to_string(b);
            f(p + ".ln1_g", enc[b].ln1_g);
            f(p + ".ln1_b", enc[b].ln1_b);
            attn(p + ".attn", enc[b].attn);
            f(p + ".ln2_g", enc[b].ln2_g);
            f(p + ".ln2_b", enc[b].ln2_b);
            f(p + ".w1", enc[b].w1);
            f(p + ".b1", enc[b].b1);
            f(p + ".w2", enc[b].w2);
            f(p + ".b2", enc[b].b2);
        }
        for (size_t b = 0; b < dec.size(); ++b) {
            const std::string p = "dec" + std::to_string(b);
            f(p + ".ln1_g", dec[b].ln1_g);
            f(p + ".ln1_b", dec[b].ln1_b);
            attn(p + ".self", dec[b].self_attn);
            f(p + ".ln2_g", dec[b].ln2_g);
            f(p + ".ln2_b", dec[b].ln2_b);
            attn(p + ".cross", dec[b].cross_attn);
            f(p + ".ln3_g", dec[b].ln3_g);
            f(p + ".ln3_b", dec[b].ln3_b);
            f(p + ".w1", dec[b].w1);
            f(p + ".b1", dec[b].b1);
            f(p + ".w2", dec[b].w2);
            f(p + ".b2", dec[b].b2);
        }
        if (!enc.empty()) {
            f("enc_ln_g", enc_ln_g);
            f("enc_ln_b", enc_ln_b);
        }
        if (!dec.empty()) {
            f("dec_ln_g", dec_ln_g);
            f("dec_ln_b", dec_ln_b);
        }
        f("w3", w3);
        f("b3", b3);
    }
};

// Captured during the decoder forward pass; what the path-mask loss consumes.
struct ForwardTrace {
    std::vector<std::vector<Mat>> self_scores;  // [block][head], n x n causal
    Mat decoder_out;                            // n x d_model
    Mat logits;                                 // n x vocab
};

// --- Pure forward API (no gradients kept) ---

// scores = softmax(Q K^T / sqrt(d_k)), future positions exactly 0 when causal;
// output = scores * V. Returns (output, scores).
std::pair<Mat, Mat> attention(const Mat& q, const Mat& k, const Mat& v, bool causal);

// Multi-head attention over already-embedded inputs; returns the projected
// output and every head's score matrix.
std::pair<Mat, std::vector<Mat>> multi_head(const Mat& x_q, const Mat& x_kv,
                                            const AttnParams& p, bool causal);

Mat ffn(const Mat& x, const Mat& w1, const Mat& b1, const Mat& w2, const Mat& b2);

Mat encoder_forward(const ModelParams& p, const std::vector<int>& src_ids);
ForwardTrace decoder_forward(const ModelParams& p, const std::vector<int>& tgt_ids,
                             const Mat& enc_out);
Mat project_logits(const ModelParams& p, const Mat& decoder_out);

// --- Graph-building API (shared by training and the pure wrappers) ---

struct ParamVars {
    ad::Var tok_emb, pos_emb;
    struct Attn {
        std::vector<ad::Var> wq, wk, wv;
        ad::Var wo;
    };
    struct EncBlock {
        ad::Var ln1_g, ln1_b;
        Attn attn;
        ad::Var ln2_g, ln2_b;
        ad::Var w1, b1, w2, b2;
    };
    struct DecBlock {
        ad::Var ln1_g, ln1_b;
        Attn self_attn;
        ad::Var ln2_g, ln2_b;
        Attn cross_attn;
        ad::Var ln3_g, ln3_b;
        ad::Var w1, b1, w2, b2;
    };
    std::vector<EncBlock> enc;
    std::vector<DecBlock> dec;
    ad::Var enc_ln_g, enc_ln_b, dec_ln_g, dec_ln_b;
    ad::Var w3, b3;
};

// Binds every parameter tensor as a tape leaf; grads may be null.
ParamVars bind_params(ad::Tape& tape, const ModelParams& p, ModelParams* grads);

// Dropout source: null disables dropout (inference, checks).
struct DropoutRng {
    std::mt19937_64* rng = nullptr;
    double rate = 0.0;
};

ad::Var encoder_graph(ad::Tape& tape, const ModelConfig& cfg, const ParamVars& pv,
                      const std::vector<int>& src_ids, DropoutRng drop = {});

struct DecoderGraph {
    std::vector<std::vector<ad::Var>> self_scores;  // [block][head]
    ad::Var decoder_out;
    ad::Var logits;
};

DecoderGraph decoder_graph(ad::Tape& tape, const ModelConfig& cfg, const ParamVars& pv,
                           const std::vector<int>& tgt_ids, ad::Var enc_out,
                           DropoutRng drop = {});

// --- Checkpoint I/O: self-describing binary, bit-exact round trip ---

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const Vocabulary& vocab);
std::pair<ModelParams, Vocabulary> load_checkpoint(const std::string& path);

}  // namespace pamm
