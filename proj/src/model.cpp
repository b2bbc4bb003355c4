#include "pamm/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

namespace pamm {

void ModelConfig::validate() const {
    if (d_model < 1 || heads < 1 || d_ff < 1 || vocab_size < 1) {
        throw std::invalid_argument("model dimensions must be >= 1");
    }
    if (blocks < 0) throw std::invalid_argument("blocks must be >= 0");
    if (d_model % heads != 0) {
        throw std::invalid_argument("d_model must be divisible by the head count");
    }
    if (max_src_len < 1 || max_tgt_len < 1) {
        throw std::invalid_argument("sequence limits must be >= 1");
    }
    if (dropout < 0.0 || dropout >= 1.0) {
        throw std::invalid_argument("dropout must be in [0, 1)");
    }
}

namespace {

ModelParams alloc_params(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p;
    p.cfg = cfg;
    const int d = cfg.d_model;
    p.tok_emb = Mat(cfg.vocab_size, d);
    p.pos_emb = Mat(std::max(cfg.max_src_len, cfg.max_tgt_len + 1), d);
    auto attn = [&] {
        AttnParams a;
        for (int h = 0; h < cfg.heads; ++h) {
            a.wq.emplace_back(d, cfg.d_head());
            a.wk.emplace_back(d, cfg.d_head());
            a.wv.emplace_back(d, cfg.d_head());
        }
        a.wo = Mat(d, d);
        return a;
    };
    for (int b = 0; b < cfg.blocks; ++b) {
        EncBlockParams eb;
        eb.ln1_g = Mat(1, d);
        eb.ln1_b = Mat(1, d);
        eb.attn = attn();
        eb.ln2_g = Mat(1, d);
        eb.ln2_b = Mat(1, d);
        eb.w1 = Mat(d, cfg.d_ff);
        eb.b1 = Mat(1, cfg.d_ff);
        eb.w2 = Mat(cfg.d_ff, d);
        eb.b2 = Mat(1, d);
        p.enc.push_back(std::move(eb));

        DecBlockParams db;
        db.ln1_g = Mat(1, d);
        db.ln1_b = Mat(1, d);
        db.self_attn = attn();
        db.ln2_g = Mat(1, d);
        db.ln2_b = Mat(1, d);
        db.cross_attn = attn();
        db.ln3_g = Mat(1, d);
        db.ln3_b = Mat(1, d);
        db.w1 = Mat(d, cfg.d_ff);
        db.b1 = Mat(1, cfg.d_ff);
        db.w2 = Mat(cfg.d_ff, d);
        db.b2 = Mat(1, d);
        p.dec.push_back(std::move(db));
    }
    if (cfg.blocks > 0) {
        p.enc_ln_g = Mat(1, d);
        p.enc_ln_b = Mat(1, d);
        p.dec_ln_g = Mat(1, d);
        p.dec_ln_b = Mat(1, d);
    }
    p.w3 = Mat(d, cfg.vocab_size);
    p.b3 = Mat(1, cfg.vocab_size);
    return p;
}

bool is_gain(const std::string& name) {
    return name.size() >= 2 && name.compare(name.size() - 2, 2, "_g") == 0;
}

bool is_bias(const std::string& name) {
    if (name.size() >= 2 && name.compare(name.size() - 2, 2, "_b") == 0) return true;
    auto base = name.rfind('.');
    const std::string leaf = base == std::string::npos ? name : name.substr(base + 1);
    return leaf == "b1" || leaf == "b2" || leaf == "b3";
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, uint64_t seed) {
    ModelParams p = alloc_params(cfg);
    std::mt19937_64 rng(seed);
    p.for_each([&](const std::string& name, Mat& m) {
        if (name == "tok_emb" || name == "pos_emb") {
            m = gaussian(m.rows, m.cols, 0.02, rng);
        } else if (is_gain(name)) {
            std::fill(m.a.begin(), m.a.end(), 1.0);
        } else if (is_bias(name)) {
            m.zero();
        } else {
            m = xavier_uniform(m.rows, m.cols, rng);
        }
    });
    return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
    return alloc_params(other.cfg);
}

ParamVars bind_params(ad::Tape& tape, const ModelParams& p, ModelParams* grads) {
    ParamVars pv;
    std::map<std::string, Mat*> sinks;
    if (grads) {
        grads->for_each([&](const std::string& name, Mat& m) { sinks[name] = &m; });
    }
    auto bind = [&](const std::string& name, const Mat& m) {
        return tape.leaf(&m, grads ? sinks.at(name) : nullptr);
    };
    pv.tok_emb = bind("tok_emb", p.tok_emb);
    pv.pos_emb = bind("pos_emb", p.pos_emb);
    auto bind_attn = [&](const std::string& prefix, const AttnParams& a) {
        ParamVars::Attn out;
        for (size_t h = 0; h < a.wq.size(); ++h) {
            const std::string hs = std::to_string(h);
            out.wq.push_back(bind(prefix + ".wq" + hs, a.wq[h]));
            out.wk.push_back(bind(prefix + ".wk" + hs, a.wk[h]));
            out.wv.push_back(bind(prefix + ".wv" + hs, a.wv[h]));
        }
        out.wo = bind(prefix + ".wo", a.wo);
        return out;
    };
    for (size_t b = 0; b < p.enc.size(); ++b) {
        const std::string pre = "enc" + std::to_string(b);
        ParamVars::EncBlock eb;
        eb.ln1_g = bind(pre + ".ln1_g", p.enc[b].ln1_g);
        eb.ln1_b = bind(pre + ".ln1_b", p.enc[b].ln1_b);
        eb.attn = bind_attn(pre + ".attn", p.enc[b].attn);
        eb.ln2_g = bind(pre + ".ln2_g", p.enc[b].ln2_g);
        eb.ln2_b = bind(pre + ".ln2_b", p.enc[b].ln2_b);
        eb.w1 = bind(pre + ".w1", p.enc[b].w1);
        eb.b1 = bind(pre + ".b1", p.enc[b].b1);
        eb.w2 = bind(pre + ".w2", p.enc[b].w2);
        eb.b2 = bind(pre + ".b2", p.enc[b].b2);
        pv.enc.push_back(std::move(eb));
    }
    for (size_t b = 0; b < p.dec.size(); ++b) {
        const std::string pre = "dec" + std::to_string(b);
        ParamVars::DecBlock db;
        db.ln1_g = bind(pre + ".ln1_g", p.dec[b].ln1_g);
        db.ln1_b = bind(pre + ".ln1_b", p.dec[b].ln1_b);
        db.self_attn = bind_attn(pre + ".self", p.dec[b].self_attn);
        db.ln2_g = bind(pre + ".ln2_g", p.dec[b].ln2_g);
        db.ln2_b = bind(pre + ".ln2_b", p.dec[b].ln2_b);
        db.cross_attn = bind_attn(pre + ".cross", p.dec[b].cross_attn);
        db.ln3_g = bind(pre + ".ln3_g", p.dec[b].ln3_g);
        db.ln3_b = bind(pre + ".ln3_b", p.dec[b].ln3_b);
        db.w1 = bind(pre + ".w1", p.dec[b].w1);
        db.b1 = bind(pre + ".b1", p.dec[b].b1);
        db.w2 = bind(pre + ".w2", p.dec[b].w2);
        db.b2 = bind(pre + ".b2", p.dec[b].b2);
        pv.dec.push_back(std::move(db));
    }
    if (!p.enc.empty()) {
        pv.enc_ln_g = bind("enc_ln_g", p.enc_ln_g);
        pv.enc_ln_b = bind("enc_ln_b", p.enc_ln_b);
    }
    if (!p.dec.empty()) {
        pv.dec_ln_g = bind("dec_ln_g", p.dec_ln_g);
        pv.dec_ln_b = bind("dec_ln_b", p.dec_ln_b);
    }
    pv.w3 = bind("w3", p.w3);
    pv.b3 = bind("b3", p.b3);
    return pv;
}

namespace {

ad::Var maybe_dropout(ad::Tape& tape, ad::Var x, DropoutRng drop) {
    if (!drop.rng || drop.rate <= 0.0) return x;
    const double keep = 1.0 - drop.rate;
    Mat mask(x.rows(), x.cols());
    std::bernoulli_distribution dist(keep);
    for (auto& v : mask.a) v = dist(*drop.rng) ? 1.0 / keep : 0.0;
    return tape.mul_mask(x, std::move(mask));
}

// Q,K,V projections per head, scaled dot-product scores, concat, W^O.
std::pair<ad::Var, std::vector<ad::Var>> multi_head_graph(ad::Tape& tape, ad::Var x_q,
                                                          ad::Var x_kv,
                                                          const ParamVars::Attn& a,
                                                          bool causal) {
    std::vector<ad::Var> heads;
    std::vector<ad::Var> scores;
    for (size_t h = 0; h < a.wq.size(); ++h) {
        ad::Var q = tape.matmul(x_q, a.wq[h]);
        ad::Var k = tape.matmul(x_kv, a.wk[h]);
        ad::Var v = tape.matmul(x_kv, a.wv[h]);
        const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(k.cols()));
        ad::Var s = tape.softmax_rows(tape.scale(tape.matmul_nt(q, k), inv_sqrt_dk), causal);
        scores.push_back(s);
        heads.push_back(tape.matmul(s, v));
    }
    ad::Var cat = heads.size() == 1 ? heads[0] : tape.concat_cols(heads);
    return {tape.matmul(cat, a.wo), scores};
}

ad::Var ffn_graph(ad::Tape& tape, ad::Var x, ad::Var w1, ad::Var b1, ad::Var w2, ad::Var b2) {
    ad::Var h = tape.relu(tape.add_row_broadcast(tape.matmul(x, w1), b1));
    return tape.add_row_broadcast(tape.matmul(h, w2), b2);
}

ad::Var embed_sequence(ad::Tape& tape, const ParamVars& pv, const std::vector<int>& ids) {
    std::vector<int> positions(ids.size());
    std::iota(positions.begin(), positions.end(), 0);
    return tape.add(tape.embed_rows(pv.tok_emb, ids), tape.embed_rows(pv.pos_emb, positions));
}

}  // namespace

ad::Var encoder_graph(ad::Tape& tape, const ModelConfig& cfg, const ParamVars& pv,
                      const std::vector<int>& src_ids, DropoutRng drop) {
    if (src_ids.empty()) throw std::invalid_argument("encoder: empty input");
    if (static_cast<int>(src_ids.size()) > cfg.max_src_len) {
        throw std::invalid_argument("encoder: input longer than max_src_len");
    }
    ad::Var h = embed_sequence(tape, pv, src_ids);
    for (const auto& blk : pv.enc) {
        ad::Var normed = tape.layer_norm(h, blk.ln1_g, blk.ln1_b);
        auto [attn_out, scores] =
            multi_head_graph(tape, normed, normed, blk.attn, /*causal=*/false);
        (void)scores;
        h = tape.add(h, maybe_dropout(tape, attn_out, drop));
        ad::Var f = ffn_graph(tape, tape.layer_norm(h, blk.ln2_g, blk.ln2_b), blk.w1, blk.b1,
                              blk.w2, blk.b2);
        h = tape.add(h, maybe_dropout(tape, f, drop));
    }
    if (!pv.enc.empty()) h = tape.layer_norm(h, pv.enc_ln_g, pv.enc_ln_b);
    return h;
}

DecoderGraph decoder_graph(ad::Tape& tape, const ModelConfig& cfg, const ParamVars& pv,
                           const std::vector<int>& tgt_ids, ad::Var enc_out, DropoutRng drop) {
    if (tgt_ids.empty()) throw std::invalid_argument("decoder: empty input");
    if (static_cast<int>(tgt_ids.size()) > cfg.max_tgt_len + 1) {
        throw std::invalid_argument("decoder: input longer than max_tgt_len");
    }
    DecoderGraph out;
    ad::Var h = embed_sequence(tape, pv, tgt_ids);
    for (const auto& blk : pv.dec) {
        ad::Var normed = tape.layer_norm(h, blk.ln1_g, blk.ln1_b);
        auto [self_out, self_scores] =
            multi_head_graph(tape, normed, normed, blk.self_attn, /*causal=*/true);
        out.self_scores.push_back(self_scores);
        h = tape.add(h, maybe_dropout(tape, self_out, drop));

        auto [cross_out, cross_scores] =
            multi_head_graph(tape, tape.layer_norm(h, blk.ln2_g, blk.ln2_b), enc_out,
                             blk.cross_attn, /*causal=*/false);
        (void)cross_scores;
        h = tape.add(h, maybe_dropout(tape, cross_out, drop));

        ad::Var f = ffn_graph(tape, tape.layer_norm(h, blk.ln3_g, blk.ln3_b), blk.w1, blk.b1,
                              blk.w2, blk.b2);
        h = tape.add(h, maybe_dropout(tape, f, drop));
    }
    if (!pv.dec.empty()) h = tape.layer_norm(h, pv.dec_ln_g, pv.dec_ln_b);
    out.decoder_out = h;
    out.logits = tape.add_row_broadcast(tape.matmul(h, pv.w3), pv.b3);
    return out;
}

std::pair<Mat, Mat> attention(const Mat& q, const Mat& k, const Mat& v, bool causal) {
    if (q.cols != k.cols) throw std::invalid_argument("attention: Q/K width mismatch");
    if (k.rows != v.rows) throw std::invalid_argument("attention: K/V row mismatch");
    Mat scores = matmul_nt(q, k);
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(k.cols));
    for (auto& s : scores.a) s *= inv_sqrt_dk;
    softmax_rows_inplace(scores, causal);
    return {matmul(scores, v), std::move(scores)};
}

std::pair<Mat, std::vector<Mat>> multi_head(const Mat& x_q, const Mat& x_kv,
                                            const AttnParams& p, bool causal) {
    const int heads = static_cast<int>(p.wq.size());
    if (heads == 0) throw std::invalid_argument("multi_head: no heads");
    std::vector<Mat> scores;
    Mat cat(x_q.rows, heads * p.wq[0].cols);
    for (int h = 0; h < heads; ++h) {
        auto [out, s] =
            attention(matmul(x_q, p.wq[h]), matmul(x_kv, p.wk[h]), matmul(x_kv, p.wv[h]), causal);
        for (int i = 0; i < out.rows; ++i) {
            std::memcpy(cat.row(i) + h * out.cols, out.row(i), sizeof(double) * out.cols);
        }
        scores.push_back(std::move(s));
    }
    return {matmul(cat, p.wo), std::move(scores)};
}

Mat ffn(const Mat& x, const Mat& w1, const Mat& b1, const Mat& w2, const Mat& b2) {
    Mat h = matmul(x, w1);
    for (int i = 0; i < h.rows; ++i) {
        double* r = h.row(i);
        for (int j = 0; j < h.cols; ++j) r[j] = std::max(0.0, r[j] + b1.a[j]);
    }
    Mat out = matmul(h, w2);
    for (int i = 0; i < out.rows; ++i) {
        double* r = out.row(i);
        for (int j = 0; j < out.cols; ++j) r[j] += b2.a[j];
    }
    return out;
}

Mat encoder_forward(const ModelParams& p, const std::vector<int>& src_ids) {
    ad::Tape tape;
    ParamVars pv = bind_params(tape, p, nullptr);
    return encoder_graph(tape, p.cfg, pv, src_ids).val();
}

ForwardTrace decoder_forward(const ModelParams& p, const std::vector<int>& tgt_ids,
                             const Mat& enc_out) {
    ad::Tape tape;
    ParamVars pv = bind_params(tape, p, nullptr);
    ad::Var enc = tape.constant(enc_out);
    DecoderGraph g = decoder_graph(tape, p.cfg, pv, tgt_ids, enc);
    ForwardTrace trace;
    for (const auto& blk : g.self_scores) {
        std::vector<Mat> block_scores;
        for (const auto& s : blk) block_scores.push_back(s.val());
        trace.self_scores.push_back(std::move(block_scores));
    }
    trace.decoder_out = g.decoder_out.val();
    trace.logits = g.logits.val();
    return trace;
}

Mat project_logits(const ModelParams& p, const Mat& decoder_out) {
    Mat logits = matmul(decoder_out, p.w3);
    for (int i = 0; i < logits.rows; ++i) {
        double* r = logits.row(i);
        for (int j = 0; j < logits.cols; ++j) r[j] += p.b3.a[j];
    }
    return logits;
}

// --- checkpoint ---

namespace {

void write_bytes(std::ofstream& out, const void* p, size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void write_i32(std::ofstream& out, int32_t v) { write_bytes(out, &v, 4); }
void write_f64(std::ofstream& out, double v) { write_bytes(out, &v, 8); }

void write_str(std::ofstream& out, const std::string& s) {
    write_i32(out, static_cast<int32_t>(s.size()));
    write_bytes(out, s.data(), s.size());
}

void read_bytes(std::ifstream& in, void* p, size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
}

int32_t read_i32(std::ifstream& in) {
    int32_t v;
    read_bytes(in, &v, 4);
    return v;
}

double read_f64(std::ifstream& in) {
    double v;
    read_bytes(in, &v, 8);
    return v;
}

std::string read_str(std::ifstream& in) {
    const int32_t n = read_i32(in);
    if (n < 0 || n > (1 << 20)) throw std::runtime_error("checkpoint: bad string length");
    std::string s(static_cast<size_t>(n), '\0');
    read_bytes(in, s.data(), s.size());
    return s;
}

constexpr char kMagic[8] = {'P', 'A', 'M', 'M', 'C', 'K', 'P', '1'};

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const Vocabulary& vocab) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    write_bytes(out, kMagic, 8);
    const ModelConfig& c = params.cfg;
    write_i32(out, c.d_model);
    write_i32(out, c.heads);
    write_i32(out, c.blocks);
    write_i32(out, c.d_ff);
    write_i32(out, c.vocab_size);
    write_i32(out, c.max_src_len);
    write_i32(out, c.max_tgt_len);
    write_f64(out, c.dropout);
    write_i32(out, vocab.size());
    for (int i = 0; i < vocab.size(); ++i) write_str(out, vocab.token(i));
    int32_t count = 0;
    params.for_each([&](const std::string&, const Mat&) { ++count; });
    write_i32(out, count);
    params.for_each([&](const std::string& name, const Mat& m) {
        write_str(out, name);
        write_i32(out, m.rows);
        write_i32(out, m.cols);
        write_bytes(out, m.a.data(), m.a.size() * sizeof(double));
    });
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

std::pair<ModelParams, Vocabulary> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    read_bytes(in, magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error("not a checkpoint file: " + path);
    }
    ModelConfig c;
    c.d_model = read_i32(in);
    c.heads = read_i32(in);
    c.blocks = read_i32(in);
    c.d_ff = read_i32(in);
    c.vocab_size = read_i32(in);
    c.max_src_len = read_i32(in);
    c.max_tgt_len = read_i32(in);
    c.dropout = read_f64(in);

    const int32_t vocab_n = read_i32(in);
    std::vector<std::string> tokens;
    tokens.reserve(static_cast<size_t>(vocab_n));
    for (int32_t i = 0; i < vocab_n; ++i) tokens.push_back(read_str(in));
    Vocabulary vocab = Vocabulary::from_tokens(tokens);
    if (vocab.size() != c.vocab_size) {
        throw std::runtime_error("checkpoint: vocabulary size mismatch");
    }

    ModelParams params = alloc_params(c);
    std::map<std::string, Mat*> tensors;
    params.for_each([&](const std::string& name, Mat& m) { tensors[name] = &m; });
    const int32_t count = read_i32(in);
    for (int32_t t = 0; t < count; ++t) {
        const std::string name = read_str(in);
        const int32_t rows = read_i32(in);
        const int32_t cols = read_i32(in);
        auto it = tensors.find(name);
        if (it == tensors.end()) throw std::runtime_error("checkpoint: unknown tensor " + name);
        Mat& m = *it->second;
        if (m.rows != rows || m.cols != cols) {
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
        }
        read_bytes(in, m.a.data(), m.a.size() * sizeof(double));
    }
    return {std::move(params), std::move(vocab)};
}

}  // namespace pamm
