#include "pamm/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace pamm::ad {

const Mat& Var::val() const { return tape->value(id); }

const Mat& Tape::value(int id) const { return nodes_[id].val(); }

const Mat& Tape::grad(int id) const { return nodes_[id].grad; }

Mat& Tape::grad_buf(int id) {
    Node& n = nodes_[id];
    if (n.grad.rows != n.val().rows || n.grad.cols != n.val().cols) {
        n.grad = Mat(n.val().rows, n.val().cols);
    }
    return n.grad;
}

Var Tape::push(Mat value, std::function<void(Tape&, const Mat&)> back) {
    Node n;
    n.owned = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(const Mat* value, Mat* grad_sink) {
    Node n;
    n.view = value;
    n.sink = grad_sink;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Mat value) {
    Node n;
    n.owned = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::matmul(Var a, Var b) {
    const Mat& av = a.val();
    const Mat& bv = b.val();
    if (av.cols != bv.rows) throw std::invalid_argument("matmul: dimension mismatch");
    Mat out(av.rows, bv.cols);
    matmul_acc(av, bv, out);
    const int ai = a.id, bi = b.id;
    return push(std::move(out), [ai, bi](Tape& t, const Mat& g) {
        matmul_nt_acc(g, t.value(bi), t.grad_buf(ai));  // dA += G B^T
        matmul_tn_acc(t.value(ai), g, t.grad_buf(bi));  // dB += A^T G
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    const Mat& av = a.val();
    const Mat& bv = b.val();
    if (av.cols != bv.cols) throw std::invalid_argument("matmul_nt: dimension mismatch");
    Mat out(av.rows, bv.rows);
    matmul_nt_acc(av, bv, out);
    const int ai = a.id, bi = b.id;
    return push(std::move(out), [ai, bi](Tape& t, const Mat& g) {
        matmul_acc(g, t.value(bi), t.grad_buf(ai));     // dA += G B
        matmul_tn_acc(g, t.value(ai), t.grad_buf(bi));  // dB += G^T A
    });
}

Var Tape::add(Var a, Var b) {
    const Mat& av = a.val();
    const Mat& bv = b.val();
    if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch");
    Mat out = av;
    for (size_t i = 0; i < out.size(); ++i) out.a[i] += bv.a[i];
    const int ai = a.id, bi = b.id;
    return push(std::move(out), [ai, bi](Tape& t, const Mat& g) {
        Mat& ga = t.grad_buf(ai);
        Mat& gb = t.grad_buf(bi);
        for (size_t i = 0; i < g.size(); ++i) {
            ga.a[i] += g.a[i];
            gb.a[i] += g.a[i];
        }
    });
}

Var Tape::add_row_broadcast(Var x, Var bias) {
    const Mat& xv = x.val();
    const Mat& bv = bias.val();
    if (bv.rows != 1 || bv.cols != xv.cols) {
        throw std::invalid_argument("add_row_broadcast: bias must be 1 x cols");
    }
    Mat out = xv;
    for (int i = 0; i < out.rows; ++i) {
        double* r = out.row(i);
        for (int j = 0; j < out.cols; ++j) r[j] += bv.a[j];
    }
    const int xi = x.id, bi = bias.id;
    return push(std::move(out), [xi, bi](Tape& t, const Mat& g) {
        Mat& gx = t.grad_buf(xi);
        Mat& gb = t.grad_buf(bi);
        for (size_t i = 0; i < g.size(); ++i) gx.a[i] += g.a[i];
        for (int i = 0; i < g.rows; ++i) {
            const double* r = g.row(i);
            for (int j = 0; j < g.cols; ++j) gb.a[j] += r[j];
        }
    });
}

Var Tape::scale(Var a, double c) {
    Mat out = a.val();
    for (auto& v : out.a) v *= c;
    const int ai = a.id;
    return push(std::move(out), [ai, c](Tape& t, const Mat& g) {
        Mat& ga = t.grad_buf(ai);
        for (size_t i = 0; i < g.size(); ++i) ga.a[i] += c * g.a[i];
    });
}

Var Tape::relu(Var a) {
    Mat out = a.val();
    for (auto& v : out.a) v = v > 0.0 ? v : 0.0;
    const int ai = a.id;
    return push(std::move(out), [ai](Tape& t, const Mat& g) {
        Mat& ga = t.grad_buf(ai);
        const Mat& x = t.value(ai);
        for (size_t i = 0; i < g.size(); ++i) {
            if (x.a[i] > 0.0) ga.a[i] += g.a[i];
        }
    });
}

Var Tape::softmax_rows(Var a, bool causal) {
    Mat out = a.val();
    softmax_rows_inplace(out, causal);
    const int ai = a.id;
    const int self = static_cast<int>(nodes_.size());
    return push(std::move(out), [ai, self, causal](Tape& t, const Mat& g) {
        const Mat& y = t.value(self);
        Mat& ga = t.grad_buf(ai);
        for (int i = 0; i < y.rows; ++i) {
            const int lim = causal ? std::min(i + 1, y.cols) : y.cols;
            const double* yi = y.row(i);
            const double* gi = g.row(i);
            double dot = 0.0;
            for (int j = 0; j < lim; ++j) dot += gi[j] * yi[j];
            double* gai = ga.row(i);
            for (int j = 0; j < lim; ++j) gai[j] += yi[j] * (gi[j] - dot);
        }
    });
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
    const Mat& xv = x.val();
    const Mat& gv = gain.val();
    const Mat& bv = bias.val();
    if (gv.rows != 1 || gv.cols != xv.cols || bv.rows != 1 || bv.cols != xv.cols) {
        throw std::invalid_argument("layer_norm: gain/bias must be 1 x cols");
    }
    const int d = xv.cols;
    auto xhat = std::make_shared<Mat>(xv.rows, d);
    auto inv_std = std::make_shared<std::vector<double>>(xv.rows);
    Mat out(xv.rows, d);
    for (int i = 0; i < xv.rows; ++i) {
        const double* r = xv.row(i);
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += r[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (r[j] - mean) * (r[j] - mean);
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[i] = is;
        double* xh = xhat->row(i);
        double* o = out.row(i);
        for (int j = 0; j < d; ++j) {
            xh[j] = (r[j] - mean) * is;
            o[j] = gv.a[j] * xh[j] + bv.a[j];
        }
    }
    const int xi = x.id, gi = gain.id, bi = bias.id;
    return push(std::move(out), [xi, gi, bi, xhat, inv_std](Tape& t, const Mat& g) {
        const Mat& gainv = t.value(gi);
        Mat& gx = t.grad_buf(xi);
        Mat& gg = t.grad_buf(gi);
        Mat& gb = t.grad_buf(bi);
        const int d = g.cols;
        for (int i = 0; i < g.rows; ++i) {
            const double* gr = g.row(i);
            const double* xh = xhat->row(i);
            const double is = (*inv_std)[i];
            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
            for (int j = 0; j < d; ++j) {
                gb.a[j] += gr[j];
                gg.a[j] += gr[j] * xh[j];
                const double dxh = gr[j] * gainv.a[j];
                sum_dxh += dxh;
                sum_dxh_xh += dxh * xh[j];
            }
            double* gxr = gx.row(i);
            for (int j = 0; j < d; ++j) {
                const double dxh = gr[j] * gainv.a[j];
                gxr[j] += is * (dxh - sum_dxh / d - xh[j] * sum_dxh_xh / d);
            }
        }
    });
}

Var Tape::embed_rows(Var table, std::vector<int> ids) {
    const Mat& tv = table.val();
    Mat out(static_cast<int>(ids.size()), tv.cols);
    for (size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] < 0 || ids[r] >= tv.rows) {
            throw std::out_of_range("embed_rows: id out of range");
        }
        const double* src = tv.row(ids[r]);
        double* dst = out.row(static_cast<int>(r));
        for (int j = 0; j < tv.cols; ++j) dst[j] = src[j];
    }
    const int ti = table.id;
    auto idv = std::make_shared<std::vector<int>>(std::move(ids));
    return push(std::move(out), [ti, idv](Tape& t, const Mat& g) {
        Mat& gt = t.grad_buf(ti);
        for (size_t r = 0; r < idv->size(); ++r) {
            double* dst = gt.row((*idv)[r]);
            const double* src = g.row(static_cast<int>(r));
            for (int j = 0; j < g.cols; ++j) dst[j] += src[j];
        }
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    const int rows = parts[0].val().rows;
    int total = 0;
    for (const auto& p : parts) {
        if (p.val().rows != rows) throw std::invalid_argument("concat_cols: row mismatch");
        total += p.val().cols;
    }
    Mat out(rows, total);
    int off = 0;
    std::vector<int> ids;
    std::vector<int> offsets;
    std::vector<int> widths;
    for (const auto& p : parts) {
        const Mat& pv = p.val();
        for (int i = 0; i < rows; ++i) {
            const double* src = pv.row(i);
            double* dst = out.row(i) + off;
            for (int j = 0; j < pv.cols; ++j) dst[j] = src[j];
        }
        ids.push_back(p.id);
        offsets.push_back(off);
        widths.push_back(pv.cols);
        off += pv.cols;
    }
    return push(std::move(out), [ids, offsets, widths](Tape& t, const Mat& g) {
        for (size_t k = 0; k < ids.size(); ++k) {
            Mat& gp = t.grad_buf(ids[k]);
            for (int i = 0; i < g.rows; ++i) {
                const double* src = g.row(i) + offsets[k];
                double* dst = gp.row(i);
                for (int j = 0; j < widths[k]; ++j) dst[j] += src[j];
            }
        }
    });
}

Var Tape::mul_mask(Var a, Mat mask) {
    const Mat& av = a.val();
    if (!av.same_shape(mask)) throw std::invalid_argument("mul_mask: shape mismatch");
    Mat out = av;
    for (size_t i = 0; i < out.size(); ++i) out.a[i] *= mask.a[i];
    const int ai = a.id;
    auto mk = std::make_shared<Mat>(std::move(mask));
    return push(std::move(out), [ai, mk](Tape& t, const Mat& g) {
        Mat& ga = t.grad_buf(ai);
        for (size_t i = 0; i < g.size(); ++i) ga.a[i] += g.a[i] * mk->a[i];
    });
}

Var Tape::cross_entropy_mean(Var logits, std::vector<int> gold) {
    const Mat& lv = logits.val();
    if (static_cast<int>(gold.size()) != lv.rows) {
        throw std::invalid_argument("cross_entropy_mean: gold length mismatch");
    }
    auto probs = std::make_shared<Mat>(lv);
    softmax_rows_inplace(*probs, /*causal=*/false);
    int counted = 0;
    double total = 0.0;
    for (int i = 0; i < lv.rows; ++i) {
        if (gold[i] < 0) continue;
        if (gold[i] >= lv.cols) throw std::out_of_range("cross_entropy_mean: gold id out of range");
        ++counted;
        // log-softmax via max subtraction, recomputed for numerical honesty
        const double* r = lv.row(i);
        double mx = r[0];
        for (int j = 1; j < lv.cols; ++j) mx = std::max(mx, r[j]);
        double lse = 0.0;
        for (int j = 0; j < lv.cols; ++j) lse += std::exp(r[j] - mx);
        total += -(r[gold[i]] - mx - std::log(lse));
    }
    if (counted == 0) throw std::invalid_argument("cross_entropy_mean: nothing to score");
    Mat out(1, 1);
    out.a[0] = total / counted;
    const int li = logits.id;
    auto goldv = std::make_shared<std::vector<int>>(std::move(gold));
    return push(std::move(out), [li, goldv, probs, counted](Tape& t, const Mat& g) {
        Mat& gl = t.grad_buf(li);
        const double scale = g.a[0] / counted;
        for (int i = 0; i < gl.rows; ++i) {
            const int y = (*goldv)[i];
            if (y < 0) continue;
            const double* p = probs->row(i);
            double* gr = gl.row(i);
            for (int j = 0; j < gl.cols; ++j) gr[j] += scale * p[j];
            gr[y] -= scale;
        }
    });
}

Var Tape::off_path_sum(Var score, Mat mask01, std::vector<int> rows) {
    const Mat& sv = score.val();
    if (!sv.same_shape(mask01)) throw std::invalid_argument("off_path_sum: shape mismatch");
    double total = 0.0;
    for (int i : rows) {
        double on_path = 0.0;
        const double* sr = sv.row(i);
        const double* mr = mask01.row(i);
        for (int j = 0; j < sv.cols; ++j) on_path += sr[j] * mr[j];
        total += 1.0 - on_path;
    }
    Mat out(1, 1);
    out.a[0] = total;
    const int si = score.id;
    auto mk = std::make_shared<Mat>(std::move(mask01));
    auto rws = std::make_shared<std::vector<int>>(std::move(rows));
    return push(std::move(out), [si, mk, rws](Tape& t, const Mat& g) {
        Mat& gs = t.grad_buf(si);
        for (int i : *rws) {
            const double* mr = mk->row(i);
            double* gr = gs.row(i);
            for (int j = 0; j < gs.cols; ++j) gr[j] -= g.a[0] * mr[j];
        }
    });
}

void Tape::backward(Var root) {
    if (root.tape != this) throw std::invalid_argument("backward: foreign var");
    const Mat& rv = value(root.id);
    if (rv.rows != 1 || rv.cols != 1) {
        throw std::invalid_argument("backward: root must be scalar");
    }
    for (int i = 0; i <= root.id; ++i) {
        Node& n = nodes_[i];
        n.grad = Mat(n.val().rows, n.val().cols);
    }
    nodes_[root.id].grad.a[0] = 1.0;
    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.back) n.back(*this, n.grad);
    }
    // Flush leaf gradients into their external sinks.
    for (int i = 0; i <= root.id; ++i) {
        Node& n = nodes_[i];
        if (n.sink) {
            for (size_t k = 0; k < n.grad.size(); ++k) n.sink->a[k] += n.grad.a[k];
        }
    }
}

}  // namespace pamm::ad
