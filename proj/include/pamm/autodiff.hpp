#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "pamm/mat.hpp"

namespace pamm::ad {

class Tape;

// Handle to a matrix-valued node on a tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Mat& val() const;
    int rows() const { return val().rows; }
    int cols() const { return val().cols; }
};

// Reverse-mode tape over matrix operations. Nodes are appended in evaluation
// order, so a single reverse sweep propagates gradients. Leaves may point at
// external parameter storage and accumulate their gradients into an external
// sink, which is what lets a batch share one set of gradient buffers.
class Tape {
public:
    // Leaf viewing external storage. grad_sink may be null (no gradient kept).
    Var leaf(const Mat* value, Mat* grad_sink);
    // Leaf owning a constant value; gradients are discarded.
    Var constant(Mat value);

    Var matmul(Var a, Var b);
    Var matmul_nt(Var a, Var b);  // a * b^T
    Var add(Var a, Var b);
    Var add_row_broadcast(Var x, Var bias);  // bias is 1 x cols
    Var scale(Var a, double c);
    Var relu(Var a);
    Var softmax_rows(Var a, bool causal);
    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
    Var embed_rows(Var table, std::vector<int> ids);
    Var concat_cols(const std::vector<Var>& parts);
    // Elementwise product with a fixed mask (dropout: entries 0 or 1/keep).
    Var mul_mask(Var a, Mat mask);

    // Mean over positions with gold >= 0 of -log softmax(logits)[gold].
    Var cross_entropy_mean(Var logits, std::vector<int> gold);
    // Sum over the given rows of (1 - sum_j score[i][j] * mask01[i][j]).
    Var off_path_sum(Var score, Mat mask01, std::vector<int> rows);

    void backward(Var root);

    const Mat& value(int id) const;
    const Mat& grad(int id) const;
    size_t node_count() const { return nodes_.size(); }

private:
    friend struct Var;

    struct Node {
        Mat owned;               // computed nodes and owning leaves
        const Mat* view = nullptr;  // external leaves
        Mat* sink = nullptr;     // external gradient accumulator
        Mat grad;                // scratch gradient, allocated in backward
        std::function<void(Tape&, const Mat&)> back;  // null for leaves

        const Mat& val() const { return view ? *view : owned; }
    };

    Var push(Mat value, std::function<void(Tape&, const Mat&)> back);
    Mat& grad_buf(int id);

    std::vector<Node> nodes_;
};

}  // namespace pamm::ad
