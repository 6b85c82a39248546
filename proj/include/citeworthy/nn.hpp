#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace citeworthy::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Mean of the embedding rows of token_ids; an empty list (padding sentence)
// encodes to the zero vector. Throws UnknownTokenId on an out-of-range id.
Vector sentence_encode(const std::vector<int>& token_ids, const Matrix& table);

// Accumulates d(loss)/d(table) for the mean pooling above; a token appearing
// twice receives the sum of both contributions.
void sentence_encode_backward(const std::vector<int>& token_ids, const Vector& dvec,
                              Matrix& dtable);

struct GateParams {
    Matrix w;  // input weight, H x D
    Matrix u;  // recurrent weight, H x H
    Matrix b;  // bias, H x 1
};

struct LstmCellParams {
    GateParams input, forget, output, candidate;

    Eigen::Index hidden() const { return input.w.rows(); }
    Eigen::Index input_dim() const { return input.w.cols(); }
};

struct BiLstmParams {
    LstmCellParams fwd, bwd;

    Eigen::Index hidden() const { return fwd.hidden(); }
    Eigen::Index input_dim() const { return fwd.input_dim(); }
};

BiLstmParams make_bilstm_params(Eigen::Index input_dim, Eigen::Index hidden);

// Per-direction activations recorded by the forward pass; column t holds
// step t of that direction's own time order.
struct LstmTrace {
    Matrix gate_i, gate_f, gate_o, gate_g;  // H x T
    Matrix cell, hidden;                    // H x T
};

struct BiLstmCache {
    Matrix xs;               // D x T, as passed in
    std::vector<char> mask;  // 1 = real position, 0 = padding
    LstmTrace fwd, bwd;
};

// Standard single-layer cell (sigmoid gates, tanh candidate/output), run in
// both directions; returns the 2H x T concatenation [h_fwd; h_bwd]. Masked
// positions are state pass-throughs (cell and hidden carry over unchanged)
// and read as zero columns in the output, so padding never perturbs the
// values or gradients at real positions.
Matrix bilstm_forward(const Matrix& xs, const BiLstmParams& params,
                      const std::vector<char>& mask, BiLstmCache* cache = nullptr);
Matrix bilstm_forward(const Matrix& xs, const BiLstmParams& params);

// Backprop through time. dh is 2H x T upstream gradient; returns D x T input
// gradient and accumulates parameter gradients into grads (which must be
// zero- or previously-accumulated tensors of matching shapes).
Matrix bilstm_backward(const Matrix& dh, const BiLstmParams& params,
                       const BiLstmCache& cache, BiLstmParams& grads);

// logits = W h + b with W: K x D, b: K x 1.
Vector feedforward_logits(const Vector& h, const Matrix& w, const Matrix& b);

struct SoftmaxResult {
    double loss = 0.0;
    Vector probs;
    Vector dlogits;  // softmax - one_hot(gold)
};

// Numerically stabilized by max subtraction. gold is the class index.
SoftmaxResult softmax_cross_entropy(const Vector& logits, int gold);

struct AdamConfig {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Matrix> m;  // first moments, shaped like the parameters
    std::vector<Matrix> v;  // second moments
    long t = 0;
    AdamConfig config;
};

AdamState make_adam_state(const std::vector<Matrix*>& params, AdamConfig config);

// One bias-corrected Adam update over an aligned parameter/gradient list.
void adam_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
               AdamState& state);

double global_grad_norm(const std::vector<const Matrix*>& grads);

// Scales all gradients so the global L2 norm is at most max_norm.
void clip_gradients(const std::vector<Matrix*>& grads, double max_norm);

// Named views over a parameter struct, for checkpoints and the optimizer.
struct NamedTensor {
    std::string name;
    Matrix* tensor;
};

std::vector<NamedTensor> tensors(BiLstmParams& params, const std::string& prefix);

// Debug-mode guard: aborts with a message if the tensor picked up NaN/Inf.
void debug_check_finite(const Matrix& m, const char* what);

}  // namespace citeworthy::nn
