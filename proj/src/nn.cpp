#include "citeworthy/nn.hpp"

#include <cmath>

#include "citeworthy/error.hpp"

namespace citeworthy::nn {

namespace {

using Eigen::Index;
using Array = Eigen::ArrayXd;

Array sigmoid(const Array& x) { return 1.0 / (1.0 + (-x).exp()); }

void require(bool ok, ErrorCode code, const std::string& message) {
    if (!ok) throw Error(code, message);
}

}  // namespace

Vector sentence_encode(const std::vector<int>& token_ids, const Matrix& table) {
    Vector out = Vector::Zero(table.cols());
    if (token_ids.empty()) return out;
    for (int id : token_ids) {
        require(id >= 0 && id < table.rows(), ErrorCode::UnknownTokenId,
                "token id " + std::to_string(id) + " outside table of " +
                    std::to_string(table.rows()) + " rows");
        out += table.row(id).transpose();
    }
    return out / static_cast<double>(token_ids.size());
}

void sentence_encode_backward(const std::vector<int>& token_ids, const Vector& dvec,
                              Matrix& dtable) {
    if (token_ids.empty()) return;
    require(dvec.size() == dtable.cols(), ErrorCode::ShapeMismatch,
            "gradient width does not match the embedding width");
    const double scale = 1.0 / static_cast<double>(token_ids.size());
    for (int id : token_ids) {
        require(id >= 0 && id < dtable.rows(), ErrorCode::UnknownTokenId,
                "token id " + std::to_string(id) + " outside table");
        dtable.row(id) += scale * dvec.transpose();
    }
}

BiLstmParams make_bilstm_params(Index input_dim, Index hidden) {
    auto make_cell = [&] {
        LstmCellParams cell;
        for (GateParams* gate : {&cell.input, &cell.forget, &cell.output, &cell.candidate}) {
            gate->w = Matrix::Zero(hidden, input_dim);
            gate->u = Matrix::Zero(hidden, hidden);
            gate->b = Matrix::Zero(hidden, 1);
        }
        return cell;
    };
    return {make_cell(), make_cell()};
}

namespace {

void check_cell_shapes(const LstmCellParams& cell, Index input_dim, const char* which) {
    const Index hidden = cell.input.w.rows();
    for (const GateParams* gate :
         {&cell.input, &cell.forget, &cell.output, &cell.candidate}) {
        bool ok = gate->w.rows() == hidden && gate->w.cols() == input_dim &&
                  gate->u.rows() == hidden && gate->u.cols() == hidden &&
                  gate->b.rows() == hidden && gate->b.cols() == 1;
        require(ok, ErrorCode::ShapeMismatch,
                std::string(which) + " cell has inconsistent gate shapes");
    }
}

// One direction. Traces are stored at sequence positions (not processing
// order); masked positions carry the running state through unchanged so the
// recurrence ignores padding entirely.
void run_lstm(const Matrix& xs, const std::vector<char>& mask, const LstmCellParams& cell,
              bool reverse, LstmTrace& trace) {
    const Index T = xs.cols();
    const Index H = cell.hidden();
    for (Matrix* m : {&trace.gate_i, &trace.gate_f, &trace.gate_o, &trace.gate_g,
                      &trace.cell, &trace.hidden})
        *m = Matrix::Zero(H, T);

    Vector h = Vector::Zero(H);
    Vector c = Vector::Zero(H);
    for (Index k = 0; k < T; ++k) {
        const Index t = reverse ? T - 1 - k : k;
        if (!mask[static_cast<std::size_t>(t)]) {
            trace.cell.col(t) = c;
            trace.hidden.col(t) = h;
            continue;
        }
        const Vector x = xs.col(t);
        Array i = sigmoid((cell.input.w * x + cell.input.u * h + cell.input.b.col(0)).array());
        Array f = sigmoid((cell.forget.w * x + cell.forget.u * h + cell.forget.b.col(0)).array());
        Array o = sigmoid((cell.output.w * x + cell.output.u * h + cell.output.b.col(0)).array());
        Array g =
            (cell.candidate.w * x + cell.candidate.u * h + cell.candidate.b.col(0)).array().tanh();
        c = (f * c.array() + i * g).matrix();
        h = (o * c.array().tanh()).matrix();
        trace.gate_i.col(t) = i.matrix();
        trace.gate_f.col(t) = f.matrix();
        trace.gate_o.col(t) = o.matrix();
        trace.gate_g.col(t) = g.matrix();
        trace.cell.col(t) = c;
        trace.hidden.col(t) = h;
    }
}

}  // namespace

Matrix bilstm_forward(const Matrix& xs, const BiLstmParams& params,
                      const std::vector<char>& mask, BiLstmCache* cache) {
    const Index T = xs.cols();
    require(T > 0, ErrorCode::ShapeMismatch, "empty input sequence");
    require(params.fwd.input_dim() == xs.rows() && params.bwd.input_dim() == xs.rows(),
            ErrorCode::ShapeMismatch,
            "input width " + std::to_string(xs.rows()) + " does not match the cells");
    require(params.fwd.hidden() == params.bwd.hidden(), ErrorCode::ShapeMismatch,
            "forward/backward hidden sizes differ");
    check_cell_shapes(params.fwd, xs.rows(), "forward");
    check_cell_shapes(params.bwd, xs.rows(), "backward");
    require(mask.size() == static_cast<std::size_t>(T), ErrorCode::ShapeMismatch,
            "mask length does not match the sequence");

    BiLstmCache local;
    BiLstmCache& cc = cache ? *cache : local;
    cc.xs = xs;
    cc.mask = mask;
    run_lstm(xs, mask, params.fwd, /*reverse=*/false, cc.fwd);
    run_lstm(xs, mask, params.bwd, /*reverse=*/true, cc.bwd);

    const Index H = params.hidden();
    Matrix out = Matrix::Zero(2 * H, T);
    for (Index t = 0; t < T; ++t) {
        if (!mask[static_cast<std::size_t>(t)]) continue;  // padding reads as zero
        out.col(t).head(H) = cc.fwd.hidden.col(t);
        out.col(t).tail(H) = cc.bwd.hidden.col(t);
    }
    debug_check_finite(out, "bilstm_forward output");
    return out;
}

Matrix bilstm_forward(const Matrix& xs, const BiLstmParams& params) {
    std::vector<char> mask(static_cast<std::size_t>(xs.cols()), 1);
    return bilstm_forward(xs, params, mask);
}

namespace {

// BPTT through one direction. dh_direction is H x T upstream gradient on this
// direction's hidden outputs (already zero at masked positions).
void backprop_lstm(const Matrix& dh_direction, const LstmCellParams& cell,
                   const Matrix& xs, const std::vector<char>& mask, const LstmTrace& trace,
                   bool reverse, LstmCellParams& grads, Matrix& dx) {
    const Index T = xs.cols();
    const Index H = cell.hidden();

    std::vector<Index> order(static_cast<std::size_t>(T));
    for (Index k = 0; k < T; ++k) order[static_cast<std::size_t>(k)] = reverse ? T - 1 - k : k;

    Array dh_rec = Array::Zero(H);
    Array dc_rec = Array::Zero(H);
    for (Index k = T - 1; k >= 0; --k) {
        const Index t = order[static_cast<std::size_t>(k)];
        if (!mask[static_cast<std::size_t>(t)]) continue;  // state passes straight through

        const Index prev = k > 0 ? order[static_cast<std::size_t>(k - 1)] : -1;
        const Vector h_prev = prev >= 0 ? Vector(trace.hidden.col(prev)) : Vector::Zero(H);
        const Array c_prev =
            prev >= 0 ? Array(trace.cell.col(prev).array()) : Array::Zero(H);

        const Array i = trace.gate_i.col(t).array();
        const Array f = trace.gate_f.col(t).array();
        const Array o = trace.gate_o.col(t).array();
        const Array g = trace.gate_g.col(t).array();
        const Array tanh_c = trace.cell.col(t).array().tanh();

        const Array dh = dh_direction.col(t).array() + dh_rec;
        const Array dc = dc_rec + dh * o * (1.0 - tanh_c.square());
        const Array d_pre_o = dh * tanh_c * o * (1.0 - o);
        const Array d_pre_i = dc * g * i * (1.0 - i);
        const Array d_pre_f = dc * c_prev * f * (1.0 - f);
        const Array d_pre_g = dc * i * (1.0 - g.square());

        const Vector x = xs.col(t);
        struct GateSlice {
            const Array* d;
            const GateParams* p;
            GateParams* gp;
        };
        const GateSlice slices[] = {{&d_pre_i, &cell.input, &grads.input},
                                    {&d_pre_f, &cell.forget, &grads.forget},
                                    {&d_pre_o, &cell.output, &grads.output},
                                    {&d_pre_g, &cell.candidate, &grads.candidate}};
        Array dh_next = Array::Zero(H);
        for (const auto& s : slices) {
            const Vector d = s.d->matrix();
            s.gp->w += d * x.transpose();
            s.gp->u += d * h_prev.transpose();
            s.gp->b.col(0) += d;
            dx.col(t) += s.p->w.transpose() * d;
            dh_next += (s.p->u.transpose() * d).array();
        }
        dh_rec = dh_next;
        dc_rec = dc * f;
    }
}

}  // namespace

Matrix bilstm_backward(const Matrix& dh, const BiLstmParams& params, const BiLstmCache& cache,
                       BiLstmParams& grads) {
    const Index T = cache.xs.cols();
    const Index H = params.hidden();
    require(dh.rows() == 2 * H && dh.cols() == T, ErrorCode::GraphMismatch,
            "upstream gradient shape does not match the recorded forward pass");
    require(cache.mask.size() == static_cast<std::size_t>(T), ErrorCode::GraphMismatch,
            "cache mask does not match the recorded forward pass");
    require(grads.fwd.hidden() == H && grads.fwd.input_dim() == cache.xs.rows(),
            ErrorCode::ShapeMismatch, "gradient accumulator shapes do not match");

    Matrix dx = Matrix::Zero(cache.xs.rows(), T);
    Matrix dh_fwd = dh.topRows(H);
    Matrix dh_bwd = dh.bottomRows(H);
    for (Index t = 0; t < T; ++t) {
        if (!cache.mask[static_cast<std::size_t>(t)]) {
            dh_fwd.col(t).setZero();
            dh_bwd.col(t).setZero();
        }
    }
    backprop_lstm(dh_fwd, params.fwd, cache.xs, cache.mask, cache.fwd, /*reverse=*/false,
                  grads.fwd, dx);
    backprop_lstm(dh_bwd, params.bwd, cache.xs, cache.mask, cache.bwd, /*reverse=*/true,
                  grads.bwd, dx);
    debug_check_finite(dx, "bilstm_backward input gradient");
    return dx;
}

Vector feedforward_logits(const Vector& h, const Matrix& w, const Matrix& b) {
    require(w.cols() == h.size(), ErrorCode::ShapeMismatch,
            "weight has " + std::to_string(w.cols()) + " columns for input of " +
                std::to_string(h.size()));
    require(b.rows() == w.rows() && b.cols() == 1, ErrorCode::ShapeMismatch,
            "bias shape does not match the weight rows");
    return w * h + b.col(0);
}

SoftmaxResult softmax_cross_entropy(const Vector& logits, int gold) {
    require(logits.allFinite(), ErrorCode::NonFiniteInput, "non-finite logits");
    require(gold >= 0 && gold < logits.size(), ErrorCode::ShapeMismatch,
            "gold class " + std::to_string(gold) + " out of range");
    const double max = logits.maxCoeff();
    Array shifted = logits.array() - max;
    Array exps = shifted.exp();
    const double denom = exps.sum();

    SoftmaxResult result;
    result.probs = (exps / denom).matrix();
    result.loss = std::log(denom) - shifted(gold);
    result.dlogits = result.probs;
    result.dlogits(gold) -= 1.0;
    return result;
}

AdamState make_adam_state(const std::vector<Matrix*>& params, AdamConfig config) {
    AdamState state;
    state.config = config;
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const Matrix* p : params) {
        state.m.push_back(Matrix::Zero(p->rows(), p->cols()));
        state.v.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
    return state;
}

void adam_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
               AdamState& state) {
    require(params.size() == grads.size() && params.size() == state.m.size(),
            ErrorCode::ShapeMismatch, "parameter/gradient/state counts differ");
    state.t += 1;
    const auto& cfg = state.config;
    const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& p = *params[k];
        const Matrix& g = *grads[k];
        require(p.rows() == g.rows() && p.cols() == g.cols(), ErrorCode::ShapeMismatch,
                "gradient shape does not match its parameter");
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        Matrix m_hat = state.m[k] / bias1;
        Matrix v_hat = state.v[k] / bias2;
        p.array() -= cfg.lr * m_hat.array() / (v_hat.array().sqrt() + cfg.eps);
        debug_check_finite(p, "parameter after adam_step");
    }
}

double global_grad_norm(const std::vector<const Matrix*>& grads) {
    double sum = 0.0;
    for (const Matrix* g : grads) sum += g->squaredNorm();
    return std::sqrt(sum);
}

void clip_gradients(const std::vector<Matrix*>& grads, double max_norm) {
    std::vector<const Matrix*> view(grads.begin(), grads.end());
    const double norm = global_grad_norm(view);
    if (norm <= max_norm || norm == 0.0) return;
    const double scale = max_norm / norm;
    for (Matrix* g : grads) *g *= scale;
}

std::vector<NamedTensor> tensors(BiLstmParams& params, const std::string& prefix) {
    std::vector<NamedTensor> out;
    auto add_cell = [&](LstmCellParams& cell, const std::string& dir) {
        const std::pair<const char*, GateParams*> gates[] = {{"input", &cell.input},
                                                             {"forget", &cell.forget},
                                                             {"output", &cell.output},
                                                             {"candidate", &cell.candidate}};
        for (const auto& [name, gate] : gates) {
            const std::string base = prefix + "." + dir + "." + name;
            out.push_back({base + ".w", &gate->w});
            out.push_back({base + ".u", &gate->u});
            out.push_back({base + ".b", &gate->b});
        }
    };
    add_cell(params.fwd, "fwd");
    add_cell(params.bwd, "bwd");
    return out;
}

void debug_check_finite(const Matrix& m, const char* what) {
#ifndef NDEBUG
    if (!m.allFinite()) throw Error(ErrorCode::NonFiniteInput, what);
#else
    (void)m;
    (void)what;
#endif
}

}  // namespace citeworthy::nn
