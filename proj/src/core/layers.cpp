#include "core/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hsrnn {

namespace {

Tensor row_of(const Tensor& m, std::size_t i) {
    const std::size_t n = m.extent(1);
    Tensor r({n});
    const double* src = m.data() + i * n;
    std::copy(src, src + n, r.data());
    return r;
}

void set_row(Tensor& m, std::size_t i, const Tensor& r) {
    const std::size_t n = m.extent(1);
    std::copy(r.data(), r.data() + n, m.data() + i * n);
}

void check_vector(const Tensor& v, std::size_t n, const char* what) {
    if (v.rank() != 1 || v.extent(0) != n) {
        throw DimensionError(std::string(what) + ": expected (" + std::to_string(n) +
                             "), got " + v.shape_string());
    }
}

void check_sequence(const Tensor& xs, std::size_t input, const char* what) {
    if (xs.rank() != 2) {
        throw ArgumentError(std::string(what) + ": expected a T x I sequence, got " +
                            xs.shape_string());
    }
    if (xs.extent(1) != input) {
        throw DimensionError(std::string(what) + ": input size " +
                             std::to_string(xs.extent(1)) + " does not match cell input " +
                             std::to_string(input));
    }
}

// pre = W x + U h + b
Tensor affine_gate(const Tensor& W, const Tensor& U, const Tensor& b, const Tensor& x,
                   const Tensor& h) {
    Tensor pre = matvec(W, x);
    add_inplace(pre, matvec(U, h));
    add_inplace(pre, b);
    return pre;
}

struct GruStep {
    Tensor z, r, rh, htil, h;
};

GruStep gru_step(const GruCellParams& p, const Tensor& x, const Tensor& h_prev) {
    GruStep s;
    s.z = sigmoid(affine_gate(p.W_z, p.U_z, p.b_z, x, h_prev));
    s.r = sigmoid(affine_gate(p.W_r, p.U_r, p.b_r, x, h_prev));
    s.rh = hadamard(s.r, h_prev);
    s.htil = tanh_act(affine_gate(p.W_h, p.U_h, p.b_h, x, s.rh));
    const std::size_t H = p.hidden_size();
    s.h = Tensor({H});
    for (std::size_t i = 0; i < H; ++i) {
        s.h[i] = (1.0 - s.z[i]) * h_prev[i] + s.z[i] * s.htil[i];
    }
    return s;
}

struct LstmStep {
    Tensor f, i, o, ctil, c, tanh_c, h;
};

LstmStep lstm_step(const LstmCellParams& p, const Tensor& x, const Tensor& h_prev,
                   const Tensor& c_prev) {
    LstmStep s;
    s.f = sigmoid(affine_gate(p.W_f, p.U_f, p.b_f, x, h_prev));
    s.i = sigmoid(affine_gate(p.W_i, p.U_i, p.b_i, x, h_prev));
    s.o = sigmoid(affine_gate(p.W_o, p.U_o, p.b_o, x, h_prev));
    s.ctil = tanh_act(affine_gate(p.W_c, p.U_c, p.b_c, x, h_prev));
    const std::size_t H = p.hidden_size();
    s.c = Tensor({H});
    for (std::size_t k = 0; k < H; ++k) s.c[k] = s.i[k] * s.ctil[k] + s.f[k] * c_prev[k];
    s.tanh_c = tanh_act(s.c);
    s.h = hadamard(s.o, s.tanh_c);
    return s;
}

Tensor rnn_step(const RnnCellParams& p, const Tensor& x, const Tensor& h_prev) {
    return apply_activation(affine_gate(p.W_h, p.U_h, p.b_h, x, h_prev), p.activation);
}

void check_block(const Tensor& t, std::size_t r, std::size_t c, const char* name) {
    if (t.rank() != 2 || t.extent(0) != r || t.extent(1) != c) {
        throw ConfigError(std::string(name) + " has shape " + t.shape_string() +
                          ", expected (" + std::to_string(r) + "x" + std::to_string(c) + ")");
    }
}

void check_bias(const Tensor& t, std::size_t n, const char* name) {
    if (t.rank() != 1 || t.extent(0) != n) {
        throw ConfigError(std::string(name) + " has shape " + t.shape_string() +
                          ", expected (" + std::to_string(n) + ")");
    }
}

}  // namespace

// ---------------------------------------------------------------------
// Parameter validation
// ---------------------------------------------------------------------

void RnnCellParams::validate() const {
    if (W_h.rank() != 2) throw ConfigError("rnn W_h must be rank 2, got " + W_h.shape_string());
    const std::size_t H = hidden_size(), I = input_size();
    check_block(W_h, H, I, "rnn W_h");
    check_block(U_h, H, H, "rnn U_h");
    check_bias(b_h, H, "rnn b_h");
    if (activation != Activation::tanh && activation != Activation::sigmoid) {
        throw ConfigError("rnn activation must be tanh or sigmoid");
    }
}

void LstmCellParams::validate() const {
    if (W_f.rank() != 2) throw ConfigError("lstm W_f must be rank 2, got " + W_f.shape_string());
    const std::size_t H = hidden_size(), I = input_size();
    check_block(W_f, H, I, "lstm W_f");
    check_block(W_i, H, I, "lstm W_i");
    check_block(W_o, H, I, "lstm W_o");
    check_block(W_c, H, I, "lstm W_c");
    check_block(U_f, H, H, "lstm U_f");
    check_block(U_i, H, H, "lstm U_i");
    check_block(U_o, H, H, "lstm U_o");
    check_block(U_c, H, H, "lstm U_c");
    check_bias(b_f, H, "lstm b_f");
    check_bias(b_i, H, "lstm b_i");
    check_bias(b_o, H, "lstm b_o");
    check_bias(b_c, H, "lstm b_c");
}

void GruCellParams::validate() const {
    if (W_z.rank() != 2) throw ConfigError("gru W_z must be rank 2, got " + W_z.shape_string());
    const std::size_t H = hidden_size(), I = input_size();
    check_block(W_z, H, I, "gru W_z");
    check_block(W_r, H, I, "gru W_r");
    check_block(W_h, H, I, "gru W_h");
    check_block(U_z, H, H, "gru U_z");
    check_block(U_r, H, H, "gru U_r");
    check_block(U_h, H, H, "gru U_h");
    check_bias(b_z, H, "gru b_z");
    check_bias(b_r, H, "gru b_r");
    check_bias(b_h, H, "gru b_h");
}

void OutputHeadParams::validate() const {
    if (W_y.rank() != 2) throw ConfigError("head W_y must be rank 2, got " + W_y.shape_string());
    if (classes() < 2) throw ConfigError("output head needs >= 2 classes");
    check_bias(b_y, classes(), "head b_y");
}

void ShortenConvParams::validate() const {
    if (kernel.rank() != 3) {
        throw ConfigError("shorten kernel must be rank 3 (M x L x N_in), got " +
                          kernel.shape_string());
    }
    if (stride < 1) throw ConfigError("shorten stride must be >= 1");
    check_bias(bias, filters(), "shorten bias");
}

std::size_t PerBandConvParams::max_filter_size() const {
    std::size_t m = 0;
    for (const auto& f : filters) m = std::max(m, f.size);
    return m;
}

void PerBandConvParams::validate() const {
    if (filters.empty()) throw ConfigError("per-band conv needs at least one filter");
    for (const auto& f : filters) {
        if (f.size != 1 && f.size != 3 && f.size != 5) {
            throw ConfigError("per-band filter size must be 1, 3 or 5, got " +
                              std::to_string(f.size));
        }
        if (f.weights.rank() != 2 || f.weights.extent(0) != f.size ||
            f.weights.extent(1) != f.size) {
            throw ConfigError("per-band filter weights " + f.weights.shape_string() +
                              " do not match size " + std::to_string(f.size));
        }
        if (f.bias.size() != 1) throw ConfigError("per-band filter bias must be a scalar");
    }
}

void ParallelGruParams::validate() const {
    if (units.empty()) throw ConfigError("parallel-GRU needs at least one unit");
    units.front().validate();
    const std::size_t I = units.front().input_size();
    const std::size_t H = units.front().hidden_size();
    for (std::size_t k = 1; k < units.size(); ++k) {
        units[k].validate();
        if (units[k].input_size() != I || units[k].hidden_size() != H) {
            throw ConfigError("parallel-GRU unit " + std::to_string(k) + " has shape I=" +
                              std::to_string(units[k].input_size()) + ",H=" +
                              std::to_string(units[k].hidden_size()) + ", expected I=" +
                              std::to_string(I) + ",H=" + std::to_string(H));
        }
    }
}

// ---------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------

ShortenGeometry derive_shorten_geometry(std::size_t bands, std::size_t timesteps) {
    if (timesteps < 1 || timesteps > bands) {
        throw ArgumentError("timesteps must satisfy 1 <= T <= D, got T=" +
                            std::to_string(timesteps) + ", D=" + std::to_string(bands));
    }
    const std::size_t stride = bands / timesteps;
    const std::size_t kernel = bands - stride * (timesteps - 1);
    return {kernel, stride};
}

// ---------------------------------------------------------------------
// Functional forwards
// ---------------------------------------------------------------------

Tensor rnn_cell_forward(const RnnCellParams& p, const Tensor& x_t, const Tensor& h_prev) {
    check_vector(x_t, p.input_size(), "rnn_cell_forward x_t");
    check_vector(h_prev, p.hidden_size(), "rnn_cell_forward h_prev");
    return rnn_step(p, x_t, h_prev);
}

LstmOutput lstm_cell_forward(const LstmCellParams& p, const Tensor& x_t,
                             const Tensor& h_prev, const Tensor& c_prev) {
    check_vector(x_t, p.input_size(), "lstm_cell_forward x_t");
    check_vector(h_prev, p.hidden_size(), "lstm_cell_forward h_prev");
    check_vector(c_prev, p.hidden_size(), "lstm_cell_forward c_prev");
    LstmStep s = lstm_step(p, x_t, h_prev, c_prev);
    return {std::move(s.h), std::move(s.c)};
}

Tensor gru_cell_forward(const GruCellParams& p, const Tensor& x_t, const Tensor& h_prev) {
    check_vector(x_t, p.input_size(), "gru_cell_forward x_t");
    check_vector(h_prev, p.hidden_size(), "gru_cell_forward h_prev");
    return gru_step(p, x_t, h_prev).h;
}

Tensor output_head(const OutputHeadParams& p, const Tensor& h) {
    check_vector(h, p.hidden_size(), "output_head h");
    Tensor logits = matvec(p.W_y, h);
    add_inplace(logits, p.b_y);
    return logits;
}

Tensor shorten_conv_forward(const ShortenConvParams& p, const Tensor& seq) {
    if (seq.rank() != 2) {
        throw DimensionError("shorten_conv expects a D x N sequence, got " + seq.shape_string());
    }
    const std::size_t D = seq.extent(0);
    const std::size_t L = p.length(), S = p.stride, M = p.filters(), N = p.in_channels();
    if (seq.extent(1) != N) {
        throw DimensionError("shorten_conv: sequence has " + std::to_string(seq.extent(1)) +
                             " channels, kernel expects " + std::to_string(N));
    }
    if (D < L) {
        throw ArgumentError("shorten_conv: sequence length D=" + std::to_string(D) +
                            " shorter than kernel L=" + std::to_string(L));
    }
    const std::size_t T = (D - L) / S + 1;
    Tensor out({T, M});
    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t base = t * S;
        for (std::size_t m = 0; m < M; ++m) {
            double acc = p.bias[m];
            for (std::size_t l = 0; l < L; ++l) {
                const double* krow = p.kernel.data() + (m * L + l) * N;
                const double* srow = seq.data() + (base + l) * N;
                for (std::size_t c = 0; c < N; ++c) acc += krow[c] * srow[c];
            }
            out.at(t, m) = apply_activation_scalar(acc, p.activation);
        }
    }
    return out;
}

Tensor per_band_conv_forward(const PerBandConvParams& p, const Tensor& patch) {
    if (patch.rank() != 3 || patch.extent(0) != patch.extent(1)) {
        throw DimensionError("per_band_conv expects a P x P x D patch, got " +
                             patch.shape_string());
    }
    const std::size_t P = patch.extent(0), D = patch.extent(2);
    if (P % 2 == 0) {
        throw ArgumentError("per_band_conv: patch size must be odd, got " + std::to_string(P));
    }
    if (p.max_filter_size() > P) {
        throw ArgumentError("per_band_conv: filter size " +
                            std::to_string(p.max_filter_size()) + " exceeds patch size " +
                            std::to_string(P));
    }
    const std::size_t N = p.filter_count();
    Tensor out({D, N});
    for (std::size_t j = 0; j < N; ++j) {
        const auto& f = p.filters[j];
        const std::size_t k = f.size;
        const std::size_t off = (P - k) / 2;
        for (std::size_t d = 0; d < D; ++d) {
            double acc = f.bias[0];
            for (std::size_t a = 0; a < k; ++a) {
                for (std::size_t b = 0; b < k; ++b) {
                    acc += f.weights.at(a, b) * patch.at(off + a, off + b, d);
                }
            }
            out.at(d, j) = apply_activation_scalar(acc, p.activation);
        }
    }
    return out;
}

Tensor run_sequence(const RnnCellParams& p, const Tensor& xs) {
    check_sequence(xs, p.input_size(), "run_sequence(rnn)");
    Tensor h({p.hidden_size()});
    for (std::size_t t = 0; t < xs.extent(0); ++t) h = rnn_step(p, row_of(xs, t), h);
    return h;
}

Tensor run_sequence(const LstmCellParams& p, const Tensor& xs) {
    check_sequence(xs, p.input_size(), "run_sequence(lstm)");
    Tensor h({p.hidden_size()}), c({p.hidden_size()});
    for (std::size_t t = 0; t < xs.extent(0); ++t) {
        LstmStep s = lstm_step(p, row_of(xs, t), h, c);
        h = std::move(s.h);
        c = std::move(s.c);
    }
    return h;
}

Tensor run_sequence(const GruCellParams& p, const Tensor& xs) {
    check_sequence(xs, p.input_size(), "run_sequence(gru)");
    Tensor h({p.hidden_size()});
    for (std::size_t t = 0; t < xs.extent(0); ++t) h = gru_step(p, row_of(xs, t), h).h;
    return h;
}

Tensor parallel_gru_forward(const ParallelGruParams& p, const Tensor& xs) {
    p.validate();
    Tensor sum = run_sequence(p.units[0], xs);
    for (std::size_t k = 1; k < p.units.size(); ++k) {
        add_inplace(sum, run_sequence(p.units[k], xs));
    }
    return sum;
}

// ---------------------------------------------------------------------
// Trainable layers
// ---------------------------------------------------------------------

void Layer::zero_grad() {
    for (auto& p : parameters()) p.grad->fill(0.0);
}

void Layer::require_cache(const char* layer_name) const {
    if (!has_cache_) {
        throw StateError(std::string(layer_name) + ": backward called without a recorded forward pass");
    }
}

namespace {

RnnCellParams zero_like(const RnnCellParams& p) {
    RnnCellParams g;
    g.W_h = Tensor(p.W_h.shape());
    g.U_h = Tensor(p.U_h.shape());
    g.b_h = Tensor(p.b_h.shape());
    g.activation = p.activation;
    return g;
}

LstmCellParams zero_like(const LstmCellParams& p) {
    LstmCellParams g;
    g.W_f = Tensor(p.W_f.shape()); g.W_i = Tensor(p.W_i.shape());
    g.W_o = Tensor(p.W_o.shape()); g.W_c = Tensor(p.W_c.shape());
    g.U_f = Tensor(p.U_f.shape()); g.U_i = Tensor(p.U_i.shape());
    g.U_o = Tensor(p.U_o.shape()); g.U_c = Tensor(p.U_c.shape());
    g.b_f = Tensor(p.b_f.shape()); g.b_i = Tensor(p.b_i.shape());
    g.b_o = Tensor(p.b_o.shape()); g.b_c = Tensor(p.b_c.shape());
    return g;
}

GruCellParams zero_like(const GruCellParams& p) {
    GruCellParams g;
    g.W_z = Tensor(p.W_z.shape()); g.W_r = Tensor(p.W_r.shape()); g.W_h = Tensor(p.W_h.shape());
    g.U_z = Tensor(p.U_z.shape()); g.U_r = Tensor(p.U_r.shape()); g.U_h = Tensor(p.U_h.shape());
    g.b_z = Tensor(p.b_z.shape()); g.b_r = Tensor(p.b_r.shape()); g.b_h = Tensor(p.b_h.shape());
    return g;
}

OutputHeadParams zero_like(const OutputHeadParams& p) {
    OutputHeadParams g;
    g.W_y = Tensor(p.W_y.shape());
    g.b_y = Tensor(p.b_y.shape());
    return g;
}

ShortenConvParams zero_like(const ShortenConvParams& p) {
    ShortenConvParams g;
    g.kernel = Tensor(p.kernel.shape());
    g.bias = Tensor(p.bias.shape());
    g.stride = p.stride;
    g.activation = p.activation;
    return g;
}

PerBandConvParams zero_like(const PerBandConvParams& p) {
    PerBandConvParams g;
    g.activation = p.activation;
    for (const auto& f : p.filters) {
        g.filters.push_back({f.size, Tensor(f.weights.shape()), Tensor(f.bias.shape())});
    }
    return g;
}

}  // namespace

// --- RnnSequence -------------------------------------------------------

RnnSequence::RnnSequence(RnnCellParams params)
    : params_(std::move(params)), grads_(zero_like(params_)) {
    params_.validate();
}

Tensor RnnSequence::forward(const Tensor& xs) {
    check_sequence(xs, params_.input_size(), "RnnSequence");
    xs_ = xs;
    const std::size_t T = xs.extent(0);
    hs_.assign(1, Tensor({params_.hidden_size()}));
    for (std::size_t t = 0; t < T; ++t) hs_.push_back(rnn_step(params_, row_of(xs, t), hs_[t]));
    has_cache_ = true;
    return hs_.back();
}

Tensor RnnSequence::backward(const Tensor& dh_last) {
    require_cache("RnnSequence");
    check_vector(dh_last, params_.hidden_size(), "RnnSequence upstream");
    const std::size_t T = xs_.extent(0);
    const std::size_t H = params_.hidden_size();
    Tensor dxs(xs_.shape());
    Tensor dh = dh_last;
    for (std::size_t t = T; t-- > 0;) {
        const Tensor& h = hs_[t + 1];
        Tensor dpre({H});
        for (std::size_t i = 0; i < H; ++i) {
            dpre[i] = dh[i] * activation_grad_from_output(h[i], params_.activation);
        }
        const Tensor x = row_of(xs_, t);
        add_outer(grads_.W_h, dpre, x);
        add_outer(grads_.U_h, dpre, hs_[t]);
        add_inplace(grads_.b_h, dpre);
        set_row(dxs, t, matvec_transposed(params_.W_h, dpre));
        dh = matvec_transposed(params_.U_h, dpre);
    }
    return dxs;
}

std::vector<ParamRef> RnnSequence::parameters() {
    return {{"W_h", &params_.W_h, &grads_.W_h},
            {"U_h", &params_.U_h, &grads_.U_h},
            {"b_h", &params_.b_h, &grads_.b_h}};
}

// --- LstmSequence ------------------------------------------------------

LstmSequence::LstmSequence(LstmCellParams params)
    : params_(std::move(params)), grads_(zero_like(params_)) {
    params_.validate();
}

Tensor LstmSequence::forward(const Tensor& xs) {
    check_sequence(xs, params_.input_size(), "LstmSequence");
    xs_ = xs;
    const std::size_t T = xs.extent(0);
    const std::size_t H = params_.hidden_size();
    hs_.assign(1, Tensor({H}));
    cs_.assign(1, Tensor({H}));
    steps_.clear();
    for (std::size_t t = 0; t < T; ++t) {
        LstmStep s = lstm_step(params_, row_of(xs, t), hs_[t], cs_[t]);
        hs_.push_back(std::move(s.h));
        cs_.push_back(std::move(s.c));
        steps_.push_back({std::move(s.f), std::move(s.i), std::move(s.o), std::move(s.ctil),
                          std::move(s.tanh_c)});
    }
    has_cache_ = true;
    return hs_.back();
}

Tensor LstmSequence::backward(const Tensor& dh_last) {
    require_cache("LstmSequence");
    check_vector(dh_last, params_.hidden_size(), "LstmSequence upstream");
    const std::size_t T = xs_.extent(0);
    const std::size_t H = params_.hidden_size();
    Tensor dxs(xs_.shape());
    Tensor dh = dh_last;
    Tensor dc({H});
    for (std::size_t t = T; t-- > 0;) {
        const StepTrace& s = steps_[t];
        const Tensor x = row_of(xs_, t);
        const Tensor& h_prev = hs_[t];
        const Tensor& c_prev = cs_[t];
        Tensor dpre_f({H}), dpre_i({H}), dpre_o({H}), dpre_c({H}), dc_prev({H});
        for (std::size_t k = 0; k < H; ++k) {
            const double d_o = dh[k] * s.tanh_c[k];
            const double dck = dc[k] + dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
            const double d_f = dck * c_prev[k];
            const double d_i = dck * s.ctil[k];
            const double d_ctil = dck * s.i[k];
            dc_prev[k] = dck * s.f[k];
            dpre_f[k] = d_f * s.f[k] * (1.0 - s.f[k]);
            dpre_i[k] = d_i * s.i[k] * (1.0 - s.i[k]);
            dpre_o[k] = d_o * s.o[k] * (1.0 - s.o[k]);
            dpre_c[k] = d_ctil * (1.0 - s.ctil[k] * s.ctil[k]);
        }
        add_outer(grads_.W_f, dpre_f, x);
        add_outer(grads_.W_i, dpre_i, x);
        add_outer(grads_.W_o, dpre_o, x);
        add_outer(grads_.W_c, dpre_c, x);
        add_outer(grads_.U_f, dpre_f, h_prev);
        add_outer(grads_.U_i, dpre_i, h_prev);
        add_outer(grads_.U_o, dpre_o, h_prev);
        add_outer(grads_.U_c, dpre_c, h_prev);
        add_inplace(grads_.b_f, dpre_f);
        add_inplace(grads_.b_i, dpre_i);
        add_inplace(grads_.b_o, dpre_o);
        add_inplace(grads_.b_c, dpre_c);

        Tensor dx = matvec_transposed(params_.W_f, dpre_f);
        add_inplace(dx, matvec_transposed(params_.W_i, dpre_i));
        add_inplace(dx, matvec_transposed(params_.W_o, dpre_o));
        add_inplace(dx, matvec_transposed(params_.W_c, dpre_c));
        set_row(dxs, t, dx);

        Tensor dh_prev = matvec_transposed(params_.U_f, dpre_f);
        add_inplace(dh_prev, matvec_transposed(params_.U_i, dpre_i));
        add_inplace(dh_prev, matvec_transposed(params_.U_o, dpre_o));
        add_inplace(dh_prev, matvec_transposed(params_.U_c, dpre_c));
        dh = std::move(dh_prev);
        dc = std::move(dc_prev);
    }
    return dxs;
}

std::vector<ParamRef> LstmSequence::parameters() {
    return {{"W_f", &params_.W_f, &grads_.W_f}, {"W_i", &params_.W_i, &grads_.W_i},
            {"W_o", &params_.W_o, &grads_.W_o}, {"W_c", &params_.W_c, &grads_.W_c},
            {"U_f", &params_.U_f, &grads_.U_f}, {"U_i", &params_.U_i, &grads_.U_i},
            {"U_o", &params_.U_o, &grads_.U_o}, {"U_c", &params_.U_c, &grads_.U_c},
            {"b_f", &params_.b_f, &grads_.b_f}, {"b_i", &params_.b_i, &grads_.b_i},
            {"b_o", &params_.b_o, &grads_.b_o}, {"b_c", &params_.b_c, &grads_.b_c}};
}

// --- GruSequence ---------------------------------------------------------

GruSequence::GruSequence(GruCellParams params)
    : params_(std::move(params)), grads_(zero_like(params_)) {
    params_.validate();
}

Tensor GruSequence::forward(const Tensor& xs) {
    check_sequence(xs, params_.input_size(), "GruSequence");
    xs_ = xs;
    const std::size_t T = xs.extent(0);
    hs_.assign(1, Tensor({params_.hidden_size()}));
    steps_.clear();
    for (std::size_t t = 0; t < T; ++t) {
        GruStep s = gru_step(params_, row_of(xs, t), hs_[t]);
        hs_.push_back(std::move(s.h));
        steps_.push_back({std::move(s.z), std::move(s.r), std::move(s.htil), std::move(s.rh)});
    }
    has_cache_ = true;
    return hs_.back();
}

Tensor GruSequence::backward(const Tensor& dh_last) {
    require_cache("GruSequence");
    check_vector(dh_last, params_.hidden_size(), "GruSequence upstream");
    const std::size_t T = xs_.extent(0);
    const std::size_t H = params_.hidden_size();
    Tensor dxs(xs_.shape());
    Tensor dh = dh_last;
    for (std::size_t t = T; t-- > 0;) {
        const StepTrace& s = steps_[t];
        const Tensor x = row_of(xs_, t);
        const Tensor& h_prev = hs_[t];

        Tensor dpre_h({H}), dh_prev({H});
        for (std::size_t k = 0; k < H; ++k) {
            dh_prev[k] = dh[k] * (1.0 - s.z[k]);
            const double dhtil = dh[k] * s.z[k];
            dpre_h[k] = dhtil * (1.0 - s.htil[k] * s.htil[k]);
        }
        add_outer(grads_.W_h, dpre_h, x);
        add_outer(grads_.U_h, dpre_h, s.rh);
        add_inplace(grads_.b_h, dpre_h);

        const Tensor drh = matvec_transposed(params_.U_h, dpre_h);
        Tensor dpre_r({H}), dpre_z({H});
        for (std::size_t k = 0; k < H; ++k) {
            dh_prev[k] += drh[k] * s.r[k];
            const double dr = drh[k] * h_prev[k];
            dpre_r[k] = dr * s.r[k] * (1.0 - s.r[k]);
            const double dz = dh[k] * (s.htil[k] - h_prev[k]);
            dpre_z[k] = dz * s.z[k] * (1.0 - s.z[k]);
        }
        add_outer(grads_.W_r, dpre_r, x);
        add_outer(grads_.U_r, dpre_r, h_prev);
        add_inplace(grads_.b_r, dpre_r);
        add_outer(grads_.W_z, dpre_z, x);
        add_outer(grads_.U_z, dpre_z, h_prev);
        add_inplace(grads_.b_z, dpre_z);

        add_inplace(dh_prev, matvec_transposed(params_.U_r, dpre_r));
        add_inplace(dh_prev, matvec_transposed(params_.U_z, dpre_z));

        Tensor dx = matvec_transposed(params_.W_z, dpre_z);
        add_inplace(dx, matvec_transposed(params_.W_r, dpre_r));
        add_inplace(dx, matvec_transposed(params_.W_h, dpre_h));
        set_row(dxs, t, dx);

        dh = std::move(dh_prev);
    }
    return dxs;
}

std::vector<ParamRef> GruSequence::parameters() {
    return {{"W_z", &params_.W_z, &grads_.W_z}, {"W_r", &params_.W_r, &grads_.W_r},
            {"W_h", &params_.W_h, &grads_.W_h}, {"U_z", &params_.U_z, &grads_.U_z},
            {"U_r", &params_.U_r, &grads_.U_r}, {"U_h", &params_.U_h, &grads_.U_h},
            {"b_z", &params_.b_z, &grads_.b_z}, {"b_r", &params_.b_r, &grads_.b_r},
            {"b_h", &params_.b_h, &grads_.b_h}};
}

// --- ParallelGruLayer ----------------------------------------------------

ParallelGruLayer::ParallelGruLayer(ParallelGruParams params) {
    params.validate();
    units_.reserve(params.units.size());
    for (auto& unit : params.units) units_.emplace_back(std::move(unit));
}

Tensor ParallelGruLayer::forward(const Tensor& xs) {
    Tensor sum = units_[0].forward(xs);
    for (std::size_t k = 1; k < units_.size(); ++k) add_inplace(sum, units_[k].forward(xs));
    has_cache_ = true;
    return sum;
}

Tensor ParallelGruLayer::backward(const Tensor& dh) {
    require_cache("ParallelGruLayer");
    Tensor dxs = units_[0].backward(dh);
    for (std::size_t k = 1; k < units_.size(); ++k) add_inplace(dxs, units_[k].backward(dh));
    return dxs;
}

std::vector<ParamRef> ParallelGruLayer::parameters() {
    std::vector<ParamRef> all;
    for (std::size_t k = 0; k < units_.size(); ++k) {
        for (auto& p : units_[k].parameters()) {
            all.push_back({"u" + std::to_string(k) + "." + p.name, p.value, p.grad});
        }
    }
    return all;
}

// --- DenseHead -----------------------------------------------------------

DenseHead::DenseHead(OutputHeadParams params)
    : params_(std::move(params)), grads_(zero_like(params_)) {
    params_.validate();
}

Tensor DenseHead::forward(const Tensor& h) {
    Tensor logits = output_head(params_, h);
    h_ = h;
    has_cache_ = true;
    return logits;
}

Tensor DenseHead::backward(const Tensor& dlogits) {
    require_cache("DenseHead");
    check_vector(dlogits, params_.classes(), "DenseHead upstream");
    add_outer(grads_.W_y, dlogits, h_);
    add_inplace(grads_.b_y, dlogits);
    return matvec_transposed(params_.W_y, dlogits);
}

std::vector<ParamRef> DenseHead::parameters() {
    return {{"W_y", &params_.W_y, &grads_.W_y}, {"b_y", &params_.b_y, &grads_.b_y}};
}

// --- ShortenConv -----------------------------------------------------------

ShortenConv::ShortenConv(ShortenConvParams params)
    : params_(std::move(params)), grads_(zero_like(params_)) {
    params_.validate();
}

Tensor ShortenConv::forward(const Tensor& seq) {
    output_ = shorten_conv_forward(params_, seq);
    input_ = seq;
    has_cache_ = true;
    return output_;
}

Tensor ShortenConv::backward(const Tensor& dout) {
    require_cache("ShortenConv");
    require_same_shape(dout, output_, "ShortenConv upstream");
    const std::size_t T = output_.extent(0), M = params_.filters();
    const std::size_t L = params_.length(), S = params_.stride, N = params_.in_channels();
    Tensor dseq(input_.shape());
    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t base = t * S;
        for (std::size_t m = 0; m < M; ++m) {
            const double dpre =
                dout.at(t, m) * activation_grad_from_output(output_.at(t, m), params_.activation);
            if (dpre == 0.0) continue;
            grads_.bias[m] += dpre;
            for (std::size_t l = 0; l < L; ++l) {
                const double* srow = input_.data() + (base + l) * N;
                const double* krow = params_.kernel.data() + (m * L + l) * N;
                double* gkrow = grads_.kernel.data() + (m * L + l) * N;
                double* dsrow = dseq.data() + (base + l) * N;
                for (std::size_t c = 0; c < N; ++c) {
                    gkrow[c] += dpre * srow[c];
                    dsrow[c] += dpre * krow[c];
                }
            }
        }
    }
    return dseq;
}

std::vector<ParamRef> ShortenConv::parameters() {
    return {{"kernel", &params_.kernel, &grads_.kernel},
            {"bias", &params_.bias, &grads_.bias}};
}

// --- PerBandConv -----------------------------------------------------------

PerBandConv::PerBandConv(PerBandConvParams params)
    : params_(std::move(params)), grads_(zero_like(params_)) {
    params_.validate();
}

Tensor PerBandConv::forward(const Tensor& patch) {
    output_ = per_band_conv_forward(params_, patch);
    input_ = patch;
    has_cache_ = true;
    return output_;
}

Tensor PerBandConv::backward(const Tensor& dout) {
    require_cache("PerBandConv");
    require_same_shape(dout, output_, "PerBandConv upstream");
    const std::size_t P = input_.extent(0), D = input_.extent(2);
    Tensor dpatch(input_.shape());
    for (std::size_t j = 0; j < params_.filter_count(); ++j) {
        const auto& f = params_.filters[j];
        auto& gf = grads_.filters[j];
        const std::size_t k = f.size;
        const std::size_t off = (P - k) / 2;
        for (std::size_t d = 0; d < D; ++d) {
            const double dpre = dout.at(d, j) *
                                activation_grad_from_output(output_.at(d, j), params_.activation);
            if (dpre == 0.0) continue;
            gf.bias[0] += dpre;
            for (std::size_t a = 0; a < k; ++a) {
                for (std::size_t b = 0; b < k; ++b) {
                    gf.weights.at(a, b) += dpre * input_.at(off + a, off + b, d);
                    dpatch.at(off + a, off + b, d) += dpre * f.weights.at(a, b);
                }
            }
        }
    }
    return dpatch;
}

std::vector<ParamRef> PerBandConv::parameters() {
    std::vector<ParamRef> all;
    for (std::size_t j = 0; j < params_.filters.size(); ++j) {
        all.push_back({"f" + std::to_string(j) + ".w", &params_.filters[j].weights,
                       &grads_.filters[j].weights});
        all.push_back({"f" + std::to_string(j) + ".b", &params_.filters[j].bias,
                       &grads_.filters[j].bias});
    }
    return all;
}

// ---------------------------------------------------------------------
// Construction helpers
// ---------------------------------------------------------------------

RnnCellParams make_rnn_params(std::size_t input, std::size_t hidden, Activation act) {
    RnnCellParams p;
    p.W_h = Tensor({hidden, input});
    p.U_h = Tensor({hidden, hidden});
    p.b_h = Tensor({hidden});
    p.activation = act;
    return p;
}

LstmCellParams make_lstm_params(std::size_t input, std::size_t hidden) {
    LstmCellParams p;
    for (Tensor* w : {&p.W_f, &p.W_i, &p.W_o, &p.W_c}) *w = Tensor({hidden, input});
    for (Tensor* u : {&p.U_f, &p.U_i, &p.U_o, &p.U_c}) *u = Tensor({hidden, hidden});
    for (Tensor* b : {&p.b_f, &p.b_i, &p.b_o, &p.b_c}) *b = Tensor({hidden});
    return p;
}

GruCellParams make_gru_params(std::size_t input, std::size_t hidden) {
    GruCellParams p;
    for (Tensor* w : {&p.W_z, &p.W_r, &p.W_h}) *w = Tensor({hidden, input});
    for (Tensor* u : {&p.U_z, &p.U_r, &p.U_h}) *u = Tensor({hidden, hidden});
    for (Tensor* b : {&p.b_z, &p.b_r, &p.b_h}) *b = Tensor({hidden});
    return p;
}

OutputHeadParams make_head_params(std::size_t hidden, std::size_t classes) {
    OutputHeadParams p;
    p.W_y = Tensor({classes, hidden});
    p.b_y = Tensor({classes});
    return p;
}

ShortenConvParams make_shorten_params(std::size_t filters, std::size_t length,
                                      std::size_t in_channels, std::size_t stride,
                                      Activation act) {
    ShortenConvParams p;
    p.kernel = Tensor({filters, length, in_channels});
    p.bias = Tensor({filters});
    p.stride = stride;
    p.activation = act;
    return p;
}

std::vector<std::size_t> per_band_filter_sizes(std::size_t n) {
    if (n == 0) throw ArgumentError("per-band conv needs at least one filter");
    const std::size_t third = n / 3;
    std::vector<std::size_t> sizes;
    sizes.insert(sizes.end(), third, 1);
    sizes.insert(sizes.end(), third, 3);
    sizes.insert(sizes.end(), n - 2 * third, 5);
    return sizes;
}

PerBandConvParams make_per_band_params(std::size_t n, Activation act) {
    PerBandConvParams p;
    p.activation = act;
    for (std::size_t size : per_band_filter_sizes(n)) {
        p.filters.push_back({size, Tensor({size, size}), Tensor({std::size_t{1}})});
    }
    return p;
}

void glorot_fill(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
}

void init_rnn_params(RnnCellParams& p, Rng& rng) {
    const std::size_t I = p.input_size(), H = p.hidden_size();
    glorot_fill(p.W_h, I, H, rng);
    glorot_fill(p.U_h, H, H, rng);
}

void init_lstm_params(LstmCellParams& p, Rng& rng) {
    const std::size_t I = p.input_size(), H = p.hidden_size();
    for (Tensor* w : {&p.W_f, &p.W_i, &p.W_o, &p.W_c}) glorot_fill(*w, I, H, rng);
    for (Tensor* u : {&p.U_f, &p.U_i, &p.U_o, &p.U_c}) glorot_fill(*u, H, H, rng);
}

void init_gru_params(GruCellParams& p, Rng& rng) {
    const std::size_t I = p.input_size(), H = p.hidden_size();
    for (Tensor* w : {&p.W_z, &p.W_r, &p.W_h}) glorot_fill(*w, I, H, rng);
    for (Tensor* u : {&p.U_z, &p.U_r, &p.U_h}) glorot_fill(*u, H, H, rng);
}

void init_head_params(OutputHeadParams& p, Rng& rng) {
    glorot_fill(p.W_y, p.hidden_size(), p.classes(), rng);
}

void init_shorten_params(ShortenConvParams& p, Rng& rng) {
    glorot_fill(p.kernel, p.length() * p.in_channels(), p.filters(), rng);
}

void init_per_band_params(PerBandConvParams& p, Rng& rng) {
    for (auto& f : p.filters) glorot_fill(f.weights, f.size * f.size, 1, rng);
}

// ---------------------------------------------------------------------
// Secant (midpoint/difference) forwards
// ---------------------------------------------------------------------

namespace {

// pre_i = b_i + sum_j W[i,j] xs[row,j] + sum_j U[i,j] h[j]
STensor s_gate(const STensor& W, const STensor& U, const STensor& b, const STensor& xs,
               std::size_t row, const STensor& h, std::size_t H, std::size_t I) {
    STensor pre({H});
    for (std::size_t i = 0; i < H; ++i) {
        Secant acc = b.at(i);
        for (std::size_t j = 0; j < I; ++j) {
            acc = s_add(acc, s_mul(W.at(i * I + j), xs.at(row * I + j)));
        }
        for (std::size_t j = 0; j < H; ++j) {
            acc = s_add(acc, s_mul(U.at(i * H + j), h.at(j)));
        }
        pre.set(i, acc);
    }
    return pre;
}

STensor s_gru_run(const GruCellParams& p, const STensor& xs, std::size_t T,
                  const SecantContext& ctx) {
    const std::size_t H = p.hidden_size(), I = p.input_size();
    const STensor W_z = ctx.lift(p.W_z), W_r = ctx.lift(p.W_r), W_h = ctx.lift(p.W_h);
    const STensor U_z = ctx.lift(p.U_z), U_r = ctx.lift(p.U_r), U_h = ctx.lift(p.U_h);
    const STensor b_z = ctx.lift(p.b_z), b_r = ctx.lift(p.b_r), b_h = ctx.lift(p.b_h);
    STensor h({H});
    for (std::size_t t = 0; t < T; ++t) {
        const STensor pre_z = s_gate(W_z, U_z, b_z, xs, t, h, H, I);
        const STensor pre_r = s_gate(W_r, U_r, b_r, xs, t, h, H, I);
        STensor rh({H});
        for (std::size_t i = 0; i < H; ++i) rh.set(i, s_mul(s_sigmoid(pre_r.at(i)), h.at(i)));
        const STensor pre_h = s_gate(W_h, U_h, b_h, xs, t, rh, H, I);
        STensor next({H});
        for (std::size_t i = 0; i < H; ++i) {
            const Secant z = s_sigmoid(pre_z.at(i));
            const Secant htil = s_tanh(pre_h.at(i));
            next.set(i, s_add(s_mul(s_sub(s_const(1.0), z), h.at(i)), s_mul(z, htil)));
        }
        h = std::move(next);
    }
    return h;
}

}  // namespace

STensor RnnSequence::secant_forward(const STensor& xs, const SecantContext& ctx) const {
    const std::size_t T = xs.mid.extent(0);
    const std::size_t H = params_.hidden_size(), I = params_.input_size();
    const STensor W = ctx.lift(params_.W_h), U = ctx.lift(params_.U_h),
                  b = ctx.lift(params_.b_h);
    STensor h({H});
    for (std::size_t t = 0; t < T; ++t) {
        const STensor pre = s_gate(W, U, b, xs, t, h, H, I);
        STensor next({H});
        for (std::size_t i = 0; i < H; ++i) {
            next.set(i, s_activation(pre.at(i), params_.activation));
        }
        h = std::move(next);
    }
    return h;
}

STensor LstmSequence::secant_forward(const STensor& xs, const SecantContext& ctx) const {
    const std::size_t T = xs.mid.extent(0);
    const std::size_t H = params_.hidden_size(), I = params_.input_size();
    const STensor W_f = ctx.lift(params_.W_f), W_i = ctx.lift(params_.W_i),
                  W_o = ctx.lift(params_.W_o), W_c = ctx.lift(params_.W_c);
    const STensor U_f = ctx.lift(params_.U_f), U_i = ctx.lift(params_.U_i),
                  U_o = ctx.lift(params_.U_o), U_c = ctx.lift(params_.U_c);
    const STensor b_f = ctx.lift(params_.b_f), b_i = ctx.lift(params_.b_i),
                  b_o = ctx.lift(params_.b_o), b_c = ctx.lift(params_.b_c);
    STensor h({H}), c({H});
    for (std::size_t t = 0; t < T; ++t) {
        const STensor pre_f = s_gate(W_f, U_f, b_f, xs, t, h, H, I);
        const STensor pre_i = s_gate(W_i, U_i, b_i, xs, t, h, H, I);
        const STensor pre_o = s_gate(W_o, U_o, b_o, xs, t, h, H, I);
        const STensor pre_c = s_gate(W_c, U_c, b_c, xs, t, h, H, I);
        STensor next_h({H}), next_c({H});
        for (std::size_t k = 0; k < H; ++k) {
            const Secant f = s_sigmoid(pre_f.at(k));
            const Secant i = s_sigmoid(pre_i.at(k));
            const Secant o = s_sigmoid(pre_o.at(k));
            const Secant ctil = s_tanh(pre_c.at(k));
            const Secant cn = s_add(s_mul(i, ctil), s_mul(f, c.at(k)));
            next_c.set(k, cn);
            next_h.set(k, s_mul(o, s_tanh(cn)));
        }
        h = std::move(next_h);
        c = std::move(next_c);
    }
    return h;
}

STensor GruSequence::secant_forward(const STensor& xs, const SecantContext& ctx) const {
    return s_gru_run(params_, xs, xs.mid.extent(0), ctx);
}

STensor ParallelGruLayer::secant_forward(const STensor& xs, const SecantContext& ctx) const {
    STensor sum = s_gru_run(units_[0].params(), xs, xs.mid.extent(0), ctx);
    for (std::size_t k = 1; k < units_.size(); ++k) {
        const STensor h = s_gru_run(units_[k].params(), xs, xs.mid.extent(0), ctx);
        for (std::size_t i = 0; i < sum.size(); ++i) sum.set(i, s_add(sum.at(i), h.at(i)));
    }
    return sum;
}

STensor DenseHead::secant_forward(const STensor& h, const SecantContext& ctx) const {
    const std::size_t C = params_.classes(), H = params_.hidden_size();
    const STensor W = ctx.lift(params_.W_y), b = ctx.lift(params_.b_y);
    STensor logits({C});
    for (std::size_t i = 0; i < C; ++i) {
        Secant acc = b.at(i);
        for (std::size_t j = 0; j < H; ++j) acc = s_add(acc, s_mul(W.at(i * H + j), h.at(j)));
        logits.set(i, acc);
    }
    return logits;
}

STensor ShortenConv::secant_forward(const STensor& seq, const SecantContext& ctx) const {
    const std::size_t D = seq.mid.extent(0);
    const std::size_t L = params_.length(), S = params_.stride, M = params_.filters();
    const std::size_t N = params_.in_channels();
    const std::size_t T = (D - L) / S + 1;
    const STensor kernel = ctx.lift(params_.kernel), bias = ctx.lift(params_.bias);
    STensor out({T, M});
    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t base = t * S;
        for (std::size_t m = 0; m < M; ++m) {
            Secant acc = bias.at(m);
            for (std::size_t l = 0; l < L; ++l) {
                for (std::size_t c = 0; c < N; ++c) {
                    acc = s_add(acc, s_mul(kernel.at((m * L + l) * N + c),
                                           seq.at((base + l) * N + c)));
                }
            }
            out.set(t * M + m, s_activation(acc, params_.activation));
        }
    }
    return out;
}

STensor PerBandConv::secant_forward(const STensor& patch, const SecantContext& ctx) const {
    const std::size_t P = patch.mid.extent(0), D = patch.mid.extent(2);
    const std::size_t N = params_.filter_count();
    STensor out({D, N});
    for (std::size_t j = 0; j < N; ++j) {
        const auto& f = params_.filters[j];
        const STensor w = ctx.lift(f.weights), b = ctx.lift(f.bias);
        const std::size_t k = f.size;
        const std::size_t off = (P - k) / 2;
        for (std::size_t d = 0; d < D; ++d) {
            Secant acc = b.at(0);
            for (std::size_t a = 0; a < k; ++a) {
                for (std::size_t bb = 0; bb < k; ++bb) {
                    acc = s_add(acc, s_mul(w.at(a * k + bb),
                                           patch.at(((off + a) * P + off + bb) * D + d)));
                }
            }
            out.set(d * N + j, s_activation(acc, params_.activation));
        }
    }
    return out;
}

// ---------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------

GradCheckReport gradcheck_layer(Layer& layer, Tensor& input, std::uint64_t seed, double step,
                                double tol, double denom_floor) {
    Rng rng(seed);
    layer.zero_grad();
    const Tensor out0 = layer.forward(input);

    // Random projection with entries bounded away from zero, so no output
    // coordinate silently drops out of the check.
    Tensor proj(out0.shape());
    for (std::size_t i = 0; i < proj.size(); ++i) {
        proj[i] = (rng.below(2) == 0 ? 1.0 : -1.0) * rng.uniform(0.5, 1.5);
    }

    const Tensor input_grad = layer.backward(proj);

    std::vector<std::pair<const Tensor*, const Tensor*>> checks;
    for (auto& p : layer.parameters()) checks.emplace_back(p.value, p.grad);
    checks.emplace_back(&input, &input_grad);

    // Central differences per coordinate, evaluated in secant form so the
    // difference is exact to rounding instead of noise-limited by the
    // subtraction of two nearly equal losses.
    double max_rel = 0.0;
    for (const auto& [value, analytic] : checks) {
        for (std::size_t i = 0; i < value->size(); ++i) {
            const SecantContext ctx{value, i, step};
            const STensor out = layer.secant_forward(ctx.lift(input), ctx);

            // The secant midpoint must reproduce the recorded forward; a
            // mismatch means the two evaluation routes diverged.
            for (std::size_t k = 0; k < out0.size(); ++k) {
                if (std::abs(out.mid[k] - out0[k]) > 1e-6 * std::max(1.0, std::abs(out0[k]))) {
                    return {std::numeric_limits<double>::infinity(), false};
                }
            }

            double dif = 0.0;
            for (std::size_t k = 0; k < out0.size(); ++k) dif += proj[k] * out.dif[k];
            const double fd = dif / (2.0 * step);
            const double a = (*analytic)[i];
            const double denom = std::max({std::abs(a), std::abs(fd), denom_floor});
            max_rel = std::max(max_rel, std::abs(a - fd) / denom);
        }
    }
    return {max_rel, max_rel < tol};
}

}  // namespace hsrnn
