#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "core/rng.hpp"
#include "core/secant.hpp"
#include "core/tensor.hpp"

namespace hsrnn {

// ---------------------------------------------------------------------
// Parameter blocks
// ---------------------------------------------------------------------

// h_t = act(W_h x_t + U_h h_prev + b_h)
struct RnnCellParams {
    Tensor W_h;  // H x I
    Tensor U_h;  // H x H
    Tensor b_h;  // H
    Activation activation = Activation::tanh;

    std::size_t input_size() const { return W_h.extent(1); }
    std::size_t hidden_size() const { return W_h.extent(0); }
    void validate() const;
};

// Forget/input/output gates plus candidate cell state:
//   f = sig(W_f x + U_f h + b_f)      i = sig(W_i x + U_i h + b_i)
//   o = sig(W_o x + U_o h + b_o)      ctil = tanh(W_c x + U_c h + b_c)
//   c_t = i*ctil + f*c_prev           h_t = o*tanh(c_t)
struct LstmCellParams {
    Tensor W_f, W_i, W_o, W_c;  // H x I
    Tensor U_f, U_i, U_o, U_c;  // H x H
    Tensor b_f, b_i, b_o, b_c;  // H

    std::size_t input_size() const { return W_f.extent(1); }
    std::size_t hidden_size() const { return W_f.extent(0); }
    void validate() const;
};

// Update/reset gates:
//   z = sig(W_z x + U_z h + b_z)      r = sig(W_r x + U_r h + b_r)
//   htil = tanh(W_h x + U_h (r*h) + b_h)
//   h_t = (1-z)*h + z*htil
struct GruCellParams {
    Tensor W_z, W_r, W_h;  // H x I
    Tensor U_z, U_r, U_h;  // H x H
    Tensor b_z, b_r, b_h;  // H

    std::size_t input_size() const { return W_z.extent(1); }
    std::size_t hidden_size() const { return W_z.extent(0); }
    void validate() const;
};

// logits = W_y h + b_y (affine only; softmax lives in the loss).
struct OutputHeadParams {
    Tensor W_y;  // C x H
    Tensor b_y;  // C

    std::size_t hidden_size() const { return W_y.extent(1); }
    std::size_t classes() const { return W_y.extent(0); }
    void validate() const;
};

// Strided valid 1D convolution along the band axis: compresses a D-step
// sequence of N_in-vectors into T_out M-vectors, T_out = (D-L)/S + 1.
struct ShortenConvParams {
    Tensor kernel;  // M x L x N_in
    Tensor bias;    // M
    std::size_t stride = 1;
    Activation activation = Activation::tanh;

    std::size_t filters() const { return kernel.extent(0); }
    std::size_t length() const { return kernel.extent(1); }
    std::size_t in_channels() const { return kernel.extent(2); }
    void validate() const;
};

// One square 2D kernel evaluated center-aligned on the patch, shared
// across all bands. size is 1, 3 or 5.
struct PerBandConvFilter {
    std::size_t size = 1;
    Tensor weights;  // size x size
    Tensor bias;     // scalar, stored as shape (1)
};

struct PerBandConvParams {
    std::vector<PerBandConvFilter> filters;
    Activation activation = Activation::relu;

    std::size_t filter_count() const { return filters.size(); }
    std::size_t max_filter_size() const;
    void validate() const;
};

struct ParallelGruParams {
    std::vector<GruCellParams> units;
    void validate() const;  // ConfigError if units disagree in shape
};

// ---------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------

struct ShortenGeometry {
    std::size_t kernel;  // L
    std::size_t stride;  // S
};

// S = floor(D/T), L = D - S*(T-1). Yields exactly T valid windows and
// L >= S, so every band lands in at least one window.
ShortenGeometry derive_shorten_geometry(std::size_t bands, std::size_t timesteps);

// ---------------------------------------------------------------------
// Functional forwards (pure; used by classification and by the oracles)
// ---------------------------------------------------------------------

Tensor rnn_cell_forward(const RnnCellParams& p, const Tensor& x_t, const Tensor& h_prev);

struct LstmOutput {
    Tensor h;
    Tensor c;
};
LstmOutput lstm_cell_forward(const LstmCellParams& p, const Tensor& x_t,
                             const Tensor& h_prev, const Tensor& c_prev);

Tensor gru_cell_forward(const GruCellParams& p, const Tensor& x_t, const Tensor& h_prev);

Tensor output_head(const OutputHeadParams& p, const Tensor& h);

Tensor shorten_conv_forward(const ShortenConvParams& p, const Tensor& seq);

Tensor per_band_conv_forward(const PerBandConvParams& p, const Tensor& patch);

// Iterates the cell over xs (T x I) from h0 = 0 (and c0 = 0 for LSTM);
// returns the final hidden state.
Tensor run_sequence(const RnnCellParams& p, const Tensor& xs);
Tensor run_sequence(const LstmCellParams& p, const Tensor& xs);
Tensor run_sequence(const GruCellParams& p, const Tensor& xs);

// Runs every unit on the same sequence and sums the final hidden states
// in unit order.
Tensor parallel_gru_forward(const ParallelGruParams& p, const Tensor& xs);

// ---------------------------------------------------------------------
// Trainable layers (forward caches activations, backward consumes them)
// ---------------------------------------------------------------------

struct ParamRef {
    std::string name;
    Tensor* value;
    Tensor* grad;
};

class Layer {
public:
    virtual ~Layer() = default;

    // Runs the layer and records the activations backward() needs.
    virtual Tensor forward(const Tensor& input) = 0;

    // Accumulates parameter gradients and returns dL/dinput. Throws
    // StateError if no forward pass has been recorded.
    virtual Tensor backward(const Tensor& upstream) = 0;

    // Forward pass evaluated simultaneously at the two points the
    // SecantContext describes, in midpoint/difference form. Used by the
    // gradient checker to form exact central differences; does not touch
    // the backward cache.
    virtual STensor secant_forward(const STensor& input, const SecantContext& ctx) const = 0;

    virtual std::vector<ParamRef> parameters() = 0;

    void zero_grad();

protected:
    void require_cache(const char* layer_name) const;
    bool has_cache_ = false;
};

class RnnSequence : public Layer {
public:
    explicit RnnSequence(RnnCellParams params);
    Tensor forward(const Tensor& xs) override;
    Tensor backward(const Tensor& dh_last) override;
    STensor secant_forward(const STensor& input, const SecantContext& ctx) const override;
    std::vector<ParamRef> parameters() override;

    RnnCellParams& params() { return params_; }
    const RnnCellParams& params() const { return params_; }

private:
    RnnCellParams params_;
    RnnCellParams grads_;
    Tensor xs_;
    std::vector<Tensor> hs_;  // hs_[0] = 0, hs_[t+1] = step t output
};

class LstmSequence : public Layer {
public:
    explicit LstmSequence(LstmCellParams params);
    Tensor forward(const Tensor& xs) override;
    Tensor backward(const Tensor& dh_last) override;
    STensor secant_forward(const STensor& input, const SecantContext& ctx) const override;
    std::vector<ParamRef> parameters() override;

    LstmCellParams& params() { return params_; }
    const LstmCellParams& params() const { return params_; }

private:
    struct StepTrace {
        Tensor f, i, o, ctil, tanh_c;
    };
    LstmCellParams params_;
    LstmCellParams grads_;
    Tensor xs_;
    std::vector<Tensor> hs_, cs_;
    std::vector<StepTrace> steps_;
};

class GruSequence : public Layer {
public:
    explicit GruSequence(GruCellParams params);
    Tensor forward(const Tensor& xs) override;
    Tensor backward(const Tensor& dh_last) override;
    STensor secant_forward(const STensor& input, const SecantContext& ctx) const override;
    std::vector<ParamRef> parameters() override;

    GruCellParams& params() { return params_; }
    const GruCellParams& params() const { return params_; }

private:
    struct StepTrace {
        Tensor z, r, htil, rh;  // rh = r*h_prev, the reset-gated recurrent input
    };
    GruCellParams params_;
    GruCellParams grads_;
    Tensor xs_;
    std::vector<Tensor> hs_;
    std::vector<StepTrace> steps_;
};

class ParallelGruLayer : public Layer {
public:
    explicit ParallelGruLayer(ParallelGruParams params);
    Tensor forward(const Tensor& xs) override;
    Tensor backward(const Tensor& dh) override;
    STensor secant_forward(const STensor& input, const SecantContext& ctx) const override;
    std::vector<ParamRef> parameters() override;

    std::size_t unit_count() const { return units_.size(); }
    GruSequence& unit(std::size_t k) { return units_[k]; }

private:
    std::vector<GruSequence> units_;
};

class DenseHead : public Layer {
public:
    explicit DenseHead(OutputHeadParams params);
    Tensor forward(const Tensor& h) override;
    Tensor backward(const Tensor& dlogits) override;
    STensor secant_forward(const STensor& input, const SecantContext& ctx) const override;
    std::vector<ParamRef> parameters() override;

    OutputHeadParams& params() { return params_; }
    const OutputHeadParams& params() const { return params_; }

private:
    OutputHeadParams params_;
    OutputHeadParams grads_;
    Tensor h_;
};

class ShortenConv : public Layer {
public:
    explicit ShortenConv(ShortenConvParams params);
    Tensor forward(const Tensor& seq) override;
    Tensor backward(const Tensor& dout) override;
    STensor secant_forward(const STensor& input, const SecantContext& ctx) const override;
    std::vector<ParamRef> parameters() override;

    ShortenConvParams& params() { return params_; }
    const ShortenConvParams& params() const { return params_; }

private:
    ShortenConvParams params_;
    ShortenConvParams grads_;
    Tensor input_;
    Tensor output_;
};

class PerBandConv : public Layer {
public:
    explicit PerBandConv(PerBandConvParams params);
    Tensor forward(const Tensor& patch) override;
    Tensor backward(const Tensor& dout) override;
    STensor secant_forward(const STensor& input, const SecantContext& ctx) const override;
    std::vector<ParamRef> parameters() override;

    PerBandConvParams& params() { return params_; }
    const PerBandConvParams& params() const { return params_; }

private:
    PerBandConvParams params_;
    PerBandConvParams grads_;
    Tensor input_;
    Tensor output_;
};

// ---------------------------------------------------------------------
// Construction helpers
// ---------------------------------------------------------------------

RnnCellParams make_rnn_params(std::size_t input, std::size_t hidden,
                              Activation act = Activation::tanh);
LstmCellParams make_lstm_params(std::size_t input, std::size_t hidden);
GruCellParams make_gru_params(std::size_t input, std::size_t hidden);
OutputHeadParams make_head_params(std::size_t hidden, std::size_t classes);
ShortenConvParams make_shorten_params(std::size_t filters, std::size_t length,
                                      std::size_t in_channels, std::size_t stride,
                                      Activation act = Activation::tanh);

// Near-equal split of n filters over the 1x1 / 3x3 / 5x5 kernel sizes
// (remainder goes to 5x5), e.g. 16 -> 5/5/6.
std::vector<std::size_t> per_band_filter_sizes(std::size_t n);
PerBandConvParams make_per_band_params(std::size_t n, Activation act = Activation::relu);

// Uniform Glorot fill: entries ~ U(-sqrt(6/(fan_in+fan_out)), +...).
void glorot_fill(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng);

void init_rnn_params(RnnCellParams& p, Rng& rng);
void init_lstm_params(LstmCellParams& p, Rng& rng);
void init_gru_params(GruCellParams& p, Rng& rng);
void init_head_params(OutputHeadParams& p, Rng& rng);
void init_shorten_params(ShortenConvParams& p, Rng& rng);
void init_per_band_params(PerBandConvParams& p, Rng& rng);

// ---------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
};

// Compares the layer's analytic gradients (parameters and input) against
// central finite differences of a random-projection loss. step 1e-6,
// pass iff max relative error < tol with denominator max(|a|,|b|,floor).
GradCheckReport gradcheck_layer(Layer& layer, Tensor& input, std::uint64_t seed,
                                double step = 1e-6, double tol = 1e-6,
                                double denom_floor = 1e-8);

}  // namespace hsrnn
