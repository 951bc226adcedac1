#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>

#include "core/layers.hpp"

namespace hsrnn {

enum class Variant { rnn, lstm, gru, st_gru, st_ss_gru, st_ss_pgru };

const char* variant_name(Variant v);
// Accepts hyphenated or underscored spellings ("st-ss-pgru" == "st_ss_pgru").
Variant variant_from_name(const std::string& name);

// Architecture description. D/N/M/T/H/K/C of the network figures map to
// bands/spatial_filters/shorten_filters/timesteps/hidden/units/classes.
struct ModelSpec {
    Variant variant = Variant::gru;
    std::size_t bands = 0;
    std::size_t classes = 0;
    std::size_t patch = 1;            // P; 1 for spectral-only variants
    std::size_t spatial_filters = 0;  // N
    std::size_t shorten_filters = 0;  // M
    std::size_t timesteps = 0;        // T
    std::size_t hidden = 0;           // H
    std::size_t units = 1;            // K
    Activation rnn_activation = Activation::tanh;
    Activation shorten_activation = Activation::tanh;
    Activation spatial_activation = Activation::relu;
    std::uint64_t seed = 0;

    bool uses_spatial() const {
        return variant == Variant::st_ss_gru || variant == Variant::st_ss_pgru;
    }
    bool uses_shorten() const {
        return variant == Variant::st_gru || variant == Variant::st_ss_gru ||
               variant == Variant::st_ss_pgru;
    }
    bool uses_parallel() const { return variant == Variant::st_ss_pgru; }

    // Throws ConfigError listing every violation at once.
    void validate() const;

    // Canonical form: every field, keys sorted. Two equal specs always
    // serialize to identical text.
    std::string to_json() const;
    static ModelSpec from_json(const std::string& text);
};

// A built network: spec plus every learned parameter tensor. Implements
// the Layer interface so the trainer and the gradient checker drive a
// whole model exactly like a single layer.
class Model : public Layer {
public:
    explicit Model(ModelSpec spec);

    const ModelSpec& spec() const { return spec_; }

    // Training path: caches activations for backward().
    // Accepts a D-vector or a 1x1xD patch for spectral variants, and a
    // PxPxD patch for spatial-spectral ones.
    Tensor forward(const Tensor& sample) override;
    Tensor backward(const Tensor& dlogits) override;
    STensor secant_forward(const STensor& sample, const SecantContext& ctx) const override;
    std::vector<ParamRef> parameters() override;

    // Pure inference: same arithmetic as forward(), no caches touched.
    // Safe to call concurrently on a shared const model.
    Tensor classify(const Tensor& sample) const;

    std::size_t parameter_count() const;

    void save(std::ostream& out) const;
    void save_file(const std::string& path) const;
    static Model load(std::istream& in);
    static Model load_file(const std::string& path);

private:
    Tensor to_sequence(const Tensor& sample) const;  // spectral input -> D x 1

    ModelSpec spec_;
    std::unique_ptr<PerBandConv> spatial_;
    std::unique_ptr<ShortenConv> shorten_;
    std::unique_ptr<RnnSequence> rnn_;
    std::unique_ptr<LstmSequence> lstm_;
    std::unique_ptr<GruSequence> gru_;
    std::unique_ptr<ParallelGruLayer> pgru_;
    std::unique_ptr<DenseHead> head_;
    std::vector<std::size_t> input_shape_;  // shape the last forward() saw
};

}  // namespace hsrnn
