#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/model.hpp"

namespace hsrnn {

// -log softmax(logits)[label], label is 1-based; log-sum-exp form.
double cross_entropy(const Tensor& logits, int label);

// d(loss)/d(logits) = softmax(logits) - onehot(label).
Tensor cross_entropy_grad(const Tensor& logits, int label);

struct TrainConfig {
    enum class Optimizer { sgd, adam };

    double lr = 1e-3;
    std::size_t batch = 64;
    std::size_t epochs = 100;
    Optimizer optimizer = Optimizer::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    bool shuffle = true;

    void validate() const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
};

class Optimizer {
public:
    virtual ~Optimizer() = default;
    virtual void step(std::vector<ParamRef>& params) = 0;
};

class SgdOptimizer : public Optimizer {
public:
    explicit SgdOptimizer(double lr) : lr_(lr) {}
    void step(std::vector<ParamRef>& params) override;

private:
    double lr_;
};

class AdamOptimizer : public Optimizer {
public:
    AdamOptimizer(double lr, double beta1, double beta2, double epsilon)
        : lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}
    void step(std::vector<ParamRef>& params) override;

private:
    double lr_, beta1_, beta2_, epsilon_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;  // first/second moments per tensor
};

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& cfg);

// Input for one pixel, shaped as the model expects (patch or spectrum).
Tensor sample_input(const ModelSpec& spec, const HsiCube& cube, std::size_t row,
                    std::size_t col);

// Mini-batch descent on mean cross-entropy with a seeded per-epoch
// shuffle; patches extracted on the fly. Returns per-epoch mean loss.
// Deterministic given (model seed, cfg seed).
std::vector<double> train_model(Model& model, const HsiCube& cube, const SampleSet& train,
                                const TrainConfig& cfg);

struct Metrics {
    double overall_accuracy = 0.0;
    std::vector<double> per_class;          // per-class recall, index = class-1
    std::vector<std::size_t> confusion;     // C x C row-major, rows = true class
    std::size_t classes = 0;
    std::size_t total = 0;
    std::vector<double> loss_history;

    std::size_t confusion_at(std::size_t truth, std::size_t pred) const {
        return confusion[(truth - 1) * classes + (pred - 1)];
    }
    std::string to_json() const;
};

Metrics evaluate_model(const Model& model, const HsiCube& cube, const SampleSet& test);

struct RepeatResult {
    double mean_oa = 0.0;
    double std_oa = 0.0;  // sample standard deviation
    std::vector<Metrics> runs;

    std::string to_json() const;
};

// n independent build+train+evaluate cycles with per-run seeds
// base+0..base+n-1 applied to the model, the split and the shuffle; a
// fresh split is drawn each run.
RepeatResult repeat_runs(const ModelSpec& spec, const HsiCube& cube, const GroundTruth& gt,
                         const SplitSpec& split, const TrainConfig& cfg, std::size_t n);

}  // namespace hsrnn
