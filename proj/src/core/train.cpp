#include "core/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "core/rng.hpp"

namespace hsrnn {

namespace {

using nlohmann::json;

void check_label(const Tensor& logits, int label) {
    if (logits.rank() != 1 || logits.size() < 2) {
        throw ArgumentError("cross_entropy expects rank-1 logits with >= 2 classes, got " +
                            logits.shape_string());
    }
    if (label < 1 || static_cast<std::size_t>(label) > logits.size()) {
        throw ArgumentError("label " + std::to_string(label) + " out of range 1.." +
                            std::to_string(logits.size()));
    }
}

double log_sum_exp(const Tensor& logits) {
    double max = logits[0];
    for (std::size_t i = 1; i < logits.size(); ++i) max = std::max(max, logits[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) sum += std::exp(logits[i] - max);
    return max + std::log(sum);
}

int argmax_class(const Tensor& logits) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) best = i;
    }
    return static_cast<int>(best) + 1;
}

}  // namespace

double cross_entropy(const Tensor& logits, int label) {
    check_label(logits, label);
    return log_sum_exp(logits) - logits[static_cast<std::size_t>(label - 1)];
}

Tensor cross_entropy_grad(const Tensor& logits, int label) {
    check_label(logits, label);
    Tensor g = softmax(logits);
    g[static_cast<std::size_t>(label - 1)] -= 1.0;
    return g;
}

void TrainConfig::validate() const {
    if (lr < 0.0) throw ConfigError("learning rate must be non-negative");
    if (batch < 1) throw ConfigError("batch size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (epsilon <= 0.0) throw ConfigError("adam epsilon must be positive");
}

std::string TrainConfig::to_json() const {
    json j;
    j["lr"] = lr;
    j["batch"] = batch;
    j["epochs"] = epochs;
    j["optimizer"] = optimizer == Optimizer::sgd ? "sgd" : "adam";
    j["beta1"] = beta1;
    j["beta2"] = beta2;
    j["epsilon"] = epsilon;
    j["seed"] = seed;
    j["shuffle"] = shuffle;
    return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("train config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");

    TrainConfig cfg;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        if (key == "lr") cfg.lr = it.value().get<double>();
        else if (key == "batch") cfg.batch = it.value().get<std::size_t>();
        else if (key == "epochs") cfg.epochs = it.value().get<std::size_t>();
        else if (key == "optimizer") {
            const std::string name = it.value().get<std::string>();
            if (name == "sgd") cfg.optimizer = Optimizer::sgd;
            else if (name == "adam") cfg.optimizer = Optimizer::adam;
            else throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
        } else if (key == "beta1") cfg.beta1 = it.value().get<double>();
        else if (key == "beta2") cfg.beta2 = it.value().get<double>();
        else if (key == "epsilon") cfg.epsilon = it.value().get<double>();
        else if (key == "seed") cfg.seed = it.value().get<std::uint64_t>();
        else if (key == "shuffle") cfg.shuffle = it.value().get<bool>();
        else if (key == "model") { /* model overrides are consumed by the caller */ }
        else throw ConfigError("unknown train config field '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

void SgdOptimizer::step(std::vector<ParamRef>& params) {
    for (auto& p : params) {
        for (std::size_t i = 0; i < p.value->size(); ++i) {
            (*p.value)[i] -= lr_ * (*p.grad)[i];
        }
    }
}

void AdamOptimizer::step(std::vector<ParamRef>& params) {
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.value->size(), 0.0);
            v_.emplace_back(p.value->size(), 0.0);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k];
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < p.value->size(); ++i) {
            const double g = (*p.grad)[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            (*p.value)[i] -= lr_ * mhat / (std::sqrt(vhat) + epsilon_);
        }
    }
}

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& cfg) {
    if (cfg.optimizer == TrainConfig::Optimizer::sgd) {
        return std::make_unique<SgdOptimizer>(cfg.lr);
    }
    return std::make_unique<AdamOptimizer>(cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon);
}

Tensor sample_input(const ModelSpec& spec, const HsiCube& cube, std::size_t row,
                    std::size_t col) {
    if (spec.uses_spatial()) return extract_patch(cube, row, col, spec.patch);
    return extract_spectrum(cube, row, col);
}

std::vector<double> train_model(Model& model, const HsiCube& cube, const SampleSet& train,
                                const TrainConfig& cfg) {
    if (train.empty()) throw ArgumentError("training set is empty");
    cfg.validate();
    if (cube.bands != model.spec().bands) {
        throw DimensionError("cube has " + std::to_string(cube.bands) + " bands, model expects " +
                             std::to_string(model.spec().bands));
    }

    auto params = model.parameters();
    auto optimizer = make_optimizer(cfg);
    Rng shuffle_rng(cfg.seed);

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> losses;
    losses.reserve(cfg.epochs);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t count = std::min(cfg.batch, order.size() - start);
            model.zero_grad();
            for (std::size_t i = 0; i < count; ++i) {
                const Sample& s = train[order[start + i]];
                const Tensor input = sample_input(model.spec(), cube, s.row, s.col);
                const Tensor logits = model.forward(input);
                epoch_loss += cross_entropy(logits, s.label);
                Tensor dlogits = cross_entropy_grad(logits, s.label);
                for (std::size_t j = 0; j < dlogits.size(); ++j) {
                    dlogits[j] /= static_cast<double>(count);
                }
                model.backward(dlogits);
            }
            optimizer->step(params);
        }
        losses.push_back(epoch_loss / static_cast<double>(train.size()));
    }
    return losses;
}

std::string Metrics::to_json() const {
    json j;
    j["overall_accuracy"] = overall_accuracy;
    j["per_class"] = per_class;
    j["classes"] = classes;
    j["total"] = total;
    json rows = json::array();
    for (std::size_t t = 0; t < classes; ++t) {
        json row = json::array();
        for (std::size_t p = 0; p < classes; ++p) row.push_back(confusion[t * classes + p]);
        rows.push_back(row);
    }
    j["confusion"] = rows;
    j["loss_history"] = loss_history;
    return j.dump();
}

Metrics evaluate_model(const Model& model, const HsiCube& cube, const SampleSet& test) {
    if (test.empty()) throw ArgumentError("test set is empty");
    const std::size_t C = model.spec().classes;
    Metrics m;
    m.classes = C;
    m.total = test.size();
    m.confusion.assign(C * C, 0);
    for (const Sample& s : test) {
        if (s.label < 1 || static_cast<std::size_t>(s.label) > C) {
            throw DataError("test sample label " + std::to_string(s.label) +
                            " outside model classes 1.." + std::to_string(C));
        }
        const Tensor input = sample_input(model.spec(), cube, s.row, s.col);
        const int pred = argmax_class(model.classify(input));
        ++m.confusion[static_cast<std::size_t>(s.label - 1) * C +
                      static_cast<std::size_t>(pred - 1)];
    }
    std::size_t correct = 0;
    m.per_class.assign(C, 0.0);
    for (std::size_t t = 0; t < C; ++t) {
        correct += m.confusion[t * C + t];
        std::size_t row_total = 0;
        for (std::size_t p = 0; p < C; ++p) row_total += m.confusion[t * C + p];
        m.per_class[t] = row_total == 0
                             ? 0.0
                             : static_cast<double>(m.confusion[t * C + t]) /
                                   static_cast<double>(row_total);
    }
    m.overall_accuracy = static_cast<double>(correct) / static_cast<double>(m.total);
    return m;
}

std::string RepeatResult::to_json() const {
    json j;
    j["mean_oa"] = mean_oa;
    j["std_oa"] = std_oa;
    json runs_json = json::array();
    for (const auto& r : runs) runs_json.push_back(json::parse(r.to_json()));
    j["runs"] = runs_json;
    return j.dump();
}

RepeatResult repeat_runs(const ModelSpec& spec, const HsiCube& cube, const GroundTruth& gt,
                         const SplitSpec& split, const TrainConfig& cfg, std::size_t n) {
    if (n < 2) throw ArgumentError("repeat_runs needs n >= 2, got " + std::to_string(n));
    RepeatResult result;
    std::vector<double> oas;
    for (std::size_t i = 0; i < n; ++i) {
        SplitSpec run_split = split;
        run_split.seed = split.seed + i;
        ModelSpec run_spec = spec;
        run_spec.seed = spec.seed + i;
        TrainConfig run_cfg = cfg;
        run_cfg.seed = cfg.seed + i;

        auto [train, test] = make_split(gt, run_split);
        Model model(run_spec);
        auto losses = train_model(model, cube, train, run_cfg);
        Metrics m = evaluate_model(model, cube, test);
        m.loss_history = std::move(losses);
        oas.push_back(m.overall_accuracy);
        result.runs.push_back(std::move(m));
    }
    const double mean = std::accumulate(oas.begin(), oas.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double oa : oas) var += (oa - mean) * (oa - mean);
    var /= static_cast<double>(n - 1);
    result.mean_oa = mean;
    result.std_oa = std::sqrt(var);
    return result;
}

}  // namespace hsrnn
