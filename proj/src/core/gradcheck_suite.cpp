#include "core/gradcheck_suite.hpp"

#include <json.hpp>

#include "core/model.hpp"
#include "core/rng.hpp"

namespace hsrnn {

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

}  // namespace

std::string GradcheckSuiteReport::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["max_rel_err"] = max_rel_err;
    j["pass"] = pass;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& l : layers) {
        arr.push_back({{"name", l.name}, {"max_rel_err", l.max_rel_err}, {"pass", l.pass}});
    }
    j["layers"] = arr;
    return j.dump();
}

GradcheckSuiteReport run_gradcheck_suite(std::uint64_t seed, double step, double denom_floor) {
    GradcheckSuiteReport report;
    report.seed = seed;

    std::size_t idx = 0;
    auto check = [&](const std::string& name, Layer& layer, Tensor input) {
        const auto r = gradcheck_layer(layer, input, derive_seed(seed, idx * 3 + 2), step, 1e-6,
                                       denom_floor);
        report.layers.push_back({name, r.max_rel_err, r.pass});
        report.max_rel_err = std::max(report.max_rel_err, r.max_rel_err);
        ++idx;
    };
    auto params_rng = [&] { return Rng(derive_seed(seed, idx * 3)); };
    auto input_rng = [&] { return Rng(derive_seed(seed, idx * 3 + 1)); };

    {
        Rng pr = params_rng(), ir = input_rng();
        auto p = make_rnn_params(3, 4);
        init_rnn_params(p, pr);
        RnnSequence layer(std::move(p));
        check("rnn_cell", layer, random_tensor({3, 3}, ir));
    }
    {
        Rng pr = params_rng(), ir = input_rng();
        auto p = make_lstm_params(3, 4);
        init_lstm_params(p, pr);
        LstmSequence layer(std::move(p));
        check("lstm_cell", layer, random_tensor({3, 3}, ir));
    }
    {
        Rng pr = params_rng(), ir = input_rng();
        auto p = make_gru_params(3, 4);
        init_gru_params(p, pr);
        GruSequence layer(std::move(p));
        check("gru_cell", layer, random_tensor({3, 3}, ir));
    }
    {
        Rng pr = params_rng(), ir = input_rng();
        auto p = make_head_params(5, 4);
        init_head_params(p, pr);
        DenseHead layer(std::move(p));
        check("output_head", layer, random_tensor({5}, ir));
    }
    {
        Rng pr = params_rng(), ir = input_rng();
        const auto g = derive_shorten_geometry(12, 3);
        auto p = make_shorten_params(4, g.kernel, 3, g.stride);
        init_shorten_params(p, pr);
        ShortenConv layer(std::move(p));
        check("shorten_conv", layer, random_tensor({12, 3}, ir));
    }
    {
        Rng pr = params_rng(), ir = input_rng();
        auto p = make_per_band_params(4);
        init_per_band_params(p, pr);
        PerBandConv layer(std::move(p));
        check("per_band_conv", layer, random_tensor({5, 5, 6}, ir));
    }
    {
        Rng pr = params_rng(), ir = input_rng();
        ParallelGruParams p;
        for (int k = 0; k < 2; ++k) {
            auto unit = make_gru_params(3, 4);
            init_gru_params(unit, pr);
            p.units.push_back(std::move(unit));
        }
        ParallelGruLayer layer(std::move(p));
        check("parallel_gru", layer, random_tensor({3, 3}, ir));
    }
    {
        Rng ir = input_rng();
        ModelSpec spec;
        spec.variant = Variant::st_ss_pgru;
        spec.bands = 12;
        spec.classes = 3;
        spec.patch = 5;
        spec.spatial_filters = 4;
        spec.shorten_filters = 4;
        spec.timesteps = 3;
        spec.hidden = 6;
        spec.units = 2;
        spec.seed = derive_seed(seed, idx * 3);
        Model model(spec);
        check("st_ss_pgru", model, random_tensor({5, 5, 12}, ir));
    }

    report.pass = true;
    for (const auto& l : report.layers) report.pass = report.pass && l.pass;
    return report;
}

}  // namespace hsrnn
