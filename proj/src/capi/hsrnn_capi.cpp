#include "hsrnn.h"

#include <cstdlib>
#include <cstring>
#include <string>
#include <utility>

#include <json.hpp>

#include "core/dataset.hpp"
#include "core/gradcheck_suite.hpp"
#include "core/model.hpp"
#include "core/render.hpp"
#include "core/train.hpp"

struct hsr_cube {
    hsrnn::HsiCube value;
};
struct hsr_raster {
    hsrnn::GroundTruth value;
};
struct hsr_split {
    hsrnn::SampleSet train;
    hsrnn::SampleSet test;
};
struct hsr_model {
    hsrnn::Model value;
};

namespace {

thread_local std::string g_last_error;

hsr_status status_of(const hsrnn::Error& e) {
    using Kind = hsrnn::Error::Kind;
    switch (e.kind()) {
        case Kind::argument: return HSR_ERROR_ARGUMENT;
        case Kind::dimension: return HSR_ERROR_DIMENSION;
        case Kind::format: return HSR_ERROR_FORMAT;
        case Kind::data: return HSR_ERROR_DATA;
        case Kind::config: return HSR_ERROR_CONFIG;
        case Kind::state: return HSR_ERROR_STATE;
        case Kind::io: return HSR_ERROR_IO;
    }
    return HSR_ERROR_INTERNAL;
}

hsr_status fail(hsr_status status, const std::string& message) {
    g_last_error = message;
    return status;
}

// Runs the body and routes every exception into a status code.
template <typename Fn>
hsr_status guarded(Fn&& fn) {
    try {
        fn();
        return HSR_OK;
    } catch (const hsrnn::Error& e) {
        return fail(status_of(e), e.what());
    } catch (const std::bad_alloc&) {
        return fail(HSR_ERROR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(HSR_ERROR_INTERNAL, e.what());
    }
}

hsr_status require(bool ok, const char* what) {
    return ok ? HSR_OK : fail(HSR_ERROR_ARGUMENT, std::string(what) + " must not be null");
}

char* copy_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

}  // namespace

extern "C" {

const char* hsr_version(void) { return "1.0.0"; }

const char* hsr_status_name(hsr_status status) {
    switch (status) {
        case HSR_OK: return "ok";
        case HSR_ERROR_ARGUMENT: return "argument error";
        case HSR_ERROR_DIMENSION: return "dimension error";
        case HSR_ERROR_FORMAT: return "format error";
        case HSR_ERROR_DATA: return "data error";
        case HSR_ERROR_CONFIG: return "config error";
        case HSR_ERROR_STATE: return "state error";
        case HSR_ERROR_IO: return "io error";
        case HSR_ERROR_INTERNAL: return "internal error";
    }
    return "unknown";
}

const char* hsr_last_error(void) { return g_last_error.c_str(); }

void hsr_string_free(char* s) { std::free(s); }

/* ---- data ----------------------------------------------------------- */

hsr_status hsr_cube_load_envi(const char* header_path, const char* data_path, hsr_cube** out) {
    if (auto s = require(header_path && data_path && out, "path/out")) return s;
    *out = nullptr;
    return guarded([&] {
        *out = new hsr_cube{hsrnn::load_envi_cube(header_path, data_path)};
    });
}

hsr_status hsr_cube_save_envi(const hsr_cube* cube, const char* header_path,
                              const char* data_path) {
    if (auto s = require(cube && header_path && data_path, "cube/path")) return s;
    return guarded([&] { hsrnn::save_envi_cube(cube->value, header_path, data_path); });
}

hsr_status hsr_cube_normalize(hsr_cube* cube) {
    if (auto s = require(cube != nullptr, "cube")) return s;
    return guarded([&] { cube->value = hsrnn::normalize(std::move(cube->value)); });
}

size_t hsr_cube_rows(const hsr_cube* cube) { return cube ? cube->value.rows : 0; }
size_t hsr_cube_cols(const hsr_cube* cube) { return cube ? cube->value.cols : 0; }
size_t hsr_cube_bands(const hsr_cube* cube) { return cube ? cube->value.bands : 0; }
void hsr_cube_free(hsr_cube* cube) { delete cube; }

hsr_status hsr_raster_load_envi(const char* header_path, const char* data_path,
                                hsr_raster** out) {
    if (auto s = require(header_path && data_path && out, "path/out")) return s;
    *out = nullptr;
    return guarded([&] {
        *out = new hsr_raster{hsrnn::load_envi_gt(header_path, data_path)};
    });
}

hsr_status hsr_raster_save_envi(const hsr_raster* raster, const char* header_path,
                                const char* data_path) {
    if (auto s = require(raster && header_path && data_path, "raster/path")) return s;
    return guarded([&] { hsrnn::save_envi_gt(raster->value, header_path, data_path); });
}

size_t hsr_raster_rows(const hsr_raster* raster) { return raster ? raster->value.rows : 0; }
size_t hsr_raster_cols(const hsr_raster* raster) { return raster ? raster->value.cols : 0; }
int hsr_raster_classes(const hsr_raster* raster) { return raster ? raster->value.classes : 0; }
void hsr_raster_free(hsr_raster* raster) { delete raster; }

hsr_status hsr_synth_dataset(int classes, size_t bands, size_t rows, size_t cols, double noise,
                             uint64_t seed, hsr_cube** cube_out, hsr_raster** gt_out) {
    if (auto s = require(cube_out && gt_out, "out")) return s;
    *cube_out = nullptr;
    *gt_out = nullptr;
    return guarded([&] {
        hsrnn::SynthConfig cfg;
        cfg.classes = classes;
        cfg.bands = bands;
        cfg.rows = rows;
        cfg.cols = cols;
        cfg.noise = noise;
        cfg.seed = seed;
        auto [cube, gt] = hsrnn::synth_dataset(cfg);
        *cube_out = new hsr_cube{std::move(cube)};
        *gt_out = new hsr_raster{std::move(gt)};
    });
}

/* ---- splits ---------------------------------------------------------- */

hsr_status hsr_split_create(const hsr_raster* raster, const char* split_json, hsr_split** out) {
    if (auto s = require(raster && split_json && out, "raster/json/out")) return s;
    *out = nullptr;
    return guarded([&] {
        const auto spec = hsrnn::SplitSpec::from_json(split_json);
        auto [train, test] = hsrnn::make_split(raster->value, spec);
        *out = new hsr_split{std::move(train), std::move(test)};
    });
}

size_t hsr_split_train_count(const hsr_split* split) { return split ? split->train.size() : 0; }
size_t hsr_split_test_count(const hsr_split* split) { return split ? split->test.size() : 0; }
void hsr_split_free(hsr_split* split) { delete split; }

/* ---- models ---------------------------------------------------------- */

hsr_status hsr_model_build(const char* spec_json, hsr_model** out) {
    if (auto s = require(spec_json && out, "spec/out")) return s;
    *out = nullptr;
    return guarded([&] {
        *out = new hsr_model{hsrnn::Model(hsrnn::ModelSpec::from_json(spec_json))};
    });
}

hsr_status hsr_model_save(const hsr_model* model, const char* path) {
    if (auto s = require(model && path, "model/path")) return s;
    return guarded([&] { model->value.save_file(path); });
}

hsr_status hsr_model_load(const char* path, hsr_model** out) {
    if (auto s = require(path && out, "path/out")) return s;
    *out = nullptr;
    return guarded([&] { *out = new hsr_model{hsrnn::Model::load_file(path)}; });
}

hsr_status hsr_model_spec_json(const hsr_model* model, char** json_out) {
    if (auto s = require(model && json_out, "model/out")) return s;
    *json_out = nullptr;
    return guarded([&] { *json_out = copy_string(model->value.spec().to_json()); });
}

hsr_status hsr_model_parameter_count(const hsr_model* model, size_t* count_out) {
    if (auto s = require(model && count_out, "model/out")) return s;
    return guarded([&] { *count_out = model->value.parameter_count(); });
}

void hsr_model_free(hsr_model* model) { delete model; }

/* ---- training and evaluation ----------------------------------------- */

hsr_status hsr_train(hsr_model* model, const hsr_cube* cube, const hsr_split* split,
                     const char* config_json, char** loss_history_json) {
    if (auto s = require(model && cube && split && config_json, "model/cube/split/config")) {
        return s;
    }
    return guarded([&] {
        const auto cfg = hsrnn::TrainConfig::from_json(config_json);
        const auto losses = hsrnn::train_model(model->value, cube->value, split->train, cfg);
        if (loss_history_json) {
            *loss_history_json = copy_string(nlohmann::json(losses).dump());
        }
    });
}

hsr_status hsr_evaluate(const hsr_model* model, const hsr_cube* cube, const hsr_split* split,
                        int on_train, char** metrics_json) {
    if (auto s = require(model && cube && split && metrics_json, "model/cube/split/out")) {
        return s;
    }
    *metrics_json = nullptr;
    return guarded([&] {
        const auto& samples = on_train ? split->train : split->test;
        const auto metrics = hsrnn::evaluate_model(model->value, cube->value, samples);
        *metrics_json = copy_string(metrics.to_json());
    });
}

hsr_status hsr_repeat_runs(const char* spec_json, const hsr_cube* cube, const hsr_raster* raster,
                           const char* split_json, const char* config_json, size_t n,
                           char** report_json) {
    if (auto s = require(spec_json && cube && raster && split_json && config_json && report_json,
                         "spec/cube/raster/split/config/out")) {
        return s;
    }
    *report_json = nullptr;
    return guarded([&] {
        const auto spec = hsrnn::ModelSpec::from_json(spec_json);
        const auto split = hsrnn::SplitSpec::from_json(split_json);
        const auto cfg = hsrnn::TrainConfig::from_json(config_json);
        const auto result =
            hsrnn::repeat_runs(spec, cube->value, raster->value, split, cfg, n);
        *report_json = copy_string(result.to_json());
    });
}

/* ---- classification maps and gradient checking ----------------------- */

hsr_status hsr_classification_map(const hsr_model* model, const hsr_cube* cube,
                                  const char* ppm_path) {
    if (auto s = require(model && cube && ppm_path, "model/cube/path")) return s;
    return guarded([&] {
        hsrnn::render_classification_map(model->value, cube->value, ppm_path);
    });
}

hsr_status hsr_ground_truth_map(const hsr_raster* raster, const char* ppm_path) {
    if (auto s = require(raster && ppm_path, "raster/path")) return s;
    return guarded([&] { hsrnn::render_ground_truth(raster->value, ppm_path); });
}

hsr_status hsr_gradcheck(uint64_t seed, char** report_json) {
    if (auto s = require(report_json != nullptr, "out")) return s;
    *report_json = nullptr;
    return guarded([&] {
        *report_json = copy_string(hsrnn::run_gradcheck_suite(seed).to_json());
    });
}

}  // extern "C"
