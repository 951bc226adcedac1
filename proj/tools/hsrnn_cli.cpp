// Command-line front end. Everything goes through the hsrnn C API; this
// file only parses flags, shuttles JSON documents and formats output.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hsrnn.h"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

const std::vector<std::string> kVariants = {"rnn",       "lstm",      "gru",
                                            "st-gru",    "st-ss-gru", "st-ss-pgru"};

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

[[noreturn]] void api_fail(const char* what, hsr_status status) {
    throw std::runtime_error(std::string(what) + ": " + hsr_status_name(status) + ": " +
                             hsr_last_error());
}

void check(hsr_status status, const char* what) {
    if (status != HSR_OK) api_fail(what, status);
}

std::string take_string(char* s) {
    std::string out = s ? s : "";
    hsr_string_free(s);
    return out;
}

bool file_exists(const std::string& path) {
    std::ifstream f(path);
    return f.good();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// ENVI payload path next to a .hdr file.
std::string data_path_for(const std::string& header_path) {
    std::string base = header_path;
    if (base.size() > 4 && base.substr(base.size() - 4) == ".hdr") {
        base = base.substr(0, base.size() - 4);
        for (const char* ext : {"", ".raw", ".dat", ".img"}) {
            if (file_exists(base + ext)) return base + ext;
        }
        return base + ".raw";
    }
    return base + ".raw";
}

std::string normalize_variant(std::string v) {
    for (char& c : v) {
        if (c == '_') c = '-';
    }
    return v;
}

void require_known_variant(const std::string& v) {
    const std::string n = normalize_variant(v);
    for (const auto& known : kVariants) {
        if (n == known) return;
    }
    std::string list;
    for (const auto& known : kVariants) list += (list.empty() ? "" : ", ") + known;
    throw UsageError("unknown model '" + v + "' (expected one of: " + list + ")");
}

struct CubeHandle {
    hsr_cube* ptr = nullptr;
    ~CubeHandle() { hsr_cube_free(ptr); }
};
struct RasterHandle {
    hsr_raster* ptr = nullptr;
    ~RasterHandle() { hsr_raster_free(ptr); }
};
struct SplitHandle {
    hsr_split* ptr = nullptr;
    ~SplitHandle() { hsr_split_free(ptr); }
};
struct ModelHandle {
    hsr_model* ptr = nullptr;
    ~ModelHandle() { hsr_model_free(ptr); }
};

void load_cube(const std::string& header, CubeHandle& cube, bool normalize = true) {
    check(hsr_cube_load_envi(header.c_str(), data_path_for(header).c_str(), &cube.ptr),
          "loading cube");
    if (normalize) check(hsr_cube_normalize(cube.ptr), "normalizing cube");
}

std::string compose_spec_json(const std::string& variant, const json& config,
                              const CubeHandle& cube, const RasterHandle& gt) {
    json spec = config.contains("model") ? config["model"] : json::object();
    spec["variant"] = normalize_variant(variant);
    spec["bands"] = hsr_cube_bands(cube.ptr);
    spec["classes"] = hsr_raster_classes(gt.ptr);
    return spec.dump();
}

void print_metrics_table(const std::string& metrics_json) {
    const json m = json::parse(metrics_json);
    const double oa = m["overall_accuracy"].get<double>();
    std::printf("overall accuracy: %.2f%%  (%zu test samples)\n", 100.0 * oa,
                m["total"].get<std::size_t>());
    std::printf("class  accuracy\n");
    const auto& per_class = m["per_class"];
    for (std::size_t i = 0; i < per_class.size(); ++i) {
        std::printf("%5zu  %7.2f%%\n", i + 1, 100.0 * per_class[i].get<double>());
    }
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << text << "\n";
}

// ---- subcommands -------------------------------------------------------

int cmd_synth(const std::string& out_dir, int classes, std::size_t bands,
              const std::string& size, double noise, std::uint64_t seed) {
    std::size_t rows = 0, cols = 0;
    if (std::sscanf(size.c_str(), "%zux%zu", &rows, &cols) != 2 || rows == 0 || cols == 0) {
        throw UsageError("--size must look like 40x40");
    }
    if (classes < 2) throw UsageError("--classes must be >= 2");
    std::filesystem::create_directories(out_dir);

    CubeHandle cube;
    RasterHandle gt;
    check(hsr_synth_dataset(classes, bands, rows, cols, noise, seed, &cube.ptr, &gt.ptr),
          "generating dataset");

    const std::string cube_base = out_dir + "/synth_cube";
    const std::string gt_base = out_dir + "/synth_gt";
    check(hsr_cube_save_envi(cube.ptr, (cube_base + ".hdr").c_str(),
                             (cube_base + ".raw").c_str()),
          "writing cube");
    check(hsr_raster_save_envi(gt.ptr, (gt_base + ".hdr").c_str(), (gt_base + ".raw").c_str()),
          "writing ground truth");
    std::printf("wrote %s.hdr/.raw (%zux%zu, %zu bands) and %s.hdr/.raw (%d classes)\n",
                cube_base.c_str(), rows, cols, bands, gt_base.c_str(), classes);
    return kExitOk;
}

int cmd_train(const std::string& cube_hdr, const std::string& gt_hdr,
              const std::string& variant, const std::string& split_path,
              const std::string& config_path, const std::string& out_path,
              const std::string& metrics_path) {
    require_known_variant(variant);

    CubeHandle cube;
    load_cube(cube_hdr, cube);
    RasterHandle gt;
    check(hsr_raster_load_envi(gt_hdr.c_str(), data_path_for(gt_hdr).c_str(), &gt.ptr),
          "loading ground truth");

    const std::string split_text = read_file(split_path);
    const std::string config_text = config_path.empty() ? "{}" : read_file(config_path);
    const json config = json::parse(config_text);

    SplitHandle split;
    check(hsr_split_create(gt.ptr, split_text.c_str(), &split.ptr), "creating split");
    std::printf("split: %zu training / %zu test pixels\n", hsr_split_train_count(split.ptr),
                hsr_split_test_count(split.ptr));

    ModelHandle model;
    const std::string spec = compose_spec_json(variant, config, cube, gt);
    check(hsr_model_build(spec.c_str(), &model.ptr), "building model");
    size_t params = 0;
    check(hsr_model_parameter_count(model.ptr, &params), "counting parameters");
    std::printf("model: %s, %zu parameters\n", normalize_variant(variant).c_str(), params);

    char* losses = nullptr;
    check(hsr_train(model.ptr, cube.ptr, split.ptr, config_text.c_str(), &losses),
          "training");
    const json loss_history = json::parse(take_string(losses));
    if (!loss_history.empty()) {
        std::printf("loss: first epoch %.4f, last epoch %.4f\n",
                    loss_history.front().get<double>(), loss_history.back().get<double>());
    }

    check(hsr_model_save(model.ptr, out_path.c_str()), "saving model");

    char* metrics = nullptr;
    check(hsr_evaluate(model.ptr, cube.ptr, split.ptr, 0, &metrics), "evaluating");
    const std::string metrics_text = take_string(metrics);
    print_metrics_table(metrics_text);

    const std::string report_path =
        metrics_path.empty() ? out_path + ".metrics.json" : metrics_path;
    write_text_file(report_path, metrics_text);
    std::printf("model written to %s, metrics to %s\n", out_path.c_str(), report_path.c_str());
    return kExitOk;
}

int cmd_eval(const std::string& model_path, const std::string& cube_hdr,
             const std::string& gt_hdr, const std::string& split_path, const std::string& on,
             const std::string& metrics_path) {
    if (on != "train" && on != "test") throw UsageError("--on must be train or test");

    ModelHandle model;
    check(hsr_model_load(model_path.c_str(), &model.ptr), "loading model");
    CubeHandle cube;
    load_cube(cube_hdr, cube);
    RasterHandle gt;
    check(hsr_raster_load_envi(gt_hdr.c_str(), data_path_for(gt_hdr).c_str(), &gt.ptr),
          "loading ground truth");
    SplitHandle split;
    check(hsr_split_create(gt.ptr, read_file(split_path).c_str(), &split.ptr),
          "creating split");

    char* metrics = nullptr;
    check(hsr_evaluate(model.ptr, cube.ptr, split.ptr, on == "train" ? 1 : 0, &metrics),
          "evaluating");
    const std::string metrics_text = take_string(metrics);
    print_metrics_table(metrics_text);
    if (!metrics_path.empty()) write_text_file(metrics_path, metrics_text);
    return kExitOk;
}

int cmd_runs(const std::string& cube_hdr, const std::string& gt_hdr, const std::string& variant,
             const std::string& split_path, const std::string& config_path, std::size_t n,
             const std::string& report_path) {
    require_known_variant(variant);
    if (n < 2) throw UsageError("--n must be >= 2 (standard deviation is undefined for one run)");

    CubeHandle cube;
    load_cube(cube_hdr, cube);
    RasterHandle gt;
    check(hsr_raster_load_envi(gt_hdr.c_str(), data_path_for(gt_hdr).c_str(), &gt.ptr),
          "loading ground truth");

    const std::string split_text = read_file(split_path);
    const std::string config_text = config_path.empty() ? "{}" : read_file(config_path);
    const json config = json::parse(config_text);
    const std::string spec = compose_spec_json(variant, config, cube, gt);

    char* report = nullptr;
    check(hsr_repeat_runs(spec.c_str(), cube.ptr, gt.ptr, split_text.c_str(),
                          config_text.c_str(), n, &report),
          "running repeats");
    const std::string report_text = take_string(report);
    const json r = json::parse(report_text);
    std::printf("%s  %.2f±%.2f%%\n", normalize_variant(variant).c_str(),
                100.0 * r["mean_oa"].get<double>(), 100.0 * r["std_oa"].get<double>());
    if (!report_path.empty()) write_text_file(report_path, report_text);
    return kExitOk;
}

int cmd_map(const std::string& model_path, const std::string& cube_hdr,
            const std::string& out_path) {
    ModelHandle model;
    check(hsr_model_load(model_path.c_str(), &model.ptr), "loading model");
    CubeHandle cube;
    load_cube(cube_hdr, cube);
    check(hsr_classification_map(model.ptr, cube.ptr, out_path.c_str()), "rendering map");
    std::printf("classification map written to %s (%zux%zu)\n", out_path.c_str(),
                hsr_cube_cols(cube.ptr), hsr_cube_rows(cube.ptr));
    return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed) {
    char* report = nullptr;
    check(hsr_gradcheck(seed, &report), "gradient check");
    const json r = json::parse(take_string(report));
    for (const auto& layer : r["layers"]) {
        std::printf("%-14s max_rel_err=%.3e  %s\n",
                    layer["name"].get<std::string>().c_str(),
                    layer["max_rel_err"].get<double>(),
                    layer["pass"].get<bool>() ? "pass" : "FAIL");
    }
    const bool pass = r["pass"].get<bool>();
    std::printf("gradcheck %s (max_rel_err=%.3e, seed=%llu)\n", pass ? "passed" : "FAILED",
                r["max_rel_err"].get<double>(),
                static_cast<unsigned long long>(r["seed"].get<std::uint64_t>()));
    return pass ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Recurrent networks for hyperspectral image classification"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled scene");
    std::string synth_out = ".";
    int synth_classes = 4;
    std::size_t synth_bands = 64;
    std::string synth_size = "40x40";
    double synth_noise = 0.05;
    std::uint64_t synth_seed = 0;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--classes", synth_classes, "Number of classes");
    synth->add_option("--bands", synth_bands, "Number of spectral bands");
    synth->add_option("--size", synth_size, "Image size as ROWSxCOLS");
    synth->add_option("--noise", synth_noise, "Gaussian noise sigma");
    synth->add_option("--seed", synth_seed, "RNG seed");

    // train
    auto* train = app.add_subcommand("train", "Train a model and write it to disk");
    std::string train_cube, train_gt, train_model, train_split, train_config, train_out,
        train_metrics;
    train->add_option("--cube", train_cube, "ENVI header of the image cube")->required();
    train->add_option("--gt", train_gt, "ENVI header of the ground truth")->required();
    train->add_option("--model", train_model, "Model variant")->required();
    train->add_option("--split", train_split, "Split spec JSON file")->required();
    train->add_option("--config", train_config, "Train config JSON file");
    train->add_option("--out", train_out, "Output model file")->required();
    train->add_option("--metrics", train_metrics, "Metrics JSON output path");

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a saved model");
    std::string eval_model, eval_cube, eval_gt, eval_split, eval_metrics;
    std::string eval_on = "test";
    eval->add_option("--model", eval_model, "Model file")->required();
    eval->add_option("--cube", eval_cube, "ENVI header of the image cube")->required();
    eval->add_option("--gt", eval_gt, "ENVI header of the ground truth")->required();
    eval->add_option("--split", eval_split, "Split spec JSON file")->required();
    eval->add_option("--on", eval_on, "Evaluate on 'train' or 'test' pixels");
    eval->add_option("--metrics", eval_metrics, "Metrics JSON output path");

    // runs
    auto* runs = app.add_subcommand("runs", "Repeated independent runs, mean±std accuracy");
    std::string runs_cube, runs_gt, runs_model, runs_split, runs_config, runs_report;
    std::size_t runs_n = 10;
    runs->add_option("--cube", runs_cube, "ENVI header of the image cube")->required();
    runs->add_option("--gt", runs_gt, "ENVI header of the ground truth")->required();
    runs->add_option("--model", runs_model, "Model variant")->required();
    runs->add_option("--split", runs_split, "Split spec JSON file")->required();
    runs->add_option("--config", runs_config, "Train config JSON file");
    runs->add_option("--n", runs_n, "Number of independent runs");
    runs->add_option("--report", runs_report, "Report JSON output path");

    // map
    auto* map = app.add_subcommand("map", "Render a full-scene classification map");
    std::string map_model, map_cube, map_out;
    map->add_option("--model", map_model, "Model file")->required();
    map->add_option("--cube", map_cube, "ENVI header of the image cube")->required();
    map->add_option("--out", map_out, "Output PPM path")->required();

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "Check gradients of every layer type");
    std::uint64_t gradcheck_seed = 0;
    gradcheck->add_option("--seed", gradcheck_seed, "RNG seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (synth->parsed()) {
            return cmd_synth(synth_out, synth_classes, synth_bands, synth_size, synth_noise,
                             synth_seed);
        }
        if (train->parsed()) {
            return cmd_train(train_cube, train_gt, train_model, train_split, train_config,
                             train_out, train_metrics);
        }
        if (eval->parsed()) {
            return cmd_eval(eval_model, eval_cube, eval_gt, eval_split, eval_on, eval_metrics);
        }
        if (runs->parsed()) {
            return cmd_runs(runs_cube, runs_gt, runs_model, runs_split, runs_config, runs_n,
                            runs_report);
        }
        if (map->parsed()) return cmd_map(map_model, map_cube, map_out);
        if (gradcheck->parsed()) return cmd_gradcheck(gradcheck_seed);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "hsrnn-cli: usage error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "hsrnn-cli: error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}
