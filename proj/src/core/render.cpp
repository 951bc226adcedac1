#include "core/render.hpp"

#include <fstream>

#include "core/train.hpp"

namespace hsrnn {

namespace {

// 16 distinct colors, loosely following the conventions of published
// land-cover maps (vegetation greens, soil browns, built-up greys/reds).
constexpr Rgb kPalette[16] = {
    {216, 30, 40},    // 1  red
    {86, 180, 60},    // 2  green
    {60, 120, 216},   // 3  blue
    {255, 210, 40},   // 4  yellow
    {160, 60, 200},   // 5  purple
    {60, 200, 200},   // 6  cyan
    {240, 130, 30},   // 7  orange
    {140, 90, 40},    // 8  brown
    {250, 250, 250},  // 9  white
    {120, 220, 120},  // 10 light green
    {250, 150, 180},  // 11 pink
    {30, 60, 130},    // 12 navy
    {170, 170, 60},   // 13 olive
    {100, 100, 100},  // 14 grey
    {200, 230, 40},   // 15 lime
    {130, 30, 90},    // 16 plum
};

}  // namespace

Rgb class_color(int class_id) {
    if (class_id <= 0) return {0, 0, 0};
    return kPalette[static_cast<std::size_t>(class_id - 1) % 16];
}

void write_ppm(const std::string& path, std::size_t width, std::size_t height,
               const std::vector<std::uint8_t>& rgb) {
    if (rgb.size() != 3 * width * height) {
        throw ArgumentError("ppm buffer has " + std::to_string(rgb.size()) +
                            " bytes, expected " + std::to_string(3 * width * height));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "P6\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(rgb.data()),
              static_cast<std::streamsize>(rgb.size()));
    if (!out) throw IoError("failed writing PPM '" + path + "'");
}

void render_classification_map(const Model& model, const HsiCube& cube,
                               const std::string& path) {
    if (cube.bands != model.spec().bands) {
        throw DimensionError("cube has " + std::to_string(cube.bands) + " bands, model expects " +
                             std::to_string(model.spec().bands));
    }
    std::vector<std::uint8_t> rgb(3 * cube.rows * cube.cols);
    for (std::size_t r = 0; r < cube.rows; ++r) {
        for (std::size_t c = 0; c < cube.cols; ++c) {
            const Tensor input = sample_input(model.spec(), cube, r, c);
            const Tensor logits = model.classify(input);
            int pred = 1;
            for (std::size_t i = 1; i < logits.size(); ++i) {
                if (logits[i] > logits[pred - 1]) pred = static_cast<int>(i) + 1;
            }
            const Rgb color = class_color(pred);
            const std::size_t base = 3 * (r * cube.cols + c);
            rgb[base] = color[0];
            rgb[base + 1] = color[1];
            rgb[base + 2] = color[2];
        }
    }
    write_ppm(path, cube.cols, cube.rows, rgb);
}

void render_ground_truth(const GroundTruth& gt, const std::string& path) {
    std::vector<std::uint8_t> rgb(3 * gt.rows * gt.cols);
    for (std::size_t i = 0; i < gt.labels.size(); ++i) {
        const Rgb color = class_color(gt.labels[i]);
        rgb[3 * i] = color[0];
        rgb[3 * i + 1] = color[1];
        rgb[3 * i + 2] = color[2];
    }
    write_ppm(path, gt.cols, gt.rows, rgb);
}

}  // namespace hsrnn
