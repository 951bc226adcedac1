#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/model.hpp"

namespace hsrnn {

using Rgb = std::array<std::uint8_t, 3>;

// Fixed high-contrast palette: class 0 (unlabeled) is black, ids 1..16
// get distinct colors; ids beyond 16 wrap around.
Rgb class_color(int class_id);

// Binary PPM (P6, maxval 255); rgb is row-major, 3 bytes per pixel.
void write_ppm(const std::string& path, std::size_t width, std::size_t height,
               const std::vector<std::uint8_t>& rgb);

// Classifies every pixel (mirror-padded patches at the borders) and
// writes the colored map as a cols x rows PPM.
void render_classification_map(const Model& model, const HsiCube& cube,
                               const std::string& path);

// Colors a ground-truth raster with the same palette.
void render_ground_truth(const GroundTruth& gt, const std::string& path);

}  // namespace hsrnn
