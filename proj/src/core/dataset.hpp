#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "core/tensor.hpp"

namespace hsrnn {

// Hyperspectral cube: rows x cols x bands, band values as float64.
struct HsiCube {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t bands = 0;
    Tensor values;  // rows x cols x bands

    double at(std::size_t r, std::size_t c, std::size_t b) const { return values.at(r, c, b); }
};

// Per-pixel class labels; 0 = unlabeled, classes are contiguous 1..C.
struct GroundTruth {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<int> labels;  // row-major, rows*cols
    int classes = 0;

    int at(std::size_t r, std::size_t c) const { return labels[r * cols + c]; }
};

// ENVI ingest: plain-text header (key = value) plus raw BSQ payload.
// Supported data types: 1=u8, 2=i16, 4=f32, 5=f64, 12=u16; byte order 0.
HsiCube load_envi_cube(const std::string& header_path, const std::string& data_path);
GroundTruth load_envi_gt(const std::string& header_path, const std::string& data_path);

void save_envi_cube(const HsiCube& cube, const std::string& header_path,
                    const std::string& data_path);
void save_envi_gt(const GroundTruth& gt, const std::string& header_path,
                  const std::string& data_path);

// Per-band min-max scaling to [0,1]; constant bands map to 0. Idempotent.
HsiCube normalize(HsiCube cube);

// P x P x D window centered at (row, col); coordinates outside the image
// are mirror-reflected about the edge (no edge duplication).
Tensor extract_patch(const HsiCube& cube, std::size_t row, std::size_t col, std::size_t patch);

// The pixel's own spectrum as a D-vector.
Tensor extract_spectrum(const HsiCube& cube, std::size_t row, std::size_t col);

struct Sample {
    std::uint32_t row = 0;
    std::uint32_t col = 0;
    int label = 0;
};

using SampleSet = std::vector<Sample>;

// Per-class training counts plus the draw seed. per_class, when set,
// applies one count to every class in the raster.
struct SplitSpec {
    std::map<int, std::size_t> counts;
    std::size_t per_class = 0;
    std::uint64_t seed = 0;

    // Accepts {"seed":0,"counts":{"1":548,...}}, {"seed":0,"per_class":50},
    // or the flat form {"1":548,...,"seed":0}.
    static SplitSpec from_json(const std::string& text);
};

// Draws exactly the requested count per class uniformly without
// replacement; every remaining labeled pixel lands in the test set.
std::pair<SampleSet, SampleSet> make_split(const GroundTruth& gt, const SplitSpec& spec);

struct SynthConfig {
    int classes = 4;
    std::size_t bands = 64;
    std::size_t rows = 40;
    std::size_t cols = 40;
    double noise = 0.05;
    std::uint64_t seed = 0;
};

// Fully labeled synthetic scene: C contiguous regions, each with a smooth
// distinct spectral signature (2-3 Gaussian bumps over the band axis)
// plus i.i.d. Gaussian noise.
std::pair<HsiCube, GroundTruth> synth_dataset(const SynthConfig& cfg);

}  // namespace hsrnn
