#include "core/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "core/rng.hpp"

namespace hsrnn {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

struct EnviHeader {
    std::size_t samples = 0;  // cols
    std::size_t lines = 0;    // rows
    std::size_t bands = 0;
    int data_type = 0;
    std::string interleave;
    int byte_order = 0;
};

// `key = value` lines; {...} values (possibly multi-line) are skipped.
EnviHeader parse_envi_header(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open ENVI header '" + path + "'");

    std::map<std::string, std::string> fields;
    std::string line;
    while (std::getline(in, line)) {
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = lower(trim(line.substr(0, eq)));
        std::string value = trim(line.substr(eq + 1));
        if (!value.empty() && value.front() == '{') {
            while (value.find('}') == std::string::npos && std::getline(in, line)) {
                value += ' ' + trim(line);
            }
            continue;
        }
        fields[key] = value;
    }

    auto require = [&](const char* key) -> const std::string& {
        auto it = fields.find(key);
        if (it == fields.end()) {
            throw FormatError("ENVI header '" + path + "' is missing required field '" + key +
                              "'");
        }
        return it->second;
    };
    auto to_number = [&](const char* key, const std::string& v) -> long long {
        try {
            std::size_t pos = 0;
            const long long n = std::stoll(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return n;
        } catch (const std::exception&) {
            throw FormatError("ENVI header field '" + std::string(key) +
                              "' is not an integer: '" + v + "'");
        }
    };

    EnviHeader h;
    h.samples = static_cast<std::size_t>(to_number("samples", require("samples")));
    h.lines = static_cast<std::size_t>(to_number("lines", require("lines")));
    h.bands = static_cast<std::size_t>(to_number("bands", require("bands")));
    h.data_type = static_cast<int>(to_number("data type", require("data type")));
    h.interleave = lower(require("interleave"));
    h.byte_order = static_cast<int>(to_number("byte order", require("byte order")));

    if (h.samples == 0 || h.lines == 0 || h.bands == 0) {
        throw FormatError("ENVI header '" + path + "' declares a zero extent");
    }
    static const int supported[] = {1, 2, 4, 5, 12};
    if (std::find(std::begin(supported), std::end(supported), h.data_type) ==
        std::end(supported)) {
        throw FormatError("ENVI header field 'data type' unsupported: " +
                          std::to_string(h.data_type) + " (supported: 1, 2, 4, 5, 12)");
    }
    if (h.interleave != "bsq") {
        throw FormatError("ENVI header field 'interleave' must be bsq, got '" + h.interleave +
                          "'");
    }
    if (h.byte_order != 0) {
        throw FormatError("ENVI header field 'byte order' must be 0 (little-endian), got " +
                          std::to_string(h.byte_order));
    }
    return h;
}

std::size_t type_size(int data_type) {
    switch (data_type) {
        case 1: return 1;
        case 2: case 12: return 2;
        case 4: return 4;
        case 5: return 8;
    }
    return 0;
}

std::vector<unsigned char> read_payload(const std::string& path, const EnviHeader& h) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open ENVI payload '" + path + "'");
    const auto size = static_cast<std::size_t>(in.tellg());
    const std::size_t expected = h.samples * h.lines * h.bands * type_size(h.data_type);
    if (size != expected) {
        throw FormatError("ENVI payload '" + path + "' has " + std::to_string(size) +
                          " bytes, header declares " + std::to_string(expected));
    }
    std::vector<unsigned char> buf(size);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size));
    if (!in) throw IoError("failed reading ENVI payload '" + path + "'");
    return buf;
}

double decode_value(const unsigned char* p, int data_type) {
    switch (data_type) {
        case 1: return static_cast<double>(*p);
        case 2: {
            const std::uint16_t u = static_cast<std::uint16_t>(p[0]) |
                                    (static_cast<std::uint16_t>(p[1]) << 8);
            return static_cast<double>(static_cast<std::int16_t>(u));
        }
        case 12: {
            const std::uint16_t u = static_cast<std::uint16_t>(p[0]) |
                                    (static_cast<std::uint16_t>(p[1]) << 8);
            return static_cast<double>(u);
        }
        case 4: {
            std::uint32_t u = 0;
            for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(p[i]) << (8 * i);
            float f;
            std::memcpy(&f, &u, sizeof(f));
            return static_cast<double>(f);
        }
        case 5: {
            std::uint64_t u = 0;
            for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(p[i]) << (8 * i);
            double d;
            std::memcpy(&d, &u, sizeof(d));
            return d;
        }
    }
    return 0.0;
}

void write_header_file(const std::string& path, std::size_t rows, std::size_t cols,
                       std::size_t bands, int data_type) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "ENVI\n"
        << "samples = " << cols << "\n"
        << "lines = " << rows << "\n"
        << "bands = " << bands << "\n"
        << "header offset = 0\n"
        << "data type = " << data_type << "\n"
        << "interleave = bsq\n"
        << "byte order = 0\n";
    if (!out) throw IoError("failed writing ENVI header '" + path + "'");
}

// Mirror reflection about the image edge, no border duplication:
// index -1 -> 1, n -> n-2.
std::size_t reflect_index(long i, long n) {
    if (n == 1) return 0;
    const long period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    if (i >= n) i = period - i;
    return static_cast<std::size_t>(i);
}

}  // namespace

HsiCube load_envi_cube(const std::string& header_path, const std::string& data_path) {
    const EnviHeader h = parse_envi_header(header_path);
    const auto payload = read_payload(data_path, h);
    HsiCube cube;
    cube.rows = h.lines;
    cube.cols = h.samples;
    cube.bands = h.bands;
    cube.values = Tensor({cube.rows, cube.cols, cube.bands});
    const std::size_t ts = type_size(h.data_type);
    const std::size_t plane = cube.rows * cube.cols;
    for (std::size_t b = 0; b < cube.bands; ++b) {
        for (std::size_t r = 0; r < cube.rows; ++r) {
            for (std::size_t c = 0; c < cube.cols; ++c) {
                const unsigned char* p = payload.data() + (b * plane + r * cube.cols + c) * ts;
                cube.values.at(r, c, b) = decode_value(p, h.data_type);
            }
        }
    }
    if (!cube.values.all_finite()) {
        throw DataError("cube '" + data_path + "' contains non-finite values");
    }
    return cube;
}

GroundTruth load_envi_gt(const std::string& header_path, const std::string& data_path) {
    const EnviHeader h = parse_envi_header(header_path);
    if (h.bands != 1) {
        throw FormatError("ground truth '" + header_path + "' must have bands = 1, got " +
                          std::to_string(h.bands));
    }
    if (h.data_type != 1 && h.data_type != 2 && h.data_type != 12) {
        throw FormatError("ground truth '" + header_path +
                          "' must use an integer data type (1, 2 or 12), got " +
                          std::to_string(h.data_type));
    }
    const auto payload = read_payload(data_path, h);
    GroundTruth gt;
    gt.rows = h.lines;
    gt.cols = h.samples;
    gt.labels.resize(gt.rows * gt.cols);
    const std::size_t ts = type_size(h.data_type);
    for (std::size_t i = 0; i < gt.labels.size(); ++i) {
        const double v = decode_value(payload.data() + i * ts, h.data_type);
        const int label = static_cast<int>(v);
        if (label < 0) {
            throw DataError("ground truth '" + data_path + "' has negative label " +
                            std::to_string(label));
        }
        gt.labels[i] = label;
        gt.classes = std::max(gt.classes, label);
    }
    return gt;
}

void save_envi_cube(const HsiCube& cube, const std::string& header_path,
                    const std::string& data_path) {
    write_header_file(header_path, cube.rows, cube.cols, cube.bands, 5);
    std::ofstream out(data_path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + data_path + "' for writing");
    for (std::size_t b = 0; b < cube.bands; ++b) {
        for (std::size_t r = 0; r < cube.rows; ++r) {
            for (std::size_t c = 0; c < cube.cols; ++c) {
                const double v = cube.at(r, c, b);
                std::uint64_t u;
                std::memcpy(&u, &v, sizeof(u));
                char bytes[8];
                for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((u >> (8 * i)) & 0xff);
                out.write(bytes, 8);
            }
        }
    }
    if (!out) throw IoError("failed writing cube payload '" + data_path + "'");
}

void save_envi_gt(const GroundTruth& gt, const std::string& header_path,
                  const std::string& data_path) {
    for (int label : gt.labels) {
        if (label > 255) throw DataError("ground truth labels exceed u8 range");
    }
    write_header_file(header_path, gt.rows, gt.cols, 1, 1);
    std::ofstream out(data_path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + data_path + "' for writing");
    for (int label : gt.labels) out.put(static_cast<char>(label));
    if (!out) throw IoError("failed writing ground truth payload '" + data_path + "'");
}

HsiCube normalize(HsiCube cube) {
    for (std::size_t b = 0; b < cube.bands; ++b) {
        double lo = cube.at(0, 0, b), hi = lo;
        for (std::size_t r = 0; r < cube.rows; ++r) {
            for (std::size_t c = 0; c < cube.cols; ++c) {
                const double v = cube.at(r, c, b);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        const double range = hi - lo;
        for (std::size_t r = 0; r < cube.rows; ++r) {
            for (std::size_t c = 0; c < cube.cols; ++c) {
                double& v = cube.values.at(r, c, b);
                v = range == 0.0 ? 0.0 : (v - lo) / range;
            }
        }
    }
    return cube;
}

Tensor extract_patch(const HsiCube& cube, std::size_t row, std::size_t col, std::size_t patch) {
    if (patch % 2 == 0) {
        throw ArgumentError("patch size must be odd, got " + std::to_string(patch));
    }
    if (row >= cube.rows || col >= cube.cols) {
        throw ArgumentError("patch center (" + std::to_string(row) + "," + std::to_string(col) +
                            ") outside image " + std::to_string(cube.rows) + "x" +
                            std::to_string(cube.cols));
    }
    const long half = static_cast<long>(patch / 2);
    Tensor out({patch, patch, cube.bands});
    for (std::size_t a = 0; a < patch; ++a) {
        const std::size_t r =
            reflect_index(static_cast<long>(row) - half + static_cast<long>(a),
                          static_cast<long>(cube.rows));
        for (std::size_t b = 0; b < patch; ++b) {
            const std::size_t c =
                reflect_index(static_cast<long>(col) - half + static_cast<long>(b),
                              static_cast<long>(cube.cols));
            const double* src = cube.values.data() + (r * cube.cols + c) * cube.bands;
            double* dst = out.data() + (a * patch + b) * cube.bands;
            std::copy(src, src + cube.bands, dst);
        }
    }
    return out;
}

Tensor extract_spectrum(const HsiCube& cube, std::size_t row, std::size_t col) {
    if (row >= cube.rows || col >= cube.cols) {
        throw ArgumentError("pixel (" + std::to_string(row) + "," + std::to_string(col) +
                            ") outside image");
    }
    Tensor out({cube.bands});
    const double* src = cube.values.data() + (row * cube.cols + col) * cube.bands;
    std::copy(src, src + cube.bands, out.data());
    return out;
}

SplitSpec SplitSpec::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("split spec is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw FormatError("split spec must be a JSON object");

    SplitSpec spec;
    auto parse_counts = [&spec](const json& counts) {
        for (auto it = counts.begin(); it != counts.end(); ++it) {
            int cls = 0;
            try {
                std::size_t pos = 0;
                cls = std::stoi(it.key(), &pos);
                if (pos != it.key().size()) throw std::invalid_argument(it.key());
            } catch (const std::exception&) {
                throw FormatError("split spec class id '" + it.key() + "' is not an integer");
            }
            if (!it.value().is_number_unsigned() || it.value().get<std::size_t>() == 0) {
                throw FormatError("split count for class " + std::to_string(cls) +
                                  " must be a positive integer");
            }
            spec.counts[cls] = it.value().get<std::size_t>();
        }
    };

    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "seed") {
            spec.seed = it.value().get<std::uint64_t>();
        } else if (it.key() == "per_class") {
            spec.per_class = it.value().get<std::size_t>();
        } else if (it.key() == "counts") {
            parse_counts(it.value());
        } else {
            // Flat form: numeric keys are class counts.
            json one;
            one[it.key()] = it.value();
            parse_counts(one);
        }
    }
    if (spec.counts.empty() && spec.per_class == 0) {
        throw FormatError("split spec needs per-class counts or 'per_class'");
    }
    return spec;
}

std::pair<SampleSet, SampleSet> make_split(const GroundTruth& gt, const SplitSpec& spec) {
    std::map<int, std::vector<Sample>> by_class;
    for (std::size_t r = 0; r < gt.rows; ++r) {
        for (std::size_t c = 0; c < gt.cols; ++c) {
            const int label = gt.at(r, c);
            if (label > 0) {
                by_class[label].push_back(
                    {static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c), label});
            }
        }
    }

    std::map<int, std::size_t> counts = spec.counts;
    if (spec.per_class > 0) {
        for (const auto& [cls, pixels] : by_class) counts[cls] = spec.per_class;
    }

    Rng rng(spec.seed);
    SampleSet train, test;
    for (const auto& [cls, want] : counts) {
        auto it = by_class.find(cls);
        if (it == by_class.end()) {
            throw DataError("split requests class " + std::to_string(cls) +
                            " which has no labeled pixels");
        }
        auto& pixels = it->second;
        if (pixels.size() < want) {
            throw DataError("class " + std::to_string(cls) + " has " +
                            std::to_string(pixels.size()) + " labeled pixels, split requests " +
                            std::to_string(want));
        }
        for (std::size_t i = 0; i < want; ++i) {
            const std::size_t j = i + rng.below(pixels.size() - i);
            std::swap(pixels[i], pixels[j]);
            train.push_back(pixels[i]);
        }
    }
    for (const auto& [cls, pixels] : by_class) {
        const std::size_t start = counts.count(cls) ? counts.at(cls) : 0;
        test.insert(test.end(), pixels.begin() + static_cast<std::ptrdiff_t>(start),
                    pixels.end());
    }
    return {std::move(train), std::move(test)};
}

std::pair<HsiCube, GroundTruth> synth_dataset(const SynthConfig& cfg) {
    if (cfg.classes < 2) {
        throw ArgumentError("synthetic dataset needs >= 2 classes, got " +
                            std::to_string(cfg.classes));
    }
    if (cfg.bands < 8) {
        throw ArgumentError("synthetic dataset needs >= 8 bands, got " +
                            std::to_string(cfg.bands));
    }
    if (cfg.rows == 0 || cfg.cols == 0) throw ArgumentError("synthetic dataset extents must be positive");
    if (cfg.noise < 0.0) throw ArgumentError("noise sigma must be non-negative");

    Rng rng(cfg.seed);
    const std::size_t C = static_cast<std::size_t>(cfg.classes);
    const std::size_t total = cfg.rows * cfg.cols;

    // Voronoi partition of C seeded centers; retried until every region
    // holds a reasonable share of the image.
    const std::size_t min_pixels = std::max<std::size_t>(1, total / (4 * C));
    std::vector<int> labels(total);
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::vector<std::pair<long, long>> centers;
        while (centers.size() < C) {
            const std::pair<long, long> cand{static_cast<long>(rng.below(cfg.rows)),
                                             static_cast<long>(rng.below(cfg.cols))};
            if (std::find(centers.begin(), centers.end(), cand) == centers.end()) {
                centers.push_back(cand);
            }
        }
        std::vector<std::size_t> sizes(C, 0);
        for (std::size_t r = 0; r < cfg.rows; ++r) {
            for (std::size_t c = 0; c < cfg.cols; ++c) {
                std::size_t best = 0;
                long best_d2 = -1;
                for (std::size_t k = 0; k < C; ++k) {
                    const long dr = static_cast<long>(r) - centers[k].first;
                    const long dc = static_cast<long>(c) - centers[k].second;
                    const long d2 = dr * dr + dc * dc;
                    if (best_d2 < 0 || d2 < best_d2) {
                        best_d2 = d2;
                        best = k;
                    }
                }
                labels[r * cfg.cols + c] = static_cast<int>(best) + 1;
                ++sizes[best];
            }
        }
        if (*std::min_element(sizes.begin(), sizes.end()) >= min_pixels) break;
    }

    // Smooth distinct signatures: every class is a sum of the same 3 wide
    // Gaussian bumps with class-specific amplitudes. Classes end up close
    // relative to the noise, so single-pixel spectra are genuinely
    // ambiguous and spatial/spectral aggregation carries real signal.
    const double D = static_cast<double>(cfg.bands);
    const std::size_t bumps = 3;
    std::vector<double> centers(bumps), widths(bumps), base_amp(bumps);
    for (std::size_t q = 0; q < bumps; ++q) {
        centers[q] = rng.uniform(0.0, D - 1.0);
        widths[q] = std::max(2.0, rng.uniform(D / 10.0, D / 5.0));
        base_amp[q] = rng.uniform(0.5, 1.0);
    }
    auto render = [&](const std::vector<double>& amps) {
        std::vector<double> sig(cfg.bands, 0.0);
        for (std::size_t q = 0; q < bumps; ++q) {
            for (std::size_t d = 0; d < cfg.bands; ++d) {
                const double z = (static_cast<double>(d) - centers[q]) / widths[q];
                sig[d] += amps[q] * std::exp(-0.5 * z * z);
            }
        }
        return sig;
    };
    std::vector<std::vector<double>> signatures;
    for (std::size_t k = 0; k < C; ++k) {
        std::vector<double> sig;
        for (int attempt = 0; attempt < 100; ++attempt) {
            std::vector<double> amps(bumps);
            for (std::size_t q = 0; q < bumps; ++q) {
                amps[q] = base_amp[q] * (1.0 + rng.uniform(-0.08, 0.08));
            }
            sig = render(amps);
            double min_rms = 1e300;
            for (const auto& other : signatures) {
                double acc = 0.0;
                for (std::size_t d = 0; d < cfg.bands; ++d) {
                    const double diff = sig[d] - other[d];
                    acc += diff * diff;
                }
                min_rms = std::min(min_rms, std::sqrt(acc / D));
            }
            if (min_rms >= 0.022) break;
        }
        signatures.push_back(std::move(sig));
    }

    HsiCube cube;
    cube.rows = cfg.rows;
    cube.cols = cfg.cols;
    cube.bands = cfg.bands;
    cube.values = Tensor({cfg.rows, cfg.cols, cfg.bands});
    for (std::size_t r = 0; r < cfg.rows; ++r) {
        for (std::size_t c = 0; c < cfg.cols; ++c) {
            const auto& sig = signatures[static_cast<std::size_t>(labels[r * cfg.cols + c] - 1)];
            for (std::size_t d = 0; d < cfg.bands; ++d) {
                const double n = cfg.noise > 0.0 ? cfg.noise * rng.normal() : 0.0;
                cube.values.at(r, c, d) = sig[d] + n;
            }
        }
    }

    GroundTruth gt;
    gt.rows = cfg.rows;
    gt.cols = cfg.cols;
    gt.labels = std::move(labels);
    gt.classes = cfg.classes;
    return {std::move(cube), std::move(gt)};
}

}  // namespace hsrnn
