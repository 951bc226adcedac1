#include "core/model.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace hsrnn {

namespace {

using nlohmann::json;

std::string normalize_variant(std::string name) {
    std::replace(name.begin(), name.end(), '-', '_');
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return name;
}

constexpr char kMagic[4] = {'H', 'S', 'R', 'N'};
constexpr std::uint32_t kFormatVersion = 1;

// Explicit little-endian encoding keeps model files portable.
void write_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

void write_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    write_u64(out, bits);
}

[[noreturn]] void truncated(std::istream& in) {
    throw FormatError("model file truncated at offset " +
                      std::to_string(static_cast<long long>(in.tellg())));
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) truncated(in);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) truncated(in);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double read_f64(std::istream& in) {
    const std::uint64_t bits = read_u64(in);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

std::size_t get_size(const json& j, const char* key, std::size_t fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number_unsigned()) {
        throw ConfigError(std::string("spec field '") + key + "' must be a non-negative integer");
    }
    return j[key].get<std::size_t>();
}

Activation get_activation(const json& j, const char* key, Activation fallback) {
    if (!j.contains(key)) return fallback;
    return activation_from_name(j[key].get<std::string>());
}

}  // namespace

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::rnn: return "rnn";
        case Variant::lstm: return "lstm";
        case Variant::gru: return "gru";
        case Variant::st_gru: return "st_gru";
        case Variant::st_ss_gru: return "st_ss_gru";
        case Variant::st_ss_pgru: return "st_ss_pgru";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    const std::string n = normalize_variant(name);
    if (n == "rnn") return Variant::rnn;
    if (n == "lstm") return Variant::lstm;
    if (n == "gru") return Variant::gru;
    if (n == "st_gru") return Variant::st_gru;
    if (n == "st_ss_gru") return Variant::st_ss_gru;
    if (n == "st_ss_pgru") return Variant::st_ss_pgru;
    throw ArgumentError("unknown model variant '" + name +
                        "' (expected one of: rnn, lstm, gru, st-gru, st-ss-gru, st-ss-pgru)");
}

void ModelSpec::validate() const {
    std::vector<std::string> problems;
    if (bands < 1) problems.push_back("bands must be >= 1");
    if (classes < 2) problems.push_back("classes must be >= 2");
    if (hidden < 1) problems.push_back("hidden must be >= 1");
    if (units < 1) problems.push_back("units must be >= 1");
    if (uses_shorten()) {
        if (timesteps < 1 || timesteps > bands) {
            problems.push_back("timesteps must satisfy 1 <= T <= bands (T=" +
                               std::to_string(timesteps) + ", D=" + std::to_string(bands) + ")");
        }
        if (shorten_filters < 1) problems.push_back("shorten_filters must be >= 1");
    }
    if (uses_spatial()) {
        if (spatial_filters < 1) problems.push_back("spatial_filters must be >= 1");
        if (patch % 2 == 0) problems.push_back("patch must be odd");
        if (spatial_filters >= 1 && patch < 5) {
            problems.push_back("patch must cover the largest (5x5) spatial filter");
        }
    } else if (patch != 1) {
        problems.push_back("patch must be 1 for spectral-only variants");
    }
    if (!problems.empty()) {
        std::string msg = "invalid model spec:";
        for (const auto& p : problems) msg += " " + p + ";";
        msg.pop_back();
        throw ConfigError(msg);
    }
}

std::string ModelSpec::to_json() const {
    json j;
    j["variant"] = variant_name(variant);
    j["bands"] = bands;
    j["classes"] = classes;
    j["patch"] = patch;
    j["spatial_filters"] = spatial_filters;
    j["shorten_filters"] = shorten_filters;
    j["timesteps"] = timesteps;
    j["hidden"] = hidden;
    j["units"] = units;
    j["rnn_activation"] = activation_name(rnn_activation);
    j["shorten_activation"] = activation_name(shorten_activation);
    j["spatial_activation"] = activation_name(spatial_activation);
    j["seed"] = seed;
    return j.dump();
}

ModelSpec ModelSpec::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("model spec is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("variant")) {
        throw ConfigError("model spec must be a JSON object with a 'variant' field");
    }
    static const char* known[] = {"variant", "bands", "classes", "patch", "spatial_filters",
                                  "shorten_filters", "timesteps", "hidden", "units",
                                  "rnn_activation", "shorten_activation", "spatial_activation",
                                  "seed"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find_if(std::begin(known), std::end(known), [&](const char* k) {
                return it.key() == k;
            }) == std::end(known)) {
            throw ConfigError("unknown model spec field '" + it.key() + "'");
        }
    }
    ModelSpec s;
    s.variant = variant_from_name(j["variant"].get<std::string>());
    s.bands = get_size(j, "bands", 0);
    s.classes = get_size(j, "classes", 0);
    s.patch = get_size(j, "patch", s.uses_spatial() ? 5 : 1);
    s.spatial_filters = get_size(j, "spatial_filters", s.uses_spatial() ? 16 : 0);
    s.shorten_filters = get_size(j, "shorten_filters", s.uses_shorten() ? 16 : 0);
    s.timesteps = get_size(j, "timesteps", s.uses_shorten() ? 5 : 0);
    s.hidden = get_size(j, "hidden", 128);
    s.units = get_size(j, "units", s.uses_parallel() ? 2 : 1);
    s.rnn_activation = get_activation(j, "rnn_activation", Activation::tanh);
    s.shorten_activation = get_activation(j, "shorten_activation", Activation::tanh);
    s.spatial_activation = get_activation(j, "spatial_activation", Activation::relu);
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw ConfigError("spec field 'seed' must be a non-negative integer");
        s.seed = j["seed"].get<std::uint64_t>();
    }
    s.validate();
    return s;
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    Rng rng(spec_.seed);

    // Channel count entering the recurrent stage.
    std::size_t channels = 1;
    if (spec_.uses_spatial()) {
        auto p = make_per_band_params(spec_.spatial_filters, spec_.spatial_activation);
        init_per_band_params(p, rng);
        spatial_ = std::make_unique<PerBandConv>(std::move(p));
        channels = spec_.spatial_filters;
    }
    if (spec_.uses_shorten()) {
        const ShortenGeometry g = derive_shorten_geometry(spec_.bands, spec_.timesteps);
        auto p = make_shorten_params(spec_.shorten_filters, g.kernel, channels, g.stride,
                                     spec_.shorten_activation);
        init_shorten_params(p, rng);
        shorten_ = std::make_unique<ShortenConv>(std::move(p));
        channels = spec_.shorten_filters;
    }

    switch (spec_.variant) {
        case Variant::rnn: {
            auto p = make_rnn_params(channels, spec_.hidden, spec_.rnn_activation);
            init_rnn_params(p, rng);
            rnn_ = std::make_unique<RnnSequence>(std::move(p));
            break;
        }
        case Variant::lstm: {
            auto p = make_lstm_params(channels, spec_.hidden);
            init_lstm_params(p, rng);
            lstm_ = std::make_unique<LstmSequence>(std::move(p));
            break;
        }
        case Variant::gru:
        case Variant::st_gru:
        case Variant::st_ss_gru: {
            auto p = make_gru_params(channels, spec_.hidden);
            init_gru_params(p, rng);
            gru_ = std::make_unique<GruSequence>(std::move(p));
            break;
        }
        case Variant::st_ss_pgru: {
            ParallelGruParams p;
            for (std::size_t k = 0; k < spec_.units; ++k) {
                auto unit = make_gru_params(channels, spec_.hidden);
                init_gru_params(unit, rng);
                p.units.push_back(std::move(unit));
            }
            pgru_ = std::make_unique<ParallelGruLayer>(std::move(p));
            break;
        }
    }

    auto head = make_head_params(spec_.hidden, spec_.classes);
    init_head_params(head, rng);
    head_ = std::make_unique<DenseHead>(std::move(head));
}

Tensor Model::to_sequence(const Tensor& sample) const {
    const std::size_t D = spec_.bands;
    if (sample.rank() == 1 && sample.extent(0) == D) {
        return Tensor({D, 1}, std::vector<double>(sample.data(), sample.data() + D));
    }
    if (sample.rank() == 3 && sample.extent(0) == 1 && sample.extent(1) == 1 &&
        sample.extent(2) == D) {
        return Tensor({D, 1}, std::vector<double>(sample.data(), sample.data() + D));
    }
    throw DimensionError("expected a spectrum of " + std::to_string(D) +
                         " bands (or a 1x1 patch), got " + sample.shape_string());
}

Tensor Model::forward(const Tensor& sample) {
    input_shape_ = sample.shape();
    Tensor seq;
    if (spec_.uses_spatial()) {
        if (sample.rank() != 3 || sample.extent(0) != spec_.patch ||
            sample.extent(1) != spec_.patch || sample.extent(2) != spec_.bands) {
            throw DimensionError("expected a " + std::to_string(spec_.patch) + "x" +
                                 std::to_string(spec_.patch) + "x" + std::to_string(spec_.bands) +
                                 " patch, got " + sample.shape_string());
        }
        seq = spatial_->forward(sample);
    } else {
        seq = to_sequence(sample);
    }
    if (shorten_) seq = shorten_->forward(seq);

    Tensor h;
    if (rnn_) h = rnn_->forward(seq);
    else if (lstm_) h = lstm_->forward(seq);
    else if (gru_) h = gru_->forward(seq);
    else h = pgru_->forward(seq);

    has_cache_ = true;
    return head_->forward(h);
}

Tensor Model::backward(const Tensor& dlogits) {
    require_cache("Model");
    Tensor dh = head_->backward(dlogits);

    Tensor dseq;
    if (rnn_) dseq = rnn_->backward(dh);
    else if (lstm_) dseq = lstm_->backward(dh);
    else if (gru_) dseq = gru_->backward(dh);
    else dseq = pgru_->backward(dh);

    if (shorten_) dseq = shorten_->backward(dseq);
    if (spatial_) return spatial_->backward(dseq);
    // Spectral input was reshaped to D x 1; hand the gradient back in the
    // caller's original shape.
    return Tensor(input_shape_, std::vector<double>(dseq.data(), dseq.data() + dseq.size()));
}

std::vector<ParamRef> Model::parameters() {
    std::vector<ParamRef> all;
    auto append = [&all](const std::string& prefix, Layer& layer) {
        for (auto& p : layer.parameters()) all.push_back({prefix + p.name, p.value, p.grad});
    };
    if (spatial_) append("spatial.", *spatial_);
    if (shorten_) append("shorten.", *shorten_);
    if (rnn_) append("rnn.", *rnn_);
    if (lstm_) append("lstm.", *lstm_);
    if (gru_) append("gru.", *gru_);
    if (pgru_) append("pgru.", *pgru_);
    append("head.", *head_);
    return all;
}

Tensor Model::classify(const Tensor& sample) const {
    Tensor seq;
    if (spec_.uses_spatial()) {
        if (sample.rank() != 3 || sample.extent(0) != spec_.patch ||
            sample.extent(1) != spec_.patch || sample.extent(2) != spec_.bands) {
            throw DimensionError("expected a " + std::to_string(spec_.patch) + "x" +
                                 std::to_string(spec_.patch) + "x" + std::to_string(spec_.bands) +
                                 " patch, got " + sample.shape_string());
        }
        seq = per_band_conv_forward(spatial_->params(), sample);
    } else {
        seq = to_sequence(sample);
    }
    if (shorten_) seq = shorten_conv_forward(shorten_->params(), seq);

    Tensor h;
    if (rnn_) h = run_sequence(rnn_->params(), seq);
    else if (lstm_) h = run_sequence(lstm_->params(), seq);
    else if (gru_) h = run_sequence(gru_->params(), seq);
    else {
        h = run_sequence(pgru_->unit(0).params(), seq);
        for (std::size_t k = 1; k < pgru_->unit_count(); ++k) {
            add_inplace(h, run_sequence(pgru_->unit(k).params(), seq));
        }
    }
    return output_head(head_->params(), h);
}

STensor Model::secant_forward(const STensor& sample, const SecantContext& ctx) const {
    STensor seq;
    if (spec_.uses_spatial()) {
        seq = spatial_->secant_forward(sample, ctx);
    } else {
        // spectral input reshaped to D x 1, mirroring to_sequence()
        const std::size_t D = spec_.bands;
        seq.mid = Tensor({D, 1}, std::vector<double>(sample.mid.data(), sample.mid.data() + D));
        seq.dif = Tensor({D, 1}, std::vector<double>(sample.dif.data(), sample.dif.data() + D));
    }
    if (shorten_) seq = shorten_->secant_forward(seq, ctx);

    STensor h;
    if (rnn_) h = rnn_->secant_forward(seq, ctx);
    else if (lstm_) h = lstm_->secant_forward(seq, ctx);
    else if (gru_) h = gru_->secant_forward(seq, ctx);
    else h = pgru_->secant_forward(seq, ctx);

    return head_->secant_forward(h, ctx);
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : const_cast<Model*>(this)->parameters()) n += p.value->size();
    return n;
}

void Model::save(std::ostream& out) const {
    out.write(kMagic, 4);
    write_u32(out, kFormatVersion);
    const std::string spec_text = spec_.to_json();
    write_u32(out, static_cast<std::uint32_t>(spec_text.size()));
    out.write(spec_text.data(), static_cast<std::streamsize>(spec_text.size()));

    auto params = const_cast<Model*>(this)->parameters();
    write_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        write_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        write_u32(out, static_cast<std::uint32_t>(p.value->rank()));
        for (std::size_t e : p.value->shape()) write_u64(out, e);
        for (std::size_t i = 0; i < p.value->size(); ++i) write_f64(out, (*p.value)[i]);
    }
    if (!out) throw IoError("failed while writing model stream");
}

void Model::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    save(out);
}

Model Model::load(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("bad magic bytes at offset 0 (not a model file)");
    }
    const std::uint32_t version = read_u32(in);
    if (version != kFormatVersion) {
        throw FormatError("unsupported model format version " + std::to_string(version));
    }
    const std::uint32_t spec_len = read_u32(in);
    std::string spec_text(spec_len, '\0');
    if (!in.read(spec_text.data(), spec_len)) truncated(in);

    Model model(ModelSpec::from_json(spec_text));
    auto params = model.parameters();

    const std::uint32_t count = read_u32(in);
    if (count != params.size()) {
        throw FormatError("model file declares " + std::to_string(count) +
                          " tensors, spec requires " + std::to_string(params.size()));
    }
    for (auto& p : params) {
        const std::uint32_t name_len = read_u32(in);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) truncated(in);
        const long long offset = static_cast<long long>(in.tellg());
        if (name != p.name) {
            throw FormatError("tensor '" + name + "' at offset " + std::to_string(offset) +
                              ", expected '" + p.name + "'");
        }
        const std::uint32_t rank = read_u32(in);
        std::vector<std::size_t> shape(rank);
        for (auto& e : shape) e = static_cast<std::size_t>(read_u64(in));
        if (shape != p.value->shape()) {
            throw FormatError("tensor '" + name + "' at offset " + std::to_string(offset) +
                              " has shape " + shape_string(shape) + ", expected " +
                              p.value->shape_string());
        }
        for (std::size_t i = 0; i < p.value->size(); ++i) (*p.value)[i] = read_f64(in);
    }
    return model;
}

Model Model::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return load(in);
}

}  // namespace hsrnn
