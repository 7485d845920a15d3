#include "omsd/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "omsd/errors.hpp"

namespace omsd::nn {

namespace {

constexpr char kMagic[8] = {'O', 'M', 'S', 'D', 'N', 'N', '1', '\0'};

void write_doubles(std::ostream& out, const double* data, size_t n) {
    // Little-endian platform assumed (checked at startup would be overkill;
    // all supported targets are LE).
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_doubles(std::istream& in, double* data, size_t n) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw IntegrityError("checkpoint: truncated parameter payload");
}

}  // namespace

nlohmann::json spec_to_json(const MlpSpec& spec) {
    return nlohmann::json{
        {"input_dim", spec.input_dim},
        {"hidden_dims", spec.hidden_dims},
        {"output_dim", spec.output_dim},
        {"activation", "relu"},
        {"output_activation", spec.output_activation == OutputActivation::Tanh ? "tanh" : "none"},
    };
}

MlpSpec spec_from_json(const nlohmann::json& j) {
    MlpSpec spec;
    spec.input_dim = j.at("input_dim").get<int>();
    spec.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
    spec.output_dim = j.at("output_dim").get<int>();
    const std::string oa = j.at("output_activation").get<std::string>();
    spec.output_activation = (oa == "tanh") ? OutputActivation::Tanh : OutputActivation::None;
    return spec;
}

void Checkpoint::add_params(const std::string& name, const MlpParams& params) {
    std::vector<Matrix> mats;
    for (size_t l = 0; l < params.weights.size(); ++l) {
        mats.push_back(params.weights[l]);
        mats.push_back(params.biases[l]);
    }
    sections[name] = std::move(mats);
    meta["specs"][name] = spec_to_json(params.spec);
}

MlpParams Checkpoint::get_params(const std::string& name) const {
    auto it = sections.find(name);
    if (it == sections.end()) throw FormatError("checkpoint: missing section " + name);
    MlpParams p = MlpParams::zeros(spec_from_json(meta.at("specs").at(name)));
    if (it->second.size() != 2 * p.weights.size())
        throw FormatError("checkpoint: section " + name + " has wrong matrix count");
    for (size_t l = 0; l < p.weights.size(); ++l) {
        p.weights[l] = it->second[2 * l];
        p.biases[l] = it->second[2 * l + 1].col(0);
    }
    return p;
}

void Checkpoint::add_vector(const std::string& name, const Vector& v) {
    sections[name] = {Matrix(v)};
}

Vector Checkpoint::get_vector(const std::string& name) const {
    auto it = sections.find(name);
    if (it == sections.end() || it->second.size() != 1)
        throw FormatError("checkpoint: missing vector section " + name);
    return it->second[0].col(0);
}

void Checkpoint::save(const std::string& path) const {
    nlohmann::json full = meta;
    auto& secs = full["sections"] = nlohmann::json::array();
    for (const auto& [name, mats] : sections) {
        nlohmann::json shapes = nlohmann::json::array();
        for (const auto& m : mats) shapes.push_back({m.rows(), m.cols()});
        secs.push_back({{"name", name}, {"shapes", shapes}});
    }
    const std::string meta_str = full.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("checkpoint: cannot open " + path + " for writing");
    out.write(kMagic, 8);
    const uint32_t len = static_cast<uint32_t>(meta_str.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    for (const auto& [name, mats] : sections) {
        for (const auto& m : mats) {
            // row-major on disk
            Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
            write_doubles(out, rm.data(), static_cast<size_t>(rm.size()));
        }
    }
    if (!out) throw FormatError("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw FormatError("checkpoint: bad magic in " + path);
    uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    if (!in) throw IntegrityError("checkpoint: truncated header in " + path);
    std::string meta_str(len, '\0');
    in.read(meta_str.data(), len);
    if (!in) throw IntegrityError("checkpoint: truncated metadata in " + path);

    Checkpoint ckpt;
    nlohmann::json full;
    try {
        full = nlohmann::json::parse(meta_str);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: bad metadata JSON: ") + e.what());
    }
    for (const auto& sec : full.at("sections")) {
        const std::string name = sec.at("name").get<std::string>();
        std::vector<Matrix> mats;
        for (const auto& shape : sec.at("shapes")) {
            const Eigen::Index rows = shape[0].get<Eigen::Index>();
            const Eigen::Index cols = shape[1].get<Eigen::Index>();
            Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
            read_doubles(in, rm.data(), static_cast<size_t>(rows * cols));
            mats.push_back(Matrix(rm));
        }
        ckpt.sections[name] = std::move(mats);
    }
    full.erase("sections");
    ckpt.meta = std::move(full);
    return ckpt;
}

}  // namespace omsd::nn
