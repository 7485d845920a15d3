#pragma once

#include <map>
#include <string>
#include <vector>

#include "omsd/nn.hpp"
#include "vendor_json.hpp"

namespace omsd::nn {

// Parameter checkpoint: magic "OMSDNN1\0", u32 LE metadata length, UTF-8 JSON
// metadata, then raw little-endian f64 payload. Weights are written row-major,
// biases after the weights of their layer. Multi-part models (score nets)
// store several named sections back to back; section shapes live in the
// metadata under "sections".
struct Checkpoint {
    nlohmann::json meta;  // free-form; "sections" is reserved
    std::map<std::string, std::vector<Matrix>> sections;

    void add_params(const std::string& name, const MlpParams& params);
    MlpParams get_params(const std::string& name) const;

    void add_vector(const std::string& name, const Vector& v);
    Vector get_vector(const std::string& name) const;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

nlohmann::json spec_to_json(const MlpSpec& spec);
MlpSpec spec_from_json(const nlohmann::json& j);

}  // namespace omsd::nn
