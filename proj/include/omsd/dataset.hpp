#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "omsd/errors.hpp"
#include "omsd/rng.hpp"
#include "vendor_json.hpp"

namespace omsd::data {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

constexpr int kDatasetFormatVersion = 1;

struct DatasetMeta {
    std::string env_id;
    int n_agents = 0;
    int state_dim = 0;
    std::vector<int> action_dims;  // per agent
    long n_transitions = 0;
    std::string quality;  // "expert" / "medium" / "random" / "mixture" / ...
    uint64_t seed = 0;
    int format_version = kDatasetFormatVersion;
    double mean_return = 0.0;
    double max_return = 0.0;

    int joint_action_dim() const;
    nlohmann::json to_json() const;
    static DatasetMeta from_json(const nlohmann::json& j);
};

// Immutable columnar transition table; the sole input to all training.
struct Dataset {
    DatasetMeta meta;
    Matrix states;       // state_dim x n
    Matrix actions;      // joint_action_dim x n
    Vector rewards;      // n
    Matrix next_states;  // state_dim x n
    std::vector<uint8_t> dones;

    void validate() const;
    // Action block of a single agent (rows [offset, offset+dim)).
    int agent_action_offset(int agent) const;
};

void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

struct Batch {
    Matrix states;
    Matrix actions;
    Vector rewards;
    Matrix next_states;
    Vector dones;  // 0/1 as doubles
    Eigen::Index size() const { return rewards.size(); }
};

// Uniform-with-replacement minibatch sampler; identical seed gives an
// identical index stream.
class BatchSampler {
public:
    BatchSampler(const Dataset& dataset, int batch_size, uint64_t seed);
    Batch sample();
    std::vector<long> sample_indices();

private:
    const Dataset& dataset_;
    int batch_size_;
    Rng rng_;
};

// CRC-64/XZ (ECMA-182 polynomial, reflected).
uint64_t crc64(const uint8_t* data, size_t len, uint64_t seed = 0);

}  // namespace omsd::data
