#pragma once

#include <optional>
#include <string>

#include "omsd/analysis.hpp"
#include "omsd/critic.hpp"
#include "omsd/dataset.hpp"
#include "omsd/diffusion.hpp"
#include "omsd/policy.hpp"
#include "vendor_json.hpp"

namespace omsd::pipeline {

constexpr int kConfigVersion = 1;

// Full experiment description; serialized as a single versioned JSON document.
struct RunConfig {
    std::string env_id;  // "bandit" / "mode_bandit" / "spread_lite"
    policy::Algorithm algorithm = policy::Algorithm::Omsd;
    std::string output_dir;
    std::vector<uint64_t> seeds;

    std::string dataset_path;   // pre-existing dataset, or
    nlohmann::json generate;    // env-specific generation spec (null if unused)

    critic::CriticTrainConfig critic;
    uint64_t critic_seed = 0;
    diffusion::DiffusionTrainConfig diffusion;
    uint64_t diffusion_seed = 0;
    policy::ExtractionConfig extraction;

    int eval_episodes = 100;
    std::optional<std::pair<double, double>> normalization;  // (s_random, s_expert)

    nlohmann::json raw;  // the parsed document, echoed into the manifest

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::string& path);
};

struct RunResult {
    std::string run_dir;
    analysis::ScoreReport report;
};

// generate/load -> critic -> diffusion -> per-seed extraction -> evaluation ->
// viz, with every artifact hashed into <output_dir>/manifest.json. A phase
// failure persists partial artifacts plus an error record, then rethrows.
RunResult run_pipeline(const RunConfig& config);

}  // namespace omsd::pipeline
