#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "cnet/conflicts.hpp"
#include "cnet/gnn.hpp"
#include "cnet/solver.hpp"

namespace cnet {

/// Every tunable of the pipeline. Loaded from a JSON document whose sections
/// (solver, label, gnn, train, extract) may each be partial.
struct PipelineConfig {
    std::uint64_t seed = 0;
    SolverConfig solver;
    LabelConfig label;
    ReduceMethod label_reduce = ReduceMethod::QuickXplain;
    GnnHyper gnn;
    TrainConfig train;
    ExtractConfig extract;
};

/// Unknown keys are errors so that typos do not silently fall back to defaults.
PipelineConfig config_from_json(std::string_view text);
std::string config_to_json(const PipelineConfig& cfg);
/// Fingerprint of the canonical JSON form.
std::string config_hash(const PipelineConfig& cfg);

}  // namespace cnet
