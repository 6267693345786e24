#pragma once

#include <filesystem>

#include "lgdf/score_net/score_net.hpp"

namespace lgdf::score_net {

/// Parameter file:
///   "LGDF" | u32 version=1 | u32 layer count | per layer u32 in, u32 out |
///   per layer weights (out x in, row-major) then biases, all f64
void write_params(const std::filesystem::path& path, const MlpParams& params);
/// Activation is not part of the file and is set to `act`.
MlpParams read_params(const std::filesystem::path& path, Activation act = Activation::silu);

/// Parameter file plus a JSON sidecar at path + ".json" holding activation,
/// embedding, output scaling and schedule.
void write_score_net(const std::filesystem::path& path, const ScoreNetSpec& net);
ScoreNetSpec read_score_net(const std::filesystem::path& path);

}  // namespace lgdf::score_net
