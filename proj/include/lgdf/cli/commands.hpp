#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "lgdf/cli/manifest.hpp"

namespace lgdf::cli {

struct RunContext {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::filesystem::path out;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

const std::vector<std::string>& command_names();

/// Validates the blocks the command reads, runs it into ctx.out and writes
/// ctx.out/manifest.json. Throws the library's error types.
RunManifest run_command(const RunContext& ctx);

/// 2 config/argument errors, 3 numerical failures, 4 I/O, 1 anything else.
int exit_code(const std::exception& e);

/// Entry point of the lgdf tool: `lgdf <command> --config <path> [--out
/// <dir>] [--seed <u64>] [--threads <n>]` and `lgdf verify <manifest>`.
/// Seed and output fall back to the config's top-level "seed" and "out";
/// the thread count is taken from --threads, else LGDF_THREADS, else the
/// config, else the hardware default.
int run_cli(const std::vector<std::string>& args);

}  // namespace lgdf::cli
