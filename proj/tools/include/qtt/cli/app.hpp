#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qtt/config.hpp"

namespace qtt::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kRuntimeError = 3 };

/// Everything a command needs. `args` holds the command's effective options
/// and is recorded verbatim in the run manifest.
struct Context {
  RunConfig config;
  std::uint64_t seed = 1;
  int jobs = 1;
  nlohmann::json args = nlohmann::json::object();
};

/// File name and contents.
using Outputs = std::vector<std::pair<std::string, std::string>>;

Outputs cmd_simulate(const Context& ctx);
Outputs cmd_sweep(const Context& ctx);
Outputs cmd_allan(const Context& ctx);
Outputs cmd_analytic(const Context& ctx);
Outputs cmd_fiber(const Context& ctx);
Outputs cmd_ao(const Context& ctx);
Outputs cmd_sem(const Context& ctx);

/// Runs a named command and returns its outputs.
Outputs dispatch(const std::string& command, const Context& ctx);

/// Writes outputs and manifest.json into out_dir. Returns the manifest.
nlohmann::json write_run(const std::string& command, const Context& ctx, const Outputs& outputs,
                         const std::filesystem::path& out_dir, double wall_time_s);

/// Full command line entry point.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string version();

}  // namespace qtt::cli
