#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "costfuse/config.hpp"
#include "costfuse/image.hpp"

namespace costfuse::pipeline {

enum ExitCode : int { kOk = 0, kValidation = 1, kDependency = 2, kRuntime = 3 };

/// Maps the error hierarchy onto CLI exit codes.
int exit_code_for(const std::exception& e);

/// Identity of the synthetic verification task: a background colour class
/// and a foreground shape class.
struct Identity {
  std::string name;
  std::string color;
  std::string shape;
};

/// `count` distinct (colour, shape) combinations in a seeded order.
std::vector<Identity> make_identities(int count, std::uint64_t seed);

/// Colour-class noise background with the identity's shape outline drawn on
/// top.
RasterImage gen_identity_image(const Identity& id, std::uint64_t seed, int size);

struct TaskEntry {
  std::string path;  ///< relative to the run directory
  std::string identity;
  std::string split;  ///< train, val or test
};

/// CSV `path,identity,split`.
void write_task(const std::vector<TaskEntry>& entries, const std::filesystem::path& file);
std::vector<TaskEntry> read_task(const std::filesystem::path& file);

struct StageRecord {
  std::string stage;
  double seconds = 0.0;
  /// Artifact path relative to the run directory -> SHA-256.
  std::map<std::string, std::string> artifacts;
};

struct RunManifest {
  std::string tool_version;
  std::string config_hash;
  std::uint64_t seed = 0;
  int threads = 1;
  std::vector<StageRecord> stages;
};

void save_manifest(const RunManifest& m, const std::filesystem::path& path);
RunManifest load_manifest(const std::filesystem::path& path);

/// Direct upstream stages.
const std::vector<std::string>& stage_dependencies(const std::string& stage);

/// Files a stage writes, relative to the run directory. Image trees are
/// represented by their manifest files.
std::vector<std::string> stage_outputs(const config::RunConfig& cfg, const std::string& stage);

/// Throws DependencyError naming every upstream stage that is neither
/// scheduled in this run nor has its outputs on disk.
void check_dependencies(const config::RunConfig& cfg, const std::filesystem::path& run_dir,
                        const std::vector<std::string>& scheduled);

struct Context {
  config::RunConfig config;
  std::filesystem::path run_dir;
  std::ostream* log = nullptr;
};

/// Runs one stage and records it in run_dir/run_manifest.json.
StageRecord run_stage(const Context& ctx, const std::string& stage);

/// Runs the configured stages in pipeline order, stopping at the first
/// failure. An empty stage list writes an empty manifest.
RunManifest run_all(const Context& ctx);

}  // namespace costfuse::pipeline
