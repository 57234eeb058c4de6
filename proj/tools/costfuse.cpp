#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "costfuse/config.hpp"
#include "costfuse/error.hpp"
#include "costfuse/parallel.hpp"
#include "costfuse/pipeline.hpp"
#include "costfuse/synthgen.hpp"

namespace {

using namespace costfuse;

struct CommonOptions {
  std::string config;
  int threads = 1;
  std::string out;
  bool raw_fusion = false;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool config_required) {
  auto* cfg = cmd->add_option("--config", o.config, "Run configuration file")->check(CLI::ExistingFile);
  if (config_required) cfg->required();
  cmd->add_option("--threads", o.threads, "Worker threads (results are reproducible per thread count)")
      ->check(CLI::Range(1, 1024));
  cmd->add_option("--out", o.out, "Run directory (overrides run.out_dir)");
  cmd->add_flag("--raw-fusion", o.raw_fusion, "Fuse raw distances without min-max normalisation");
}

pipeline::Context make_context(const CommonOptions& o) {
  auto cfg = config::load_config(o.config);
  if (o.raw_fusion) cfg.fusion.normalization = "none";
  if (!o.out.empty()) cfg.out_dir = o.out;
  set_thread_count(o.threads);
  return {cfg, cfg.out_dir, &std::cerr};
}

struct GenOptions {
  std::string subtype;
  int per_class = 0;
  int size = 64;
  std::uint64_t seed = 1;
  bool literal_red = false;
};

int standalone_gen(const CommonOptions& common, const GenOptions& g) {
  if (common.out.empty()) throw ValidationError("gen --subtype needs --out DIR");
  if (g.per_class < 1) throw ValidationError("gen --subtype needs --per-class N >= 1");
  set_thread_count(common.threads);
  const auto subtype = synth::parse_subtype(g.subtype);
  const std::filesystem::path out = common.out;
  if (subtype == synth::Subtype::texture) {
    const auto classes = static_cast<int>(synth::texture_standin_labels().size());
    synth::gen_texture_standin_dir(classes, g.per_class, g.seed, g.size, out / "sources" / "texture");
    auto m = synth::ingest_texture_dir(out / "sources" / "texture", g.size, out);
    m.seed = g.seed;
    synth::write_manifest(m, out / "texture.csv");
    std::cerr << "[costfuse] gen: " << m.entries.size() << " texture stand-in images\n";
    return 0;
  }
  const auto m = synth::gen_dataset(subtype, g.per_class, g.seed, g.size, out, {g.literal_red});
  synth::write_manifest(m, out / (g.subtype + ".csv"));
  std::cerr << "[costfuse] gen: " << m.entries.size() << ' ' << g.subtype << " images\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"COST feature extraction, supervised score fusion and biometric evaluation"};
  app.set_version_flag("--version", std::string(COSTFUSE_VERSION));
  app.require_subcommand(1);

  CommonOptions common;
  GenOptions gen;
  std::string selected;

  for (const auto& stage : config::kAllStages) {
    auto* cmd = app.add_subcommand(stage, "Run the '" + stage + "' stage");
    add_common(cmd, common, stage != "gen");
    if (stage == "gen") {
      cmd->add_option("--subtype", gen.subtype, "Standalone mode: color, shape or texture (no config needed)");
      cmd->add_option("--per-class", gen.per_class, "Standalone mode: images per class");
      cmd->add_option("--size", gen.size, "Standalone mode: image side in pixels");
      cmd->add_option("--seed", gen.seed, "Standalone mode: master seed");
      cmd->add_flag("--literal-red", gen.literal_red, "Standalone mode: unconstrained G/B for the red class");
    }
    cmd->callback([&selected, stage] { selected = stage; });
  }
  auto* all = app.add_subcommand("run-all", "Run every stage listed in run.stages, in pipeline order");
  add_common(all, common, true);
  all->callback([&selected] { selected = "run-all"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : pipeline::kValidation;
  }

  try {
    if (selected == "gen" && !gen.subtype.empty()) return standalone_gen(common, gen);
    if (common.config.empty()) throw ValidationError(selected + " needs --config FILE (or --subtype for standalone gen)");
    const auto ctx = make_context(common);
    if (selected == "run-all") {
      const auto manifest = pipeline::run_all(ctx);
      std::cerr << "[costfuse] run-all: " << manifest.stages.size() << " stage(s) complete, manifest at "
                << (ctx.run_dir / "run_manifest.json").string() << '\n';
    } else {
      pipeline::run_stage(ctx, selected);
    }
    return pipeline::kOk;
  } catch (const std::exception& e) {
    std::cerr << "costfuse: error: " << e.what() << '\n';
    return pipeline::exit_code_for(e);
  }
}
