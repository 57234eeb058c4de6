#include "costfuse/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <memory>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "costfuse/backend.hpp"
#include "costfuse/checksum.hpp"
#include "costfuse/cost_space.hpp"
#include "costfuse/csv.hpp"
#include "costfuse/error.hpp"
#include "costfuse/fusion_eval.hpp"
#include "costfuse/mlp.hpp"
#include "costfuse/parallel.hpp"
#include "costfuse/rng.hpp"
#include "costfuse/sparse_dict.hpp"
#include "costfuse/synthgen.hpp"

#ifndef COSTFUSE_VERSION
#define COSTFUSE_VERSION "0.0.0"
#endif

namespace costfuse::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using synth::Subtype;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const DependencyError*>(&e)) return kDependency;
  if (dynamic_cast<const ValidationError*>(&e)) return kValidation;
  return kRuntime;
}

std::vector<Identity> make_identities(int count, std::uint64_t seed) {
  const auto& colors = synth::color_labels();
  const auto& shapes = synth::shape_labels();
  const int total = static_cast<int>(colors.size() * shapes.size());
  if (count < 1 || count > total) {
    throw ValidationError("identity count must be in [1, " + std::to_string(total) + "], got " + std::to_string(count));
  }
  std::vector<int> combos(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) combos[static_cast<std::size_t>(i)] = i;
  Rng rng(derive_seed(seed, "identities"));
  for (int i = total - 1; i > 0; --i) std::swap(combos[static_cast<std::size_t>(i)], combos[static_cast<std::size_t>(rng.uniform_int(0, i))]);
  std::vector<Identity> ids;
  for (int i = 0; i < count; ++i) {
    const auto c = static_cast<std::size_t>(combos[static_cast<std::size_t>(i)]);
    char name[16];
    std::snprintf(name, sizeof name, "id%02d", i);
    ids.push_back({name, colors[c / shapes.size()], shapes[c % shapes.size()]});
  }
  return ids;
}

RasterImage gen_identity_image(const Identity& id, std::uint64_t seed, int size) {
  RasterImage img = synth::gen_color_image(id.color, derive_seed(seed, "background"), size);
  const RasterImage fg = synth::gen_shape_image(id.shape, derive_seed(seed, "foreground"), size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (fg.at(x, y, 0) || fg.at(x, y, 1) || fg.at(x, y, 2)) img.set_pixel(x, y, fg.at(x, y, 0), fg.at(x, y, 1), fg.at(x, y, 2));
    }
  }
  return img;
}

void write_task(const std::vector<TaskEntry>& entries, const fs::path& file) {
  auto out = csv::open_output(file);
  out << "path,identity,split\n";
  for (const auto& e : entries) out << csv::join({e.path, e.identity, e.split}) << '\n';
  if (!out) throw IoError("failed writing task list '" + file.string() + "'");
}

std::vector<TaskEntry> read_task(const fs::path& file) {
  csv::Reader reader(file);
  std::vector<std::string> f;
  if (!reader.next(f) || f != std::vector<std::string>{"path", "identity", "split"}) {
    reader.fail("task header must be 'path,identity,split'");
  }
  std::vector<TaskEntry> entries;
  while (reader.next(f)) {
    if (f.size() != 3) reader.fail("expected 3 fields, got " + std::to_string(f.size()));
    if (f[2] != "train" && f[2] != "val" && f[2] != "test") reader.fail("unknown split '" + f[2] + "'");
    entries.push_back({f[0], f[1], f[2]});
  }
  return entries;
}

void save_manifest(const RunManifest& m, const fs::path& path) {
  json stages = json::array();
  for (const auto& s : m.stages) stages.push_back({{"stage", s.stage}, {"seconds", s.seconds}, {"artifacts", s.artifacts}});
  const json j{{"tool_version", m.tool_version}, {"config_hash", m.config_hash}, {"seed", m.seed},
               {"threads", m.threads}, {"stages", stages}};
  auto out = csv::open_output(path);
  out << j.dump(1) << '\n';
  if (!out) throw IoError("failed writing run manifest '" + path.string() + "'");
}

RunManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open run manifest '" + path.string() + "'");
  try {
    const auto j = json::parse(in);
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.threads = j.at("threads").get<int>();
    for (const auto& s : j.at("stages")) {
      m.stages.push_back({s.at("stage").get<std::string>(), s.at("seconds").get<double>(),
                          s.at("artifacts").get<std::map<std::string, std::string>>()});
    }
    return m;
  } catch (const json::exception& e) {
    throw ValidationError("malformed run manifest '" + path.string() + "': " + e.what());
  }
}

const std::vector<std::string>& stage_dependencies(const std::string& stage) {
  static const std::map<std::string, std::vector<std::string>> deps{
      {"gen", {}},
      {"learn-dict", {"gen"}},
      {"centroids", {"gen", "learn-dict"}},
      {"encode", {"gen", "learn-dict", "centroids"}},
      {"train-cost", {"gen", "encode"}},
      {"train-backend", {"gen"}},
      {"score", {"gen", "encode", "train-cost", "train-backend"}},
      {"fuse", {"score"}},
      {"eval-verify", {"fuse"}},
      {"eval-identify", {"fuse"}},
  };
  const auto it = deps.find(stage);
  if (it == deps.end()) throw ValidationError("unknown stage '" + stage + "'");
  return it->second;
}

std::vector<std::string> stage_outputs(const config::RunConfig& cfg, const std::string& stage) {
  if (stage == "gen") return {"data/color.csv", "data/shape.csv", "data/texture.csv", "data/task.csv"};
  if (stage == "learn-dict") {
    return {"dicts/color.json",      "dicts/shape.json",     "dicts/texture.json",
            "dicts/color_atoms.png", "dicts/shape_atoms.png", "dicts/texture_atoms.png",
            "dicts/learn_report.json"};
  }
  if (stage == "centroids") return {"centroids.json"};
  if (stage == "encode") return {"features.csv"};
  if (stage == "train-cost") return {"cost_model.json"};
  if (stage == "train-backend") return {cfg.backend.precomputed.empty() ? "backend_model.json" : "backend_scores.csv"};
  if (stage == "score") {
    return {"pairs/val.csv", "pairs/test.csv", "scores/val.csv", "scores/test.csv", "scores/identify.csv"};
  }
  if (stage == "fuse") return {"fused/val.csv", "fused/test.csv", "fused/identify.csv", "fused/fusion.json"};
  if (stage == "eval-verify") {
    return {"eval/roc_cost.csv", "eval/roc_supervised.csv", "eval/roc_fused.csv", "eval/verify.json"};
  }
  if (stage == "eval-identify") {
    return {"eval/cmc_cost.csv", "eval/cmc_supervised.csv", "eval/cmc_fused.csv", "eval/identify.json"};
  }
  throw ValidationError("unknown stage '" + stage + "'");
}

namespace {

std::size_t stage_rank(const std::string& stage) {
  const auto& all = config::kAllStages;
  const auto it = std::find(all.begin(), all.end(), stage);
  if (it == all.end()) throw ValidationError("unknown stage '" + stage + "'");
  return static_cast<std::size_t>(it - all.begin());
}

std::vector<std::string> pipeline_order(std::vector<std::string> stages) {
  std::sort(stages.begin(), stages.end(), [](const auto& a, const auto& b) { return stage_rank(a) < stage_rank(b); });
  return stages;
}

std::string first_missing(const config::RunConfig& cfg, const fs::path& run_dir, const std::string& stage) {
  for (const auto& out : stage_outputs(cfg, stage)) {
    if (!fs::exists(run_dir / out)) return out;
  }
  return {};
}

}  // namespace

void check_dependencies(const config::RunConfig& cfg, const fs::path& run_dir, const std::vector<std::string>& scheduled) {
  const std::set<std::string> planned(scheduled.begin(), scheduled.end());
  std::map<std::size_t, std::pair<std::string, std::string>> missing;
  std::set<std::string> visited;
  auto visit = [&](auto&& self, const std::string& stage) -> void {
    for (const auto& dep : stage_dependencies(stage)) {
      if (planned.contains(dep) || !visited.insert(dep).second) continue;
      const auto gap = first_missing(cfg, run_dir, dep);
      if (gap.empty()) continue;
      missing[stage_rank(dep)] = {dep, gap};
      self(self, dep);
    }
  };
  for (const auto& s : scheduled) visit(visit, s);
  if (missing.empty()) return;
  std::string names, detail;
  for (const auto& [rank, entry] : missing) {
    names += (names.empty() ? "" : ", ") + entry.first;
    detail += (detail.empty() ? "" : "; ") + entry.first + " -> " + (run_dir / entry.second).string();
  }
  throw DependencyError("missing upstream artifacts; run stage(s) " + names + " first (" + detail + ")");
}

namespace {

void log_line(const Context& ctx, const std::string& msg) {
  if (ctx.log) *ctx.log << "[costfuse] " << msg << '\n' << std::flush;
}

void write_json(const json& j, const fs::path& path) {
  auto out = csv::open_output(path);
  out << j.dump(1) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("malformed JSON '" + path.string() + "': " + e.what());
  }
}

std::uint64_t stage_seed(const Context& ctx, std::string_view stage) { return derive_seed(ctx.config.seed, stage); }

// ---------------------------------------------------------------- gen

std::vector<TaskEntry> gen_task(const Context& ctx, std::uint64_t seed) {
  const auto& g = ctx.config.gen;
  const auto ids = make_identities(g.identities, seed);
  const std::vector<std::pair<std::string, int>> splits{
      {"train", g.train_per_identity}, {"val", g.val_per_identity}, {"test", g.test_per_identity}};
  std::vector<TaskEntry> entries;
  std::vector<std::uint64_t> seeds;
  std::vector<std::size_t> owner;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    int j = 0;
    for (const auto& [split, count] : splits) {
      for (int i = 0; i < count; ++i, ++j) {
        char name[32];
        std::snprintf(name, sizeof name, "%s_%03d.png", split.c_str(), i);
        entries.push_back({"data/task/" + ids[k].name + "/" + name, ids[k].name, split});
        seeds.push_back(derive_seed(seed, "task-image", k, j));
        owner.push_back(k);
      }
    }
  }
  parallel_for(entries.size(), [&](std::size_t i) {
    write_png(gen_identity_image(ids[owner[i]], seeds[i], g.image_size), ctx.run_dir / entries[i].path);
  });
  return entries;
}

void stage_gen(const Context& ctx) {
  const auto& g = ctx.config.gen;
  const auto seed = stage_seed(ctx, "gen");
  const auto data = ctx.run_dir / "data";
  fs::remove_all(data);
  fs::remove_all(ctx.run_dir / "sources");

  synth::ColorOptions opts{g.literal_red};
  auto color = synth::gen_dataset(Subtype::color, g.color_per_class, derive_seed(seed, "color"), g.image_size, data, opts);
  synth::write_manifest(color, data / "color.csv");
  auto shape = synth::gen_dataset(Subtype::shape, g.shape_per_class, derive_seed(seed, "shape"), g.image_size, data);
  synth::write_manifest(shape, data / "shape.csv");
  log_line(ctx, "gen: " + std::to_string(color.entries.size()) + " colour and " + std::to_string(shape.entries.size()) +
                    " shape images");

  fs::path texture_root = g.texture_dir;
  if (texture_root.empty()) {
    texture_root = ctx.run_dir / "sources" / "texture";
    synth::gen_texture_standin_dir(g.texture_classes, g.texture_per_class, derive_seed(seed, "texture"), g.image_size,
                                   texture_root);
  }
  synth::IngestReport report;
  auto texture = synth::ingest_texture_dir(texture_root, g.image_size, data, &report);
  texture.seed = derive_seed(seed, "texture");
  synth::write_manifest(texture, data / "texture.csv");
  for (const auto& w : report.warnings) log_line(ctx, "gen: warning: " + w);
  log_line(ctx, "gen: " + std::to_string(report.ingested) + " texture images (" + std::to_string(report.skipped) +
                    " skipped)");

  const auto task = gen_task(ctx, derive_seed(seed, "task"));
  write_task(task, data / "task.csv");
  log_line(ctx, "gen: " + std::to_string(task.size()) + " task images");
}

// ---------------------------------------------------------------- learn-dict

Eigen::MatrixXd load_signals(const synth::DatasetManifest& m, int size) {
  Eigen::MatrixXd X(size * size * 3, static_cast<Eigen::Index>(m.entries.size()));
  parallel_for(m.entries.size(), [&](std::size_t i) {
    X.col(static_cast<Eigen::Index>(i)) = to_signal(read_image(m.entries[i].path), size, size);
  });
  return X;
}

fs::path dict_path(const Context& ctx, Subtype s) { return ctx.run_dir / "dicts" / (std::string(synth::to_string(s)) + ".json"); }

void stage_learn_dict(const Context& ctx) {
  const auto& d = ctx.config.dictionary;
  const auto seed = stage_seed(ctx, "learn-dict");
  json report = json::object();
  for (const auto s : synth::kSubtypes) {
    const std::string name(synth::to_string(s));
    const auto manifest = synth::read_manifest(ctx.run_dir / "data" / (name + ".csv"));
    const auto X = load_signals(manifest, d.signal_size);
    sparse::LearnOptions opts;
    opts.atoms = d.atoms;
    opts.params = {d.lambda, d.step, d.max_iters};
    opts.epochs = d.epochs;
    opts.seed = derive_seed(seed, name);
    opts.subtype = name;
    opts.signal_width = d.signal_size;
    opts.signal_height = d.signal_size;
    const auto t0 = std::chrono::steady_clock::now();
    auto [dict, rep] = sparse::learn_dictionary(X, opts);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    sparse::save_dictionary(dict, dict_path(ctx, s));
    sparse::export_atoms(dict, ctx.run_dir / "dicts" / (name + "_atoms.png"));
    for (const auto& w : rep.warnings) log_line(ctx, "learn-dict: " + name + ": warning: " + w);
    log_line(ctx, "learn-dict: " + name + " " + std::to_string(X.cols()) + " signals, objective " +
                      csv::format_double(rep.objectives.front()) + " -> " + csv::format_double(rep.objectives.back()) +
                      " (" + std::to_string(static_cast<int>(secs)) + " s)");
    report[name] = {{"objectives", rep.objectives},
                    {"epochs_run", rep.epochs_run},
                    {"checksum", rep.checksum},
                    {"fallback_updates", rep.fallback_updates},
                    {"reseeded_atoms", rep.reseeded_atoms},
                    {"block_updates", rep.block_updates},
                    {"warnings", rep.warnings}};
  }
  write_json(report, ctx.run_dir / "dicts" / "learn_report.json");
}

cost::DictionarySet load_dicts(const Context& ctx) {
  cost::DictionarySet dicts;
  for (const auto s : synth::kSubtypes) dicts[static_cast<std::size_t>(s)] = sparse::load_dictionary(dict_path(ctx, s));
  return dicts;
}

// ---------------------------------------------------------------- centroids

void stage_centroids(const Context& ctx) {
  const auto dicts = load_dicts(ctx);
  cost::CodeSet codes;
  std::vector<std::string> texture_labels;
  for (const auto s : synth::kSubtypes) {
    const std::string name(synth::to_string(s));
    const auto manifest = synth::read_manifest(ctx.run_dir / "data" / (name + ".csv"));
    const auto& dict = dicts[static_cast<std::size_t>(s)];
    const auto H = sparse::encode_all(dict, load_signals(manifest, dict.signal_width));
    auto& by_label = codes[s];
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
      by_label[manifest.entries[i].label].push_back(H.col(static_cast<Eigen::Index>(i)));
    }
    if (s == Subtype::texture) {
      for (const auto& [label, v] : by_label) texture_labels.push_back(label);
    }
  }
  const auto layout = cost::ClassLayout::with_textures(texture_labels);
  const auto set = cost::compute_centroids(codes, layout);
  cost::save_centroids(set, ctx.run_dir / "centroids.json");
  log_line(ctx, "centroids: " + std::to_string(set.size()) + " centroids" +
                    (layout.is_full() ? "" : " (reduced texture layout)"));
}

// ---------------------------------------------------------------- encode

void stage_encode(const Context& ctx) {
  const cost::CostEncoder encoder(load_dicts(ctx), cost::load_centroids(ctx.run_dir / "centroids.json"));
  const auto task = read_task(ctx.run_dir / "data" / "task.csv");
  std::vector<cost::LabeledPath> items;
  for (const auto& e : task) items.push_back({ctx.run_dir / e.path, e.identity});
  auto batch = cost::encode_batch(items, encoder);
  if (!batch.failures.empty()) {
    throw RuntimeFailure("encode: " + std::to_string(batch.failures.size()) + " image(s) failed, first: " +
                         batch.failures.front().path + ": " + batch.failures.front().message);
  }
  for (std::size_t i = 0; i < batch.rows.size(); ++i) batch.rows[i].path = task[i].path;
  cost::write_features(batch.rows, encoder.size(), ctx.run_dir / "features.csv");
  log_line(ctx, "encode: " + std::to_string(batch.rows.size()) + " COST vectors of width " + std::to_string(encoder.size()));
}

// ---------------------------------------------------------------- train-cost

struct TaskFeatures {
  std::vector<TaskEntry> task;
  std::unordered_map<std::string, Eigen::VectorXd> features;
};

TaskFeatures load_task_features(const Context& ctx) {
  TaskFeatures tf;
  tf.task = read_task(ctx.run_dir / "data" / "task.csv");
  for (auto& row : cost::read_features(ctx.run_dir / "features.csv")) tf.features[row.path] = std::move(row.values);
  for (const auto& e : tf.task) {
    if (!tf.features.contains(e.path)) throw ValidationError("features.csv has no row for '" + e.path + "'");
  }
  return tf;
}

std::vector<int> layer_sizes(int in, const std::vector<std::int64_t>& hidden, int out) {
  std::vector<int> sizes{in};
  for (auto h : hidden) sizes.push_back(static_cast<int>(h));
  sizes.push_back(out);
  return sizes;
}

mlp::TrainConfig train_config(const config::ClassifierConfig& c, std::uint64_t seed) {
  mlp::TrainConfig t;
  t.epochs = c.epochs;
  t.learning_rate = c.learning_rate;
  t.batch_size = c.batch_size;
  t.seed = seed;
  return t;
}

void stage_train_cost(const Context& ctx) {
  const auto& c = ctx.config.cost;
  const auto seed = stage_seed(ctx, "train-cost");
  const auto tf = load_task_features(ctx);
  std::set<std::string> ids;
  std::vector<const TaskEntry*> train;
  for (const auto& e : tf.task) {
    if (e.split == "train") {
      train.push_back(&e);
      ids.insert(e.identity);
    }
  }
  const std::vector<std::string> classes(ids.begin(), ids.end());
  if (classes.size() < 2) throw ValidationError("train-cost needs at least two identities in the train split");
  const auto dim = tf.features.at(train.front()->path).size();
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(train.size()), dim);
  std::vector<int> labels;
  for (std::size_t i = 0; i < train.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) = tf.features.at(train[i]->path).transpose();
    labels.push_back(static_cast<int>(std::lower_bound(classes.begin(), classes.end(), train[i]->identity) - classes.begin()));
  }
  auto net = mlp::init_mlp(layer_sizes(static_cast<int>(dim), c.hidden, static_cast<int>(classes.size())),
                           derive_seed(seed, "init"));
  net.classes = classes;
  if (c.standardize) mlp::fit_standardization(net, rows);
  auto result = mlp::train(std::move(net), rows, labels, train_config(c, derive_seed(seed, "train")));
  mlp::save_model(result.model, ctx.run_dir / "cost_model.json");
  log_line(ctx, "train-cost: loss " + csv::format_double(result.loss_history.front()) + " -> " +
                    csv::format_double(result.loss_history.back()));
}

// ---------------------------------------------------------------- train-backend

void stage_train_backend(const Context& ctx) {
  const auto& b = ctx.config.backend;
  if (!b.precomputed.empty()) {
    const auto table = backend::load_precomputed(b.precomputed);
    backend::save_precomputed(table, ctx.run_dir / "backend_scores.csv");
    log_line(ctx, "train-backend: imported " + std::to_string(table.size()) + " precomputed scores");
    return;
  }
  const auto seed = stage_seed(ctx, "train-backend");
  const auto task = read_task(ctx.run_dir / "data" / "task.csv");
  std::vector<backend::LabeledImage> data;
  for (const auto& e : task) {
    if (e.split == "train") data.push_back({e.identity, read_image(ctx.run_dir / e.path)});
  }
  backend::ReferenceConfig rc;
  rc.input_size = b.input_size;
  rc.hidden.assign(b.classifier.hidden.begin(), b.classifier.hidden.end());
  rc.train = train_config(b.classifier, 0);
  rc.seed = seed;
  rc.imposters_per_genuine = b.imposters_per_genuine;
  rc.standardize = b.classifier.standardize;
  const auto trained = backend::reference_classifier_train(data, backend::parse_mode(b.mode), rc);
  backend::save_reference(trained.model, ctx.run_dir / "backend_model.json");
  log_line(ctx, "train-backend: " + b.mode + " mode, loss " + csv::format_double(trained.loss_history.front()) + " -> " +
                    csv::format_double(trained.loss_history.back()));
}

// ---------------------------------------------------------------- score

std::unique_ptr<backend::SupervisedScorer> make_scorer(const Context& ctx, fusion::DistanceMetric metric) {
  if (!ctx.config.backend.precomputed.empty()) {
    return std::make_unique<backend::TableScorer>(backend::load_precomputed(ctx.run_dir / "backend_scores.csv"), metric);
  }
  auto model = backend::load_reference(ctx.run_dir / "backend_model.json");
  if (backend::to_string(model.mode) != ctx.config.backend.mode) {
    throw ValidationError("backend_model.json is a " + std::string(backend::to_string(model.mode)) +
                          "-mode model but backend.mode is '" + ctx.config.backend.mode + "'; rerun train-backend");
  }
  const auto root = ctx.run_dir;
  return std::make_unique<backend::ModelScorer>(
      std::move(model), [root](const std::string& p) { return read_image(root / p); }, metric);
}

fusion::PairList within_split_pairs(const std::vector<TaskEntry>& task, const std::string& split) {
  std::vector<const TaskEntry*> members;
  for (const auto& e : task) {
    if (e.split == split) members.push_back(&e);
  }
  fusion::PairList pairs;
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (std::size_t j = i + 1; j < members.size(); ++j) {
      pairs.push_back({members[i]->path, members[j]->path,
                       members[i]->identity == members[j]->identity ? fusion::Label::genuine : fusion::Label::imposter});
    }
  }
  return pairs;
}

fusion::PairList probe_gallery_pairs(const std::vector<TaskEntry>& task) {
  fusion::PairList pairs;
  for (const auto& p : task) {
    if (p.split != "test") continue;
    for (const auto& g : task) {
      if (g.split != "train") continue;
      pairs.push_back({p.path, g.path, p.identity == g.identity ? fusion::Label::genuine : fusion::Label::imposter});
    }
  }
  return pairs;
}

void stage_score(const Context& ctx) {
  const auto metric = fusion::parse_metric(ctx.config.fusion.distance);
  const auto tf = load_task_features(ctx);
  const auto cost_model = mlp::load_model(ctx.run_dir / "cost_model.json");
  std::unordered_map<std::string, Eigen::VectorXd> cost_act;
  for (const auto& e : tf.task) cost_act[e.path] = mlp::forward(cost_model, tf.features.at(e.path));
  const auto scorer = make_scorer(ctx, metric);

  const std::vector<std::pair<std::string, fusion::PairList>> sets{
      {"val", within_split_pairs(tf.task, "val")},
      {"test", within_split_pairs(tf.task, "test")},
      {"identify", probe_gallery_pairs(tf.task)}};
  for (const auto& [name, pairs] : sets) {
    if (name != "identify") fusion::write_pair_list(pairs, ctx.run_dir / "pairs" / (name + ".csv"));
    std::vector<fusion::ScoreRecord> records(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t i) {
      const auto& p = pairs[i];
      auto& r = records[i];
      r.path1 = p.path1;
      r.path2 = p.path2;
      r.label = p.label;
      r.dist_cost = fusion::softmax_distance(cost_act.at(p.path1), cost_act.at(p.path2), metric);
      r.dist_supervised = scorer->distance(p.path1, p.path2);
    });
    fusion::write_scores(records, ctx.run_dir / "scores" / (name + ".csv"));
    log_line(ctx, "score: " + name + " " + std::to_string(records.size()) + " records");
  }
}

// ---------------------------------------------------------------- fuse

void stage_fuse(const Context& ctx) {
  const auto& f = ctx.config.fusion;
  const auto norm = fusion::parse_normalization(f.normalization);
  const auto val = fusion::apply_fusion(fusion::read_scores(ctx.run_dir / "scores" / "val.csv"), 0.0, norm);
  json sweep = json::array();
  for (double a : f.grid) {
    sweep.push_back({{"alpha", a},
                     {"val_gar_at_1pct_far", fusion::verification_metrics(fusion::refuse(val, a), fusion::Channel::fused).gar_at_1pct}});
  }
  const double alpha = f.search ? fusion::grid_search_alpha(val, f.grid) : f.alpha;
  for (const std::string name : {"val", "test", "identify"}) {
    const auto fused = fusion::apply_fusion(fusion::read_scores(ctx.run_dir / "scores" / (name + ".csv")), alpha, norm);
    fusion::write_scores(fused, ctx.run_dir / "fused" / (name + ".csv"));
  }
  write_json({{"alpha", alpha}, {"searched", f.search}, {"normalization", f.normalization}, {"grid", sweep}},
             ctx.run_dir / "fused" / "fusion.json");
  log_line(ctx, "fuse: alpha = " + csv::format_double(alpha) + (f.search ? " (grid search on val)" : " (fixed)"));
}

// ---------------------------------------------------------------- eval

constexpr fusion::Channel kChannels[] = {fusion::Channel::cost, fusion::Channel::supervised, fusion::Channel::fused};

double fused_alpha(const Context& ctx) { return read_json(ctx.run_dir / "fused" / "fusion.json").at("alpha").get<double>(); }

void stage_eval_verify(const Context& ctx) {
  const auto records = fusion::read_scores(ctx.run_dir / "fused" / "test.csv");
  json summary{{"alpha", fused_alpha(ctx)}, {"pairs", records.size()}};
  std::string line = "eval-verify: GAR@1%FAR";
  for (const auto ch : kChannels) {
    const std::string name(fusion::to_string(ch));
    const auto res = fusion::verification_metrics(records, ch);
    fusion::write_roc(res.roc, ctx.run_dir / "eval" / ("roc_" + name + ".csv"));
    summary[name] = {{"gar_at_1pct_far", res.gar_at_1pct}, {"gar_at_0.1pct_far", res.gar_at_01pct}};
    line += " " + name + "=" + csv::format_double(res.gar_at_1pct);
  }
  write_json(summary, ctx.run_dir / "eval" / "verify.json");
  log_line(ctx, line);
}

void stage_eval_identify(const Context& ctx) {
  const auto records = fusion::read_scores(ctx.run_dir / "fused" / "identify.csv");
  json summary{{"alpha", fused_alpha(ctx)}};
  std::string line = "eval-identify: rank-1";
  for (const auto ch : kChannels) {
    const std::string name(fusion::to_string(ch));
    const auto curve = fusion::cmc_from_records(records, ch);
    fusion::write_cmc(curve, ctx.run_dir / "eval" / ("cmc_" + name + ".csv"));
    summary["gallery_size"] = curve.gallery_size();
    json ranks = json::object();
    for (std::size_t r : {1, 5, 10}) {
      if (r <= curve.gallery_size()) ranks["rank_" + std::to_string(r)] = curve.at(r);
    }
    summary[name] = ranks;
    line += " " + name + "=" + csv::format_double(curve.at(1));
  }
  write_json(summary, ctx.run_dir / "eval" / "identify.json");
  log_line(ctx, line);
}

// ---------------------------------------------------------------- manifest

std::string aggregate_digest(const fs::path& root, const fs::path& run_dir) {
  std::vector<std::string> lines;
  if (fs::exists(root)) {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_regular_file() && e.path().extension() == ".png") {
        lines.push_back(fs::relative(e.path(), run_dir).generic_string() + " " + sha256_file(e.path()));
      }
    }
  }
  std::sort(lines.begin(), lines.end());
  std::string all;
  for (const auto& l : lines) all += l + '\n';
  return sha256_hex(all);
}

std::string config_hash(const config::RunConfig& cfg) { return sha256_hex(config::serialize(cfg)); }

RunManifest open_manifest(const Context& ctx) {
  const auto path = ctx.run_dir / "run_manifest.json";
  RunManifest m;
  if (fs::exists(path)) {
    try {
      m = load_manifest(path);
    } catch (const Error&) {
      m = {};
    }
  }
  const auto hash = config_hash(ctx.config);
  if (m.config_hash != hash) m.stages.clear();
  m.tool_version = COSTFUSE_VERSION;
  m.config_hash = hash;
  m.seed = ctx.config.seed;
  m.threads = thread_count();
  return m;
}

void record_stage(RunManifest& m, StageRecord rec) {
  std::erase_if(m.stages, [&](const StageRecord& s) { return s.stage == rec.stage; });
  m.stages.push_back(std::move(rec));
  std::sort(m.stages.begin(), m.stages.end(),
            [](const auto& a, const auto& b) { return stage_rank(a.stage) < stage_rank(b.stage); });
}

StageRecord execute(const Context& ctx, const std::string& stage) {
  static const std::map<std::string, void (*)(const Context&)> table{
      {"gen", stage_gen},
      {"learn-dict", stage_learn_dict},
      {"centroids", stage_centroids},
      {"encode", stage_encode},
      {"train-cost", stage_train_cost},
      {"train-backend", stage_train_backend},
      {"score", stage_score},
      {"fuse", stage_fuse},
      {"eval-verify", stage_eval_verify},
      {"eval-identify", stage_eval_identify},
  };
  const auto it = table.find(stage);
  if (it == table.end()) throw ValidationError("unknown stage '" + stage + "'");
  log_line(ctx, "stage " + stage);
  const auto t0 = std::chrono::steady_clock::now();
  it->second(ctx);
  StageRecord rec;
  rec.stage = stage;
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& out : stage_outputs(ctx.config, stage)) rec.artifacts[out] = sha256_file(ctx.run_dir / out);
  if (stage == "gen") rec.artifacts["data/**/*.png"] = aggregate_digest(ctx.run_dir / "data", ctx.run_dir);
  return rec;
}

}  // namespace

StageRecord run_stage(const Context& ctx, const std::string& stage) {
  ctx.config.validate();
  stage_rank(stage);
  check_dependencies(ctx.config, ctx.run_dir, {stage});
  auto manifest = open_manifest(ctx);
  auto rec = execute(ctx, stage);
  record_stage(manifest, rec);
  save_manifest(manifest, ctx.run_dir / "run_manifest.json");
  return rec;
}

RunManifest run_all(const Context& ctx) {
  ctx.config.validate();
  const auto stages = pipeline_order(ctx.config.stages);
  check_dependencies(ctx.config, ctx.run_dir, stages);
  auto manifest = open_manifest(ctx);
  if (stages.empty()) {
    manifest.stages.clear();
    save_manifest(manifest, ctx.run_dir / "run_manifest.json");
    return manifest;
  }
  for (const auto& stage : stages) {
    record_stage(manifest, execute(ctx, stage));
    save_manifest(manifest, ctx.run_dir / "run_manifest.json");
  }
  return manifest;
}

}  // namespace costfuse::pipeline
