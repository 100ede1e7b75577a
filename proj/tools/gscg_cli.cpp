#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "gscg/classifier.hpp"
#include "gscg/describe.hpp"
#include "gscg/game_server.hpp"
#include "gscg/graph.hpp"
#include "gscg/synth.hpp"

using namespace gscg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Options {
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 0;

  std::string bundle_dir, output, spec_path, dataset_path, checkpoint_path, graph_path;
  std::string config = "full_model", split, report_path, log_path, static_dir, host = "127.0.0.1";
  std::string synth_kind;
  std::vector<std::string> configs;
  int target = 0, port = 8080, count = -1;
  bool riddle = false;

  EdgeOptions edges;
  TrainConfig train;
  ModelDims dims;
};

int hardware_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

void write_json(const json& doc, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << doc.dump(1) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw std::runtime_error(path.string() + ": not valid JSON");
  return doc;
}

void echo(const std::string& command, const json& effective) {
  std::cerr << command << " " << effective.dump() << "\n";
}

json edge_json(const EdgeOptions& e) {
  return {{"touch_radius", e.touch_radius},
          {"touch_threshold", e.touch_threshold},
          {"near_distance", e.near_distance}};
}

SynthSpec load_spec(const Options& o) {
  SynthSpec spec = SynthSpec::from_json(read_json(o.spec_path));
  if (o.seed_set) spec.seed = o.seed;
  if (o.count >= 0) {
    if (o.synth_kind == "bundles") spec.n_scenes = o.count;
    else spec.n_train = o.count;
  }
  spec.validate();
  return spec;
}

TrainConfig train_config(const Options& o) {
  TrainConfig t = o.train;
  t.seed = o.seed;
  t.workers = o.workers > 0 ? o.workers : 1;
  return t;
}

const std::vector<Sample>& eval_split(const Dataset& data, const std::string& name) {
  if (name == "train") return data.train;
  if (name == "val") return data.val;
  if (name == "test") return data.test;
  if (name.empty()) return data.test.empty() ? data.val : data.test;
  throw std::invalid_argument("unknown split '" + name + "' (train, val, test)");
}

int cmd_build_graph(const Options& o) {
  echo("build-graph", {{"bundle", o.bundle_dir}, {"edges", edge_json(o.edges)}});
  const Gscg g = build_graph(load_bundle(o.bundle_dir), o.edges);
  write_graph(g, o.output);
  std::cout << o.output << ": " << g.nodes.size() << " nodes, " << g.edges.size() << " edges\n";
  return 0;
}

int cmd_synth(const Options& o) {
  const SynthSpec spec = load_spec(o);
  echo("synth " + o.synth_kind, spec.to_json());
  const fs::path out = o.output;
  fs::create_directories(out);
  write_json(spec.to_json(), out / "spec.json");
  if (o.synth_kind == "dataset") {
    const Dataset data = gen_graph_dataset(spec);
    save_dataset(data, out);
    std::cout << out.string() << ": " << data.train.size() << " train, " << data.val.size()
              << " val samples\n";
    return 0;
  }
  const int workers = o.workers > 0 ? o.workers : hardware_workers();
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (int i; (i = next++) < spec.n_scenes;) {
      try {
        char name[32];
        std::snprintf(name, sizeof name, "scene_%04d", i);
        const SynthBundle b = gen_bundle(spec, scene_seed(spec, i));
        write_bundle(b.bundle, out / name);
        write_graph(b.truth, out / name / "truth.json");
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  std::cout << out.string() << ": " << spec.n_scenes << " bundles\n";
  return 0;
}

json run_record(const std::string& command, const Options& o, const AblationConfig& config,
                const TrainConfig& t, const ModelDims& dims) {
  json train = t.to_json();
  train.erase("workers");
  return {{"command", command},
          {"dataset", o.dataset_path},
          {"ablation", config.to_json()},
          {"train", train},
          {"dims", dims.to_json()}};
}

int cmd_train(const Options& o) {
  const AblationConfig& config = ablation_config(o.config);
  const TrainConfig t = train_config(o);
  const json effective = run_record("train", o, config, t, o.dims);
  echo("train", effective);
  const Dataset data = load_dataset(o.dataset_path, o.seed);
  const Vocab vocab = data.vocab();
  TrainResult result = train(data, data.train, data.val, vocab, config, t, o.dims);
  for (const auto& e : result.log)
    std::cerr << "epoch " << e.epoch << " loss " << e.train_loss << " train_acc " << e.train_accuracy
              << " val_acc " << e.val_accuracy << " val_f1 " << e.val_macro_f1 << "\n";
  const EvalReport report = evaluate(result.model, data, eval_split(data, o.split), t.workers, o.seed);
  std::cout << format_report_table({report});
  if (!o.output.empty()) result.model.save(o.output);
  if (!o.report_path.empty()) {
    json epochs = json::array();
    for (const auto& e : result.log)
      epochs.push_back({{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"train_accuracy", e.train_accuracy},
                        {"val_accuracy", e.val_accuracy},
                        {"val_macro_f1", e.val_macro_f1}});
    write_json({{"effective_config", effective},
                {"best_epoch", result.best_epoch},
                {"stopped_early", result.stopped_early},
                {"epochs", epochs},
                {"report", report.to_json()}},
               o.report_path);
  }
  return 0;
}

int cmd_sweep(const Options& o) {
  std::vector<AblationConfig> configs;
  if (o.configs.empty()) configs = ablation_configs();
  for (const auto& name : o.configs) configs.push_back(ablation_config(name));
  const TrainConfig t = train_config(o);
  json effective = run_record("sweep", o, ablation_configs().front(), t, o.dims);
  effective.erase("ablation");
  effective["configs"] = json::array();
  for (const auto& c : configs) effective["configs"].push_back(c.name);
  echo("sweep", effective);
  const Dataset data = load_dataset(o.dataset_path, o.seed);
  const Vocab vocab = data.vocab();
  std::vector<EvalReport> reports;
  for (const auto& c : configs) {
    std::cerr << "training " << c.name << "\n";
    const TrainResult r = train(data, data.train, data.val, vocab, c, t, o.dims);
    reports.push_back(evaluate(r.model, data, eval_split(data, o.split), t.workers, o.seed));
  }
  std::cout << format_report_table(reports);
  if (!o.report_path.empty()) {
    json rows = json::array();
    for (const auto& r : reports) rows.push_back(r.to_json());
    write_json({{"effective_config", effective}, {"reports", rows}}, o.report_path);
  }
  return 0;
}

int cmd_eval(const Options& o) {
  const Classifier model = Classifier::load(o.checkpoint_path);
  const int workers = o.workers > 0 ? o.workers : 1;
  echo("eval", {{"dataset", o.dataset_path},
                {"checkpoint", o.checkpoint_path},
                {"split", o.split.empty() ? "default" : o.split},
                {"seed", o.seed}});
  const Dataset data = load_dataset(o.dataset_path, o.seed);
  const EvalReport report = evaluate(model, data, eval_split(data, o.split), workers, o.seed);
  std::cout << format_report_table({report});
  if (!o.report_path.empty())
    write_json({{"effective_config",
                 {{"command", "eval"},
                  {"dataset", o.dataset_path},
                  {"checkpoint", o.checkpoint_path},
                  {"ablation", model.config().to_json()},
                  {"seed", o.seed}}},
                {"report", report.to_json()}},
               o.report_path);
  return 0;
}

int cmd_describe(const Options& o) {
  const AblationConfig& config = ablation_config(o.config);
  const Gscg g = read_graph(o.graph_path);
  std::string text;
  if (o.riddle) {
    if (o.checkpoint_path.empty()) throw std::invalid_argument("--riddle needs --checkpoint");
    const Classifier model = Classifier::load(o.checkpoint_path);
    text = build_round(g, o.target, model, o.seed, config).to_json().dump(1);
  } else {
    text = describe_object(g, o.target, config).text;
  }
  if (o.output.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream out(o.output);
    if (!out) throw std::runtime_error(o.output + ": cannot open for writing");
    out << text << "\n";
  }
  return 0;
}

GameServer* g_server = nullptr;

int cmd_serve(const Options& o) {
  const Classifier model = Classifier::load(o.checkpoint_path);
  const Dataset data = load_dataset(o.dataset_path, o.seed);
  echo("serve", {{"host", o.host},
                 {"port", o.port},
                 {"pool", o.dataset_path},
                 {"checkpoint", o.checkpoint_path},
                 {"log", o.log_path},
                 {"static", o.static_dir},
                 {"seed", o.seed}});
  auto state = std::make_shared<GameState>(model, pool_from_dataset(data, model.vocab()), o.seed,
                                           o.log_path);
  GameServer server(state, {o.host, o.port, o.static_dir});
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->request_stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->request_stop();
  });
  const int port = server.start();
  std::cout << "listening on http://" << o.host << ":" << port << " with " << state->pool_size()
            << " rounds in the pool" << std::endl;
  server.wait();
  g_server = nullptr;
  return 0;
}

void add_train_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--lr", o.train.lr, "learning rate")->capture_default_str();
  cmd->add_option("--weight-decay", o.train.weight_decay, "AdamW weight decay")->capture_default_str();
  cmd->add_option("--batch", o.train.batch, "batch size")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--epochs", o.train.epochs, "maximum epochs")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--patience", o.train.patience, "early-stopping patience")->capture_default_str();
  cmd->add_option("--dropout", o.dims.dropout, "dropout rate")->capture_default_str()->check(CLI::Range(0.0, 0.99));
  cmd->add_option("--hidden", o.dims.classifier_hidden, "classifier hidden width")->capture_default_str();
  cmd->add_option("--heads", o.dims.attention_heads, "attention heads")->capture_default_str();
  cmd->add_option("--split", o.split, "evaluation split (train, val, test; default test, else val)");
  cmd->add_option("--report", o.report_path, "write a JSON report");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-based scene context toolkit"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--seed", o.seed, "seed for every random choice")
      ->each([&](const std::string&) { o.seed_set = true; });
  app.add_option("--workers", o.workers, "worker threads (0: all cores for synthesis, 1 for training)")
      ->check(CLI::NonNegativeNumber);

  auto* build = app.add_subcommand("build-graph", "build a GSCG from a scene bundle");
  build->add_option("bundle", o.bundle_dir, "bundle directory")->required()->check(CLI::ExistingDirectory);
  build->add_option("-o,--output", o.output, "output GSCG file")->required();
  build->add_option("--touch-radius", o.edges.touch_radius)->capture_default_str();
  build->add_option("--touch-threshold", o.edges.touch_threshold)->capture_default_str();
  build->add_option("--near-distance", o.edges.near_distance)->capture_default_str();

  auto* synth = app.add_subcommand("synth", "generate synthetic bundles or a graph dataset");
  synth->add_option("kind", o.synth_kind, "bundles or dataset")
      ->required()
      ->check(CLI::IsMember({"bundles", "dataset"}));
  synth->add_option("spec", o.spec_path, "synthesis spec (JSON)")->required()->check(CLI::ExistingFile);
  synth->add_option("-o,--output", o.output, "output directory")->required();
  synth->add_option("--count", o.count, "override n_scenes (bundles) or n_train (dataset)");

  auto* tr = app.add_subcommand("train", "train one ablation configuration");
  tr->add_option("dataset", o.dataset_path, "dataset index")->required()->check(CLI::ExistingFile);
  tr->add_option("--config", o.config, "ablation configuration")->capture_default_str();
  tr->add_option("-o,--output", o.output, "checkpoint file");
  add_train_flags(tr, o);

  auto* sweep = app.add_subcommand("sweep", "train and evaluate every ablation configuration");
  sweep->add_option("dataset", o.dataset_path, "dataset index")->required()->check(CLI::ExistingFile);
  sweep->add_option("--configs", o.configs, "restrict to these configurations");
  add_train_flags(sweep, o);

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("dataset", o.dataset_path, "dataset index")->required()->check(CLI::ExistingFile);
  ev->add_option("checkpoint", o.checkpoint_path, "checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--split", o.split, "train, val or test (default test, else val)");
  ev->add_option("--report", o.report_path, "write a JSON report");

  auto* desc = app.add_subcommand("describe", "describe one object of a GSCG");
  desc->add_option("graph", o.graph_path, "GSCG file")->required()->check(CLI::ExistingFile);
  desc->add_option("target", o.target, "target node id")->required();
  desc->add_option("--config", o.config, "ablation configuration")->capture_default_str();
  desc->add_option("-o,--output", o.output, "write to a file instead of standard output");
  desc->add_flag("--riddle", o.riddle, "emit a riddle round document");
  desc->add_option("--checkpoint", o.checkpoint_path, "model for riddle choices")->check(CLI::ExistingFile);

  auto* serve = app.add_subcommand("serve", "run the riddle game server");
  serve->add_option("--pool", o.dataset_path, "dataset index supplying rounds")->required()->check(CLI::ExistingFile);
  serve->add_option("--checkpoint", o.checkpoint_path, "model checkpoint")->required()->check(CLI::ExistingFile);
  serve->add_option("--port", o.port, "port (0 picks a free one)")->capture_default_str();
  serve->add_option("--host", o.host)->capture_default_str();
  serve->add_option("--log", o.log_path, "append-only game log");
  serve->add_option("--static", o.static_dir, "directory of UI assets")->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*build) return cmd_build_graph(o);
    if (*synth) return cmd_synth(o);
    if (*tr) return cmd_train(o);
    if (*sweep) return cmd_sweep(o);
    if (*ev) return cmd_eval(o);
    if (*desc) return cmd_describe(o);
    if (*serve) return cmd_serve(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
