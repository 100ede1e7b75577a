#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "gscg/graph.hpp"
#include "gscg/synth.hpp"

using namespace gscg;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run cli(const std::string& args, const fs::path& scratch) {
  const fs::path out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = std::string(GSCG_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

fs::path write_spec(const fs::path& dir) {
  const fs::path p = dir / "spec.json";
  std::ofstream(p) << R"({"seed": 3, "n_train": 40, "n_val": 12, "n_scenes": 3})";
  return p;
}

int count_lines_with(const std::string& text, const std::string& needle) {
  std::stringstream ss(text);
  int n = 0;
  for (std::string line; std::getline(ss, line);) n += line.find(needle) != std::string::npos;
  return n;
}

}  // namespace

TEST_CASE("synth dataset is byte-identical for the same command line") {
  testing::TempDir dir("cli_synth");
  const fs::path spec = write_spec(dir.path());
  for (const char* name : {"a", "b"}) {
    const auto r = cli("--seed 5 synth dataset " + spec.string() + " -o " + (dir.path() / name).string(), dir.path());
    REQUIRE(r.code == 0);
    CHECK(r.err.find("\"seed\":5") != std::string::npos);
  }
  CHECK(slurp(dir.path() / "a/dataset.json") == slurp(dir.path() / "b/dataset.json"));
  CHECK(slurp(dir.path() / "a/graphs/000007.json") == slurp(dir.path() / "b/graphs/000007.json"));
  CHECK_FALSE(slurp(dir.path() / "a/graphs/000007.json").empty());
}

TEST_CASE("build-graph on a synthetic bundle matches its ground truth") {
  testing::TempDir dir("cli_bundles");
  const fs::path spec = write_spec(dir.path());
  REQUIRE(cli("synth bundles " + spec.string() + " -o " + (dir.path() / "b").string(), dir.path()).code == 0);
  for (const char* scene : {"scene_0000", "scene_0001", "scene_0002"}) {
    const fs::path bundle = dir.path() / "b" / scene;
    const auto r = cli("build-graph " + bundle.string() + " -o " + (dir.path() / "g.json").string(), dir.path());
    REQUIRE(r.code == 0);
    const Gscg built = read_graph(dir.path() / "g.json");
    const Gscg truth = read_graph(bundle / "truth.json");
    REQUIRE(built.nodes.size() == truth.nodes.size());
    for (const auto& [id, node] : truth.nodes) {
      const auto& c = built.node(id).geometry.centroid;
      CHECK(std::hypot(c[0] - node.geometry.centroid[0], c[1] - node.geometry.centroid[1],
                       c[2] - node.geometry.centroid[2]) < 0.02);
    }
    REQUIRE(built.edges.size() == truth.edges.size());
    for (std::size_t i = 0; i < truth.edges.size(); ++i) {
      CHECK(built.edges[i].a == truth.edges[i].a);
      CHECK(built.edges[i].b == truth.edges[i].b);
      CHECK(built.edges[i].kind == truth.edges[i].kind);
    }
  }
}

TEST_CASE("train, eval, sweep and describe") {
  testing::TempDir dir("cli_train");
  const fs::path spec = write_spec(dir.path());
  const std::string data = (dir.path() / "d/dataset.json").string();
  REQUIRE(cli("synth dataset " + spec.string() + " -o " + (dir.path() / "d").string(), dir.path()).code == 0);

  const std::string train_args = "--seed 2 train " + data + " --epochs 2 --batch 16 --lr 1e-3 --config no_colors";
  auto r = cli(train_args + " -o " + (dir.path() / "m1.json").string() + " --report " +
                   (dir.path() / "r.json").string(),
               dir.path());
  REQUIRE(r.code == 0);
  CHECK(count_lines_with(r.out, "no_colors") == 1);
  const auto report = nlohmann::json::parse(slurp(dir.path() / "r.json"));
  CHECK(report["effective_config"]["train"]["lr"] == doctest::Approx(1e-3));
  CHECK(report["effective_config"]["ablation"]["name"] == "no_colors");
  CHECK(report["epochs"].size() == 2);
  REQUIRE(cli(train_args + " -o " + (dir.path() / "m2.json").string(), dir.path()).code == 0);
  CHECK(slurp(dir.path() / "m1.json") == slurp(dir.path() / "m2.json"));

  r = cli("eval " + data + " " + (dir.path() / "m1.json").string() + " --split val", dir.path());
  CHECK(r.code == 0);
  CHECK(r.out.find("±") != std::string::npos);

  r = cli("sweep " + data + " --epochs 1 --batch 16", dir.path());
  REQUIRE(r.code == 0);
  CHECK(count_lines_with(r.out, "±") == 12);

  const std::string graph = (dir.path() / "d/graphs/000000.json").string();
  const Gscg g = read_graph(graph);
  const int target = g.nodes.begin()->first;
  r = cli("describe " + graph + " " + std::to_string(target) + " --config minimal_model", dir.path());
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("It ", 0) == 0);
  CHECK(r.out.find("measures") == std::string::npos);
  CHECK(r.out.find("made of") == std::string::npos);
  CHECK(r.out.find("scene") == std::string::npos);

  r = cli("describe " + graph + " " + std::to_string(target) + " --riddle --checkpoint " +
              (dir.path() / "m1.json").string(),
          dir.path());
  REQUIRE(r.code == 0);
  const auto round = nlohmann::json::parse(r.out);
  CHECK(round["choices"].size() == 5);
}

TEST_CASE("failures exit nonzero with a diagnostic") {
  testing::TempDir dir("cli_fail");
  const fs::path spec = write_spec(dir.path());
  REQUIRE(cli("synth dataset " + spec.string() + " -o " + (dir.path() / "d").string(), dir.path()).code == 0);
  const std::string data = (dir.path() / "d/dataset.json").string();

  auto r = cli("train " + data + " --config everything", dir.path());
  CHECK(r.code != 0);
  CHECK(r.err.find("full_model") != std::string::npos);
  CHECK(r.err.find("no_neighbors_no_extended_context") != std::string::npos);

  r = cli("train " + (dir.path() / "absent.json").string(), dir.path());
  CHECK(r.code != 0);
  CHECK_FALSE(r.err.empty());

  std::ofstream(dir.path() / "bad.json") << "{nope";
  r = cli("synth dataset " + (dir.path() / "bad.json").string() + " -o " + (dir.path() / "x").string(), dir.path());
  CHECK(r.code != 0);
  CHECK(r.err.find("bad.json") != std::string::npos);

  std::ofstream(dir.path() / "neg.json") << R"({"n_train": -4})";
  r = cli("synth dataset " + (dir.path() / "neg.json").string() + " -o " + (dir.path() / "x").string(), dir.path());
  CHECK(r.code != 0);

  r = cli("train " + data + " --unknown-flag 3", dir.path());
  CHECK(r.code != 0);

  r = cli("describe " + (dir.path() / "d/graphs/000000.json").string() + " 999999", dir.path());
  CHECK(r.code != 0);
  CHECK(r.err.find("999999") != std::string::npos);

  r = cli("serve --pool " + data + " --checkpoint " + (dir.path() / "none.json").string(), dir.path());
  CHECK(r.code != 0);
}
