#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hialign/experiment.hpp"
#include "hialign/io.hpp"

namespace fs = std::filesystem;
using namespace hialign;

namespace {

struct Run {
  int status = -1;
  std::string output;  // stdout and stderr
};

Run run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + HIALIGN_CLI_PATH + " " + args + " 2>&1";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

class Workspace {
 public:
  explicit Workspace(const std::string& name) : dir_(fs::temp_directory_path() / ("hialign_cli_" + name)) {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Workspace() { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write_config(const ExperimentConfig& cfg, const std::string& name = "config.json") const {
    write_file_atomic(path(name), config_to_json(cfg).dump(2));
    return path(name);
  }

 private:
  fs::path dir_;
};

ExperimentConfig small_config(std::uint64_t seed) {
  ExperimentConfig cfg = default_config(seed);
  cfg.train.stage1_epochs = 5;
  cfg.train.stage2_epochs = 10;
  cfg.protocol.shots = {1};
  cfg.protocol.k_shot = 1;
  return cfg;
}

std::size_t line_count(const std::string& text) { return std::size_t(std::count(text.begin(), text.end(), '\n')); }

}  // namespace

TEST_CASE("generate is deterministic and seed sensitive") {
  Workspace ws("generate");
  const std::string cfg = ws.write_config(small_config(7));
  REQUIRE(run_cli("generate --config " + cfg + " --out " + ws.path("a")).status == 0);
  REQUIRE(run_cli("generate --config " + cfg + " --out " + ws.path("b")).status == 0);
  REQUIRE(run_cli("generate --config " + cfg + " --out " + ws.path("c"), "HIALIGN_SEED=8").status == 0);
  const std::string a = read_file(ws.path("a/dataset.json"));
  CHECK(a == read_file(ws.path("b/dataset.json")));
  CHECK(content_hash(a) != content_hash(read_file(ws.path("c/dataset.json"))));
  const nlohmann::json ds = nlohmann::json::parse(a);
  CHECK(ds.at("samples").size() == 200);
  CHECK(ds.at("class_count") == 4);
  CHECK(fs::exists(ws.path("a/generate.run.json")));
  CHECK(!fs::exists(ws.path("a/.hialign.lock")));
}

TEST_CASE("train writes one checkpoint pair per shot") {
  Workspace ws("train");
  const std::string cfg = ws.write_config(small_config(7));
  REQUIRE(run_cli("train --config " + cfg + " --out " + ws.path("a")).status == 0);
  REQUIRE(run_cli("train --config " + cfg + " --out " + ws.path("b")).status == 0);
  std::vector<std::string> checkpoints;
  for (const auto& e : fs::directory_iterator(ws.path("a"))) {
    const std::string name = e.path().filename().string();
    if (name.rfind("checkpoint_", 0) == 0) checkpoints.push_back(name);
  }
  std::sort(checkpoints.begin(), checkpoints.end());
  CHECK(checkpoints == std::vector<std::string>{"checkpoint_shot1.json", "checkpoint_shot1.optim.json"});
  CHECK(read_file(ws.path("a/trainlog_shot1.csv")) == read_file(ws.path("b/trainlog_shot1.csv")));
  CHECK(read_file(ws.path("a/checkpoint_shot1.json")) == read_file(ws.path("b/checkpoint_shot1.json")));
}

TEST_CASE("zero epochs give the random initialization") {
  Workspace ws("noop");
  ExperimentConfig cfg = small_config(7);
  cfg.train.stage1_epochs = 0;
  cfg.train.stage2_epochs = 0;
  REQUIRE(run_cli("train --config " + ws.write_config(cfg) + " --out " + ws.path("a")).status == 0);
  const nlohmann::json ckpt = nlohmann::json::parse(read_file(ws.path("a/checkpoint_shot1.json")));
  const ExperimentConfig resolved = cfg.resolved();
  Rng image_rng(derive_seed(resolved.seed, "init/image"));
  const Encoder init = init_encoder(cfg.model.kind, cfg.dataset.image_dim, cfg.model.hidden_dim,
                                    cfg.model.embed_dim, image_rng);
  CHECK(encoder_from_json(ckpt.at("image")) == init);
}

TEST_CASE("eval checks dimensions and is repeatable") {
  Workspace ws("eval");
  ExperimentConfig cfg = small_config(7);
  const std::string path = ws.write_config(cfg);
  REQUIRE(run_cli("train --config " + path + " --out " + ws.path("t")).status == 0);
  const std::string ckpt = ws.path("t/checkpoint_shot1.json");
  REQUIRE(run_cli("eval --config " + path + " --checkpoint " + ckpt + " --out " + ws.path("e1")).status == 0);
  REQUIRE(run_cli("eval --config " + path + " --checkpoint " + ckpt + " --out " + ws.path("e2")).status == 0);
  CHECK(read_file(ws.path("e1/eval.csv")) == read_file(ws.path("e2/eval.csv")));
  CHECK(read_file(ws.path("e1/eval.json")) == read_file(ws.path("e2/eval.json")));

  cfg.model.embed_dim = 6;
  const Run bad = run_cli("eval --config " + ws.write_config(cfg, "wrong.json") + " --checkpoint " + ckpt +
                          " --out " + ws.path("e3"));
  CHECK(bad.status == 2);
  CHECK(bad.output.find("d=6") != std::string::npos);
  CHECK(bad.output.find("d=8") != std::string::npos);
}

TEST_CASE("robustness clean row equals eval") {
  Workspace ws("robust");
  const std::string path = ws.write_config(small_config(9));
  REQUIRE(run_cli("train --config " + path + " --out " + ws.path("t")).status == 0);
  REQUIRE(run_cli("eval --config " + path + " --checkpoint " + ws.path("t/checkpoint_shot1.json") + " --out " +
                  ws.path("e")).status == 0);
  REQUIRE(run_cli("robustness --config " + path + " --out " + ws.path("r")).status == 0);
  const std::string eval = read_file(ws.path("e/eval.csv"));
  const std::string robust = read_file(ws.path("r/robustness.csv"));
  CHECK(line_count(robust) == 1 + 1 + 8);
  const auto second_line = [](const std::string& s) {
    const auto a = s.find('\n') + 1;
    return s.substr(a, s.find('\n', a) - a);
  };
  CHECK(second_line(robust) == second_line(eval));
}

TEST_CASE("ablate and generalize row counts") {
  Workspace ws("protocols");
  const std::string path = ws.write_config(small_config(3));
  REQUIRE(run_cli("ablate --config " + path + " --out " + ws.path("a")).status == 0);
  CHECK(line_count(read_file(ws.path("a/ablation.csv"))) == 5);
  REQUIRE(run_cli("generalize --config " + path + " --out " + ws.path("g")).status == 0);
  CHECK(line_count(read_file(ws.path("g/generalization.csv"))) == 3);
  const nlohmann::json doc = nlohmann::json::parse(read_file(ws.path("g/generalization.json")));
  CHECK(doc.contains("unseen_untrained"));
  CHECK(doc.at("config").at("seed") == 3);
}

TEST_CASE("error handling") {
  Workspace ws("errors");
  nlohmann::json j = config_to_json(small_config(1));
  j["dataset"].erase("class_count");
  write_file_atomic(ws.path("broken.json"), j.dump());
  const Run r = run_cli("generate --config " + ws.path("broken.json") + " --out " + ws.path("o"));
  CHECK(r.status == 2);
  CHECK(r.output.find("dataset.class_count") != std::string::npos);

  CHECK(run_cli("generate --config " + ws.path("missing.json") + " --out " + ws.path("o")).status == 1);
  CHECK(run_cli("generate --config " + ws.write_config(small_config(1)) + " --out " + ws.path("o"),
                "HIALIGN_SEED=abc").status == 2);

  fs::create_directories(ws.path("locked"));
  std::ofstream(ws.path("locked/.hialign.lock")) << "";
  const Run locked = run_cli("generate --config " + ws.path("config.json") + " --out " + ws.path("locked"));
  CHECK(locked.status == 1);
  CHECK(locked.output.find("locked") != std::string::npos);
}
