// hialign: experiment driver for hierarchical image-text contrastive alignment.
//
//   hialign <generate|train|eval|ablate|robustness|generalize> --config <path>
//           [--out <dir>] [--checkpoint <path>]
//
// Every artifact is a pure function of the config file (and HIALIGN_SEED, if
// set). Wall-clock data goes to <out>/<command>.run.json only.

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hialign/errors.hpp"
#include "hialign/experiment.hpp"
#include "hialign/io.hpp"
#include "hialign/protocols.hpp"

namespace fs = std::filesystem;
using namespace hialign;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

// Single instance per output directory.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".hialign.lock") {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) throw IoError("output directory '" + dir.string() + "' is locked by another run (" + path_.string() + ")");
  }
  ~OutputLock() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

std::string iso_time(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
  return buf;
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

struct Context {
  ExperimentConfig cfg;  // resolved
  fs::path out;
};

Context prepare(const std::string& config_path, const std::string& out_override) {
  ExperimentConfig cfg = load_config(config_path);
  if (const char* env = std::getenv("HIALIGN_SEED")) {
    try {
      std::size_t used = 0;
      cfg.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError(std::string("HIALIGN_SEED must be an unsigned integer, got '") + env + "'");
    }
  }
  if (!out_override.empty()) cfg.output_dir = out_override;
  Context ctx{cfg.resolved(), fs::path(cfg.output_dir)};
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  if (ec || !fs::is_directory(ctx.out)) throw IoError("cannot create output directory '" + ctx.out.string() + "'");
  if (ctx.cfg.dataset_path && !fs::exists(*ctx.cfg.dataset_path)) {
    throw ConfigError("config: dataset.path '" + *ctx.cfg.dataset_path + "' does not exist");
  }
  return ctx;
}

void write(const Context& ctx, const std::string& name, const std::string& content) {
  write_file_atomic((ctx.out / name).string(), content);
  std::cout << "wrote " << (ctx.out / name).string() << "\n";
}

void write_reports(const Context& ctx, const std::string& stem, const std::vector<MetricsReport>& rows,
                   nlohmann::json doc) {
  write(ctx, stem + ".csv", reports_to_csv(rows));
  write(ctx, stem + ".json", dump(doc));
}

void cmd_generate(const Context& ctx) {
  const Dataset ds = load_or_generate(ctx.cfg);
  const std::string text = dump(dataset_to_json(ds));
  write(ctx, "dataset.json", text);
  std::cout << "content hash " << content_hash(text) << "\n";
}

void cmd_train(const Context& ctx) {
  const Dataset ds = load_or_generate(ctx.cfg);
  for (std::size_t shot : ctx.cfg.protocol.shots) {
    const TrainedModel m = train_model(ctx.cfg, ds, shot);
    for (const auto& r : m.log.records) {
      std::cout << "shot " << shot << " " << r.stage << " epoch " << r.epoch << " loss " << format_double(r.total)
                << "\n";
    }
    const std::string stem = "checkpoint_shot" + std::to_string(shot);
    nlohmann::json ckpt = {{"k_shot", shot},
                           {"seed", ctx.cfg.seed},
                           {"image", encoder_to_json(m.image)},
                           {"text", encoder_to_json(m.text)}};
    nlohmann::json optim = {{"image", optim_state_to_json(m.image_state)},
                            {"text", optim_state_to_json(m.text_state)}};
    write(ctx, stem + ".json", dump(ckpt));
    write(ctx, stem + ".optim.json", dump(optim));
    write(ctx, "trainlog_shot" + std::to_string(shot) + ".csv", m.log.to_csv());
  }
}

void check_dims(const char* which, const Encoder& enc, std::size_t input, const ExperimentConfig& cfg) {
  const bool ok = enc.kind == cfg.model.kind && enc.input_dim == input && enc.output_dim == cfg.model.embed_dim &&
                  (enc.kind == EncoderKind::linear || enc.hidden_dim == cfg.model.hidden_dim);
  if (!ok) {
    throw ConfigError(std::string("checkpoint ") + which + " encoder does not match config: expected " +
                      to_string(cfg.model.kind) + " input=" + std::to_string(input) +
                      " hidden=" + std::to_string(cfg.model.kind == EncoderKind::linear ? 0 : cfg.model.hidden_dim) +
                      " d=" + std::to_string(cfg.model.embed_dim) + ", found " + to_string(enc.kind) +
                      " input=" + std::to_string(enc.input_dim) + " hidden=" + std::to_string(enc.hidden_dim) +
                      " d=" + std::to_string(enc.output_dim));
  }
}

void cmd_eval(const Context& ctx, const std::string& checkpoint) {
  if (checkpoint.empty()) throw ConfigError("eval requires --checkpoint <path>");
  nlohmann::json ckpt;
  try {
    ckpt = nlohmann::json::parse(read_file(checkpoint));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("checkpoint '" + checkpoint + "' is not valid JSON: " + e.what());
  }
  if (!ckpt.contains("k_shot") || !ckpt.contains("image") || !ckpt.contains("text")) {
    throw ConfigError("checkpoint '" + checkpoint + "' lacks k_shot/image/text fields");
  }
  const Dataset ds = load_or_generate(ctx.cfg);
  TrainedModel m;
  m.k_shot = ckpt.at("k_shot").get<std::size_t>();
  m.image = encoder_from_json(ckpt.at("image"));
  m.text = encoder_from_json(ckpt.at("text"));
  check_dims("image", m.image, ds.spec.image_dim, ctx.cfg);
  check_dims("text", m.text, ds.spec.text_dim, ctx.cfg);
  m.episode = episode_for(ctx.cfg, ds, m.k_shot);
  const std::vector<MetricsReport> rows{evaluate_queries(m, ctx.cfg, ds, "clean")};
  write_reports(ctx, "eval", rows, reports_document(ctx.cfg, rows));
}

void cmd_ablate(const Context& ctx) {
  const auto rows = run_ablation(ctx.cfg);
  write_reports(ctx, "ablation", rows, reports_document(ctx.cfg, rows));
}

void cmd_robustness(const Context& ctx) {
  const auto rows = run_robustness(ctx.cfg);
  write_reports(ctx, "robustness", rows, reports_document(ctx.cfg, rows));
}

void cmd_generalize(const Context& ctx) {
  const GeneralizationReport g = run_generalization(ctx.cfg);
  const std::vector<MetricsReport> rows{g.seen, g.unseen};
  nlohmann::json doc = reports_document(ctx.cfg, rows);
  doc["unseen_untrained"] = report_to_json(g.unseen_untrained);
  write_reports(ctx, "generalization", rows, doc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical image-text contrastive alignment experiments"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir;
  std::string checkpoint;

  const std::vector<std::string> names{"generate", "train", "eval", "ablate", "robustness", "generalize"};
  for (const auto& name : names) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory (overrides config output_dir)");
    if (name == "eval") sub->add_option("--checkpoint", checkpoint, "checkpoint written by train")->required();
  }
  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    const Context ctx = prepare(config_path, out_dir);
    OutputLock lock(ctx.out);
    const auto started = std::chrono::system_clock::now();
    if (command == "generate") cmd_generate(ctx);
    else if (command == "train") cmd_train(ctx);
    else if (command == "eval") cmd_eval(ctx, checkpoint);
    else if (command == "ablate") cmd_ablate(ctx);
    else if (command == "robustness") cmd_robustness(ctx);
    else cmd_generalize(ctx);
    const auto finished = std::chrono::system_clock::now();
    const nlohmann::json meta = {
        {"command", command},
        {"config", config_path},
        {"seed", ctx.cfg.seed},
        {"started", iso_time(started)},
        {"finished", iso_time(finished)},
        {"seconds", std::chrono::duration<double>(finished - started).count()}};
    write_file_atomic((ctx.out / (command + ".run.json")).string(), dump(meta));
  } catch (const ConfigError& e) {
    std::cerr << "hialign " << command << ": " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "hialign " << command << ": " << e.what() << "\n";
    return kExitFailure;
  }
  return 0;
}
