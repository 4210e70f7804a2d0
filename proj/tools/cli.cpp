#include "cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>

#include "ddmnet/checkpoint.hpp"
#include "ddmnet/errors.hpp"
#include "ddmnet/evaluation.hpp"
#include "ddmnet/parallel.hpp"
#include "ddmnet/run_config.hpp"
#include "ddmnet/synth.hpp"
#include "ddmnet/training.hpp"

namespace fs = std::filesystem;

namespace ddmnet::cli {

namespace {

// Flags shared by every subcommand. Unset optionals leave the config alone.
struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> preset;
  std::optional<double> theta;
  std::optional<std::size_t> window;
  std::optional<std::size_t> stride;
  std::optional<std::string> ablate;
  std::optional<std::string> metric;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> batch;
  std::optional<std::string> match;
  std::optional<std::string> aggregation;
  std::optional<double> jitter;
  std::optional<std::size_t> train_videos;
  std::optional<std::size_t> val_videos;
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_path, "JSON config file (a run's config.json snapshot works)");
  app->add_option("--seed", o.seed, "Seed for data, initialization and sampling");
  app->add_option("--preset", o.preset, "Default values: desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  app->add_option("--theta", o.theta, "Post-processing probability threshold");
  app->add_option("--window", o.window, "Post-processing half-range, in evaluated positions");
  app->add_option("--stride", o.stride, "Boundary evaluation stride, in frames");
  app->add_option("--ablate", o.ablate, "Ablation variant")
      ->check(CLI::IsMember({"none", "rgb-only", "ddm-only", "avg-pool", "intra-only", "cross-only"}));
  app->add_option("--metric", o.metric, "DDM distance")
      ->check(CLI::IsMember({"euclidean", "manhattan", "chebyshev", "cosine"}));
  app->add_option("--workers", o.workers, "Worker threads (results do not depend on it)");
}

RunConfig assemble(const Overrides& o, const fs::path& fallback_config = {}) {
  std::string text, source;
  fs::path path = o.config_path.empty() ? fallback_config : fs::path(o.config_path);
  if (!path.empty()) {
    if (!fs::exists(path)) throw ConfigError("config file " + path.string() + " does not exist");
    text = read_file(path);
    source = path.string();
  }
  std::string preset = o.preset.value_or("");
  if (preset.empty() && !text.empty()) preset = RunConfig::preset_in(text, source);
  RunConfig c = RunConfig::for_preset(preset.empty() ? "desk" : preset);
  if (!text.empty()) c.merge_json(text, source);
  if (o.preset) c.preset = *o.preset;
  if (o.seed) c.seed = *o.seed;
  if (o.theta) c.postprocess.threshold = *o.theta;
  if (o.window) c.postprocess.window = *o.window;
  if (o.stride) c.train.eval_stride = *o.stride;
  if (o.ablate) c.model.ablation = model::ablation_from_string(*o.ablate);
  if (o.metric) c.model.metric = ddm::metric_from_string(*o.metric);
  if (o.workers) c.workers = *o.workers;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.lr) c.train.adam.lr = *o.lr;
  if (o.batch) c.train.batch_size = *o.batch;
  if (o.match) c.match = eval::match_mode_from_string(*o.match);
  if (o.aggregation) c.aggregation = eval::aggregation_from_string(*o.aggregation);
  if (o.jitter) c.data.jitter = *o.jitter;
  if (o.train_videos) c.data.train_videos = *o.train_videos;
  if (o.val_videos) c.data.val_videos = *o.val_videos;
  c.finalize();
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

std::vector<const synth::VideoRecord*> split_or_fail(const synth::Dataset& data, const std::string& split,
                                                     const fs::path& dir) {
  auto videos = data.split(split);
  if (videos.empty()) throw DataError("no '" + split + "' videos under " + dir.string());
  return videos;
}

std::string checkpoint_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04zu.ddmn", epoch);
  return buf;
}

// Latest epoch checkpoint under dir, if any.
std::optional<fs::path> latest_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) return std::nullopt;
  std::optional<fs::path> best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("epoch_", 0) != 0 || entry.path().extension() != ".ddmn") continue;
    if (!best || name > best->filename().string()) best = entry.path();
  }
  return best;
}

std::vector<train::LossRecord> read_loss_csv(const fs::path& path) {
  std::vector<train::LossRecord> out;
  if (!fs::exists(path)) return out;
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    train::LossRecord r;
    std::istringstream row(line);
    std::string step, epoch, loss;
    std::getline(row, step, ',');
    std::getline(row, epoch, ',');
    std::getline(row, loss);
    try {
      r.step = std::stoull(step);
      r.epoch = std::stoull(epoch);
      r.loss = std::stod(loss);
    } catch (const std::exception&) {
      throw DataError(path.string() + ": malformed row '" + line + "'");
    }
    out.push_back(r);
  }
  return out;
}

int cmd_gen_data(const Overrides& o, const fs::path& out) {
  RunConfig c = assemble(o);
  spdlog::info("generating {} train / {} val videos (seed {})", c.data.train_videos, c.data.val_videos, c.seed);
  synth::Dataset data = synth::generate_dataset(c.data, c.workers);
  synth::write_dataset(data, out);
  write_text(out / "config.json", c.to_json());
  std::printf("train %zu\nval %zu\n", data.split("train").size(), data.split("val").size());
  return kExitOk;
}

int cmd_train(const Overrides& o, const fs::path& data_dir, const fs::path& out, bool resume) {
  const fs::path snapshot = out / "config.json";
  RunConfig c = assemble(o, resume && fs::exists(snapshot) ? snapshot : fs::path{});
  synth::Dataset data = synth::read_dataset(data_dir);
  auto videos = split_or_fail(data, "train", data_dir);

  model::DdmNet net(c.model, c.seed);
  train::Trainer trainer(net, c.train);
  std::vector<train::LossRecord> curve;
  const fs::path ckpt_dir = out / "checkpoints";
  if (resume) {
    auto latest = latest_checkpoint(ckpt_dir);
    if (!latest) throw DataError("--resume: no checkpoint under " + ckpt_dir.string());
    trainer.restore(read_checkpoint(*latest));
    for (const auto& r : read_loss_csv(out / "loss.csv")) {
      if (r.epoch < trainer.epochs_done()) curve.push_back(r);
    }
    spdlog::info("resumed from {} after epoch {}", latest->string(), trainer.epochs_done());
  }
  fs::create_directories(ckpt_dir);
  write_text(snapshot, c.to_json());
  write_text(out / "loss.csv", train::loss_csv(curve));

  std::size_t scalars = 0;
  for (const auto& p : net.parameters()) scalars += p.tensor.numel();
  spdlog::info("training {} videos, preset {}, ablation {}, {} parameters", videos.size(), c.preset,
               model::to_string(c.model.ablation), scalars);
  auto started = std::chrono::steady_clock::now();
  trainer.run(videos, [&](std::size_t epoch, const std::vector<train::LossRecord>& records) {
    curve.insert(curve.end(), records.begin(), records.end());
    const auto ckpt = trainer.checkpoint_records();
    write_checkpoint(ckpt_dir / checkpoint_name(epoch + 1), ckpt);
    write_checkpoint(out / "model.ddmn", ckpt);
    write_text(out / "loss.csv", train::loss_csv(curve));
    double mean = 0.0;
    for (const auto& r : records) mean += r.loss;
    mean /= static_cast<double>(std::max<std::size_t>(1, records.size()));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    spdlog::info("epoch {}/{} mean loss {:.5f} ({:.1f}s)", epoch + 1, c.train.epochs, mean, secs);
  });
  std::printf("trained %zu epochs; checkpoint %s\n", trainer.epochs_done(), (out / "model.ddmn").c_str());
  return kExitOk;
}

// The training snapshot beside (or one level above) a checkpoint.
fs::path config_near(const fs::path& checkpoint) {
  const fs::path dir = fs::absolute(checkpoint).parent_path();
  for (const fs::path& d : {dir, dir.parent_path()}) {
    if (fs::exists(d / "config.json")) return d / "config.json";
  }
  return {};
}

int cmd_infer(const Overrides& o, const fs::path& checkpoint, const fs::path& data_dir, const fs::path& out,
              const std::string& split, bool plot) {
  RunConfig c = assemble(o, o.config_path.empty() ? config_near(checkpoint) : fs::path{});
  model::DdmNet net(c.model, c.seed);
  net.load_parameters(read_checkpoint(checkpoint));
  synth::Dataset data = synth::read_dataset(data_dir);
  auto videos = split_or_fail(data, split, data_dir);
  const std::size_t stride = c.train.eval_stride;

  std::vector<eval::VideoPrediction> preds(videos.size());
  std::vector<std::vector<double>> curves(videos.size());
  parallel_for(videos.size(), c.workers, [&](std::size_t i) {
    curves[i] = eval::score_video(net, *videos[i], stride);
    preds[i].video = videos[i]->id;
    for (std::size_t k : eval::post_process(curves[i], c.postprocess)) {
      preds[i].positions.push_back(k * stride);
      preds[i].scores.push_back(curves[i][k]);
    }
  });
  write_text(out, eval::encode_predictions(preds));
  write_text(fs::path(out).replace_extension(".config.json"), c.to_json());
  if (plot) {
    const fs::path dir = out.parent_path() / "plots";
    for (std::size_t i = 0; i < videos.size(); ++i) {
      write_text(dir / (videos[i]->id + ".svg"),
                 eval::score_plot_svg(videos[i]->id, curves[i], stride, videos[i]->num_frames,
                                      c.postprocess.threshold, preds[i].positions, videos[i]->boundaries));
    }
  }
  std::size_t total = 0;
  for (const auto& p : preds) total += p.positions.size();
  std::printf("%zu videos, %zu boundaries -> %s\n", preds.size(), total, out.c_str());
  return kExitOk;
}

std::string join(const std::vector<std::string>& items) {
  std::string s;
  for (const auto& x : items) s += (s.empty() ? "" : ", ") + x;
  return s;
}

int cmd_eval(const Overrides& o, const fs::path& predictions, const fs::path& data_dir, const fs::path& out,
             const std::string& split) {
  RunConfig c = assemble(o);
  auto preds = eval::decode_predictions(read_file(predictions), predictions.string());
  synth::Dataset data = synth::read_dataset(data_dir);
  std::set<std::string> expected, given;
  for (const auto* v : data.split(split)) expected.insert(v->id);
  for (const auto& p : preds) given.insert(p.video);
  std::vector<std::string> missing, unknown;
  for (const auto& id : expected) {
    if (!given.count(id)) missing.push_back(id);
  }
  for (const auto& id : given) {
    if (!expected.count(id)) unknown.push_back(id);
  }
  if (!missing.empty() || !unknown.empty()) {
    std::string msg = "prediction ids do not match the '" + split + "' split";
    if (!missing.empty()) msg += "; missing: " + join(missing);
    if (!unknown.empty()) msg += "; unknown: " + join(unknown);
    throw DataError(msg);
  }
  auto report = eval::compute_report(preds, data, eval::default_thresholds(), c.match, c.aggregation);
  const std::string table = eval::format_report_table(report);
  write_text(out / "report.txt", table);
  write_text(out / "report.csv", eval::format_report_csv(report));
  write_text(out / "config.json", c.to_json());
  std::printf("%savg F1 %.4f\n", table.c_str(), report.avg_f1);
  return kExitOk;
}

void configure_logging() {
  if (!spdlog::get("ddmnet")) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("ddmnet"));
    spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");
  }
  const char* env = std::getenv("DDM_LOG_LEVEL");
  const std::string level = env ? env : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "warn") {
    spdlog::set_level(spdlog::level::warn);
  } else if (level == "info") {
    spdlog::set_level(spdlog::level::info);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    throw ConfigError("DDM_LOG_LEVEL must be one of error, warn, info, debug (got '" + level + "')");
  }
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Generic event boundary detection with dense difference maps", "ddmnet"};
  app.require_subcommand(1);
  Overrides o;
  fs::path out, data_dir, checkpoint, predictions;
  std::string split = "val";
  bool resume = false, plot = false;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  add_common(gen, o);
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--jitter", o.jitter, "Per-frame nuisance variation");
  gen->add_option("--train-videos", o.train_videos, "Training video count");
  gen->add_option("--val-videos", o.val_videos, "Validation video count");

  auto* tr = app.add_subcommand("train", "Train a model");
  add_common(tr, o);
  tr->add_option("--data", data_dir, "Dataset directory")->required();
  tr->add_option("--out", out, "Run directory")->required();
  tr->add_option("--epochs", o.epochs, "Epoch count");
  tr->add_option("--lr", o.lr, "Adam learning rate");
  tr->add_option("--batch", o.batch, "Batch size");
  tr->add_flag("--resume", resume, "Continue from the latest checkpoint in --out");

  auto* inf = app.add_subcommand("infer", "Score videos and pick boundaries");
  add_common(inf, o);
  inf->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  inf->add_option("--data", data_dir, "Dataset directory")->required();
  inf->add_option("--out", out, "Predictions file (JSON lines)")->required();
  inf->add_option("--split", split, "Split to score");
  inf->add_flag("--plot", plot, "Also write plots/<video>.svg beside --out");

  auto* ev = app.add_subcommand("eval", "Precision/recall/F1 over Rel.Dis thresholds");
  add_common(ev, o);
  ev->add_option("--predictions", predictions, "Predictions file")->required();
  ev->add_option("--data", data_dir, "Dataset directory")->required();
  ev->add_option("--out", out, "Report directory")->required();
  ev->add_option("--split", split, "Split the predictions cover");
  ev->add_option("--match", o.match, "optimal or greedy")->check(CLI::IsMember({"optimal", "greedy"}));
  ev->add_option("--aggregation", o.aggregation, "global or per-video")
      ->check(CLI::IsMember({"global", "per-video"}));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    configure_logging();
    if (gen->parsed()) return cmd_gen_data(o, out);
    if (tr->parsed()) return cmd_train(o, data_dir, out, resume);
    if (inf->parsed()) return cmd_infer(o, checkpoint, data_dir, out, split, plot);
    return cmd_eval(o, predictions, data_dir, out, split);
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return kExitData;
  } catch (const NumericError& e) {
    spdlog::error("numeric failure: {}", e.what());
    return kExitNumeric;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("file system: {}", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  }
}

}  // namespace ddmnet::cli
