#include "ddmnet/run_config.hpp"

#include <set>

#include <json.hpp>

#include "ddmnet/checkpoint.hpp"
#include "ddmnet/errors.hpp"

namespace ddmnet {

using nlohmann::json;

namespace {

json parse(const std::string& text, const std::string& source) {
  try {
    json j = json::parse(text);
    if (!j.is_object()) throw ConfigError(source + ": top level must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

// Reads fields of one JSON object, rejecting keys nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string source, std::string path = "")
      : j_(j), source_(std::move(source)), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(source_ + ": '" + path_ + "' must be an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(source_ + ": unknown config key '" + path(it.key()) + "'");
    }
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(source_ + ": config key '" + path(key) + "' has the wrong type");
    }
  }

  template <class T, class Parse>
  void get_as(const char* key, T& out, Parse parse) {
    std::string name;
    get(key, name);
    if (!name.empty()) out = parse(name);
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  Reader child_reader(const json& j, const char* key) const { return Reader(j, source_, path(key)); }

 private:
  const json& j_;
  std::string source_;
  std::string path_;
  std::set<std::string> seen_;
};

// Numbers outside [0, 2^53) cannot be represented exactly in every JSON
// reader, so the seed is kept as a string.
std::uint64_t parse_seed(const std::string& s, const std::string& source) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || s[0] == '-') throw ConfigError(source + ": seed '" + s + "' is not a u64");
  return v;
}

}  // namespace

RunConfig RunConfig::for_preset(const std::string& name) {
  RunConfig c;
  if (name == "desk") {
    c.model = model::ModelConfig::desk();
    c.train = train::TrainConfig::desk();
  } else if (name == "paper") {
    c.model = model::ModelConfig::paper();
    c.train = train::TrainConfig::paper();
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
  }
  c.preset = name;
  return c;
}

void RunConfig::finalize() {
  data.seed = seed;
  train.seed = seed;
  train.workers = workers;
  train.preset = preset;
  if (workers == 0) throw ConfigError("workers must be >= 1");
  data.validate();
  model.validate();
  train.validate();
  postprocess.validate();
}

std::string RunConfig::to_json() const {
  json regimes = json::array();
  for (auto r : data.regimes) regimes.push_back(synth::to_string(r));
  json j = {
      {"preset", preset},
      {"seed", std::to_string(seed)},
      {"workers", workers},
      {"data",
       {{"train_videos", data.train_videos},
        {"val_videos", data.val_videos},
        {"min_frames", data.min_frames},
        {"max_frames", data.max_frames},
        {"min_events", data.min_events},
        {"max_events", data.max_events},
        {"min_event_length", data.min_event_length},
        {"regimes", regimes},
        {"jitter", data.jitter},
        {"height", data.height},
        {"width", data.width}}},
      {"model",
       {{"half_window", model.clip.half_window},
        {"clip_stride", model.clip.stride},
        {"widths", model.bank.widths},
        {"dilations", model.bank.dilations},
        {"temporal_kernel", model.bank.temporal_kernel},
        {"coord_channels", model.bank.coord_channels},
        {"feature_scale", model.bank.feature_scale},
        {"metric", ddm::to_string(model.metric)},
        {"heads", model.heads},
        {"ffn_hidden", model.ffn_hidden},
        {"intra_layers", model.intra_layers},
        {"cross_layers", model.cross_layers},
        {"queries", model.queries},
        {"ablation", model::to_string(model.ablation)}}},
      {"train",
       {{"lr", train.adam.lr},
        {"beta1", train.adam.beta1},
        {"beta2", train.adam.beta2},
        {"eps", train.adam.eps},
        {"batch_size", train.batch_size},
        {"epochs", train.epochs},
        {"eval_stride", train.eval_stride},
        {"sampler_ratio", train.sampler_ratio}}},
      {"postprocess", {{"theta", postprocess.threshold}, {"window", postprocess.window}}},
      {"eval", {{"match", eval::to_string(match)}, {"aggregation", eval::to_string(aggregation)}}},
  };
  return j.dump(2) + "\n";
}

std::string RunConfig::preset_in(const std::string& text, const std::string& source) {
  json j = parse(text, source);
  auto it = j.find("preset");
  if (it == j.end()) return "";
  if (!it->is_string()) throw ConfigError(source + ": preset must be a string");
  return it->get<std::string>();
}

void RunConfig::merge_json(const std::string& text, const std::string& source) {
  json j = parse(text, source);
  Reader top(j, source);
  top.get("preset", preset);
  std::string seed_text;
  top.get("seed", seed_text);
  if (!seed_text.empty()) seed = parse_seed(seed_text, source);
  top.get("workers", workers);
  if (const json* d = top.child("data")) {
    Reader r = top.child_reader(*d, "data");
    r.get("train_videos", data.train_videos);
    r.get("val_videos", data.val_videos);
    r.get("min_frames", data.min_frames);
    r.get("max_frames", data.max_frames);
    r.get("min_events", data.min_events);
    r.get("max_events", data.max_events);
    r.get("min_event_length", data.min_event_length);
    std::vector<std::string> regimes;
    r.get("regimes", regimes);
    if (d->contains("regimes")) {
      data.regimes.clear();
      for (auto& name : regimes) data.regimes.push_back(synth::regime_from_string(name));
    }
    r.get("jitter", data.jitter);
    r.get("height", data.height);
    r.get("width", data.width);
  }
  if (const json* m = top.child("model")) {
    Reader r = top.child_reader(*m, "model");
    r.get("half_window", model.clip.half_window);
    r.get("clip_stride", model.clip.stride);
    r.get("widths", model.bank.widths);
    r.get("dilations", model.bank.dilations);
    r.get("temporal_kernel", model.bank.temporal_kernel);
    r.get("coord_channels", model.bank.coord_channels);
    r.get("feature_scale", model.bank.feature_scale);
    r.get_as("metric", model.metric, ddm::metric_from_string);
    r.get("heads", model.heads);
    r.get("ffn_hidden", model.ffn_hidden);
    r.get("intra_layers", model.intra_layers);
    r.get("cross_layers", model.cross_layers);
    r.get("queries", model.queries);
    r.get_as("ablation", model.ablation, model::ablation_from_string);
  }
  if (const json* t = top.child("train")) {
    Reader r = top.child_reader(*t, "train");
    r.get("lr", train.adam.lr);
    r.get("beta1", train.adam.beta1);
    r.get("beta2", train.adam.beta2);
    r.get("eps", train.adam.eps);
    r.get("batch_size", train.batch_size);
    r.get("epochs", train.epochs);
    r.get("eval_stride", train.eval_stride);
    r.get("sampler_ratio", train.sampler_ratio);
  }
  if (const json* p = top.child("postprocess")) {
    Reader r = top.child_reader(*p, "postprocess");
    r.get("theta", postprocess.threshold);
    r.get("window", postprocess.window);
  }
  if (const json* e = top.child("eval")) {
    Reader r = top.child_reader(*e, "eval");
    r.get_as("match", match, eval::match_mode_from_string);
    r.get_as("aggregation", aggregation, eval::aggregation_from_string);
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const std::string preset = RunConfig::preset_in(text, path.string());
  RunConfig c = RunConfig::for_preset(preset.empty() ? "desk" : preset);
  c.merge_json(text, path.string());
  return c;
}

}  // namespace ddmnet
