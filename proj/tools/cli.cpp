#include "cli.hpp"

#include "isoimm/checkpoint.hpp"
#include "isoimm/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace isoimm::cli {

using nlohmann::json;
namespace fs = std::filesystem;

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "dataset",     "n",          "radius",      "data_seed",       "input",           "normalize",
      "output_dir",  "output",     "checkpoint_dir",
      "alpha",       "beta",       "gamma",       "epsilon",         "latent_dim",      "hidden",
      "activation",  "k",          "sampler",     "ball_radius",     "outer_iters",     "inner_imm_iters",
      "inner_iso_iters", "batch_size", "lr_theta", "lr_omega",       "lr",              "seed",
      "n_triplets",  "n_pairs",    "eval_seed",   "gammas",
  };
  return keys;
}

namespace {

std::uint64_t get_uint(const json& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    if (v.get<std::int64_t>() < 0) throw ConfigError(key, "must be non-negative");
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  throw ConfigError(key, "expected a non-negative integer, got " + v.dump());
}

std::size_t get_count(const json& v, const std::string& key, std::size_t min) {
  auto x = get_uint(v, key);
  if (x < min) throw ConfigError(key, "must be >= " + std::to_string(min));
  return static_cast<std::size_t>(x);
}

double get_real(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(key, "expected a number, got " + v.dump());
  double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(key, "must be finite");
  return x;
}

double get_nonneg(const json& v, const std::string& key) {
  double x = get_real(v, key);
  if (x < 0.0) throw ConfigError(key, "must be >= 0");
  return x;
}

double get_positive(const json& v, const std::string& key) {
  double x = get_real(v, key);
  if (!(x > 0.0)) throw ConfigError(key, "must be > 0");
  return x;
}

std::string get_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError(key, "expected a string, got " + v.dump());
  return v.get<std::string>();
}

bool get_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError(key, "expected true or false, got " + v.dump());
  return v.get<bool>();
}

std::string dataset_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::SwissRoll: return "swiss_roll";
    case DatasetKind::Sphere: return "sphere";
    case DatasetKind::File: return "file";
  }
  return "unknown";
}

void apply_key(RunConfig& c, const std::string& key, const json& v, bool& data_seed_set) {
  TrainConfig& t = c.train;
  if (key == "dataset") {
    auto s = get_string(v, key);
    if (s == "swiss_roll") c.data.kind = DatasetKind::SwissRoll;
    else if (s == "sphere") c.data.kind = DatasetKind::Sphere;
    else if (s == "file") c.data.kind = DatasetKind::File;
    else throw ConfigError(key, "unknown dataset '" + s + "' (expected swiss_roll, sphere or file)");
  } else if (key == "n") {
    c.data.n = get_count(v, key, 1);
  } else if (key == "radius") {
    c.data.radius = get_positive(v, key);
  } else if (key == "data_seed") {
    c.data.seed = get_uint(v, key);
    data_seed_set = true;
  } else if (key == "input") {
    c.data.input = get_string(v, key);
  } else if (key == "normalize") {
    c.data.normalize = get_bool(v, key);
  } else if (key == "output_dir") {
    c.output_dir = get_string(v, key);
    if (c.output_dir.empty()) throw ConfigError(key, "must not be empty");
  } else if (key == "output") {
    c.output = get_string(v, key);
  } else if (key == "checkpoint_dir") {
    c.checkpoint_dir = get_string(v, key);
  } else if (key == "alpha") {
    t.weights.alpha = get_nonneg(v, key);
  } else if (key == "beta") {
    t.weights.beta = get_nonneg(v, key);
  } else if (key == "gamma") {
    t.weights.gamma = get_nonneg(v, key);
  } else if (key == "epsilon") {
    t.weights.epsilon = get_nonneg(v, key);
  } else if (key == "latent_dim") {
    t.latent_dim = get_count(v, key, 1);
  } else if (key == "hidden") {
    if (!v.is_array()) throw ConfigError(key, "expected an array of layer widths, got " + v.dump());
    t.hidden.clear();
    for (const auto& w : v) t.hidden.push_back(get_count(w, key, 1));
  } else if (key == "activation") {
    try {
      t.activation = parse_activation(get_string(v, key));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key, e.what());
    }
  } else if (key == "k") {
    t.k = get_count(v, key, 1);
  } else if (key == "sampler") {
    auto s = get_string(v, key);
    if (s == "knn") t.sampler = SamplerKind::Knn;
    else if (s == "ball") t.sampler = SamplerKind::Ball;
    else throw ConfigError(key, "unknown sampler '" + s + "' (expected knn or ball)");
  } else if (key == "ball_radius") {
    t.ball_radius = get_positive(v, key);
  } else if (key == "outer_iters") {
    t.outer_iters = get_count(v, key, 1);
  } else if (key == "inner_imm_iters") {
    t.inner_imm_iters = get_count(v, key, 1);
  } else if (key == "inner_iso_iters") {
    t.inner_iso_iters = get_count(v, key, 1);
  } else if (key == "batch_size") {
    t.batch_size = get_count(v, key, 0);
  } else if (key == "lr_theta") {
    t.lr_theta = get_nonneg(v, key);
  } else if (key == "lr_omega") {
    t.lr_omega = get_nonneg(v, key);
  } else if (key == "lr") {
    t.lr_theta = t.lr_omega = get_nonneg(v, key);
  } else if (key == "seed") {
    t.seed = get_uint(v, key);
  } else if (key == "n_triplets") {
    c.eval.n_triplets = get_count(v, key, 1);
  } else if (key == "n_pairs") {
    c.eval.n_pairs = get_count(v, key, 1);
  } else if (key == "eval_seed") {
    c.eval.seed = get_uint(v, key);
  } else if (key == "gammas") {
    if (!v.is_array() || v.empty()) throw ConfigError(key, "expected a nonempty array of numbers, got " + v.dump());
    c.gammas.clear();
    for (const auto& g : v) c.gammas.push_back(get_nonneg(g, key));
  } else {
    throw ConfigError(key, "unknown key");
  }
}

const std::vector<std::string> kCommands{"gen", "train", "embed", "eval", "ablate-dual"};

void validate(const RunConfig& c) {
  const TrainConfig& t = c.train;
  if (c.data.kind == DatasetKind::File && c.data.input.empty()) {
    throw ConfigError("input", "required when dataset is 'file'");
  }
  if (c.data.kind != DatasetKind::File) {
    const std::size_t ambient = 3;
    const std::size_t n = c.data.n;
    if (t.latent_dim > ambient) throw ConfigError("latent_dim", "must not exceed the ambient dimension 3");
    if (t.batch_size > n) throw ConfigError("batch_size", "exceeds the dataset size " + std::to_string(n));
    const std::size_t b = t.effective_batch(n);
    if (c.command != "gen" && t.sampler == SamplerKind::Knn && t.k >= b) {
      throw ConfigError("k", "must be smaller than the batch size " + std::to_string(b));
    }
    if ((c.command == "eval") && c.eval.k >= n) throw ConfigError("k", "must be smaller than the dataset size");
  }
  if (c.command == "gen" && !c.output.empty() && c.data.kind == DatasetKind::File) {
    std::error_code ec;
    if (fs::equivalent(c.output, c.data.input, ec)) throw ConfigError("output", "would overwrite the input file");
  }
}

}  // namespace

RunConfig parse_config_json(const std::string& command, const json& file, const Overrides& overrides) {
  if (std::find(kCommands.begin(), kCommands.end(), command) == kCommands.end()) {
    throw ConfigError("command", "unknown subcommand '" + command + "'");
  }
  if (!file.is_object()) throw ConfigError("<root>", "config must be a JSON object");
  const json* body = &file;
  // A manifest from an earlier run: {"command", "config", "seed"}.
  if (file.contains("config") && file.contains("command") && file.at("config").is_object()) body = &file.at("config");

  RunConfig c;
  c.command = command;
  bool data_seed_set = false;
  // "lr" first so that explicit lr_theta / lr_omega in the same layer win.
  auto apply_layer = [&](const std::vector<std::pair<std::string, json>>& items) {
    for (const auto& [k, v] : items) {
      if (k == "lr") apply_key(c, k, v, data_seed_set);
    }
    for (const auto& [k, v] : items) {
      if (k != "lr") apply_key(c, k, v, data_seed_set);
    }
  };
  std::vector<std::pair<std::string, json>> layer;
  for (auto it = body->begin(); it != body->end(); ++it) layer.emplace_back(it.key(), it.value());
  apply_layer(layer);
  layer.assign(overrides.begin(), overrides.end());
  apply_layer(layer);
  if (!data_seed_set) c.data.seed = c.train.seed;
  c.eval.k = c.train.k;
  validate(c);
  return c;
}

RunConfig parse_config(const std::string& command, const fs::path& path, const Overrides& overrides) {
  json file = json::object();
  if (!path.empty()) {
    std::string text;
    try {
      text = read_text_file(path);
    } catch (const std::exception& e) {
      throw ConfigError("config", e.what());
    }
    try {
      file = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError("config", path.string() + " is not valid JSON: " + e.what());
    }
  }
  return parse_config_json(command, file, overrides);
}

json resolved_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  json j;
  j["dataset"] = dataset_name(c.data.kind);
  j["n"] = c.data.n;
  j["radius"] = c.data.radius;
  j["data_seed"] = c.data.seed;
  j["input"] = c.data.input.string();
  j["normalize"] = c.data.normalize;
  j["output_dir"] = c.output_dir.string();
  j["output"] = c.output.string();
  j["checkpoint_dir"] = c.checkpoint_dir.string();
  j["alpha"] = t.weights.alpha;
  j["beta"] = t.weights.beta;
  j["gamma"] = t.weights.gamma;
  j["epsilon"] = t.weights.epsilon;
  j["latent_dim"] = t.latent_dim;
  j["hidden"] = t.hidden;
  j["activation"] = activation_name(t.activation);
  j["k"] = t.k;
  j["sampler"] = t.sampler == SamplerKind::Knn ? "knn" : "ball";
  j["ball_radius"] = t.ball_radius;
  j["outer_iters"] = t.outer_iters;
  j["inner_imm_iters"] = t.inner_imm_iters;
  j["inner_iso_iters"] = t.inner_iso_iters;
  j["batch_size"] = t.batch_size;
  j["lr_theta"] = t.lr_theta;
  j["lr_omega"] = t.lr_omega;
  j["seed"] = t.seed;
  j["n_triplets"] = c.eval.n_triplets;
  j["n_pairs"] = c.eval.n_pairs;
  j["eval_seed"] = c.eval.seed;
  j["gammas"] = c.gammas;
  return j;
}

PointCloud load_dataset(const DataConfig& data) {
  switch (data.kind) {
    case DatasetKind::SwissRoll: return gen_swiss_roll(data.n, data.seed);
    case DatasetKind::Sphere: return gen_sphere(data.n, data.radius, data.seed);
    case DatasetKind::File: return load_xyz(data.input);
  }
  throw std::logic_error("unhandled dataset kind");
}

json eval_report_json(const EvalReport& r) {
  return {{"distortion", r.distortion}, {"triplet", r.triplet},       {"spearman", r.spearman},
          {"knn_preservation", r.knn_preservation},                  {"k", r.k},
          {"n_triplets", r.n_triplets}, {"n_pairs", r.n_pairs},        {"seed", r.seed}};
}

namespace {

struct Layout {
  fs::path root, checkpoints, logs, reports, fields;
  explicit Layout(const fs::path& r)
      : root(r), checkpoints(r / "checkpoints"), logs(r / "logs"), reports(r / "reports"), fields(r / "fields") {}
  void create() const {
    for (const fs::path* d : {&checkpoints, &logs, &reports, &fields}) fs::create_directories(*d);
  }
};

fs::path checkpoint_dir(const RunConfig& c) {
  return c.checkpoint_dir.empty() ? Layout(c.output_dir).checkpoints : c.checkpoint_dir;
}

json transform_json(const NormalizeTransform& tf) {
  return {{"center", std::vector<double>(tf.center.data(), tf.center.data() + tf.center.size())}, {"scale", tf.scale}};
}

NormalizeTransform transform_from_json(const json& j) {
  NormalizeTransform tf;
  auto c = j.at("center").get<std::vector<double>>();
  tf.center = Eigen::Map<const Vector>(c.data(), static_cast<Eigen::Index>(c.size()));
  tf.scale = j.at("scale").get<double>();
  if (!(tf.scale > 0.0)) throw std::runtime_error("normalization scale must be positive");
  return tf;
}

/// The cloud in the coordinates the networks were trained in.
std::pair<PointCloud, NormalizeTransform> prepared_cloud(const RunConfig& c) {
  PointCloud raw = load_dataset(c.data);
  if (c.data.normalize) return normalize(raw);
  NormalizeTransform identity{Vector::Zero(raw.points.cols()), 1.0};
  return {raw, identity};
}

void save_networks(const fs::path& dir, const TrainState& s, std::uint64_t seed, const std::string& prefix) {
  save_checkpoint(dir / (prefix + "encoder.json"), {s.encoder, NetworkRole::Encoder, seed});
  save_checkpoint(dir / (prefix + "decoder.json"), {s.decoder, NetworkRole::Decoder, seed});
  save_checkpoint(dir / (prefix + "dual.json"), {s.dual, NetworkRole::Dual, seed});
}

struct LoadedModel {
  MlpParams encoder, decoder, dual;
  NormalizeTransform transform;
};

LoadedModel load_model(const fs::path& dir) {
  LoadedModel m;
  m.encoder = load_checkpoint(dir / "encoder.json").params;
  m.decoder = load_checkpoint(dir / "decoder.json").params;
  m.dual = load_checkpoint(dir / "dual.json").params;
  m.transform = transform_from_json(json::parse(read_text_file(dir / "normalization.json")));
  return m;
}

std::string latents_csv(const LatentBatch& latents) {
  std::ostringstream os;
  os << "index";
  for (Eigen::Index c = 0; c < latents.codes.cols(); ++c) os << ",z" << c;
  os << '\n';
  for (std::size_t r = 0; r < latents.size(); ++r) {
    os << latents.source[r];
    for (Eigen::Index c = 0; c < latents.codes.cols(); ++c) {
      os << ',' << format_double(latents.codes(static_cast<Eigen::Index>(r), c));
    }
    os << '\n';
  }
  return os.str();
}

LatentBatch encode_all(const MlpParams& encoder, const PointCloud& cloud) {
  if (encoder.spec.input_dim() != cloud.dim()) {
    throw std::runtime_error("checkpoint expects " + std::to_string(encoder.spec.input_dim()) +
                             "-dimensional points but the dataset has " + std::to_string(cloud.dim()));
  }
  LatentBatch l{mlp_forward(encoder, cloud.points), std::vector<std::size_t>(cloud.size())};
  std::iota(l.source.begin(), l.source.end(), 0);
  return l;
}

json loss_json(const LossReport& r) {
  return {{"l_re", r.l_re}, {"l_tm", r.l_tm}, {"l_is", r.l_is}, {"l_du", r.l_du},
          {"l_immersion", r.l_immersion}, {"l_isometry", r.l_isometry}};
}

/// Mean l_is over the last tenth of the history (at least one iteration).
double tail_mean_l_is(const std::vector<LossReport>& h) {
  const std::size_t w = std::max<std::size_t>(1, h.size() / 10);
  double s = 0.0;
  for (std::size_t i = h.size() - w; i < h.size(); ++i) s += h[i].l_is;
  return s / static_cast<double>(w);
}

void check_training_data(const RunConfig& c, const PointCloud& cloud) {
  if (c.train.latent_dim > cloud.dim()) throw ConfigError("latent_dim", "must not exceed the ambient dimension");
  if (c.train.batch_size > cloud.size()) throw ConfigError("batch_size", "exceeds the dataset size");
  if (c.train.sampler == SamplerKind::Knn && c.train.k >= c.train.effective_batch(cloud.size())) {
    throw ConfigError("k", "must be smaller than the batch size");
  }
}

void run_gen(const RunConfig& c, std::ostream& out) {
  PointCloud cloud = load_dataset(c.data);
  fs::path path = c.output.empty() ? c.output_dir / "cloud.xyz" : c.output;
  save_xyz(path, cloud);
  out << "wrote " << cloud.size() << " points to " << path.string() << '\n';
}

void run_train(const RunConfig& c, std::ostream& out) {
  Layout lay(c.output_dir);
  auto [cloud, tf] = prepared_cloud(c);
  check_training_data(c, cloud);
  write_text_file(lay.checkpoints / "normalization.json", transform_json(tf).dump(1) + "\n");
  TrainResult r;
  try {
    r = train_loop(cloud, c.train);
  } catch (const TrainingDiverged& e) {
    save_networks(lay.checkpoints, e.last_good(), c.train.seed, "last_good_");
    write_text_file(lay.logs / "training_log.csv", training_log_csv(e.last_good().history));
    throw;
  }
  save_networks(lay.checkpoints, r.state, c.train.seed, "");
  write_text_file(lay.logs / "training_log.csv", training_log_csv(r.state.history));
  write_text_file(lay.fields / "metric_field.csv", metric_field_csv(r.latents, r.metric_field));
  write_text_file(lay.fields / "latents.csv", latents_csv(r.latents));
  json summary{{"outer_iters", r.state.outer_iter}, {"points", cloud.size()}};
  if (!r.state.history.empty()) summary["final_losses"] = loss_json(r.state.history.back());
  write_text_file(lay.reports / "train_summary.json", summary.dump(1) + "\n");
  out << "trained " << r.state.outer_iter << " outer iterations; artifacts in " << c.output_dir.string() << '\n';
}

void run_embed(const RunConfig& c, std::ostream& out) {
  LoadedModel m = load_model(checkpoint_dir(c));
  PointCloud cloud = load_dataset(c.data);
  cloud.points = m.transform.apply(cloud.points);
  LatentBatch latents = encode_all(m.encoder, cloud);
  fs::path path = Layout(c.output_dir).fields / "latents.csv";
  write_text_file(path, latents_csv(latents));
  out << "wrote " << latents.size() << " latent codes to " << path.string() << '\n';
}

void run_eval(const RunConfig& c, std::ostream& out) {
  Layout lay(c.output_dir);
  LoadedModel m = load_model(checkpoint_dir(c));
  PointCloud cloud = load_dataset(c.data);
  cloud.points = m.transform.apply(cloud.points);
  LatentBatch latents = encode_all(m.encoder, cloud);
  if (c.eval.k >= latents.size()) throw ConfigError("k", "must be smaller than the dataset size");
  std::vector<MetricTensor> field;
  field.reserve(latents.size());
  for (Eigen::Index i = 0; i < latents.codes.rows(); ++i) {
    field.push_back(pullback_metric(m.dual, latents.codes.row(i).transpose()));
  }
  EvalReport learned = evaluate_embedding(cloud, latents, &field, c.eval);
  EvalReport baseline = evaluate_embedding(cloud, pca_embed(cloud, latents.codes.cols()), nullptr, c.eval);
  std::size_t legal = 0;
  for (const auto& g : field) legal += check_metric_legitimacy(g, 1e-9).legal ? 1 : 0;

  json report = eval_report_json(learned);
  report["distortion_identity_metric"] = distortion_score(cloud, latents, nullptr, c.eval.k);
  report["legitimate_metric_fraction"] = static_cast<double>(legal) / static_cast<double>(field.size());
  report["pca_baseline"] = eval_report_json(baseline);
  report["config"] = resolved_json(c);
  write_text_file(lay.reports / "eval_report.json", report.dump(1) + "\n");
  write_text_file(lay.fields / "metric_field.csv", metric_field_csv(latents, field));
  out << "distortion " << format_double(learned.distortion) << " (PCA " << format_double(baseline.distortion)
      << "), triplet " << format_double(learned.triplet) << ", spearman " << format_double(learned.spearman) << '\n';
}

void run_ablate(const RunConfig& c, std::ostream& out) {
  Layout lay(c.output_dir);
  auto [cloud, tf] = prepared_cloud(c);
  check_training_data(c, cloud);
  std::ostringstream table;
  table << "gamma,l_is_final,l_is_tail_mean,l_re_final,l_du_final\n";
  for (std::size_t i = 0; i < c.gammas.size(); ++i) {
    TrainConfig t = c.train;
    t.weights.gamma = c.gammas[i];
    TrainResult r = train_loop(cloud, t);
    const auto& h = r.state.history;
    write_text_file(lay.logs / ("ablate_dual_" + std::to_string(i) + ".csv"), training_log_csv(h));
    table << format_double(c.gammas[i]) << ',' << format_double(h.back().l_is) << ',' << format_double(tail_mean_l_is(h))
          << ',' << format_double(h.back().l_re) << ',' << format_double(h.back().l_du) << '\n';
    out << "gamma " << format_double(c.gammas[i]) << ": l_is " << format_double(h.back().l_is) << '\n';
  }
  write_text_file(lay.reports / "ablate_dual.csv", table.str());
}

}  // namespace

int run_command(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const fs::path failed = c.output_dir / "FAILED";
  try {
    std::error_code ec;
    fs::remove(failed, ec);
    Layout(c.output_dir).create();
    json manifest{{"command", c.command}, {"config", resolved_json(c)}, {"seed", c.train.seed}};
    write_text_file(c.output_dir / "manifest.json", manifest.dump(1) + "\n");
    if (c.command == "gen") run_gen(c, out);
    else if (c.command == "train") run_train(c, out);
    else if (c.command == "embed") run_embed(c, out);
    else if (c.command == "eval") run_eval(c, out);
    else if (c.command == "ablate-dual") run_ablate(c, out);
    else throw ConfigError("command", "unknown subcommand '" + c.command + "'");
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    try {
      write_text_file(failed, std::string("validation error: ") + e.what() + "\n");
    } catch (...) {
    }
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    try {
      write_text_file(failed, std::string(e.what()) + "\n");
    } catch (...) {
    }
    return kExitRuntime;
  }
}

}  // namespace isoimm::cli
