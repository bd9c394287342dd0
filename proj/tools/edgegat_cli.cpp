// edgegat command-line front end.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "edgegat/cloud_io.hpp"
#include "edgegat/config.hpp"
#include "edgegat/synth.hpp"
#include "edgegat/train/kfold.hpp"

namespace fs = std::filesystem;
using namespace edgegat;
using nlohmann::ordered_json;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> arch;
  std::optional<std::string> feature_set;
  std::optional<std::size_t> k;
  std::optional<std::size_t> k_features;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> points;
  std::optional<std::size_t> folds;
  std::optional<std::string> data;
  std::optional<std::string> out_dir;
  std::optional<std::string> checkpoint;
  std::optional<std::string> input;
  std::optional<std::string> output;
  std::vector<std::string> set;
  bool no_timing = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key=value configuration file, or 'default'");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--arch", f.arch, "edgegat | gcn | gat | gcn_unet | gcn_unet2 | pointnet");
  cmd->add_option("--feature-set", f.feature_set, "XYZ | XYZ-N | XYZ-NC | XYZ-NCLPSOAE");
  cmd->add_option("--k", f.k, "graph neighbors");
  cmd->add_option("--k-features", f.k_features, "PCA neighborhood size");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--batch-size", f.batch_size, "clouds per batch");
  cmd->add_option("--points", f.points, "points per cloud after downsampling (0 keeps all)");
  cmd->add_option("--set", f.set, "extra key=value override (repeatable)");
}

RunConfig resolve(const CommonFlags& f) {
  RunConfig c;
  if (!f.config.empty() && f.config != "default") c = load_config_file(f.config, c);
  for (const auto& kv : f.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) c.train.seed = *f.seed;
  if (f.arch) c.model.architecture = nn::parse_architecture(*f.arch);
  if (f.feature_set) c.model.feature_set = parse_feature_set(*f.feature_set);
  if (f.k) c.model.k_graph = *f.k;
  if (f.k_features) c.train.k_features = *f.k_features;
  if (f.epochs) c.train.epochs = *f.epochs;
  if (f.lr) c.train.lr = *f.lr;
  if (f.batch_size) c.train.batch_size = *f.batch_size;
  if (f.points) c.train.points_per_cloud = *f.points;
  if (f.folds) c.train.folds = *f.folds;
  if (f.data) c.data_dir = *f.data;
  if (f.out_dir) c.out_dir = *f.out_dir;
  if (f.checkpoint) c.checkpoint = *f.checkpoint;
  if (f.input) c.input = *f.input;
  if (f.output) c.output = *f.output;
  if (f.no_timing) c.train.time_epochs = false;
  c.validate();
  return c;
}

ordered_json report_json(const train::MetricsReport& r) {
  ordered_json j;
  j["miou"] = r.miou;
  j["accuracy"] = r.accuracy;
  j["macro_precision"] = r.macro_precision;
  j["mean_loss"] = r.mean_loss;
  j["epoch_time"] = r.epoch_time;
  for (auto label : kAllLabels) j["iou_" + std::string(class_name(label))] = r.per_class_iou[class_index(label)];
  for (auto label : kAllLabels) {
    j["precision_" + std::string(class_name(label))] = r.per_class_precision[class_index(label)];
  }
  j["absent_classes"] = r.absent_classes;
  return j;
}

train::SampleOptions sample_options(const RunConfig& c) {
  train::SampleOptions o;
  o.points = c.train.points_per_cloud;
  o.k_features = c.train.k_features;
  o.k_graph = c.model.k_graph;
  o.feature_set = c.model.feature_set;
  o.seed = c.train.seed;
  return o;
}

std::vector<train::Sample> load_dataset(const RunConfig& c, const std::string& dir) {
  if (dir.empty()) throw ConfigError("no data directory given (--data)");
  const auto files = list_cloud_files(dir);
  if (files.empty()) throw IoError("no cloud files in '" + dir + "'");
  std::vector<LabeledCloud> clouds;
  for (const auto& f : files) clouds.push_back(read_cloud(f));
  return train::prepare_samples(clouds, sample_options(c));
}

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
}

int cmd_featurize(const RunConfig& c) {
  if (c.input.empty() || c.output.empty()) throw ConfigError("featurize needs --input and --output");
  const auto cloud = read_cloud(c.input);
  const auto features = featurize(cloud.cloud, c.train.k_features);
  write_feature_csv(c.output, features, c.model.feature_set, cloud.labels ? &*cloud.labels : nullptr);
  std::cout << "wrote " << features.rows() << " rows x " << feature_width(c.model.feature_set) << " features to "
            << c.output << '\n';
  return 0;
}

int cmd_train(const RunConfig& c, const std::string& val_dir) {
  const auto train_set = load_dataset(c, c.data_dir);
  std::vector<train::Sample> val_set;
  if (!val_dir.empty()) val_set = load_dataset(c, val_dir);
  fs::create_directories(c.out_dir);
  train::TrainOutputs out;
  out.curves_csv = fs::path(c.out_dir) / "curves.csv";
  out.checkpoint = c.checkpoint.empty() ? fs::path(c.out_dir) / "model.ckpt" : fs::path(c.checkpoint);
  out.log = &std::cerr;
  const auto r = train::train_loop(c.model, c.train, train_set, val_set, out);
  ordered_json j;
  j["architecture"] = std::string(nn::architecture_name(c.model.architecture));
  j["best_epoch"] = r.best_epoch;
  j["best"] = report_json(r.best);
  j["final"] = report_json(r.last);
  write_json(fs::path(c.out_dir) / "metrics.json", j);
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_kfold(const RunConfig& c) {
  const auto data = load_dataset(c, c.data_dir);
  fs::create_directories(c.out_dir);
  const auto r = train::kfold_run(data, c.model, c.train, {c.out_dir, &std::cerr});
  ordered_json j;
  j["architecture"] = std::string(nn::architecture_name(c.model.architecture));
  j["folds"] = ordered_json::array();
  for (std::size_t f = 0; f < r.folds.size(); ++f) {
    ordered_json fj;
    fj["fold"] = f + 1;
    fj["validation_clouds"] = r.folds[f].validation;
    fj["best_epoch"] = r.folds[f].best_epoch;
    fj["best"] = report_json(r.folds[f].best);
    fj["final"] = report_json(r.folds[f].last);
    j["folds"].push_back(fj);
  }
  j["aggregate"] = {{"best", report_json(r.best)}, {"final", report_json(r.last)}};
  write_json(fs::path(c.out_dir) / "kfold.json", j);
  std::cout << j.dump(2) << '\n';
  return 0;
}

std::unique_ptr<nn::Model<float>> load_model(const RunConfig& c, const CommonFlags& flags, RunConfig& effective) {
  if (c.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  const auto ck = train::read_checkpoint(c.checkpoint);
  if (flags.feature_set && parse_feature_set(*flags.feature_set) != ck.config.feature_set) {
    throw ConfigError("feature set " + *flags.feature_set + " differs from the checkpoint's " +
                      std::string(feature_set_name(ck.config.feature_set)));
  }
  if (flags.arch && nn::parse_architecture(*flags.arch) != ck.config.architecture) {
    throw ConfigError("architecture " + *flags.arch + " differs from the checkpoint's " +
                      std::string(nn::architecture_name(ck.config.architecture)));
  }
  effective = c;
  effective.model = ck.config;
  return train::model_from_checkpoint<float>(ck);
}

int cmd_eval(const RunConfig& c, const CommonFlags& flags) {
  RunConfig e;
  const auto model = load_model(c, flags, e);
  std::vector<train::Sample> data;
  if (!e.input.empty()) {
    data.push_back(train::prepare_sample(read_cloud(e.input), sample_options(e)));
  } else {
    data = load_dataset(e, e.data_dir);
  }
  const auto r = train::evaluate(*model, data);
  std::cout << report_json(r).dump(2) << '\n';
  return 0;
}

int cmd_predict(const RunConfig& c, const CommonFlags& flags) {
  RunConfig e;
  const auto model = load_model(c, flags, e);
  if (e.input.empty() || e.output.empty()) throw ConfigError("predict needs --input and --output");
  const auto cloud = read_cloud(e.input);
  auto opt = sample_options(e);
  opt.points = 0;
  const auto sample = train::prepare_sample(cloud, opt);
  LabeledCloud out{cloud.cloud, train::argmax_labels(train::predict_logits(*model, sample))};
  write_cloud(out, e.output, CloudFormat::ply_ascii);
  std::size_t counts[kNumClasses] = {};
  for (auto l : *out.labels) ++counts[class_index(l)];
  std::cout << "wrote " << out.size() << " points to " << e.output << " (soil " << counts[0] << ", stem "
            << counts[1] << ", leaf " << counts[2] << ")\n";
  return 0;
}

int cmd_synth(const RunConfig& c, std::size_t count, double noise) {
  if (count == 0) throw DomainError("count must be >= 1");
  const auto points = c.train.points_per_cloud ? c.train.points_per_cloud : 1024;
  fs::create_directories(c.out_dir);
  for (std::size_t i = 0; i < count; ++i) {
    const auto cloud = synth_maize(points, c.train.seed + i, noise);
    char name[32];
    std::snprintf(name, sizeof name, "maize_%04zu.xyz", i);
    write_cloud(cloud, fs::path(c.out_dir) / name, CloudFormat::xyz_label);
  }
  std::cout << "wrote " << count << " clouds of " << points << " points to " << c.out_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EdgeGAT point-cloud segmentation toolkit"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::string val_dir;
  std::size_t synth_count = 30;
  double synth_noise = 0.003;

  auto* featurize_cmd = app.add_subcommand("featurize", "write the per-point geometric features as CSV");
  add_common(featurize_cmd, flags);
  featurize_cmd->add_option("--input", flags.input, "cloud file")->required();
  featurize_cmd->add_option("--output", flags.output, "CSV file")->required();

  auto* train_cmd = app.add_subcommand("train", "train one model");
  add_common(train_cmd, flags);
  train_cmd->add_option("--data", flags.data, "directory of labeled clouds");
  train_cmd->add_option("--val", val_dir, "directory of validation clouds (default: training clouds)");
  train_cmd->add_option("--out-dir", flags.out_dir, "output directory");
  train_cmd->add_option("--checkpoint", flags.checkpoint, "checkpoint path (default <out-dir>/model.ckpt)");
  train_cmd->add_flag("--no-timing", flags.no_timing, "write 0 epoch seconds (reproducible curves)");

  auto* kfold_cmd = app.add_subcommand("kfold", "k-fold cross-validation");
  add_common(kfold_cmd, flags);
  kfold_cmd->add_option("--data", flags.data, "directory of labeled clouds");
  kfold_cmd->add_option("--folds", flags.folds, "number of folds");
  kfold_cmd->add_option("--out-dir", flags.out_dir, "output directory");
  kfold_cmd->add_flag("--no-timing", flags.no_timing, "write 0 epoch seconds (reproducible curves)");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on labeled clouds");
  add_common(eval_cmd, flags);
  eval_cmd->add_option("--checkpoint", flags.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--data", flags.data, "directory of labeled clouds");
  eval_cmd->add_option("--input", flags.input, "single labeled cloud");

  auto* predict_cmd = app.add_subcommand("predict", "label a cloud and write a colored PLY");
  add_common(predict_cmd, flags);
  predict_cmd->add_option("--checkpoint", flags.checkpoint, "checkpoint file")->required();
  predict_cmd->add_option("--input", flags.input, "cloud file")->required();
  predict_cmd->add_option("--output", flags.output, "PLY file")->required();

  auto* synth_cmd = app.add_subcommand("synth", "write synthetic maize-like clouds");
  add_common(synth_cmd, flags);
  synth_cmd->add_option("--count", synth_count, "number of clouds");
  synth_cmd->add_option("--out-dir", flags.out_dir, "output directory")->required();
  synth_cmd->add_option("--noise", synth_noise, "surface noise");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const RunConfig config = resolve(flags);
    if (featurize_cmd->parsed()) return cmd_featurize(config);
    if (train_cmd->parsed()) return cmd_train(config, val_dir);
    if (kfold_cmd->parsed()) return cmd_kfold(config);
    if (eval_cmd->parsed()) return cmd_eval(config, flags);
    if (predict_cmd->parsed()) return cmd_predict(config, flags);
    if (synth_cmd->parsed()) return cmd_synth(config, synth_count, synth_noise);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return 3;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
