// picard: corpus generation, inpainter training, MCD heatmapping, evaluation
// and the convergence sweep.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "picard/picard.hpp"

namespace fs = std::filesystem;
using namespace picard;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Appends `--key value` for every config-file key whose flag is absent from
// argv, so explicit flags always win over the file.
std::vector<std::string> merge_config(const std::vector<std::string>& args) {
  std::string config_path;
  for (std::size_t i = 0; i + 1 < args.size(); ++i)
    if (args[i] == "--config") config_path = args[i + 1];
  if (config_path.empty()) return args;
  std::ifstream is(config_path);
  if (!is) throw UsageError("cannot open config file " + config_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config file " + config_path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  auto out = args;
  for (const auto& [key, value] : j.items()) {
    std::string flag = "--" + key;
    for (auto& ch : flag)
      if (ch == '_') ch = '-';
    bool present = false;
    for (const auto& a : args) present = present || a == flag || a.rfind(flag + "=", 0) == 0;
    if (present) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) out.push_back(flag);
      continue;
    }
    out.push_back(flag);
    auto scalar = [](const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_array())
      for (const auto& v : value) out.push_back(scalar(v));
    else
      out.push_back(scalar(value));
  }
  return out;
}

void log(const std::string& msg) { std::cerr << "[picard] " << msg << std::endl; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Options {
  std::string config;
  // gen-data
  std::string data_out;
  std::size_t n_train = 1000, n_test = 20, image_size = 256;
  // train
  std::string corpus, model_out, loss_csv;
  TrainConfig train;
  std::size_t patch_size = 64, mask_size = 32;
  // heatmap
  std::string model;
  std::vector<std::string> images;
  std::string heatmap_corpus, heatmap_out;
  ScoreConfig score;
  std::string metric = "min", space = "image";
  bool plot_data = false;
  // eval
  std::string heatmaps, boxes, metrics_out;
  // theory
  double mu_sep = 3.0, sigma = 1.0;
  std::vector<std::size_t> m_list = theory::default_m_list();
  std::size_t trials = 100000;
  std::string sweep_out;
  // shared
  std::uint64_t seed = kDefaultSeed;
  std::size_t workers = 1;
};

int cmd_gen_data(const Options& o) {
  CorpusParams params;
  params.texture.size = o.image_size;
  const auto t0 = std::chrono::steady_clock::now();
  const auto m = build_corpus(o.data_out, o.n_train, o.n_test, params, o.seed, o.workers);
  log("wrote " + std::to_string(m.entries.size()) + " images to " + o.data_out + " in " +
      std::to_string(seconds_since(t0)) + " s");
  return kExitOk;
}

int cmd_train(Options o) {
  o.train.seed = o.seed;
  const auto arch = default_architecture(o.patch_size, o.mask_size);
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = pipeline::train_from_corpus(o.corpus, arch, o.train, [&](const LossRecord& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "iter %6zu  batch L1 %.5f  eval L1 %.5f  (%.0f s)", r.iteration, r.batch_loss,
                  r.eval_loss, seconds_since(t0));
    log(buf);
  });
  save_checkpoint(o.model_out, result.model);
  const fs::path loss = o.loss_csv.empty() ? fs::path(o.model_out + ".loss.csv") : fs::path(o.loss_csv);
  pipeline::write_loss_csv(loss, result.history);
  log("saved " + o.model_out + " (best iteration " + std::to_string(result.best_iteration) + ") and " + loss.string());
  return kExitOk;
}

int cmd_heatmap(Options o) {
  o.score.seed = o.seed;
  o.score.workers = o.workers;
  o.score.metric = parse_metric(o.metric);
  if (o.space == "image") o.score.encoder = EncoderKind::kIdentity;
  else if (o.space == "feature") o.score.encoder = EncoderKind::kTrunkFeatures;
  else throw ConfigError("--space must be image or feature");
  auto model = std::make_shared<const InpainterModel<float>>(load_checkpoint(o.model));
  o.score.patch_size = model->arch.input_size;
  o.score.mask_size = model->arch.mask_size;
  o.score.validate();

  std::vector<std::pair<std::string, fs::path>> inputs;
  for (const auto& p : o.images) inputs.emplace_back(fs::path(p).stem().string(), p);
  if (!o.heatmap_corpus.empty()) {
    const auto manifest = read_manifest(fs::path(o.heatmap_corpus) / "manifest.json");
    for (const auto& e : manifest.entries)
      if (e.role == "test") inputs.emplace_back(e.id(), fs::path(o.heatmap_corpus) / e.path);
  }
  if (inputs.empty()) throw UsageError("no input images (use --images or --corpus)");
  for (const auto& [id, path] : inputs)
    if (!fs::exists(path)) throw UsageError("input image " + path.string() + " does not exist");

  fs::create_directories(o.heatmap_out);
  const auto sampler = make_sampler(model, o.score);
  const auto encoder = make_encoder(model, o.score);
  for (const auto& [id, path] : inputs) {
    const auto t0 = std::chrono::steady_clock::now();
    const Image img = read_png_gray(path);
    const auto hm = heatmap_image(img, o.score, *sampler, encoder);
    pipeline::write_heatmap_files(o.heatmap_out, id, img, hm, {true, o.plot_data});
    log(id + ": " + std::to_string(hm.coarse.height) + "x" + std::to_string(hm.coarse.width) + " windows in " +
        std::to_string(seconds_since(t0)) + " s");
  }
  return kExitOk;
}

int cmd_eval(const Options& o) {
  const auto metrics = pipeline::evaluate_dir(o.heatmaps, o.boxes);
  std::ofstream os(o.metrics_out);
  if (!os) throw IoError("cannot write " + o.metrics_out);
  os << pipeline::metrics_json(metrics).dump(2) << '\n';
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%zu images: mean AUC %.4f, mean AP %.4f", metrics.images.size(), metrics.mean_auc,
                metrics.mean_ap);
  log(buf);
  return kExitOk;
}

int cmd_theory(const Options& o) {
  const auto spec = theory::OracleSpec::separated(o.mu_sep, o.sigma);
  const auto rows = pipeline::theory_sweep(spec, o.m_list, o.trials, o.seed);
  std::ofstream csv(o.sweep_out);
  if (!csv) throw IoError("cannot write " + o.sweep_out);
  pipeline::write_theory_csv(csv, rows);
  const fs::path json_path = fs::path(o.sweep_out).replace_extension(".json");
  std::ofstream js(json_path);
  if (!js) throw IoError("cannot write " + json_path.string());
  js << pipeline::theory_json(spec, o.trials, o.seed, rows).dump(2) << '\n';
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "M=%-4zu empirical %.4f +- %.4f  semi-analytic %.4f +- %.4f  %s", r.m,
                  r.empirical.auc, r.empirical.standard_error, r.semi_analytic.auc, r.semi_analytic.standard_error,
                  r.agree ? "agree" : "DISAGREE");
    log(buf);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Pluralistic-completion anomaly localization"};
  app.require_subcommand(1);
  app.add_option("--config", o.config, "JSON file whose keys mirror the long flags");

  auto add_shared = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Master seed")->capture_default_str();
    sub->add_option("--workers", o.workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--config", o.config, "JSON file whose keys mirror the long flags");
  };

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus");
  gen->add_option("--out", o.data_out, "Corpus directory")->required();
  gen->add_option("--n-train", o.n_train)->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--n-test", o.n_test)->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--size", o.image_size, "Image side in pixels")->capture_default_str();
  add_shared(gen);

  auto* train = app.add_subcommand("train", "Train the inpainter on the corpus' normal images");
  train->add_option("--corpus", o.corpus)->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", o.model_out, "Checkpoint path")->required();
  train->add_option("--loss-csv", o.loss_csv, "Loss history CSV (default <out>.loss.csv)");
  train->add_option("--patch-size", o.patch_size)->capture_default_str();
  train->add_option("--mask-size", o.mask_size)->capture_default_str();
  train->add_option("--learning-rate", o.train.learning_rate)->capture_default_str();
  train->add_option("--batch-size", o.train.batch_size)->capture_default_str();
  train->add_option("--max-iterations", o.train.max_iterations)->capture_default_str();
  train->add_option("--patience", o.train.patience)->capture_default_str();
  train->add_option("--eval-interval", o.train.eval_interval)->capture_default_str();
  add_shared(train);

  auto* heat = app.add_subcommand("heatmap", "Compute anomaly heatmaps");
  heat->add_option("--model", o.model)->required()->check(CLI::ExistingFile);
  heat->add_option("--images", o.images, "Grayscale PNG inputs");
  heat->add_option("--corpus", o.heatmap_corpus, "Heatmap every test image of a corpus")->check(CLI::ExistingDirectory);
  heat->add_option("--out", o.heatmap_out)->required();
  heat->add_option("--m", o.score.samples, "Completions per window (1 = deterministic)")->capture_default_str();
  heat->add_option("--p-drop", o.score.p_drop)->capture_default_str();
  heat->add_option("--stride", o.score.stride)->capture_default_str();
  heat->add_option("--metric", o.metric)->capture_default_str()->check(CLI::IsMember({"min", "mean", "median"}));
  heat->add_option("--space", o.space)->capture_default_str()->check(CLI::IsMember({"image", "feature"}));
  heat->add_flag("--plot-data", o.plot_data, "Also write heatmap-over-image overlay PNGs");
  add_shared(heat);

  auto* eval = app.add_subcommand("eval", "Pixel AUC / AP against box annotations");
  eval->add_option("--heatmaps", o.heatmaps)->required();
  eval->add_option("--boxes", o.boxes)->required()->check(CLI::ExistingFile);
  eval->add_option("--out", o.metrics_out)->required();
  add_shared(eval);

  auto* th = app.add_subcommand("theory", "Monte-Carlo AUC-versus-M sweep on Gaussian oracles");
  th->add_option("--mu-sep", o.mu_sep)->capture_default_str();
  th->add_option("--sigma", o.sigma)->capture_default_str();
  th->add_option("--m-list", o.m_list)->delimiter(',')->expected(1, -1);
  th->add_option("--trials", o.trials)->capture_default_str()->check(CLI::PositiveNumber);
  th->add_option("--out", o.sweep_out)->required();
  add_shared(th);

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = merge_config(args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(o);
    if (*train) return cmd_train(o);
    if (*heat) return cmd_heatmap(o);
    if (*eval) return cmd_eval(o);
    if (*th) return cmd_theory(o);
  } catch (const PairingError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
