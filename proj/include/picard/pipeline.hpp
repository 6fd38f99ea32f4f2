#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "picard/checkpoint.hpp"
#include "picard/evaluation.hpp"
#include "picard/heatmap.hpp"
#include "picard/image_io.hpp"
#include "picard/synthdata.hpp"
#include "picard/theory.hpp"
#include "picard/train.hpp"

// File-level steps shared by the command line tool and the end-to-end tests.
namespace picard::pipeline {

namespace fs = std::filesystem;

struct CorpusImages {
  std::vector<std::string> ids;
  std::vector<Image> images;
};

inline CorpusImages load_role(const fs::path& corpus, const Manifest& manifest, const std::string& role) {
  CorpusImages out;
  for (const auto& e : manifest.entries) {
    if (e.role != role) continue;
    out.ids.push_back(e.id());
    out.images.push_back(read_png_gray(corpus / e.path));
  }
  return out;
}

// Refuses corpora whose training split contains anything annotated or injected.
inline void check_unsupervised(const fs::path& corpus, const Manifest& manifest) {
  std::set<std::string> annotated;
  if (fs::exists(corpus / "boxes.csv"))
    for (const auto& a : read_boxes_csv(corpus / "boxes.csv")) annotated.insert(a.image_id);
  for (const auto& e : manifest.entries) {
    if (e.role != "train") continue;
    if (e.n_anomalies > 0 || annotated.count(e.id()))
      throw UsageError("training split lists anomalous image '" + e.path + "'; refusing to train");
  }
}

inline void write_loss_csv(const fs::path& path, const std::vector<LossRecord>& history) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "iteration,batch_loss,eval_loss\n" << std::setprecision(9);
  for (const auto& r : history) os << r.iteration << ',' << r.batch_loss << ',' << r.eval_loss << '\n';
}

inline TrainResult train_from_corpus(const fs::path& corpus, const Architecture& arch, const TrainConfig& cfg,
                                     const TrainProgress& progress = {}) {
  const auto manifest = read_manifest(corpus / "manifest.json");
  check_unsupervised(corpus, manifest);
  const auto train = load_role(corpus, manifest, "train");
  if (train.images.empty()) throw UsageError("corpus has no training images");
  return train_inpainter(train.images, arch, cfg, progress);
}

struct HeatmapOutputs {
  bool write_png = true;
  bool write_overlay = false;
};

inline void write_heatmap_files(const fs::path& dir, const std::string& id, const Image& source,
                                const AnomalyHeatmap& hm, const HeatmapOutputs& outputs) {
  write_phmf(dir / (id + ".phmf"), hm.full);
  if (outputs.write_png) write_heatmap_png(dir / (id + ".png"), hm.full);
  if (outputs.write_overlay) write_overlay_png(dir / (id + "_overlay.png"), source, hm.full);
}

inline std::vector<NamedHeatmap> read_heatmap_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("heatmap directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".phmf") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<NamedHeatmap> out;
  for (const auto& f : files) out.push_back({f.stem().string(), read_phmf(f)});
  return out;
}

inline nlohmann::ordered_json metrics_json(const DatasetMetrics& m) {
  nlohmann::ordered_json j;
  j["images"] = nlohmann::ordered_json::array();
  for (const auto& r : m.images)
    j["images"].push_back({{"id", r.id}, {"auc", r.auc}, {"ap", r.ap}, {"n_pos", r.n_pos}, {"n_neg", r.n_neg}});
  j["mean_auc"] = m.mean_auc;
  j["mean_ap"] = m.mean_ap;
  return j;
}

inline DatasetMetrics evaluate_dir(const fs::path& heatmaps, const fs::path& boxes_csv) {
  const auto maps = read_heatmap_dir(heatmaps);
  const auto boxes = read_boxes_csv(boxes_csv);
  return dataset_eval(maps, boxes);
}

struct TheoryRow {
  std::size_t m = 0;
  theory::AucEstimate empirical;
  theory::AucEstimate semi_analytic;
  bool agree = false;
};

inline constexpr double kEstimatorTolerance = 0.01;

inline std::vector<TheoryRow> theory_sweep(const theory::OracleSpec& spec, std::span<const std::size_t> m_list,
                                           std::size_t trials, std::uint64_t seed) {
  const auto sweep = theory::sweep_m(spec, m_list, trials, seed);
  std::vector<TheoryRow> rows;
  for (std::size_t i = 0; i < sweep.m_values.size(); ++i) {
    TheoryRow r{sweep.m_values[i], {sweep.auc[i], sweep.stderrs[i]}, {}, false};
    r.semi_analytic = theory::semi_analytic_auc(spec, r.m, trials, seed);
    r.agree = std::abs(r.empirical.auc - r.semi_analytic.auc) <= kEstimatorTolerance;
    rows.push_back(r);
  }
  return rows;
}

inline void write_theory_csv(std::ostream& os, const std::vector<TheoryRow>& rows) {
  os << "M,auc,stderr,semi_auc,semi_stderr,agree\n" << std::setprecision(9);
  for (const auto& r : rows)
    os << r.m << ',' << r.empirical.auc << ',' << r.empirical.standard_error << ',' << r.semi_analytic.auc << ','
       << r.semi_analytic.standard_error << ',' << (r.agree ? 1 : 0) << '\n';
}

inline nlohmann::ordered_json theory_json(const theory::OracleSpec& spec, std::size_t trials, std::uint64_t seed,
                                          const std::vector<TheoryRow>& rows) {
  nlohmann::ordered_json j;
  j["spec"] = {{"dim", spec.dim},
               {"mu_normal", spec.mu_normal},
               {"sigma_normal", spec.sigma_normal},
               {"mu_anomalous", spec.mu_anomalous},
               {"sigma_anomalous", spec.sigma_anomalous}};
  j["trials"] = trials;
  j["seed"] = seed;
  j["rows"] = nlohmann::ordered_json::array();
  bool all_agree = true;
  for (const auto& r : rows) {
    j["rows"].push_back({{"M", r.m},
                         {"auc", r.empirical.auc},
                         {"stderr", r.empirical.standard_error},
                         {"semi_auc", r.semi_analytic.auc},
                         {"semi_stderr", r.semi_analytic.standard_error},
                         {"agree", r.agree}});
    all_agree = all_agree && r.agree;
  }
  j["all_agree"] = all_agree;
  j["tolerance"] = kEstimatorTolerance;
  return j;
}

}  // namespace picard::pipeline
