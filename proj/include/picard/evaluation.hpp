#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "picard/error.hpp"
#include "picard/tensor.hpp"

namespace picard {

// Inclusive pixel box.
struct Box {
  long xmin = 0, ymin = 0, xmax = 0, ymax = 0;
  friend bool operator==(const Box&, const Box&) = default;
};

struct BoxAnnotation {
  std::string image_id;
  std::vector<Box> boxes;
};

struct PixelLabels {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> positive;
  std::size_t n_positive = 0, n_negative = 0;
};

inline std::string to_string(const Box& b) {
  return "(" + std::to_string(b.xmin) + "," + std::to_string(b.ymin) + "," + std::to_string(b.xmax) + "," +
         std::to_string(b.ymax) + ")";
}

// Pixels inside and along any box are positive; everything else is negative.
inline PixelLabels boxes_to_labels(const BoxAnnotation& ann, std::size_t height, std::size_t width) {
  PixelLabels l{height, width, std::vector<std::uint8_t>(height * width, 0), 0, 0};
  for (const auto& b : ann.boxes) {
    if (b.xmin > b.xmax || b.ymin > b.ymax || b.xmin < 0 || b.ymin < 0 || b.xmax >= static_cast<long>(width) ||
        b.ymax >= static_cast<long>(height))
      throw AnnotationError("box " + to_string(b) + " of image '" + ann.image_id + "' is outside " +
                            std::to_string(width) + "x" + std::to_string(height));
    for (long y = b.ymin; y <= b.ymax; ++y)
      std::fill_n(l.positive.begin() + static_cast<std::ptrdiff_t>(y * static_cast<long>(width) + b.xmin),
                  b.xmax - b.xmin + 1, std::uint8_t{1});
  }
  l.n_positive = static_cast<std::size_t>(std::count(l.positive.begin(), l.positive.end(), std::uint8_t{1}));
  l.n_negative = l.positive.size() - l.n_positive;
  return l;
}

namespace detail {
inline std::vector<std::size_t> order_by_score(std::span<const float> scores, bool descending) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (descending)
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  else
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return idx;
}
}  // namespace detail

// Mann-Whitney AUC with mid-ranks for ties.
inline double pixel_auc(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw UsageError("heatmap and labels differ in size");
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  const auto n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetric("pixel AUC needs both positive and negative pixels");
  const auto idx = detail::order_by_score(scores, false);
  // Sum of positive ranks, each rank doubled to keep mid-ranks integral; exact in 64-bit integers.
  std::uint64_t rank_sum_x2 = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i + 1;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const std::uint64_t mid_x2 = i + 1 + j;  // 2 * average of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]]) rank_sum_x2 += mid_x2;
    i = j;
  }
  // Twice the number of correctly ordered pairs, ties counting 1/2.
  const std::uint64_t pairs_x2 = rank_sum_x2 - static_cast<std::uint64_t>(n_pos) * (n_pos + 1);
  return (static_cast<double>(pairs_x2) / 2.0) / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline double pixel_auc(const Image& heatmap, const PixelLabels& labels) {
  if (heatmap.height != labels.height || heatmap.width != labels.width)
    throw UsageError("heatmap and labels have different dimensions");
  return pixel_auc(heatmap.pixels, labels.positive);
}

// Sum over distinct thresholds of (recall step) * precision; tied scores enter as one block.
inline double average_precision(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw UsageError("heatmap and labels differ in size");
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  if (n_pos == 0) throw UndefinedMetric("average precision needs at least one positive pixel");
  const auto idx = detail::order_by_score(scores, true);
  std::size_t tp = 0, seen = 0, prev_tp = 0;
  double ap = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      tp += labels[idx[j]];
      ++j;
    }
    seen = j;
    ap += static_cast<double>(tp - prev_tp) / static_cast<double>(n_pos) *
          (static_cast<double>(tp) / static_cast<double>(seen));
    prev_tp = tp;
    i = j;
  }
  return ap;
}

inline double average_precision(const Image& heatmap, const PixelLabels& labels) {
  if (heatmap.height != labels.height || heatmap.width != labels.width)
    throw UsageError("heatmap and labels have different dimensions");
  return average_precision(heatmap.pixels, labels.positive);
}

struct ImageMetrics {
  std::string id;
  double auc = 0.0;
  double ap = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
};

struct DatasetMetrics {
  std::vector<ImageMetrics> images;  // sorted by id
  double mean_auc = 0.0;
  double mean_ap = 0.0;
};

struct NamedHeatmap {
  std::string id;
  Image map;
};

// Per-image AUC/AP and their unweighted means. Every heatmap must have an
// annotation and vice versa.
inline DatasetMetrics dataset_eval(std::span<const NamedHeatmap> heatmaps, std::span<const BoxAnnotation> annotations) {
  std::map<std::string, const BoxAnnotation*> by_id;
  for (const auto& a : annotations) by_id[a.image_id] = &a;
  std::map<std::string, const NamedHeatmap*> maps;
  for (const auto& h : heatmaps) maps[h.id] = &h;
  std::vector<std::string> unmatched;
  for (const auto& [id, _] : maps)
    if (!by_id.count(id)) unmatched.push_back(id);
  for (const auto& [id, _] : by_id)
    if (!maps.count(id)) unmatched.push_back(id);
  if (!unmatched.empty()) {
    std::string list;
    for (const auto& id : unmatched) list += (list.empty() ? "" : ", ") + id;
    throw PairingError("unmatched image ids: " + list);
  }
  if (maps.empty()) throw UsageError("no heatmaps to evaluate");
  DatasetMetrics out;
  for (const auto& [id, h] : maps) {
    const auto labels = boxes_to_labels(*by_id.at(id), h->map.height, h->map.width);
    out.images.push_back({id, pixel_auc(h->map, labels), average_precision(h->map, labels), labels.n_positive,
                          labels.n_negative});
  }
  for (const auto& m : out.images) {
    out.mean_auc += m.auc;
    out.mean_ap += m.ap;
  }
  out.mean_auc /= static_cast<double>(out.images.size());
  out.mean_ap /= static_cast<double>(out.images.size());
  return out;
}

// Boxes CSV: header `image,xmin,ymin,xmax,ymax`, one row per box.
inline std::vector<BoxAnnotation> read_boxes_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("boxes CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "image,xmin,ymin,xmax,ymax") throw FormatError("boxes CSV header must be image,xmin,ymin,xmax,ymax");
  std::map<std::string, BoxAnnotation> by_id;
  std::vector<std::string> order;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, field;
    std::vector<long> v;
    std::getline(ss, id, ',');
    while (std::getline(ss, field, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stol(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw FormatError("boxes CSV line " + std::to_string(lineno) + ": bad integer '" + field + "'");
      }
    }
    if (id.empty() || v.size() != 4) throw FormatError("boxes CSV line " + std::to_string(lineno) + " needs 5 fields");
    auto [it, inserted] = by_id.try_emplace(id, BoxAnnotation{id, {}});
    if (inserted) order.push_back(id);
    it->second.boxes.push_back({v[0], v[1], v[2], v[3]});
  }
  std::vector<BoxAnnotation> out;
  for (const auto& id : order) out.push_back(by_id.at(id));
  return out;
}

inline std::vector<BoxAnnotation> read_boxes_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open boxes CSV " + path.string());
  return read_boxes_csv(is);
}

inline void write_boxes_csv(std::ostream& os, std::span<const BoxAnnotation> annotations) {
  os << "image,xmin,ymin,xmax,ymax\n";
  for (const auto& a : annotations)
    for (const auto& b : a.boxes) os << a.image_id << ',' << b.xmin << ',' << b.ymin << ',' << b.xmax << ',' << b.ymax << '\n';
}

}  // namespace picard
