#pragma once

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "strengthnet/common/error.hpp"
#include "strengthnet/eval/metrics.hpp"
#include "strengthnet/pipeline/manifest.hpp"

namespace strengthnet::eval {

/// One scored utterance joined with its reference values.
struct EvalRow {
  std::string utterance_id;
  std::string dataset_id;
  double predicted = 0.0;
  std::vector<double> emotion_probs;
  double truth = 0.0;
  std::size_t emotion = 0;
  /// 0 = normal, 1 = strong.
  std::size_t reference_category = 0;
};

struct MetricSet {
  std::size_t count = 0;
  double mae = 0.0;
  double ser_accuracy = 0.0;
  std::vector<std::size_t> histogram;
  ConfusionMatrix confusion;
  /// Absent when either side is constant or there are fewer than 2 rows.
  std::optional<double> spearman;
};

struct EvalReport {
  MetricSet overall;
  std::map<std::string, MetricSet> per_dataset;
};

inline MetricSet compute_metrics(std::span<const EvalRow> rows, std::size_t bins = 20) {
  require(!rows.empty(), ErrorCode::kEmpty, "no rows to evaluate");
  std::vector<double> pred, truth;
  std::vector<std::vector<double>> probs;
  std::vector<std::size_t> labels, categories;
  for (const auto& r : rows) {
    pred.push_back(r.predicted);
    truth.push_back(r.truth);
    probs.push_back(r.emotion_probs);
    labels.push_back(r.emotion);
    categories.push_back(r.reference_category);
  }
  MetricSet m;
  m.count = rows.size();
  m.mae = mae(pred, truth);
  m.ser_accuracy = ser_accuracy(probs, labels);
  m.histogram = histogram(pred, bins);
  m.confusion = strength_confusion(pred, categories);
  try {
    m.spearman = spearman(pred, truth);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kZeroVariance && e.code() != ErrorCode::kTooShort) throw;
  }
  return m;
}

inline EvalReport build_report(std::span<const EvalRow> rows, std::size_t bins = 20) {
  EvalReport report;
  report.overall = compute_metrics(rows, bins);
  std::map<std::string, std::vector<EvalRow>> groups;
  for (const auto& r : rows) groups[r.dataset_id].push_back(r);
  for (const auto& [id, group] : groups) report.per_dataset.emplace(id, compute_metrics(group, bins));
  return report;
}

inline nlohmann::ordered_json to_json(const MetricSet& m) {
  nlohmann::ordered_json j;
  j["count"] = m.count;
  j["mae"] = m.mae;
  j["ser_accuracy"] = m.ser_accuracy;
  j["histogram"] = m.histogram;
  j["confusion"] = {{"rows", "reference"},
                    {"columns", "predicted"},
                    {"labels", {"normal", "strong"}},
                    {"counts", {{m.confusion.counts[0][0], m.confusion.counts[0][1]},
                                {m.confusion.counts[1][0], m.confusion.counts[1][1]}}},
                    {"row_percent", {{m.confusion.row_percent(0, 0), m.confusion.row_percent(0, 1)},
                                     {m.confusion.row_percent(1, 0), m.confusion.row_percent(1, 1)}}},
                    {"diagonal_fraction", m.confusion.diagonal_fraction()}};
  j["spearman"] = m.spearman ? nlohmann::ordered_json(*m.spearman) : nlohmann::ordered_json(nullptr);
  return j;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  auto j = to_json(r.overall);
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& [id, m] : r.per_dataset) per[id] = to_json(m);
  j["per_dataset"] = per;
  return j;
}

/// bin_low, bin_high, count.
inline std::string histogram_tsv(std::span<const std::size_t> counts) {
  std::string out = "bin_low\tbin_high\tcount\n";
  const double width = 1.0 / static_cast<double>(counts.size());
  for (std::size_t b = 0; b < counts.size(); ++b) {
    out += strengthnet::detail::format_fixed(width * static_cast<double>(b), 6) + '\t' +
           strengthnet::detail::format_fixed(width * static_cast<double>(b + 1), 6) + '\t' +
           std::to_string(counts[b]) + '\n';
  }
  return out;
}

/// reference, predicted, count, row_percent.
inline std::string confusion_tsv(const ConfusionMatrix& m) {
  static const char* names[2] = {"normal", "strong"};
  std::string out = "reference\tpredicted\tcount\trow_percent\n";
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      out += std::string(names[r]) + '\t' + names[c] + '\t' + std::to_string(m.counts[r][c]) + '\t' +
             strengthnet::detail::format_fixed(m.row_percent(r, c), 2) + '\n';
    }
  }
  return out;
}

/// Per-utterance inference output written by `infer`.
struct PredictionRow {
  std::string utterance_id;
  std::string dataset_id;
  double strength = 0.0;
  std::string emotion;
  std::vector<double> emotion_probs;
};

inline std::string format_predictions(std::span<const PredictionRow> rows) {
  std::string out = "utterance_id\tdataset_id\tstrength\temotion";
  for (auto e : kModelEmotions) out += "\tp_" + std::string(e);
  out += '\n';
  for (const auto& r : rows) {
    require(r.emotion_probs.size() == kModelEmotions.size(), ErrorCode::kShapeMismatch,
            "prediction for " + r.utterance_id + " has the wrong class count");
    out += r.utterance_id + '\t' + r.dataset_id + '\t' + strengthnet::detail::format_fixed(r.strength, 6) + '\t' +
           r.emotion;
    for (double p : r.emotion_probs) out += '\t' + strengthnet::detail::format_fixed(p, 6);
    out += '\n';
  }
  return out;
}

inline std::vector<PredictionRow> parse_predictions(std::string_view text) {
  std::vector<PredictionRow> rows;
  std::size_t pos = 0, line_no = 0;
  const std::size_t n_cols = 4 + kModelEmotions.size();
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == text.npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line_no++ == 0 || line.empty()) continue;
    const auto f = strengthnet::detail::split_tabs(line);
    require(f.size() == n_cols, ErrorCode::kParseError,
            "prediction line " + std::to_string(line_no) + " has " + std::to_string(f.size()) + " columns");
    PredictionRow r{f[0], f[1], strengthnet::detail::parse_double(f[2], "prediction strength"), f[3], {}};
    for (std::size_t k = 4; k < n_cols; ++k) {
      r.emotion_probs.push_back(strengthnet::detail::parse_double(f[k], "prediction probability"));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace strengthnet::eval
