#pragma once

// File formats: detections (CSV and binary), per-keypoint estimates, ground-truth records,
// correspondences, and experiment reports (CSV + JSON summary).

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stabscore/detector.hpp"
#include "stabscore/evalkit.hpp"
#include "stabscore/geometry.hpp"

namespace stabscore {

/// Shortest round-trippable-enough text for a double ("%.10g"), with nan/inf spelled out.
inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

namespace detail {

inline std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError(path + ": cannot open for writing");
  return out;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  return cells;
}

inline double parse_cell(const std::string& cell, const std::string& path, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw IoError(path + ":" + std::to_string(line) + ": malformed number '" + cell + "'");
  }
}

// Numeric rows of a CSV file, skipping a header line that does not parse as numbers.
inline std::vector<std::vector<double>> read_numeric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open file");
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    const auto cells = split_csv(line);
    if (lineno == 1 && !cells.empty()) {
      char* end = nullptr;
      std::strtod(cells[0].c_str(), &end);
      if (end == cells[0].c_str()) continue;  // header
    }
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(parse_cell(c, path, lineno));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

/// CSV with header x,y,s,eta,score, one ranked keypoint per row.
inline void write_detections_csv(const std::string& path, std::span<const Keypoint> kps) {
  auto out = detail::open_out(path);
  out << "x,y,s,eta,score\n";
  for (const auto& k : kps)
    out << fmt_num(k.pos.x()) << ',' << fmt_num(k.pos.y()) << ',' << fmt_num(k.s) << ','
        << fmt_num(k.eta.value_or(std::nan(""))) << ',' << fmt_num(k.score.value_or(std::nan(""))) << '\n';
}

/// Reads keypoints from any CSV whose first two columns are x,y (third, if present, is s).
inline std::vector<Keypoint> read_keypoints_csv(const std::string& path) {
  std::vector<Keypoint> out;
  for (const auto& row : detail::read_numeric_csv(path)) {
    if (row.size() < 2) throw IoError(path + ": keypoint rows need x,y");
    Keypoint k;
    k.pos = Point2(row[0], row[1]);
    if (row.size() >= 3) k.s = row[2];
    out.push_back(k);
  }
  return out;
}

inline constexpr char kRecordsMagic[4] = {'S', 'T', 'K', 'P'};

/// Binary records: "STKP", u32 version (1), u32 count, then per keypoint five little-endian
/// float64 values x, y, s, eta, score (NaN when unscored).
inline void write_detections_binary(const std::string& path, std::span<const Keypoint> kps) {
  auto out = detail::open_out(path, true);
  auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  auto put_f64 = [&](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
  };
  out.write(kRecordsMagic, 4);
  put_u32(1);
  put_u32(static_cast<std::uint32_t>(kps.size()));
  for (const auto& k : kps) {
    put_f64(k.pos.x());
    put_f64(k.pos.y());
    put_f64(k.s);
    put_f64(k.eta.value_or(std::nan("")));
    put_f64(k.score.value_or(std::nan("")));
  }
  if (!out) throw IoError(path + ": write failed");
}

inline std::vector<Keypoint> read_detections_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open file");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kRecordsMagic, 4) != 0) throw IoError(path + ": not a records file");
  auto get = [&](int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
      const int c = in.get();
      if (c == EOF) throw IoError(path + ": truncated records file");
      v |= static_cast<std::uint64_t>(c) << (8 * i);
    }
    return v;
  };
  auto get_f64 = [&] {
    const std::uint64_t bits = get(8);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  };
  if (get(4) != 1) throw IoError(path + ": unsupported records version");
  const auto count = get(4);
  std::vector<Keypoint> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    Keypoint k;
    const double x = get_f64(), y = get_f64();
    k.pos = Point2(x, y);
    k.s = get_f64();
    const double eta = get_f64(), score = get_f64();
    if (!std::isnan(eta)) k.eta = eta;
    if (!std::isnan(score)) k.score = score;
    out.push_back(k);
  }
  return out;
}

/// Per-keypoint estimate rows: x,y,s_i,mean_dist,second_moment,cov_trace,delta_sq,m_failed,score.
inline void write_estimates_csv(const std::string& path, std::span<const Keypoint> kps) {
  auto out = detail::open_out(path);
  out << "x,y,s_i,mean_dist,second_moment,cov_trace,delta_sq,m_failed,score\n";
  for (const auto& k : kps) {
    if (!k.eme) continue;
    const auto& e = *k.eme;
    out << fmt_num(k.pos.x()) << ',' << fmt_num(k.pos.y()) << ',' << fmt_num(k.s) << ',' << fmt_num(e.mean_dist)
        << ',' << fmt_num(e.second_moment) << ',' << fmt_num(e.cov_trace) << ',' << fmt_num(e.delta_sq) << ','
        << e.m_failed << ',' << fmt_num(k.score.value_or(std::nan(""))) << '\n';
  }
}

/// Ground truth rows: x,y,s,target_eta,class.
inline void write_ground_truth_csv(const std::string& path, std::span<const GroundTruthRecord> recs) {
  auto out = detail::open_out(path);
  out << "x,y,s,target_eta,class\n";
  for (const auto& r : recs)
    out << fmt_num(r.pos.x()) << ',' << fmt_num(r.pos.y()) << ',' << fmt_num(r.s) << ',' << fmt_num(r.target_eta)
        << ',' << to_string(r.cls) << '\n';
}

/// Correspondences: x1,y1,x2,y2[,s11,s12,s22] with (x1,y1) = k and (x2,y2) = k'.
inline void write_correspondences_csv(const std::string& path, std::span<const Correspondence> corrs) {
  auto out = detail::open_out(path);
  out << "x1,y1,x2,y2,s11,s12,s22\n";
  for (const auto& c : corrs)
    out << fmt_num(c.k.x()) << ',' << fmt_num(c.k.y()) << ',' << fmt_num(c.k_prime.x()) << ','
        << fmt_num(c.k_prime.y()) << ',' << fmt_num(c.sigma(0, 0)) << ',' << fmt_num(c.sigma(0, 1)) << ','
        << fmt_num(c.sigma(1, 1)) << '\n';
}

inline std::vector<Correspondence> read_correspondences_csv(const std::string& path) {
  std::vector<Correspondence> out;
  for (const auto& row : detail::read_numeric_csv(path)) {
    if (row.size() != 4 && row.size() != 7) throw IoError(path + ": correspondence rows need 4 or 7 columns");
    Correspondence c;
    c.k = Point2(row[0], row[1]);
    c.k_prime = Point2(row[2], row[3]);
    if (row.size() == 7) c.sigma << row[4], row[5], row[5], row[6];
    out.push_back(c);
  }
  return out;
}

inline void write_report_csv(const std::string& path, const ExperimentReport& rep) {
  auto out = detail::open_out(path);
  out << "trial,task,beta,variant,corner_error,repeatability,mma,inliers,correspondences\n";
  for (const auto& r : rep.records)
    out << r.trial << ',' << r.task << ',' << fmt_num(r.beta) << ',' << r.variant << ',' << fmt_num(r.corner_error)
        << ',' << fmt_num(r.repeatability) << ',' << fmt_num(r.mma) << ',' << r.inliers << ',' << r.correspondences
        << '\n';
}

namespace detail {

inline nlohmann::json json_num(double v) {
  if (std::isfinite(v)) return v;
  return fmt_num(v);
}

}  // namespace detail

/// JSON summary. Everything outside the "metadata" object is a pure function of the report.
inline nlohmann::json report_json(const ExperimentReport& rep, const nlohmann::json& metadata) {
  nlohmann::json j;
  j["experiment"] = rep.experiment;
  j["metadata"] = metadata;
  j["trials"] = rep.records.size();
  j["skipped"] = rep.skipped;
  nlohmann::json summary = nlohmann::json::object();
  for (const auto& [k, v] : rep.summary) summary[k] = detail::json_num(v);
  j["summary"] = summary;
  j["aggregates"] = nlohmann::json::array();
  for (const auto& a : rep.aggregates) {
    j["aggregates"].push_back({{"beta", a.beta},
                               {"variant", a.variant},
                               {"count", a.count},
                               {"corner_error", {{"median", detail::json_num(a.corner_error_median)},
                                                 {"mean", detail::json_num(a.corner_error_mean)},
                                                 {"iqr", detail::json_num(a.corner_error_iqr)}}},
                               {"repeatability", {{"median", detail::json_num(a.repeatability_median)},
                                                  {"mean", detail::json_num(a.repeatability_mean)},
                                                  {"iqr", detail::json_num(a.repeatability_iqr)}}},
                               {"mma", {{"median", detail::json_num(a.mma_median)},
                                        {"mean", detail::json_num(a.mma_mean)},
                                        {"iqr", detail::json_num(a.mma_iqr)}}}});
  }
  return j;
}

inline void write_report_json(const std::string& path, const ExperimentReport& rep, const nlohmann::json& metadata) {
  auto out = detail::open_out(path);
  out << report_json(rep, metadata).dump(2) << '\n';
}

}  // namespace stabscore
