#include "morphdet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "morphdet/errors.hpp"

namespace morphdet {

namespace {

void require_both_labels(const ScoreSet& scores, const char* where) {
  if (scores.bona_count() == 0 || scores.morph_count() == 0) {
    throw InvalidInputError(std::string(where) +
                            ": need at least one record of each label");
  }
}

}  // namespace

std::size_t ScoreSet::bona_count() const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.label == 0;
  return n;
}

std::size_t ScoreSet::morph_count() const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.label == 1;
  return n;
}

std::vector<std::string> ScoreSet::morph_types() const {
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (r.label == 1) seen.insert(r.morph_type);
  }
  return {seen.begin(), seen.end()};
}

ScoreSet ScoreSet::filter_type(const std::string& type) const {
  ScoreSet out;
  for (const auto& r : records) {
    if (r.label == 0 || r.morph_type == type) out.records.push_back(r);
  }
  return out;
}

std::pair<double, double> error_rates(const ScoreSet& scores, double threshold) {
  require_both_labels(scores, "error_rates");
  std::size_t missed_morphs = 0, flagged_bona = 0;
  for (const auto& r : scores.records) {
    if (r.label == 1 && r.score < threshold) ++missed_morphs;
    if (r.label == 0 && r.score >= threshold) ++flagged_bona;
  }
  const double macer =
      static_cast<double>(missed_morphs) / static_cast<double>(scores.morph_count());
  const double bscer =
      static_cast<double>(flagged_bona) / static_cast<double>(scores.bona_count());
  return {macer, bscer};
}

std::vector<OperatingPoint> det_curve(const ScoreSet& scores) {
  require_both_labels(scores, "det_curve");
  std::vector<double> distinct;
  distinct.reserve(scores.records.size());
  for (const auto& r : scores.records) distinct.push_back(r.score);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<double> thresholds;
  thresholds.reserve(distinct.size() + 1);
  thresholds.push_back(distinct.front() - 1.0);  // everything flagged as morph
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i)
    thresholds.push_back(0.5 * (distinct[i] + distinct[i + 1]));
  thresholds.push_back(distinct.back() + 1.0);  // nothing flagged as morph

  std::vector<OperatingPoint> curve;
  curve.reserve(thresholds.size());
  for (double t : thresholds) {
    const auto [macer, bscer] = error_rates(scores, t);
    curve.push_back({t, macer, bscer});
  }
  return curve;
}

EerResult d_eer(const ScoreSet& scores) {
  const auto curve = det_curve(scores);
  // MACER ascends from 0 and BSCER descends to 0 along the sweep, so the
  // sign of (MACER - BSCER) flips exactly once.
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const double diff = curve[i].macer - curve[i].bscer;
    if (diff == 0.0) return {curve[i].macer, curve[i].threshold};
    if (diff > 0.0) {
      if (i == 0) return {curve[i].macer, curve[i].threshold};
      const auto& a = curve[i - 1];
      const auto& b = curve[i];
      const double denom = (b.macer - a.macer) + (a.bscer - b.bscer);
      const double lambda = denom > 0.0 ? (a.bscer - a.macer) / denom : 0.0;
      return {a.macer + lambda * (b.macer - a.macer),
              a.threshold + lambda * (b.threshold - a.threshold)};
    }
  }
  // Unreachable: the final operating point always has MACER 1 >= BSCER 0.
  return {curve.back().macer, curve.back().threshold};
}

BscerResult bscer_at_macer(const ScoreSet& scores, double target) {
  if (target < 0.0 || target > 1.0) {
    throw InvalidParameterError("bscer_at_macer: target must lie in [0,1]");
  }
  const auto curve = det_curve(scores);
  // Last point with MACER <= target has the smallest feasible BSCER.
  std::size_t best = curve.size();
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (curve[i].macer <= target) best = i;
  }
  if (best == curve.size()) {
    // Cannot happen: the lowest threshold always yields MACER 0.
    return {1.0, true};
  }
  double value = curve[best].bscer;
  if (best + 1 < curve.size() && curve[best + 1].macer > curve[best].macer) {
    const auto& a = curve[best];
    const auto& b = curve[best + 1];
    const double lambda = (target - a.macer) / (b.macer - a.macer);
    if (lambda > 0.0) value = a.bscer + lambda * (b.bscer - a.bscer);
  }
  if (value >= 1.0 - 1e-15) return {1.0, true};
  return {value, false};
}

CIStat ci95_over_types(const std::vector<double>& per_type_values) {
  if (per_type_values.empty()) {
    throw InvalidInputError("ci95_over_types: empty value list");
  }
  CIStat stat;
  stat.n = per_type_values.size();
  double sum = 0.0;
  for (double v : per_type_values) sum += v;
  stat.mean = sum / static_cast<double>(stat.n);
  if (stat.n == 1) {
    stat.half_width = 0.0;
    stat.degenerate = true;
    return stat;
  }
  double ss = 0.0;
  for (double v : per_type_values) ss += (v - stat.mean) * (v - stat.mean);
  const double sample_std = std::sqrt(ss / static_cast<double>(stat.n - 1));
  stat.half_width = 1.96 * sample_std / std::sqrt(static_cast<double>(stat.n));
  return stat;
}

void write_score_file(const std::string& path, const ScoreSet& scores) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open score file for writing: " + path);
  os.precision(17);
  for (const auto& r : scores.records) {
    os << r.id << '\t' << r.score << '\t' << (r.label == 1 ? "morph" : "bonafide")
       << '\t' << (r.morph_type.empty() ? "-" : r.morph_type) << '\n';
  }
  if (!os) throw IoError("short write on score file: " + path);
}

ScoreSet read_score_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open score file: " + path);
  ScoreSet out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ScoreRecord r;
    std::string label;
    if (!(ls >> r.id >> r.score >> label >> r.morph_type)) {
      throw IoError("malformed score line in " + path + ": " + line);
    }
    if (label != "morph" && label != "bonafide") {
      throw IoError("unknown label '" + label + "' in " + path);
    }
    r.label = label == "morph" ? 1 : 0;
    if (r.morph_type == "-") r.morph_type.clear();
    out.records.push_back(std::move(r));
  }
  return out;
}

void write_det_csv(const std::string& path, const std::vector<OperatingPoint>& curve) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open DET csv for writing: " + path);
  os.precision(17);
  os << "threshold,macer,bscer\n";
  for (const auto& p : curve) {
    os << p.threshold << ',' << p.macer << ',' << p.bscer << '\n';
  }
  if (!os) throw IoError("short write on DET csv: " + path);
}

}  // namespace morphdet
