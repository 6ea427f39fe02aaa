#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace morphdet {

// Higher score = more morph-like; the decision rule is "morph if
// score >= threshold".
struct ScoreRecord {
  std::string id;
  double score = 0.0;
  int label = 0;  // 0 bona fide, 1 morph
  std::string morph_type;
};

struct ScoreSet {
  std::vector<ScoreRecord> records;

  std::size_t bona_count() const;
  std::size_t morph_count() const;
  std::vector<std::string> morph_types() const;
  // Bona fide records plus morphs of one type.
  ScoreSet filter_type(const std::string& type) const;
};

struct OperatingPoint {
  double threshold = 0.0;
  double macer = 0.0;
  double bscer = 0.0;
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

struct BscerResult {
  double bscer = 0.0;
  bool unreachable = false;
};

struct CIStat {
  double mean = 0.0;
  double half_width = 0.0;
  std::size_t n = 0;
  bool degenerate = false;  // single-sample interval
};

// MACER = fraction of morph scores < threshold; BSCER = fraction of bona
// fide scores >= threshold. Both label classes must be present.
std::pair<double, double> error_rates(const ScoreSet& scores, double threshold);

// Sweeps all midpoint thresholds and linearly interpolates the crossing of
// the MACER/BSCER step functions; ties break toward the lower threshold.
EerResult d_eer(const ScoreSet& scores);

// Smallest BSCER over thresholds with MACER <= target, interpolating between
// the bracketing operating points; an unreachable target reports BSCER = 1
// with a flag.
BscerResult bscer_at_macer(const ScoreSet& scores, double target);

// mean +/- 1.96 * sample std / sqrt(n); n = 1 yields half-width 0, flagged.
CIStat ci95_over_types(const std::vector<double>& per_type_values);

// Full operating-point list in ascending threshold order, from
// (MACER 0, BSCER 1) to (MACER 1, BSCER 0).
std::vector<OperatingPoint> det_curve(const ScoreSet& scores);

// Score file: one record per line, tab-separated (id, score, label,
// morph-type); labels written as "bonafide"/"morph".
void write_score_file(const std::string& path, const ScoreSet& scores);
ScoreSet read_score_file(const std::string& path);

// CSV with header "threshold,macer,bscer".
void write_det_csv(const std::string& path, const std::vector<OperatingPoint>& curve);

}  // namespace morphdet
