#pragma once

// Mean with a normal-approximation 95% interval, and the score-file reader
// behind the stats-ci command.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace zsflow::cli {

struct StatsError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct MeanCI {
  double mean = 0;
  double half_width = 0;  // 1.96 * s / sqrt(n), s with n - 1 denominator
  std::size_t n = 0;
};

inline MeanCI stats_ci(const std::vector<double>& scores) {
  if (scores.size() < 2) throw StatsError("stats_ci: need at least 2 scores, got " + std::to_string(scores.size()));
  MeanCI r;
  r.n = scores.size();
  for (double s : scores) r.mean += s;
  r.mean /= static_cast<double>(r.n);
  double ss = 0;
  for (double s : scores) ss += (s - r.mean) * (s - r.mean);
  const double sd = std::sqrt(ss / static_cast<double>(r.n - 1));
  r.half_width = 1.96 * sd / std::sqrt(static_cast<double>(r.n));
  return r;
}

/// "4.00±1.13"
inline std::string format_ci(const MeanCI& c) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f±%.2f", c.mean, c.half_width);
  return buf;
}

/// One number per line (or whitespace separated); blank lines and '#'
/// comments skipped.
inline std::vector<double> read_scores(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw StatsError("cannot open score file " + path.string());
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || !std::isfinite(v))
        throw StatsError(path.string() + ":" + std::to_string(lineno) + ": not a number '" + tok + "'");
      out.push_back(v);
    }
  }
  return out;
}

}  // namespace zsflow::cli
