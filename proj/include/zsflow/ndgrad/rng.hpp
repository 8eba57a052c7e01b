#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace zsflow::nd {

/// A family of independent, reproducible random streams keyed by name. Each
/// stochastic site draws from its own stream so enabling one feature never
/// shifts another feature's draws.
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::mt19937_64& stream(const std::string& name) {
    auto it = streams_.find(name);
    if (it == streams_.end()) it = streams_.emplace(name, make_engine(seed_, name)).first;
    return it->second;
  }

  static std::mt19937_64 make_engine(std::uint64_t seed, std::string_view name) {
    std::vector<std::uint32_t> material{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    for (char c : name) material.push_back(static_cast<unsigned char>(c));
    material.push_back(static_cast<std::uint32_t>(name.size()));
    std::seed_seq seq(material.begin(), material.end());
    return std::mt19937_64(seq);
  }

  double normal(const std::string& name) { return std::normal_distribution<double>(0.0, 1.0)(stream(name)); }
  double uniform(const std::string& name) { return std::uniform_real_distribution<double>(0.0, 1.0)(stream(name)); }
  std::size_t index(const std::string& name, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(stream(name));
  }

  template <typename Real = double>
  std::vector<Real> normals(const std::string& name, std::size_t n, double stddev = 1.0) {
    std::normal_distribution<double> dist(0.0, stddev);
    auto& eng = stream(name);
    std::vector<Real> out(n);
    for (auto& v : out) v = static_cast<Real>(dist(eng));
    return out;
  }

 private:
  std::uint64_t seed_;
  std::map<std::string, std::mt19937_64> streams_;
};

inline RngStreams seed_rng(std::uint64_t seed) { return RngStreams(seed); }

}  // namespace zsflow::nd
