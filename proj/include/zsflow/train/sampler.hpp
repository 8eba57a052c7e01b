#pragma once

// Batch composition policies. Both return indices into the item list they
// were built from.

#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace zsflow::train {

struct SamplerError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ItemKey {
  int speaker_id = 0;
  int language_id = 0;
};

/// Draws items with probability inversely proportional to the frequency of
/// their language, so every language gets an equal expected share.
class LanguageBalancedSampler {
 public:
  LanguageBalancedSampler() = default;
  explicit LanguageBalancedSampler(const std::vector<ItemKey>& items, std::vector<std::size_t> pool = {}) {
    if (pool.empty())
      for (std::size_t i = 0; i < items.size(); ++i) pool.push_back(i);
    if (pool.empty()) throw SamplerError("language_balanced_batches: empty manifest");
    std::map<int, double> count;
    for (auto i : pool) count[items.at(i).language_id] += 1;
    std::vector<double> w;
    for (auto i : pool) w.push_back(1.0 / count[items[i].language_id]);
    pool_ = std::move(pool);
    dist_ = std::discrete_distribution<std::size_t>(w.begin(), w.end());
  }

  template <typename Engine>
  std::size_t draw(Engine& eng) {
    return pool_[dist_(eng)];
  }

  template <typename Engine>
  std::vector<std::size_t> batch(std::size_t size, Engine& eng) {
    std::vector<std::size_t> b(size);
    for (auto& i : b) i = draw(eng);
    return b;
  }

 private:
  std::vector<std::size_t> pool_;
  std::discrete_distribution<std::size_t> dist_;
};

/// ceil(batch_size * fraction); a quarter by default.
inline std::size_t adapted_slots(std::size_t batch_size, double fraction = 0.25) {
  return static_cast<std::size_t>(std::ceil(static_cast<double>(batch_size) * fraction - 1e-9));
}

/// Every batch holds exactly adapted_slots(B, fraction) items of the adapted
/// speaker (drawn uniformly with replacement) followed by language-balanced
/// base items.
class AdaptationSampler {
 public:
  AdaptationSampler(const std::vector<ItemKey>& items, int adapted_speaker, std::size_t batch_size,
                    double fraction = 0.25)
      : batch_size_(batch_size), slots_(adapted_slots(batch_size, fraction)) {
    if (batch_size == 0) throw SamplerError("adaptation_batches: batch size must be positive");
    if (!(fraction > 0 && fraction < 1)) throw SamplerError("adaptation_batches: fraction must lie in (0, 1)");
    std::vector<std::size_t> base;
    for (std::size_t i = 0; i < items.size(); ++i)
      (items[i].speaker_id == adapted_speaker ? adapted_ : base).push_back(i);
    if (adapted_.empty())
      throw SamplerError("adaptation_batches: unknown speaker " + std::to_string(adapted_speaker));
    if (batch_size > slots_) {
      if (base.empty()) throw SamplerError("adaptation_batches: no base items to fill the batch");
      base_ = LanguageBalancedSampler(items, base);
    }
  }

  template <typename Engine>
  std::vector<std::size_t> batch(Engine& eng) {
    const std::size_t k = slots_;
    std::uniform_int_distribution<std::size_t> pick(0, adapted_.size() - 1);
    std::vector<std::size_t> b;
    for (std::size_t i = 0; i < k; ++i) b.push_back(adapted_[pick(eng)]);
    for (std::size_t i = k; i < batch_size_; ++i) b.push_back(base_.draw(eng));
    return b;
  }

  const std::vector<std::size_t>& adapted() const { return adapted_; }

 private:
  std::size_t batch_size_, slots_;
  std::vector<std::size_t> adapted_;
  LanguageBalancedSampler base_;
};

}  // namespace zsflow::train
