#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace zsflow::nd {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Graph misuse: non-scalar backward, missing backward rule.
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// NaN/Inf detected in values or gradients. Carries the name of the site.
class NumericFault : public std::runtime_error {
 public:
  NumericFault(std::string site, const std::string& what)
      : std::runtime_error(what), site_(std::move(site)) {}
  const std::string& site() const noexcept { return site_; }

 private:
  std::string site_;
};

template <typename Real>
bool all_finite(const std::vector<Real>& v) {
  for (Real x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// Dense row-major array with an optional gradient buffer.
template <typename Real>
struct DiffArray {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty or same size as data

  DiffArray() = default;
  explicit DiffArray(Shape s, Real fill = Real(0)) : shape(std::move(s)), data(numel(shape), fill) {
    validate();
  }
  DiffArray(Shape s, std::vector<Real> values) : shape(std::move(s)), data(std::move(values)) {
    validate();
  }

  void validate() const {
    for (auto d : shape)
      if (d == 0) throw ShapeError("DiffArray: zero-sized dimension in " + to_string(shape));
    if (data.size() != numel(shape))
      throw ShapeError("DiffArray: data length " + std::to_string(data.size()) + " does not match shape " +
                       to_string(shape));
    if (!grad.empty() && grad.size() != data.size()) throw ShapeError("DiffArray: grad shape mismatch");
  }

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : data.size() / shape[0]; }

  Real& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  void zero_grad() { grad.assign(data.size(), Real(0)); }
  bool has_fault() const { return !all_finite(data) || !all_finite(grad); }
};

/// A named trainable array. Embedding tables opt out of weight decay.
template <typename Real>
struct Parameter {
  std::string name;
  DiffArray<Real> array;
  bool weight_decay = true;
};

}  // namespace zsflow::nd
