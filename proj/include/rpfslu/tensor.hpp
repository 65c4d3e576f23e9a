#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rpfslu/errors.hpp"

namespace rpfslu {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major array of doubles. Vectors have rank 1, matrices rank 2,
/// scalars are stored as shape {1}.
class Tensor {
 public:
  Tensor() : shape_{0} {}
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {
    validate();
  }
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate();
    if (data_.size() != shape_size(shape_))
      throw DimensionError("tensor data size " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
  }

  static Tensor vector(std::vector<double> v) {
    const auto n = v.size();
    return Tensor({n}, std::move(v));
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const noexcept { return shape_.size() < 2 ? 1 : shape_[1]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  bool operator==(const Tensor&) const = default;

 private:
  void validate() const {
    for (auto d : shape_)
      if (d == 0) throw DimensionError("tensor shape must be positive, got " + shape_str(shape_));
  }

  Shape shape_;
  std::vector<double> data_;
};

/// Seeded generator with a fixed floating-point mapping so that
/// initialization is identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform01() * static_cast<double>(n)); }
  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::uint64_t state_;
};

/// A named trainable tensor plus its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> grad;

  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.size(), 0.0) {}
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

/// Ordered, name-addressable collection of parameters. Addresses of
/// registered parameters are stable for the lifetime of the set.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  Parameter& add(const std::string& name, Tensor init) {
    if (index_.contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
    params_.push_back(std::make_unique<Parameter>(name, std::move(init)));
    index_[name] = params_.back().get();
    return *params_.back();
  }

  /// Registers a parameter initialized uniformly in [-scale, scale].
  Parameter& add_uniform(const std::string& name, Shape shape, Rng& rng, double scale = 0.1) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(-scale, scale);
    return add(name, std::move(t));
  }

  Parameter& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return *it->second;
  }
  Parameter* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : it->second;
  }
  bool contains(const std::string& name) const { return index_.contains(name); }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  std::vector<Parameter*> all() const {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.get());
    return out;
  }
  std::vector<Parameter*> with_prefix(std::string_view prefix) const {
    std::vector<Parameter*> out;
    for (const auto& p : params_)
      if (p->name.starts_with(prefix)) out.push_back(p.get());
    return out;
  }

  /// Value snapshot in registration order (used for best-checkpoint tracking).
  std::vector<Tensor> snapshot() const {
    std::vector<Tensor> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p->value);
    return out;
  }
  void restore(const std::vector<Tensor>& values) {
    if (values.size() != params_.size()) throw ContractError("snapshot size mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i].shape() != params_[i]->value.shape())
        throw DimensionError("snapshot shape mismatch for '" + params_[i]->name + "'");
      params_[i]->value = values[i];
    }
  }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter*> index_;
};

}  // namespace rpfslu
