#pragma once

// Layer building blocks composed from the autodiff primitives.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "alnp3/rng.hpp"
#include "alnp3/tensor.hpp"

namespace alnp3::nn {

using ad::Tensor;

// Named trainable leaves, iterated in name order.
class ParameterSet {
 public:
  Tensor& add(const std::string& name, Shape shape, std::vector<double> values);
  // N(0, stddev^2) entries.
  Tensor& normal(const std::string& name, Shape shape, Rng& rng, double stddev);
  Tensor& zeros(const std::string& name, Shape shape);

  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::size_t size() const { return params_.size(); }

  const std::map<std::string, Tensor>& all() const { return params_; }
  std::map<std::string, Tensor>& all() { return params_; }

 private:
  std::map<std::string, Tensor> params_;
};

struct Linear {
  Tensor weight;                 // in x out
  std::optional<Tensor> bias;    // 1 x out

  Tensor operator()(const Tensor& x) const;
  std::size_t in() const { return weight.shape()[0]; }
  std::size_t out() const { return weight.shape()[1]; }
};

// Glorot-style init scaled by gain; bias starts at zero.
Linear make_linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out,
                   Rng& rng, bool with_bias = true, double gain = 1.0);

// Two layers with a tanh in between.
struct FeedForward {
  Linear inner;
  Linear outer;

  Tensor operator()(const Tensor& x) const;
  std::size_t in() const { return inner.in(); }
  std::size_t out() const { return outer.out(); }
};

FeedForward make_feed_forward(ParameterSet& params, const std::string& name, std::size_t in,
                              std::size_t hidden, std::size_t out, Rng& rng, double out_gain = 1.0);

// x (R x C) plus a 1 x C row repeated over R rows.
Tensor add_row(const Tensor& x, const Tensor& row);
// x (R x 1) repeated over C columns.
Tensor repeat_cols(const Tensor& x, std::size_t c);
// 1 x C average over rows.
Tensor mean_rows(const Tensor& x);

// Single-head scaled dot-product attention softmax(q k^T / sqrt(d) + mask) v.
// mask, when given, is a constant added to the scores (0 or a large negative).
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* mask = nullptr);

// Lower-triangular causal mask with -1e9 above the diagonal.
Tensor causal_mask(std::size_t n);

}  // namespace alnp3::nn
