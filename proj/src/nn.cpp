#include "alnp3/nn.hpp"

#include <cmath>

namespace alnp3::nn {

using namespace ad;

Tensor& ParameterSet::add(const std::string& name, Shape shape, std::vector<double> values) {
  if (params_.count(name)) throw ContractError("parameter '" + name + "' registered twice");
  return params_.emplace(name, Tensor::parameter(std::move(shape), std::move(values))).first->second;
}

Tensor& ParameterSet::normal(const std::string& name, Shape shape, Rng& rng, double stddev) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = stddev * rng.normal();
  return add(name, std::move(shape), std::move(v));
}

Tensor& ParameterSet::zeros(const std::string& name, Shape shape) {
  const std::size_t n = shape_numel(shape);
  return add(name, std::move(shape), std::vector<double>(n, 0.0));
}

const Tensor& ParameterSet::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParameterSet::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias ? add_row(y, *bias) : y;
}

Linear make_linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out,
                   Rng& rng, bool with_bias, double gain) {
  Linear l;
  const double stddev = gain * std::sqrt(2.0 / static_cast<double>(in + out));
  l.weight = params.normal(name + ".w", {in, out}, rng, stddev);
  if (with_bias) l.bias = params.zeros(name + ".b", {1, out});
  return l;
}

Tensor FeedForward::operator()(const Tensor& x) const { return outer(ad::tanh(inner(x))); }

FeedForward make_feed_forward(ParameterSet& params, const std::string& name, std::size_t in,
                              std::size_t hidden, std::size_t out, Rng& rng, double out_gain) {
  FeedForward ff;
  ff.inner = make_linear(params, name + ".fc1", in, hidden, rng);
  ff.outer = make_linear(params, name + ".fc2", hidden, out, rng, true, out_gain);
  return ff;
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  if (x.dim() != 2 || row.dim() != 2 || row.shape()[0] != 1 || row.cols() != x.cols())
    throw ShapeError("add_row: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(row.shape()));
  if (x.shape()[0] == 1) return add(x, row);
  return add(x, matmul(Tensor::full({x.shape()[0], 1}, 1.0), row));
}

Tensor repeat_cols(const Tensor& x, std::size_t c) {
  if (x.dim() != 2 || x.cols() != 1) throw ShapeError("repeat_cols: expected R x 1, got " + shape_str(x.shape()));
  return matmul(x, Tensor::full({1, c}, 1.0));
}

Tensor mean_rows(const Tensor& x) {
  if (x.dim() != 2) throw ShapeError("mean_rows: expected 2-D tensor, got " + shape_str(x.shape()));
  const std::size_t r = x.shape()[0];
  return matmul(Tensor::full({1, r}, 1.0 / static_cast<double>(r)), x);
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* mask) {
  if (q.cols() != k.cols()) throw ShapeError("attend: shape mismatch " + shape_str(q.shape()) + " vs " + shape_str(k.shape()));
  Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  if (mask) scores = add(scores, *mask);
  return matmul(softmax(scores), v);
}

Tensor causal_mask(std::size_t n) {
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = -1e9;
  return Tensor::constant({n, n}, std::move(m));
}

}  // namespace alnp3::nn
