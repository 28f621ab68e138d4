#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pointmixer/nn/rng.hpp"
#include "pointmixer/types.hpp"

namespace pmx {

/// Handle to an entry of a ParamStore.
struct ParamRef {
  Index id = -1;
  bool valid() const { return id >= 0; }
};

template <typename Scalar>
struct Param {
  std::string name;
  int rank = 2;  // rank-1 entries are stored as 1 x n rows
  MatrixX<Scalar> value;
  MatrixX<Scalar> grad;
  MatrixX<Scalar> momentum;

  Index size() const { return value.size(); }
};

/// Named trainable tensors in registration order, which is also checkpoint order.
template <typename Scalar>
class ParamStore {
 public:
  ParamRef add(std::string name, MatrixX<Scalar> value, int rank = 2) {
    if (by_name_.contains(name)) throw ShapeError("duplicate parameter name: " + name);
    Param<Scalar> p;
    p.name = std::move(name);
    p.rank = rank;
    p.grad = MatrixX<Scalar>::Zero(value.rows(), value.cols());
    p.momentum = MatrixX<Scalar>::Zero(value.rows(), value.cols());
    p.value = std::move(value);
    by_name_.emplace(p.name, static_cast<Index>(entries_.size()));
    entries_.push_back(std::move(p));
    return ParamRef{static_cast<Index>(entries_.size()) - 1};
  }

  Param<Scalar>& operator[](ParamRef r) { return entries_.at(static_cast<std::size_t>(r.id)); }
  const Param<Scalar>& operator[](ParamRef r) const {
    return entries_.at(static_cast<std::size_t>(r.id));
  }

  ParamRef find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? ParamRef{} : ParamRef{it->second};
  }

  Index size() const { return static_cast<Index>(entries_.size()); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Total scalar parameters, excluding gradient and momentum buffers.
  Index scalar_count() const {
    Index n = 0;
    for (const auto& p : entries_) n += p.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : entries_) p.grad.setZero();
  }

 private:
  std::vector<Param<Scalar>> entries_;
  std::map<std::string, Index> by_name_;
};

struct LinearLayer {
  ParamRef weight;  // out x in
  ParamRef bias;    // 1 x out, may be absent
  Index in = 0;
  Index out = 0;
};

struct LayerNormLayer {
  ParamRef gamma;
  ParamRef beta;
  Index channels = 0;
};

/// Linear layers with GELU between consecutive ones.
struct Mlp {
  std::vector<LinearLayer> layers;
  Index in() const { return layers.front().in; }
  Index out() const { return layers.back().out; }
};

/// Weights uniform in +-sqrt(1/fan_in), zero bias.
template <typename Scalar>
LinearLayer make_linear(ParamStore<Scalar>& store, const std::string& name, Index in, Index out,
                        Rng& rng, bool bias = true) {
  if (in < 1 || out < 1) throw ShapeError("linear " + name + ": widths must be positive");
  const double bound = std::sqrt(1.0 / static_cast<double>(in));
  MatrixX<Scalar> w(out, in);
  for (Index r = 0; r < out; ++r)
    for (Index c = 0; c < in; ++c) w(r, c) = static_cast<Scalar>(rng.uniform(-bound, bound));
  LinearLayer l;
  l.in = in;
  l.out = out;
  l.weight = store.add(name + ".weight", std::move(w));
  if (bias) l.bias = store.add(name + ".bias", MatrixX<Scalar>::Zero(1, out), 1);
  return l;
}

template <typename Scalar>
LayerNormLayer make_layernorm(ParamStore<Scalar>& store, const std::string& name, Index channels) {
  LayerNormLayer l;
  l.channels = channels;
  l.gamma = store.add(name + ".gamma", MatrixX<Scalar>::Ones(1, channels), 1);
  l.beta = store.add(name + ".beta", MatrixX<Scalar>::Zero(1, channels), 1);
  return l;
}

/// widths = {in, hidden..., out}
template <typename Scalar>
Mlp make_mlp(ParamStore<Scalar>& store, const std::string& name, const std::vector<Index>& widths,
             Rng& rng) {
  Mlp m;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    m.layers.push_back(
        make_linear(store, name + "." + std::to_string(i), widths[i], widths[i + 1], rng));
  return m;
}

}  // namespace pmx
