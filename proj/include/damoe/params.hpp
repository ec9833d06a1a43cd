#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "damoe/autodiff.hpp"
#include "damoe/matrix.hpp"

namespace damoe {

// Trainable tensor. `id` is its position in the owning ParameterStore.
struct Parameter {
  std::size_t id = 0;
  std::string name;
  Matrix value;
};

// Owns every parameter of a model in a fixed order; layers refer to
// parameters by id so models copy by value.
class ParameterStore {
 public:
  std::size_t add(std::string name, Matrix value);
  // Glorot-uniform fan_in x fan_out weight.
  std::size_t add_glorot(std::string name, std::size_t fan_in, std::size_t fan_out,
                         std::mt19937_64& rng);

  Parameter& operator[](std::size_t id) { return params_[id]; }
  const Parameter& operator[](std::size_t id) const { return params_[id]; }
  std::size_t size() const noexcept { return params_.size(); }
  std::span<Parameter> all() noexcept { return params_; }
  std::span<const Parameter> all() const noexcept { return params_; }
  std::size_t scalar_count() const;

  // Zero matrices shaped like each parameter.
  std::vector<Matrix> zeros_like() const;

 private:
  std::vector<Parameter> params_;
};

// Binds parameters as leaf nodes on one tape, at most once each, and
// collects their gradients after backward().
class Binder {
 public:
  Binder(ad::Tape& tape, const ParameterStore& store)
      : tape_(&tape), store_(&store), slots_(store.size()) {}

  ad::Var operator()(std::size_t id);
  ad::Tape& tape() const { return *tape_; }
  const ParameterStore& store() const { return *store_; }

  // grads[id] += d(loss)/d(parameter id), for every bound parameter.
  void accumulate_grads(std::span<Matrix> grads) const;
  void reset();

 private:
  ad::Tape* tape_;
  const ParameterStore* store_;
  std::vector<ad::Var> slots_;
  std::vector<std::size_t> bound_;
};

}  // namespace damoe
