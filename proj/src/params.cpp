#include "damoe/params.hpp"

#include <algorithm>
#include <cmath>

namespace damoe {

std::size_t ParameterStore::add(std::string name, Matrix value) {
  const std::size_t id = params_.size();
  params_.push_back({id, std::move(name), std::move(value)});
  return id;
}

std::size_t ParameterStore::add_glorot(std::string name, std::size_t fan_in, std::size_t fan_out,
                                       std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix w(fan_in, fan_out);
  for (double& v : w.values()) v = u(rng);
  return add(std::move(name), std::move(w));
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

std::vector<Matrix> ParameterStore::zeros_like() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const Parameter& p : params_) out.emplace_back(p.value.rows(), p.value.cols());
  return out;
}

ad::Var Binder::operator()(std::size_t id) {
  if (!slots_[id].valid()) {
    slots_[id] = tape_->leaf((*store_)[id].value, true);
    bound_.push_back(id);
  }
  return slots_[id];
}

void Binder::accumulate_grads(std::span<Matrix> grads) const {
  for (std::size_t id : bound_) {
    const Matrix& g = slots_[id].grad();
    Matrix& dst = grads[id];
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }
}

void Binder::reset() {
  for (std::size_t id : bound_) slots_[id] = ad::Var();
  bound_.clear();
}

}  // namespace damoe
