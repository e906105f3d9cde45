// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastpoint/nn/optim.hpp"

#include <cmath>

namespace fastpoint::nn {

namespace {

bool is_frozen(const std::string& name, const std::vector<std::string>& prefixes) {
  for (const auto& p : prefixes) {
    if (name.compare(0, p.size(), p) == 0) return true;
  }
  return false;
}

}  // namespace

void Adam::step(Parameters& params, const std::vector<std::string>& frozen_prefixes) {
  auto& entries = params.entries();
  if (m_.size() != entries.size()) {
    m_.assign(entries.size(), {});
    v_.assign(entries.size(), {});
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    ParamEntry& e = entries[k];
    if (e.kind == ParamKind::kBuffer || is_frozen(e.name, frozen_prefixes)) continue;
    const auto grad = e.tensor.grad();
    if (grad.empty()) continue;
    auto values = e.tensor.values_mut();
    auto& m = m_[k];
    auto& v = v_[k];
    if (m.size() != values.size()) {
      m.assign(values.size(), 0.0);
      v.assign(values.size(), 0.0);
    }
    const double decay = e.kind == ParamKind::kWeight ? cfg_.weight_decay : 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i] + decay * values[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      values[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
    }
  }
}

void Sgd::step(Parameters& params) {
  for (auto& e : params.entries()) {
    if (e.kind == ParamKind::kBuffer) continue;
    const auto grad = e.tensor.grad();
    if (grad.empty()) continue;
    auto values = e.tensor.values_mut();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr_ * grad[i];
  }
}

}  // namespace fastpoint::nn
