// Copyright 2026 The anicl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "core/optim.hpp"

#include <cmath>

namespace anicl {

AdamState::AdamState(AdamParams params) : params_(params) {
  require_arg(params_.lr > 0.0, "adam: lr must be > 0");
  require_arg(params_.beta1 >= 0.0 && params_.beta1 < 1.0, "adam: bad beta1");
  require_arg(params_.beta2 >= 0.0 && params_.beta2 < 1.0, "adam: bad beta2");
  require_arg(params_.eps > 0.0, "adam: eps must be > 0");
}

void AdamState::step(const std::vector<ParamRef>& params,
                     const std::vector<Mat>& grads) {
  require_arg(params.size() == grads.size(), "adam: gradient count mismatch");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Vec::Zero(p.size));
      v_.push_back(Vec::Zero(p.size));
    }
  }
  require_arg(m_.size() == params.size(), "adam: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_arg(static_cast<long>(grads[i].size()) == params[i].size,
                "adam: gradient shape mismatch");
    require(grads[i].allFinite(), ErrorCode::kNumericOverflow,
            "adam: non-finite gradient, aborting step");
  }
  ++step_count_;
  const double bc1 = 1.0 - std::pow(params_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(params_.beta2, static_cast<double>(step_count_));
  const double rate = params_.lr / bc1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::Map<Vec> p(params[i].data, params[i].size);
    Eigen::Map<const Vec> g(grads[i].data(), params[i].size);
    m_[i] = params_.beta1 * m_[i] + (1.0 - params_.beta1) * g;
    v_[i].array() =
        params_.beta2 * v_[i].array() + (1.0 - params_.beta2) * g.array().square();
    p.array() -= rate * m_[i].array() / ((v_[i].array() / bc2).sqrt() + params_.eps);
  }
}

}  // namespace anicl
