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

#pragma once

#include <vector>

#include "core/types.hpp"

namespace anicl {

struct AdamParams {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Flat view of one parameter tensor; Adam is elementwise, so only the
// contiguous storage matters.
struct ParamRef {
  double* data = nullptr;
  long size = 0;
};

inline ParamRef param_ref(Mat& m) { return {m.data(), static_cast<long>(m.size())}; }
inline ParamRef param_ref(Vec& v) { return {v.data(), static_cast<long>(v.size())}; }

// Standard Adam with bias correction. Moments are sized lazily from the
// first step; the state is plain data, so training runs can be forked
// (pretrain once, branch twice) by copying it.
class AdamState {
 public:
  explicit AdamState(AdamParams params = {});

  // One update over matched (parameter, gradient) lists. Aborts with a
  // numeric error on non-finite gradients without touching parameters.
  void step(const std::vector<ParamRef>& params, const std::vector<Mat>& grads);

  long step_count() const { return step_count_; }
  const AdamParams& params() const { return params_; }
  void set_lr(double lr) { params_.lr = lr; }

 private:
  AdamParams params_;
  std::vector<Vec> m_;
  std::vector<Vec> v_;
  long step_count_ = 0;
};

}  // namespace anicl
