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

#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/types.hpp"

namespace anicl {

// Affine + LeakyReLU stack. Used both for the data-generating map and for
// the encoder; the last layer has no activation, and outputs are optionally
// projected to the unit sphere.
struct MlpNetwork {
  struct Layer {
    Mat weight;  // out x in
    Vec bias;    // out
  };

  std::vector<Layer> layers;
  double leaky_slope = 0.2;
  bool output_normalize = false;

  int input_dim() const {
    return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols());
  }
  int output_dim() const {
    return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows());
  }

  void validate() const;
};

// Plain batched forward pass (rows are samples). Throws on non-finite
// activations.
Mat mlp_forward(const MlpNetwork& net, const Mat& inputs);

// Trainable diagonal scaling, kept positive through the exponential map.
struct LearnableConcentration {
  Vec log_diag;

  explicit LearnableConcentration(int d) : log_diag(Vec::Zero(d)) {}
  explicit LearnableConcentration(Vec ld) : log_diag(std::move(ld)) {}

  int dim() const { return static_cast<int>(log_diag.size()); }
  ConcentrationMatrix materialize() const {
    return ConcentrationMatrix(log_diag.array().exp().matrix());
  }
  static LearnableConcentration from_values(const Vec& diag) {
    return LearnableConcentration(Vec(diag.array().log().matrix()));
  }
};

// Standard Kaiming-style Gaussian init for encoder layers.
MlpNetwork make_encoder(int input_dim, int output_dim, int n_layers, int width,
                        double slope, bool normalize, RngStream rng);

// Checkpoint container: encoder plus the learned concentrations (one per
// loss term; empty for the plain dot-product loss). Binary little-endian
// format, version tagged; see README for the layout.
struct Checkpoint {
  MlpNetwork encoder;
  std::vector<Vec> log_diags;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace anicl
