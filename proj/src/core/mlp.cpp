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

#include "core/mlp.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "core/sphere.hpp"

namespace anicl {

void MlpNetwork::validate() const {
  require_arg(!layers.empty(), "network must have at least one layer");
  require_arg(leaky_slope > 0.0 && leaky_slope < 1.0,
              "leaky slope must be in (0, 1)");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    require_arg(l.weight.rows() == l.bias.size(),
                "layer bias size must match output dim");
    if (i > 0) {
      require_arg(l.weight.cols() == layers[i - 1].weight.rows(),
                  "chained layer dimensions must be consistent");
    }
    require_arg(l.weight.allFinite() && l.bias.allFinite(),
                "network parameters must be finite");
  }
}

Mat mlp_forward(const MlpNetwork& net, const Mat& inputs) {
  net.validate();
  require_arg(inputs.cols() == net.input_dim(),
              "mlp_forward: input dimension mismatch");
  Mat h = inputs;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    h = (h * l.weight.transpose()).rowwise() + l.bias.transpose();
    if (i + 1 < net.layers.size()) {
      h = h.array().max(h.array() * net.leaky_slope).matrix();
    }
  }
  require(h.allFinite(), ErrorCode::kNumericOverflow,
          "mlp_forward: non-finite activation");
  if (net.output_normalize) project_rows_to_sphere(h);
  return h;
}

MlpNetwork make_encoder(int input_dim, int output_dim, int n_layers, int width,
                        double slope, bool normalize, RngStream rng) {
  require_arg(input_dim >= 1 && output_dim >= 1, "encoder dims must be >= 1");
  require_arg(n_layers >= 1, "encoder must have at least one layer");
  require_arg(width >= 1 || n_layers == 1, "encoder width must be >= 1");
  MlpNetwork net;
  net.leaky_slope = slope;
  net.output_normalize = normalize;
  RngStream s = rng.substream(0x656e63ULL);
  for (int i = 0; i < n_layers; ++i) {
    const int in = i == 0 ? input_dim : width;
    const int out = i == n_layers - 1 ? output_dim : width;
    MlpNetwork::Layer layer;
    layer.weight.resize(out, in);
    const double std = std::sqrt(2.0 / ((1.0 + slope * slope) * in));
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) layer.weight(r, c) = std * s.normal();
    }
    layer.bias = Vec::Zero(out);
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x414e4331;  // "ANC1"
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_pod(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<bool>(is), ErrorCode::kIo, "checkpoint: truncated file");
  return v;
}

void write_matrix(std::ofstream& os, const Mat& m) {
  write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
  write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_pod<double>(os, m(r, c));
  }
}

Mat read_matrix(std::ifstream& is) {
  const auto rows = read_pod<std::uint64_t>(is);
  const auto cols = read_pod<std::uint64_t>(is);
  require(rows <= (1u << 20) && cols <= (1u << 20), ErrorCode::kIo,
          "checkpoint: implausible matrix shape");
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = read_pod<double>(is);
  }
  return m;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  ckpt.encoder.validate();
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorCode::kIo,
          "checkpoint: cannot open for writing: " + path);
  write_pod(os, kCheckpointMagic);
  write_pod(os, kCheckpointVersion);
  write_pod<double>(os, ckpt.encoder.leaky_slope);
  write_pod<std::uint8_t>(os, ckpt.encoder.output_normalize ? 1 : 0);
  write_pod<std::uint64_t>(os, ckpt.encoder.layers.size());
  for (const auto& l : ckpt.encoder.layers) {
    write_matrix(os, l.weight);
    write_matrix(os, l.bias);
  }
  write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(ckpt.log_diags.size()));
  for (const auto& ld : ckpt.log_diags) write_matrix(os, ld);
  require(static_cast<bool>(os), ErrorCode::kIo,
          "checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorCode::kIo,
          "checkpoint: cannot open: " + path);
  require(read_pod<std::uint32_t>(is) == kCheckpointMagic, ErrorCode::kIo,
          "checkpoint: bad magic");
  require(read_pod<std::uint32_t>(is) == kCheckpointVersion, ErrorCode::kIo,
          "checkpoint: unsupported version");
  Checkpoint ckpt;
  ckpt.encoder.leaky_slope = read_pod<double>(is);
  ckpt.encoder.output_normalize = read_pod<std::uint8_t>(is) != 0;
  const auto n_layers = read_pod<std::uint64_t>(is);
  require(n_layers >= 1 && n_layers <= 1024, ErrorCode::kIo,
          "checkpoint: implausible layer count");
  for (std::uint64_t i = 0; i < n_layers; ++i) {
    MlpNetwork::Layer l;
    l.weight = read_matrix(is);
    l.bias = read_matrix(is);
    ckpt.encoder.layers.push_back(std::move(l));
  }
  const auto n_lams = read_pod<std::uint8_t>(is);
  for (std::uint8_t i = 0; i < n_lams; ++i) {
    ckpt.log_diags.push_back(read_matrix(is).col(0));
  }
  ckpt.encoder.validate();
  return ckpt;
}

}  // namespace anicl
