#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hialign/matrix.hpp"
#include "hialign/rng.hpp"

namespace hialign {

enum class EncoderKind { linear, mlp1 };

std::string to_string(EncoderKind kind);
EncoderKind encoder_kind_from_string(const std::string& name);

// Toy stand-in for an image or text tower.
//
//   linear: y = x W + b
//   mlp1:   y = tanh(x W1 + b1) W2 + b2
//
// Parameters are stored in a fixed order (weight, bias[, weight2, bias2]) so
// optimizers and serializers can treat them as a flat list. Outputs are raw
// embeddings; normalization happens at the similarity layer.
struct Encoder {
  EncoderKind kind = EncoderKind::linear;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;  // mlp1 only
  std::size_t output_dim = 0;
  std::vector<Matrix> params;

  std::size_t parameter_count() const;
  static std::vector<std::string> parameter_names(EncoderKind kind);

  friend bool operator==(const Encoder&, const Encoder&) = default;
};

// Gradients in the same order and shapes as Encoder::params.
struct EncoderGrads {
  std::vector<Matrix> params;

  EncoderGrads& operator+=(const EncoderGrads& other);
};

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
Encoder init_encoder(EncoderKind kind, std::size_t input_dim, std::size_t hidden_dim,
                     std::size_t output_dim, Rng& rng);
// Linear encoder with W = I and b = 0.
Encoder identity_encoder(std::size_t dim);

Matrix forward(const Encoder& enc, const Matrix& batch);

// Gradient of sum_i <upstream_i, forward(x_i)> with respect to every parameter.
EncoderGrads backward(const Encoder& enc, const Matrix& batch, const Matrix& upstream);

EncoderGrads zero_grads(const Encoder& enc);

void validate(const Encoder& enc);

nlohmann::json encoder_to_json(const Encoder& enc);
// Throws ConfigError naming the offending field.
Encoder encoder_from_json(const nlohmann::json& j);

}  // namespace hialign
