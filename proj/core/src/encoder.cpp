#include "hialign/encoder.hpp"

#include <cmath>

#include "hialign/errors.hpp"

namespace hialign {

namespace {

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (double& x : m.values()) x = rng.uniform(-bound, bound);
  return m;
}

void add_bias(Matrix& m, const Matrix& bias) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] += bias(0, c);
  }
}

Matrix column_sums(const Matrix& m) {
  Matrix out(1, m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out(0, c) += m(r, c);
  }
  return out;
}

void check_input(const Encoder& enc, const Matrix& batch) {
  if (batch.cols() != enc.input_dim) {
    throw ShapeError("encoder expects input width " + std::to_string(enc.input_dim) + ", got " +
                     std::to_string(batch.cols()));
  }
}

}  // namespace

std::string to_string(EncoderKind kind) { return kind == EncoderKind::linear ? "linear" : "mlp1"; }

EncoderKind encoder_kind_from_string(const std::string& name) {
  if (name == "linear") return EncoderKind::linear;
  if (name == "mlp1") return EncoderKind::mlp1;
  throw ConfigError("unknown encoder kind '" + name + "' (expected linear or mlp1)");
}

std::size_t Encoder::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.size();
  return n;
}

std::vector<std::string> Encoder::parameter_names(EncoderKind kind) {
  if (kind == EncoderKind::linear) return {"weight", "bias"};
  return {"weight1", "bias1", "weight2", "bias2"};
}

EncoderGrads& EncoderGrads::operator+=(const EncoderGrads& other) {
  if (params.size() != other.params.size()) throw ShapeError("gradient list length mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] += other.params[i];
  return *this;
}

Encoder init_encoder(EncoderKind kind, std::size_t input_dim, std::size_t hidden_dim,
                     std::size_t output_dim, Rng& rng) {
  if (input_dim == 0 || output_dim == 0 || (kind == EncoderKind::mlp1 && hidden_dim == 0)) {
    throw ShapeError("init_encoder: dimensions must be >= 1");
  }
  Encoder enc;
  enc.kind = kind;
  enc.input_dim = input_dim;
  enc.output_dim = output_dim;
  if (kind == EncoderKind::linear) {
    enc.params.push_back(uniform_matrix(input_dim, output_dim, 1.0 / std::sqrt(double(input_dim)), rng));
    enc.params.emplace_back(1, output_dim);
  } else {
    enc.hidden_dim = hidden_dim;
    enc.params.push_back(uniform_matrix(input_dim, hidden_dim, 1.0 / std::sqrt(double(input_dim)), rng));
    enc.params.emplace_back(1, hidden_dim);
    enc.params.push_back(uniform_matrix(hidden_dim, output_dim, 1.0 / std::sqrt(double(hidden_dim)), rng));
    enc.params.emplace_back(1, output_dim);
  }
  return enc;
}

Encoder identity_encoder(std::size_t dim) {
  Encoder enc;
  enc.kind = EncoderKind::linear;
  enc.input_dim = dim;
  enc.output_dim = dim;
  enc.params = {Matrix::identity(dim), Matrix(1, dim)};
  return enc;
}

Matrix forward(const Encoder& enc, const Matrix& batch) {
  check_input(enc, batch);
  if (enc.kind == EncoderKind::linear) {
    Matrix out = matmul(batch, enc.params[0]);
    add_bias(out, enc.params[1]);
    return out;
  }
  Matrix hidden = matmul(batch, enc.params[0]);
  add_bias(hidden, enc.params[1]);
  for (double& x : hidden.values()) x = std::tanh(x);
  Matrix out = matmul(hidden, enc.params[2]);
  add_bias(out, enc.params[3]);
  return out;
}

EncoderGrads backward(const Encoder& enc, const Matrix& batch, const Matrix& upstream) {
  check_input(enc, batch);
  if (upstream.rows() != batch.rows() || upstream.cols() != enc.output_dim) {
    throw ShapeError("backward: upstream shape " + upstream.shape_string() + " does not match output " +
                     std::to_string(batch.rows()) + "x" + std::to_string(enc.output_dim));
  }
  EncoderGrads g;
  if (enc.kind == EncoderKind::linear) {
    g.params.push_back(matmul_tn(batch, upstream));
    g.params.push_back(column_sums(upstream));
    return g;
  }
  Matrix hidden = matmul(batch, enc.params[0]);
  add_bias(hidden, enc.params[1]);
  for (double& x : hidden.values()) x = std::tanh(x);
  // d/d(pre-activation) = (upstream W2^T) * (1 - tanh^2)
  Matrix d_hidden = matmul_nt(upstream, enc.params[2]);
  for (std::size_t i = 0; i < d_hidden.size(); ++i) {
    const double h = hidden.values()[i];
    d_hidden.values()[i] *= 1.0 - h * h;
  }
  g.params.push_back(matmul_tn(batch, d_hidden));
  g.params.push_back(column_sums(d_hidden));
  g.params.push_back(matmul_tn(hidden, upstream));
  g.params.push_back(column_sums(upstream));
  return g;
}

EncoderGrads zero_grads(const Encoder& enc) {
  EncoderGrads g;
  for (const auto& p : enc.params) g.params.emplace_back(p.rows(), p.cols());
  return g;
}

void validate(const Encoder& enc) {
  const bool linear = enc.kind == EncoderKind::linear;
  const std::size_t expected = linear ? 2 : 4;
  if (enc.params.size() != expected) throw ShapeError("encoder has wrong number of parameter tensors");
  auto want = [](const Matrix& m, std::size_t r, std::size_t c, const char* name) {
    if (m.rows() != r || m.cols() != c) {
      throw ShapeError(std::string("encoder parameter ") + name + " has shape " + m.shape_string() +
                       ", expected " + std::to_string(r) + "x" + std::to_string(c));
    }
  };
  if (linear) {
    want(enc.params[0], enc.input_dim, enc.output_dim, "weight");
    want(enc.params[1], 1, enc.output_dim, "bias");
  } else {
    want(enc.params[0], enc.input_dim, enc.hidden_dim, "weight1");
    want(enc.params[1], 1, enc.hidden_dim, "bias1");
    want(enc.params[2], enc.hidden_dim, enc.output_dim, "weight2");
    want(enc.params[3], 1, enc.output_dim, "bias2");
  }
}

nlohmann::json encoder_to_json(const Encoder& enc) {
  nlohmann::json j;
  j["kind"] = to_string(enc.kind);
  j["dims"] = {{"input", enc.input_dim}, {"hidden", enc.hidden_dim}, {"output", enc.output_dim}};
  nlohmann::json params = nlohmann::json::object();
  const auto names = Encoder::parameter_names(enc.kind);
  for (std::size_t i = 0; i < enc.params.size(); ++i) params[names[i]] = enc.params[i].data();
  j["parameters"] = std::move(params);
  return j;
}

Encoder encoder_from_json(const nlohmann::json& j) {
  try {
    Encoder enc;
    enc.kind = encoder_kind_from_string(j.at("kind").get<std::string>());
    const auto& dims = j.at("dims");
    enc.input_dim = dims.at("input").get<std::size_t>();
    enc.hidden_dim = dims.at("hidden").get<std::size_t>();
    enc.output_dim = dims.at("output").get<std::size_t>();
    const bool linear = enc.kind == EncoderKind::linear;
    const std::size_t hidden = linear ? enc.output_dim : enc.hidden_dim;
    const std::vector<std::pair<std::size_t, std::size_t>> shapes =
        linear ? std::vector<std::pair<std::size_t, std::size_t>>{{enc.input_dim, enc.output_dim},
                                                                   {1, enc.output_dim}}
               : std::vector<std::pair<std::size_t, std::size_t>>{
                     {enc.input_dim, hidden}, {1, hidden}, {hidden, enc.output_dim}, {1, enc.output_dim}};
    const auto names = Encoder::parameter_names(enc.kind);
    for (std::size_t i = 0; i < names.size(); ++i) {
      auto values = j.at("parameters").at(names[i]).get<std::vector<double>>();
      const auto [r, c] = shapes[i];
      if (values.size() != r * c) {
        throw ConfigError("encoder parameter '" + names[i] + "' has " + std::to_string(values.size()) +
                          " values, expected " + std::to_string(r * c));
      }
      enc.params.emplace_back(r, c, std::move(values));
    }
    return enc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed encoder JSON: ") + e.what());
  }
}

}  // namespace hialign
