#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

namespace gscg::nn {

/// Dense row-major tensor of doubles. Most code uses rank 2; biases are rank 1.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape_, double fill = 0.0);
  static Tensor matrix(int rows, int cols, double fill = 0.0) { return Tensor({rows, cols}, fill); }
  static Tensor row(std::vector<double> values);

  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const { return rank() == 2 ? shape[0] : 1; }
  int cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 0); }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }
  double* row_ptr(int r) { return data.data() + static_cast<std::size_t>(r) * cols(); }
  const double* row_ptr(int r) const { return data.data() + static_cast<std::size_t>(r) * cols(); }

  void fill(double v);
  Tensor& operator+=(const Tensor& other);

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::size_t shape_size(const std::vector<int>& shape);

// --- differentiable ops ------------------------------------------------------
// Backward functions accumulate (+=) into parameter gradients and return the
// gradient with respect to the input.

/// y = x W + b with x [N,in], W [in,out], b [out].
Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b);
Tensor linear_backward(const Tensor& x, const Tensor& W, const Tensor& dy, Tensor& dW, Tensor& db);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

/// Row-wise softmax over the last axis, max-subtracted.
Tensor softmax(const Tensor& x);
Tensor softmax_backward(const Tensor& y, const Tensor& dy);

struct LossResult {
  double loss = 0.0;
  Tensor dlogits;
};
/// -log softmax(logits)[cls] for a single row of logits. Throws on a bad class.
LossResult cross_entropy(const Tensor& logits, int cls);

struct DropoutResult {
  Tensor y;
  Tensor mask;  // 0 or 1/(1-rate)
};
DropoutResult dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng);
DropoutResult dropout(const Tensor& x, double rate, bool training, std::uint64_t seed);
Tensor dropout_backward(const Tensor& mask, const Tensor& dy);

// --- parameters ----------------------------------------------------------------

using ParamId = std::size_t;

/// One gradient tensor per parameter, in ParamStore order.
struct GradBuffer {
  std::vector<Tensor> grads;
  Tensor& operator[](ParamId id) { return grads[id]; }
  const Tensor& operator[](ParamId id) const { return grads[id]; }
  void zero();
  GradBuffer& operator+=(const GradBuffer& other);
};

struct AdamWConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class ParamStore {
 public:
  struct Param {
    std::string name;
    Tensor value;
    Tensor m;
    Tensor v;
  };

  /// Kaiming-uniform in [-sqrt(6/fan_in), sqrt(6/fan_in)] when fan_in > 0, zeros otherwise.
  ParamId add(const std::string& name, std::vector<int> shape, int fan_in, std::mt19937_64& rng);
  ParamId add(const std::string& name, Tensor value);

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  const Param& param(ParamId id) const { return params_[id]; }
  Param& param(ParamId id) { return params_[id]; }
  const Tensor& value(ParamId id) const { return params_[id].value; }
  Tensor& value(ParamId id) { return params_[id].value; }
  ParamId find(const std::string& name) const;
  long step_count() const { return step_; }

  GradBuffer make_grad_buffer() const;
  void zero_grad();
  void accumulate(const GradBuffer& g);
  GradBuffer& grads() { return grads_; }
  const GradBuffer& grads() const { return grads_; }

  /// Bias-corrected AdamW with decoupled decay:
  /// p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p).
  void adamw_step(const AdamWConfig& cfg);

  nlohmann::json to_json() const;
  /// Replaces values and optimizer state; names and shapes must match exactly.
  void load_json(const nlohmann::json& doc);

 private:
  std::vector<Param> params_;
  GradBuffer grads_;
  long step_ = 0;
};

// --- layers --------------------------------------------------------------------

struct Linear {
  ParamId w = 0, b = 0;
  int in = 0, out = 0;

  static Linear create(ParamStore& ps, const std::string& name, int in, int out,
                       std::mt19937_64& rng);
  Tensor forward(const ParamStore& ps, const Tensor& x) const;
  Tensor backward(const ParamStore& ps, const Tensor& x, const Tensor& dy, GradBuffer& g) const;
};

/// Linear layers with ReLU between them (none after the last).
struct Mlp {
  std::vector<Linear> layers;

  struct Cache {
    std::vector<Tensor> inputs;  // input of each layer (post-activation)
    std::vector<Tensor> pre;     // pre-activation output of each hidden layer
  };

  static Mlp create(ParamStore& ps, const std::string& name, const std::vector<int>& widths,
                    std::mt19937_64& rng);
  int in() const { return layers.front().in; }
  int out() const { return layers.back().out; }
  Tensor forward(const ParamStore& ps, const Tensor& x, Cache* cache) const;
  Tensor backward(const ParamStore& ps, const Cache& cache, const Tensor& dy, GradBuffer& g) const;
};

/// Scaled dot-product attention of one query row over M key/value rows, split
/// into `heads` heads of width D/heads, followed by an output projection.
struct MultiheadAttention {
  Linear q, k, v, o;
  int dim = 0;
  int heads = 1;

  struct Cache {
    Tensor query, kv;
    Tensor Q, K, V;  // projected
    Tensor attn;     // [heads, M]
    Tensor concat;   // [1, D]
  };

  static MultiheadAttention create(ParamStore& ps, const std::string& name, int dim, int heads,
                                   std::mt19937_64& rng);
  Tensor forward(const ParamStore& ps, const Tensor& query, const Tensor& kv, Cache* cache) const;
  struct InputGrads {
    Tensor dquery, dkv;
  };
  InputGrads backward(const ParamStore& ps, const Cache& cache, const Tensor& dy,
                      GradBuffer& g) const;
};

}  // namespace gscg::nn
