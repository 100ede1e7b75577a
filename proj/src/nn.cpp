#include "gscg/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gscg::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using CMapVec = Eigen::Map<const Eigen::RowVectorXd>;
using MapVec = Eigen::Map<Eigen::RowVectorXd>;

namespace {

CMapMat as_mat(const Tensor& t) { return CMapMat(t.data.data(), t.rows(), t.cols()); }
MapMat as_mat(Tensor& t) { return MapMat(t.data.data(), t.rows(), t.cols()); }

std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape_, double fill)
    : shape(std::move(shape_)), data(shape_size(shape), fill) {}

Tensor Tensor::row(std::vector<double> values) {
  Tensor t;
  t.shape = {1, static_cast<int>(values.size())};
  t.data = std::move(values);
  return t;
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.size() != size()) throw std::invalid_argument("Tensor +=: size mismatch");
  for (std::size_t i = 0; i < size(); ++i) data[i] += other.data[i];
  return *this;
}

// --- ops ---------------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
  if (x.cols() != W.rows() || static_cast<int>(b.size()) != W.cols())
    throw std::invalid_argument("linear: shape mismatch x" + shape_str(x.shape) + " W" +
                                shape_str(W.shape) + " b" + shape_str(b.shape));
  Tensor y = Tensor::matrix(x.rows(), W.cols());
  auto Y = as_mat(y);
  Y.noalias() = as_mat(x) * as_mat(W);
  Y.rowwise() += CMapVec(b.data.data(), W.cols());
  return y;
}

Tensor linear_backward(const Tensor& x, const Tensor& W, const Tensor& dy, Tensor& dW,
                       Tensor& db) {
  if (dy.rows() != x.rows() || dy.cols() != W.cols())
    throw std::invalid_argument("linear_backward: shape mismatch");
  as_mat(dW).noalias() += as_mat(x).transpose() * as_mat(dy);
  MapVec(db.data.data(), W.cols()) += as_mat(dy).colwise().sum();
  Tensor dx = Tensor::matrix(x.rows(), x.cols());
  as_mat(dx).noalias() = as_mat(dy) * as_mat(W).transpose();
  return dx;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  require_same(x, dy, "relu_backward");
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(x.data[i] > 0.0)) dx.data[i] = 0.0;
  return dx;
}

Tensor softmax(const Tensor& x) {
  Tensor y = x;
  const int n = x.cols();
  for (int r = 0; r < x.rows(); ++r) {
    double* row = y.row_ptr(r);
    const double mx = *std::max_element(row, row + n);
    double sum = 0.0;
    for (int c = 0; c < n; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (int c = 0; c < n; ++c) row[c] /= sum;
  }
  return y;
}

Tensor softmax_backward(const Tensor& y, const Tensor& dy) {
  require_same(y, dy, "softmax_backward");
  Tensor dx = Tensor::matrix(y.rows(), y.cols());
  for (int r = 0; r < y.rows(); ++r) {
    double dot = 0.0;
    for (int c = 0; c < y.cols(); ++c) dot += y(r, c) * dy(r, c);
    for (int c = 0; c < y.cols(); ++c) dx(r, c) = y(r, c) * (dy(r, c) - dot);
  }
  return dx;
}

LossResult cross_entropy(const Tensor& logits, int cls) {
  if (logits.rows() != 1) throw std::invalid_argument("cross_entropy: expects a single row");
  if (cls < 0 || cls >= logits.cols())
    throw std::invalid_argument("cross_entropy: class index " + std::to_string(cls) +
                                " out of range [0, " + std::to_string(logits.cols()) + ")");
  const double* z = logits.data.data();
  const int n = logits.cols();
  const double mx = *std::max_element(z, z + n);
  double sum = 0.0;
  for (int c = 0; c < n; ++c) sum += std::exp(z[c] - mx);
  const double lse = mx + std::log(sum);
  LossResult out;
  out.loss = lse - z[cls];
  out.dlogits = Tensor::matrix(1, n);
  for (int c = 0; c < n; ++c) out.dlogits.data[c] = std::exp(z[c] - lse);
  out.dlogits.data[cls] -= 1.0;
  return out;
}

DropoutResult dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  DropoutResult out;
  out.mask = Tensor(x.shape, 1.0);
  if (training && rate > 0.0) {
    const double keep_scale = 1.0 / (1.0 - rate);
    for (auto& m : out.mask.data) m = unit(rng) < rate ? 0.0 : keep_scale;
  }
  out.y = x;
  for (std::size_t i = 0; i < x.size(); ++i) out.y.data[i] *= out.mask.data[i];
  return out;
}

DropoutResult dropout(const Tensor& x, double rate, bool training, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return dropout(x, rate, training, rng);
}

Tensor dropout_backward(const Tensor& mask, const Tensor& dy) {
  require_same(mask, dy, "dropout_backward");
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= mask.data[i];
  return dx;
}

// --- parameters ----------------------------------------------------------------

void GradBuffer::zero() {
  for (auto& g : grads) g.fill(0.0);
}

GradBuffer& GradBuffer::operator+=(const GradBuffer& other) {
  if (other.grads.size() != grads.size()) throw std::invalid_argument("GradBuffer += mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += other.grads[i];
  return *this;
}

ParamId ParamStore::add(const std::string& name, std::vector<int> shape, int fan_in,
                        std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  if (fan_in > 0) {
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& v : t.data) v = (2.0 * unit(rng) - 1.0) * bound;
  }
  return add(name, std::move(t));
}

ParamId ParamStore::add(const std::string& name, Tensor value) {
  for (const auto& p : params_)
    if (p.name == name) throw std::invalid_argument("duplicate parameter name " + name);
  Param p;
  p.name = name;
  p.m = Tensor(value.shape);
  p.v = Tensor(value.shape);
  grads_.grads.emplace_back(value.shape);
  p.value = std::move(value);
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

ParamId ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  throw std::out_of_range("no parameter named " + name);
}

GradBuffer ParamStore::make_grad_buffer() const {
  GradBuffer g;
  g.grads.reserve(params_.size());
  for (const auto& p : params_) g.grads.emplace_back(p.value.shape);
  return g;
}

void ParamStore::zero_grad() { grads_.zero(); }

void ParamStore::accumulate(const GradBuffer& g) { grads_ += g; }

void ParamStore::adamw_step(const AdamWConfig& cfg) {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    const auto& g = grads_.grads[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double gj = g.data[j];
      double& m = p.m.data[j];
      double& v = p.v.data[j];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * gj;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * gj * gj;
      const double mhat = m / bc1, vhat = v / bc2;
      double& w = p.value.data[j];
      w -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * w);
    }
  }
}

nlohmann::json ParamStore::to_json() const {
  nlohmann::json doc;
  doc["step"] = step_;
  auto& arr = doc["params"] = nlohmann::json::array();
  for (const auto& p : params_)
    arr.push_back({{"name", p.name}, {"shape", p.value.shape}, {"value", p.value.data},
                   {"m", p.m.data}, {"v", p.v.data}});
  return doc;
}

void ParamStore::load_json(const nlohmann::json& doc) {
  const auto& arr = doc.at("params");
  if (arr.size() != params_.size())
    throw std::runtime_error("checkpoint has " + std::to_string(arr.size()) +
                             " parameters, model expects " + std::to_string(params_.size()));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    const auto& jp = arr[i];
    if (jp.at("name").get<std::string>() != p.name ||
        jp.at("shape").get<std::vector<int>>() != p.value.shape)
      throw std::runtime_error("checkpoint parameter " + std::to_string(i) + " (" +
                               jp.at("name").get<std::string>() + ") does not match model " +
                               p.name + " " + shape_str(p.value.shape));
    p.value.data = jp.at("value").get<std::vector<double>>();
    p.m.data = jp.at("m").get<std::vector<double>>();
    p.v.data = jp.at("v").get<std::vector<double>>();
    const std::size_t n = shape_size(p.value.shape);
    if (p.value.data.size() != n || p.m.data.size() != n || p.v.data.size() != n)
      throw std::runtime_error("checkpoint parameter " + p.name + " has wrong length");
  }
  step_ = doc.at("step").get<long>();
}

// --- layers --------------------------------------------------------------------

Linear Linear::create(ParamStore& ps, const std::string& name, int in, int out,
                      std::mt19937_64& rng) {
  Linear l;
  l.in = in;
  l.out = out;
  l.w = ps.add(name + ".weight", {in, out}, in, rng);
  l.b = ps.add(name + ".bias", {out}, 0, rng);
  return l;
}

Tensor Linear::forward(const ParamStore& ps, const Tensor& x) const {
  return linear(x, ps.value(w), ps.value(b));
}

Tensor Linear::backward(const ParamStore& ps, const Tensor& x, const Tensor& dy,
                        GradBuffer& g) const {
  return linear_backward(x, ps.value(w), dy, g[w], g[b]);
}

Mlp Mlp::create(ParamStore& ps, const std::string& name, const std::vector<int>& widths,
                std::mt19937_64& rng) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp needs at least two widths");
  Mlp m;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    m.layers.push_back(
        Linear::create(ps, name + "." + std::to_string(i), widths[i], widths[i + 1], rng));
  return m;
}

Tensor Mlp::forward(const ParamStore& ps, const Tensor& x, Cache* cache) const {
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (cache) cache->inputs.push_back(h);
    Tensor z = layers[i].forward(ps, h);
    if (i + 1 == layers.size()) return z;
    if (cache) cache->pre.push_back(z);
    h = relu(z);
  }
  return h;
}

Tensor Mlp::backward(const ParamStore& ps, const Cache& cache, const Tensor& dy,
                     GradBuffer& g) const {
  Tensor d = dy;
  for (std::size_t i = layers.size(); i-- > 0;) {
    if (i + 1 < layers.size()) d = relu_backward(cache.pre[i], d);
    d = layers[i].backward(ps, cache.inputs[i], d, g);
  }
  return d;
}

MultiheadAttention MultiheadAttention::create(ParamStore& ps, const std::string& name, int dim,
                                              int heads, std::mt19937_64& rng) {
  if (heads < 1 || dim % heads != 0)
    throw std::invalid_argument("MultiheadAttention: dim " + std::to_string(dim) +
                                " not divisible by heads " + std::to_string(heads));
  MultiheadAttention a;
  a.dim = dim;
  a.heads = heads;
  a.q = Linear::create(ps, name + ".q", dim, dim, rng);
  a.k = Linear::create(ps, name + ".k", dim, dim, rng);
  a.v = Linear::create(ps, name + ".v", dim, dim, rng);
  a.o = Linear::create(ps, name + ".o", dim, dim, rng);
  return a;
}

Tensor MultiheadAttention::forward(const ParamStore& ps, const Tensor& query, const Tensor& kv,
                                   Cache* cache) const {
  if (query.rows() != 1 || query.cols() != dim || kv.cols() != dim)
    throw std::invalid_argument("MultiheadAttention: expected query [1," + std::to_string(dim) +
                                "] and kv [M," + std::to_string(dim) + "]");
  if (kv.rows() < 1) throw std::invalid_argument("MultiheadAttention: no keys");
  const int M = kv.rows(), dh = dim / heads;
  Tensor Q = q.forward(ps, query);
  Tensor K = k.forward(ps, kv);
  Tensor V = v.forward(ps, kv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor scores = Tensor::matrix(heads, M);
  for (int h = 0; h < heads; ++h)
    for (int j = 0; j < M; ++j) {
      double s = 0.0;
      for (int c = 0; c < dh; ++c) s += Q(0, h * dh + c) * K(j, h * dh + c);
      scores(h, j) = s * scale;
    }
  Tensor attn = softmax(scores);
  Tensor concat = Tensor::matrix(1, dim);
  for (int h = 0; h < heads; ++h)
    for (int j = 0; j < M; ++j) {
      const double a = attn(h, j);
      for (int c = 0; c < dh; ++c) concat(0, h * dh + c) += a * V(j, h * dh + c);
    }
  Tensor y = o.forward(ps, concat);
  if (cache) {
    cache->query = query;
    cache->kv = kv;
    cache->Q = std::move(Q);
    cache->K = std::move(K);
    cache->V = std::move(V);
    cache->attn = std::move(attn);
    cache->concat = std::move(concat);
  }
  return y;
}

MultiheadAttention::InputGrads MultiheadAttention::backward(const ParamStore& ps,
                                                            const Cache& c, const Tensor& dy,
                                                            GradBuffer& g) const {
  const int M = c.kv.rows(), dh = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor dconcat = o.backward(ps, c.concat, dy, g);
  Tensor dattn = Tensor::matrix(heads, M);
  Tensor dV = Tensor::matrix(M, dim);
  for (int h = 0; h < heads; ++h)
    for (int j = 0; j < M; ++j) {
      double s = 0.0;
      for (int col = 0; col < dh; ++col) {
        s += dconcat(0, h * dh + col) * c.V(j, h * dh + col);
        dV(j, h * dh + col) += c.attn(h, j) * dconcat(0, h * dh + col);
      }
      dattn(h, j) = s;
    }
  Tensor dscores = softmax_backward(c.attn, dattn);
  Tensor dQ = Tensor::matrix(1, dim);
  Tensor dK = Tensor::matrix(M, dim);
  for (int h = 0; h < heads; ++h)
    for (int j = 0; j < M; ++j) {
      const double ds = dscores(h, j) * scale;
      for (int col = 0; col < dh; ++col) {
        dQ(0, h * dh + col) += ds * c.K(j, h * dh + col);
        dK(j, h * dh + col) += ds * c.Q(0, h * dh + col);
      }
    }
  InputGrads out;
  out.dquery = q.backward(ps, c.query, dQ, g);
  out.dkv = k.backward(ps, c.kv, dK, g);
  out.dkv += v.backward(ps, c.kv, dV, g);
  return out;
}

}  // namespace gscg::nn
