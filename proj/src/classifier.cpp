#include "gscg/classifier.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace gscg {

using nn::Tensor;

namespace {

constexpr int kCheckpointVersion = 1;
constexpr int kGradientChunk = 8;
constexpr double kLabScale = 0.01;

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Tensor one_hot(int index, int n) {
  Tensor t = Tensor::matrix(1, n);
  if (index >= 0) t.data[index] = 1.0;
  return t;
}

void copy_into(Tensor& dst, int offset, const Tensor& src) {
  std::copy(src.data.begin(), src.data.end(), dst.data.begin() + offset);
}

Tensor slice(const Tensor& src, int offset, int width) {
  Tensor t = Tensor::matrix(1, width);
  std::copy(src.data.begin() + offset, src.data.begin() + offset + width, t.data.begin());
  return t;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const std::size_t threads = std::min<std::size_t>(std::max(workers, 1), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

// --- configurations ------------------------------------------------------------------

nlohmann::json AblationConfig::to_json() const {
  return {{"name", name},
          {"use_geometry", use_geometry},
          {"use_materials", use_materials},
          {"use_colors", use_colors},
          {"use_neighbors", use_neighbors},
          {"use_extended_context", use_extended_context}};
}

AblationConfig AblationConfig::from_json(const nlohmann::json& doc) {
  AblationConfig c;
  c.name = doc.at("name").get<std::string>();
  c.use_geometry = doc.at("use_geometry").get<bool>();
  c.use_materials = doc.at("use_materials").get<bool>();
  c.use_colors = doc.at("use_colors").get<bool>();
  c.use_neighbors = doc.at("use_neighbors").get<bool>();
  c.use_extended_context = doc.at("use_extended_context").get<bool>();
  return c;
}

const std::vector<AblationConfig>& ablation_configs() {
  static const std::vector<AblationConfig> configs = [] {
    auto make = [](std::string name, bool geo, bool mat, bool col, bool nb, bool ext) {
      return AblationConfig{std::move(name), geo, mat, col && mat, nb, ext};
    };
    return std::vector<AblationConfig>{
        make("full_model", true, true, true, true, true),
        make("no_geometry", false, true, true, true, true),
        make("no_colors", true, true, false, true, true),
        make("no_colors_no_geometry", false, true, false, true, true),
        make("no_materials", true, false, false, true, true),
        make("no_materials_no_geometry", false, false, false, true, true),
        make("no_neighbors", true, true, true, false, true),
        make("no_neighbors_no_geometry", false, true, true, false, true),
        make("no_extended_context", true, true, true, true, false),
        make("no_extended_context_no_materials", true, false, false, true, false),
        make("no_neighbors_no_extended_context", true, true, true, false, false),
        make("minimal_model", false, false, false, true, false),
    };
  }();
  return configs;
}

const AblationConfig& ablation_config(std::string_view name) {
  for (const auto& c : ablation_configs())
    if (c.name == name) return c;
  std::string valid;
  for (const auto& c : ablation_configs()) valid += (valid.empty() ? "" : ", ") + c.name;
  throw std::invalid_argument("unknown ablation config '" + std::string(name) +
                              "'; valid names: " + valid);
}

nlohmann::json ModelDims::to_json() const {
  return {{"base_embed", base_embed},
          {"geom_embed", geom_embed},
          {"color_embed", color_embed},
          {"color_hidden", color_hidden},
          {"material_label_embed", material_label_embed},
          {"material_embed", material_embed},
          {"edge_type_embed", edge_type_embed},
          {"global_embed", global_embed},
          {"attention_heads", attention_heads},
          {"classifier_hidden", classifier_hidden},
          {"dropout", dropout},
          {"object_embed", object_embed},
          {"neighbor_proj", neighbor_proj}};
}

ModelDims ModelDims::from_json(const nlohmann::json& doc) {
  ModelDims d;
  d.base_embed = doc.at("base_embed").get<int>();
  d.geom_embed = doc.at("geom_embed").get<int>();
  d.color_embed = doc.at("color_embed").get<int>();
  d.color_hidden = doc.at("color_hidden").get<int>();
  d.material_label_embed = doc.at("material_label_embed").get<int>();
  d.material_embed = doc.at("material_embed").get<int>();
  d.edge_type_embed = doc.at("edge_type_embed").get<int>();
  d.global_embed = doc.at("global_embed").get<int>();
  d.attention_heads = doc.at("attention_heads").get<int>();
  d.classifier_hidden = doc.at("classifier_hidden").get<int>();
  d.dropout = doc.at("dropout").get<double>();
  d.object_embed = doc.at("object_embed").get<int>();
  d.neighbor_proj = doc.at("neighbor_proj").get<int>();
  return d;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},           {"weight_decay", weight_decay}, {"batch", batch},
          {"epochs", epochs},   {"patience", patience},         {"seed", seed},
          {"workers", workers}};
}

// --- model -----------------------------------------------------------------------

struct Classifier::Layers {
  std::optional<nn::Linear> label;
  std::optional<nn::Mlp> geometry;
  std::optional<nn::Mlp> color;
  std::optional<nn::Linear> material_label;
  std::optional<nn::Mlp> material;
  nn::Mlp object;
  std::optional<nn::ParamId> edge_type;
  std::optional<nn::Linear> neighbor_proj;
  std::optional<nn::MultiheadAttention> attention;
  std::optional<nn::Mlp> global;
  nn::Linear hidden1, hidden2, output;
};

namespace {

struct ColorTrace {
  std::vector<nn::Mlp::Cache> caches;
  std::vector<double> weights;
};

struct PartTrace {
  int material = -1;
  ColorTrace colors;
  nn::Mlp::Cache mlp;
  double weight = 0.0;
};

struct ObjectTrace {
  int label = -1;
  bool geometry = false;
  nn::Mlp::Cache geometry_cache;
  std::vector<PartTrace> parts;
  double fraction_sum = 0.0;
  nn::Mlp::Cache object;
};

}  // namespace

struct Classifier::Trace {
  ObjectTrace target;
  std::vector<ObjectTrace> neighbors;
  std::vector<int> kinds;
  Tensor kv_in;
  Tensor kv;
  nn::MultiheadAttention::Cache attention;
  bool has_global = false;
  nn::Mlp::Cache global;
  Tensor head_in;
  Tensor pre1, mask1, act1, pre2, mask2, act2;
};

Classifier::Classifier(Vocab vocab, AblationConfig config, ModelDims dims, std::uint64_t seed)
    : vocab_(std::move(vocab)), config_(std::move(config)), dims_(dims) {
  if (config_.use_colors && !config_.use_materials)
    throw std::invalid_argument("colors are embedded through materials; enable both");
  if (dims_.object_embed != dims_.base_embed + dims_.geom_embed + dims_.material_embed)
    throw std::invalid_argument("object_embed must equal label + geometry + material widths");
  if (dims_.material_embed != dims_.material_label_embed + dims_.color_embed)
    throw std::invalid_argument("material_embed must equal material label + color widths");
  if (dims_.neighbor_proj != dims_.object_embed)
    throw std::invalid_argument("neighbor_proj must equal object_embed (the attention query)");
  if (dims_.neighbor_proj % dims_.attention_heads != 0)
    throw std::invalid_argument("neighbor_proj must be divisible by attention_heads");
  if (vocab_.classes.empty()) throw std::invalid_argument("empty class vocabulary");
  build(seed);
}

void Classifier::build(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto L = std::make_shared<Layers>();
  const int C = num_classes();
  const int M = static_cast<int>(vocab_.materials.size());
  if (config_.use_neighbors) L->label = nn::Linear::create(ps_, "label", C, dims_.base_embed, rng);
  if (config_.use_geometry)
    L->geometry = nn::Mlp::create(ps_, "geometry", {15, dims_.geom_embed, dims_.geom_embed}, rng);
  if (config_.use_colors)
    L->color = nn::Mlp::create(
        ps_, "color", {3, dims_.color_hidden, dims_.color_hidden, dims_.color_embed}, rng);
  if (config_.use_materials) {
    L->material_label =
        nn::Linear::create(ps_, "material_label", std::max(M, 1), dims_.material_label_embed, rng);
    L->material = nn::Mlp::create(
        ps_, "material", {dims_.material_embed, dims_.material_embed, dims_.material_embed}, rng);
  }
  L->object = nn::Mlp::create(ps_, "object",
                              {dims_.object_embed, dims_.object_embed, dims_.object_embed}, rng);
  if (config_.use_neighbors) {
    L->edge_type = ps_.add("edge_type", {kNumEdgeKinds, dims_.edge_type_embed}, 1, rng);
    L->neighbor_proj = nn::Linear::create(ps_, "neighbor_proj",
                                          dims_.object_embed + dims_.edge_type_embed + 1,
                                          dims_.neighbor_proj, rng);
    L->attention = nn::MultiheadAttention::create(ps_, "attention", dims_.neighbor_proj,
                                                  dims_.attention_heads, rng);
  }
  if (config_.use_extended_context)
    L->global = nn::Mlp::create(ps_, "global", {C, dims_.global_embed, dims_.global_embed}, rng);
  const int head_in = dims_.object_embed + (config_.use_neighbors ? dims_.neighbor_proj : 0) +
                      dims_.global_embed;
  L->hidden1 = nn::Linear::create(ps_, "head.0", head_in, dims_.classifier_hidden, rng);
  L->hidden2 =
      nn::Linear::create(ps_, "head.1", dims_.classifier_hidden, dims_.classifier_hidden, rng);
  L->output = nn::Linear::create(ps_, "head.2", dims_.classifier_hidden, C, rng);
  layers_ = std::move(L);
}

namespace {

Tensor lab_input(const LabColor& lab) {
  return Tensor::row({lab.L * kLabScale, lab.a * kLabScale, lab.b * kLabScale});
}

}  // namespace

// Forward helpers take an optional trace so the public embedders can share them.
namespace detail {

struct Embedder {
  const Classifier::Layers& L;
  const nn::ParamStore& ps;
  const ModelDims& dims;
  const Vocab& vocab;
  const AblationConfig& config;

  Tensor color(const std::vector<ColorShare>& colors, ColorTrace* tr) const {
    Tensor out = Tensor::matrix(1, dims.color_embed);
    for (const auto& c : colors) {
      nn::Mlp::Cache cache;
      Tensor e = L.color->forward(ps, lab_input(c.lab), tr ? &cache : nullptr);
      for (int i = 0; i < dims.color_embed; ++i) out.data[i] += c.fraction * e.data[i];
      if (tr) {
        tr->caches.push_back(std::move(cache));
        tr->weights.push_back(c.fraction);
      }
    }
    return out;
  }

  Tensor materials(const std::vector<MaterialPart>& parts, ObjectTrace* tr) const {
    Tensor out = Tensor::matrix(1, dims.material_embed);
    double total = 0.0;
    for (const auto& p : parts) total += p.area_fraction;
    if (tr) tr->fraction_sum = total;
    if (parts.empty() || total <= 0.0) return out;
    const int M = std::max(static_cast<int>(vocab.materials.size()), 1);
    for (const auto& p : parts) {
      PartTrace pt;
      pt.material = vocab.material_index(p.material);
      pt.weight = p.area_fraction / total;
      Tensor concat = Tensor::matrix(1, dims.material_embed);
      copy_into(concat, 0, L.material_label->forward(ps, one_hot(pt.material, M)));
      if (config.use_colors) copy_into(concat, dims.material_label_embed,
                                       color(p.colors, tr ? &pt.colors : nullptr));
      Tensor e = L.material->forward(ps, concat, tr ? &pt.mlp : nullptr);
      for (int i = 0; i < dims.material_embed; ++i) out.data[i] += pt.weight * e.data[i];
      if (tr) tr->parts.push_back(std::move(pt));
    }
    return out;
  }

  Tensor object(const ObjectNode& node, bool mask_label, ObjectTrace* tr) const {
    Tensor concat = Tensor::matrix(1, dims.object_embed);
    ObjectTrace local;
    ObjectTrace& t = tr ? *tr : local;
    if (L.label && !mask_label && node.label) {
      t.label = vocab.class_index(*node.label);
      if (t.label >= 0)
        copy_into(concat, 0,
                  L.label->forward(ps, one_hot(t.label, static_cast<int>(vocab.classes.size()))));
    }
    if (L.geometry) {
      Tensor g = Tensor::matrix(1, 15);
      const auto& geo = node.geometry;
      auto rm = geo.orientation_row_major();
      for (int i = 0; i < 3; ++i) g.data[i] = geo.size[i];
      for (int i = 0; i < 9; ++i) g.data[3 + i] = rm[i];
      for (int i = 0; i < 3; ++i) g.data[12 + i] = geo.centroid[i];
      t.geometry = true;
      copy_into(concat, dims.base_embed,
                L.geometry->forward(ps, g, tr ? &t.geometry_cache : nullptr));
    }
    if (L.material)
      copy_into(concat, dims.base_embed + dims.geom_embed, materials(node.materials, tr));
    return L.object.forward(ps, concat, tr ? &t.object : nullptr);
  }

  Tensor global(const std::map<std::string, int>& histogram, nn::Mlp::Cache* cache) const {
    Tensor h = Tensor::matrix(1, static_cast<int>(vocab.classes.size()));
    for (const auto& [label, count] : histogram) {
      const int idx = vocab.class_index(label);
      if (idx >= 0) h.data[idx] += count;
    }
    return L.global->forward(ps, h, cache);
  }

  void backward_color(const ColorTrace& tr, const Tensor& dout, nn::GradBuffer& g) const {
    for (std::size_t i = 0; i < tr.caches.size(); ++i) {
      Tensor d = dout;
      for (auto& v : d.data) v *= tr.weights[i];
      L.color->backward(ps, tr.caches[i], d, g);
    }
  }

  void backward_object(const ObjectTrace& tr, const Tensor& dout, nn::GradBuffer& g) const {
    Tensor dconcat = L.object.backward(ps, tr.object, dout, g);
    if (tr.label >= 0) {
      L.label->backward(ps, one_hot(tr.label, static_cast<int>(vocab.classes.size())),
                        slice(dconcat, 0, dims.base_embed), g);
    }
    if (tr.geometry)
      L.geometry->backward(ps, tr.geometry_cache, slice(dconcat, dims.base_embed, dims.geom_embed),
                           g);
    if (L.material && !tr.parts.empty()) {
      const Tensor dmat =
          slice(dconcat, dims.base_embed + dims.geom_embed, dims.material_embed);
      const int M = std::max(static_cast<int>(vocab.materials.size()), 1);
      for (const auto& pt : tr.parts) {
        Tensor d = dmat;
        for (auto& v : d.data) v *= pt.weight;
        Tensor dpart = L.material->backward(ps, pt.mlp, d, g);
        L.material_label->backward(ps, one_hot(pt.material, M),
                                   slice(dpart, 0, dims.material_label_embed), g);
        if (config.use_colors)
          backward_color(pt.colors, slice(dpart, dims.material_label_embed, dims.color_embed), g);
      }
    }
  }
};

}  // namespace detail

Tensor Classifier::embed_color(const std::vector<ColorShare>& colors) const {
  if (!layers_->color) return Tensor::matrix(1, dims_.color_embed);
  return detail::Embedder{*layers_, ps_, dims_, vocab_, config_}.color(colors, nullptr);
}

Tensor Classifier::embed_material(const std::vector<MaterialPart>& parts) const {
  if (!layers_->material) return Tensor::matrix(1, dims_.material_embed);
  return detail::Embedder{*layers_, ps_, dims_, vocab_, config_}.materials(parts, nullptr);
}

Tensor Classifier::embed_object(const ObjectNode& node, bool mask_label) const {
  return detail::Embedder{*layers_, ps_, dims_, vocab_, config_}.object(node, mask_label, nullptr);
}

Tensor Classifier::global_context(const std::map<std::string, int>& histogram) const {
  if (!layers_->global) return Tensor::matrix(1, dims_.global_embed);
  return detail::Embedder{*layers_, ps_, dims_, vocab_, config_}.global(histogram, nullptr);
}

Tensor Classifier::forward(const Gscg& graph, int target, bool training,
                           std::uint64_t dropout_seed, Trace* tr) const {
  const auto& L = *layers_;
  const detail::Embedder E{L, ps_, dims_, vocab_, config_};
  const ObjectNode& node = graph.node(target);

  Tensor self = E.object(node, true, tr ? &tr->target : nullptr);

  Tensor local;
  if (config_.use_neighbors) {
    local = Tensor::matrix(1, dims_.neighbor_proj);
    auto nbs = neighbors(graph, target);
    if (!nbs.empty()) {
      const int width = dims_.object_embed + dims_.edge_type_embed + 1;
      Tensor kv_in = Tensor::matrix(static_cast<int>(nbs.size()), width);
      const Tensor& edge_table = ps_.value(*L.edge_type);
      for (std::size_t i = 0; i < nbs.size(); ++i) {
        ObjectTrace* ot = nullptr;
        if (tr) ot = &tr->neighbors.emplace_back();
        Tensor e = E.object(*nbs[i].node, false, ot);
        double* row = kv_in.row_ptr(static_cast<int>(i));
        std::copy(e.data.begin(), e.data.end(), row);
        const int kind = static_cast<int>(nbs[i].edge.kind);
        std::copy(edge_table.row_ptr(kind), edge_table.row_ptr(kind) + dims_.edge_type_embed,
                  row + dims_.object_embed);
        row[width - 1] = nbs[i].edge.weight;
        if (tr) tr->kinds.push_back(kind);
      }
      Tensor kv = L.neighbor_proj->forward(ps_, kv_in);
      local = L.attention->forward(ps_, self, kv, tr ? &tr->attention : nullptr);
      if (tr) {
        tr->kv_in = std::move(kv_in);
        tr->kv = std::move(kv);
      }
    }
  }

  Tensor global = Tensor::matrix(1, dims_.global_embed);
  if (L.global) {
    global = E.global(label_histogram(graph, target), tr ? &tr->global : nullptr);
    if (tr) tr->has_global = true;
  }

  Tensor head_in = Tensor::matrix(1, L.hidden1.in);
  copy_into(head_in, 0, self);
  int offset = dims_.object_embed;
  if (config_.use_neighbors) {
    copy_into(head_in, offset, local);
    offset += dims_.neighbor_proj;
  }
  copy_into(head_in, offset, global);

  std::mt19937_64 rng(dropout_seed);
  Tensor pre1 = L.hidden1.forward(ps_, head_in);
  auto d1 = nn::dropout(nn::relu(pre1), dims_.dropout, training, rng);
  Tensor pre2 = L.hidden2.forward(ps_, d1.y);
  auto d2 = nn::dropout(nn::relu(pre2), dims_.dropout, training, rng);
  Tensor logits = L.output.forward(ps_, d2.y);
  if (tr) {
    tr->head_in = std::move(head_in);
    tr->pre1 = std::move(pre1);
    tr->mask1 = std::move(d1.mask);
    tr->act1 = std::move(d1.y);
    tr->pre2 = std::move(pre2);
    tr->mask2 = std::move(d2.mask);
    tr->act2 = std::move(d2.y);
  }
  return logits;
}

void Classifier::backward(const Trace& tr, const Tensor& dlogits, nn::GradBuffer& g) const {
  const auto& L = *layers_;
  const detail::Embedder E{L, ps_, dims_, vocab_, config_};

  Tensor d = L.output.backward(ps_, tr.act2, dlogits, g);
  d = nn::relu_backward(tr.pre2, nn::dropout_backward(tr.mask2, d));
  d = L.hidden2.backward(ps_, tr.act1, d, g);
  d = nn::relu_backward(tr.pre1, nn::dropout_backward(tr.mask1, d));
  Tensor dhead = L.hidden1.backward(ps_, tr.head_in, d, g);

  Tensor dself = slice(dhead, 0, dims_.object_embed);
  int offset = dims_.object_embed;
  if (config_.use_neighbors) {
    if (!tr.neighbors.empty()) {
      auto din = L.attention->backward(ps_, tr.attention, slice(dhead, offset, dims_.neighbor_proj),
                                       g);
      dself += din.dquery;
      Tensor dkv_in = L.neighbor_proj->backward(ps_, tr.kv_in, din.dkv, g);
      Tensor& dedge = g[*L.edge_type];
      for (std::size_t i = 0; i < tr.neighbors.size(); ++i) {
        const double* row = dkv_in.row_ptr(static_cast<int>(i));
        Tensor de = Tensor::matrix(1, dims_.object_embed);
        std::copy(row, row + dims_.object_embed, de.data.begin());
        double* er = dedge.row_ptr(tr.kinds[i]);
        for (int c = 0; c < dims_.edge_type_embed; ++c) er[c] += row[dims_.object_embed + c];
        E.backward_object(tr.neighbors[i], de, g);
      }
    }
    offset += dims_.neighbor_proj;
  }
  if (tr.has_global) L.global->backward(ps_, tr.global, slice(dhead, offset, dims_.global_embed), g);
  E.backward_object(tr.target, dself, g);
}

Tensor Classifier::logits(const Gscg& graph, int target) const {
  return forward(graph, target, false, 0, nullptr);
}

std::vector<double> Classifier::probabilities(const Gscg& graph, int target) const {
  return nn::softmax(logits(graph, target)).data;
}

int Classifier::predict(const Gscg& graph, int target) const {
  Tensor z = logits(graph, target);
  return static_cast<int>(std::max_element(z.data.begin(), z.data.end()) - z.data.begin());
}

double Classifier::accumulate_gradient(const Gscg& graph, int target, int cls, double scale,
                                       std::uint64_t dropout_seed, bool training,
                                       nn::GradBuffer& grads, Tensor* logits_out) const {
  Trace tr;
  Tensor z = forward(graph, target, training, dropout_seed, &tr);
  auto loss = nn::cross_entropy(z, cls);
  for (auto& v : loss.dlogits.data) v *= scale;
  backward(tr, loss.dlogits, grads);
  if (logits_out) *logits_out = std::move(z);
  return loss.loss;
}

nlohmann::json Classifier::checkpoint() const {
  return {{"format_version", kCheckpointVersion},
          {"config", config_.to_json()},
          {"dims", dims_.to_json()},
          {"vocab", vocab_.to_json()},
          {"params", ps_.to_json()}};
}

Classifier Classifier::from_checkpoint(const nlohmann::json& doc) {
  if (doc.value("format_version", 0) != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint format_version");
  Classifier c(Vocab::from_json(doc.at("vocab")), AblationConfig::from_json(doc.at("config")),
               ModelDims::from_json(doc.at("dims")), 0);
  c.ps_.load_json(doc.at("params"));
  return c;
}

void Classifier::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << checkpoint().dump() << "\n";
}

Classifier Classifier::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open checkpoint");
  try {
    return from_checkpoint(nlohmann::json::parse(in));
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

// --- training ------------------------------------------------------------------------

namespace {

std::vector<int> class_indices(const Vocab& vocab, const std::vector<Sample>& samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const int c = vocab.class_index(s.label);
    if (c < 0) throw std::invalid_argument("label '" + s.label + "' missing from vocabulary");
    out.push_back(c);
  }
  return out;
}

}  // namespace

TrainResult train(const Dataset& data, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const Vocab& vocab,
                  const AblationConfig& config, const TrainConfig& cfg, const ModelDims& dims) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  if (cfg.lr <= 0 || cfg.batch <= 0 || cfg.epochs <= 0 || cfg.patience <= 0)
    throw std::invalid_argument("train: hyperparameters must be positive");
  Classifier model(vocab, config, dims, mix(cfg.seed, 1));
  const std::vector<Sample>& val = val_set.empty() ? train_set : val_set;
  const auto train_cls = class_indices(vocab, train_set);
  const auto val_cls = class_indices(vocab, val);

  nn::AdamWConfig opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;

  const std::size_t n = train_set.size();
  const std::size_t batch = std::min<std::size_t>(cfg.batch, n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 shuffle_rng(mix(cfg.seed, 2));

  TrainResult result{model, {}, 0, false};
  double best_f1 = -1.0;
  int since_best = 0;
  auto& ps = model.params();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(unit(shuffle_rng) * static_cast<double>(i + 1));
      std::swap(order[i], order[std::min(j, i)]);
    }
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      const double scale = 1.0 / static_cast<double>(end - start);
      const std::size_t chunks = (end - start + kGradientChunk - 1) / kGradientChunk;
      std::vector<nn::GradBuffer> buffers(chunks);
      std::vector<double> chunk_loss(chunks, 0.0);
      std::vector<std::size_t> chunk_correct(chunks, 0);
      parallel_for(chunks, cfg.workers, [&](std::size_t c) {
        buffers[c] = ps.make_grad_buffer();
        const std::size_t lo = start + c * kGradientChunk;
        const std::size_t hi = std::min(end, lo + kGradientChunk);
        for (std::size_t k = lo; k < hi; ++k) {
          const auto& s = train_set[order[k]];
          Tensor z;
          chunk_loss[c] += model.accumulate_gradient(
              data.graphs.at(s.graph), s.target, train_cls[order[k]], scale,
              mix(mix(cfg.seed, static_cast<std::uint64_t>(epoch)), k), true, buffers[c], &z);
          const int pred =
              static_cast<int>(std::max_element(z.data.begin(), z.data.end()) - z.data.begin());
          chunk_correct[c] += pred == train_cls[order[k]];
        }
      });
      ps.zero_grad();
      for (std::size_t c = 0; c < chunks; ++c) {
        ps.accumulate(buffers[c]);
        loss_sum += chunk_loss[c];
        correct += chunk_correct[c];
      }
      ps.adamw_step(opt);
    }

    auto pred = predict_all(model, data, val, cfg.workers);
    Metrics m = score_predictions(val_cls, pred);
    result.log.push_back({epoch, loss_sum / static_cast<double>(n),
                          static_cast<double>(correct) / static_cast<double>(n), m.accuracy,
                          m.macro_f1});
    if (m.macro_f1 > best_f1) {
      best_f1 = m.macro_f1;
      result.best_epoch = epoch;
      result.model = model;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.stopped_early = epoch < cfg.epochs;
      break;
    }
  }
  return result;
}

// --- evaluation ----------------------------------------------------------------------

Metrics score_predictions(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.size() != predicted.size())
    throw std::invalid_argument("score_predictions: length mismatch");
  Metrics m;
  m.n = truth.size();
  if (truth.empty()) return m;
  std::map<int, std::array<std::size_t, 3>> counts;  // tp, fp, fn
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == predicted[i]) {
      ++correct;
      ++counts[truth[i]][0];
    } else {
      ++counts[predicted[i]][1];
      ++counts[truth[i]][2];
    }
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  std::set<int> present(truth.begin(), truth.end());
  double f1_sum = 0.0;
  for (int c : present) {
    const auto& [tp, fp, fn] = counts[c];
    const double denom = static_cast<double>(2 * tp + fp + fn);
    f1_sum += denom > 0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
  }
  m.macro_f1 = f1_sum / static_cast<double>(present.size());
  return m;
}

double bootstrap_halfwidth(const std::vector<bool>& correct, int resamples, std::uint64_t seed) {
  const std::size_t n = correct.size();
  if (n == 0 || resamples < 2) return 0.0;
  std::mt19937_64 rng(seed);
  std::vector<double> acc(static_cast<std::size_t>(resamples));
  for (auto& a : acc) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = std::min(n - 1, static_cast<std::size_t>(unit(rng) * static_cast<double>(n)));
      hits += correct[j];
    }
    a = static_cast<double>(hits) / static_cast<double>(n);
  }
  double mean = 0.0;
  for (double a : acc) mean += a;
  mean /= static_cast<double>(acc.size());
  double var = 0.0;
  for (double a : acc) var += (a - mean) * (a - mean);
  return std::sqrt(var / static_cast<double>(acc.size() - 1));
}

std::string format_accuracy(double accuracy, double halfwidth) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", accuracy * 100.0, halfwidth * 100.0);
  return buf;
}

nlohmann::json EvalReport::to_json() const {
  return {{"config", config},
          {"top1_accuracy", accuracy},
          {"macro_f1", macro_f1},
          {"ci_halfwidth", ci_halfwidth},
          {"n", n},
          {"n_bootstrap", n_bootstrap},
          {"parameter_count", parameter_count},
          {"formatted", formatted()}};
}

std::vector<int> predict_all(const Classifier& model, const Dataset& data,
                             const std::vector<Sample>& samples, int workers) {
  std::vector<int> out(samples.size());
  parallel_for(samples.size(), workers, [&](std::size_t i) {
    out[i] = model.predict(data.graphs.at(samples[i].graph), samples[i].target);
  });
  return out;
}

EvalReport evaluate(const Classifier& model, const Dataset& data,
                    const std::vector<Sample>& samples, int workers,
                    std::uint64_t bootstrap_seed) {
  if (samples.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const auto truth = class_indices(model.vocab(), samples);
  const auto pred = predict_all(model, data, samples, workers);
  Metrics m = score_predictions(truth, pred);
  std::vector<bool> correct(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) correct[i] = truth[i] == pred[i];
  EvalReport r;
  r.config = model.config().name;
  r.accuracy = m.accuracy;
  r.macro_f1 = m.macro_f1;
  r.n = m.n;
  r.ci_halfwidth = bootstrap_halfwidth(correct, kBootstrapSamples, bootstrap_seed);
  r.parameter_count = model.params().scalar_count();
  return r;
}

std::string format_report_table(const std::vector<EvalReport>& reports) {
  std::size_t width = 6;
  for (const auto& r : reports) width = std::max(width, r.config.size());
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s  %-15s  %8s  %6s  %9s\n", static_cast<int>(width),
                "config", "top-1 (%)", "macro-F1", "n", "params");
  out << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-*s  %-15s  %8.4f  %6zu  %9zu\n", static_cast<int>(width),
                  r.config.c_str(), r.formatted().c_str(), r.macro_f1, r.n, r.parameter_count);
    out << line;
  }
  return out.str();
}

}  // namespace gscg
