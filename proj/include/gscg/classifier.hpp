#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gscg/dataset.hpp"
#include "gscg/graph.hpp"
#include "gscg/nn.hpp"
#include "json.hpp"

namespace gscg {

struct AblationConfig {
  std::string name = "full_model";
  bool use_geometry = true;
  bool use_materials = true;
  bool use_colors = true;
  bool use_neighbors = true;
  bool use_extended_context = true;

  nlohmann::json to_json() const;
  static AblationConfig from_json(const nlohmann::json& doc);
  friend bool operator==(const AblationConfig&, const AblationConfig&) = default;
};

/// The twelve named configurations, in table order.
const std::vector<AblationConfig>& ablation_configs();
/// Throws std::invalid_argument listing the valid names.
const AblationConfig& ablation_config(std::string_view name);

struct ModelDims {
  int base_embed = 32;
  int geom_embed = 32;
  int color_embed = 32;
  int color_hidden = 64;
  int material_label_embed = 32;
  int material_embed = 64;
  int edge_type_embed = 16;
  int global_embed = 64;
  int attention_heads = 8;
  int classifier_hidden = 256;
  double dropout = 0.3;
  int object_embed = 128;
  int neighbor_proj = 128;

  nlohmann::json to_json() const;
  static ModelDims from_json(const nlohmann::json& doc);
};

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  int batch = 512;
  int epochs = 20;
  int patience = 10;
  std::uint64_t seed = 0;
  int workers = 1;

  nlohmann::json to_json() const;
};

/// Graph object classifier. With use_neighbors the target embedding, the
/// attention-aggregated neighbour context and the global context feed the head;
/// without it the neighbourless head sees only the target and global context.
/// Disabled branches contribute zeros at their nominal width.
class Classifier {
 public:
  Classifier(Vocab vocab, AblationConfig config, ModelDims dims = {}, std::uint64_t seed = 0);

  const Vocab& vocab() const { return vocab_; }
  const AblationConfig& config() const { return config_; }
  const ModelDims& dims() const { return dims_; }
  nn::ParamStore& params() { return ps_; }
  const nn::ParamStore& params() const { return ps_; }
  int num_classes() const { return static_cast<int>(vocab_.classes.size()); }

  /// Eval-mode logits [1, C]. The target's own label is never read.
  nn::Tensor logits(const Gscg& graph, int target) const;
  /// Softmax probabilities in eval mode.
  std::vector<double> probabilities(const Gscg& graph, int target) const;
  int predict(const Gscg& graph, int target) const;

  /// Training-mode forward and backward for one sample; adds dLoss/dParams into
  /// `grads` scaled by `scale` and returns the unscaled loss. `logits_out`
  /// receives the training-mode logits.
  double accumulate_gradient(const Gscg& graph, int target, int cls, double scale,
                             std::uint64_t dropout_seed, bool training, nn::GradBuffer& grads,
                             nn::Tensor* logits_out = nullptr) const;

  nlohmann::json checkpoint() const;
  static Classifier from_checkpoint(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static Classifier load(const std::filesystem::path& path);

  // Building blocks, exposed for tests.
  nn::Tensor embed_color(const std::vector<ColorShare>& colors) const;
  nn::Tensor embed_material(const std::vector<MaterialPart>& parts) const;
  nn::Tensor embed_object(const ObjectNode& node, bool mask_label) const;
  nn::Tensor global_context(const std::map<std::string, int>& histogram) const;

  struct Trace;
  struct Layers;

 private:
  nn::Tensor forward(const Gscg& graph, int target, bool training, std::uint64_t dropout_seed,
                     Trace* trace) const;
  void backward(const Trace& trace, const nn::Tensor& dlogits, nn::GradBuffer& grads) const;
  void build(std::uint64_t seed);

  Vocab vocab_;
  AblationConfig config_;
  ModelDims dims_;
  nn::ParamStore ps_;
  std::shared_ptr<const Layers> layers_;
};

// --- training and evaluation -----------------------------------------------------

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double val_macro_f1 = 0.0;
};

struct TrainResult {
  Classifier model;  // parameters of the best validation epoch
  std::vector<EpochLog> log;
  int best_epoch = 0;
  bool stopped_early = false;
};

/// AdamW over shuffled mini-batches with early stopping on validation macro-F1.
/// Results depend only on the seed, never on the worker count. When `val` is
/// empty the training set stands in for validation.
TrainResult train(const Dataset& data, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const Vocab& vocab,
                  const AblationConfig& config, const TrainConfig& cfg,
                  const ModelDims& dims = {});

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::size_t n = 0;
};

/// Macro-F1 averages over classes occurring in the ground truth.
Metrics score_predictions(const std::vector<int>& truth, const std::vector<int>& predicted);

inline constexpr int kBootstrapSamples = 1000;

/// Standard deviation of the accuracy over resamples (with replacement, size n)
/// of per-instance correctness.
double bootstrap_halfwidth(const std::vector<bool>& correct, int resamples = kBootstrapSamples,
                           std::uint64_t seed = 0);

/// "73.43 ± 0.32": accuracy and halfwidth in percentage points.
std::string format_accuracy(double accuracy, double halfwidth);

struct EvalReport {
  std::string config;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double ci_halfwidth = 0.0;
  std::size_t n = 0;
  int n_bootstrap = kBootstrapSamples;
  std::size_t parameter_count = 0;

  nlohmann::json to_json() const;
  std::string formatted() const { return format_accuracy(accuracy, ci_halfwidth); }
};

std::vector<int> predict_all(const Classifier& model, const Dataset& data,
                             const std::vector<Sample>& samples, int workers = 1);
EvalReport evaluate(const Classifier& model, const Dataset& data,
                    const std::vector<Sample>& samples, int workers = 1,
                    std::uint64_t bootstrap_seed = 0);

/// Plain-text table with one row per report.
std::string format_report_table(const std::vector<EvalReport>& reports);

}  // namespace gscg
