#include "gscg/describe.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <stdexcept>

#include "gscg/random.hpp"

namespace gscg {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string percent(double fraction) {
  return std::to_string(static_cast<long>(std::lround(fraction * 100))) + "%";
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += i + 1 == items.size() ? " and " : ", ";
    out += items[i];
  }
  return out;
}

std::string with_article(const std::string& noun) {
  const char c = noun.empty() ? 'x' : static_cast<char>(std::tolower(noun[0]));
  return (std::string("aeiou").find(c) != std::string::npos ? "an " : "a ") + noun;
}

const char* relation_phrase(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::kTouch: return "touches";
    case EdgeKind::kNear: return "is near";
    case EdgeKind::kMixed: return "touches and is near";
  }
  return "";
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

/// Case-insensitive replacement of every occurrence of `needle`.
std::string replace_all(const std::string& text, const std::string& needle,
                        const std::string& with) {
  if (needle.empty()) return text;
  const std::string hay = lower(text), key = lower(needle);
  std::string out;
  std::size_t pos = 0;
  for (std::size_t hit; (hit = hay.find(key, pos)) != std::string::npos; pos = hit + key.size())
    out += text.substr(pos, hit - pos) + with;
  return out + text.substr(pos);
}

constexpr const char* kSameKind = "another object of its kind";
constexpr const char* kHidden = "***";

std::string render(const Gscg& graph, int target_id, const AblationConfig& config,
                   const std::string* redact) {
  const ObjectNode& node = graph.node(target_id);
  auto name_of = [&](const std::optional<std::string>& label) -> std::string {
    if (!label) return "unlabeled object";
    if (redact && *label == *redact) return kSameKind;
    return *label;
  };
  std::vector<std::string> sentences;

  if (config.use_geometry) {
    const auto& g = node.geometry;
    sentences.push_back("The object measures " + fixed(g.size[0], 2) + " x " + fixed(g.size[1], 2) +
                        " x " + fixed(g.size[2], 2) + " m and lies " +
                        fixed(std::hypot(g.centroid[0], g.centroid[1], g.centroid[2]), 2) +
                        " m from the camera.");
  }
  if (config.use_materials && !node.materials.empty()) {
    std::vector<std::string> parts;
    for (const auto& m : node.materials) parts.push_back(m.material + " (" + percent(m.area_fraction) + ")");
    sentences.push_back("It is made of " + join(parts) + ".");
  }
  if (config.use_colors)
    for (const auto& m : node.materials) {
      if (m.colors.empty()) continue;
      std::vector<std::string> colors;
      for (const auto& c : m.colors) colors.push_back(c.name + " (" + percent(c.fraction) + ")");
      sentences.push_back("Its " + m.material + " is " + join(colors) + ".");
    }
  if (config.use_neighbors) {
    std::vector<std::string> rel;
    for (const auto& nb : neighbors(graph, target_id)) {
      const std::string who = name_of(nb.node->label);
      rel.push_back(std::string(relation_phrase(nb.edge.kind)) + " " +
                    (who == kSameKind ? who : with_article(who)) + " (weight " +
                    fixed(nb.edge.weight, 3) + ")");
    }
    sentences.push_back(rel.empty() ? "It has no immediate neighbours." : "It " + join(rel) + ".");
  }
  if (config.use_extended_context) {
    std::vector<std::string> counts;
    for (const auto& [label, n] : label_histogram(graph, target_id))
      counts.push_back(name_of(label) + " (" + std::to_string(n) + ")");
    sentences.push_back(counts.empty() ? "The scene contains nothing else."
                                       : "The scene also contains " + join(counts) + ".");
  }
  std::string text;
  for (const auto& s : sentences) text += (text.empty() ? "" : " ") + s;
  return text;
}

}  // namespace

Description describe_object(const Gscg& graph, int target_id, const AblationConfig& config) {
  return {render(graph, target_id, config, nullptr), config, target_id};
}

nlohmann::json RiddleRound::to_json() const {
  return {{"riddle_text", riddle_text},
          {"choices", choices},
          {"correct_index", correct_index},
          {"ai_top1", ai_top1},
          {"ai_top5", ai_top5}};
}

RiddleRound build_round(const Gscg& graph, int target_id, const Classifier& model,
                        std::uint64_t seed, const AblationConfig& text_config) {
  const auto& node = graph.node(target_id);
  if (!node.label) throw std::invalid_argument("build_round: target has no label to ask for");
  const std::string& truth = *node.label;
  const auto& classes = model.vocab().classes;
  if (classes.size() < 2) throw std::invalid_argument("build_round: need at least two classes");
  const int truth_index = model.vocab().class_index(truth);
  if (truth_index < 0)
    throw std::invalid_argument("build_round: label '" + truth + "' unknown to the model");

  const auto probs = model.probabilities(graph, target_id);
  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs[a] > probs[b]; });
  const std::size_t k = std::min<std::size_t>(5, order.size());
  std::vector<int> picks(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));

  RiddleRound round;
  round.ai_top1 = classes[picks[0]];
  for (int p : picks) round.ai_top5.push_back(classes[p]);
  if (std::find(picks.begin(), picks.end(), truth_index) == picks.end()) picks.back() = truth_index;

  std::mt19937_64 rng(seed);
  for (std::size_t i = picks.size() - 1; i > 0; --i)
    std::swap(picks[i], picks[uniform_index(rng, i + 1)]);
  for (std::size_t i = 0; i < picks.size(); ++i) {
    round.choices.push_back(classes[picks[i]]);
    if (picks[i] == truth_index) round.correct_index = static_cast<int>(i);
  }
  round.riddle_text = replace_all(render(graph, target_id, text_config, &truth), truth, kHidden);
  return round;
}

}  // namespace gscg
