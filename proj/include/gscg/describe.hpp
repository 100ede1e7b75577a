#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gscg/classifier.hpp"
#include "gscg/graph.hpp"
#include "json.hpp"

namespace gscg {

struct Description {
  std::string text;
  AblationConfig config;
  int target_id = 0;
};

/// Templated English in fixed section order: geometry, materials, colours,
/// neighbour relations, scene histogram. Sections disabled by `config` are
/// omitted. The target's own label is never read. Throws std::out_of_range for
/// an unknown target.
Description describe_object(const Gscg& graph, int target_id, const AblationConfig& config);

struct RiddleRound {
  std::string riddle_text;
  std::vector<std::string> choices;
  int correct_index = 0;
  std::string ai_top1;
  std::vector<std::string> ai_top5;

  const std::string& truth() const { return choices.at(correct_index); }
  nlohmann::json to_json() const;
};

/// Riddle from the description with every occurrence of the answer replaced.
/// Choices are the model's top five (all classes when fewer); a missing answer
/// displaces the lowest-ranked choice; the order is shuffled with `seed`.
/// Throws std::invalid_argument when the target is unlabeled, its label is
/// outside the model vocabulary, or the model has fewer than two classes.
RiddleRound build_round(const Gscg& graph, int target_id, const Classifier& model,
                        std::uint64_t seed,
                        const AblationConfig& text_config = ablation_config("full_model"));

}  // namespace gscg
